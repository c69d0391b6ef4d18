pub mod ckks;
pub mod codec;
pub mod cofactor;
pub mod confidential;
pub mod elgamal;
pub mod frit;
pub mod plant_sim;
pub mod scenarios;
pub mod wire;
