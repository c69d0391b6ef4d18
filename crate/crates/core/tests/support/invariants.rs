//! Property suites shared by the core test target and the acceptance run.
//! Every suite uses a deterministic runner and returns a readable failure.

use cfrit::ckks::{self, CkksParams, Poly};
use cfrit::cofactor::{self, minor_source};
use cfrit::confidential::{client_prepare, decode_terms_elgamal, server_tune_elgamal, PublicMaterial};
use cfrit::elgamal::{self, prime, ElGamalKeys, ElGamalPublicKey};
use cfrit::frit::{filter_signal, FritData, TransferFunction};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const CASES: u32 = 1000;

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn report<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

/// 160-bit safe-prime keys: large enough for six 2^-20 factors of magnitude 10.
pub fn toy_keys(seed: u64) -> ElGamalKeys {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = prime::generate_safe_prime(160, 1 << 20, &mut rng).expect("160-bit safe prime");
    elgamal::keys_from_safe_prime(p, None, &mut rng).expect("toy keys")
}

/// Encryption correctness and the multiplicative homomorphism.
pub fn elgamal_scheme(cases: u32) -> Result<(), String> {
    let keys = toy_keys(101);
    let pk = &keys.public;
    let gamma = 2f64.powi(-20);
    report(runner(cases).run(&(-1e3f64..1e3, -1e3f64..1e3, any::<u64>()), |(a, b, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ea = elgamal::ecd(a, gamma, pk).unwrap();
        let eb = elgamal::ecd(b, gamma, pk).unwrap();
        prop_assert!(pk.contains(&ea.m) && pk.contains(&eb.m));
        let ca = elgamal::enc(pk, &ea.m, &mut rng).unwrap();
        let cb = elgamal::enc(pk, &eb.m, &mut rng).unwrap();
        prop_assert_eq!(&elgamal::dec(pk, &keys.secret, &ca), &ea.m);
        let prod = elgamal::dec(pk, &keys.secret, &elgamal::hmul(pk, &ca, &cb));
        prop_assert_eq!(prod, (&ea.m * &eb.m) % &pk.p);
        let back = elgamal::dcd(&ea.m, gamma, pk);
        prop_assert!((back - a).abs() <= gamma * ea.delta() * 1.000001 + 1e-12);
        Ok(())
    }))
}

/// `γ^k · centered(Dec(∏ Enc(Ecd(x_i))))` equals `∏ (x_i + γ·δ_i)` exactly,
/// and the decoded product is within `rel_tol` of `∏ x_i`. Factor magnitudes
/// stay in `[0.5, 10]` so that a relative bound is meaningful.
pub fn quantization_identity(keys: &ElGamalKeys, gamma: f64, cases: u32, rel_tol: f64) -> Result<(), String> {
    let pk = &keys.public;
    let factor = (0.5f64..10.0, any::<bool>()).prop_map(|(m, neg)| if neg { -m } else { m });
    let strat = (prop::collection::vec(factor, 1..=6), any::<u64>());
    report(runner(cases).run(&strat, |(xs, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut acc = pk.neutral();
        let mut int_product = BigInt::one();
        let mut rational = BigRational::one();
        let mut plain = 1.0;
        let g = BigRational::from_float(gamma).unwrap();
        for &x in &xs {
            let e = elgamal::ecd(x, gamma, pk).unwrap();
            acc = elgamal::hmul(pk, &acc, &elgamal::enc(pk, &e.m, &mut rng).unwrap());
            int_product *= elgamal::centered(&e.m, pk);
            let xr = BigRational::from_float(x).unwrap();
            let dr = BigRational::from_float(e.offset).unwrap();
            rational *= xr + &g * dr;
            plain *= x;
        }
        let m = elgamal::dec(pk, &keys.secret, &acc);
        let centered = elgamal::centered(&m, pk);
        prop_assert_eq!(&centered, &int_product);
        let k = xs.len() as i32;
        let lhs = BigRational::from_integer(centered) * g.pow(k);
        prop_assert_eq!(lhs, rational);
        let decoded = elgamal::dcd(&m, gamma.powi(k), pk);
        prop_assert!((decoded - plain).abs() <= rel_tol * plain.abs(), "{} vs {}", decoded, plain);
        Ok(())
    }))
}

/// Approximate homomorphism of addition and multiplication in CKKS.
pub fn ckks_homomorphism(cases: u32) -> Result<(), String> {
    let params = CkksParams { d: 64, max_level: 3, ..CkksParams::small() };
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let keys = ckks::gen(&params, &mut rng).unwrap();
    report(runner(cases).run(&(-10f64..10.0, -10f64..10.0, any::<u64>()), |(a, b, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ca = ckks::enc(&keys.public, &ckks::ecd(a, &params).unwrap(), &mut rng);
        let cb = ckks::enc(&keys.public, &ckks::ecd(b, &params).unwrap(), &mut rng);
        let sum = ckks::decrypt_real(&keys.secret, &ckks::add(&ca, &cb).unwrap(), &params);
        prop_assert!((sum - (a + b)).abs() <= 1e-8, "{} vs {}", sum, a + b);
        let prod = ckks::decrypt_real(&keys.secret, &ckks::mult(&ca, &cb, &keys.public).unwrap(), &params);
        prop_assert!((prod - a * b).abs() <= 1e-7, "{} vs {}", prod, a * b);
        Ok(())
    }))
}

/// NTT multiplication agrees with the schoolbook negacyclic product.
pub fn ring_arithmetic(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&(1u32..=6, 8u32..=200, any::<u64>()), |(log_d, bits, seed)| {
        let d = 1usize << log_d;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = Poly::uniform(d, bits, &mut rng);
        let b = Poly::uniform(d, bits, &mut rng);
        prop_assert_eq!(a.mul_ntt(&b, bits), a.mul_schoolbook(&b, bits));
        prop_assert_eq!(a.add(&b).sub(&b), a.clone());
        Ok(())
    }))
}

/// `filter(α s + β t) = α filter(s) + β filter(t)`.
pub fn filter_linearity(cases: u32) -> Result<(), String> {
    let strat = (
        prop::collection::vec(-0.45f64..0.45, 1..=3),
        prop::collection::vec(-2f64..2.0, 1..=3),
        prop::collection::vec((-5f64..5.0, -5f64..5.0), 1..=40),
        -3f64..3.0,
        -3f64..3.0,
    );
    report(runner(cases).run(&strat, |(poles, num, signal, alpha, beta)| {
        let mut den = vec![1.0];
        den.extend(poles.iter().map(|p| p / poles.len() as f64));
        let num: Vec<f64> = num.into_iter().take(den.len()).collect();
        let tf = TransferFunction::new(num, den).unwrap();
        let s: Vec<f64> = signal.iter().map(|p| p.0).collect();
        let t: Vec<f64> = signal.iter().map(|p| p.1).collect();
        let mix: Vec<f64> = s.iter().zip(&t).map(|(a, b)| alpha * a + beta * b).collect();
        let (fs, ft, fm) =
            (filter_signal(&tf, &s).unwrap(), filter_signal(&tf, &t).unwrap(), filter_signal(&tf, &mix).unwrap());
        for k in 0..s.len() {
            let expect = alpha * fs[k] + beta * ft[k];
            prop_assert!((fm[k] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
        Ok(())
    }))
}

/// The flat term index is a bijection onto `1..=M`.
pub fn index_bijectivity(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&(1usize..=6, 1usize..=30, any::<u64>()), |(n, samples, pick)| {
        let m = cofactor::term_count(n, samples);
        let j = (pick % m as u64) as usize + 1;
        let (k, i, l) = cofactor::term_position(j, n, samples);
        prop_assert!(k >= 1 && k <= cofactor::factorial(n - 1));
        prop_assert!(i >= 1 && i <= n * samples && l >= 1 && l <= n);
        prop_assert_eq!(cofactor::term_index(k, i, l, n, samples), j);
        Ok(())
    }))
}

fn carried(x: f64, gamma: f64, pk: &ElGamalPublicKey) -> f64 {
    elgamal::dcd(&elgamal::ecd(x, gamma, pk).unwrap().m, gamma, pk)
}

/// Plaintext term list built from the values the group actually carries.
pub fn carried_terms(data: &FritData, gamma: f64, pk: &ElGamalPublicKey) -> Vec<Vec<f64>> {
    let n = data.n;
    let c = |x: f64| carried(x, gamma, pk);
    let m1 = c(-1.0);
    let det = c(data.det_psi_inv);
    let psi = data.psi.map(c);
    let table = cofactor::signed_permutations(n).unwrap();
    let mut terms = Vec::new();
    for row in table.rows() {
        let phi = DMatrix::from_fn(n, n, |j, i| {
            let mut v: f64 =
                row.permutation.iter().enumerate().map(|(l, &s)| psi[(minor_source(i, l), minor_source(j, s))]).product();
            if row.sign < 0 {
                v *= m1;
            }
            if (i + j) % 2 == 1 {
                v *= m1;
            }
            v * det
        });
        for i in 0..data.gamma.len() {
            for l in 0..n {
                let a = m1 * c(data.gamma[i]) * c(data.w[(i, l)]);
                terms.push((0..n).map(|col| a * phi[(l, col)]).collect());
            }
        }
    }
    terms
}

/// Every decoded term times `γ^ξ` matches its plaintext counterpart.
pub fn ledger_correctness(cases: u32) -> Result<(), String> {
    let keys = toy_keys(103);
    let gamma = 2f64.powi(-10);
    let strat = (1usize..=3, 1usize..=2, any::<u64>()).prop_flat_map(|(n, samples, seed)| {
        let rows = n * samples;
        (
            Just((n, samples, seed)),
            prop::collection::vec(-3f64..3.0, rows),
            prop::collection::vec(-3f64..3.0, rows * n),
            0.5f64..2.0,
        )
    });
    report(runner(cases).run(&strat, |((n, samples, seed), gamma_v, w, det_inv)| {
        let w = DMatrix::from_row_slice(n * samples, n, &w);
        let Ok(mut data) = FritData::from_parts(gamma_v, w) else {
            return Ok(());
        };
        // The protocol treats |Ψ|⁻¹ as an opaque input; keep it in range.
        data.det_psi_inv = det_inv;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = client_prepare(&data, &PublicMaterial::Elgamal(keys.public.clone()), gamma, &mut rng).unwrap();
        let f = server_tune_elgamal(&d).unwrap();
        let decoded = decode_terms_elgamal(&f, &keys.public, &keys.secret, gamma).unwrap();
        let expect = carried_terms(&data, gamma, &keys.public);
        prop_assert_eq!(decoded.len(), expect.len());
        for (a, b) in decoded.iter().zip(&expect) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{} vs {}", x, y);
            }
        }
        Ok(())
    }))
}

/// Name and runner of every suite, for callers that report them one by one.
#[allow(dead_code)]
pub fn all() -> Vec<(&'static str, fn(u32) -> Result<(), String>)> {
    vec![
        ("elgamal scheme correctness", elgamal_scheme as fn(u32) -> Result<(), String>),
        ("ckks homomorphism", ckks_homomorphism),
        ("ring arithmetic oracle", ring_arithmetic),
        ("filter linearity", filter_linearity),
        ("index bijectivity", index_bijectivity),
        ("ledger correctness", ledger_correctness),
        ("quantization identity (toy keys)", |cases| quantization_identity(&toy_keys(104), 2f64.powi(-20), cases, 1e-4)),
    ]
}
