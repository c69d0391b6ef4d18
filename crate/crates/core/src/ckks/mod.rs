//! Real-coefficient leveled CKKS over `Z_q[X]/(X^d + 1)`.
//!
//! Only the constant coefficient carries data (no slot packing). Moduli are
//! powers of two, `q_l = 2^(q0_bits + l·scale_bits)`, so reduction between
//! levels is masking and rescaling is a rounded shift. Relinearization uses
//! the special modulus `P = q_L` with `evk` defined modulo `P·q_L`.

mod ntt;
pub mod poly;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_traits::{FromPrimitive, Signed};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use poly::Poly;

use ntt::{CrtBasis, NttPoly};
use poly::log2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("encoding overflow: |{value}|·2^{scale_bits} does not fit below 2^{limit_bits}")]
    Overflow { value: f64, scale_bits: u64, limit_bits: u32 },
    #[error("operands misaligned: levels {left_level}/{right_level}, scale powers {left_scale}/{right_scale}")]
    Alignment { left_level: u32, right_level: u32, left_scale: u32, right_scale: u32 },
    #[error("level budget exhausted: need {required} more level(s), {available} available")]
    Depth { required: u32, available: u32 },
    #[error("malformed ciphertext: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkksParams {
    /// Ring degree.
    pub d: usize,
    /// Top level `L̄`; fresh ciphertexts live modulo `q_L̄`.
    pub max_level: u32,
    /// `Δ = γ_c⁻¹ = 2^scale_bits`.
    pub scale_bits: u32,
    /// `q_0 = 2^q0_bits`.
    pub q0_bits: u32,
    pub sigma: f64,
}

impl CkksParams {
    /// Reduced-security profile used by the test suite.
    pub fn test() -> Self {
        CkksParams { d: 4096, max_level: 10, scale_bits: 40, q0_bits: 60, sigma: 3.2 }
    }

    /// 21 moduli `{60, 40, …, 40, 60}`: q_0 through q_20 plus `P = q_L`.
    pub fn secure128() -> Self {
        CkksParams { d: 32768, max_level: 20, scale_bits: 40, q0_bits: 60, sigma: 3.2 }
    }

    /// Small ring for transport and file-size sensitive checks; not secure.
    pub fn small() -> Self {
        CkksParams { d: 1024, max_level: 6, scale_bits: 40, q0_bits: 60, sigma: 3.2 }
    }

    pub fn gamma_c(&self) -> f64 {
        2f64.powi(-(self.scale_bits as i32))
    }

    /// `log2 q_level`.
    pub fn modulus_bits(&self, level: u32) -> u32 {
        self.q0_bits + self.scale_bits * level
    }

    /// `log2 P` for the special modulus `P = q_L̄`.
    pub fn special_bits(&self) -> u32 {
        self.modulus_bits(self.max_level)
    }

    pub fn validate(&self) -> Result<(), CkksError> {
        let fail = |m: &str| Err(CkksError::Params(m.to_string()));
        if !self.d.is_power_of_two() || self.d < 2 || self.d > ntt::MAX_DEGREE {
            return fail("ring degree must be a power of two in [2, 65536]");
        }
        if self.scale_bits == 0 || self.scale_bits >= 62 {
            return fail("scale must be 2^k with 0 < k < 62");
        }
        if self.q0_bits <= self.scale_bits + 1 {
            return fail("q0 must be well above the scale");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail("noise deviation must be finite and non-negative");
        }
        if 2 * self.special_bits() > 3000 {
            return fail("modulus chain too long");
        }
        Ok(())
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct CkksSecretKey {
    /// Ternary coefficients.
    pub s: Vec<i8>,
}

impl std::fmt::Debug for CkksSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CkksSecretKey(..)")
    }
}

impl CkksSecretKey {
    fn poly(&self) -> Poly {
        let values: Vec<i64> = self.s.iter().map(|&c| c as i64).collect();
        Poly::from_signed(self.s.len(), 2, &values)
    }
}

/// Per-level transforms of the evaluation key, built on first use.
#[derive(Default)]
struct EvkCache(Mutex<HashMap<u32, Arc<(Arc<CrtBasis>, NttPoly, NttPoly)>>>);

impl Clone for EvkCache {
    fn clone(&self) -> Self {
        EvkCache::default()
    }
}

/// Encryption key `(pk0, pk1)` modulo `q_L` and evaluation key
/// `(evk0, evk1)` modulo `P·q_L`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "PublicKeyWire", into = "PublicKeyWire")]
pub struct CkksPublicKey {
    pub params: CkksParams,
    pub pk0: Poly,
    pub pk1: Poly,
    pub evk0: Poly,
    pub evk1: Poly,
    cache: EvkCache,
}

impl std::fmt::Debug for CkksPublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CkksPublicKey").field("params", &self.params).finish_non_exhaustive()
    }
}

impl PartialEq for CkksPublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.pk0 == other.pk0
            && self.pk1 == other.pk1
            && self.evk0 == other.evk0
            && self.evk1 == other.evk1
    }
}

#[derive(Serialize, Deserialize)]
struct PublicKeyWire {
    params: CkksParams,
    pk0: Vec<String>,
    pk1: Vec<String>,
    evk0: Vec<String>,
    evk1: Vec<String>,
}

impl From<CkksPublicKey> for PublicKeyWire {
    fn from(k: CkksPublicKey) -> Self {
        PublicKeyWire {
            params: k.params,
            pk0: k.pk0.to_hex(),
            pk1: k.pk1.to_hex(),
            evk0: k.evk0.to_hex(),
            evk1: k.evk1.to_hex(),
        }
    }
}

impl TryFrom<PublicKeyWire> for CkksPublicKey {
    type Error = CkksError;

    fn try_from(w: PublicKeyWire) -> Result<Self, CkksError> {
        w.params.validate()?;
        let kl = w.params.special_bits();
        let parse = |bits: u32, v: &[String]| {
            let p = Poly::from_hex(bits, v).map_err(CkksError::Format)?;
            if p.degree() != w.params.d {
                return Err(CkksError::Format(format!("expected {} coefficients, got {}", w.params.d, p.degree())));
            }
            Ok(p)
        };
        Ok(CkksPublicKey {
            pk0: parse(kl, &w.pk0)?,
            pk1: parse(kl, &w.pk1)?,
            evk0: parse(2 * kl, &w.evk0)?,
            evk1: parse(2 * kl, &w.evk1)?,
            params: w.params,
            cache: EvkCache::default(),
        })
    }
}

impl CkksPublicKey {
    /// `⌊P⁻¹·d2·evk⌉ mod q_level`, approximately `(d2·s², 0)` under `s`.
    fn key_switch(&self, d2: &Poly, level: u32) -> (Poly, Poly) {
        let params = &self.params;
        let kp = params.special_bits();
        let kl = params.modulus_bits(level);
        let wide = kp + kl;
        let entry = {
            let mut cache = self.cache.0.lock().expect("evk cache");
            Arc::clone(cache.entry(level).or_insert_with(|| {
                let basis = ntt::basis_for(kl + wide + log2(params.d), params.d);
                let e0 = ntt::forward(&self.evk0.reduce(wide), &basis);
                let e1 = ntt::forward(&self.evk1.reduce(wide), &basis);
                Arc::new((basis, e0, e1))
            }))
        };
        let (basis, e0, e1) = &*entry;
        let f = ntt::forward(d2, basis);
        let r0 = ntt::inverse(&f.mul(e0, basis), basis, wide).round_shift(kp);
        let r1 = ntt::inverse(&f.mul(e1, basis), basis, wide).round_shift(kp);
        (r0, r1)
    }
}

#[derive(Clone, Debug)]
pub struct CkksKeys {
    pub public: CkksPublicKey,
    pub secret: CkksSecretKey,
}

/// `⌊x·Δ^scale_power⌉` destined for the constant coefficient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedInt {
    pub value: BigInt,
    pub scale_power: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CiphertextWire", into = "CiphertextWire")]
pub struct CkksCiphertext {
    pub level: u32,
    /// Number of `Δ` factors on the underlying plaintext.
    pub scale_power: u32,
    pub ct0: Poly,
    pub ct1: Poly,
}

#[derive(Serialize, Deserialize)]
struct CiphertextWire {
    level: u32,
    scale_power: u32,
    modulus_bits: u32,
    ct0: Vec<String>,
    ct1: Vec<String>,
}

impl From<CkksCiphertext> for CiphertextWire {
    fn from(c: CkksCiphertext) -> Self {
        CiphertextWire {
            level: c.level,
            scale_power: c.scale_power,
            modulus_bits: c.ct0.bits(),
            ct0: c.ct0.to_hex(),
            ct1: c.ct1.to_hex(),
        }
    }
}

impl TryFrom<CiphertextWire> for CkksCiphertext {
    type Error = CkksError;

    fn try_from(w: CiphertextWire) -> Result<Self, CkksError> {
        if w.ct0.len() != w.ct1.len() {
            return Err(CkksError::Format("ct0 and ct1 differ in degree".into()));
        }
        if w.modulus_bits == 0 || w.modulus_bits > 4096 {
            return Err(CkksError::Format(format!("modulus 2^{} out of range", w.modulus_bits)));
        }
        Ok(CkksCiphertext {
            level: w.level,
            scale_power: w.scale_power,
            ct0: Poly::from_hex(w.modulus_bits, &w.ct0).map_err(CkksError::Format)?,
            ct1: Poly::from_hex(w.modulus_bits, &w.ct1).map_err(CkksError::Format)?,
        })
    }
}

impl CkksCiphertext {
    pub fn degree(&self) -> usize {
        self.ct0.degree()
    }
}

fn gaussian<R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> Vec<i64> {
    if sigma == 0.0 {
        return vec![0; d];
    }
    let normal = Normal::new(0.0, sigma).expect("validated deviation");
    (0..d).map(|_| normal.sample(rng).round() as i64).collect()
}

fn binary<R: RngCore + ?Sized>(d: usize, rng: &mut R) -> Vec<i64> {
    let mut out = Vec::with_capacity(d);
    while out.len() < d {
        let word = rng.next_u64();
        out.extend((0..64).take(d - out.len()).map(|b| ((word >> b) & 1) as i64));
    }
    out
}

pub fn gen<R: Rng + ?Sized>(params: &CkksParams, rng: &mut R) -> Result<CkksKeys, CkksError> {
    params.validate()?;
    let d = params.d;
    let kl = params.special_bits();
    let s: Vec<i8> = (0..d).map(|_| rng.random_range(-1i8..=1)).collect();
    let secret = CkksSecretKey { s };
    let sp = secret.poly();

    let a = Poly::uniform(d, kl, rng);
    let e = Poly::from_signed(d, kl, &gaussian(d, params.sigma, rng));
    let pk0 = a.mul(&sp, kl).neg().add(&e);

    let wide = 2 * kl;
    let a2 = Poly::uniform(d, wide, rng);
    let e2 = Poly::from_signed(d, wide, &gaussian(d, params.sigma, rng));
    let s_sq = sp.mul(&sp, wide).shl(kl, wide);
    let evk0 = a2.mul(&sp, wide).neg().add(&e2).add(&s_sq);

    Ok(CkksKeys {
        public: CkksPublicKey { params: params.clone(), pk0, pk1: a, evk0, evk1: a2, cache: EvkCache::default() },
        secret,
    })
}

/// `⌊x·γ_c⁻¹⌉`, halves away from zero; must stay below `q_0/2`.
pub fn ecd(x: f64, params: &CkksParams) -> Result<EncodedInt, CkksError> {
    ecd_at(x, 1, params)
}

/// `⌊x·Δ^scale_power⌉`, which must fit below `q_{scale_power-1}/2` so the
/// value survives rescaling down to scale `Δ`.
pub fn ecd_at(x: f64, scale_power: u32, params: &CkksParams) -> Result<EncodedInt, CkksError> {
    let scale_bits = params.scale_bits as u64 * scale_power as u64;
    let limit_bits = params.modulus_bits(scale_power.max(1) - 1) - 1;
    let overflow = || CkksError::Overflow { value: x, scale_bits, limit_bits };
    if !x.is_finite() || scale_power == 0 {
        return Err(overflow());
    }
    let scaled = x * 2f64.powi(scale_bits as i32);
    let value = BigInt::from_f64(scaled.round()).ok_or_else(overflow)?;
    if value.abs() >= (BigInt::from(1u8) << limit_bits) {
        return Err(overflow());
    }
    Ok(EncodedInt { value, scale_power })
}

/// `value · γ_c^gamma_power`.
pub fn dcd(value: &BigInt, gamma_power: u32, params: &CkksParams) -> f64 {
    let exp = -(params.scale_bits as i64 * gamma_power as i64);
    crate::elgamal::scale_big(value, 2f64.powi(exp as i32))
}

/// The randomness of one encryption, exposed for deterministic tests.
pub struct EncryptionNoise {
    pub v: Vec<i64>,
    pub e1: Vec<i64>,
    pub e2: Vec<i64>,
}

impl EncryptionNoise {
    pub fn zero(d: usize) -> Self {
        EncryptionNoise { v: vec![0; d], e1: vec![0; d], e2: vec![0; d] }
    }
}

pub fn enc<R: Rng + ?Sized>(pk: &CkksPublicKey, m: &EncodedInt, rng: &mut R) -> CkksCiphertext {
    let d = pk.params.d;
    let noise = EncryptionNoise {
        v: binary(d, rng),
        e1: gaussian(d, pk.params.sigma, rng),
        e2: gaussian(d, pk.params.sigma, rng),
    };
    enc_with(pk, m, &noise)
}

/// `ct0 = v·pk0 + e1 + m`, `ct1 = v·pk1 + e2` modulo `q_L`.
pub fn enc_with(pk: &CkksPublicKey, m: &EncodedInt, noise: &EncryptionNoise) -> CkksCiphertext {
    let d = pk.params.d;
    let kl = pk.params.special_bits();
    let v = Poly::from_signed(d, 2, &noise.v);
    let mut msg = Poly::zero(d, kl);
    msg.set_bigint(0, &m.value);
    let ct0 = v.mul(&pk.pk0, kl).add(&Poly::from_signed(d, kl, &noise.e1)).add(&msg);
    let ct1 = v.mul(&pk.pk1, kl).add(&Poly::from_signed(d, kl, &noise.e2));
    CkksCiphertext { level: pk.params.max_level, scale_power: m.scale_power, ct0, ct1 }
}

/// Constant coefficient of `ct0 + ct1·s mod q_level`, centered.
pub fn dec(sk: &CkksSecretKey, ct: &CkksCiphertext) -> BigInt {
    let d = ct.degree();
    let bits = ct.ct0.bits();
    let mut acc = Poly::zero(1, bits);
    {
        let dst = acc.raw_mut();
        dst.copy_from_slice(ct.ct0.coeff(0));
        // (ct1·s)_0 = ct1_0·s_0 − Σ_{i≥1} ct1_i·s_{d−i}
        for i in 0..d {
            let s = if i == 0 { sk.s[0] } else { -sk.s[d - i] };
            match s {
                1 => poly::add_in_place(dst, ct.ct1.coeff(i)),
                -1 => poly::sub_in_place(dst, ct.ct1.coeff(i)),
                _ => {}
            }
        }
    }
    acc.mask();
    acc.centered(0)
}

/// Every coefficient of `ct0 + ct1·s`; used for noise inspection.
pub fn dec_poly(sk: &CkksSecretKey, ct: &CkksCiphertext) -> Poly {
    let bits = ct.ct0.bits();
    ct.ct0.add(&ct.ct1.mul(&sk.poly(), bits))
}

/// Decrypts and decodes with `γ_c^scale_power`.
pub fn decrypt_real(sk: &CkksSecretKey, ct: &CkksCiphertext, params: &CkksParams) -> f64 {
    dcd(&dec(sk, ct), ct.scale_power, params)
}

fn aligned(a: &CkksCiphertext, b: &CkksCiphertext, check_scale: bool) -> Result<(), CkksError> {
    if a.level != b.level || (check_scale && a.scale_power != b.scale_power) || a.degree() != b.degree() {
        return Err(CkksError::Alignment {
            left_level: a.level,
            right_level: b.level,
            left_scale: a.scale_power,
            right_scale: b.scale_power,
        });
    }
    Ok(())
}

pub fn add(a: &CkksCiphertext, b: &CkksCiphertext) -> Result<CkksCiphertext, CkksError> {
    aligned(a, b, true)?;
    Ok(CkksCiphertext {
        level: a.level,
        scale_power: a.scale_power,
        ct0: a.ct0.add(&b.ct0),
        ct1: a.ct1.add(&b.ct1),
    })
}

/// Tensor, relinearize, rescale once.
pub fn mult(a: &CkksCiphertext, b: &CkksCiphertext, pk: &CkksPublicKey) -> Result<CkksCiphertext, CkksError> {
    aligned(a, b, false)?;
    if a.level == 0 {
        return Err(CkksError::Depth { required: 1, available: 0 });
    }
    if a.scale_power + b.scale_power == 0 {
        return Err(CkksError::Alignment {
            left_level: a.level,
            right_level: b.level,
            left_scale: 0,
            right_scale: 0,
        });
    }
    let params = &pk.params;
    let bits = params.modulus_bits(a.level);
    let basis = ntt::basis_for(2 * bits + log2(params.d), params.d);
    let (a0, a1) = (ntt::forward(&a.ct0, &basis), ntt::forward(&a.ct1, &basis));
    let (b0, b1) = (ntt::forward(&b.ct0, &basis), ntt::forward(&b.ct1, &basis));
    let d0 = ntt::inverse(&a0.mul(&b0, &basis), &basis, bits);
    let mut cross = a0.mul(&b1, &basis);
    cross.add_assign(&a1.mul(&b0, &basis), &basis);
    let d1 = ntt::inverse(&cross, &basis, bits);
    let d2 = ntt::inverse(&a1.mul(&b1, &basis), &basis, bits);
    let (r0, r1) = pk.key_switch(&d2, a.level);
    let relinearized = CkksCiphertext {
        level: a.level,
        scale_power: a.scale_power + b.scale_power,
        ct0: d0.add(&r0),
        ct1: d1.add(&r1),
    };
    rescale(&relinearized, params)
}

/// Divides by `Δ` with half-away-from-zero rounding and drops one level.
pub fn rescale(ct: &CkksCiphertext, params: &CkksParams) -> Result<CkksCiphertext, CkksError> {
    if ct.level == 0 {
        return Err(CkksError::Depth { required: 1, available: 0 });
    }
    Ok(CkksCiphertext {
        level: ct.level - 1,
        scale_power: ct.scale_power.saturating_sub(1),
        ct0: ct.ct0.round_shift(params.scale_bits),
        ct1: ct.ct1.round_shift(params.scale_bits),
    })
}

/// Plain reduction to `q_target`; the scale is unchanged.
pub fn mod_align(ct: &CkksCiphertext, target_level: u32, params: &CkksParams) -> Result<CkksCiphertext, CkksError> {
    if target_level > ct.level {
        return Err(CkksError::Depth { required: target_level - ct.level, available: 0 });
    }
    let bits = params.modulus_bits(target_level);
    Ok(CkksCiphertext {
        level: target_level,
        scale_power: ct.scale_power,
        ct0: ct.ct0.reduce(bits),
        ct1: ct.ct1.reduce(bits),
    })
}

/// Aligns both operands to the lower level, then multiplies.
pub fn mult_aligned(a: &CkksCiphertext, b: &CkksCiphertext, pk: &CkksPublicKey) -> Result<CkksCiphertext, CkksError> {
    let level = a.level.min(b.level);
    let a = mod_align(a, level, &pk.params)?;
    let b = mod_align(b, level, &pk.params)?;
    mult(&a, &b, pk)
}

/// Aligns both operands to the lower level, then adds.
pub fn add_aligned(a: &CkksCiphertext, b: &CkksCiphertext, params: &CkksParams) -> Result<CkksCiphertext, CkksError> {
    let level = a.level.min(b.level);
    add(&mod_align(a, level, params)?, &mod_align(b, level, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny() -> CkksParams {
        CkksParams { d: 64, max_level: 4, scale_bits: 40, q0_bits: 60, sigma: 3.2 }
    }

    #[test]
    fn encoder_examples() {
        let p = CkksParams { scale_bits: 2, q0_bits: 20, ..tiny() };
        assert_eq!(ecd(1.5, &p).unwrap().value, BigInt::from(6));
        assert_eq!(ecd(-0.125, &p).unwrap().value, BigInt::from(-1)); // -0.5 → -1
        assert_eq!(ecd(0.125, &p).unwrap().value, BigInt::from(1));
        assert!(matches!(ecd(1e6, &p), Err(CkksError::Overflow { .. })));
        assert_eq!(dcd(&BigInt::from(6), 1, &p), 1.5);
    }

    #[test]
    fn encoder_pi_matches_decimal_oracle() {
        // round(π · 2^40) from 30 decimal digits of π
        let pi = BigInt::parse_bytes(b"314159265358979323846264338327", 10).unwrap();
        let scaled = (pi << 40usize) * 2 + BigInt::from(10).pow(29);
        let expected = scaled / (BigInt::from(10).pow(29) * 2);
        assert_eq!(ecd(std::f64::consts::PI, &CkksParams::test()).unwrap().value, expected);
    }

    #[test]
    fn key_relations_hold() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let params = tiny();
        let keys = gen(&params, &mut rng).unwrap();
        let kl = params.special_bits();
        let sp = keys.secret.poly();
        assert!(keys.secret.s.iter().all(|c| (-1..=1).contains(c)));
        let e = keys.public.pk0.add(&keys.public.pk1.mul(&sp, kl));
        assert!(e.magnitude_bits() <= 5, "pk noise exceeds 6σ");
        let wide = 2 * kl;
        let s_sq = sp.mul(&sp, wide).shl(kl, wide);
        let e2 = keys.public.evk0.add(&keys.public.evk1.mul(&sp, wide)).sub(&s_sq);
        assert!(e2.magnitude_bits() <= 5);

        let noiseless = CkksParams { sigma: 0.0, ..tiny() };
        let k0 = gen(&noiseless, &mut rng).unwrap();
        let zero = k0.public.pk0.add(&k0.public.pk1.mul(&k0.secret.poly(), kl));
        assert_eq!(zero, Poly::zero(params.d, kl));
    }

    #[test]
    fn degenerate_encryption_is_the_message() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let params = tiny();
        let keys = gen(&params, &mut rng).unwrap();
        let m = ecd(0.75, &params).unwrap();
        let ct = enc_with(&keys.public, &m, &EncryptionNoise::zero(params.d));
        assert_eq!(ct.ct0.centered(0), m.value);
        assert_eq!(ct.ct1, Poly::zero(params.d, params.special_bits()));
        assert_eq!(dec(&keys.secret, &ct), m.value);
    }

    #[test]
    fn round_trip_and_randomization() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let params = tiny();
        let keys = gen(&params, &mut rng).unwrap();
        let m = ecd(-1.25, &params).unwrap();
        let a = enc(&keys.public, &m, &mut rng);
        let b = enc(&keys.public, &m, &mut rng);
        assert_ne!(a, b);
        for ct in [&a, &b] {
            assert!((decrypt_real(&keys.secret, ct, &params) + 1.25).abs() < 1e-9);
            assert_eq!(dec_poly(&keys.secret, ct).centered(0), dec(&keys.secret, ct));
        }
        let sum = add(&a, &b).unwrap();
        assert_eq!(sum, add(&b, &a).unwrap());
        assert!((decrypt_real(&keys.secret, &sum, &params) + 2.5).abs() < 1e-9);
    }

    #[test]
    fn multiplication_and_levels() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let params = tiny();
        let keys = gen(&params, &mut rng).unwrap();
        let pk = &keys.public;
        let two = enc(pk, &ecd(2.0, &params).unwrap(), &mut rng);
        let three = enc(pk, &ecd(3.0, &params).unwrap(), &mut rng);
        let six = mult(&two, &three, pk).unwrap();
        assert_eq!((six.level, six.scale_power), (params.max_level - 1, 1));
        assert!((decrypt_real(&keys.secret, &six, &params) - 6.0).abs() < 1e-6);

        let low = mod_align(&two, 1, &params).unwrap();
        assert_eq!(dec(&keys.secret, &low), dec(&keys.secret, &two));
        let prod = mult_aligned(&six, &low, pk).unwrap();
        assert_eq!(prod.level, 0);
        assert!((decrypt_real(&keys.secret, &prod, &params) - 12.0).abs() < 1e-6);
        assert!(matches!(mult(&prod, &prod, pk), Err(CkksError::Depth { .. })));
        assert!(matches!(add(&six, &two), Err(CkksError::Alignment { .. })));
        assert!(mod_align(&low, 3, &params).is_err());
    }

    #[test]
    fn rescale_two_scale_encoding() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let params = tiny();
        let keys = gen(&params, &mut rng).unwrap();
        let m = ecd_at(0.3, 2, &params).unwrap();
        let ct = enc(&keys.public, &m, &mut rng);
        let r = rescale(&ct, &params).unwrap();
        assert_eq!((r.level, r.scale_power), (params.max_level - 1, 1));
        assert!((decrypt_real(&keys.secret, &r, &params) - 0.3).abs() < 1e-9);
        let rr = rescale(&r, &params).unwrap();
        assert_eq!(rr.level, params.max_level - 2);
    }

    #[test]
    fn ciphertext_json_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let params = tiny();
        let keys = gen(&params, &mut rng).unwrap();
        let ct = enc(&keys.public, &ecd(0.5, &params).unwrap(), &mut rng);
        let text = serde_json::to_string(&ct).unwrap();
        let back: CkksCiphertext = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ct);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["level", "scale_power", "ct0", "ct1"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let pk_text = serde_json::to_string(&keys.public).unwrap();
        let pk: CkksPublicKey = serde_json::from_str(&pk_text).unwrap();
        assert_eq!(pk, keys.public);
    }
}
