//! Multiplicatively homomorphic ElGamal over the quadratic residues of a
//! safe-prime field, with the fixed-point encoder that maps reals onto group
//! elements.
//!
//! For `p = 2q + 1` the squares modulo `p` form the subgroup `G` of prime
//! order `q`. Plaintexts must live in `G`, so the encoder rounds `x / γ` to
//! the nearest member of `G` (negative values are shifted by `p` first) and
//! remembers the signed rounding offset. Products of encodings decode with
//! `γⁿ` as long as the true product stays inside `(-q-1, q]`.
//!
//! Exponentiation is delegated to `num-bigint`'s Montgomery `modpow`; nothing
//! here has been hardened against timing side channels.

pub mod prime;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::hex_biguint;

/// Safe-prime search budget for [`gen`], in sieved candidates.
pub const SAFE_PRIME_SEARCH_BUDGET: u64 = 50_000_000;

/// Miller–Rabin rounds used when (re)validating key material.
const VALIDATION_ROUNDS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ElGamalError {
    #[error("safe-prime search for {bits}-bit keys exhausted its budget")]
    GenerationTimeout { bits: u64 },
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error("plaintext is not a member of the quadratic-residue subgroup")]
    NotInGroup,
    #[error("encoding overflow: |{value} / γ| exceeds q ({q_bits}-bit q)")]
    Overflow { value: f64, q_bits: u64 },
    #[error("invalid sensitivity {0}: expected 0 < γ ≤ 1")]
    Sensitivity(f64),
}

/// Public parameters `(p, q, g, h)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElGamalPublicKey {
    #[serde(with = "hex_biguint")]
    pub p: BigUint,
    #[serde(with = "hex_biguint")]
    pub q: BigUint,
    #[serde(with = "hex_biguint")]
    pub g: BigUint,
    #[serde(with = "hex_biguint")]
    pub h: BigUint,
    /// Bit length of encryption nonces; `None` draws them from all of `Z_q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce_bits: Option<u64>,
}

/// Secret exponent `s`. Kept in its own type (and file) so that no API
/// handling public material can be handed one by accident.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElGamalSecretKey {
    #[serde(with = "hex_biguint")]
    pub s: BigUint,
}

impl std::fmt::Debug for ElGamalSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ElGamalSecretKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElGamalKeys {
    pub public: ElGamalPublicKey,
    pub secret: ElGamalSecretKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElGamalCiphertext {
    #[serde(with = "hex_biguint")]
    pub c1: BigUint,
    #[serde(with = "hex_biguint")]
    pub c2: BigUint,
}

/// Result of [`ecd`]: the group element and how far it sits from the exact
/// target `x/γ + p·[x<0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedScalar {
    pub m: BigUint,
    /// Signed offset `m - (x/γ + p·[x<0])`.
    pub offset: f64,
    pub gamma_exponent: u32,
}

impl EncodedScalar {
    /// Unsigned rounding distance `δ`.
    pub fn delta(&self) -> f64 {
        self.offset.abs()
    }
}

/// Uniform integer in `[0, bound)`; `bound` must be positive.
pub(crate) fn random_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    assert!(!bound.is_zero(), "empty sampling range");
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = bytes as u64 * 8 - bits;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        let candidate = BigUint::from_bytes_le(&buf) >> excess;
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Jacobi symbol `(a/n)` for odd `n`.
pub fn jacobi(a: &BigUint, n: &BigUint) -> i8 {
    assert!(n.is_odd(), "Jacobi symbol needs an odd modulus");
    let mut a = a % n;
    let mut n = n.clone();
    let mut result = 1i8;
    while !a.is_zero() {
        let twos = a.trailing_zeros().unwrap_or(0);
        if twos > 0 {
            a >>= twos;
            let n_mod_8 = (&n % 8u32).to_u32().unwrap();
            if twos % 2 == 1 && (n_mod_8 == 3 || n_mod_8 == 5) {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if (&a % 4u32) == BigUint::from(3u32) && (&n % 4u32) == BigUint::from(3u32) {
            result = -result;
        }
        a %= &n;
    }
    if n.is_one() {
        result
    } else {
        0
    }
}

impl ElGamalPublicKey {
    /// Membership in `G` via the Legendre symbol, equivalent to `m^q ≡ 1`.
    pub fn contains(&self, m: &BigUint) -> bool {
        !m.is_zero() && m < &self.p && jacobi(m, &self.p) == 1
    }

    /// Membership by the defining power test `m^q mod p = 1`.
    pub fn contains_by_order(&self, m: &BigUint) -> bool {
        !m.is_zero() && m < &self.p && m.modpow(&self.q, &self.p).is_one()
    }

    pub fn validate(&self) -> Result<(), ElGamalError> {
        let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(0x5afe);
        if self.p != (&self.q << 1) + 1u32 {
            return Err(ElGamalError::InvalidKey("p != 2q + 1".into()));
        }
        if !prime::is_safe_prime(&self.p, VALIDATION_ROUNDS, &mut rng) {
            return Err(ElGamalError::InvalidKey("p is not a safe prime".into()));
        }
        if self.g.is_one() || !self.contains_by_order(&self.g) {
            return Err(ElGamalError::InvalidKey("g does not generate the order-q subgroup".into()));
        }
        if !self.contains(&self.h) {
            return Err(ElGamalError::InvalidKey("h is not a subgroup element".into()));
        }
        Ok(())
    }

    fn draw_nonce<R: RngCore + ?Sized>(&self, rng: &mut R) -> BigUint {
        let bound = match self.nonce_bits {
            Some(bits) if bits < self.q.bits() => BigUint::one() << bits,
            _ => self.q.clone(),
        };
        loop {
            let r = random_below(&bound, rng);
            if !r.is_zero() {
                return r;
            }
        }
    }

    /// Trivial encryption of 1 is `(1, 1)`; this is the neutral element for
    /// [`hmul`].
    pub fn neutral(&self) -> ElGamalCiphertext {
        ElGamalCiphertext { c1: BigUint::one(), c2: BigUint::one() }
    }
}

/// Key material over an existing safe prime, with `g` the smallest quadratic
/// residue above 1.
pub fn keys_from_safe_prime<R: RngCore + ?Sized>(
    p: BigUint,
    secret_bits: Option<u64>,
    rng: &mut R,
) -> Result<ElGamalKeys, ElGamalError> {
    let q = &p >> 1;
    let mut g = BigUint::from(2u32);
    while jacobi(&g, &p) != 1 {
        g += 1u32;
    }
    let mut public = ElGamalPublicKey {
        h: BigUint::one(),
        p,
        q,
        g,
        nonce_bits: secret_bits,
    };
    let s = public.draw_nonce(rng);
    public.h = public.g.modpow(&s, &public.p);
    public.validate()?;
    Ok(ElGamalKeys { public, secret: ElGamalSecretKey { s } })
}

/// Generates keys with a `bits`-bit safe prime `p`.
///
/// 3072-bit keys reuse a fixed, re-verified safe prime; other sizes run a
/// seeded search. `secret_bits` bounds the secret exponent and the
/// encryption nonces (short-exponent variant); `None` samples all of `Z_q`.
pub fn gen<R: RngCore + ?Sized>(
    bits: u64,
    secret_bits: Option<u64>,
    rng: &mut R,
) -> Result<ElGamalKeys, ElGamalError> {
    if bits < 5 {
        return Err(ElGamalError::InvalidKey(format!("{bits}-bit modulus is too small")));
    }
    let p = if bits == 3072 {
        prime::cached_safe_prime_3072()
    } else {
        prime::generate_safe_prime(bits, SAFE_PRIME_SEARCH_BUDGET, rng)
            .ok_or(ElGamalError::GenerationTimeout { bits })?
    };
    keys_from_safe_prime(p, secret_bits, rng)
}

pub fn enc<R: RngCore + ?Sized>(
    pk: &ElGamalPublicKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<ElGamalCiphertext, ElGamalError> {
    let r = pk.draw_nonce(rng);
    enc_with_nonce(pk, m, &r)
}

/// Encryption with a caller-chosen nonce; test hook.
pub fn enc_with_nonce(
    pk: &ElGamalPublicKey,
    m: &BigUint,
    r: &BigUint,
) -> Result<ElGamalCiphertext, ElGamalError> {
    if !pk.contains(m) {
        return Err(ElGamalError::NotInGroup);
    }
    Ok(ElGamalCiphertext {
        c1: pk.g.modpow(r, &pk.p),
        c2: (m * pk.h.modpow(r, &pk.p)) % &pk.p,
    })
}

/// `c1^{-s} · c2 mod p`.
pub fn dec(pk: &ElGamalPublicKey, sk: &ElGamalSecretKey, ct: &ElGamalCiphertext) -> BigUint {
    let shared = ct.c1.modpow(&sk.s, &pk.p);
    let inverse = shared
        .modinv(&pk.p)
        .expect("c1 is a unit modulo the prime p");
    (inverse * &ct.c2) % &pk.p
}

/// Componentwise product; decrypts to the product of the plaintexts.
pub fn hmul(pk: &ElGamalPublicKey, a: &ElGamalCiphertext, b: &ElGamalCiphertext) -> ElGamalCiphertext {
    ElGamalCiphertext {
        c1: (&a.c1 * &b.c1) % &pk.p,
        c2: (&a.c2 * &b.c2) % &pk.p,
    }
}

fn check_gamma(gamma: f64) -> Result<(), ElGamalError> {
    if gamma > 0.0 && gamma <= 1.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(ElGamalError::Sensitivity(gamma))
    }
}

/// Nearest element of `G` to `x/γ + p·[x<0]`, ties resolved to the smaller
/// candidate.
pub fn ecd(x: f64, gamma: f64, pk: &ElGamalPublicKey) -> Result<EncodedScalar, ElGamalError> {
    check_gamma(gamma)?;
    let scaled = x / gamma;
    let overflow = || ElGamalError::Overflow { value: x, q_bits: pk.q.bits() };
    if !scaled.is_finite() {
        return Err(overflow());
    }
    let floor = scaled.floor();
    let frac = scaled - floor;
    let floor_int = BigInt::from_f64(floor).ok_or_else(overflow)?;
    let q = BigInt::from(pk.q.clone());
    // Range: -q-1 < x/γ ≤ q
    if floor_int > q || (floor_int == q && frac > 0.0) || floor_int < -(&q + BigInt::one()) {
        return Err(overflow());
    }
    let p = BigInt::from(pk.p.clone());
    let shift = if x < 0.0 { p.clone() } else { BigInt::zero() };
    let base = &floor_int + &shift;

    // Walk outward from the target: candidates below are base - k, above are
    // base + 1 + k, each at distance frac + k and (1 - frac) + k.
    let mut below = 0u64;
    let mut above = 0u64;
    loop {
        let dist_below = frac + below as f64;
        let dist_above = (1.0 - frac) + above as f64;
        let (candidate, offset) = if dist_below <= dist_above {
            below += 1;
            (&base - BigInt::from(below - 1), -dist_below)
        } else {
            above += 1;
            (&base + BigInt::from(above), dist_above)
        };
        if candidate.is_positive() && candidate < p {
            let m = candidate.to_biguint().expect("positive");
            if pk.contains(&m) {
                return Ok(EncodedScalar { m, offset, gamma_exponent: 1 });
            }
        }
        if below > 1 << 20 && above > 1 << 20 {
            // Quadratic residues are dense; this only triggers on corrupt keys.
            return Err(ElGamalError::NotInGroup);
        }
    }
}

/// Signed lift of a residue: `m - p·[m > q]`.
pub fn centered(m: &BigUint, pk: &ElGamalPublicKey) -> BigInt {
    if m > &pk.q {
        BigInt::from(m.clone()) - BigInt::from(pk.p.clone())
    } else {
        BigInt::from(m.clone())
    }
}

/// `γᵏ · (m - p·[m > q])` for a residue `m`.
pub fn dcd(m: &BigUint, gamma_power: f64, pk: &ElGamalPublicKey) -> f64 {
    scale_big(&centered(m, pk), gamma_power)
}

/// `value · factor` without overflowing when `value` exceeds `f64` range.
pub(crate) fn scale_big(value: &BigInt, factor: f64) -> f64 {
    if let Some(v) = value.to_f64().filter(|v| v.is_finite()) {
        return v * factor;
    }
    // Split off a power of two so the mantissa fits.
    let shift = value.bits().saturating_sub(900);
    let reduced = (value >> shift).to_f64().unwrap_or(0.0);
    reduced * factor * 2f64.powi(shift as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy_keys(rng: &mut ChaCha20Rng) -> ElGamalKeys {
        keys_from_safe_prime(BigUint::from(23u32), None, rng).unwrap()
    }

    fn quadratic_residues(p: u64) -> Vec<u64> {
        let mut qr: Vec<u64> = (1..p).map(|z| z * z % p).collect();
        qr.sort_unstable();
        qr.dedup();
        qr
    }

    #[test]
    fn toy_parameters() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let keys = toy_keys(&mut rng);
        assert_eq!(keys.public.q, BigUint::from(11u32));
        assert_eq!(keys.public.g, BigUint::from(2u32));
        assert!(BigUint::from(2u32).modpow(&BigUint::from(11u32), &BigUint::from(23u32)).is_one());
        assert_eq!(keys.public.h, keys.public.g.modpow(&keys.secret.s, &keys.public.p));
    }

    #[test]
    fn membership_tests_agree_with_exhaustive_residues() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let keys = toy_keys(&mut rng);
        let qr = quadratic_residues(23);
        for m in 1..23u64 {
            let m_big = BigUint::from(m);
            assert_eq!(keys.public.contains(&m_big), qr.contains(&m));
            assert_eq!(keys.public.contains_by_order(&m_big), qr.contains(&m));
        }
    }

    #[test]
    fn jacobi_matches_euler_criterion() {
        for p in [23u64, 47, 59, 83, 107] {
            let p_big = BigUint::from(p);
            for a in 1..p {
                let euler = BigUint::from(a).modpow(&BigUint::from((p - 1) / 2), &p_big);
                let expected = if euler.is_one() { 1 } else { -1 };
                assert_eq!(jacobi(&BigUint::from(a), &p_big), expected, "a={a} p={p}");
            }
        }
    }

    #[test]
    fn hand_computed_ciphertext() {
        let pk = ElGamalPublicKey {
            p: BigUint::from(23u32),
            q: BigUint::from(11u32),
            g: BigUint::from(2u32),
            h: BigUint::from(8u32), // s = 3
            nonce_bits: None,
        };
        let sk = ElGamalSecretKey { s: BigUint::from(3u32) };
        // r = 5: c1 = 2^5 = 32 ≡ 9, c2 = 4 · 8^5 = 4 · 32768 ≡ 4 · 16 = 64 ≡ 18
        let ct = enc_with_nonce(&pk, &BigUint::from(4u32), &BigUint::from(5u32)).unwrap();
        assert_eq!(ct, ElGamalCiphertext { c1: BigUint::from(9u32), c2: BigUint::from(18u32) });
        assert_eq!(dec(&pk, &sk, &ct), BigUint::from(4u32));
        let neutral = enc_with_nonce(&pk, &BigUint::one(), &BigUint::zero()).unwrap();
        assert_eq!(neutral, pk.neutral());
        assert_eq!(enc_with_nonce(&pk, &BigUint::from(5u32), &BigUint::one()), Err(ElGamalError::NotInGroup));
    }

    #[test]
    fn exhaustive_toy_correctness_and_homomorphism() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let keys = toy_keys(&mut rng);
        let (pk, sk) = (&keys.public, &keys.secret);
        let group: Vec<BigUint> = quadratic_residues(23).into_iter().map(BigUint::from).collect();
        for m in &group {
            let a = enc(pk, m, &mut rng).unwrap();
            assert_eq!(&dec(pk, sk, &a), m);
            assert!(pk.contains(&a.c1) && pk.contains(&a.c2));
            for m2 in &group {
                let b = enc(pk, m2, &mut rng).unwrap();
                assert_eq!(dec(pk, sk, &hmul(pk, &a, &b)), (m * m2) % &pk.p);
                assert_eq!(dec(pk, sk, &hmul(pk, &a, &b)), dec(pk, sk, &hmul(pk, &b, &a)));
            }
        }
    }

    #[test]
    fn four_factor_chain() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let keys = toy_keys(&mut rng);
        let pk = &keys.public;
        let values = [2u32, 3, 6, 9];
        let mut acc = enc(pk, &BigUint::from(values[0]), &mut rng).unwrap();
        for &v in &values[1..] {
            acc = hmul(pk, &acc, &enc(pk, &BigUint::from(v), &mut rng).unwrap());
        }
        assert_eq!(dec(pk, &keys.secret, &acc), BigUint::from(2u32 * 3 * 6 * 9 % 23));
        let one = enc(pk, &BigUint::one(), &mut rng).unwrap();
        let m = BigUint::from(13u32);
        let ct = enc(pk, &m, &mut rng).unwrap();
        assert_eq!(dec(pk, &keys.secret, &hmul(pk, &ct, &one)), m);
    }

    #[test]
    fn encoder_is_nearest_member() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let keys = toy_keys(&mut rng);
        let pk = &keys.public;
        let qr = quadratic_residues(23);
        // x = 0 targets 0, which is not in G; nearest member is 1.
        let zero = ecd(0.0, 1.0, pk).unwrap();
        assert_eq!(zero.m, BigUint::one());
        assert_eq!(zero.offset, 1.0);
        let one = ecd(1.0, 1.0, pk).unwrap();
        assert_eq!((one.m.clone(), one.delta()), (BigUint::one(), 0.0));
        for tenths in -110..=110 {
            let x = tenths as f64 / 10.0;
            let target = x + if x < 0.0 { 23.0 } else { 0.0 };
            let best = qr
                .iter()
                .map(|&m| (((m as f64) - target).abs(), m))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap();
            let enc = ecd(x, 1.0, pk).unwrap();
            assert_eq!(enc.m, BigUint::from(best.1), "x={x}");
            assert!((enc.delta() - best.0).abs() < 1e-12);
        }
        assert!(matches!(ecd(11.5, 1.0, pk), Err(ElGamalError::Overflow { .. })));
        assert!(matches!(ecd(-12.5, 1.0, pk), Err(ElGamalError::Overflow { .. })));
        assert!(matches!(ecd(1.0, 0.0, pk), Err(ElGamalError::Sensitivity(_))));
    }

    #[test]
    fn decoder_negative_branch() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let keys = keys_from_safe_prime(prime::cached_safe_prime_3072(), Some(256), &mut rng).unwrap();
        let pk = &keys.public;
        let gamma = 2f64.powi(-40);
        let m = &pk.p - (BigUint::one() << 40);
        assert_eq!(dcd(&m, gamma, pk), -1.0);
        let e = ecd(-1.0, gamma, pk).unwrap();
        let target = BigInt::from(&pk.p - (BigUint::one() << 40u32));
        let gap = BigInt::from(e.m.clone()) - &target;
        assert_eq!(gap.to_f64().unwrap(), e.offset);
        assert!(gap.abs() < BigInt::from(64));
        let back = dcd(&e.m, gamma, pk);
        assert!((back + 1.0 - gamma * e.offset).abs() < 1e-15);
    }

    #[test]
    fn fresh_nonces_are_distinct() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let keys = gen(64, None, &mut rng).unwrap();
        let m = ecd(0.25, 2f64.powi(-10), &keys.public).unwrap().m;
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let ct = enc(&keys.public, &m, &mut rng).unwrap();
            assert!(seen.insert(ct.c1.clone()), "nonce reuse");
            assert_eq!(dec(&keys.public, &keys.secret, &ct), m);
        }
    }

    #[test]
    fn corrupted_keys_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let mut keys = toy_keys(&mut rng);
        keys.public.g = BigUint::from(5u32);
        assert!(keys.public.validate().is_err());
        keys.public.g = BigUint::from(2u32);
        keys.public.p = BigUint::from(29u32);
        assert!(keys.public.validate().is_err());
    }
}
