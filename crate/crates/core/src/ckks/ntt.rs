//! Exact negacyclic products of multi-limb polynomials via number-theoretic
//! transforms over a pool of 62-bit primes, recombined with Garner's
//! mixed-radix CRT directly into the output modulus `2^k`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigUint;
use num_traits::One;

use super::poly::{limbs_for, Poly};

/// Primes are `c·2^TWO_ADICITY + 1`, enough for degree `2^(TWO_ADICITY-1)`.
const TWO_ADICITY: u32 = 17;
pub const MAX_DEGREE: usize = 1 << (TWO_ADICITY - 1);
const PRIME_POOL: usize = 96;
/// Every pool prime exceeds `2^PRIME_BITS_FLOOR`.
const PRIME_BITS_FLOOR: u32 = 61;
/// Precomputed `2^(64k) mod p` table length, i.e. widest supported input.
const MAX_INPUT_LIMBS: usize = 96;

#[inline]
fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b;
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline]
fn sub_mod(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + p - b
    }
}

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// `⌊w·2^64 / p⌋`, the Shoup companion of a constant `w < p`.
#[inline]
fn shoup(w: u64, p: u64) -> u64 {
    (((w as u128) << 64) / p as u128) as u64
}

/// `x·w mod p` for any `x < 2^64`, given `w_sh = shoup(w, p)` and `p < 2^63`.
#[inline]
fn mul_shoup(x: u64, w: u64, w_sh: u64, p: u64) -> u64 {
    let q = ((x as u128 * w_sh as u128) >> 64) as u64;
    let r = x.wrapping_mul(w).wrapping_sub(q.wrapping_mul(p));
    if r >= p {
        r - p
    } else {
        r
    }
}

/// As [`mul_shoup`] but leaves the result in `[0, 2p)`.
#[inline]
fn mul_shoup_lazy(x: u64, w: u64, w_sh: u64, p: u64) -> u64 {
    let q = ((x as u128 * w_sh as u128) >> 64) as u64;
    x.wrapping_mul(w).wrapping_sub(q.wrapping_mul(p))
}

/// Deterministic Miller–Rabin for 64-bit inputs.
pub(crate) fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Descending primes `≡ 1 mod 2^17` below `2^62`.
pub(crate) fn primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let step = 1u64 << TWO_ADICITY;
        let mut c = ((1u64 << 62) - 1) / step;
        let mut out = Vec::with_capacity(PRIME_POOL);
        while out.len() < PRIME_POOL {
            let p = c * step + 1;
            if is_prime_u64(p) {
                debug_assert!(p > 1u64 << PRIME_BITS_FLOOR);
                out.push(p);
            }
            c -= 1;
        }
        out
    })
}

pub(crate) struct NttTable {
    p: u64,
    n: usize,
    psi: Vec<u64>,
    psi_sh: Vec<u64>,
    ipsi: Vec<u64>,
    ipsi_sh: Vec<u64>,
    n_inv: u64,
    n_inv_sh: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    fn new(p: u64, n: usize) -> Self {
        assert!(n.is_power_of_two() && n <= MAX_DEGREE, "unsupported ring degree {n}");
        let order = 2 * n as u64;
        let psi = (2..p)
            .map(|g| pow_mod(g, (p - 1) / order, p))
            .find(|&c| pow_mod(c, n as u64, p) == p - 1)
            .expect("a primitive 2n-th root exists for p ≡ 1 mod 2n");
        let psi_inv = pow_mod(psi, p - 2, p);
        let log_n = n.trailing_zeros();
        let powers = |base: u64| {
            let mut pw = Vec::with_capacity(n);
            let mut acc = 1u64;
            for _ in 0..n {
                pw.push(acc);
                acc = mul_mod(acc, base, p);
            }
            (0..n).map(|i| pw[bit_reverse(i, log_n)]).collect::<Vec<_>>()
        };
        let psi_rev = powers(psi);
        let ipsi_rev = powers(psi_inv);
        let n_inv = pow_mod(n as u64, p - 2, p);
        NttTable {
            p,
            n,
            psi_sh: psi_rev.iter().map(|&w| shoup(w, p)).collect(),
            psi: psi_rev,
            ipsi_sh: ipsi_rev.iter().map(|&w| shoup(w, p)).collect(),
            ipsi: ipsi_rev,
            n_inv,
            n_inv_sh: shoup(n_inv, p),
        }
    }

    /// Harvey's lazy butterflies: values stay in `[0, 4p)` between stages.
    fn forward(&self, a: &mut [u64]) {
        let (p, n) = (self.p, self.n);
        let two_p = 2 * p;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let (w, ws) = (self.psi[m + i], self.psi_sh[m + i]);
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = *x;
                    if u >= two_p {
                        u -= two_p;
                    }
                    let v = mul_shoup_lazy(*y, w, ws, p);
                    *x = u + v;
                    *y = u + two_p - v;
                }
            }
            m <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_p {
                v -= two_p;
            }
            if v >= p {
                v -= p;
            }
            *x = v;
        }
    }

    fn inverse(&self, a: &mut [u64]) {
        let (p, n) = (self.p, self.n);
        let two_p = 2 * p;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let (w, ws) = (self.ipsi[h + i], self.ipsi_sh[h + i]);
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (u, v) = (*x, *y);
                    let mut s = u + v;
                    if s >= two_p {
                        s -= two_p;
                    }
                    *x = s;
                    *y = mul_shoup_lazy(u + two_p - v, w, ws, p);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_shoup(*x, self.n_inv, self.n_inv_sh, p);
        }
    }
}

/// `a·b mod p` for `a, b < p < 2^62` via Barrett with `mu = ⌊2^124/p⌋`.
#[inline]
fn mul_barrett(a: u64, b: u64, p: u64, mu: u64) -> u64 {
    let x = a as u128 * b as u128;
    let q = (((x >> 60) as u64 as u128 * mu as u128) >> 64) as u64;
    let mut r = (x - q as u128 * p as u128) as u64;
    while r >= p {
        r -= p;
    }
    r
}

/// The first `t` pool primes with their transform tables and CRT constants.
pub(crate) struct CrtBasis {
    n: usize,
    primes: Vec<u64>,
    barrett: Vec<u64>,
    tables: Vec<Arc<NttTable>>,
    /// `(P/p_i)⁻¹ mod p_i`, with Shoup companions.
    hat_inv: Vec<(u64, u64)>,
    /// `P/p_i` as little-endian limbs.
    hat: Vec<Vec<u64>>,
    /// `P = ∏ p_i` as little-endian limbs.
    modulus: Vec<u64>,
    /// `radix[i][k] = 2^(64k) mod p_i`, with Shoup companions.
    radix: Vec<Vec<(u64, u64)>>,
}

impl CrtBasis {
    fn new(t: usize, n: usize) -> Self {
        let pool = primes();
        assert!(t <= pool.len(), "product needs {t} primes, pool has {}", pool.len());
        let primes = pool[..t].to_vec();
        let tables = primes.iter().map(|&p| table(p, n)).collect();
        let big_p = primes.iter().fold(BigUint::one(), |acc, &p| acc * p);
        let hats: Vec<BigUint> = primes.iter().map(|&p| &big_p / p).collect();
        let hat_inv = primes
            .iter()
            .zip(&hats)
            .map(|(&p, h)| {
                let r = (h % p).to_u64_digits().first().copied().unwrap_or(0);
                let inv = pow_mod(r, p - 2, p);
                (inv, shoup(inv, p))
            })
            .collect();
        let hat = hats.iter().map(|h| h.to_u64_digits()).collect();
        let radix = primes
            .iter()
            .map(|&p| {
                let base = mul_mod(1u64 << 32, 1u64 << 32, p);
                let mut acc = 1u64;
                (0..MAX_INPUT_LIMBS)
                    .map(|_| {
                        let entry = (acc, shoup(acc, p));
                        acc = mul_mod(acc, base, p);
                        entry
                    })
                    .collect()
            })
            .collect();
        let barrett = primes.iter().map(|&p| ((1u128 << 124) / p as u128) as u64).collect();
        CrtBasis { n, primes, barrett, tables, hat_inv, hat, modulus: big_p.to_u64_digits(), radix }
    }

    pub(crate) fn len(&self) -> usize {
        self.primes.len()
    }

    /// `2^bits mod p_i`.
    fn pow2(&self, i: usize, bits: u32) -> u64 {
        let p = self.primes[i];
        let (word, rem) = ((bits / 64) as usize, bits % 64);
        let (w, _) = self.radix[i][word];
        mul_mod(w, (1u64 << rem) % p, p)
    }
}

fn table(p: u64, n: usize) -> Arc<NttTable> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<NttTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().expect("table cache").get(&(p, n)) {
        return Arc::clone(t);
    }
    let built = Arc::new(NttTable::new(p, n));
    cache.lock().expect("table cache").entry((p, n)).or_insert(built).clone()
}

/// Smallest basis whose modulus exceeds `2^(bound_bits + 1)`, i.e. one that
/// represents every integer of magnitude below `2^bound_bits` uniquely.
pub(crate) fn basis_for(bound_bits: u32, n: usize) -> Arc<CrtBasis> {
    let t = (bound_bits as usize + 2).div_ceil(PRIME_BITS_FLOOR as usize).max(1);
    basis(t, n)
}

pub(crate) fn basis(t: usize, n: usize) -> Arc<CrtBasis> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<CrtBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(b) = cache.lock().expect("basis cache").get(&(t, n)) {
        return Arc::clone(b);
    }
    let built = Arc::new(CrtBasis::new(t, n));
    cache.lock().expect("basis cache").entry((t, n)).or_insert(built).clone()
}

/// A polynomial in evaluation form, one row per basis prime.
#[derive(Clone)]
pub(crate) struct NttPoly {
    rows: Vec<Vec<u64>>,
}

impl NttPoly {
    pub(crate) fn mul_assign(&mut self, other: &NttPoly, basis: &CrtBasis) {
        for (((row, o), &p), &mu) in self.rows.iter_mut().zip(&other.rows).zip(&basis.primes).zip(&basis.barrett) {
            for (x, &y) in row.iter_mut().zip(o) {
                *x = mul_barrett(*x, y, p, mu);
            }
        }
    }

    pub(crate) fn mul(&self, other: &NttPoly, basis: &CrtBasis) -> NttPoly {
        let mut out = self.clone();
        out.mul_assign(other, basis);
        out
    }

    pub(crate) fn add_assign(&mut self, other: &NttPoly, basis: &CrtBasis) {
        for ((row, o), &p) in self.rows.iter_mut().zip(&other.rows).zip(&basis.primes) {
            for (x, &y) in row.iter_mut().zip(o) {
                *x = add_mod(*x, y, p);
            }
        }
    }
}

/// Residues of the centered coefficients, transformed.
pub(crate) fn forward(poly: &Poly, basis: &CrtBasis) -> NttPoly {
    let n = poly.degree();
    assert_eq!(n, basis.n, "basis built for a different degree");
    let limbs = poly.limbs();
    assert!(limbs <= MAX_INPUT_LIMBS, "coefficients wider than {MAX_INPUT_LIMBS} limbs");
    let negatives: Vec<bool> = (0..n).map(|i| poly.is_negative(i)).collect();
    let raw = poly.raw();
    let rows = (0..basis.len())
        .map(|idx| {
            let p = basis.primes[idx];
            let radix = &basis.radix[idx];
            let wrap = basis.pow2(idx, poly.bits());
            let mut row: Vec<u64> = raw
                .chunks_exact(limbs)
                .zip(&negatives)
                .map(|(c, &neg)| {
                    let two_p = 2 * p;
                    let mut r = 0u64;
                    for (&limb, &(w, ws)) in c.iter().zip(radix) {
                        r += mul_shoup_lazy(limb, w, ws, p);
                        if r >= two_p {
                            r -= two_p;
                        }
                    }
                    if r >= p {
                        r -= p;
                    }
                    if neg {
                        sub_mod(r, wrap, p)
                    } else {
                        r
                    }
                })
                .collect();
            basis.tables[idx].forward(&mut row);
            row
        })
        .collect();
    NttPoly { rows }
}

/// Inverse transform and CRT reconstruction of the signed integer
/// coefficients, reduced modulo `2^out_bits`.
pub(crate) fn inverse(x: &NttPoly, basis: &CrtBasis, out_bits: u32) -> Poly {
    let t = basis.len();
    let n = basis.n;
    let mut rows = x.rows.clone();
    for (row, table) in rows.iter_mut().zip(&basis.tables) {
        table.inverse(row);
    }
    let mut out = Poly::zero(n, out_bits);
    let lo = limbs_for(out_bits);
    let truncate = |v: &[u64]| {
        let mut w = v.to_vec();
        w.resize(lo.max(w.len()), 0);
        w.truncate(lo);
        w
    };
    let modulus = truncate(&basis.modulus);
    let hats: Vec<Vec<u64>> = basis.hat.iter().map(|h| truncate(h)).collect();
    let inv_p: Vec<f64> = basis.primes.iter().map(|&p| 1.0 / p as f64).collect();
    let raw = out.raw_mut();
    // x = Σ y_i·(P/p_i) − α·P with y_i = r_i·(P/p_i)⁻¹ mod p_i and
    // α = round(Σ y_i/p_i). The basis keeps |x| < P/4, so the float estimate
    // of α is exact and x comes out already centered.
    for (c, acc) in raw.chunks_exact_mut(lo).enumerate() {
        acc.fill(0);
        let mut frac = 0.0f64;
        for i in 0..t {
            let p = basis.primes[i];
            let (w, ws) = basis.hat_inv[i];
            let y = mul_shoup(rows[i][c], w, ws, p);
            frac += y as f64 * inv_p[i];
            mul_add(acc, &hats[i], y);
        }
        let alpha = frac.round() as u64;
        mul_sub(acc, &modulus, alpha);
    }
    out.mask();
    out
}

/// `acc += v·y` modulo `2^(64·acc.len())`.
#[inline]
fn mul_add(acc: &mut [u64], v: &[u64], y: u64) {
    let mut carry = 0u128;
    for (a, &b) in acc.iter_mut().zip(v) {
        let t = *a as u128 + b as u128 * y as u128 + carry;
        *a = t as u64;
        carry = t >> 64;
    }
}

/// `acc -= v·y` modulo `2^(64·acc.len())`.
#[inline]
fn mul_sub(acc: &mut [u64], v: &[u64], y: u64) {
    let mut borrow = 0u128;
    for (a, &b) in acc.iter_mut().zip(v) {
        let t = b as u128 * y as u128 + borrow;
        let (d, under) = a.overflowing_sub(t as u64);
        *a = d;
        borrow = (t >> 64) + under as u128;
    }
}
