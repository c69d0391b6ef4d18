//! Elements of `Z_{2^k}[X]/(X^d + 1)` stored as flat little-endian limb
//! arrays. Every coefficient is kept reduced modulo `2^k`; the "value" of a
//! coefficient is its centered representative in `[-2^{k-1}, 2^{k-1})`.

use num_bigint::{BigInt, Sign};
use rand::RngCore;

use super::ntt;

/// Below this degree products use the schoolbook convolution.
pub const NTT_THRESHOLD: usize = 1024;

pub(crate) fn limbs_for(bits: u32) -> usize {
    (bits as usize).div_ceil(64)
}

fn top_mask(bits: u32) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Poly {
    degree: usize,
    bits: u32,
    limbs: usize,
    coeffs: Vec<u64>,
}

impl std::fmt::Debug for Poly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Poly(d={}, mod 2^{})", self.degree, self.bits)
    }
}

impl Poly {
    pub fn zero(degree: usize, bits: u32) -> Self {
        assert!(bits > 0, "modulus must be at least 2");
        let limbs = limbs_for(bits);
        Poly { degree, bits, limbs, coeffs: vec![0; degree * limbs] }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `k` in the modulus `2^k`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn limbs(&self) -> usize {
        self.limbs
    }

    pub fn coeff(&self, i: usize) -> &[u64] {
        &self.coeffs[i * self.limbs..(i + 1) * self.limbs]
    }

    fn coeff_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.coeffs[i * self.limbs..(i + 1) * self.limbs]
    }

    pub(crate) fn mask(&mut self) {
        let m = top_mask(self.bits);
        let l = self.limbs;
        for c in self.coeffs.chunks_exact_mut(l) {
            c[l - 1] &= m;
        }
    }

    pub fn from_signed(degree: usize, bits: u32, values: &[i64]) -> Self {
        assert_eq!(values.len(), degree, "coefficient count must equal the degree");
        let mut p = Poly::zero(degree, bits);
        for (i, &v) in values.iter().enumerate() {
            let fill = if v < 0 { u64::MAX } else { 0 };
            let c = p.coeff_mut(i);
            c[0] = v as u64;
            for limb in &mut c[1..] {
                *limb = fill;
            }
        }
        p.mask();
        p
    }

    pub fn from_bigints(degree: usize, bits: u32, values: &[BigInt]) -> Self {
        assert_eq!(values.len(), degree, "coefficient count must equal the degree");
        let mut p = Poly::zero(degree, bits);
        for (i, v) in values.iter().enumerate() {
            p.set_bigint(i, v);
        }
        p
    }

    pub fn set_bigint(&mut self, i: usize, v: &BigInt) {
        let limbs = self.limbs;
        let digits = v.magnitude().to_u64_digits();
        let c = self.coeff_mut(i);
        c.fill(0);
        for (dst, src) in c.iter_mut().zip(digits.iter()) {
            *dst = *src;
        }
        if v.sign() == Sign::Minus {
            negate_in_place(c);
        }
        let m = top_mask(self.bits);
        self.coeffs[(i + 1) * limbs - 1] &= m;
    }

    pub fn is_negative(&self, i: usize) -> bool {
        let top = self.bits - 1;
        (self.coeff(i)[(top / 64) as usize] >> (top % 64)) & 1 == 1
    }

    /// Centered value of coefficient `i`.
    pub fn centered(&self, i: usize) -> BigInt {
        let (negative, magnitude) = self.magnitude(i);
        let v = BigInt::from_biguint(Sign::Plus, num_bigint::BigUint::from_slice(&to_u32_digits(&magnitude)));
        if negative {
            -v
        } else {
            v
        }
    }

    pub fn centered_all(&self) -> Vec<BigInt> {
        (0..self.degree).map(|i| self.centered(i)).collect()
    }

    /// Centered value of coefficient `i` when it fits an `i64`.
    pub fn centered_i64(&self, i: usize) -> Option<i64> {
        let (negative, mag) = self.magnitude(i);
        if mag[1..].iter().any(|&l| l != 0) || mag[0] > i64::MAX as u64 {
            return None;
        }
        Some(if negative { -(mag[0] as i64) } else { mag[0] as i64 })
    }

    /// Sign and absolute value (as `limbs` limbs) of the centered coefficient.
    fn magnitude(&self, i: usize) -> (bool, Vec<u64>) {
        let mut mag = self.coeff(i).to_vec();
        let negative = self.is_negative(i);
        if negative {
            negate_in_place(&mut mag);
            let l = mag.len();
            mag[l - 1] &= top_mask(self.bits);
        }
        (negative, mag)
    }

    /// Bit length of the largest centered magnitude.
    pub fn magnitude_bits(&self) -> u32 {
        (0..self.degree).map(|i| bit_length(&self.magnitude(i).1)).max().unwrap_or(0)
    }

    fn assert_compatible(&self, other: &Poly) {
        assert_eq!(self.degree, other.degree, "ring degree mismatch");
        assert_eq!(self.bits, other.bits, "modulus mismatch");
    }

    pub fn add(&self, other: &Poly) -> Poly {
        self.assert_compatible(other);
        let mut out = self.clone();
        for (a, b) in out.coeffs.chunks_exact_mut(self.limbs).zip(other.coeffs.chunks_exact(self.limbs)) {
            add_in_place(a, b);
        }
        out.mask();
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.assert_compatible(other);
        let mut out = self.clone();
        for (a, b) in out.coeffs.chunks_exact_mut(self.limbs).zip(other.coeffs.chunks_exact(self.limbs)) {
            sub_in_place(a, b);
        }
        out.mask();
        out
    }

    pub fn neg(&self) -> Poly {
        let mut out = self.clone();
        for c in out.coeffs.chunks_exact_mut(self.limbs) {
            negate_in_place(c);
        }
        out.mask();
        out
    }

    /// Plain reduction into the smaller modulus `2^bits`.
    pub fn reduce(&self, bits: u32) -> Poly {
        assert!(bits <= self.bits, "cannot reduce into a larger modulus");
        let mut out = Poly::zero(self.degree, bits);
        for i in 0..self.degree {
            let src = &self.coeff(i)[..out.limbs];
            out.coeff_mut(i).copy_from_slice(src);
        }
        out.mask();
        out
    }

    /// Lifts centered values into the larger modulus `2^bits`.
    pub fn lift(&self, bits: u32) -> Poly {
        assert!(bits >= self.bits, "cannot lift into a smaller modulus");
        let mut out = Poly::zero(self.degree, bits);
        for i in 0..self.degree {
            let fill = if self.is_negative(i) { u64::MAX } else { 0 };
            let src = self.coeff(i).to_vec();
            let dst = out.coeff_mut(i);
            dst.fill(fill);
            dst[..src.len()].copy_from_slice(&src);
            if fill != 0 && !self.bits.is_multiple_of(64) {
                dst[src.len() - 1] |= !top_mask(self.bits);
            }
        }
        out.mask();
        out
    }

    /// Centered values multiplied by `2^shift`, reduced modulo `2^bits`.
    pub fn shl(&self, shift: u32, bits: u32) -> Poly {
        let lifted = self.lift(self.bits.max(bits));
        let mut out = Poly::zero(self.degree, bits);
        let (word, bit) = ((shift / 64) as usize, shift % 64);
        for i in 0..self.degree {
            let src = lifted.coeff(i);
            let dst = out.coeff_mut(i);
            for k in (0..dst.len()).rev() {
                if k < word {
                    dst[k] = 0;
                    continue;
                }
                let j = k - word;
                let lo = src.get(j).copied().unwrap_or(0);
                let carry = if bit > 0 && j > 0 { src.get(j - 1).copied().unwrap_or(0) >> (64 - bit) } else { 0 };
                dst[k] = if bit > 0 { (lo << bit) | carry } else { lo };
            }
        }
        out.mask();
        out
    }

    /// `⌊c / 2^shift⌉` on centered values with halves rounded away from zero,
    /// landing in the modulus `2^(bits - shift)`.
    pub fn round_shift(&self, shift: u32) -> Poly {
        assert!(shift > 0 && shift < self.bits, "shift must leave a nonzero modulus");
        let out_bits = self.bits - shift;
        let mut out = Poly::zero(self.degree, out_bits);
        let (word, bit) = ((shift / 64) as usize, shift % 64);
        let mut half = vec![0u64; self.limbs];
        half[((shift - 1) / 64) as usize] = 1u64 << ((shift - 1) % 64);
        for i in 0..self.degree {
            let (negative, mut mag) = self.magnitude(i);
            mag.push(0);
            let mut h = half.clone();
            h.push(0);
            add_in_place(&mut mag, &h);
            let dst = out.coeff_mut(i);
            for (k, slot) in dst.iter_mut().enumerate() {
                let lo = mag.get(k + word).copied().unwrap_or(0);
                let hi = mag.get(k + word + 1).copied().unwrap_or(0);
                *slot = if bit == 0 { lo } else { (lo >> bit) | (hi << (64 - bit)) };
            }
            if negative {
                negate_in_place(dst);
            }
        }
        out.mask();
        out
    }

    pub fn uniform<R: RngCore + ?Sized>(degree: usize, bits: u32, rng: &mut R) -> Poly {
        let mut p = Poly::zero(degree, bits);
        for limb in p.coeffs.iter_mut() {
            *limb = rng.next_u64();
        }
        p.mask();
        p
    }

    /// Negacyclic product of the centered representatives, reduced modulo
    /// `2^out_bits`.
    pub fn mul(&self, other: &Poly, out_bits: u32) -> Poly {
        assert_eq!(self.degree, other.degree, "ring degree mismatch");
        if self.degree < NTT_THRESHOLD {
            self.mul_schoolbook(other, out_bits)
        } else {
            self.mul_ntt(other, out_bits)
        }
    }

    pub fn mul_ntt(&self, other: &Poly, out_bits: u32) -> Poly {
        let bound = self.magnitude_bits() + other.magnitude_bits() + log2(self.degree);
        let basis = ntt::basis_for(bound, self.degree);
        let mut a = ntt::forward(self, &basis);
        let b = ntt::forward(other, &basis);
        a.mul_assign(&b, &basis);
        ntt::inverse(&a, &basis, out_bits)
    }

    pub fn mul_schoolbook(&self, other: &Poly, out_bits: u32) -> Poly {
        assert_eq!(self.degree, other.degree, "ring degree mismatch");
        let n = self.degree;
        let mut out = Poly::zero(n, out_bits);
        let lo = out.limbs;
        let split = |p: &Poly| -> Vec<(bool, Vec<u64>)> {
            (0..n)
                .map(|i| {
                    let (neg, mut mag) = p.magnitude(i);
                    mag.resize(lo, 0);
                    (neg, mag)
                })
                .collect()
        };
        let (a, b) = (split(self), split(other));
        let mut prod = vec![0u64; lo];
        for (i, (sa, ma)) in a.iter().enumerate() {
            if ma.iter().all(|&l| l == 0) {
                continue;
            }
            for (j, (sb, mb)) in b.iter().enumerate() {
                mul_truncated(ma, mb, &mut prod);
                let mut negative = sa ^ sb;
                let mut k = i + j;
                if k >= n {
                    k -= n;
                    negative = !negative;
                }
                let dst = out.coeff_mut(k);
                if negative {
                    sub_in_place(dst, &prod);
                } else {
                    add_in_place(dst, &prod);
                }
            }
        }
        out.mask();
        out
    }

    /// Centered coefficients as sign-prefixed lowercase hex.
    pub fn to_hex(&self) -> Vec<String> {
        (0..self.degree)
            .map(|i| {
                let (negative, mag) = self.magnitude(i);
                let mut s = String::with_capacity(mag.len() * 16 + 1);
                if negative {
                    s.push('-');
                }
                match mag.iter().rposition(|&l| l != 0) {
                    None => s.push('0'),
                    Some(top) => {
                        s.push_str(&format!("{:x}", mag[top]));
                        for limb in mag[..top].iter().rev() {
                            s.push_str(&format!("{limb:016x}"));
                        }
                    }
                }
                s
            })
            .collect()
    }

    pub fn from_hex(bits: u32, coeffs: &[String]) -> Result<Poly, String> {
        let degree = coeffs.len();
        if degree == 0 || !degree.is_power_of_two() {
            return Err(format!("ring degree {degree} is not a power of two"));
        }
        let mut p = Poly::zero(degree, bits);
        for (i, text) in coeffs.iter().enumerate() {
            let (negative, digits) = match text.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, text.as_str()),
            };
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(format!("coefficient {i}: bad hex {text:?}"));
            }
            let digits = digits.trim_start_matches('0');
            let mut mag = vec![0u64; digits.len().div_ceil(16).max(1)];
            for (k, chunk) in digits.as_bytes().rchunks(16).enumerate() {
                let s = std::str::from_utf8(chunk).expect("ascii");
                mag[k] = u64::from_str_radix(s, 16).map_err(|e| e.to_string())?;
            }
            // Centered values lie in [-2^{k-1}, 2^{k-1}).
            let len = bit_length(&mag);
            let is_half = len == bits && mag.iter().map(|l| l.count_ones()).sum::<u32>() == 1;
            if len >= bits && !(negative && is_half) {
                return Err(format!("coefficient {i} exceeds the 2^{bits} modulus"));
            }
            mag.resize(p.limbs, 0);
            let dst = p.coeff_mut(i);
            dst.copy_from_slice(&mag);
            if negative {
                negate_in_place(dst);
            }
        }
        p.mask();
        Ok(p)
    }

    pub(crate) fn raw(&self) -> &[u64] {
        &self.coeffs
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [u64] {
        &mut self.coeffs
    }
}

pub(crate) fn log2(n: usize) -> u32 {
    usize::BITS - 1 - n.leading_zeros()
}

fn bit_length(limbs: &[u64]) -> u32 {
    match limbs.iter().rposition(|&l| l != 0) {
        None => 0,
        Some(pos) => 64 * pos as u32 + (64 - limbs[pos].leading_zeros()),
    }
}

fn to_u32_digits(limbs: &[u64]) -> Vec<u32> {
    limbs.iter().flat_map(|&l| [l as u32, (l >> 32) as u32]).collect()
}

pub(crate) fn add_in_place(a: &mut [u64], b: &[u64]) {
    let mut carry = false;
    for (x, &y) in a.iter_mut().zip(b.iter()) {
        let (s1, c1) = x.overflowing_add(y);
        let (s2, c2) = s1.overflowing_add(carry as u64);
        *x = s2;
        carry = c1 | c2;
    }
}

pub(crate) fn sub_in_place(a: &mut [u64], b: &[u64]) {
    let mut borrow = false;
    for (x, &y) in a.iter_mut().zip(b.iter()) {
        let (d1, b1) = x.overflowing_sub(y);
        let (d2, b2) = d1.overflowing_sub(borrow as u64);
        *x = d2;
        borrow = b1 | b2;
    }
}

pub(crate) fn negate_in_place(a: &mut [u64]) {
    let mut carry = true;
    for x in a.iter_mut() {
        let (s, c) = (!*x).overflowing_add(carry as u64);
        *x = s;
        carry = c;
    }
}

/// `out = a · b mod 2^(64·out.len())`.
fn mul_truncated(a: &[u64], b: &[u64], out: &mut [u64]) {
    out.fill(0);
    let n = out.len();
    for (i, &x) in a.iter().enumerate().take(n) {
        if x == 0 {
            continue;
        }
        let mut carry = 0u128;
        for (j, &y) in b.iter().enumerate().take(n - i) {
            let t = x as u128 * y as u128 + out[i + j] as u128 + carry;
            out[i + j] = t as u64;
            carry = t >> 64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn oracle(a: &Poly, b: &Poly, bits: u32) -> Vec<BigInt> {
        let n = a.degree();
        let (x, y) = (a.centered_all(), b.centered_all());
        let mut acc = vec![BigInt::zero(); n];
        for i in 0..n {
            for j in 0..n {
                let t = &x[i] * &y[j];
                if i + j < n {
                    acc[i + j] += t;
                } else {
                    acc[i + j - n] -= t;
                }
            }
        }
        let m = BigInt::from(1u8) << bits;
        acc.into_iter()
            .map(|v| {
                let mut r = ((v % &m) + &m) % &m;
                if r >= (&m >> 1usize) {
                    r -= &m;
                }
                r
            })
            .collect()
    }

    #[test]
    fn signed_round_trip() {
        let p = Poly::from_signed(4, 70, &[-1, 0, 5, i64::MIN]);
        assert_eq!(p.centered(0), BigInt::from(-1));
        assert_eq!(p.centered(2), BigInt::from(5));
        assert_eq!(p.centered(3), BigInt::from(i64::MIN));
        assert_eq!(p.centered_i64(0), Some(-1));
        assert_eq!(p.magnitude_bits(), 64);
        let q = Poly::from_bigints(4, 70, &p.centered_all());
        assert_eq!(p, q);
    }

    #[test]
    fn ring_identities() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = Poly::uniform(16, 130, &mut rng);
        let b = Poly::uniform(16, 130, &mut rng);
        assert_eq!(a.add(&b).sub(&b), a);
        assert_eq!(a.add(&a.neg()), Poly::zero(16, 130));
        assert_eq!(a.reduce(70), Poly::from_bigints(16, 70, &a.centered_all()));
        assert_eq!(a.reduce(70).lift(130).reduce(70), a.reduce(70));
    }

    #[test]
    fn x_to_the_d_is_minus_one() {
        let n = 8;
        let mut x = vec![0i64; n];
        x[n - 1] = 1;
        let mut y = vec![0i64; n];
        y[1] = 1;
        let prod = Poly::from_signed(n, 64, &x).mul(&Poly::from_signed(n, 64, &y), 64);
        let mut expected = vec![0i64; n];
        expected[0] = -1;
        assert_eq!(prod, Poly::from_signed(n, 64, &expected));
    }

    #[test]
    fn schoolbook_matches_bigint_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for (n, bits) in [(8usize, 64u32), (8, 100), (64, 200), (64, 61)] {
            let a = Poly::uniform(n, bits, &mut rng);
            let b = Poly::uniform(n, bits, &mut rng);
            let got = a.mul_schoolbook(&b, bits).centered_all();
            assert_eq!(got, oracle(&a, &b, bits), "n={n} bits={bits}");
        }
    }

    #[test]
    fn ntt_matches_schoolbook() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for (n, bits) in [(8usize, 60u32), (64, 200), (256, 460)] {
            let a = Poly::uniform(n, bits, &mut rng);
            let b = Poly::uniform(n, bits, &mut rng);
            assert_eq!(a.mul_ntt(&b, bits), a.mul_schoolbook(&b, bits), "n={n}");
        }
        // small operand, large output modulus
        let s = Poly::from_signed(64, 2, &(0..64).map(|i| (i % 3) as i64 - 1).collect::<Vec<_>>());
        let a = Poly::uniform(64, 300, &mut rng);
        assert_eq!(a.mul_ntt(&s, 300), a.mul_schoolbook(&s, 300));
        assert_eq!(s.mul_ntt(&s, 40), s.mul_schoolbook(&s, 40));
    }

    #[test]
    fn ntt_matches_oracle_at_4096() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = Poly::uniform(4096, 100, &mut rng);
        let b = Poly::uniform(4096, 100, &mut rng);
        let got = a.mul(&b, 100);
        // spot-check coefficients against the direct convolution sum
        let (x, y) = (a.centered_all(), b.centered_all());
        let m = BigInt::from(1u8) << 100usize;
        for k in [0usize, 1, 2047, 4095] {
            let mut acc = BigInt::zero();
            for i in 0..4096 {
                let j = (k + 4096 - i) % 4096;
                let t = &x[i] * &y[j];
                if i <= k {
                    acc += t;
                } else {
                    acc -= t;
                }
            }
            let mut r = ((acc % &m) + &m) % &m;
            if r >= (&m >> 1usize) {
                r -= &m;
            }
            assert_eq!(got.centered(k), r, "k={k}");
        }
    }

    #[test]
    fn rounding_shift_is_half_away_from_zero() {
        let p = Poly::from_signed(8, 20, &[7, 8, 9, -7, -8, -9, 16, -16]);
        let r = p.round_shift(4);
        let got: Vec<i64> = (0..8).map(|i| r.centered_i64(i).unwrap()).collect();
        assert_eq!(got, vec![0, 1, 1, 0, -1, -1, 1, -1]);
        assert_eq!(r.bits(), 16);
        // crossing limb boundaries
        let big = Poly::from_bigints(
            2,
            200,
            &[BigInt::from(3) << 100usize, -(BigInt::from(5) << 99usize)],
        );
        let s = big.round_shift(100);
        assert_eq!(s.centered(0), BigInt::from(3));
        assert_eq!(s.centered(1), BigInt::from(-3));
    }

    #[test]
    fn shl_scales() {
        let p = Poly::from_signed(2, 8, &[3, -2]);
        let s = p.shl(70, 100);
        assert_eq!(s.centered(0), BigInt::from(3) << 70usize);
        assert_eq!(s.centered(1), -(BigInt::from(2) << 70usize));
    }

    #[test]
    fn hex_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let p = Poly::uniform(16, 130, &mut rng);
        let text = p.to_hex();
        assert_eq!(Poly::from_hex(130, &text).unwrap(), p);
        let small = Poly::from_signed(2, 8, &[-26, 0]);
        assert_eq!(small.to_hex(), vec!["-1a".to_string(), "0".to_string()]);
        assert!(Poly::from_hex(8, &["200".into(), "0".into()]).is_err());
        assert!(Poly::from_hex(8, &["zz".into(), "0".into()]).is_err());
    }
}
