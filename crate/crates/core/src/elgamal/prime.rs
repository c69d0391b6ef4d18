//! Primality testing and safe-prime generation.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use super::random_below;

/// 3072-bit safe prime of the MODP group from RFC 3526 (generator 2).
/// Its primality and that of `(p-1)/2` are re-checked whenever it is loaded.
const SAFE_PRIME_3072_HEX: [&str; 12] = [
    "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74",
    "020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f1437",
    "4fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7ed",
    "ee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf05",
    "98da48361c55d39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb",
    "9ed529077096966d670c354e4abc9804f1746c08ca18217c32905e462e36ce3b",
    "e39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9de2bcbf695581718",
    "3995497cea956ae515d2261898fa051015728e5a8aaac42dad33170d04507a33",
    "a85521abdf1cba64ecfb850458dbef0a8aea71575d060c7db3970f85a6e1e4c7",
    "abf5ae8cdb0933d71e8c94e04a25619dcee3d2261ad2ee6bf12ffa06d98a0864",
    "d87602733ec86a64521f2b18177b200cbbe117577a615d6c770988c0bad946e2",
    "08e24fa074e5ab3143db5bfce0fd108e4b82d120a93ad2caffffffffffffffff",
];

pub fn cached_safe_prime_3072() -> BigUint {
    BigUint::parse_bytes(SAFE_PRIME_3072_HEX.concat().as_bytes(), 16).expect("valid hex constant")
}

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller–Rabin with `rounds` random bases after trial division.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &sp in std::iter::once(&2u32).chain(SMALL_PRIMES.iter()) {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let odd = &n_minus_one >> shift;
    let base_span = n - 3u32;
    'witness: for _ in 0..rounds {
        let a = random_below(&base_span, rng) + 2u32;
        let mut x = a.modpow(&odd, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Checks `p = 2q + 1` with both factors prime.
pub fn is_safe_prime<R: RngCore + ?Sized>(p: &BigUint, rounds: usize, rng: &mut R) -> bool {
    if p < &BigUint::from(5u32) || p.is_even() {
        return false;
    }
    let q = p >> 1;
    is_probable_prime(&q, rounds, rng) && is_probable_prime(p, rounds, rng)
}

/// Searches for a safe prime of exactly `bits` bits, giving up after
/// `max_candidates` sieved candidates.
pub fn generate_safe_prime<R: RngCore + ?Sized>(
    bits: u64,
    max_candidates: u64,
    rng: &mut R,
) -> Option<BigUint> {
    assert!(bits >= 3, "safe primes need at least 3 bits");
    let q_bits = bits - 1;
    for _ in 0..max_candidates {
        let mut q = random_bits(q_bits, rng);
        q.set_bit(q_bits - 1, true);
        q.set_bit(0, true);
        let p: BigUint = (&q << 1u32) + 1u32;
        if p.bits() != bits {
            continue;
        }
        // q ≡ 1 (mod 3) would make p divisible by 3, and small factors of
        // either number are cheap to rule out before Miller–Rabin.
        let sieved = SMALL_PRIMES.iter().any(|&sp| {
            let r = (&q % sp).to_u32_digits().first().copied().unwrap_or(0);
            (r == 0 && q != BigUint::from(sp)) || ((2 * r as u64 + 1).is_multiple_of(sp as u64) && p != BigUint::from(sp))
        });
        if sieved {
            continue;
        }
        if !is_probable_prime(&q, 1, rng) {
            continue;
        }
        // Pocklington: with q prime, 2^(p-1) ≡ 1 (mod p) and 2^2 ≢ 1 proves p.
        if !BigUint::from(2u32).modpow(&(&p - 1u32), &p).is_one() {
            continue;
        }
        if is_probable_prime(&q, 24, rng) {
            return Some(p);
        }
    }
    None
}

fn random_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    let bytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; bytes];
    rng.fill_bytes(&mut buf);
    let mut v = BigUint::from_bytes_le(&buf);
    let excess = bytes as u64 * 8 - bits;
    if excess > 0 {
        v >>= excess;
    }
    v
}
