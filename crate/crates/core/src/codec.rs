//! Hex text encodings for big integers in JSON artifacts.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::Num;

pub fn biguint_to_hex(v: &BigUint) -> String {
    v.to_str_radix(16)
}

pub fn biguint_from_hex(s: &str) -> Result<BigUint, String> {
    if s.is_empty() || s.starts_with('-') || s.starts_with('+') {
        return Err(format!("not an unsigned hex integer: {s:?}"));
    }
    BigUint::from_str_radix(s, 16).map_err(|e| format!("bad hex integer {s:?}: {e}"))
}

/// `-` prefix for negatives, lowercase digits.
pub fn bigint_to_hex(v: &BigInt) -> String {
    match v.sign() {
        Sign::Minus => format!("-{}", v.magnitude().to_str_radix(16)),
        _ => v.magnitude().to_str_radix(16),
    }
}

pub fn bigint_from_hex(s: &str) -> Result<BigInt, String> {
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let magnitude = biguint_from_hex(digits)?;
    Ok(if negative { -BigInt::from(magnitude) } else { BigInt::from(magnitude) })
}

/// `#[serde(with = "crate::codec::hex_biguint")]`
pub mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::biguint_to_hex(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        super::biguint_from_hex(&text).map_err(D::Error::custom)
    }
}
