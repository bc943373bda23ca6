//! Serde adapter for big integers as lowercase hex strings.

use num_bigint::BigUint;
use serde::{de, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_str_radix(16))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
    let s = String::deserialize(d)?;
    if s.is_empty() || (s.len() > 1 && s.starts_with('0')) {
        return Err(de::Error::custom(format!(
            "non-canonical hex integer {s:?}"
        )));
    }
    if !s
        .bytes()
        .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        return Err(de::Error::custom(format!("{s:?} is not lowercase hex")));
    }
    BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(|| de::Error::custom("bad hex integer"))
}
