//! Canonical hexadecimal encoding for big integers: lowercase, big-endian,
//! no leading zeros, and `"0"` for zero.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HexError {
    Empty,
    LeadingZero,
    NonCanonicalDigit(char),
}

impl fmt::Display for HexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HexError::Empty => write!(f, "empty hex string"),
            HexError::LeadingZero => write!(f, "hex has a leading zero"),
            HexError::NonCanonicalDigit(c) => {
                write!(f, "hex digit {c:?} is not lowercase 0-9a-f")
            }
        }
    }
}

impl std::error::Error for HexError {}

pub fn to_hex(value: &BigUint) -> String {
    value.to_str_radix(16)
}

pub fn from_hex(text: &str) -> Result<BigUint, HexError> {
    if text.is_empty() {
        return Err(HexError::Empty);
    }
    if let Some(c) = text.chars().find(|c| !matches!(c, '0'..='9' | 'a'..='f')) {
        return Err(HexError::NonCanonicalDigit(c));
    }
    if text.len() > 1 && text.starts_with('0') {
        return Err(HexError::LeadingZero);
    }
    let value = BigUint::parse_bytes(text.as_bytes(), 16).unwrap_or_else(BigUint::zero);
    Ok(value)
}

/// A big integer that (de)serializes as canonical hex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HexBig(pub BigUint);

impl Serialize for HexBig {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&to_hex(&self.0))
    }
}

impl<'de> Deserialize<'de> for HexBig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct HexVisitor;

        impl Visitor<'_> for HexVisitor {
            type Value = HexBig;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a canonical lowercase hex string")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<HexBig, E> {
                from_hex(v).map(HexBig).map_err(E::custom)
            }
        }

        deserializer.deserialize_str(HexVisitor)
    }
}

/// `#[serde(with = "hex_biguint")]` for `BigUint` fields.
pub mod hex_biguint {
    use super::*;

    pub fn serialize<S: Serializer>(value: &BigUint, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&to_hex(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<BigUint, D::Error> {
        HexBig::deserialize(deserializer).map(|h| h.0)
    }
}

/// `#[serde(with = "hex_biguint_vec")]` for `Vec<BigUint>` fields.
pub mod hex_biguint_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(values: &[BigUint], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&to_hex(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<BigUint>, D::Error> {
        Vec::<HexBig>::deserialize(deserializer).map(|v| v.into_iter().map(|h| h.0).collect())
    }
}

/// `#[serde(with = "hex_bytes")]` for byte strings; lowercase only, two
/// digits per byte.
pub mod hex_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(deserializer)?;
        if let Some(c) = text.chars().find(|c| !matches!(c, '0'..='9' | 'a'..='f')) {
            return Err(de::Error::custom(HexError::NonCanonicalDigit(c)));
        }
        hex::decode(&text).map_err(de::Error::custom)
    }
}
