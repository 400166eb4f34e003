//! Canonical text encodings: residues as lowercase hex without leading zeros
//! ("0" for zero), binary blobs as standard base64.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_bigint::BigUint;

use crate::error::{Error, Result};

pub fn to_hex(v: &BigUint) -> String {
    v.to_str_radix(16)
}

/// Parses a canonical residue: non-empty, lowercase, no leading zeros.
pub fn from_hex(s: &str) -> Result<BigUint> {
    let canonical = !s.is_empty()
        && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
        && (s == "0" || !s.starts_with('0'));
    if !canonical {
        return Err(Error::malformed(format!("non-canonical hex residue {s:?}")));
    }
    BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(|| Error::malformed(s.to_string()))
}

/// Big-endian bytes left-padded with zeros to `width`.
pub fn be_fixed(v: &BigUint, width: usize) -> Vec<u8> {
    let bytes = v.to_bytes_be();
    let bytes: &[u8] = if bytes == [0] { &[] } else { &bytes };
    assert!(bytes.len() <= width, "value wider than {width} bytes");
    let mut out = vec![0u8; width - bytes.len()];
    out.extend_from_slice(bytes);
    out
}

pub fn b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn from_b64(s: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(s)
        .map_err(|e| Error::malformed(format!("base64: {e}")))
}

pub mod hex_num {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_hex(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        super::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub mod hex_vec {
    use num_bigint::BigUint;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&super::to_hex(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| super::from_hex(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod b64_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::b64(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::from_b64(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_hex() {
        assert_eq!(to_hex(&BigUint::from(0u32)), "0");
        assert_eq!(to_hex(&BigUint::from(22u32)), "16");
        assert_eq!(to_hex(&BigUint::from(0xabcdu32)), "abcd");
        assert_eq!(from_hex("16").unwrap(), BigUint::from(22u32));
        assert_eq!(from_hex("0").unwrap(), BigUint::from(0u32));
        for bad in ["", "016", "00", "AB", "0x10", "g", " 1"] {
            assert!(from_hex(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn fixed_width() {
        assert_eq!(be_fixed(&BigUint::from(22u32), 1), vec![0x16]);
        assert_eq!(be_fixed(&BigUint::from(0u32), 2), vec![0, 0]);
        assert_eq!(
            be_fixed(&BigUint::from(0x1234u32), 4),
            vec![0, 0, 0x12, 0x34]
        );
    }

    proptest! {
        #[test]
        fn hex_roundtrip(bytes in proptest::collection::vec(any::<u8>(), 0..40)) {
            let v = BigUint::from_bytes_be(&bytes);
            prop_assert_eq!(from_hex(&to_hex(&v)).unwrap(), v);
        }
    }
}
