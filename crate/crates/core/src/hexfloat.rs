//! Bit-exact f64 serialization as little-endian hex strings.

use serde::{Deserialize, Deserializer, Serializer};

pub fn encode(x: f64) -> String {
    hex::encode(x.to_le_bytes())
}

pub fn decode(s: &str) -> Result<f64, String> {
    let bytes = hex::decode(s).map_err(|e| format!("bad hex float {s:?}: {e}"))?;
    let arr: [u8; 8] = bytes
        .try_into()
        .map_err(|_| format!("hex float {s:?} is not 8 bytes"))?;
    Ok(f64::from_le_bytes(arr))
}

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&encode(*x))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let s = String::deserialize(d)?;
    decode(&s).map_err(serde::de::Error::custom)
}

pub mod vec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&super::encode(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| super::decode(s).map_err(serde::de::Error::custom))
            .collect()
    }
}
