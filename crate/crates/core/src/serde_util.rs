//! Small serde helpers.

/// Serialize a `BTreeMap` as a sequence of pairs. JSON maps require
/// string keys; structured keys (enums with payloads) round-trip cleanly
/// as pair lists instead.
pub mod map_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K, V, S>(map: &BTreeMap<K, V>, ser: S) -> Result<S::Ok, S::Error>
    where
        K: Serialize,
        V: Serialize,
        S: Serializer,
    {
        ser.collect_seq(map.iter())
    }

    pub fn deserialize<'de, K, V, D>(de: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        let pairs: Vec<(K, V)> = Vec::deserialize(de)?;
        Ok(pairs.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Serialize};

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Holder {
        #[serde(with = "super::map_pairs")]
        inner: BTreeMap<(u32, u32), f64>,
    }

    #[test]
    fn structured_keys_round_trip() {
        let mut inner = BTreeMap::new();
        inner.insert((1, 2), 0.5);
        inner.insert((0, 9), -1.25);
        let h = Holder { inner };
        let text = serde_json::to_string(&h).unwrap();
        let back: Holder = serde_json::from_str(&text).unwrap();
        assert_eq!(h, back);
    }
}
