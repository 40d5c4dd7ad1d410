//! Canonical JSON: object keys sorted by code point, no insignificant
//! whitespace, integers only. Used for every hashed or signed structure and
//! for every file the workspace writes.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("floating-point numbers cannot be canonicalized: {0}")]
    Float(String),
    #[error("map keys must be text: {0}")]
    NonTextKey(String),
    #[error("not canonical JSON: {0}")]
    Parse(String),
    #[error("input is valid JSON but not in canonical form")]
    NotCanonical,
}

pub fn canonical_serialize(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(128);
    write_value(value, &mut out)?;
    Ok(out)
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                return Err(CanonicalError::Float(n.to_string()));
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            // UTF-8 byte order equals code point order
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(k, out);
                out.push(b':');
                write_value(v, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    let quoted = serde_json::to_string(s).expect("string serialization is infallible");
    out.extend_from_slice(quoted.as_bytes());
}

/// Canonical bytes of any serializable value.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let v = serde_json::to_value(value).map_err(|e| {
        let msg = e.to_string();
        if msg.contains("key must be a string") {
            CanonicalError::NonTextKey(msg)
        } else {
            CanonicalError::Parse(msg)
        }
    })?;
    canonical_serialize(&v)
}

/// Canonical form as a `String`. Canonical output is always UTF-8.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    to_canonical(value).map(|b| String::from_utf8(b).expect("canonical JSON is UTF-8"))
}

pub fn parse(bytes: &[u8]) -> Result<Value, CanonicalError> {
    let v: Value =
        serde_json::from_slice(bytes).map_err(|e| CanonicalError::Parse(e.to_string()))?;
    // reject floats eagerly
    canonical_serialize(&v)?;
    Ok(v)
}

/// Parses `bytes` into `T`, insisting the input is already byte-for-byte canonical.
pub fn from_canonical<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    let v = parse(bytes)?;
    if canonical_serialize(&v)? != bytes {
        return Err(CanonicalError::NotCanonical);
    }
    serde_json::from_value(v).map_err(|e| CanonicalError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::collections::HashMap;

    #[test]
    fn sorts_keys() {
        let v: Value = serde_json::from_str(r#"{"b":1,"a":2}"#).unwrap();
        assert_eq!(canonical_serialize(&v).unwrap(), br#"{"a":2,"b":1}"#);
    }

    #[test]
    fn rejects_floats() {
        assert!(matches!(
            canonical_serialize(&json!({"x": [1, 1.5]})),
            Err(CanonicalError::Float(_))
        ));
        assert!(parse(b"1.0").is_err());
    }

    #[test]
    fn rejects_non_text_keys() {
        let mut m = HashMap::new();
        m.insert(vec![1u8], 1);
        assert!(matches!(
            to_canonical(&m),
            Err(CanonicalError::NonTextKey(_))
        ));
    }

    #[test]
    fn code_point_order_and_escapes() {
        let v = json!({"é": 1, "z": 2, "A": 3, "q\"": "line\nbreak"});
        assert_eq!(
            String::from_utf8(canonical_serialize(&v).unwrap()).unwrap(),
            "{\"A\":3,\"q\\\"\":\"line\\nbreak\",\"z\":2,\"é\":1}"
        );
    }

    #[test]
    fn integers_shortest_form() {
        let v: Value =
            serde_json::from_str("[0, 18446744073709551615, -9223372036854775808]").unwrap();
        assert_eq!(
            canonical_serialize(&v).unwrap(),
            b"[0,18446744073709551615,-9223372036854775808]"
        );
    }

    #[test]
    fn from_canonical_rejects_whitespace() {
        assert_eq!(
            from_canonical::<Value>(br#"{"a":1}"#).unwrap(),
            json!({"a":1})
        );
        assert_eq!(
            from_canonical::<Value>(br#"{"a": 1}"#),
            Err(CanonicalError::NotCanonical)
        );
    }

    fn arb_value() -> impl proptest::strategy::Strategy<Value = Value> {
        use proptest::prelude::*;
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i64>().prop_map(Value::from),
            ".{0,12}".prop_map(Value::String),
        ];
        leaf.prop_recursive(4, 48, 6, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
                proptest::collection::btree_map(".{0,8}", inner, 0..6)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    proptest::proptest! {
        #[test]
        fn serialize_parse_serialize_is_stable(v in arb_value()) {
            let once = canonical_serialize(&v).unwrap();
            let reparsed = parse(&once).unwrap();
            proptest::prop_assert_eq!(&reparsed, &v);
            proptest::prop_assert_eq!(canonical_serialize(&reparsed).unwrap(), once);
        }
    }
}
