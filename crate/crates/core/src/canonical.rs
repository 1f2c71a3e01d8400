//! Canonical text serialization.
//!
//! Values are rendered as compact JSON with object keys sorted bytewise,
//! integers verbatim and every non-integer number at exactly three decimal
//! places. Equal values always produce identical bytes, which is what the
//! wire protocol, the session log and map exports rely on.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("value cannot be represented canonically: {0}")]
    Encode(#[source] serde_json::Error),
    #[error("malformed canonical text: {0}")]
    Decode(#[source] serde_json::Error),
}

/// Renders `value` in canonical form.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    to_canonical_string(value).map(String::into_bytes)
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let tree = serde_json::to_value(value).map_err(CanonicalError::Encode)?;
    let mut out = String::new();
    write_value(&mut out, &tree);
    Ok(out)
}

pub fn from_canonical<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    serde_json::from_slice(bytes).map_err(CanonicalError::Decode)
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                let f = n.as_f64().unwrap_or(0.0);
                let f = if f == 0.0 { 0.0 } else { f };
                let _ = write!(out, "{f:.3}");
            }
        }
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push('{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, key);
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

fn write_string(out: &mut String, s: &str) {
    // serde_json's string escaping is already deterministic.
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use std::collections::BTreeMap;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Sample {
        zeta: u64,
        alpha: f64,
        names: BTreeMap<String, i64>,
        note: Option<String>,
    }

    #[test]
    fn keys_are_sorted_and_floats_fixed() {
        let s = Sample {
            zeta: 3,
            alpha: 2.5,
            names: [("b".to_string(), -1), ("a".to_string(), 7)].into(),
            note: Some("quote \" and \n".into()),
        };
        let text = to_canonical_string(&s).unwrap();
        assert_eq!(
            text,
            r#"{"alpha":2.500,"names":{"a":7,"b":-1},"note":"quote \" and \n","zeta":3}"#
        );
        let back: Sample = from_canonical(text.as_bytes()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn negative_zero_is_folded() {
        assert_eq!(to_canonical_string(&-0.0f64).unwrap(), "0.000");
    }

    #[test]
    fn truncated_text_is_rejected() {
        let err = from_canonical::<Sample>(br#"{"alpha":1.000,"#).unwrap_err();
        assert!(matches!(err, CanonicalError::Decode(_)));
    }
}
