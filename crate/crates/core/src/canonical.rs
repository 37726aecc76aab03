//! JSON in and out. Output is canonical: object keys sorted, compact
//! separators, shortest round-trip float formatting, one trailing newline.
//! Golden files and CLI/service parity compare these bytes directly.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Strict parse; shape errors carry the offending field path.
pub fn from_json<D: DeserializeOwned>(text: &str) -> Result<D> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => Error::SchemaViolation {
                path,
                message: inner.to_string(),
            },
            _ => Error::Syntax(inner.to_string()),
        }
    })
}

pub fn to_canonical_json<S: Serialize + ?Sized>(value: &S) -> String {
    // `Value` objects are BTreeMap-backed, so keys come out sorted
    let value = serde_json::to_value(value).expect("serializable to JSON");
    let mut out = serde_json::to_string(&value).expect("JSON value to string");
    out.push('\n');
    out
}
