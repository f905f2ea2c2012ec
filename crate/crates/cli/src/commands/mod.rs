pub mod dataset;
pub mod evaluate;
pub mod infer;
pub mod mix;
pub mod plan;
pub mod report;
pub mod weights;

use serde::de::DeserializeOwned;

/// Parses a bare word through the type's serde representation, so CLI
/// values match the JSON spelling.
pub fn serde_word<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

pub fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serialises") + "\n"
}
