//! Simulation and design verification for an active clamp forward converter
//! built around a coreless PCB transformer.

pub mod converter;
pub mod design;
pub mod error;
pub mod transformer;

pub use error::{Error, Result};

/// JSON number, or its textual form (`NaN`, `inf`) when it has no JSON representation.
pub fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or_else(|| serde_json::Value::String(v.to_string()))
}
