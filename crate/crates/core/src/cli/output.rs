use std::path::Path;

use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::{Error, Result};

/// Significant digits kept in every float written by the CLI.
pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in a JSON tree to [`SIGNIFICANT_DIGITS`].
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(0.0));
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

pub fn to_value<T: Serialize>(x: &T) -> Value {
    round_floats(serde_json::to_value(x).expect("report serialises"))
}

pub fn pretty<T: Serialize>(x: &T) -> String {
    serde_json::to_string_pretty(&to_value(x)).expect("json") + "\n"
}

pub fn line<T: Serialize>(x: &T) -> String {
    serde_json::to_string(&to_value(x)).expect("json") + "\n"
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
