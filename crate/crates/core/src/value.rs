//! Runtime values and the four value kinds of the mini-language.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// Kind of value a generic neural function returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    Detections,
    Text,
    Boolean,
    Number,
}

impl fmt::Display for ReturnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReturnKind::Detections => "detections",
            ReturnKind::Text => "text",
            ReturnKind::Boolean => "boolean",
            ReturnKind::Number => "number",
        };
        f.write_str(s)
    }
}

/// A runtime value flowing through program execution.
///
/// `Detections` is a detection count; programs inspect it with comparison
/// operators (`detect(x, "horse") >= 4`).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Number(f64),
    Text(String),
    Detections(u32),
}

impl Value {
    pub fn kind(&self) -> ReturnKind {
        match self {
            Value::Bool(_) => ReturnKind::Boolean,
            Value::Number(_) => ReturnKind::Number,
            Value::Text(_) => ReturnKind::Text,
            Value::Detections(_) => ReturnKind::Detections,
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    /// Neutral value of a kind; used as the fallback return when a program
    /// terminates abnormally (exhausted loop bound, missing return).
    pub fn neutral(kind: ReturnKind) -> Self {
        match kind {
            ReturnKind::Boolean => Value::Bool(false),
            ReturnKind::Number => Value::Number(0.0),
            ReturnKind::Text => Value::Text("N/A".to_string()),
            ReturnKind::Detections => Value::Detections(0),
        }
    }

    /// Interprets a JSON value as a `Value` of the given kind.
    pub fn from_json(v: &serde_json::Value, kind: ReturnKind) -> Result<Self, String> {
        match (kind, v) {
            (ReturnKind::Boolean, serde_json::Value::Bool(b)) => Ok(Value::Bool(*b)),
            (ReturnKind::Text, serde_json::Value::String(s)) => Ok(Value::Text(s.clone())),
            (ReturnKind::Number, serde_json::Value::Number(n)) => n
                .as_f64()
                .map(Value::Number)
                .ok_or_else(|| format!("number {n} not representable as f64")),
            (ReturnKind::Detections, serde_json::Value::Number(n)) => n
                .as_u64()
                .and_then(|c| u32::try_from(c).ok())
                .map(Value::Detections)
                .ok_or_else(|| format!("detections count {n} must be a small nonnegative integer")),
            _ => Err(format!("expected a {kind} value, got {v}")),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Number(n) => write!(f, "{n}"),
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Detections(c) => write!(f, "{c}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => serializer.serialize_bool(*b),
            Value::Number(n) => serializer.serialize_f64(*n),
            Value::Text(s) => serializer.serialize_str(s),
            Value::Detections(c) => serializer.serialize_u32(*c),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        match &v {
            serde_json::Value::Bool(b) => Ok(Value::Bool(*b)),
            serde_json::Value::String(s) => Ok(Value::Text(s.clone())),
            serde_json::Value::Number(n) => {
                // Integer payloads round-trip as detection counts only when
                // they came from a Detections value; plain JSON numbers map
                // to Number. Callers that know the kind should prefer
                // `Value::from_json`.
                n.as_f64()
                    .map(Value::Number)
                    .ok_or_else(|| D::Error::custom("unrepresentable number"))
            }
            other => Err(D::Error::custom(format!("unsupported value {other}"))),
        }
    }
}
