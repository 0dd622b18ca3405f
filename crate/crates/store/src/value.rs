use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Number, Value};

use crate::path::is_valid_segment;
use crate::StoreError;

/// Tree value held by the store. There are no arrays: collections are maps,
/// sets are maps to `true`.
///
/// Maps never contain `Null` or empty maps; [`DocumentValue::from_json`]
/// drops both, so "absent" has a single representation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DocumentValue {
    #[default]
    Null,
    Bool(bool),
    Number(f64),
    String(String),
    Map(BTreeMap<String, DocumentValue>),
}

impl DocumentValue {
    pub fn empty_map() -> Self {
        DocumentValue::Map(BTreeMap::new())
    }

    /// `Null` and `{}` both mean "nothing here".
    pub fn is_absent(&self) -> bool {
        match self {
            DocumentValue::Null => true,
            DocumentValue::Map(m) => m.is_empty(),
            _ => false,
        }
    }

    pub fn as_map(&self) -> Option<&BTreeMap<String, DocumentValue>> {
        match self {
            DocumentValue::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            DocumentValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            DocumentValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn from_json(v: Value) -> Result<Self, StoreError> {
        Ok(match v {
            Value::Null => DocumentValue::Null,
            Value::Bool(b) => DocumentValue::Bool(b),
            Value::Number(n) => {
                let f = n.as_f64().filter(|f| f.is_finite());
                DocumentValue::Number(f.ok_or_else(|| StoreError::InvalidValue(format!("number {n}")))?)
            }
            Value::String(s) => DocumentValue::String(s),
            Value::Array(_) => return Err(StoreError::InvalidValue("arrays are not supported".into())),
            Value::Object(obj) => {
                let mut m = BTreeMap::new();
                for (k, v) in obj {
                    if !is_valid_segment(&k) {
                        return Err(StoreError::InvalidValue(format!("bad key {k:?}")));
                    }
                    let v = DocumentValue::from_json(v)?;
                    if !v.is_absent() {
                        m.insert(k, v);
                    }
                }
                DocumentValue::Map(m)
            }
        })
    }

    /// Integral numbers come back as JSON integers so they decode into
    /// integer fields.
    pub fn to_json(&self) -> Value {
        match self {
            DocumentValue::Null => Value::Null,
            DocumentValue::Bool(b) => Value::Bool(*b),
            DocumentValue::Number(n) => {
                if n.fract() == 0.0 && n.abs() < 9_007_199_254_740_992.0 {
                    Value::Number(Number::from(*n as i64))
                } else {
                    Number::from_f64(*n).map_or(Value::Null, Value::Number)
                }
            }
            DocumentValue::String(s) => Value::String(s.clone()),
            DocumentValue::Map(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
        }
    }

    pub fn encode<T: Serialize>(value: &T) -> Result<Self, StoreError> {
        let json = serde_json::to_value(value).map_err(|e| StoreError::InvalidValue(e.to_string()))?;
        Self::from_json(json)
    }

    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, StoreError> {
        serde_json::from_value(self.to_json()).map_err(|e| StoreError::InvalidValue(e.to_string()))
    }

    pub fn get_path(&self, segments: &[String]) -> Option<&DocumentValue> {
        let mut cur = self;
        for s in segments {
            cur = cur.as_map()?.get(s)?;
        }
        Some(cur)
    }

    /// Dotted field lookup, e.g. `location.lat`.
    pub fn field(&self, dotted: &str) -> Option<&DocumentValue> {
        let mut cur = self;
        for s in dotted.split('.') {
            cur = cur.as_map()?.get(s)?;
        }
        Some(cur)
    }

    /// Sets `segments` below `self`, creating (or overwriting scalars with)
    /// maps along the way. An absent value removes instead.
    pub(crate) fn set_path(&mut self, segments: &[String], value: DocumentValue) {
        if value.is_absent() {
            self.remove_path(segments);
            return;
        }
        let (last, parents) = segments.split_last().expect("non-empty path");
        let mut cur = self;
        for s in parents {
            if !matches!(cur, DocumentValue::Map(_)) {
                *cur = DocumentValue::empty_map();
            }
            let DocumentValue::Map(m) = cur else { unreachable!() };
            cur = m.entry(s.clone()).or_insert_with(DocumentValue::empty_map);
        }
        if !matches!(cur, DocumentValue::Map(_)) {
            *cur = DocumentValue::empty_map();
        }
        let DocumentValue::Map(m) = cur else { unreachable!() };
        m.insert(last.clone(), value);
    }

    /// Removes and returns the subtree, pruning maps left empty.
    pub(crate) fn remove_path(&mut self, segments: &[String]) -> Option<DocumentValue> {
        let DocumentValue::Map(m) = self else { return None };
        let (first, rest) = segments.split_first()?;
        if rest.is_empty() {
            return m.remove(first);
        }
        let child = m.get_mut(first)?;
        let removed = child.remove_path(rest);
        if child.is_absent() {
            m.remove(first);
        }
        removed
    }
}

impl Serialize for DocumentValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DocumentValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        DocumentValue::from_json(Value::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl From<&str> for DocumentValue {
    fn from(s: &str) -> Self {
        DocumentValue::String(s.to_owned())
    }
}

impl From<String> for DocumentValue {
    fn from(s: String) -> Self {
        DocumentValue::String(s)
    }
}

impl From<f64> for DocumentValue {
    fn from(n: f64) -> Self {
        DocumentValue::Number(n)
    }
}

impl From<bool> for DocumentValue {
    fn from(b: bool) -> Self {
        DocumentValue::Bool(b)
    }
}
