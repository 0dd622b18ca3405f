use serde::{Deserialize, Serialize};

use crate::DocumentValue;

/// Predicate over a document. Fields are dotted paths inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Filter {
    Eq {
        field: String,
        value: DocumentValue,
    },
    /// The field is a set (map) holding `key`.
    Contains {
        field: String,
        key: String,
    },
    /// Inclusive numeric range; an open side is unbounded.
    Range {
        field: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
    And {
        all: Vec<Filter>,
    },
}

impl Filter {
    pub fn eq(field: &str, value: impl Into<DocumentValue>) -> Self {
        Filter::Eq { field: field.into(), value: value.into() }
    }

    pub fn contains(field: &str, key: &str) -> Self {
        Filter::Contains { field: field.into(), key: key.into() }
    }

    pub fn range(field: &str, min: Option<f64>, max: Option<f64>) -> Self {
        Filter::Range { field: field.into(), min, max }
    }

    /// Conjunction, flattening nested `And`s.
    pub fn and(self, other: Filter) -> Self {
        let mut all = match self {
            Filter::And { all } => all,
            f => vec![f],
        };
        match other {
            Filter::And { all: more } => all.extend(more),
            f => all.push(f),
        }
        Filter::And { all }
    }

    pub fn matches(&self, doc: &DocumentValue) -> bool {
        match self {
            Filter::Eq { field, value } => doc.field(field) == Some(value),
            Filter::Contains { field, key } => doc
                .field(field)
                .and_then(DocumentValue::as_map)
                .and_then(|m| m.get(key))
                .is_some_and(|v| *v != DocumentValue::Bool(false)),
            Filter::Range { field, min, max } => doc
                .field(field)
                .and_then(DocumentValue::as_f64)
                .is_some_and(|x| min.is_none_or(|lo| lo <= x) && max.is_none_or(|hi| x <= hi)),
            Filter::And { all } => all.iter().all(|f| f.matches(doc)),
        }
    }
}
