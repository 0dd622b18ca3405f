use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::StoreError;

/// True for a non-empty `[A-Za-z0-9_-]+` segment.
pub fn is_valid_segment(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Slash-separated location in the document tree, at least one segment
/// deep. Written as `/events/e1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocumentPath {
    segments: Vec<String>,
}

impl DocumentPath {
    pub fn new<I, S>(segments: I) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err(StoreError::InvalidPath("empty path".into()));
        }
        if let Some(bad) = segments.iter().find(|s| !is_valid_segment(s)) {
            return Err(StoreError::InvalidPath(format!("bad segment {bad:?}")));
        }
        Ok(DocumentPath { segments })
    }

    pub fn parse(s: &str) -> Result<Self, StoreError> {
        let trimmed = s.strip_prefix('/').unwrap_or(s);
        let trimmed = trimmed.strip_suffix('/').unwrap_or(trimmed);
        if trimmed.is_empty() {
            return Err(StoreError::InvalidPath(format!("{s:?}")));
        }
        Self::new(trimmed.split('/'))
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> &str {
        self.segments.last().expect("non-empty")
    }

    pub fn parent(&self) -> Option<DocumentPath> {
        (self.segments.len() > 1).then(|| DocumentPath { segments: self.segments[..self.segments.len() - 1].to_vec() })
    }

    pub fn child(&self, segment: &str) -> Result<DocumentPath, StoreError> {
        if !is_valid_segment(segment) {
            return Err(StoreError::InvalidPath(format!("bad segment {segment:?}")));
        }
        let mut segments = self.segments.clone();
        segments.push(segment.to_owned());
        Ok(DocumentPath { segments })
    }

    /// True when `self` equals `prefix` or lies beneath it.
    pub fn starts_with(&self, prefix: &DocumentPath) -> bool {
        self.segments.starts_with(&prefix.segments)
    }
}

impl fmt::Display for DocumentPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.segments {
            write!(f, "/{s}")?;
        }
        Ok(())
    }
}

impl FromStr for DocumentPath {
    type Err = StoreError;
    fn from_str(s: &str) -> Result<Self, StoreError> {
        Self::parse(s)
    }
}

impl Serialize for DocumentPath {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DocumentPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let p = DocumentPath::parse("/events/e1").unwrap();
        assert_eq!(p.segments(), ["events", "e1"]);
        assert_eq!(p.to_string(), "/events/e1");
        assert_eq!(DocumentPath::parse("events/e1/").unwrap(), p);
        assert_eq!(p.parent().unwrap().to_string(), "/events");
        assert!(p.parent().unwrap().parent().is_none());
    }

    #[test]
    fn rejects_bad_paths() {
        for bad in ["", "/", "//a", "/a//b", "/a b", "/a/b.c", "/ü"] {
            assert!(DocumentPath::parse(bad).is_err(), "{bad:?}");
        }
        assert!(DocumentPath::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn prefix() {
        let events = DocumentPath::parse("/events").unwrap();
        assert!(DocumentPath::parse("/events/e1").unwrap().starts_with(&events));
        assert!(events.starts_with(&events));
        assert!(!DocumentPath::parse("/eventsx").unwrap().starts_with(&events));
    }

    #[test]
    fn serde_as_string() {
        let p = DocumentPath::parse("/a/b_c-1").unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "\"/a/b_c-1\"");
        assert_eq!(serde_json::from_str::<DocumentPath>(&s).unwrap(), p);
    }
}
