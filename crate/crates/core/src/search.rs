//! Inverted index over event titles and descriptions with structured
//! filters and tf-idf ranking.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::model::{EventId, EventRecord};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("query needs at least one of text, tags, hour range or date range")]
    EmptyQuery,
    #[error("limit must be positive")]
    Limit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    #[serde(default)]
    pub text_terms: Vec<String>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    /// Inclusive.
    #[serde(default)]
    pub hour_range: Option<(u8, u8)>,
    /// Inclusive.
    #[serde(default)]
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    pub limit: usize,
}

impl SearchQuery {
    pub fn text(text: &str, limit: usize) -> Self {
        SearchQuery { text_terms: vec![text.to_owned()], limit, ..Default::default() }
    }

    pub fn check(&self) -> Result<(), SearchError> {
        if self.limit == 0 {
            return Err(SearchError::Limit);
        }
        if self.terms().is_empty() && self.tags.is_empty() && self.hour_range.is_none() && self.date_range.is_none() {
            return Err(SearchError::EmptyQuery);
        }
        Ok(())
    }

    /// Query terms after tokenization, duplicates removed, in first
    /// appearance order.
    pub fn terms(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for raw in &self.text_terms {
            for t in crate::text::tokens(raw) {
                if seen.insert(t.clone()) {
                    out.push(t);
                }
            }
        }
        out
    }
}

/// Structured fields kept per document for filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct DocFields {
    pub tags: BTreeSet<String>,
    pub start_hour: u8,
    pub start_date: NaiveDate,
    terms: Vec<String>,
}

impl DocFields {
    pub fn matches_filters(&self, q: &SearchQuery) -> bool {
        q.tags.iter().all(|t| self.tags.contains(t))
            && q.hour_range.is_none_or(|(lo, hi)| lo <= self.start_hour && self.start_hour <= hi)
            && q.date_range.is_none_or(|(from, to)| from <= self.start_date && self.start_date <= to)
    }
}

/// `ln(1 + N / df)`.
pub fn idf(doc_count: usize, df: usize) -> f64 {
    (1.0 + doc_count as f64 / df as f64).ln()
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    postings: BTreeMap<String, BTreeMap<EventId, u32>>,
    docs: HashMap<EventId, DocFields>,
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.docs.contains_key(id)
    }

    pub fn fields(&self, id: &str) -> Option<&DocFields> {
        self.docs.get(id)
    }

    /// Document frequency of `term`.
    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, BTreeMap::len)
    }

    /// Posting list for `term`, sorted by event id.
    pub fn postings(&self, term: &str) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.postings.get(term).into_iter().flatten().map(|(id, &tf)| (id.as_str(), tf))
    }

    /// Indexes title and description; re-indexing an id replaces it.
    pub fn index_event(&mut self, e: &EventRecord) {
        self.remove_event(&e.id);
        let tokens = tokenize(&e.text());
        let mut terms = Vec::with_capacity(tokens.len());
        for (term, tf) in tokens.iter() {
            self.postings.entry(term.to_owned()).or_default().insert(e.id.clone(), tf);
            terms.push(term.to_owned());
        }
        self.docs.insert(
            e.id.clone(),
            DocFields { tags: e.tags.clone(), start_hour: e.start_hour, start_date: e.start_date, terms },
        );
    }

    pub fn remove_event(&mut self, id: &str) {
        let Some(doc) = self.docs.remove(id) else { return };
        for term in doc.terms {
            if let Some(list) = self.postings.get_mut(&term) {
                list.remove(id);
                if list.is_empty() {
                    self.postings.remove(&term);
                }
            }
        }
    }

    /// Events passing every structured filter and, when text is given,
    /// containing at least one query term. Score is the sum over query
    /// terms of `tf * idf`; ties break by ascending id.
    pub fn search(&self, q: &SearchQuery) -> Result<Vec<(EventId, f64)>, SearchError> {
        q.check()?;
        let terms = q.terms();
        let n = self.docs.len();
        let mut hits: Vec<(EventId, f64)> = if terms.is_empty() {
            self.docs.iter().filter(|(_, d)| d.matches_filters(q)).map(|(id, _)| (id.clone(), 0.0)).collect()
        } else {
            let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
            for term in &terms {
                let Some(list) = self.postings.get(term) else { continue };
                let w = idf(n, list.len());
                for (id, &tf) in list {
                    *scores.entry(id.as_str()).or_insert(0.0) += tf as f64 * w;
                }
            }
            scores
                .into_iter()
                .filter(|(id, _)| self.docs[*id].matches_filters(q))
                .map(|(id, s)| (id.to_owned(), s))
                .collect()
        };
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        hits.truncate(q.limit);
        Ok(hits)
    }
}
