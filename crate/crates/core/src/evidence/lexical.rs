use std::collections::{HashMap, HashSet};

use super::{Reranker, RetrievalError, RetrievalProvider};
use crate::model::EvidenceDoc;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "is", "it",
    "its", "of", "on", "or", "that", "the", "this", "to", "was", "were", "with",
];

/// Lowercased alphanumeric tokens, stopwords removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// In-memory corpus scored by IDF-weighted query-term coverage: the share
/// of the query's total IDF mass that also occurs in the document.
pub struct LexicalIndex {
    docs: Vec<EvidenceDoc>,
    terms: Vec<HashSet<String>>,
    idf: HashMap<String, f64>,
    unseen_idf: f64,
}

impl LexicalIndex {
    pub fn new(docs: Vec<EvidenceDoc>) -> Self {
        let terms: Vec<HashSet<String>> = docs
            .iter()
            .map(|d| tokenize(&format!("{} {}", d.title, d.abstract_text)).into_iter().collect())
            .collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        for t in terms.iter().flatten() {
            *df.entry(t.clone()).or_default() += 1;
        }
        let n = docs.len() as f64;
        let idf = df
            .into_iter()
            .map(|(t, c)| (t, (1.0 + n / c as f64).ln()))
            .collect();
        LexicalIndex {
            docs,
            terms,
            idf,
            unseen_idf: (1.0 + n.max(1.0)).ln(),
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[EvidenceDoc] {
        &self.docs
    }

    fn weight(&self, term: &str) -> f64 {
        self.idf.get(term).copied().unwrap_or(self.unseen_idf)
    }

    fn coverage(&self, query: &HashSet<String>, doc_terms: &HashSet<String>) -> f64 {
        let total: f64 = query.iter().map(|t| self.weight(t)).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let shared: f64 = query
            .iter()
            .filter(|t| doc_terms.contains(*t))
            .map(|t| self.weight(t))
            .sum();
        (shared / total).clamp(0.0, 1.0)
    }
}

impl RetrievalProvider for LexicalIndex {
    fn search(&self, query: &str, k: usize) -> Result<Vec<EvidenceDoc>, RetrievalError> {
        let q: HashSet<String> = tokenize(query).into_iter().collect();
        let mut scored: Vec<(f64, &EvidenceDoc)> = self
            .docs
            .iter()
            .zip(&self.terms)
            .map(|(d, t)| (self.coverage(&q, t), d))
            .filter(|(s, _)| *s > 0.0)
            .collect();
        scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.doc_id.cmp(&b.doc_id)));
        Ok(scored.into_iter().take(k).map(|(_, d)| d.clone()).collect())
    }
}

impl Reranker for LexicalIndex {
    fn score(&self, query: &str, doc: &EvidenceDoc) -> f64 {
        let q: HashSet<String> = tokenize(query).into_iter().collect();
        let d: HashSet<String> = tokenize(&format!("{} {}", doc.title, doc.abstract_text))
            .into_iter()
            .collect();
        self.coverage(&q, &d)
    }
}
