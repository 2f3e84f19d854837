//! Matching the dataset's action vocabulary to a model's label vocabulary.
//!
//! Two similarity backends share one selection rule: for each source label keep
//! the top-k target labels whose similarity reaches the threshold, in descending
//! score order with ties broken by target vocabulary order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Lowercases, trims, and collapses runs of whitespace, `_` and `-` to one space.
pub fn normalize_label(raw: &str) -> Result<String> {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() || c == '_' || c == '-' {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(c.to_lowercase());
    }
    if out.is_empty() {
        Err(AuditError::EmptyLabel(raw.to_string()))
    } else {
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub name: String,
    labels: Vec<String>,
}

impl Vocabulary {
    pub fn new<S: AsRef<str>>(name: &str, raw_labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut labels = Vec::new();
        for raw in raw_labels {
            let label = normalize_label(raw.as_ref())?;
            if !seen.insert(label.clone()) {
                return Err(AuditError::DuplicateLabel { vocabulary: name.to_string(), label });
            }
            labels.push(label);
        }
        Ok(Self { name: name.to_string(), labels })
    }

    /// One label per line; blank lines are skipped.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        Self::new(name, text.lines().filter(|l| !l.trim().is_empty()))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Precomputed sentence embeddings keyed by normalized label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new<S: AsRef<str>>(entries: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (raw, v) in entries {
            let label = normalize_label(raw.as_ref())?;
            let expected = *dim.get_or_insert(v.len());
            if v.len() != expected || expected == 0 {
                return Err(AuditError::EmbeddingDimension { label, expected, found: v.len() });
            }
            if v.iter().all(|x| *x == 0.0) {
                return Err(AuditError::ZeroEmbedding(label));
            }
            vectors.insert(label, v);
        }
        Ok(Self { dim: dim.unwrap_or(0), vectors })
    }

    /// Parses `label,v0,...,v{d-1}` rows. A leading header row whose second
    /// field is not numeric is skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label = fields.next().unwrap_or_default();
            let values: std::result::Result<Vec<f64>, _> =
                fields.map(|f| f.trim().parse::<f64>()).collect();
            match values {
                Ok(v) => entries.push((label.to_string(), v)),
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(AuditError::Parse { line: i as u64 + 1, message: e.to_string() })
                }
            }
        }
        Self::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, label: &str) -> Result<&[f64]> {
        self.vectors
            .get(label)
            .map(Vec::as_slice)
            .ok_or_else(|| AuditError::MissingEmbedding(label.to_string()))
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Character-level edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)`, with two empty strings scoring 1.
pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchBackend {
    Semantic,
    Lexical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub targets: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTable {
    pub backend: MatchBackend,
    pub k: usize,
    pub threshold: f64,
    pub entries: BTreeMap<String, MatchEntry>,
    pub unmatched: Vec<String>,
    /// The full target vocabulary, in vocabulary order.
    pub target_labels: Vec<String>,
}

impl MatchTable {
    /// The highest-scoring target for a matched source label.
    pub fn primary_target(&self, source: &str) -> Option<&str> {
        let source = normalize_label(source).ok()?;
        self.entries.get(&source).and_then(|e| e.targets.first()).map(String::as_str)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn select(
    source: &Vocabulary,
    target: &Vocabulary,
    k: usize,
    threshold: f64,
    backend: MatchBackend,
    similarity: impl Fn(&str, &str) -> Result<f64>,
) -> Result<MatchTable> {
    let mut entries = BTreeMap::new();
    let mut unmatched = Vec::new();
    for s in source.labels() {
        let mut scored: Vec<(usize, f64)> = Vec::new();
        for (i, t) in target.labels().iter().enumerate() {
            let score = similarity(s, t)?;
            if score >= threshold {
                scored.push((i, score));
            }
        }
        // stable sort keeps vocabulary order among equal scores
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        if scored.is_empty() {
            unmatched.push(s.clone());
        } else {
            entries.insert(
                s.clone(),
                MatchEntry {
                    targets: scored.iter().map(|(i, _)| target.labels()[*i].clone()).collect(),
                    scores: scored.iter().map(|(_, sc)| *sc).collect(),
                },
            );
        }
    }
    Ok(MatchTable {
        backend,
        k,
        threshold,
        entries,
        unmatched,
        target_labels: target.labels().to_vec(),
    })
}

fn check_params(source: &Vocabulary, target: &Vocabulary, k: usize, lo: f64, threshold: f64) -> Result<()> {
    for v in [source, target] {
        if v.is_empty() {
            return Err(AuditError::EmptyVocabulary(v.name.clone()));
        }
    }
    if k == 0 {
        return Err(AuditError::InvalidParameter("k must be at least 1".into()));
    }
    if !(lo..=1.0).contains(&threshold) {
        return Err(AuditError::InvalidParameter(format!(
            "threshold {threshold} is outside [{lo}, 1]"
        )));
    }
    Ok(())
}

/// Matches by cosine similarity of precomputed embeddings.
pub fn match_semantic(
    source: &Vocabulary,
    target: &Vocabulary,
    emb: &EmbeddingTable,
    k: usize,
    threshold: f64,
) -> Result<MatchTable> {
    check_params(source, target, k, -1.0, threshold)?;
    for label in source.labels().iter().chain(target.labels()) {
        emb.get(label)?;
    }
    select(source, target, k, threshold, MatchBackend::Semantic, |a, b| {
        Ok(cosine_similarity(emb.get(a)?, emb.get(b)?))
    })
}

/// Matches by normalized Levenshtein similarity.
pub fn match_lexical(source: &Vocabulary, target: &Vocabulary, k: usize, threshold: f64) -> Result<MatchTable> {
    check_params(source, target, k, 0.0, threshold)?;
    select(source, target, k, threshold, MatchBackend::Lexical, |a, b| Ok(lexical_similarity(a, b)))
}

/// How a prediction relates to the ground-truth action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Correct,
    Incorrect,
    /// The ground-truth action has no matched target labels.
    Unmatched,
}

pub fn judge(prediction_label: &str, ground_truth_action: &str, table: &MatchTable) -> Verdict {
    let Ok(action) = normalize_label(ground_truth_action) else {
        return Verdict::Unmatched;
    };
    let Some(entry) = table.entries.get(&action) else {
        return Verdict::Unmatched;
    };
    match normalize_label(prediction_label) {
        Ok(pred) if entry.targets.contains(&pred) => Verdict::Correct,
        _ => Verdict::Incorrect,
    }
}

/// True iff the prediction is one of the action's matched target labels.
/// Callers that need the unmatched-action diagnostic use [`judge`].
pub fn is_correct(prediction_label: &str, ground_truth_action: &str, table: &MatchTable) -> bool {
    judge(prediction_label, ground_truth_action, table) == Verdict::Correct
}
