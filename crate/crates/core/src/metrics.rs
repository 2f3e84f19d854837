//! Accuracy tables and pairwise skin-tone divergence.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::jobgen::BestSettings;
use crate::labelmatch::{judge, normalize_label, MatchTable, Verdict};
use crate::manifest::{Manifest, MotionGroup, SkinTone, VideoRecord};
use crate::rng::digest_lines;

pub const PREDICTION_HEADER: [&str; 5] = ["video_id", "model_id", "rank", "label", "score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub model_id: String,
    pub rank: u32,
    pub label: String,
    pub score: f64,
}

/// Validated prediction log with a rank-1 index.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    records: Vec<PredictionRecord>,
    top1: HashMap<(String, String), usize>,
}

impl PredictionLog {
    /// Normalizes labels and checks, per (video, model), that ranks run 1..k
    /// without gaps and scores never increase with rank.
    pub fn from_records(mut records: Vec<PredictionRecord>) -> Result<Self> {
        for r in &mut records {
            r.label = normalize_label(&r.label)?;
        }
        let mut by_key: BTreeMap<(&str, &str), Vec<&PredictionRecord>> = BTreeMap::new();
        for r in &records {
            by_key.entry((&r.video_id, &r.model_id)).or_default().push(r);
        }
        for ((video_id, model_id), mut rows) in by_key {
            rows.sort_by_key(|r| r.rank);
            let key = || (video_id.to_string(), model_id.to_string());
            if rows.iter().enumerate().any(|(i, r)| r.rank as usize != i + 1) {
                let (video_id, model_id) = key();
                return Err(AuditError::RankGap { video_id, model_id });
            }
            if rows.windows(2).any(|w| w[1].score > w[0].score) {
                let (video_id, model_id) = key();
                return Err(AuditError::NonMonotoneScores { video_id, model_id });
            }
        }
        let top1 = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.rank == 1)
            .map(|(i, r)| ((r.model_id.clone(), r.video_id.clone()), i))
            .collect();
        Ok(Self { records, top1 })
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn top1(&self, model_id: &str, video_id: &str) -> Option<&str> {
        self.top1
            .get(&(model_id.to_string(), video_id.to_string()))
            .map(|&i| self.records[i].label.as_str())
    }

    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.model_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Serializes sorted by (video_id, model_id, rank).
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<&PredictionRecord> = self.records.iter().collect();
        rows.sort_by(|a, b| {
            (&a.video_id, &a.model_id, a.rank).cmp(&(&b.video_id, &b.model_id, b.rank))
        });
        let mut out = PREDICTION_HEADER.join(",");
        out.push('\n');
        for r in rows {
            let _ = writeln!(out, "{},{},{},{},{:.6}", r.video_id, r.model_id, r.rank, r.label, r.score);
        }
        out
    }

    pub fn merge(logs: impl IntoIterator<Item = PredictionLog>) -> Result<Self> {
        Self::from_records(logs.into_iter().flat_map(|l| l.records).collect())
    }
}

/// Parses a prediction-log CSV with header `video_id,model_id,rank,label,score`.
pub fn load_predictions(csv_bytes: &[u8]) -> Result<PredictionLog> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(csv_bytes);
    let header = reader.headers().map_err(|e| AuditError::Parse { line: 1, message: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != PREDICTION_HEADER {
        return Err(AuditError::Parse {
            line: 1,
            message: format!("expected header `{}`", PREDICTION_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| AuditError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != PREDICTION_HEADER.len() {
            return Err(AuditError::Arity { line, expected: PREDICTION_HEADER.len(), found: row.len() });
        }
        let bad = |what: &str| AuditError::Parse { line, message: format!("invalid {what}") };
        records.push(PredictionRecord {
            video_id: row[0].to_string(),
            model_id: row[1].to_string(),
            rank: row[2].parse().map_err(|_| bad("rank"))?,
            label: row[3].to_string(),
            score: row[4].parse().map_err(|_| bad("score"))?,
        });
    }
    PredictionLog::from_records(records)
}

/// A manifest column that accuracy can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Action,
    MotionId,
    SkinTone,
    Viewpoint,
    Background,
    Variant,
}

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Action => "action",
            Attribute::MotionId => "motion_id",
            Attribute::SkinTone => "skin_tone",
            Attribute::Viewpoint => "viewpoint",
            Attribute::Background => "background",
            Attribute::Variant => "variant",
        }
    }

    pub fn value(self, r: &VideoRecord) -> String {
        match self {
            Attribute::Action => r.action.clone(),
            Attribute::MotionId => r.motion_id.clone(),
            Attribute::SkinTone => r.skin_tone.to_string(),
            Attribute::Viewpoint => r.viewpoint.clone(),
            Attribute::Background => r.background.clone(),
            Attribute::Variant => r.variant.as_str().to_string(),
        }
    }
}

impl std::str::FromStr for Attribute {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Attribute::Action,
            Attribute::MotionId,
            Attribute::SkinTone,
            Attribute::Viewpoint,
            Attribute::Background,
            Attribute::Variant,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| AuditError::InvalidParameter(format!("unknown attribute `{s}`")))
    }
}

/// Exact correct/total counts with the derived accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub model_id: String,
    pub key: Vec<String>,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub group_by: Vec<Attribute>,
    /// Sorted by (model_id, key).
    pub cells: Vec<AblationCell>,
    /// Predictions whose ground-truth action has no matched target label.
    pub unmatched_ground_truth: u64,
}

impl AblationTable {
    fn from_counts(
        group_by: Vec<Attribute>,
        counts: BTreeMap<(String, Vec<String>), (u64, u64)>,
        unmatched_ground_truth: u64,
    ) -> Self {
        let cells = counts
            .into_iter()
            .map(|((model_id, key), (correct, total))| AblationCell {
                model_id,
                key,
                correct,
                total,
                accuracy: correct as f64 / total as f64,
            })
            .collect();
        Self { group_by, cells, unmatched_ground_truth }
    }

    /// Combines per-model tables that share a grouping.
    pub fn merge(tables: impl IntoIterator<Item = AblationTable>) -> Result<Self> {
        let mut group_by = None;
        let mut counts = BTreeMap::new();
        let mut unmatched = 0;
        for t in tables {
            if *group_by.get_or_insert_with(|| t.group_by.clone()) != t.group_by {
                return Err(AuditError::InvalidParameter("cannot merge tables with different groupings".into()));
            }
            unmatched += t.unmatched_ground_truth;
            for c in t.cells {
                let e: &mut (u64, u64) = counts.entry((c.model_id, c.key)).or_default();
                e.0 += c.correct;
                e.1 += c.total;
            }
        }
        Ok(Self::from_counts(group_by.unwrap_or_default(), counts, unmatched))
    }

    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.cells.iter().map(|c| c.model_id.clone()).collect();
        ids.dedup();
        ids
    }

    pub fn cell(&self, model_id: &str, key: &[&str]) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|c| c.model_id == model_id && c.key.iter().map(String::as_str).eq(key.iter().copied()))
    }

    pub fn position(&self, attribute: Attribute) -> Option<usize> {
        self.group_by.iter().position(|a| *a == attribute)
    }

    /// Long form: `model_id,<grouping columns>,correct,total,accuracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model_id");
        for a in &self.group_by {
            out.push(',');
            out.push_str(a.name());
        }
        out.push_str(",correct,total,accuracy\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                c.model_id,
                c.key.join(","),
                c.correct,
                c.total,
                c.accuracy
            );
        }
        out
    }
}

/// Fraction of videos whose rank-1 label is correct, per group of `group_by` values.
pub fn accuracy(
    manifest: &Manifest,
    preds: &PredictionLog,
    table: &MatchTable,
    model_id: &str,
    group_by: &[Attribute],
) -> Result<AblationTable> {
    let mut counts: BTreeMap<(String, Vec<String>), (u64, u64)> = BTreeMap::new();
    let mut missing = Vec::new();
    let mut unmatched = 0;
    for r in manifest.records() {
        let Some(label) = preds.top1(model_id, &r.video_id) else {
            missing.push(r.video_id.clone());
            continue;
        };
        let verdict = judge(label, &r.action, table);
        if verdict == Verdict::Unmatched {
            unmatched += 1;
        }
        let key = group_by.iter().map(|a| a.value(r)).collect();
        let e = counts.entry((model_id.to_string(), key)).or_default();
        e.0 += u64::from(verdict == Verdict::Correct);
        e.1 += 1;
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(AuditError::MissingPredictions { model_id: model_id.to_string(), video_ids: missing });
    }
    Ok(AblationTable::from_counts(group_by.to_vec(), counts, unmatched))
}

/// Pooled accuracies contrasting each action's best scene setting with the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub model_id: String,
    /// Pooled over each action's best (viewpoint, background) cell.
    pub best: Ratio,
    /// Pooled over each action's lowest-accuracy cell for this model.
    pub worst_per_action: Ratio,
    /// Pooled over every cell that is not its action's best.
    pub non_best_mean: Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub correct: u64,
    pub total: u64,
    pub value: f64,
}

impl Ratio {
    fn new(correct: u64, total: u64) -> Self {
        let value = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self { correct, total, value }
    }
}

/// Summaries per model from an (action, viewpoint, background) table.
pub fn baseline_summary(ablation: &AblationTable, best: &BestSettings) -> Result<Vec<BaselineSummary>> {
    let idx = |a| {
        ablation.position(a).ok_or_else(|| {
            AuditError::InvalidParameter(format!("ablation table is not grouped by {}", a.name()))
        })
    };
    let (ia, iv, ib) = (idx(Attribute::Action)?, idx(Attribute::Viewpoint)?, idx(Attribute::Background)?);
    let mut out = Vec::new();
    for model in ablation.model_ids() {
        let mut best_c = (0, 0);
        let mut rest_c = (0, 0);
        let mut worst: BTreeMap<&str, &AblationCell> = BTreeMap::new();
        for c in ablation.cells.iter().filter(|c| c.model_id == model) {
            let action = c.key[ia].as_str();
            let is_best = best
                .settings
                .get(action)
                .is_some_and(|s| s.viewpoint == c.key[iv] && s.background == c.key[ib]);
            let slot = if is_best { &mut best_c } else { &mut rest_c };
            slot.0 += c.correct;
            slot.1 += c.total;
            let w = worst.entry(action).or_insert(c);
            if c.accuracy < w.accuracy {
                *w = c;
            }
        }
        let (wc, wt) = worst.values().fold((0, 0), |acc, c| (acc.0 + c.correct, acc.1 + c.total));
        out.push(BaselineSummary {
            model_id: model.clone(),
            best: Ratio::new(best_c.0, best_c.1),
            worst_per_action: Ratio::new(wc, wt),
            non_best_mean: Ratio::new(rest_c.0, rest_c.1),
        });
    }
    Ok(out)
}

/// A complete motion group with the model's rank-1 label per tone.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGroup {
    pub action: String,
    /// Group identity: SHA-256 of the member video ids in canonical tone order.
    pub digest: [u8; 32],
    pub tones: Vec<SkinTone>,
    pub labels: Vec<String>,
}

impl LabeledGroup {
    pub fn label(&self, tone: SkinTone) -> Option<&str> {
        self.tones.iter().position(|t| *t == tone).map(|i| self.labels[i].as_str())
    }
}

/// Splits groups into complete ones and a count of excluded incomplete ones.
pub fn complete_groups(groups: &[MotionGroup]) -> (Vec<MotionGroup>, usize) {
    let (complete, partial): (Vec<_>, Vec<_>) = groups.iter().cloned().partition(|g| g.complete);
    (complete, partial.len())
}

/// Attaches rank-1 labels to complete groups. All groups must share one tone set.
pub fn label_groups(groups: &[MotionGroup], preds: &PredictionLog, model_id: &str) -> Result<Vec<LabeledGroup>> {
    let Some(first) = groups.first() else {
        return Err(AuditError::NoGroups);
    };
    let tones = first.tones();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        if !g.complete || g.tones() != tones {
            return Err(AuditError::IncompleteGroup(g.key().to_string()));
        }
        let mut labels = Vec::with_capacity(tones.len());
        for id in g.members.values() {
            match preds.top1(model_id, id) {
                Some(l) => labels.push(l.to_string()),
                None => missing.push(id.clone()),
            }
        }
        out.push(LabeledGroup {
            action: g.action.clone(),
            digest: digest_lines(g.members.values().map(String::as_str)),
            tones: tones.clone(),
            labels,
        });
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(AuditError::MissingPredictions { model_id: model_id.to_string(), video_ids: missing });
    }
    Ok(out)
}

/// Pairwise counts of groups in which the rank-1 labels of two tones differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceMatrix {
    pub model_id: String,
    pub tones: Vec<SkinTone>,
    pub counts: Vec<Vec<u64>>,
    pub rate: Vec<Vec<f64>>,
    pub n_groups: u64,
    /// Incomplete groups left out of `n_groups`.
    pub excluded_groups: u64,
}

impl DivergenceMatrix {
    fn from_counts(model_id: &str, tones: Vec<SkinTone>, counts: Vec<Vec<u64>>, n_groups: u64) -> Self {
        let rate = counts
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&c| if n_groups == 0 { 0.0 } else { c as f64 / n_groups as f64 })
                    .collect()
            })
            .collect();
        Self { model_id: model_id.to_string(), tones, counts, rate, n_groups, excluded_groups: 0 }
    }

    pub fn rate_of(&self, a: SkinTone, b: SkinTone) -> Option<f64> {
        let i = self.tones.iter().position(|t| *t == a)?;
        let j = self.tones.iter().position(|t| *t == b)?;
        Some(self.rate[i][j])
    }

    /// Long form, upper triangle: `model_id,tone_a,tone_b,count,n_groups,rate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model_id,tone_a,tone_b,count,n_groups,rate\n");
        self.write_rows(&mut out, None);
        out
    }

    pub(crate) fn write_rows(&self, out: &mut String, scope: Option<&str>) {
        for i in 0..self.tones.len() {
            for j in i + 1..self.tones.len() {
                if let Some(s) = scope {
                    let _ = write!(out, "{s},");
                }
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{:.6}",
                    self.model_id, self.tones[i], self.tones[j], self.counts[i][j], self.n_groups, self.rate[i][j]
                );
            }
        }
    }
}

fn pair_counts<T: PartialEq, R: AsRef<[T]>>(n: usize, rows: impl IntoIterator<Item = R>) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; n]; n];
    for row in rows {
        let row = row.as_ref();
        for i in 0..n {
            for j in i + 1..n {
                if row[i] != row[j] {
                    counts[i][j] += 1;
                    counts[j][i] += 1;
                }
            }
        }
    }
    counts
}

/// Divergence rate per tone pair over labeled groups: differing groups / N.
pub fn divergence_from_labeled(model_id: &str, groups: &[LabeledGroup]) -> Result<DivergenceMatrix> {
    let first = groups.first().ok_or(AuditError::NoGroups)?;
    let counts = pair_counts(first.tones.len(), groups.iter().map(|g| &g.labels));
    Ok(DivergenceMatrix::from_counts(model_id, first.tones.clone(), counts, groups.len() as u64))
}

/// Divergence matrix over complete motion groups.
pub fn divergence_matrix(groups: &[MotionGroup], preds: &PredictionLog, model_id: &str) -> Result<DivergenceMatrix> {
    divergence_from_labeled(model_id, &label_groups(groups, preds, model_id)?)
}

/// Divergence matrices restricted to each action's groups.
pub fn divergence_by_action(
    groups: &[MotionGroup],
    preds: &PredictionLog,
    model_id: &str,
) -> Result<BTreeMap<String, DivergenceMatrix>> {
    let labeled = label_groups(groups, preds, model_id)?;
    let mut by_action: BTreeMap<String, Vec<LabeledGroup>> = BTreeMap::new();
    for g in labeled {
        by_action.entry(g.action.clone()).or_default().push(g);
    }
    by_action
        .into_iter()
        .map(|(action, gs)| Ok((action, divergence_from_labeled(model_id, &gs)?)))
        .collect()
}

/// Pairwise counts of groups in which correctness differs between two tones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMatrix {
    pub model_id: String,
    pub tones: Vec<SkinTone>,
    pub counts: Vec<Vec<u64>>,
    pub n_groups: u64,
}

pub fn error_from_labeled(model_id: &str, groups: &[LabeledGroup], table: &MatchTable) -> Result<ErrorMatrix> {
    let first = groups.first().ok_or(AuditError::NoGroups)?;
    let correctness = groups
        .iter()
        .map(|g| g.labels.iter().map(|l| judge(l, &g.action, table) == Verdict::Correct).collect::<Vec<_>>());
    let counts = pair_counts(first.tones.len(), correctness);
    Ok(ErrorMatrix { model_id: model_id.to_string(), tones: first.tones.clone(), counts, n_groups: groups.len() as u64 })
}

pub fn error_matrix(
    groups: &[MotionGroup],
    preds: &PredictionLog,
    table: &MatchTable,
    model_id: &str,
) -> Result<ErrorMatrix> {
    error_from_labeled(model_id, &label_groups(groups, preds, model_id)?, table)
}
