//! Within-group permutation tests for pairwise divergence, with Bonferroni correction.
//!
//! Under the null hypothesis a model ignores skin tone, so within one motion
//! group the rank-1 labels are exchangeable across tone slots. Each permutation
//! shuffles the labels of every group independently and recounts the number of
//! groups in which the two tones under test disagree. The p-value is the
//! add-one Monte Carlo estimate of the upper tail.
//!
//! Random streams are keyed by (seed, model id, pair index, group digest) and
//! are drawn per group, so results do not depend on group order or on how the
//! pairs are scheduled across threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::manifest::SkinTone;
use crate::metrics::LabeledGroup;
use crate::rng::StreamKey;

pub const DEFAULT_PERMUTATIONS: u32 = 9999;
pub const DEFAULT_ALPHA: f64 = 0.05;
const MIN_PERMUTATIONS: u32 = 99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub permutations: u32,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self { permutations: DEFAULT_PERMUTATIONS, seed: 0, alpha: DEFAULT_ALPHA }
    }
}

impl PermutationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permutations < MIN_PERMUTATIONS {
            return Err(AuditError::InvalidParameter(format!(
                "permutations must be at least {MIN_PERMUTATIONS}, got {}",
                self.permutations
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AuditError::InvalidParameter(format!("alpha {} is outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Position of an unordered tone pair in the canonical upper-triangle order
/// over all seven tones: (white, african) is 0, (middle_eastern, south_east_asian) is 20.
pub fn pair_index(a: SkinTone, b: SkinTone) -> usize {
    let (lo, hi) = if a.index() <= b.index() { (a.index(), b.index()) } else { (b.index(), a.index()) };
    let n = SkinTone::ALL.len();
    (0..lo).map(|k| n - 1 - k).sum::<usize>() + (hi - lo - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub observed: u64,
    pub raw_p: f64,
}

fn slot(group: &LabeledGroup, tone: SkinTone) -> Result<usize> {
    group
        .tones
        .iter()
        .position(|t| *t == tone)
        .ok_or_else(|| AuditError::InvalidParameter(format!("skin tone {tone} is not part of the groups")))
}

/// Permutation test for one tone pair.
pub fn pair_test(
    groups: &[LabeledGroup],
    pair: (SkinTone, SkinTone),
    model_id: &str,
    cfg: &PermutationConfig,
) -> Result<PairTest> {
    cfg.validate()?;
    let first = groups.first().ok_or(AuditError::NoGroups)?;
    if pair.0 == pair.1 {
        return Err(AuditError::InvalidParameter("pair must name two distinct tones".into()));
    }
    let (si, sj) = (slot(first, pair.0)?, slot(first, pair.1)?);
    if groups.iter().any(|g| g.tones != first.tones) {
        return Err(AuditError::InvalidParameter("groups do not share one tone set".into()));
    }

    let observed = groups.iter().filter(|g| g.labels[si] != g.labels[sj]).count() as u64;
    let p = cfg.permutations as usize;
    let n = first.tones.len();
    let ordered_pairs = (n * (n - 1)) as u32;
    let pidx = pair_index(pair.0, pair.1) as u64;

    let mut permuted = vec![0u32; p];
    let mut any_variation = false;
    for g in groups {
        // label ids so the inner loop compares integers
        let ids: Vec<usize> = g.labels.iter().map(|l| g.labels.iter().position(|x| x == l).unwrap()).collect();
        if ids.iter().all(|&x| x == ids[0]) {
            continue;
        }
        any_variation = true;
        let mut rng = StreamKey::new("ctrl-audit/permutation/v1")
            .u64(cfg.seed)
            .str(model_id)
            .u64(pidx)
            .bytes(&g.digest)
            .rng();
        // The two inspected slots of a uniform shuffle receive a uniform
        // ordered pair of distinct source positions; draw it directly.
        let differs: Vec<u32> = (0..ordered_pairs as usize)
            .map(|r| {
                let a = r / (n - 1);
                let b = r % (n - 1);
                let b = if b >= a { b + 1 } else { b };
                u32::from(ids[a] != ids[b])
            })
            .collect();
        for count in permuted.iter_mut() {
            *count += differs[rng.random_range(0..ordered_pairs) as usize];
        }
    }
    if !any_variation {
        return Ok(PairTest { observed, raw_p: 1.0 });
    }
    let at_least = permuted.iter().filter(|&&d| u64::from(d) >= observed).count();
    Ok(PairTest { observed, raw_p: (1 + at_least) as f64 / (1 + p) as f64 })
}

/// `min(1, m * p)` for each p, with m the number of p-values.
pub fn bonferroni(raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(AuditError::PValueOutOfRange(bad));
    }
    let m = raw.len() as f64;
    Ok(raw.iter().map(|p| (m * p).min(1.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub tone_a: SkinTone,
    pub tone_b: SkinTone,
    pub observed_count: u64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub significant_raw: bool,
    pub significant_adjusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub model_id: String,
    pub tones: Vec<SkinTone>,
    pub n_groups: u64,
    /// Number of comparisons, C(|tones|, 2).
    pub m: usize,
    pub config: PermutationConfig,
    /// Upper triangle in canonical tone order.
    pub pairs: Vec<PairResult>,
}

impl SignificanceReport {
    pub fn significant_adjusted(&self) -> usize {
        self.pairs.iter().filter(|p| p.significant_adjusted).count()
    }

    /// Square grid with p-values above the diagonal and `None` elsewhere.
    pub fn grid(&self, adjusted: bool) -> Vec<Vec<Option<f64>>> {
        let n = self.tones.len();
        let mut grid = vec![vec![None; n]; n];
        for p in &self.pairs {
            let i = self.tones.iter().position(|t| *t == p.tone_a).unwrap();
            let j = self.tones.iter().position(|t| *t == p.tone_b).unwrap();
            grid[i][j] = Some(if adjusted { p.adjusted_p } else { p.raw_p });
        }
        grid
    }

    pub fn grid_csv(&self, adjusted: bool) -> String {
        let mut out = String::new();
        for t in &self.tones {
            out.push(',');
            out.push_str(t.as_str());
        }
        out.push('\n');
        for (t, row) in self.tones.iter().zip(self.grid(adjusted)) {
            out.push_str(t.as_str());
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format!("{v:.3}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Tests every tone pair and applies Bonferroni correction over all of them.
pub fn audit_model(groups: &[LabeledGroup], model_id: &str, cfg: &PermutationConfig) -> Result<SignificanceReport> {
    cfg.validate()?;
    let first = groups.first().ok_or(AuditError::NoGroups)?;
    let tones = first.tones.clone();
    let pairs: Vec<(SkinTone, SkinTone)> = tones
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| tones[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let tests: Vec<PairTest> = pairs
        .par_iter()
        .map(|&pair| pair_test(groups, pair, model_id, cfg))
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = tests.iter().map(|t| t.raw_p).collect();
    let adjusted = bonferroni(&raw)?;
    let results = pairs
        .iter()
        .zip(&tests)
        .zip(adjusted)
        .map(|((&(a, b), t), adj)| PairResult {
            tone_a: a,
            tone_b: b,
            observed_count: t.observed,
            raw_p: t.raw_p,
            adjusted_p: adj,
            significant_raw: t.raw_p < cfg.alpha,
            significant_adjusted: adj < cfg.alpha,
        })
        .collect();
    Ok(SignificanceReport {
        model_id: model_id.to_string(),
        tones,
        n_groups: groups.len() as u64,
        m: pairs.len(),
        config: *cfg,
        pairs: results,
    })
}

/// Kolmogorov–Smirnov distance between the sample's empirical CDF and U(0, 1).
pub fn ks_uniform_distance(samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
