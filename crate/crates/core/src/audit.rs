//! End-to-end skin-tone audit: group, label, divergence, significance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::labelmatch::MatchTable;
use crate::manifest::{group_motions, Manifest};
use crate::metrics::{
    complete_groups, divergence_from_labeled, error_from_labeled, label_groups, DivergenceMatrix, ErrorMatrix,
    LabeledGroup, PredictionLog,
};
use crate::stats::{audit_model, PermutationConfig, SignificanceReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAudit {
    pub model_id: String,
    pub divergence: DivergenceMatrix,
    pub by_action: BTreeMap<String, DivergenceMatrix>,
    pub errors: ErrorMatrix,
    pub significance: SignificanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResults {
    pub n_groups: u64,
    /// Incomplete motion groups left out of every computation.
    pub excluded_groups: u64,
    pub models: Vec<ModelAudit>,
}

fn audit_one(model_id: &str, labeled: &[LabeledGroup], table: &MatchTable, cfg: &PermutationConfig, excluded: u64) -> Result<ModelAudit> {
    let mut divergence = divergence_from_labeled(model_id, labeled)?;
    divergence.excluded_groups = excluded;
    let mut by_group: BTreeMap<String, Vec<LabeledGroup>> = BTreeMap::new();
    for g in labeled {
        by_group.entry(g.action.clone()).or_default().push(g.clone());
    }
    let by_action = by_group
        .into_iter()
        .map(|(a, gs)| Ok((a, divergence_from_labeled(model_id, &gs)?)))
        .collect::<Result<_>>()?;
    Ok(ModelAudit {
        model_id: model_id.to_string(),
        divergence,
        by_action,
        errors: error_from_labeled(model_id, labeled, table)?,
        significance: audit_model(labeled, model_id, cfg)?,
    })
}

/// Runs the audit for each model over the manifest's complete motion groups.
pub fn run_audit(
    manifest: &Manifest,
    preds: &PredictionLog,
    table: &MatchTable,
    model_ids: &[String],
    cfg: &PermutationConfig,
) -> Result<AuditResults> {
    cfg.validate()?;
    let groups = group_motions(manifest)?;
    let (complete, excluded) = complete_groups(&groups);
    if complete.is_empty() {
        return Err(AuditError::NoGroups);
    }
    let excluded = excluded as u64;
    let models = model_ids
        .par_iter()
        .map(|model_id| {
            let labeled = label_groups(&complete, preds, model_id)?;
            audit_one(model_id, &labeled, table, cfg, excluded)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditResults { n_groups: complete.len() as u64, excluded_groups: excluded, models })
}

/// Runs `f` on a rayon pool with `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| AuditError::Config(e.to_string()))?;
    Ok(pool.install(f))
}
