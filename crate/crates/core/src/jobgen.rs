//! Render-job expansion and best-setting selection.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::manifest::{FactorSpace, Manifest, SkinTone, ValidationReport};
use crate::metrics::{AblationTable, Attribute};

pub const PLACEHOLDERS: [&str; 5] = ["action", "motion_id", "skin_tone", "viewpoint", "background"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderJob {
    pub job_id: String,
    pub action: String,
    pub motion_id: String,
    pub skin_tone: SkinTone,
    pub viewpoint: String,
    pub background: String,
    pub output_path: String,
}

fn check_template(template: &str) -> Result<()> {
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| AuditError::InvalidParameter(format!("unclosed `{{` in template `{template}`")))?;
        let name = &rest[open + 1..open + close];
        if !PLACEHOLDERS.contains(&name) {
            return Err(AuditError::UnknownPlaceholder(name.to_string()));
        }
        rest = &rest[open + close + 1..];
    }
    for p in PLACEHOLDERS {
        if !template.contains(&format!("{{{p}}}")) {
            return Err(AuditError::MissingPlaceholder(p.to_string()));
        }
    }
    Ok(())
}

fn instantiate(template: &str, values: [&str; 5]) -> String {
    let mut out = template.to_string();
    for (p, v) in PLACEHOLDERS.iter().zip(values) {
        out = out.replace(&format!("{{{p}}}"), v);
    }
    out
}

/// One job per tuple of the factor product, ordered lexicographically by
/// (action, motion_id, skin_tone, viewpoint, background).
pub fn expand_jobs(space: &FactorSpace, path_template: &str) -> Result<Vec<RenderJob>> {
    space.validate()?;
    check_template(path_template)?;

    let sorted = |v: &[String]| {
        let mut v = v.to_vec();
        v.sort();
        v
    };
    let (actions, motions, viewpoints, backgrounds) = (
        sorted(&space.actions),
        sorted(&space.motion_ids),
        sorted(&space.viewpoints),
        sorted(&space.backgrounds),
    );
    let mut tones = space.skin_tones.clone();
    tones.sort_by_key(|t| t.as_str());

    let total = space.product_size();
    let width = total.to_string().len().max(5);
    let mut jobs = Vec::with_capacity(total);
    let mut paths = HashSet::with_capacity(total);
    for a in &actions {
        for m in &motions {
            for &t in &tones {
                for v in &viewpoints {
                    for b in &backgrounds {
                        let output_path = instantiate(path_template, [a, m, t.as_str(), v, b]);
                        if !paths.insert(output_path.clone()) {
                            return Err(AuditError::OutputPathCollision(output_path));
                        }
                        jobs.push(RenderJob {
                            job_id: format!("job{:0width$}", jobs.len()),
                            action: a.clone(),
                            motion_id: m.clone(),
                            skin_tone: t,
                            viewpoint: v.clone(),
                            background: b.clone(),
                            output_path,
                        });
                    }
                }
            }
        }
    }
    Ok(jobs)
}

pub fn jobs_to_csv(jobs: &[RenderJob]) -> String {
    let mut out = String::from("job_id,action,motion_id,skin_tone,viewpoint,background,output_path\n");
    for j in jobs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            j.job_id, j.action, j.motion_id, j.skin_tone, j.viewpoint, j.background, j.output_path
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSetting {
    pub viewpoint: String,
    pub background: String,
    /// Accuracy averaged uniformly over the audited models.
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BestSettings {
    pub settings: BTreeMap<String, BestSetting>,
}

/// Picks, per action, the (viewpoint, background) cell with the highest
/// accuracy averaged over models. Ties go to the lexicographically first cell.
///
/// The table must be grouped by action, viewpoint and background. Every
/// model must have a cell for every (viewpoint, background) combination seen
/// for that action.
pub fn select_best_settings(ablation: &AblationTable) -> Result<BestSettings> {
    let pos = |a: Attribute| {
        ablation
            .position(a)
            .ok_or_else(|| AuditError::InvalidParameter(format!("ablation table is not grouped by {}", a.name())))
    };
    let (ia, iv, ib) = (pos(Attribute::Action)?, pos(Attribute::Viewpoint)?, pos(Attribute::Background)?);
    if ablation.group_by.len() != 3 {
        return Err(AuditError::InvalidParameter(
            "ablation table must be grouped by exactly action, viewpoint, background".into(),
        ));
    }

    let models: BTreeSet<&str> = ablation.cells.iter().map(|c| c.model_id.as_str()).collect();
    let mut viewpoints: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut backgrounds: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut acc: BTreeMap<(&str, &str, &str, &str), f64> = BTreeMap::new();
    for c in &ablation.cells {
        let (a, v, b) = (c.key[ia].as_str(), c.key[iv].as_str(), c.key[ib].as_str());
        viewpoints.entry(a).or_default().insert(v);
        backgrounds.entry(a).or_default().insert(b);
        if c.total == 0 {
            return Err(empty_cell(&c.model_id, a, v, b));
        }
        acc.insert((a, v, b, c.model_id.as_str()), c.accuracy);
    }

    let mut settings = BTreeMap::new();
    for (action, vps) in &viewpoints {
        let mut best: Option<BestSetting> = None;
        for v in vps {
            for b in &backgrounds[action] {
                let mut sum = 0.0;
                for m in &models {
                    sum += acc.get(&(*action, *v, *b, *m)).ok_or_else(|| empty_cell(m, action, v, b))?;
                }
                let mean = sum / models.len() as f64;
                if best.as_ref().is_none_or(|cur| mean > cur.mean_accuracy) {
                    best = Some(BestSetting {
                        viewpoint: v.to_string(),
                        background: b.to_string(),
                        mean_accuracy: mean,
                    });
                }
            }
        }
        if let Some(best) = best {
            settings.insert(action.to_string(), best);
        }
    }
    Ok(BestSettings { settings })
}

fn empty_cell(model: &str, action: &str, viewpoint: &str, background: &str) -> AuditError {
    AuditError::EmptyCell {
        model_id: model.to_string(),
        action: action.to_string(),
        viewpoint: viewpoint.to_string(),
        background: background.to_string(),
    }
}

/// The best-setting subset of a manifest with its completeness re-check.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSubset {
    pub manifest: Manifest,
    /// Completeness over action × motion × skin tone at each action's best setting.
    pub report: ValidationReport,
}

/// Keeps the records shot at their action's best (viewpoint, background).
/// Records of actions without a best setting are dropped.
pub fn filter_to_best(manifest: &Manifest, best: &BestSettings) -> BestSubset {
    let records: Vec<_> = manifest
        .records()
        .iter()
        .filter(|r| {
            best.settings
                .get(&r.action)
                .is_some_and(|s| s.viewpoint == r.viewpoint && s.background == r.background)
        })
        .cloned()
        .collect();
    let filtered = Manifest::from_records(records).expect("subset of a valid manifest");

    let space = manifest.space();
    let mut expected = BTreeSet::new();
    for a in space.actions.iter().filter(|a| best.settings.contains_key(*a)) {
        let s = &best.settings[a];
        for m in &space.motion_ids {
            for t in &space.skin_tones {
                expected.insert([a.clone(), m.clone(), t.to_string(), s.viewpoint.clone(), s.background.clone()]);
            }
        }
    }
    let report = ValidationReport::compare(expected, filtered.records());
    BestSubset { manifest: filtered, report }
}
