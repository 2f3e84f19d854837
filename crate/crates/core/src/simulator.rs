//! Seeded generator of prediction logs with known bias structure.
//!
//! Draw structure, per video:
//!
//! 1. Base label, drawn once per motion group (so all tones agree): the
//!    action's matched label with probability `base_accuracy`, otherwise a
//!    uniform pick from the action's confusion pool.
//! 2. Noise: with probability `noise` the label is replaced by a uniform pick
//!    from `[matched label] + confusion pool`, independently per video. This
//!    does not look at skin tone, so it keeps labels exchangeable within a group.
//! 3. Bias rules, in order: a rule whose tones include the video's tone and
//!    whose action matches replaces the label with `flip_target` with
//!    probability `flip_probability`.
//!
//! Every draw uses its own keyed stream, so the output is a pure function of
//! (manifest, match table, config).

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::labelmatch::{normalize_label, MatchTable};
use crate::manifest::{Manifest, SkinTone};
use crate::metrics::{PredictionLog, PredictionRecord};
use crate::rng::StreamKey;

pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRule {
    /// One tone, or a pair of tones that both receive the flip.
    pub tones: Vec<SkinTone>,
    /// Action the rule applies to, or `*` for all actions.
    #[serde(default = "wildcard")]
    pub action: String,
    pub flip_probability: f64,
    pub flip_target: String,
}

fn wildcard() -> String {
    WILDCARD.to_string()
}

fn default_model_id() -> String {
    "simulated".to_string()
}

fn default_accuracy() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    #[serde(default = "default_model_id")]
    pub model_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_accuracy")]
    pub base_accuracy: f64,
    /// Per-action overrides of `base_accuracy`.
    #[serde(default)]
    pub action_accuracy: BTreeMap<String, f64>,
    #[serde(default)]
    pub confusion_pool: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub bias_rules: Vec<BiasRule>,
    #[serde(default)]
    pub noise: f64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            model_id: default_model_id(),
            seed: 0,
            base_accuracy: default_accuracy(),
            action_accuracy: BTreeMap::new(),
            confusion_pool: BTreeMap::new(),
            bias_rules: Vec::new(),
            noise: 0.0,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(AuditError::InvalidParameter(format!("{name} = {p} is outside [0, 1]")))
    }
}

impl SimulatorConfig {
    pub fn validate(&self, table: &MatchTable) -> Result<()> {
        check_probability("base_accuracy", self.base_accuracy)?;
        check_probability("noise", self.noise)?;
        for (action, p) in &self.action_accuracy {
            check_probability(&format!("action_accuracy[{action}]"), *p)?;
        }
        let in_vocab = |label: &str| -> Result<()> {
            let label = normalize_label(label)?;
            if table.target_labels.is_empty() || table.target_labels.contains(&label) {
                Ok(())
            } else {
                Err(AuditError::InvalidParameter(format!("`{label}` is not in the target vocabulary")))
            }
        };
        for rule in &self.bias_rules {
            check_probability("flip_probability", rule.flip_probability)?;
            if rule.tones.is_empty() || rule.tones.len() > 2 {
                return Err(AuditError::InvalidParameter("a bias rule names one or two tones".into()));
            }
            in_vocab(&rule.flip_target)?;
        }
        for pool in self.confusion_pool.values() {
            for label in pool {
                in_vocab(label)?;
            }
        }
        Ok(())
    }

    fn accuracy_for(&self, action: &str) -> f64 {
        self.action_accuracy.get(action).copied().unwrap_or(self.base_accuracy)
    }
}

struct ActionModel {
    correct: String,
    accuracy: f64,
    pool: Vec<String>,
}

/// Generates one rank-1 record (score 1.0) per manifest video, sorted by video id.
pub fn simulate(manifest: &Manifest, table: &MatchTable, cfg: &SimulatorConfig) -> Result<PredictionLog> {
    cfg.validate(table)?;

    let mut models: BTreeMap<&str, ActionModel> = BTreeMap::new();
    for action in &manifest.space().actions {
        let correct = table
            .primary_target(action)
            .ok_or_else(|| AuditError::UnmatchedAction(action.clone()))?
            .to_string();
        let pool = cfg
            .confusion_pool
            .get(action)
            .map(|p| p.iter().map(|l| normalize_label(l)).collect::<Result<Vec<_>>>())
            .transpose()?
            .unwrap_or_default();
        let accuracy = cfg.accuracy_for(action);
        if pool.is_empty() && accuracy < 1.0 {
            return Err(AuditError::InvalidParameter(format!(
                "action `{action}` needs a confusion pool when its accuracy is below 1"
            )));
        }
        models.insert(action, ActionModel { correct, accuracy, pool });
    }
    let rules: Vec<(usize, &BiasRule, String)> = cfg
        .bias_rules
        .iter()
        .enumerate()
        .map(|(k, r)| Ok((k, r, normalize_label(&r.flip_target)?)))
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(manifest.len());
    for video in manifest.records() {
        let model = &models[video.action.as_str()];
        let key = |domain: &str| StreamKey::new(domain).u64(cfg.seed).str(&cfg.model_id);

        let mut rng = key("ctrl-audit/sim/group").str(&video.group_key().to_string()).rng();
        let mut label = if rng.random::<f64>() < model.accuracy {
            model.correct.clone()
        } else {
            model.pool[rng.random_range(0..model.pool.len())].clone()
        };

        if cfg.noise > 0.0 {
            let mut rng = key("ctrl-audit/sim/noise").str(&video.video_id).rng();
            if rng.random::<f64>() < cfg.noise {
                let pick = rng.random_range(0..=model.pool.len());
                label = if pick == 0 { model.correct.clone() } else { model.pool[pick - 1].clone() };
            }
        }

        for (k, rule, target) in &rules {
            let applies = rule.tones.contains(&video.skin_tone)
                && (rule.action == WILDCARD || rule.action == video.action);
            if !applies {
                continue;
            }
            let mut rng = key("ctrl-audit/sim/bias").u64(*k as u64).str(&video.video_id).rng();
            if rng.random::<f64>() < rule.flip_probability {
                label = target.clone();
            }
        }

        records.push(PredictionRecord {
            video_id: video.video_id.clone(),
            model_id: cfg.model_id.clone(),
            rank: 1,
            label,
            score: 1.0,
        });
    }
    records.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    PredictionLog::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelmatch::{match_lexical, Vocabulary};
    use crate::manifest::{group_motions, product_manifest, FactorSpace};
    use crate::metrics::{accuracy, divergence_by_action, divergence_matrix, Attribute};

    fn setup(actions: &[&str], motions: usize) -> (Manifest, MatchTable) {
        let space = FactorSpace {
            actions: actions.iter().map(|s| s.to_string()).collect(),
            motion_ids: (0..motions).map(|i| i.to_string()).collect(),
            viewpoints: vec!["far".into()],
            backgrounds: vec!["stadium".into()],
            ..FactorSpace::default()
        };
        let m = product_manifest(&space, SkinTone::White).unwrap();
        let src = Vocabulary::new("src", actions).unwrap();
        let tgt = Vocabulary::new("tgt", ["cartwheeling", "capoeira", "jogging", "juggling", "yoga", "golf"]).unwrap();
        let t = match_lexical(&src, &tgt, 1, 0.4).unwrap();
        (m, t)
    }

    fn pools(actions: &[&str]) -> BTreeMap<String, Vec<String>> {
        actions
            .iter()
            .map(|a| (a.to_string(), vec!["juggling".to_string(), "capoeira".to_string(), "golf".to_string()]))
            .collect()
    }

    #[test]
    fn no_bias_means_zero_divergence() {
        let actions = ["cartwheel", "jog"];
        let (m, t) = setup(&actions, 30);
        let cfg = SimulatorConfig { seed: 3, confusion_pool: pools(&actions), ..Default::default() };
        let log = simulate(&m, &t, &cfg).unwrap();
        let groups = group_motions(&m).unwrap();
        let d = divergence_matrix(&groups, &log, "simulated").unwrap();
        assert!(d.counts.iter().flatten().all(|&c| c == 0));
        // but labels do vary across groups
        let distinct: std::collections::BTreeSet<_> = log.records().iter().map(|r| &r.label).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn certain_flip_diverges_everywhere() {
        let actions = ["cartwheel", "jog"];
        let (m, t) = setup(&actions, 20);
        let mut pool = pools(&actions);
        pool.insert("cartwheel".into(), vec!["juggling".into()]);
        let cfg = SimulatorConfig {
            seed: 11,
            confusion_pool: pool,
            bias_rules: vec![BiasRule {
                tones: vec![SkinTone::African],
                action: "cartwheel".into(),
                flip_probability: 1.0,
                flip_target: "capoeira".into(),
            }],
            ..Default::default()
        };
        let log = simulate(&m, &t, &cfg).unwrap();
        let groups = group_motions(&m).unwrap();
        let by_action = divergence_by_action(&groups, &log, "simulated").unwrap();
        let cw = &by_action["cartwheel"];
        for tone in SkinTone::ALL.into_iter().filter(|t| *t != SkinTone::African) {
            assert_eq!(cw.rate_of(SkinTone::African, tone), Some(1.0));
        }
        assert_eq!(cw.rate_of(SkinTone::White, SkinTone::Asian), Some(0.0));
        assert!(by_action["jog"].counts.iter().flatten().all(|&c| c == 0));
    }

    #[test]
    fn perfect_accuracy() {
        let actions = ["cartwheel", "jog", "yoga"];
        let (m, t) = setup(&actions, 4);
        let cfg = SimulatorConfig { base_accuracy: 1.0, ..Default::default() };
        let log = simulate(&m, &t, &cfg).unwrap();
        for group_by in [vec![Attribute::Action], vec![Attribute::SkinTone, Attribute::Viewpoint], vec![]] {
            let table = accuracy(&m, &log, &t, "simulated", &group_by).unwrap();
            assert!(table.cells.iter().all(|c| c.accuracy == 1.0));
        }
    }

    #[test]
    fn pure_function_of_inputs() {
        let actions = ["cartwheel", "jog"];
        let (m, t) = setup(&actions, 5);
        let cfg = SimulatorConfig { seed: 9, noise: 0.4, confusion_pool: pools(&actions), ..Default::default() };
        assert_eq!(simulate(&m, &t, &cfg).unwrap().to_csv(), simulate(&m, &t, &cfg).unwrap().to_csv());
        let other = SimulatorConfig { seed: 10, ..cfg.clone() };
        assert_ne!(simulate(&m, &t, &cfg).unwrap().to_csv(), simulate(&m, &t, &other).unwrap().to_csv());
    }

    #[test]
    fn config_errors() {
        let actions = ["cartwheel"];
        let (m, t) = setup(&actions, 1);
        let err = simulate(&m, &t, &SimulatorConfig::default()).unwrap_err();
        assert!(matches!(err, AuditError::InvalidParameter(_)));
        let cfg = SimulatorConfig { base_accuracy: 1.5, ..Default::default() };
        assert!(simulate(&m, &t, &cfg).is_err());
        let cfg = SimulatorConfig {
            base_accuracy: 1.0,
            bias_rules: vec![BiasRule {
                tones: vec![SkinTone::Asian],
                action: WILDCARD.into(),
                flip_probability: 0.5,
                flip_target: "not a label".into(),
            }],
            ..Default::default()
        };
        assert!(simulate(&m, &t, &cfg).is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: SimulatorConfig = serde_json::from_str(
            r#"{"seed": 4, "bias_rules": [{"tones": ["african"], "flip_probability": 0.5, "flip_target": "capoeira"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.model_id, "simulated");
        assert_eq!(cfg.base_accuracy, 0.7);
        assert_eq!(cfg.bias_rules[0].action, WILDCARD);
    }
}
