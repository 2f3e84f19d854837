//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use ctrl_audit::labelmatch::{match_lexical, MatchTable, Vocabulary};
use ctrl_audit::manifest::{FactorSpace, Manifest, SkinTone, VideoRecord};
use ctrl_audit::metrics::{LabeledGroup, PredictionLog, PredictionRecord};
use ctrl_audit::simulator::{BiasRule, SimulatorConfig};
use rand::seq::SliceRandom;
use rand::Rng;

/// Labels outside the action vocabulary that simulated models confuse actions with.
pub const DISTRACTORS: [&str; 3] = ["bow", "idle", "shrug"];

pub fn space(tones: &[SkinTone], actions: usize, motions: usize, viewpoints: usize, backgrounds: usize) -> FactorSpace {
    FactorSpace {
        skin_tones: tones.to_vec(),
        actions: (0..actions).map(|i| format!("act{i}")).collect(),
        motion_ids: (0..motions).map(|i| i.to_string()).collect(),
        viewpoints: (0..viewpoints).map(|i| format!("vp{i}")).collect(),
        backgrounds: (0..backgrounds).map(|i| format!("bg{i}")).collect(),
    }
}

/// 7 tones × 20 actions × 10 motions at one scene setting: 200 motion groups.
pub fn audit_space() -> FactorSpace {
    FactorSpace { viewpoints: vec!["near".into()], backgrounds: vec!["stadium".into()], ..FactorSpace::default() }
}

/// Maps every action to the identical target label; distractors stay unmatched targets.
pub fn action_table(actions: &[String]) -> MatchTable {
    let source = Vocabulary::new("source", actions).unwrap();
    let target = Vocabulary::new("target", actions.iter().map(String::as_str).chain(DISTRACTORS)).unwrap();
    match_lexical(&source, &target, 1, 1.0).unwrap()
}

pub fn target_vocab_text(actions: &[String]) -> String {
    actions.iter().map(String::as_str).chain(DISTRACTORS).map(|l| format!("{l}\n")).collect()
}

/// Tone-blind simulator with per-video noise: labels are exchangeable within each group.
pub fn null_config(actions: &[String], seed: u64) -> SimulatorConfig {
    SimulatorConfig {
        model_id: "null".into(),
        seed,
        base_accuracy: 0.6,
        confusion_pool: actions
            .iter()
            .map(|a| (a.clone(), DISTRACTORS.iter().map(|d| d.to_string()).collect()))
            .collect(),
        noise: 0.5,
        ..SimulatorConfig::default()
    }
}

/// Low-noise model that flips `tone` to a distractor half of the time.
pub fn planted_config(actions: &[String], seed: u64, tone: SkinTone) -> SimulatorConfig {
    SimulatorConfig {
        model_id: "planted".into(),
        noise: 0.1,
        bias_rules: vec![BiasRule {
            tones: vec![tone],
            action: "*".into(),
            flip_probability: 0.5,
            flip_target: "shrug".into(),
        }],
        ..null_config(actions, seed)
    }
}

/// Product manifest over `space` with `drop` random rows removed.
pub fn random_manifest(space: &FactorSpace, drop: usize, rng: &mut impl Rng) -> Manifest {
    let full = ctrl_audit::manifest::product_manifest(space, space.skin_tones[0]).unwrap();
    let mut records: Vec<VideoRecord> = full.records().to_vec();
    records.shuffle(rng);
    records.truncate(records.len().saturating_sub(drop));
    Manifest::from_records(records).unwrap()
}

/// Rank-1 labels drawn uniformly from `labels`, plus a rank-2 row per video.
pub fn random_log(manifest: &Manifest, model_id: &str, labels: &[&str], rng: &mut impl Rng) -> PredictionLog {
    let mut records = Vec::new();
    for r in manifest.records() {
        for rank in 1..=2 {
            records.push(PredictionRecord {
                video_id: r.video_id.clone(),
                model_id: model_id.to_string(),
                rank,
                label: labels[rng.random_range(0..labels.len())].to_string(),
                score: 1.0 / rank as f64,
            });
        }
    }
    PredictionLog::from_records(records).unwrap()
}

/// Divergence counts by direct enumeration of record pairs.
///
/// Returns counts keyed by ordered tone pair and the number of complete groups.
pub fn brute_divergence(
    manifest: &Manifest,
    preds: &PredictionLog,
    model_id: &str,
) -> (BTreeMap<(SkinTone, SkinTone), u64>, u64) {
    let tones = &manifest.space().skin_tones;
    let mut groups: HashMap<(String, String, String, String), Vec<&VideoRecord>> = HashMap::new();
    for r in manifest.records() {
        groups
            .entry((r.action.clone(), r.motion_id.clone(), r.viewpoint.clone(), r.background.clone()))
            .or_default()
            .push(r);
    }
    let mut counts = BTreeMap::new();
    let mut n = 0;
    for members in groups.values() {
        if members.len() != tones.len() {
            continue;
        }
        n += 1;
        for a in members {
            for b in members {
                let la = preds.top1(model_id, &a.video_id).unwrap();
                let lb = preds.top1(model_id, &b.video_id).unwrap();
                *counts.entry((a.skin_tone, b.skin_tone)).or_insert(0) += u64::from(la != lb);
            }
        }
    }
    (counts, n)
}

pub fn random_labeled(tones: &[SkinTone], groups: usize, alphabet: &[&str], rng: &mut impl Rng) -> Vec<LabeledGroup> {
    (0..groups)
        .map(|_| {
            let mut digest = [0u8; 32];
            rng.fill(&mut digest);
            LabeledGroup {
                action: "act".into(),
                digest,
                tones: tones.to_vec(),
                labels: tones.iter().map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string()).collect(),
            }
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exact upper-tail permutation p-value for slots `(i, j)`, enumerating every
/// joint within-group relabeling.
pub fn exact_p(groups: &[LabeledGroup], i: usize, j: usize) -> f64 {
    let n = groups[0].labels.len();
    let perms = permutations(n);
    let observed = groups.iter().filter(|g| g.labels[i] != g.labels[j]).count();
    let mut index = vec![0usize; groups.len()];
    let (mut at_least, mut total) = (0u64, 0u64);
    loop {
        let d = groups
            .iter()
            .zip(&index)
            .filter(|(g, &k)| g.labels[perms[k][i]] != g.labels[perms[k][j]])
            .count();
        total += 1;
        at_least += u64::from(d >= observed);
        let mut pos = 0;
        loop {
            if pos == index.len() {
                return at_least as f64 / total as f64;
            }
            index[pos] += 1;
            if index[pos] < perms.len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}
