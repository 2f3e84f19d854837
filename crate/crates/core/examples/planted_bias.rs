//! Plant a skin-tone bias in the simulator and recover it with the audit.
//!
//! Half of the clips with the `south_east_asian` tone get relabelled as
//! `shrug`; the six pairs involving that tone should stand out after
//! Bonferroni correction while the remaining fifteen stay quiet.
//!
//! ```bash
//! cargo run --release --example planted_bias
//! ```

use ctrl_audit::audit::run_audit;
use ctrl_audit::labelmatch::{match_lexical, Vocabulary};
use ctrl_audit::manifest::product_manifest;
use ctrl_audit::simulator::{simulate, BiasRule, SimulatorConfig};
use ctrl_audit::stats::PermutationConfig;
use ctrl_audit::{FactorSpace, SkinTone};

fn main() -> ctrl_audit::Result<()> {
    let space = FactorSpace { viewpoints: vec!["near".into()], backgrounds: vec!["stadium".into()], ..FactorSpace::default() };
    let manifest = product_manifest(&space, SkinTone::White)?;
    let pool = ["bow", "idle", "shrug"];
    let table = match_lexical(
        &Vocabulary::new("dataset", &space.actions)?,
        &Vocabulary::new("model", space.actions.iter().map(String::as_str).chain(pool))?,
        1,
        1.0,
    )?;

    let planted = SkinTone::SouthEastAsian;
    let sim = SimulatorConfig {
        model_id: "biased".into(),
        seed: 7,
        base_accuracy: 0.6,
        noise: 0.1,
        confusion_pool: space.actions.iter().map(|a| (a.clone(), pool.map(String::from).to_vec())).collect(),
        bias_rules: vec![BiasRule { tones: vec![planted], action: "*".into(), flip_probability: 0.5, flip_target: "shrug".into() }],
        ..SimulatorConfig::default()
    };
    let preds = simulate(&manifest, &table, &sim)?;
    let results = run_audit(&manifest, &preds, &table, std::slice::from_ref(&sim.model_id), &PermutationConfig { seed: 7, ..PermutationConfig::default() })?;

    println!("{:<36} {:>6} {:>8} {:>9}", "pair", "rate", "raw p", "adjusted");
    for p in &results.models[0].significance.pairs {
        let flag = if p.significant_adjusted { "*" } else { "" };
        let rate = p.observed_count as f64 / results.n_groups as f64;
        println!("{:<36} {rate:>6.2} {:>8.4} {:>9.4} {flag}", format!("{} / {}", p.tone_a, p.tone_b), p.raw_p, p.adjusted_p);
    }
    let hits = results.models[0]
        .significance
        .pairs
        .iter()
        .filter(|p| p.significant_adjusted && (p.tone_a == planted || p.tone_b == planted))
        .count();
    println!("{hits} of 6 pairs involving {planted} flagged");
    Ok(())
}
