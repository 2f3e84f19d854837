//! Audit a simulated tone-blind model: divergence matrix, permutation tests
//! and Bonferroni correction over all 21 tone pairs.
//!
//! ```bash
//! cargo run --release --example divergence_audit
//! ```

use std::collections::BTreeMap;

use ctrl_audit::audit::run_audit;
use ctrl_audit::labelmatch::{match_lexical, Vocabulary};
use ctrl_audit::manifest::product_manifest;
use ctrl_audit::simulator::{simulate, SimulatorConfig};
use ctrl_audit::stats::PermutationConfig;
use ctrl_audit::{FactorSpace, SkinTone};

fn main() -> ctrl_audit::Result<()> {
    // one scene setting: 20 actions × 10 motions = 200 motion groups of 7 clips
    let space = FactorSpace { viewpoints: vec!["near".into()], backgrounds: vec!["stadium".into()], ..FactorSpace::default() };
    let manifest = product_manifest(&space, SkinTone::White)?;
    let distractors = ["bow", "idle", "shrug"];
    let table = match_lexical(
        &Vocabulary::new("dataset", &space.actions)?,
        &Vocabulary::new("model", space.actions.iter().map(String::as_str).chain(distractors))?,
        1,
        1.0,
    )?;

    let sim = SimulatorConfig {
        model_id: "tone_blind".into(),
        seed: 42,
        base_accuracy: 0.6,
        noise: 0.5,
        confusion_pool: space.actions.iter().map(|a| (a.clone(), distractors.map(String::from).to_vec())).collect::<BTreeMap<_, _>>(),
        ..SimulatorConfig::default()
    };
    let preds = simulate(&manifest, &table, &sim)?;

    let cfg = PermutationConfig { seed: 42, ..PermutationConfig::default() };
    let results = run_audit(&manifest, &preds, &table, std::slice::from_ref(&sim.model_id), &cfg)?;
    let audit = &results.models[0];

    println!("{} complete motion groups", results.n_groups);
    print!("{:>18}", "");
    for t in &audit.divergence.tones {
        print!("{:>8.7}", t.as_str());
    }
    println!();
    for (t, row) in audit.divergence.tones.iter().zip(&audit.divergence.rate) {
        print!("{:>18}", t.as_str());
        for v in row {
            print!("{v:>8.2}");
        }
        println!();
    }

    let min = audit.significance.pairs.iter().min_by(|a, b| a.raw_p.total_cmp(&b.raw_p)).unwrap();
    println!(
        "smallest raw p: {}/{} = {:.4} (adjusted {:.3}); {} of {} pairs significant after correction",
        min.tone_a,
        min.tone_b,
        min.raw_p,
        min.adjusted_p,
        audit.significance.significant_adjusted(),
        audit.significance.m
    );
    Ok(())
}
