//! Viewpoint/background ablation on the single-tone subset, best-setting
//! selection per action, and the filtered 1,400-clip manifest.
//!
//! Predictions come from a toy model that sees near-view clips in front of a
//! plain backdrop better than distant ones.
//!
//! ```bash
//! cargo run --example best_settings
//! ```

use ctrl_audit::jobgen::{filter_to_best, select_best_settings};
use ctrl_audit::labelmatch::{match_lexical, Vocabulary};
use ctrl_audit::manifest::{group_motions, product_manifest, Variant};
use ctrl_audit::metrics::{accuracy, baseline_summary, AblationTable, Attribute, PredictionLog, PredictionRecord};
use ctrl_audit::{FactorSpace, Manifest, SkinTone};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_predictions(manifest: &Manifest, model_id: &str, seed: u64) -> ctrl_audit::Result<PredictionLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = manifest
        .records()
        .iter()
        .map(|r| {
            let mut p: f64 = 0.5;
            p += if r.viewpoint == "near" { 0.25 } else { 0.0 };
            p += if r.background == "konzerthaus" { 0.1 } else { 0.0 };
            let label = if rng.random::<f64>() < p { r.action.clone() } else { "unknown".to_string() };
            PredictionRecord { video_id: r.video_id.clone(), model_id: model_id.into(), rank: 1, label, score: 1.0 }
        })
        .collect();
    PredictionLog::from_records(records)
}

fn main() -> ctrl_audit::Result<()> {
    let space = FactorSpace::default();
    let full = product_manifest(&space, SkinTone::White)?;
    let initial = Manifest::from_records(full.records().iter().filter(|r| r.variant == Variant::Initial).cloned().collect())?;
    println!("{} clips in the factor product, {} in the single-tone subset", full.len(), initial.len());

    let source = Vocabulary::new("dataset", &space.actions)?;
    let target = Vocabulary::new("model", space.actions.iter().map(String::as_str).chain(["unknown"]))?;
    let table = match_lexical(&source, &target, 1, 1.0)?;

    let by = [Attribute::Action, Attribute::Viewpoint, Attribute::Background];
    let tables = ["model_a", "model_b"]
        .iter()
        .enumerate()
        .map(|(i, m)| accuracy(&initial, &toy_predictions(&initial, m, i as u64)?, &table, m, &by))
        .collect::<ctrl_audit::Result<Vec<_>>>()?;
    let ablation = AblationTable::merge(tables)?;

    let best = select_best_settings(&ablation)?;
    for (action, s) in best.settings.iter().take(5) {
        println!("{action:>10}: {} / {} ({:.2})", s.viewpoint, s.background, s.mean_accuracy);
    }
    println!("{:>10}  ...", "");
    for b in baseline_summary(&ablation, &best)? {
        println!(
            "{}: best {:.3}, worst per action {:.3}, other settings {:.3}",
            b.model_id, b.best.value, b.worst_per_action.value, b.non_best_mean.value
        );
    }

    let subset = filter_to_best(&full, &best);
    let groups = group_motions(&subset.manifest)?;
    println!(
        "best-setting subset: {} clips, complete: {}, {} motion groups",
        subset.manifest.len(),
        subset.report.complete,
        groups.iter().filter(|g| g.complete).count()
    );
    Ok(())
}
