//! Write the full report bundle (tables, SVG figures, run metadata) for an
//! audit of two simulated models.
//!
//! ```bash
//! cargo run --release --example render_report -- /tmp/ctrl-audit-report
//! ```

use ctrl_audit::audit::run_audit;
use ctrl_audit::labelmatch::{match_lexical, Vocabulary};
use ctrl_audit::manifest::product_manifest;
use ctrl_audit::metrics::PredictionLog;
use ctrl_audit::report::{audit_bundle, RunMetadata};
use ctrl_audit::simulator::{simulate, BiasRule, SimulatorConfig};
use ctrl_audit::stats::PermutationConfig;
use ctrl_audit::{FactorSpace, SkinTone};

fn main() -> ctrl_audit::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-report".into());
    let space = FactorSpace {
        actions: ["cartwheel", "golf", "jog", "yoga"].map(String::from).to_vec(),
        viewpoints: vec!["near".into()],
        backgrounds: vec!["stadium".into()],
        ..FactorSpace::default()
    };
    let manifest = product_manifest(&space, SkinTone::White)?;
    let pool = ["bow", "idle", "capoeira"];
    let table = match_lexical(
        &Vocabulary::new("dataset", &space.actions)?,
        &Vocabulary::new("model", space.actions.iter().map(String::as_str).chain(pool))?,
        1,
        1.0,
    )?;
    let base = SimulatorConfig {
        base_accuracy: 0.7,
        noise: 0.2,
        confusion_pool: space.actions.iter().map(|a| (a.clone(), pool.map(String::from).to_vec())).collect(),
        ..SimulatorConfig::default()
    };
    let fair = SimulatorConfig { model_id: "fair".into(), ..base.clone() };
    let skewed = SimulatorConfig {
        model_id: "skewed".into(),
        bias_rules: vec![BiasRule {
            tones: vec![SkinTone::African],
            action: "*".into(),
            flip_probability: 0.5,
            flip_target: "capoeira".into(),
        }],
        ..base
    };
    let preds = PredictionLog::merge([simulate(&manifest, &table, &fair)?, simulate(&manifest, &table, &skewed)?])?;

    let cfg = PermutationConfig::default();
    let models = preds.model_ids();
    let results = run_audit(&manifest, &preds, &table, &models, &cfg)?;
    let meta = RunMetadata::new("audit", serde_json::to_value(cfg)?);
    let bundle = audit_bundle(&results, meta)?;
    bundle.write_to(out.as_ref())?;

    println!("wrote {out}: run.json, {} documents, {} tables, {} figures", bundle.documents.len(), bundle.tables.len(), bundle.figures.len());
    for name in bundle.figures.keys() {
        println!("  figures/{name}");
    }
    for m in &results.models {
        println!("{}: {} adjusted-significant pairs", m.model_id, m.significance.significant_adjusted());
    }
    Ok(())
}
