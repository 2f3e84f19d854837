mod common;

use std::path::Path;
use std::process::{Command, Output};

use ctrl_audit::manifest::{product_manifest, FactorSpace, SkinTone};
use serde_json::Value;

use common::*;

fn ctrl_audit(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctrl-audit"));
    cmd.args(args).env_remove("CTRL_AUDIT_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// 7 tones × 3 actions × 2 motions × 2 viewpoints × 2 backgrounds, with vocabulary and null simulator config.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let space = FactorSpace {
            actions: ["jog", "kick", "wave"].map(String::from).to_vec(),
            motion_ids: ["0", "1"].map(String::from).to_vec(),
            viewpoints: ["far", "near"].map(String::from).to_vec(),
            backgrounds: ["autumn", "stadium"].map(String::from).to_vec(),
            ..FactorSpace::default()
        };
        let manifest = product_manifest(&space, SkinTone::White).unwrap();
        let csv = manifest.to_csv();
        std::fs::write(dir.path().join("manifest.csv"), &csv).unwrap();
        let mut lines: Vec<&str> = csv.lines().collect();
        lines.remove(5);
        std::fs::write(dir.path().join("incomplete.csv"), lines.join("\n") + "\n").unwrap();
        std::fs::write(dir.path().join("target_vocab.txt"), target_vocab_text(&space.actions)).unwrap();
        let sim = null_config(&space.actions, 0);
        std::fs::write(dir.path().join("sim.json"), serde_json::to_string_pretty(&sim).unwrap()).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> String {
        self.dir.path().join(rel).to_string_lossy().into_owned()
    }

    fn simulate(&self, out: &str, seed: &str) -> String {
        let o = ctrl_audit(
            &[
                "simulate", "--manifest", &self.path("manifest.csv"), "--target-vocab", &self.path("target_vocab.txt"),
                "--match-threshold", "1", "--sim-config", &self.path("sim.json"), "--seed", seed, "--out", &self.path(out),
            ],
            &[],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        self.path(&format!("{out}/predictions.csv"))
    }

    fn audit(&self, predictions: &str, out: &str, extra: &[&str]) -> Output {
        let (manifest, vocab, out) = (self.path("manifest.csv"), self.path("target_vocab.txt"), self.path(out));
        let mut args = vec![
            "audit", "--manifest", &manifest, "--predictions", predictions, "--target-vocab", &vocab,
            "--match-threshold", "1", "--permutations", "999", "--out", &out,
        ];
        args.extend(extra);
        ctrl_audit(&args, &[])
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = ctrl_audit(&["frobnicate"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_required_input_is_a_usage_error() {
    let f = Fixture::new();
    let o = ctrl_audit(&["validate", "--out", &f.path("v")], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = ctrl_audit(&["validate", "--manifest", &f.path("nope.csv"), "--out", &f.path("v")], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_reports_completeness() {
    let f = Fixture::new();
    let o = ctrl_audit(&["validate", "--manifest", &f.path("manifest.csv"), "--out", &f.path("ok")], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&f.dir.path().join("ok/validation.json"))["complete"], true);

    let o = ctrl_audit(&["validate", "--manifest", &f.path("incomplete.csv"), "--out", &f.path("bad")], &[]);
    assert_eq!(o.status.code(), Some(1));
    let report = json(&f.dir.path().join("bad/validation.json"));
    assert_eq!(report["complete"], false);
    assert_eq!(report["missing"].as_array().unwrap().len(), 1);
}

#[test]
fn expand_jobs_covers_default_space() {
    let f = Fixture::new();
    let o = ctrl_audit(&["expand-jobs", "--out", &f.path("jobs")], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&f.dir.path().join("jobs/jobs.json")).as_array().unwrap().len(), 8400);
    let csv = std::fs::read_to_string(f.dir.path().join("jobs/jobs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8401);
}

#[test]
fn audit_of_null_simulation_flags_nothing() {
    let f = Fixture::new();
    let preds = f.simulate("sim", "42");
    let o = f.audit(&preds, "audit", &["--seed", "42"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let results = json(&f.dir.path().join("audit/results.json"));
    let pairs = results["models"][0]["significance"]["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 21);
    assert!(pairs.iter().all(|p| p["significant_adjusted"] == false));
    for name in ["tables/divergence.csv", "tables/significance.csv", "figures/significance_adjusted_null.svg", "run.json"] {
        assert!(f.dir.path().join("audit").join(name).exists(), "{name}");
    }
}

#[test]
fn audit_artifacts_do_not_depend_on_workers() {
    let f = Fixture::new();
    let preds = f.simulate("sim", "5");
    for (out, workers) in [("w1", "1"), ("w3", "3")] {
        let o = f.audit(&preds, out, &["--workers", workers, "--seed", "9"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["results.json", "run.json", "tables/significance.csv", "figures/divergence_null.svg"] {
        let a = std::fs::read(f.dir.path().join("w1").join(name)).unwrap();
        let b = std::fs::read(f.dir.path().join("w3").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn flags_override_config_and_env_is_the_seed_fallback() {
    let f = Fixture::new();
    let preds = f.simulate("sim", "1");
    let config = serde_json::json!({ "seed": 3, "permutations": 199, "match_threshold": 1.0 });
    std::fs::write(f.dir.path().join("config.json"), config.to_string()).unwrap();

    let seed_of = |out: &str| json(&f.dir.path().join(out).join("run.json"))["config"]["seed"].clone();
    let base = |out: &str| {
        vec![
            "audit".to_string(), "--manifest".into(), f.path("manifest.csv"), "--predictions".into(), preds.clone(),
            "--target-vocab".into(), f.path("target_vocab.txt"), "--out".into(), f.path(out),
        ]
    };
    let run = |args: Vec<String>, env: &[(&str, &str)]| {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(ctrl_audit(&args, env).status.code(), Some(0));
    };

    let mut args = base("from_config");
    args.extend(["--config".into(), f.path("config.json")]);
    run(args.clone(), &[("CTRL_AUDIT_SEED", "8")]);
    assert_eq!(seed_of("from_config"), 3);
    assert_eq!(json(&f.dir.path().join("from_config/run.json"))["config"]["permutations"], 199);

    let mut flagged = base("from_flag");
    flagged.extend(["--config".into(), f.path("config.json"), "--seed".into(), "4".into()]);
    run(flagged, &[]);
    assert_eq!(seed_of("from_flag"), 4);

    let mut env_only = base("from_env");
    env_only.extend(["--match-threshold".into(), "1".into(), "--permutations".into(), "199".into()]);
    run(env_only, &[("CTRL_AUDIT_SEED", "8")]);
    assert_eq!(seed_of("from_env"), 8);
}

#[test]
fn run_metadata_records_inputs_and_config_digest() {
    let f = Fixture::new();
    let preds = f.simulate("sim", "1");
    assert_eq!(f.audit(&preds, "a", &[]).status.code(), Some(0));
    let meta = json(&f.dir.path().join("a/run.json"));
    assert_eq!(meta["subcommand"], "audit");
    assert_eq!(meta["config_digest"].as_str().unwrap().len(), 64);
    assert!(meta["inputs"]["manifest"].is_string());
    assert!(meta["inputs"]["predictions"].is_string());
    assert!(meta["config"].get("out").is_none());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let f = Fixture::new();
    std::fs::write(f.dir.path().join("bad.json"), r#"{ "sede": 1 }"#).unwrap();
    let o = ctrl_audit(&["validate", "--config", &f.path("bad.json"), "--manifest", &f.path("manifest.csv")], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ablate_select_best_and_report_chain() {
    let f = Fixture::new();
    let preds = f.simulate("sim", "2");
    let common = [
        "--manifest", &f.path("manifest.csv"), "--predictions", &preds, "--target-vocab",
        &f.path("target_vocab.txt"), "--match-threshold", "1",
    ];
    let with = |cmd: &str, out: &str| {
        let out = f.path(out);
        let mut args = vec![cmd];
        args.extend(common);
        args.extend(["--out", &out]);
        ctrl_audit(&args, &[]).status.code()
    };
    assert_eq!(with("ablate", "ablate"), Some(0));
    assert_eq!(with("select-best", "best"), Some(0));
    let best = json(&f.dir.path().join("best/best_settings.json"));
    assert_eq!(best["settings"].as_object().unwrap().len(), 3);
    let filtered = std::fs::read_to_string(f.dir.path().join("best/filtered_manifest.csv")).unwrap();
    assert_eq!(filtered.lines().count(), 1 + 3 * 2 * 7);

    let o = ctrl_audit(&["report", "--ablation", &f.path("ablate/ablation.json"), "--out", &f.path("report")], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(f.dir.path().join("report/figures/viewpoint.svg").exists());
    assert_eq!(ctrl_audit(&["report", "--out", &f.path("r2")], &[]).status.code(), Some(2));
}
