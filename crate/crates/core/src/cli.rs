//! The `ctrl-audit` command line.
//!
//! Settings come from `--config <file.json>` and are overridden by flags. The
//! seed falls back to `CTRL_AUDIT_SEED` when neither sets it. Exit status is 0
//! on success, 1 when a validation step fails (its report is still written),
//! and 2 on usage or configuration errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::audit::{run_audit, with_workers, AuditResults};
use crate::error::{AuditError, Result};
use crate::jobgen::{expand_jobs, filter_to_best, jobs_to_csv, select_best_settings};
use crate::labelmatch::{match_lexical, match_semantic, EmbeddingTable, MatchTable, Vocabulary};
use crate::manifest::{group_motions, parse_manifest, validate_factorial, FactorSpace, Manifest, Variant};
use crate::metrics::{accuracy, baseline_summary, load_predictions, AblationTable, Attribute, PredictionLog};
use crate::report::{audit_bundle, render_grouped_bars, ReportBundle, RunMetadata};
use crate::rng::sha256_hex;
use crate::simulator::{simulate, SimulatorConfig};
use crate::stats::{PermutationConfig, DEFAULT_ALPHA, DEFAULT_PERMUTATIONS};

pub const SEED_ENV: &str = "CTRL_AUDIT_SEED";
pub const DEFAULT_TEMPLATE: &str = "renders/{action}/{motion_id}/{skin_tone}_{viewpoint}_{background}.mp4";
const DEFAULT_MATCH_K: usize = 1;
const DEFAULT_MATCH_THRESHOLD: f64 = 0.6;

#[derive(Debug, Parser)]
#[command(name = "ctrl-audit", version, about = "Counterfactual skin-tone bias audit for action recognition models")]
pub struct Cli {
    #[command(flatten)]
    pub settings: AuditConfig,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Semantic,
    Lexical,
}

/// Settings shared by all subcommands. Also the schema of `--config` files.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "snake_case")]
pub struct AuditConfig {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub predictions: Option<PathBuf>,
    #[arg(long, global = true)]
    pub source_vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    pub target_vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Precomputed match table (JSON) instead of matching vocabularies
    #[arg(long, global = true)]
    pub match_table: Option<PathBuf>,
    #[arg(long, global = true)]
    pub match_k: Option<usize>,
    #[arg(long, global = true)]
    pub match_threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<Backend>,
    #[arg(long, global = true)]
    pub permutations: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Comma-separated model ids; defaults to every model in the prediction log
    #[arg(long, global = true, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores); never changes results
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a manifest covers its factor product exactly once
    Validate,
    /// Match the source action vocabulary to the model vocabulary
    MatchLabels,
    /// Expand a factor space into render jobs
    ExpandJobs {
        /// Factor space JSON; defaults to 7 tones × 20 actions × 10 motions × 2 viewpoints × 3 backgrounds
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_TEMPLATE)]
        template: String,
    },
    /// Accuracy per action, viewpoint and background
    Ablate,
    /// Pick each action's best scene setting and filter the manifest to it
    SelectBest,
    /// Divergence matrices and permutation tests for every model
    Audit,
    /// Generate a prediction log from a simulator config
    Simulate {
        #[arg(long)]
        sim_config: Option<PathBuf>,
    },
    /// Re-render tables and figures from saved results
    Report {
        /// `results.json` written by `audit`
        #[arg(long)]
        results: Option<PathBuf>,
        /// `ablation.json` written by `ablate`
        #[arg(long)]
        ablation: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Validation(String),
}

impl From<AuditError> for Failure {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::Config(_) | AuditError::InvalidParameter(_) => Failure::Usage(e.to_string()),
            AuditError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => Failure::Usage(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

impl AuditConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuditError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AuditError::Config(format!("{}: {e}", path.display())))
    }

    /// Flags win over file values.
    fn overlay(self, flags: AuditConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { AuditConfig { config: flags.config, $($f: flags.$f.or(self.$f)),* } };
        }
        pick!(
            manifest, predictions, source_vocab, target_vocab, embeddings, match_table, match_k, match_threshold,
            backend, permutations, seed, alpha, models, out, workers
        )
    }

    fn seed(&self) -> Result<u64> {
        if let Some(seed) = self.seed {
            return Ok(seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| AuditError::Config(format!("{SEED_ENV}=`{v}` is not a u64"))),
            Err(_) => Ok(0),
        }
    }

    fn permutation_config(&self) -> Result<PermutationConfig> {
        let cfg = PermutationConfig {
            permutations: self.permutations.unwrap_or(DEFAULT_PERMUTATIONS),
            seed: self.seed()?,
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    let path = path.as_deref().ok_or_else(|| Failure::Usage(format!("--{flag} is required")))?;
    if !path.exists() {
        return Err(Failure::Usage(format!("--{flag}: {} does not exist", path.display())));
    }
    Ok(path)
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Effective settings recorded in `run.json`, minus output location and worker count.
fn recorded(cfg: &AuditConfig, extra: serde_json::Value) -> serde_json::Value {
    let mut value = serde_json::to_value(AuditConfig { out: None, workers: None, ..cfg.clone() }).unwrap_or_default();
    if let (Some(map), serde_json::Value::Object(extra)) = (value.as_object_mut(), extra) {
        map.extend(extra);
        map.retain(|_, v| !v.is_null());
    }
    value
}

struct Inputs {
    digests: BTreeMap<String, String>,
}

impl Inputs {
    fn new() -> Self {
        Self { digests: BTreeMap::new() }
    }

    fn read(&mut self, role: &str, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = read(path)?;
        self.digests.insert(role.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn manifest(&mut self, cfg: &AuditConfig) -> CliResult<Manifest> {
        let bytes = self.read("manifest", require(&cfg.manifest, "manifest")?)?;
        Ok(parse_manifest(&bytes)?)
    }

    fn predictions(&mut self, cfg: &AuditConfig) -> CliResult<PredictionLog> {
        let bytes = self.read("predictions", require(&cfg.predictions, "predictions")?)?;
        Ok(load_predictions(&bytes)?)
    }

    fn match_table(&mut self, cfg: &AuditConfig, manifest: Option<&Manifest>) -> CliResult<MatchTable> {
        if cfg.match_table.is_some() {
            let bytes = self.read("match_table", require(&cfg.match_table, "match-table")?)?;
            return Ok(MatchTable::from_json(&String::from_utf8_lossy(&bytes))?);
        }
        let source = match (&cfg.source_vocab, manifest) {
            (Some(_), _) => {
                let bytes = self.read("source_vocab", require(&cfg.source_vocab, "source-vocab")?)?;
                Vocabulary::parse("source", &String::from_utf8_lossy(&bytes))?
            }
            (None, Some(m)) => Vocabulary::new("source", &m.space().actions)?,
            (None, None) => return Err(Failure::Usage("--source-vocab or --match-table is required".into())),
        };
        let bytes = self.read("target_vocab", require(&cfg.target_vocab, "target-vocab")?)?;
        let target = Vocabulary::parse("target", &String::from_utf8_lossy(&bytes))?;
        let k = cfg.match_k.unwrap_or(DEFAULT_MATCH_K);
        let threshold = cfg.match_threshold.unwrap_or(DEFAULT_MATCH_THRESHOLD);
        let backend = cfg.backend.unwrap_or(if cfg.embeddings.is_some() { Backend::Semantic } else { Backend::Lexical });
        Ok(match backend {
            Backend::Semantic => {
                let bytes = self.read("embeddings", require(&cfg.embeddings, "embeddings")?)?;
                let emb = EmbeddingTable::parse_csv(&String::from_utf8_lossy(&bytes))?;
                match_semantic(&source, &target, &emb, k, threshold)?
            }
            Backend::Lexical => match_lexical(&source, &target, k, threshold)?,
        })
    }
}

fn models_for(cfg: &AuditConfig, preds: &PredictionLog) -> CliResult<Vec<String>> {
    let models = cfg.models.clone().unwrap_or_else(|| preds.model_ids());
    if models.is_empty() {
        return Err(Failure::Usage("no models to evaluate".into()));
    }
    Ok(models)
}

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value).map_err(AuditError::from)? + "\n")
}

fn bundle(subcommand: &str, cfg: &AuditConfig, extra: serde_json::Value, inputs: Inputs) -> ReportBundle {
    let mut meta = RunMetadata::new(subcommand, recorded(cfg, extra));
    meta.inputs = inputs.digests;
    ReportBundle::new(meta)
}

fn write(bundle: &ReportBundle, cfg: &AuditConfig) -> CliResult<PathBuf> {
    let out = cfg.out_dir();
    bundle.write_to(&out).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", out.display())))?;
    Ok(out)
}

/// Records used for viewpoint/background ablation: the `initial` subset when present.
fn ablation_subset(manifest: &Manifest) -> Result<Manifest> {
    if manifest.records().iter().any(|r| r.variant == Variant::Initial) {
        Manifest::from_records(manifest.records().iter().filter(|r| r.variant == Variant::Initial).cloned().collect())
    } else {
        Ok(manifest.clone())
    }
}

fn ablation_table(manifest: &Manifest, preds: &PredictionLog, table: &MatchTable, models: &[String]) -> Result<AblationTable> {
    let group_by = [Attribute::Action, Attribute::Viewpoint, Attribute::Background];
    let tables = models
        .iter()
        .map(|m| accuracy(manifest, preds, table, m, &group_by))
        .collect::<Result<Vec<_>>>()?;
    AblationTable::merge(tables)
}

fn ablation_figures(bundle: &mut ReportBundle, ablation: &AblationTable) -> Result<()> {
    bundle
        .figures
        .insert("viewpoint.svg".into(), render_grouped_bars(ablation, Attribute::Action, Attribute::Viewpoint)?);
    bundle
        .figures
        .insert("background.svg".into(), render_grouped_bars(ablation, Attribute::Action, Attribute::Background)?);
    Ok(())
}

fn execute(cli: Cli) -> CliResult<i32> {
    let cfg = match &cli.settings.config {
        Some(path) => AuditConfig::load(path)?.overlay(cli.settings.clone()),
        None => cli.settings.clone(),
    };
    let mut inputs = Inputs::new();

    match cli.command {
        Command::Validate => {
            let manifest = inputs.manifest(&cfg)?;
            let report = validate_factorial(&manifest);
            let groups = group_motions(&manifest)?;
            let complete = groups.iter().filter(|g| g.complete).count();
            let mut b = bundle("validate", &cfg, serde_json::Value::Null, inputs);
            b.documents.insert("validation.json".into(), json(&report)?);
            let out = write(&b, &cfg)?;
            let (s, a, m, v, bg) = manifest.space().sizes();
            println!("{} records; factor sizes {s}×{a}×{m}×{v}×{bg}", manifest.len());
            println!("{} motion groups, {complete} complete", groups.len());
            println!(
                "complete: {} ({} missing, {} duplicated) -> {}",
                report.complete,
                report.missing.len(),
                report.duplicated.len(),
                out.join("validation.json").display()
            );
            Ok(if report.complete { 0 } else { 1 })
        }
        Command::MatchLabels => {
            let manifest = match cfg.manifest {
                Some(_) if cfg.source_vocab.is_none() => Some(inputs.manifest(&cfg)?),
                _ => None,
            };
            let table = inputs.match_table(&cfg, manifest.as_ref())?;
            let mut b = bundle("match-labels", &cfg, serde_json::Value::Null, inputs);
            b.documents.insert("match_table.json".into(), table.to_json()?);
            let out = write(&b, &cfg)?;
            println!(
                "{} matched, {} unmatched -> {}",
                table.entries.len(),
                table.unmatched.len(),
                out.join("match_table.json").display()
            );
            for u in &table.unmatched {
                println!("  unmatched: {u}");
            }
            Ok(0)
        }
        Command::ExpandJobs { space, template } => {
            let factor_space = match &space {
                Some(p) => {
                    let bytes = inputs.read("space", p)?;
                    serde_json::from_slice::<FactorSpace>(&bytes)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
                }
                None => FactorSpace::default(),
            };
            let jobs = expand_jobs(&factor_space, &template)?;
            let extra = serde_json::json!({ "template": template, "space": factor_space });
            let mut b = bundle("expand-jobs", &cfg, extra, inputs);
            b.documents.insert("jobs.json".into(), json(&jobs)?);
            b.documents.insert("jobs.csv".into(), jobs_to_csv(&jobs));
            let out = write(&b, &cfg)?;
            println!("{} render jobs -> {}", jobs.len(), out.join("jobs.json").display());
            Ok(0)
        }
        Command::Ablate => {
            let manifest = inputs.manifest(&cfg)?;
            let preds = inputs.predictions(&cfg)?;
            let table = inputs.match_table(&cfg, Some(&manifest))?;
            let models = models_for(&cfg, &preds)?;
            let subset = ablation_subset(&manifest)?;
            let ablation = ablation_table(&subset, &preds, &table, &models)?;
            let mut b = bundle("ablate", &cfg, serde_json::Value::Null, inputs);
            b.documents.insert("ablation.json".into(), json(&ablation)?);
            b.tables.insert("ablation.csv".into(), ablation.to_csv());
            ablation_figures(&mut b, &ablation)?;
            let out = write(&b, &cfg)?;
            println!(
                "{} cells over {} videos and {} model(s) -> {}",
                ablation.cells.len(),
                subset.len(),
                models.len(),
                out.display()
            );
            if ablation.unmatched_ground_truth > 0 {
                println!("  {} predictions had an unmatched ground-truth action", ablation.unmatched_ground_truth);
            }
            Ok(0)
        }
        Command::SelectBest => {
            let manifest = inputs.manifest(&cfg)?;
            let preds = inputs.predictions(&cfg)?;
            let table = inputs.match_table(&cfg, Some(&manifest))?;
            let models = models_for(&cfg, &preds)?;
            let ablation = ablation_table(&ablation_subset(&manifest)?, &preds, &table, &models)?;
            let best = select_best_settings(&ablation)?;
            let baseline = baseline_summary(&ablation, &best)?;
            let subset = filter_to_best(&manifest, &best);
            let mut b = bundle("select-best", &cfg, serde_json::Value::Null, inputs);
            b.documents.insert("best_settings.json".into(), json(&best)?);
            b.documents.insert("baseline.json".into(), json(&baseline)?);
            b.documents.insert("filtered_manifest.csv".into(), subset.manifest.to_csv());
            b.documents.insert("filtered_validation.json".into(), json(&subset.report)?);
            let mut csv = String::from("model_id,best,worst_per_action,non_best_mean\n");
            for s in &baseline {
                csv.push_str(&format!(
                    "{},{:.6},{:.6},{:.6}\n",
                    s.model_id, s.best.value, s.worst_per_action.value, s.non_best_mean.value
                ));
            }
            b.tables.insert("baseline.csv".into(), csv);
            let out = write(&b, &cfg)?;
            for (action, s) in &best.settings {
                println!("{action}: {} / {} ({:.2})", s.viewpoint, s.background, s.mean_accuracy);
            }
            println!(
                "filtered manifest: {} records, complete: {} -> {}",
                subset.manifest.len(),
                subset.report.complete,
                out.display()
            );
            Ok(if subset.report.complete { 0 } else { 1 })
        }
        Command::Audit => {
            let manifest = inputs.manifest(&cfg)?;
            let preds = inputs.predictions(&cfg)?;
            let table = inputs.match_table(&cfg, Some(&manifest))?;
            let models = models_for(&cfg, &preds)?;
            let perm = cfg.permutation_config()?;
            let results = with_workers(cfg.workers, || run_audit(&manifest, &preds, &table, &models, &perm))??;
            let extra = serde_json::json!({ "seed": perm.seed, "permutations": perm.permutations, "alpha": perm.alpha, "models": models });
            let b = audit_bundle(&results, bundle("audit", &cfg, extra, inputs).run_metadata)?;
            let out = write(&b, &cfg)?;
            print_audit(&results);
            println!("-> {}", out.display());
            Ok(0)
        }
        Command::Simulate { sim_config } => {
            let manifest = inputs.manifest(&cfg)?;
            let table = inputs.match_table(&cfg, Some(&manifest))?;
            let mut sim = match &sim_config {
                Some(p) => {
                    let bytes = inputs.read("sim_config", p)?;
                    serde_json::from_slice::<SimulatorConfig>(&bytes)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
                }
                None => SimulatorConfig::default(),
            };
            if cfg.seed.is_some() || std::env::var(SEED_ENV).is_ok() {
                sim.seed = cfg.seed()?;
            }
            let models = cfg.models.clone().unwrap_or_else(|| vec![sim.model_id.clone()]);
            let logs = models
                .iter()
                .map(|m| simulate(&manifest, &table, &SimulatorConfig { model_id: m.clone(), ..sim.clone() }))
                .collect::<Result<Vec<_>>>()?;
            let log = PredictionLog::merge(logs)?;
            let extra = serde_json::json!({ "simulator": sim, "models": models });
            let mut b = bundle("simulate", &cfg, extra, inputs);
            b.documents.insert("predictions.csv".into(), log.to_csv());
            let out = write(&b, &cfg)?;
            println!("{} predictions for {} model(s) -> {}", log.records().len(), models.len(), out.join("predictions.csv").display());
            Ok(0)
        }
        Command::Report { results, ablation } => {
            if results.is_none() && ablation.is_none() {
                return Err(Failure::Usage("report needs --results and/or --ablation".into()));
            }
            let mut parsed = None;
            if let Some(p) = &results {
                let bytes = inputs.read("results", require(&results, "results").map(|_| p.as_path())?)?;
                parsed = Some(serde_json::from_slice::<AuditResults>(&bytes).map_err(AuditError::from)?);
            }
            let mut ablation_table = None;
            if let Some(p) = &ablation {
                let bytes = inputs.read("ablation", require(&ablation, "ablation").map(|_| p.as_path())?)?;
                ablation_table = Some(serde_json::from_slice::<AblationTable>(&bytes).map_err(AuditError::from)?);
            }
            let meta = bundle("report", &cfg, serde_json::Value::Null, inputs).run_metadata;
            let mut b = match &parsed {
                Some(r) => audit_bundle(r, meta)?,
                None => ReportBundle::new(meta),
            };
            if let Some(t) = &ablation_table {
                b.tables.insert("ablation.csv".into(), t.to_csv());
                ablation_figures(&mut b, t)?;
            }
            let out = write(&b, &cfg)?;
            println!("{} tables, {} figures -> {}", b.tables.len(), b.figures.len(), out.display());
            Ok(0)
        }
    }
}

fn print_audit(results: &AuditResults) {
    println!("{} complete motion groups ({} incomplete excluded)", results.n_groups, results.excluded_groups);
    for m in &results.models {
        let max = m.significance.pairs.iter().max_by_key(|p| p.observed_count);
        print!(
            "{}: {} of {} pairs significant after Bonferroni",
            m.model_id,
            m.significance.significant_adjusted(),
            m.significance.m
        );
        if let Some(p) = max {
            let rate = p.observed_count as f64 / results.n_groups.max(1) as f64;
            print!("; highest divergence {}/{} = {rate:.2}", p.tone_a, p.tone_b);
        }
        println!();
    }
}

/// Parses `argv` (including the program name), runs the subcommand, and
/// returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            1
        }
    }
}
