//! Deterministic CSV/JSON tables and SVG figures.
//!
//! Fixed canvas geometry:
//! - heatmap: 150 px label column, 100 × 36 px cells, 80 px header band;
//! - grouped bars: 260 px plot height, 18 px bars, 14 px gap between groups.
//!
//! Rates print with 2 decimals and p-values with 3. Blobs never contain
//! timestamps or host details; those belong in `run.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::AuditResults;
use crate::error::{AuditError, Result};
use crate::metrics::{AblationTable, Attribute, DivergenceMatrix, ErrorMatrix};
use crate::stats::SignificanceReport;

pub const ALERT_COLOR: &str = "#d62728";
const NEUTRAL_COLOR: &str = "#f2f2f2";
const EMPTY_COLOR: &str = "#ffffff";
const SERIES_COLORS: [&str; 8] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"];

/// Square matrix with row/column labels; `None` cells render blank.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl Grid {
    pub fn from_divergence(m: &DivergenceMatrix) -> Self {
        Self {
            labels: m.tones.iter().map(|t| t.to_string()).collect(),
            values: m.rate.iter().map(|row| row.iter().map(|v| Some(*v)).collect()).collect(),
        }
    }

    /// Correctness-flip counts as a fraction of groups.
    pub fn from_errors(m: &ErrorMatrix) -> Self {
        let n = m.n_groups.max(1) as f64;
        Self {
            labels: m.tones.iter().map(|t| t.to_string()).collect(),
            values: m.counts.iter().map(|row| row.iter().map(|c| Some(*c as f64 / n)).collect()).collect(),
        }
    }

    pub fn from_significance(r: &SignificanceReport, adjusted: bool) -> Self {
        Self { labels: r.tones.iter().map(|t| t.to_string()).collect(), values: r.grid(adjusted) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatmapStyle {
    Rate,
    RawP { alpha: f64 },
    AdjustedP { alpha: f64 },
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn rate_color(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let lerp = |from: f64, to: f64| (from + (to - from) * v).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 81.0), lerp(255.0, 156.0))
}

pub fn render_heatmap(title: &str, grid: &Grid, style: HeatmapStyle) -> Result<String> {
    let n = grid.labels.len();
    if grid.values.len() != n || grid.values.iter().any(|r| r.len() != n) {
        return Err(AuditError::NonSquare {
            rows: grid.values.len(),
            cols: grid.values.iter().map(Vec::len).max().unwrap_or(0),
            labels: n,
        });
    }
    const LEFT: usize = 150;
    const TOP: usize = 80;
    const CW: usize = 100;
    const CH: usize = 36;
    let width = LEFT + n * CW + 20;
    let height = TOP + n * CH + 20;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#, width / 2, escape(title));
    for (j, label) in grid.labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            LEFT + j * CW + CW / 2,
            TOP - 10,
            escape(label)
        );
    }
    for (i, row) in grid.values.iter().enumerate() {
        let y = TOP + i * CH;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#,
            LEFT - 8,
            y + CH / 2 + 4,
            escape(&grid.labels[i])
        );
        for (j, v) in row.iter().enumerate() {
            let x = LEFT + j * CW;
            let (fill, text, dark) = match (v, style) {
                (None, _) => (EMPTY_COLOR.to_string(), None, false),
                (Some(v), HeatmapStyle::Rate) => (rate_color(*v), Some(format!("{v:.2}")), *v > 0.55),
                (Some(v), HeatmapStyle::RawP { alpha } | HeatmapStyle::AdjustedP { alpha }) => {
                    let alert = *v < alpha;
                    let fill = if alert { ALERT_COLOR } else { NEUTRAL_COLOR };
                    (fill.to_string(), Some(format!("{v:.3}")), alert)
                }
            };
            let _ = writeln!(
                s,
                r##"<rect class="cell" data-row="{i}" data-col="{j}" x="{x}" y="{y}" width="{CW}" height="{CH}" fill="{fill}" stroke="#cccccc"/>"##
            );
            if let Some(text) = text {
                let color = if dark { "#ffffff" } else { "#000000" };
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" fill="{color}">{text}</text>"#,
                    x + CW / 2,
                    y + CH / 2 + 4
                );
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BarStat {
    mean: f64,
    std: f64,
    models: usize,
}

/// Per (group value, series value): the model's pooled accuracy, then the
/// mean and sample standard deviation across models.
fn bar_stats(table: &AblationTable, gi: usize, si: usize) -> BTreeMap<(String, String), BarStat> {
    let mut pooled: BTreeMap<(String, String, String), (u64, u64)> = BTreeMap::new();
    for c in &table.cells {
        let e = pooled.entry((c.key[gi].clone(), c.key[si].clone(), c.model_id.clone())).or_default();
        e.0 += c.correct;
        e.1 += c.total;
    }
    let mut per_bar: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for ((g, s, _), (correct, total)) in pooled {
        per_bar.entry((g, s)).or_default().push(correct as f64 / total as f64);
    }
    per_bar
        .into_iter()
        .map(|(k, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (k, BarStat { mean, std, models: v.len() })
        })
        .collect()
}

/// Grouped bar chart of accuracy with one bar per series value inside each group.
pub fn render_grouped_bars(table: &AblationTable, group_axis: Attribute, series_axis: Attribute) -> Result<String> {
    let pos = |a: Attribute| {
        table
            .position(a)
            .ok_or_else(|| AuditError::InvalidParameter(format!("table is not grouped by {}", a.name())))
    };
    let (gi, si) = (pos(group_axis)?, pos(series_axis)?);
    let stats = bar_stats(table, gi, si);
    let mut groups: Vec<&String> = stats.keys().map(|(g, _)| g).collect();
    groups.dedup();
    let mut series: Vec<&String> = stats.keys().map(|(_, s)| s).collect();
    series.sort();
    series.dedup();

    const LEFT: usize = 60;
    const TOP: usize = 40;
    const PLOT_H: usize = 260;
    const BAR_W: usize = 18;
    const GAP: usize = 14;
    const LEGEND_W: usize = 160;
    let group_w = series.len() * BAR_W + GAP;
    let plot_w = groups.len() * group_w + GAP;
    let width = LEFT + plot_w + LEGEND_W;
    let height = TOP + PLOT_H + 90;
    let y_of = |v: f64| TOP as f64 + PLOT_H as f64 * (1.0 - v.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" font-size="15" text-anchor="middle">accuracy by {} and {}</text>"#,
        LEFT + plot_w / 2,
        group_axis.name(),
        series_axis.name()
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = y_of(tick);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-size="10" text-anchor="end">{tick:.2}</text>"#,
            LEFT - 6,
            y + 3.0
        );
    }
    for (g_idx, g) in groups.iter().enumerate() {
        let gx = LEFT + GAP + g_idx * group_w;
        for (s_idx, ser) in series.iter().enumerate() {
            let Some(stat) = stats.get(&((*g).clone(), (*ser).clone())) else { continue };
            let x = gx + s_idx * BAR_W;
            let top = y_of(stat.mean);
            let h = PLOT_H as f64 * stat.mean.clamp(0.0, 1.0);
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{x}" y="{top:.2}" width="{}" height="{h:.2}" fill="{}"><title>{} {}: {:.2}</title></rect>"#,
                BAR_W - 2,
                SERIES_COLORS[s_idx % SERIES_COLORS.len()],
                escape(g),
                escape(ser),
                stat.mean
            );
            if stat.models > 1 {
                let cx = x as f64 + (BAR_W - 2) as f64 / 2.0;
                let (lo, hi) = (y_of(stat.mean - stat.std), y_of(stat.mean + stat.std));
                let _ = writeln!(
                    s,
                    r##"<line class="whisker" x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="#000000"/>"##
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end" transform="rotate(-45 {} {})">{}</text>"#,
            gx + group_w / 2,
            TOP + PLOT_H + 14,
            gx + group_w / 2,
            TOP + PLOT_H + 14,
            escape(g)
        );
    }
    for (s_idx, ser) in series.iter().enumerate() {
        let y = TOP + 10 + s_idx * 18;
        let x = LEFT + plot_w + 20;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="12" height="12" fill="{}"/>"#,
            SERIES_COLORS[s_idx % SERIES_COLORS.len()]
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, x + 18, y + 10, escape(ser));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_digest: String,
    pub config: serde_json::Value,
    /// SHA-256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
}

impl RunMetadata {
    pub fn new(subcommand: &str, config: serde_json::Value) -> Self {
        let canonical = serde_json::to_vec(&config).unwrap_or_default();
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_digest: crate::rng::sha256_hex(&canonical),
            config,
            inputs: BTreeMap::new(),
        }
    }
}

/// Output directory contents: `run.json`, root `documents`, `tables/*.csv`, `figures/*.svg`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub run_metadata: RunMetadata,
    pub documents: BTreeMap<String, String>,
    pub tables: BTreeMap<String, String>,
    pub figures: BTreeMap<String, String>,
}

impl ReportBundle {
    pub fn new(run_metadata: RunMetadata) -> Self {
        Self { run_metadata, ..Default::default() }
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let run = serde_json::to_string_pretty(&self.run_metadata)? + "\n";
        std::fs::write(dir.join("run.json"), run)?;
        for (name, body) in &self.documents {
            std::fs::write(dir.join(name), body)?;
        }
        for (sub, blobs) in [("tables", &self.tables), ("figures", &self.figures)] {
            if blobs.is_empty() {
                continue;
            }
            std::fs::create_dir_all(dir.join(sub))?;
            for (name, body) in blobs {
                std::fs::write(dir.join(sub).join(name), body)?;
            }
        }
        Ok(())
    }
}

/// Filesystem-safe stem for a model or action id.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Tables and figures for a full audit run.
pub fn audit_bundle(results: &AuditResults, metadata: RunMetadata) -> Result<ReportBundle> {
    let mut bundle = ReportBundle::new(metadata);
    bundle.documents.insert("results.json".into(), serde_json::to_string_pretty(results)? + "\n");

    let mut divergence = String::from("model_id,tone_a,tone_b,count,n_groups,rate\n");
    let mut by_action = String::from("action,model_id,tone_a,tone_b,count,n_groups,rate\n");
    let mut significance =
        String::from("model_id,tone_a,tone_b,observed_count,raw_p,adjusted_p,significant_raw,significant_adjusted\n");
    for m in &results.models {
        let stem = file_stem(&m.model_id);
        m.divergence.write_rows(&mut divergence, None);
        for (action, d) in &m.by_action {
            d.write_rows(&mut by_action, Some(action));
        }
        for p in &m.significance.pairs {
            let _ = writeln!(
                significance,
                "{},{},{},{},{:.6},{:.6},{},{}",
                m.model_id, p.tone_a, p.tone_b, p.observed_count, p.raw_p, p.adjusted_p, p.significant_raw, p.significant_adjusted
            );
        }
        bundle.tables.insert(format!("significance_raw_{stem}.csv"), m.significance.grid_csv(false));
        bundle.tables.insert(format!("significance_adjusted_{stem}.csv"), m.significance.grid_csv(true));

        let alpha = m.significance.config.alpha;
        bundle.figures.insert(
            format!("divergence_{stem}.svg"),
            render_heatmap(&format!("divergence rate: {}", m.model_id), &Grid::from_divergence(&m.divergence), HeatmapStyle::Rate)?,
        );
        bundle.figures.insert(
            format!("correctness_flips_{stem}.svg"),
            render_heatmap(&format!("correctness flips: {}", m.model_id), &Grid::from_errors(&m.errors), HeatmapStyle::Rate)?,
        );
        bundle.figures.insert(
            format!("significance_raw_{stem}.svg"),
            render_heatmap(
                &format!("raw p-values: {}", m.model_id),
                &Grid::from_significance(&m.significance, false),
                HeatmapStyle::RawP { alpha },
            )?,
        );
        bundle.figures.insert(
            format!("significance_adjusted_{stem}.svg"),
            render_heatmap(
                &format!("Bonferroni-adjusted p-values: {}", m.model_id),
                &Grid::from_significance(&m.significance, true),
                HeatmapStyle::AdjustedP { alpha },
            )?,
        );
        for (action, d) in &m.by_action {
            bundle.figures.insert(
                format!("divergence_{stem}_{}.svg", file_stem(action)),
                render_heatmap(&format!("divergence rate: {} / {action}", m.model_id), &Grid::from_divergence(d), HeatmapStyle::Rate)?,
            );
        }
    }
    bundle.tables.insert("divergence.csv".into(), divergence);
    bundle.tables.insert("divergence_by_action.csv".into(), by_action);
    bundle.tables.insert("significance.csv".into(), significance);
    Ok(bundle)
}
