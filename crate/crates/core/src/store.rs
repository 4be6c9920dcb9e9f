//! Result persistence and reporting: append-only NDJSON run log, aggregate
//! document, text table rendering, and figure-ready CSV exports.
//!
//! Store layout under the root directory:
//!   runs.ndjson       one RunRecord JSON object per line, append-only
//!   aggregates.json   { metadata, aggregates: [...] }
//!   exports/*.csv     figure datasets (+ `.notes.txt` sidecars for exclusions)

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{AggregateResult, RunRecord};
use crate::error::{Error, Result};
use crate::fixtures::{GoldenFixture, CONFIG_ORDER, MODEL_ORDER};
use crate::metrics::MetricVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMetadata {
    pub config_hash: String,
    pub artifact_version: String,
    pub created_utc_ms: i64,
    pub updated_utc_ms: i64,
}

impl StoreMetadata {
    pub fn new(config_hash: impl Into<String>) -> StoreMetadata {
        let now = crate::clock::wall_utc_ms();
        StoreMetadata {
            config_hash: config_hash.into(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            created_utc_ms: now,
            updated_utc_ms: now,
        }
    }
}

/// Hex SHA-256 of the canonical JSON form of a config value.
pub fn config_hash_hex<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).unwrap_or_default();
    let digest = Sha256::digest(json.as_bytes());
    format!("{digest:x}")
}

#[derive(Debug, Serialize, Deserialize)]
struct AggregatesDoc {
    metadata: StoreMetadata,
    aggregates: Vec<AggregateResult>,
}

/// Filesystem-backed result store. Single writer, readers see a prefix of
/// appended runs.
#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<ResultStore> {
        let root = root.into();
        std::fs::create_dir_all(root.join("exports")).map_err(|e| Error::Store {
            path: root.clone(),
            message: e.to_string(),
        })?;
        Ok(ResultStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_path(&self) -> PathBuf {
        self.root.join("runs.ndjson")
    }

    pub fn aggregates_path(&self) -> PathBuf {
        self.root.join("aggregates.json")
    }

    /// Appends one record as a single write; atomic at record granularity.
    pub fn append_run(&self, run: &RunRecord) -> Result<()> {
        let mut line = serde_json::to_string(run).map_err(|e| Error::Store {
            path: self.runs_path(),
            message: e.to_string(),
        })?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.runs_path())?;
        file.write_all(line.as_bytes())?;
        Ok(())
    }

    /// Loads all runs. Corrupt lines become diagnostics; the remainder still
    /// loads.
    pub fn load_runs(&self) -> Result<(Vec<RunRecord>, Vec<String>)> {
        let path = self.runs_path();
        if !path.exists() {
            return Ok((Vec::new(), Vec::new()));
        }
        let text = std::fs::read_to_string(&path)?;
        let mut runs = Vec::new();
        let mut diagnostics = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RunRecord>(line) {
                Ok(run) => runs.push(run),
                Err(e) => diagnostics.push(format!("{}:{}: {e}", path.display(), idx + 1)),
            }
        }
        Ok((runs, diagnostics))
    }

    pub fn save_aggregates(
        &self,
        aggregates: &[AggregateResult],
        metadata: &StoreMetadata,
    ) -> Result<()> {
        let doc = AggregatesDoc {
            metadata: metadata.clone(),
            aggregates: aggregates.to_vec(),
        };
        let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Store {
            path: self.aggregates_path(),
            message: e.to_string(),
        })?;
        std::fs::write(self.aggregates_path(), json)?;
        Ok(())
    }

    pub fn load_aggregates(&self) -> Result<(StoreMetadata, Vec<AggregateResult>)> {
        let path = self.aggregates_path();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Store {
            path: path.clone(),
            message: format!("no aggregates document: {e}"),
        })?;
        let doc: AggregatesDoc = serde_json::from_str(&text).map_err(|e| Error::Store {
            path,
            message: e.to_string(),
        })?;
        Ok((doc.metadata, doc.aggregates))
    }

    pub fn write_export(&self, name: &str, csv: &str, notes: &[String]) -> Result<PathBuf> {
        let path = self.root.join("exports").join(format!("{name}.csv"));
        std::fs::write(&path, csv)?;
        if !notes.is_empty() {
            let notes_path = self.root.join("exports").join(format!("{name}.notes.txt"));
            std::fs::write(notes_path, notes.join("\n") + "\n")?;
        }
        Ok(path)
    }
}

/// Grid of renderable cells: (model row, configuration column) -> metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableCell {
    pub throughput_tps: Option<f64>,
    pub ttft: Option<f64>,
    pub mj_per_mtok: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    pub ttft_label: String,
    pub model_order: Vec<String>,
    pub config_order: Vec<String>,
    pub cells: BTreeMap<(String, String), TableCell>,
}

impl TableData {
    pub fn from_fixture(fixture: &GoldenFixture) -> TableData {
        let mut cells = BTreeMap::new();
        for c in &fixture.cells {
            cells.insert(
                (c.model_id.clone(), c.config_id.clone()),
                TableCell {
                    throughput_tps: c.throughput_tps,
                    ttft: c.ttft_reported,
                    mj_per_mtok: c.mj_per_mtok,
                },
            );
        }
        TableData {
            ttft_label: "TTFT (reported)".to_string(),
            model_order: MODEL_ORDER.iter().map(|s| s.to_string()).collect(),
            config_order: CONFIG_ORDER.iter().map(|s| s.to_string()).collect(),
            cells,
        }
    }

    /// Columns are device ids in first-appearance order; TTFT is rendered in
    /// seconds (client measurement, unambiguous).
    pub fn from_aggregates(aggregates: &[AggregateResult]) -> TableData {
        let mut model_order = Vec::new();
        let mut config_order = Vec::new();
        let mut cells = BTreeMap::new();
        for a in aggregates {
            if !model_order.contains(&a.model_id) {
                model_order.push(a.model_id.clone());
            }
            if !config_order.contains(&a.device_id) {
                config_order.push(a.device_id.clone());
            }
            let cell = if a.status.is_ok() {
                TableCell {
                    throughput_tps: Some(a.throughput_tps.mean),
                    ttft: Some(a.ttft_s.mean),
                    mj_per_mtok: a.energy_mj_per_mtok.map(|e| e.mean),
                }
            } else {
                TableCell::default()
            };
            cells.insert((a.model_id.clone(), a.device_id.clone()), cell);
        }
        TableData {
            ttft_label: "TTFT (s)".to_string(),
            model_order,
            config_order,
            cells,
        }
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "--".to_string(),
    }
}

/// Renders the per-model-rows layout: rows grouped by model then metric
/// (Throughput, TTFT, Energy), one column per configuration. Missing or
/// unsupported cells render "--".
pub fn render_table(data: &TableData) -> String {
    let metric_labels = [
        "Throughput (tok/s)".to_string(),
        data.ttft_label.clone(),
        "Energy (MJ/Mtok)".to_string(),
    ];
    let model_width = data
        .model_order
        .iter()
        .map(|m| m.len())
        .chain(["Model".len()])
        .max()
        .unwrap_or(5);
    let metric_width = metric_labels.iter().map(|m| m.len()).max().unwrap_or(6);

    let mut col_widths: Vec<usize> = data.config_order.iter().map(|c| c.len().max(6)).collect();
    let mut rows: Vec<(String, String, Vec<String>)> = Vec::new();
    for model in &data.model_order {
        for (mi, label) in metric_labels.iter().enumerate() {
            let mut values = Vec::new();
            for (ci, config) in data.config_order.iter().enumerate() {
                let cell = data.cells.get(&(model.clone(), config.clone()));
                let v = match (cell, mi) {
                    (Some(c), 0) => fmt_cell(c.throughput_tps),
                    (Some(c), 1) => fmt_cell(c.ttft),
                    (Some(c), 2) => fmt_cell(c.mj_per_mtok),
                    _ => "--".to_string(),
                };
                col_widths[ci] = col_widths[ci].max(v.len());
                values.push(v);
            }
            let model_label = if mi == 0 { model.clone() } else { String::new() };
            rows.push((model_label, label.clone(), values));
        }
    }

    let mut out = String::new();
    out.push_str(&format!("{:<model_width$} | {:<metric_width$}", "Model", "Metric"));
    for (ci, config) in data.config_order.iter().enumerate() {
        out.push_str(&format!(" | {:>width$}", config, width = col_widths[ci]));
    }
    out.push('\n');
    let total = model_width + 3 + metric_width + col_widths.iter().map(|w| w + 3).sum::<usize>();
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for (model_label, metric, values) in rows {
        out.push_str(&format!("{model_label:<model_width$} | {metric:<metric_width$}"));
        for (ci, v) in values.iter().enumerate() {
            out.push_str(&format!(" | {:>width$}", v, width = col_widths[ci]));
        }
        out.push('\n');
    }
    out
}

/// Collapses every run of whitespace to one space and trims line ends, so
/// renders compare on content rather than padding.
pub fn normalize_whitespace(text: &str) -> String {
    text.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    PowerVsThroughputBubble,
    DensitySurface,
    EnergySurface,
    ThroughputSurface,
}

impl std::str::FromStr for FigureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<FigureKind> {
        match s {
            "power_vs_throughput_bubble" | "bubble" => Ok(FigureKind::PowerVsThroughputBubble),
            "density_surface" => Ok(FigureKind::DensitySurface),
            "energy_surface" => Ok(FigureKind::EnergySurface),
            "throughput_surface" => Ok(FigureKind::ThroughputSurface),
            other => Err(Error::validation("figure", format!("unknown figure `{other}`"))),
        }
    }
}

impl FigureKind {
    pub fn export_name(self) -> &'static str {
        match self {
            FigureKind::PowerVsThroughputBubble => "power_vs_throughput_bubble",
            FigureKind::DensitySurface => "density_surface",
            FigureKind::EnergySurface => "energy_surface",
            FigureKind::ThroughputSurface => "throughput_surface",
        }
    }
}

/// Builds a figure-ready CSV dataset from metric vectors. Returns the CSV
/// text plus exclusion notes for points missing a required metric.
///
/// Surface exports are restricted to models supported on every
/// configuration present in `vectors`.
pub fn export_figure_data(vectors: &[MetricVector], kind: FigureKind) -> (String, Vec<String>) {
    match kind {
        FigureKind::PowerVsThroughputBubble => export_bubble(vectors),
        FigureKind::DensitySurface => export_surface(vectors, "tps_per_m3", |v| v.tps_per_m3),
        FigureKind::EnergySurface => export_surface(vectors, "mj_per_mtok", |v| v.mj_per_mtok),
        FigureKind::ThroughputSurface => {
            export_surface(vectors, "throughput_tps", |v| Some(v.throughput_tps))
        }
    }
}

fn export_bubble(vectors: &[MetricVector]) -> (String, Vec<String>) {
    let mut csv = String::from("config,power_w,throughput_tps,volume_cm3\n");
    let mut notes = Vec::new();
    for v in vectors {
        match v.power_w {
            Some(p) => {
                csv.push_str(&format!(
                    "{}/{},{:.4},{:.4},{:.4}\n",
                    v.config_key.device_id,
                    v.config_key.model_id,
                    p,
                    v.throughput_tps,
                    v.volume_m3 * 1e6,
                ));
            }
            None => notes.push(format!("{}: excluded, missing power_w", v.config_key)),
        }
    }
    (csv, notes)
}

fn export_surface(
    vectors: &[MetricVector],
    metric_name: &str,
    extract: impl Fn(&MetricVector) -> Option<f64>,
) -> (String, Vec<String>) {
    let mut configs: Vec<String> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    for v in vectors {
        if !configs.contains(&v.config_key.device_id) {
            configs.push(v.config_key.device_id.clone());
        }
        if !models.contains(&v.config_key.model_id) {
            models.push(v.config_key.model_id.clone());
        }
    }
    let lookup = |model: &str, config: &str| {
        vectors
            .iter()
            .find(|v| v.config_key.model_id == model && v.config_key.device_id == config)
    };

    let mut notes = Vec::new();
    // keep only models with the metric defined on every configuration
    let shared: Vec<String> = models
        .iter()
        .filter(|m| {
            let complete = configs
                .iter()
                .all(|c| lookup(m, c).and_then(&extract).is_some());
            if !complete {
                notes.push(format!(
                    "{m}: excluded from {metric_name} surface, not supported on every configuration"
                ));
            }
            complete
        })
        .cloned()
        .collect();

    let mut csv = format!("model,{}\n", configs.join(","));
    for model in &shared {
        csv.push_str(model);
        for config in &configs {
            let value = lookup(model, config).and_then(&extract).unwrap();
            csv.push_str(&format!(",{value:.4}"));
        }
        csv.push('\n');
    }
    (csv, notes)
}
