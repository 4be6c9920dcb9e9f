//! Golden results fixture: the published benchmark table transcribed
//! verbatim, plus the mapping from its five configuration columns to catalog
//! devices and runtimes. The fixture is the numeric oracle for the metric
//! layer, never an input to measurement.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapters::RuntimeKind;
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::metrics::{ConfigKey, MetricVector};

pub const TABLE3_CSV: &str = include_str!("../../../fixtures/table3.csv");
pub const CATALOG_TOML: &str = include_str!("../../../fixtures/catalog.toml");
pub const TABLE3_RENDERED: &str = include_str!("../../../fixtures/table3_rendered.txt");

/// Column order of the results table.
pub const CONFIG_ORDER: [&str; 5] = ["m5stack", "rpi5", "rpi5-hat", "jetson-cpu", "jetson-gpu"];

/// Row order of the results table.
pub const MODEL_ORDER: [&str; 7] = [
    "deepseek-r1-1.5b",
    "qwen2.5-0.5b",
    "qwen2.5-1.5b",
    "qwen2.5-instruct-1.5b",
    "qwen2.5-coder-1.5b",
    "llama3.2-1b",
    "llama3.2-3b",
];

/// Configuration column -> (catalog device, runtime kind).
pub fn config_device_runtime(config_id: &str) -> Option<(&'static str, RuntimeKind)> {
    match config_id {
        "m5stack" => Some(("m5stack-llm", RuntimeKind::StackflowStub)),
        "rpi5" => Some(("rpi5", RuntimeKind::OllamaNative)),
        "rpi5-hat" => Some(("rpi5-hat", RuntimeKind::HailoOllama)),
        "jetson-cpu" | "jetson-gpu" => Some(("jetson-orin-nano", RuntimeKind::OllamaNative)),
        _ => None,
    }
}

/// Mean power each device draws under load, from the published narrative.
/// Used only by sanity checks, never by a metric.
pub const NARRATIVE_POWER_W: [(&str, f64); 4] = [
    ("m5stack", 1.4),
    ("rpi5", 11.0),
    ("rpi5-hat", 6.0),
    ("jetson", 12.5),
];

/// One cell of the results table. The TTFT column is stored exactly as
/// published (`ttft_reported`) because its printed unit is ambiguous; it is
/// never converted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCell {
    pub config_id: String,
    pub model_id: String,
    pub throughput_tps: Option<f64>,
    pub ttft_reported: Option<f64>,
    pub mj_per_mtok: Option<f64>,
    pub supported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFixture {
    pub cells: Vec<FixtureCell>,
}

impl GoldenFixture {
    /// The fixture bundled with the crate.
    pub fn builtin() -> GoldenFixture {
        GoldenFixture::from_csv_str(TABLE3_CSV, Path::new("fixtures/table3.csv"))
            .expect("bundled fixture parses")
    }

    pub fn from_csv_str(text: &str, origin: &Path) -> Result<GoldenFixture> {
        let mut cells = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if idx == 0 {
                let expected = "config_id,model_id,throughput_tps,ttft_reported,mj_per_mtok,supported";
                if line != expected {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: 1,
                        message: format!("expected header `{expected}`"),
                    });
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    message: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    message: format!("bad number `{s}`"),
                })
            };
            cells.push(FixtureCell {
                config_id: fields[0].to_string(),
                model_id: fields[1].to_string(),
                throughput_tps: opt(fields[2])?,
                ttft_reported: opt(fields[3])?,
                mj_per_mtok: opt(fields[4])?,
                supported: fields[5] == "true",
            });
        }
        let fixture = GoldenFixture { cells };
        fixture.validate(origin)?;
        Ok(fixture)
    }

    fn validate(&self, origin: &Path) -> Result<()> {
        for cell in &self.cells {
            if cell.supported
                && (cell.throughput_tps.is_none()
                    || cell.ttft_reported.is_none()
                    || cell.mj_per_mtok.is_none())
            {
                return Err(Error::validation(
                    format!("{}:{}/{}", origin.display(), cell.config_id, cell.model_id),
                    "supported cell must carry all three metrics",
                ));
            }
        }
        Ok(())
    }

    pub fn cell(&self, config_id: &str, model_id: &str) -> Option<&FixtureCell> {
        self.cells
            .iter()
            .find(|c| c.config_id == config_id && c.model_id == model_id)
    }

    pub fn supported_cells(&self) -> impl Iterator<Item = &FixtureCell> {
        self.cells.iter().filter(|c| c.supported)
    }

    /// All supported cells of one model, in configuration column order.
    pub fn model_column(&self, model_id: &str) -> Vec<&FixtureCell> {
        CONFIG_ORDER
            .iter()
            .filter_map(|cfg| self.cell(cfg, model_id))
            .filter(|c| c.supported)
            .collect()
    }

    /// Metric vectors for every supported cell. `ttft_s` carries the
    /// published TTFT value as-is; `power_w` is the implied mean power.
    pub fn metric_vectors(&self, catalog: &Catalog) -> Result<Vec<MetricVector>> {
        let mut out = Vec::new();
        for cell in self.supported_cells() {
            let (device_id, runtime) =
                config_device_runtime(&cell.config_id).ok_or_else(|| {
                    Error::validation("config_id", format!("unknown `{}`", cell.config_id))
                })?;
            let device = catalog.device(device_id).ok_or_else(|| {
                Error::validation("catalog", format!("device `{device_id}` missing"))
            })?;
            let tps = cell.throughput_tps.unwrap();
            let mj = cell.mj_per_mtok.unwrap();
            let v = MetricVector {
                config_key: ConfigKey::new(&cell.config_id, &cell.model_id, runtime),
                throughput_tps: tps,
                ttft_s: cell.ttft_reported.unwrap(),
                mj_per_mtok: Some(mj),
                tps_per_m3: None,
                power_w: Some(tps * mj),
                volume_m3: device.volume_m3(),
            }
            .with_density();
            out.push(v);
        }
        Ok(out)
    }
}

/// The bundled catalog.
pub fn builtin_catalog() -> Catalog {
    Catalog::from_toml_str(CATALOG_TOML, Path::new("fixtures/catalog.toml"))
        .expect("bundled catalog parses")
}
