//! Device and model registry.
//!
//! Devices carry the physical and electrical identity used by the composite
//! metrics (bounding-box volume, nominal power band); models carry the
//! per-runtime identifiers the adapters need.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapters::RuntimeKind;
use crate::error::{Error, Result};

/// Physical and electrical identity of one edge platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: String,
    pub name: String,
    pub width_mm: f64,
    pub depth_mm: f64,
    pub height_mm: f64,
    pub price_usd: f64,
    pub cpu_desc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerator_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerator_tops: Option<f64>,
    /// (low, high) watts from the vendor/narrative, for sanity-checking
    /// implied power. Not used by any metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_power_range_w: Option<(f64, f64)>,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("device.id", "must be non-empty"));
        }
        for (field, v) in [
            ("width_mm", self.width_mm),
            ("depth_mm", self.depth_mm),
            ("height_mm", self.height_mm),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(
                    format!("device[{}].{}", self.id, field),
                    format!("must be strictly positive, got {v}"),
                ));
            }
        }
        if self.price_usd < 0.0 {
            return Err(Error::validation(
                format!("device[{}].price_usd", self.id),
                "must be nonnegative",
            ));
        }
        if let Some(t) = self.accelerator_tops {
            if t < 0.0 {
                return Err(Error::validation(
                    format!("device[{}].accelerator_tops", self.id),
                    "must be nonnegative",
                ));
            }
        }
        if let Some((lo, hi)) = self.nominal_power_range_w {
            if !(lo > 0.0 && hi > 0.0 && lo <= hi) {
                return Err(Error::validation(
                    format!("device[{}].nominal_power_range_w", self.id),
                    format!("requires 0 < low <= high, got ({lo}, {hi})"),
                ));
            }
        }
        Ok(())
    }

    /// Bounding-box volume in cubic metres.
    pub fn volume_m3(&self) -> f64 {
        self.width_mm * self.depth_mm * self.height_mm * 1e-9
    }

    /// Volume in cm³, the unit used in renders and bubble exports.
    pub fn volume_cm3(&self) -> f64 {
        self.volume_m3() * 1e6
    }
}

/// Weight quantisation scheme; metadata only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Quantisation {
    Q4KM,
    Other(String),
}

impl Serialize for Quantisation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Quantisation::Q4KM => s.serialize_str("Q4_K_M"),
            Quantisation::Other(x) => s.serialize_str(x),
        }
    }
}

impl<'de> Deserialize<'de> for Quantisation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "Q4_K_M" {
            Quantisation::Q4KM
        } else {
            Quantisation::Other(s)
        })
    }
}

/// One benchmarked model: family, scale, and the name each runtime knows it by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub family: String,
    pub param_count_b: f64,
    pub quantisation: Quantisation,
    /// Runtime kind -> model identifier that runtime expects.
    pub runtime_model_ids: BTreeMap<RuntimeKind, String>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("model.id", "must be non-empty"));
        }
        if !(self.param_count_b > 0.0) {
            return Err(Error::validation(
                format!("model[{}].param_count_b", self.id),
                "must be strictly positive",
            ));
        }
        if self.runtime_model_ids.is_empty() {
            return Err(Error::validation(
                format!("model[{}].runtime_model_ids", self.id),
                "must name at least one runtime",
            ));
        }
        Ok(())
    }
}

/// Immutable registry of devices and models. Safe to share across tasks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    #[serde(default, rename = "device")]
    pub devices: Vec<DeviceProfile>,
    #[serde(default, rename = "model")]
    pub models: Vec<ModelSpec>,
}

impl Catalog {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.devices {
            d.validate()?;
            if !seen.insert(d.id.clone()) {
                return Err(Error::validation(
                    "device.id",
                    format!("duplicate id `{}`", d.id),
                ));
            }
        }
        let mut seen = HashSet::new();
        for m in &self.models {
            m.validate()?;
            if !seen.insert(m.id.clone()) {
                return Err(Error::validation(
                    "model.id",
                    format!("duplicate id `{}`", m.id),
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Catalog> {
        let catalog: Catalog = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Catalog> {
        let text = std::fs::read_to_string(path)?;
        Catalog::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn device(&self, id: &str) -> Option<&DeviceProfile> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn model(&self, id: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.id == id)
    }
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn device(w: f64, d: f64, h: f64) -> DeviceProfile {
        DeviceProfile {
            id: "dev".into(),
            name: "dev".into(),
            width_mm: w,
            depth_mm: d,
            height_mm: h,
            price_usd: 0.0,
            cpu_desc: String::new(),
            accelerator_desc: None,
            accelerator_tops: None,
            nominal_power_range_w: None,
        }
    }

    #[test]
    fn volume_examples() {
        let v = device(54.0, 54.0, 13.0).volume_m3();
        assert!((v - 3.7908e-5).abs() < 1e-9);
        let v = device(100.0, 79.0, 21.0).volume_m3();
        assert!((v - 1.659e-4).abs() < 1e-8);
        assert_eq!(device(1000.0, 1000.0, 1000.0).volume_m3(), 1.0);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(device(0.0, 10.0, 10.0).validate().is_err());
        assert!(device(10.0, -1.0, 10.0).validate().is_err());
    }

    #[test]
    fn inverted_power_range_rejected() {
        let mut d = device(1.0, 1.0, 1.0);
        d.nominal_power_range_w = Some((5.0, 2.0));
        assert!(d.validate().is_err());
    }

    #[test]
    fn empty_catalog_loads() {
        let c = Catalog::from_toml_str("", Path::new("empty.toml")).unwrap();
        assert!(c.devices.is_empty() && c.models.is_empty());
    }

    #[test]
    fn duplicate_device_id_rejected() {
        let text = r#"
            [[device]]
            id = "rpi5"
            name = "a"
            width_mm = 1.0
            depth_mm = 1.0
            height_mm = 1.0
            price_usd = 1.0
            cpu_desc = ""

            [[device]]
            id = "rpi5"
            name = "b"
            width_mm = 1.0
            depth_mm = 1.0
            height_mm = 1.0
            price_usd = 1.0
            cpu_desc = ""
        "#;
        let err = Catalog::from_toml_str(text, Path::new("dup.toml")).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "[[device]]\nid = 42\n";
        match Catalog::from_toml_str(text, Path::new("bad.toml")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn model_requires_runtime_ids() {
        let m = ModelSpec {
            id: "m".into(),
            family: "f".into(),
            param_count_b: 1.5,
            quantisation: Quantisation::Q4KM,
            runtime_model_ids: BTreeMap::new(),
        };
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn volume_monotone_in_each_dimension(
            w in 1.0f64..500.0, d in 1.0f64..500.0, h in 1.0f64..500.0,
            bump in 0.1f64..100.0,
        ) {
            let base = device(w, d, h).volume_m3();
            prop_assert!(device(w + bump, d, h).volume_m3() > base);
            prop_assert!(device(w, d + bump, h).volume_m3() > base);
            prop_assert!(device(w, d, h + bump).volume_m3() > base);
        }

        #[test]
        fn catalog_toml_round_trip(
            w in 1.0f64..500.0, d in 1.0f64..500.0, h in 1.0f64..500.0,
            price in 0.0f64..1000.0,
        ) {
            let mut dev = device(w, d, h);
            dev.price_usd = price;
            let catalog = Catalog { devices: vec![dev], models: vec![] };
            let text = catalog.to_toml_string();
            let back = Catalog::from_toml_str(&text, Path::new("rt.toml")).unwrap();
            prop_assert_eq!(back, catalog);
        }
    }
}
