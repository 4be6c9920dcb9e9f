//! Composite metrics and trade-off analysis: throughput density, energy
//! efficiency gains, and Pareto frontiers over configuration points.

use serde::{Deserialize, Serialize};

use crate::adapters::RuntimeKind;
use crate::error::{Error, Result};

/// Identifies one benchmarked configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigKey {
    pub device_id: String,
    pub model_id: String,
    pub runtime_kind: RuntimeKind,
}

impl ConfigKey {
    pub fn new(device_id: impl Into<String>, model_id: impl Into<String>, runtime_kind: RuntimeKind) -> Self {
        ConfigKey {
            device_id: device_id.into(),
            model_id: model_id.into(),
            runtime_kind,
        }
    }
}

impl std::fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.device_id, self.model_id, self.runtime_kind)
    }
}

/// All metric axes for one configuration. Optional axes stay `None` when the
/// underlying measurement is absent; they are never imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub config_key: ConfigKey,
    pub throughput_tps: f64,
    pub ttft_s: f64,
    pub mj_per_mtok: Option<f64>,
    pub tps_per_m3: Option<f64>,
    pub power_w: Option<f64>,
    pub volume_m3: f64,
}

impl MetricVector {
    /// Fills `tps_per_m3` from throughput and volume.
    pub fn with_density(mut self) -> Self {
        if self.volume_m3 > 0.0 {
            self.tps_per_m3 = Some(throughput_density(self.throughput_tps, self.volume_m3).unwrap());
        }
        self
    }
}

/// Tokens per second per cubic metre of device.
pub fn throughput_density(throughput_tps: f64, volume_m3: f64) -> Result<f64> {
    if !(volume_m3 > 0.0) {
        return Err(Error::validation("volume_m3", "must be strictly positive"));
    }
    Ok(throughput_tps / volume_m3)
}

/// Ratio of baseline to accelerated energy cost (×).
pub fn efficiency_gain(baseline_mj: f64, accel_mj: f64) -> Result<f64> {
    if !(baseline_mj > 0.0) || !(accel_mj > 0.0) {
        return Err(Error::validation(
            "efficiency_gain",
            "both energies must be strictly positive",
        ));
    }
    Ok(baseline_mj / accel_mj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// Metric axes a frontier can optimise over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveField {
    ThroughputTps,
    TtftS,
    MjPerMtok,
    TpsPerM3,
    PowerW,
}

impl ObjectiveField {
    pub fn extract(self, v: &MetricVector) -> Option<f64> {
        match self {
            ObjectiveField::ThroughputTps => Some(v.throughput_tps),
            ObjectiveField::TtftS => Some(v.ttft_s),
            ObjectiveField::MjPerMtok => v.mj_per_mtok,
            ObjectiveField::TpsPerM3 => v.tps_per_m3,
            ObjectiveField::PowerW => v.power_w,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveField::ThroughputTps => "throughput_tps",
            ObjectiveField::TtftS => "ttft_s",
            ObjectiveField::MjPerMtok => "mj_per_mtok",
            ObjectiveField::TpsPerM3 => "tps_per_m3",
            ObjectiveField::PowerW => "power_w",
        }
    }
}

pub type Objective = (ObjectiveField, Direction);

/// `a` dominates `b` iff it is at least as good on every objective and
/// strictly better on at least one.
fn dominates(a: &[f64], b: &[f64], objectives: &[Objective]) -> bool {
    let mut strictly_better = false;
    for (i, (_, dir)) in objectives.iter().enumerate() {
        let (x, y) = (a[i], b[i]);
        let better = match dir {
            Direction::Maximize => x > y,
            Direction::Minimize => x < y,
        };
        let worse = match dir {
            Direction::Maximize => x < y,
            Direction::Minimize => x > y,
        };
        if worse {
            return false;
        }
        if better {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Non-dominated subset of `points`, input order preserved; exact ties are
/// all retained. Errors if any point lacks a requested objective.
pub fn pareto_frontier<'a>(
    points: &'a [MetricVector],
    objectives: &[Objective],
) -> Result<Vec<&'a MetricVector>> {
    if objectives.is_empty() {
        return Err(Error::validation("objectives", "at least one objective required"));
    }
    let mut values = Vec::with_capacity(points.len());
    for p in points {
        let mut row = Vec::with_capacity(objectives.len());
        for (field, _) in objectives {
            let v = field.extract(p).ok_or_else(|| Error::MissingObjective {
                field: field.name().to_string(),
                key: p.config_key.to_string(),
            })?;
            row.push(v);
        }
        values.push(row);
    }
    let mut frontier = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dominated = values
            .iter()
            .enumerate()
            .any(|(j, other)| j != i && dominates(other, &values[i], objectives));
        if !dominated {
            frontier.push(p);
        }
    }
    Ok(frontier)
}

/// Splits points into those defining all objectives and exclusion notes for
/// the rest. Report layers use this before building a frontier.
pub fn partition_defined(
    points: &[MetricVector],
    objectives: &[Objective],
) -> (Vec<MetricVector>, Vec<String>) {
    let mut defined = Vec::new();
    let mut notes = Vec::new();
    for p in points {
        let missing: Vec<&str> = objectives
            .iter()
            .filter(|(f, _)| f.extract(p).is_none())
            .map(|(f, _)| f.name())
            .collect();
        if missing.is_empty() {
            defined.push(p.clone());
        } else {
            notes.push(format!(
                "{}: excluded, missing {}",
                p.config_key,
                missing.join(", ")
            ));
        }
    }
    (defined, notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(device: &str, tps: f64, mj: Option<f64>) -> MetricVector {
        MetricVector {
            config_key: ConfigKey::new(device, "m", RuntimeKind::Mock),
            throughput_tps: tps,
            ttft_s: 0.0,
            mj_per_mtok: mj,
            tps_per_m3: None,
            power_w: None,
            volume_m3: 1.0,
        }
    }

    const OBJ: &[Objective] = &[
        (ObjectiveField::ThroughputTps, Direction::Maximize),
        (ObjectiveField::MjPerMtok, Direction::Minimize),
    ];

    /// O(n²) reference: keep p iff nothing dominates it.
    fn brute_force<'a>(
        points: &'a [MetricVector],
        objectives: &[Objective],
    ) -> Vec<&'a MetricVector> {
        points
            .iter()
            .filter(|p| {
                !points.iter().any(|q| {
                    let pv: Vec<f64> = objectives.iter().map(|(f, _)| f.extract(p).unwrap()).collect();
                    let qv: Vec<f64> = objectives.iter().map(|(f, _)| f.extract(q).unwrap()).collect();
                    dominates(&qv, &pv, objectives)
                })
            })
            .collect()
    }

    #[test]
    fn density_examples() {
        let d = throughput_density(3.44, 3.7908e-5).unwrap();
        assert!((d - 90746.0).abs() / 90746.0 < 1e-3, "{d}");
        let d = throughput_density(9.59, 1.659e-4).unwrap();
        assert!((d - 57806.0).abs() / 57806.0 < 1e-3, "{d}");
        assert_eq!(throughput_density(4.2, 1.0).unwrap(), 4.2);
    }

    #[test]
    fn gain_examples() {
        let g = efficiency_gain(33.24, 3.47).unwrap();
        assert!((g - 9.58).abs() < 0.005, "{g}");
        let g = efficiency_gain(35.31, 0.88).unwrap();
        assert!((g - 40.125).abs() < 1e-9, "{g}");
        let g = efficiency_gain(2.09, 1.15).unwrap();
        assert!((g - 1.82).abs() < 0.005, "{g}");
    }

    #[test]
    fn frontier_single_point_and_ties() {
        let single = vec![point("a", 1.0, Some(1.0))];
        assert_eq!(pareto_frontier(&single, OBJ).unwrap().len(), 1);

        let twins = vec![point("a", 1.0, Some(1.0)), point("b", 1.0, Some(1.0))];
        assert_eq!(pareto_frontier(&twins, OBJ).unwrap().len(), 2);
    }

    #[test]
    fn frontier_preserves_input_order() {
        let pts = vec![
            point("slow-lean", 1.0, Some(0.5)),
            point("dominated", 0.5, Some(5.0)),
            point("fast-hungry", 9.0, Some(2.0)),
        ];
        let front = pareto_frontier(&pts, OBJ).unwrap();
        let ids: Vec<&str> = front.iter().map(|p| p.config_key.device_id.as_str()).collect();
        assert_eq!(ids, ["slow-lean", "fast-hungry"]);
    }

    #[test]
    fn missing_objective_errors() {
        let pts = vec![point("a", 1.0, None)];
        assert!(matches!(
            pareto_frontier(&pts, OBJ),
            Err(Error::MissingObjective { .. })
        ));
    }

    #[test]
    fn partition_notes_missing_energy() {
        let pts = vec![point("a", 1.0, Some(1.0)), point("b", 2.0, None)];
        let (defined, notes) = partition_defined(&pts, OBJ);
        assert_eq!(defined.len(), 1);
        assert_eq!(notes.len(), 1);
        assert!(notes[0].contains("mj_per_mtok"));
    }

    proptest! {
        #[test]
        fn frontier_matches_brute_force(
            raw in proptest::collection::vec((0.01f64..100.0, 0.01f64..100.0), 1..200)
        ) {
            let pts: Vec<MetricVector> = raw
                .iter()
                .enumerate()
                .map(|(i, &(tps, mj))| point(&format!("p{i}"), tps, Some(mj)))
                .collect();
            let fast = pareto_frontier(&pts, OBJ).unwrap();
            let slow = brute_force(&pts, OBJ);
            let a: Vec<&ConfigKey> = fast.iter().map(|p| &p.config_key).collect();
            let b: Vec<&ConfigKey> = slow.iter().map(|p| &p.config_key).collect();
            prop_assert_eq!(a, b);
        }

        /// No member dominates another; every non-member is dominated.
        #[test]
        fn frontier_internal_consistency(
            raw in proptest::collection::vec((0.01f64..100.0, 0.01f64..100.0), 1..100)
        ) {
            let pts: Vec<MetricVector> = raw
                .iter()
                .enumerate()
                .map(|(i, &(tps, mj))| point(&format!("p{i}"), tps, Some(mj)))
                .collect();
            let front = pareto_frontier(&pts, OBJ).unwrap();
            let vals = |p: &MetricVector| -> Vec<f64> {
                OBJ.iter().map(|(f, _)| f.extract(p).unwrap()).collect()
            };
            for a in &front {
                for b in &front {
                    prop_assert!(!dominates(&vals(a), &vals(b), OBJ));
                }
            }
            for p in &pts {
                if !front.iter().any(|f| f.config_key == p.config_key) {
                    prop_assert!(front.iter().any(|f| dominates(&vals(f), &vals(p), OBJ)));
                }
            }
        }

        /// Rescaling all volumes by k preserves density ranking and frontier
        /// membership under density objectives.
        #[test]
        fn density_ranking_invariant_under_volume_scale(
            raw in proptest::collection::vec((0.01f64..100.0, 1e-6f64..1.0), 2..50),
            k in 0.01f64..100.0,
        ) {
            let build = |scale: f64| -> Vec<MetricVector> {
                raw.iter()
                    .enumerate()
                    .map(|(i, &(tps, vol))| {
                        let mut p = point(&format!("p{i}"), tps, Some(1.0));
                        p.volume_m3 = vol * scale;
                        p.with_density()
                    })
                    .collect()
            };
            let base = build(1.0);
            let scaled = build(k);
            let rank = |pts: &[MetricVector]| -> Vec<String> {
                let mut idx: Vec<usize> = (0..pts.len()).collect();
                idx.sort_by(|&a, &b| {
                    pts[b].tps_per_m3.unwrap().total_cmp(&pts[a].tps_per_m3.unwrap())
                        .then(pts[a].config_key.device_id.cmp(&pts[b].config_key.device_id))
                });
                idx.iter().map(|&i| pts[i].config_key.device_id.clone()).collect()
            };
            prop_assert_eq!(rank(&base), rank(&scaled));

            let obj: &[Objective] = &[
                (ObjectiveField::TpsPerM3, Direction::Maximize),
                (ObjectiveField::MjPerMtok, Direction::Minimize),
            ];
            let fa: Vec<String> = pareto_frontier(&base, obj).unwrap()
                .iter().map(|p| p.config_key.device_id.clone()).collect();
            let fb: Vec<String> = pareto_frontier(&scaled, obj).unwrap()
                .iter().map(|p| p.config_key.device_id.clone()).collect();
            prop_assert_eq!(fa, fb);
        }

        #[test]
        fn self_gain_is_unity(a in 1e-6f64..1e6) {
            prop_assert!((efficiency_gain(a, a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
