//! Energy accounting: power-trace ingestion, trapezoidal integration over a
//! run window, and the MJ/Mtok conversion. 1 J/token = 1 MJ/Mtok, and over a
//! shared window MJ/Mtok = mean watts / (tokens per second); `implied_power_w`
//! inverts that identity for fixture cross-checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamped wall-power samples from an external meter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    /// (UTC milliseconds, watts), strictly increasing timestamps.
    pub samples: Vec<(i64, f64)>,
    pub source: String,
}

impl PowerTrace {
    pub fn new(samples: Vec<(i64, f64)>, source: impl Into<String>) -> Result<Self> {
        let trace = PowerTrace {
            samples,
            source: source.into(),
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.samples.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::validation(
                    "trace.samples",
                    format!("timestamps must be strictly increasing at t={}", pair[1].0),
                ));
            }
        }
        if let Some((t, w)) = self.samples.iter().find(|(_, w)| *w < 0.0) {
            return Err(Error::validation(
                "trace.samples",
                format!("negative power {w} W at t={t}"),
            ));
        }
        Ok(())
    }

    /// Parses the meter CSV: header `timestamp_utc_ms,watts`, one sample per line.
    pub fn from_csv_str(text: &str, origin: &Path, source: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if idx == 0 {
                if line != "timestamp_utc_ms,watts" {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: 1,
                        message: format!(
                            "expected header `timestamp_utc_ms,watts`, got `{line}`"
                        ),
                    });
                }
                continue;
            }
            let mut fields = line.split(',');
            let parse = |s: Option<&str>, what: &str| -> Result<f64> {
                s.and_then(|v| v.trim().parse::<f64>().ok()).ok_or_else(|| Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    message: format!("bad {what} in `{line}`"),
                })
            };
            let t = parse(fields.next(), "timestamp")? as i64;
            let w = parse(fields.next(), "watts")?;
            samples.push((t, w));
        }
        PowerTrace::new(samples, source)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        PowerTrace::from_csv_str(&text, path, &path.display().to_string())
    }

    /// Power at UTC ms `t`, linearly interpolated between neighbouring samples.
    fn power_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        match s.binary_search_by(|(ts, _)| (*ts as f64).partial_cmp(&t).unwrap()) {
            Ok(i) => s[i].1,
            Err(0) => s[0].1,
            Err(i) if i == s.len() => s[s.len() - 1].1,
            Err(i) => {
                let (t0, w0) = (s[i - 1].0 as f64, s[i - 1].1);
                let (t1, w1) = (s[i].0 as f64, s[i].1);
                w0 + (w1 - w0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    TraceIntegrated,
    ConstantPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyResult {
    pub joules: f64,
    pub window_s: f64,
    pub mean_power_w: f64,
    pub mode: EnergyMode,
    /// Set when the window fell outside trace coverage and edge samples were
    /// extended to cover it.
    #[serde(default)]
    pub extrapolated: bool,
}

impl EnergyResult {
    /// Constant-power mode: single operator-entered mean wattage.
    pub fn constant(power_w: f64, window_s: f64) -> Result<Self> {
        if !(window_s > 0.0) {
            return Err(Error::validation("window_s", "must be positive"));
        }
        if power_w < 0.0 {
            return Err(Error::validation("power_w", "must be nonnegative"));
        }
        Ok(EnergyResult {
            joules: power_w * window_s,
            window_s,
            mean_power_w: power_w,
            mode: EnergyMode::ConstantPower,
            extrapolated: false,
        })
    }
}

/// Trapezoidal integration of the trace over `[t0_ms, t1_ms]` (UTC ms), with
/// linear interpolation at the window edges. Unless `extrapolate` is set the
/// trace must cover the whole window; with it, out-of-coverage stretches are
/// clamped to the nearest sample and the result is flagged.
pub fn integrate(
    trace: &PowerTrace,
    t0_ms: f64,
    t1_ms: f64,
    extrapolate: bool,
) -> Result<EnergyResult> {
    if trace.samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if !(t1_ms > t0_ms) {
        return Err(Error::validation("window", "t0 must precede t1"));
    }
    let lo = trace.samples[0].0 as f64;
    let hi = trace.samples[trace.samples.len() - 1].0 as f64;
    let covered = lo <= t0_ms && hi >= t1_ms;
    if !covered && !extrapolate {
        return Err(Error::WindowOutsideTrace {
            t0: t0_ms,
            t1: t1_ms,
            lo,
            hi,
        });
    }

    // Breakpoints: window edges plus every interior sample. The integrand is
    // piecewise linear on these, so the trapezoid rule is exact per segment.
    let mut ts: Vec<f64> = vec![t0_ms];
    for &(t, _) in &trace.samples {
        let t = t as f64;
        if t > t0_ms && t < t1_ms {
            ts.push(t);
        }
    }
    ts.push(t1_ms);

    let mut joules = 0.0;
    for pair in ts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let wa = trace.power_at(a);
        let wb = trace.power_at(b);
        joules += (wa + wb) / 2.0 * (b - a) / 1000.0;
    }

    let window_s = (t1_ms - t0_ms) / 1000.0;
    Ok(EnergyResult {
        joules,
        window_s,
        mean_power_w: joules / window_s,
        mode: EnergyMode::TraceIntegrated,
        extrapolated: !covered,
    })
}

/// Energy per million tokens. Numerically identical to joules per token.
pub fn energy_per_mtok(energy: &EnergyResult, tokens: u64) -> Result<f64> {
    if tokens == 0 {
        return Err(Error::validation("tokens", "must be at least 1"));
    }
    Ok(energy.joules / tokens as f64)
}

/// Mean power implied by a published (throughput, MJ/Mtok) pair.
pub fn implied_power_w(throughput_tps: f64, mj_per_mtok: f64) -> Result<f64> {
    if !(throughput_tps > 0.0) || !(mj_per_mtok > 0.0) {
        return Err(Error::validation(
            "implied_power",
            "both inputs must be strictly positive",
        ));
    }
    Ok(throughput_tps * mj_per_mtok)
}

/// Where per-run energy comes from: a meter trace or a single operator-entered
/// mean wattage.
#[derive(Debug, Clone)]
pub enum EnergySource {
    Trace(PowerTrace),
    ConstantPower(f64),
}

#[derive(Debug, Clone)]
pub struct EnergyOptions {
    /// Tolerated meter clock skew; windows within this of trace coverage are
    /// clamped and flagged rather than rejected.
    pub skew_tolerance_ms: f64,
    /// Subtract this idle draw before converting to MJ/Mtok. Off by default;
    /// results carry a note when it is used.
    pub idle_baseline_w: Option<f64>,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions {
            skew_tolerance_ms: 500.0,
            idle_baseline_w: None,
        }
    }
}

/// Computes per-run energy over each run's [submit, last_token] window and
/// folds MJ/Mtok means into the matching aggregates. Returns notes for
/// skipped or flagged runs.
pub fn attach_energy(
    aggregates: &mut [crate::bench::AggregateResult],
    runs: &[crate::bench::RunRecord],
    source: &EnergySource,
    options: &EnergyOptions,
) -> Vec<String> {
    use std::collections::BTreeMap;

    let mut notes = Vec::new();
    let mut per_config: BTreeMap<(String, String, crate::adapters::RuntimeKind), Vec<f64>> =
        BTreeMap::new();

    for run in runs.iter().filter(|r| r.status.is_ok() && r.token_count > 0) {
        let t0 = run.wall_start_utc_ms as f64;
        let t1 = t0 + run.elapsed_s() * 1000.0;
        let label = format!("{}/{}/{}", run.device_id, run.model_id, run.runtime_kind);
        let result = match source {
            EnergySource::ConstantPower(w) => EnergyResult::constant(*w, run.elapsed_s()),
            EnergySource::Trace(trace) => {
                if trace.samples.is_empty() {
                    notes.push(format!("{label}: empty trace, skipped"));
                    continue;
                }
                let lo = trace.samples[0].0 as f64;
                let hi = trace.samples[trace.samples.len() - 1].0 as f64;
                let skew = (lo - t0).max(t1 - hi).max(0.0);
                if skew > options.skew_tolerance_ms {
                    notes.push(format!(
                        "{label}: run window outside trace coverage by {skew:.0} ms (> {:.0} ms tolerance), skipped",
                        options.skew_tolerance_ms
                    ));
                    continue;
                }
                let r = integrate(trace, t0, t1, true);
                if let Ok(e) = &r {
                    if e.extrapolated {
                        notes.push(format!(
                            "{label}: trace edges clamped over {skew:.0} ms of skew"
                        ));
                    }
                }
                r
            }
        };
        let mut energy = match result {
            Ok(e) => e,
            Err(e) => {
                notes.push(format!("{label}: {e}"));
                continue;
            }
        };
        if let Some(idle) = options.idle_baseline_w {
            energy.joules = (energy.joules - idle * energy.window_s).max(0.0);
            notes.push(format!(
                "{label}: idle baseline of {idle} W subtracted (marginal energy, not device-total)"
            ));
        }
        match energy_per_mtok(&energy, run.token_count) {
            Ok(mj) => per_config
                .entry((run.device_id.clone(), run.model_id.clone(), run.runtime_kind))
                .or_default()
                .push(mj),
            Err(e) => notes.push(format!("{label}: {e}")),
        }
    }

    for agg in aggregates.iter_mut() {
        let key = (agg.device_id.clone(), agg.model_id.clone(), agg.runtime_kind);
        if let Some(samples) = per_config.get(&key) {
            let stats = crate::bench::Stats::from_samples(samples);
            agg.energy_mj_per_mtok = Some(crate::bench::MeanStdev {
                mean: stats.mean,
                stdev: stats.stdev,
            });
        }
    }
    notes
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_trace(watts: f64, t0: i64, t1: i64, step: i64) -> PowerTrace {
        let samples = (t0..=t1).step_by(step as usize).map(|t| (t, watts)).collect();
        PowerTrace::new(samples, "test").unwrap()
    }

    #[test]
    fn constant_ten_watts_ten_seconds() {
        let trace = constant_trace(10.0, 0, 10_000, 1000);
        let e = integrate(&trace, 0.0, 10_000.0, false).unwrap();
        assert_eq!(e.joules, 100.0);
        assert_eq!(e.mean_power_w, 10.0);
        assert!(!e.extrapolated);
    }

    #[test]
    fn linear_ramp_five_to_fifteen() {
        let trace = PowerTrace::new(vec![(0, 5.0), (10_000, 15.0)], "test").unwrap();
        let e = integrate(&trace, 0.0, 10_000.0, false).unwrap();
        assert!((e.joules - 100.0).abs() < 1e-9, "{}", e.joules);
    }

    /// 1 ms Riemann sums bracket the step-trace integral.
    fn riemann_oracle(trace: &PowerTrace, t0: f64, t1: f64) -> f64 {
        let mut joules = 0.0;
        let mut t = t0;
        while t < t1 {
            let next = (t + 1.0).min(t1);
            let mid = (t + next) / 2.0;
            joules += trace.power_at(mid) * (next - t) / 1000.0;
            t = next;
        }
        joules
    }

    #[test]
    fn step_trace_matches_riemann_oracle() {
        // 5 W for 5 s then 15 W for 5 s, with the step between samples
        let samples = vec![(0, 5.0), (4_999, 5.0), (5_001, 15.0), (10_000, 15.0)];
        let trace = PowerTrace::new(samples, "test").unwrap();
        let e = integrate(&trace, 0.0, 10_000.0, false).unwrap();
        let oracle = riemann_oracle(&trace, 0.0, 10_000.0);
        assert!(
            (e.joules - oracle).abs() / oracle < 0.01,
            "trapezoid {} vs oracle {}",
            e.joules,
            oracle
        );
    }

    #[test]
    fn partial_window_with_interpolated_edges() {
        let trace = PowerTrace::new(vec![(0, 0.0), (10_000, 10.0)], "test").unwrap();
        // window [2s, 8s]: ramp from 2 W to 8 W -> mean 5 W over 6 s = 30 J
        let e = integrate(&trace, 2_000.0, 8_000.0, false).unwrap();
        assert!((e.joules - 30.0).abs() < 1e-9);
    }

    #[test]
    fn window_outside_coverage_errors_unless_extrapolated() {
        let trace = constant_trace(10.0, 1000, 9000, 1000);
        assert!(matches!(
            integrate(&trace, 0.0, 10_000.0, false),
            Err(Error::WindowOutsideTrace { .. })
        ));
        let e = integrate(&trace, 0.0, 10_000.0, true).unwrap();
        assert!(e.extrapolated);
        assert!((e.joules - 100.0).abs() < 1e-9); // clamped to 10 W edges
    }

    #[test]
    fn empty_trace_errors() {
        let trace = PowerTrace {
            samples: vec![],
            source: "empty".into(),
        };
        assert!(matches!(
            integrate(&trace, 0.0, 1.0, false),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn mj_per_mtok_unit_identity() {
        let e = EnergyResult::constant(10.0, 10.0).unwrap(); // 100 J
        assert_eq!(energy_per_mtok(&e, 50).unwrap(), 2.0);
    }

    #[test]
    fn implied_power_cross_checks() {
        // jetson-gpu deepseek cell: 11.03 W at 9.59 tok/s and 1.15 MJ/Mtok
        let p = implied_power_w(9.59, 1.15).unwrap();
        assert!((p - 11.03).abs() < 0.01);
        // m5stack deepseek cell sits near the ~1.4 W narrative draw
        let p = implied_power_w(2.42, 0.57).unwrap();
        assert!((p - 1.3794).abs() < 1e-9);
        assert_eq!(implied_power_w(1.0, 1.0).unwrap(), 1.0);
        // rpi5 deepseek row: ~11 W narrative
        let p = implied_power_w(0.32, 33.24).unwrap();
        assert!((p - 10.64).abs() < 0.01);
        // rpi5-hat instruct row: ~6 W narrative
        let p = implied_power_w(6.34, 0.88).unwrap();
        assert!((p - 5.58).abs() < 0.01);
    }

    #[test]
    fn attach_constant_power_matches_w_over_tps() {
        use crate::bench::aggregate_runs;
        use crate::testutil::synthetic_run;
        let runs = vec![
            synthetic_run("dev", "m", 0.5, 10.0, 100),
            synthetic_run("dev", "m", 0.5, 10.0, 100),
        ];
        let mut aggs = aggregate_runs(&runs);
        let notes = attach_energy(
            &mut aggs,
            &runs,
            &EnergySource::ConstantPower(11.03),
            &EnergyOptions::default(),
        );
        assert!(notes.is_empty(), "{notes:?}");
        let energy = aggs[0].energy_mj_per_mtok.unwrap();
        let expected = 11.03 / aggs[0].throughput_tps.mean;
        assert!((energy.mean - expected).abs() < 1e-9);
        assert_eq!(energy.stdev, 0.0);
    }

    #[test]
    fn attach_trace_skips_uncovered_runs() {
        use crate::bench::aggregate_runs;
        use crate::testutil::synthetic_run;
        let runs = vec![synthetic_run("dev", "m", 0.5, 10.0, 100)];
        // synthetic run starts at wall 1_700_000_000_000; trace far away
        let trace = PowerTrace::new(vec![(0, 5.0), (1000, 5.0)], "meter").unwrap();
        let mut aggs = aggregate_runs(&runs);
        let notes = attach_energy(
            &mut aggs,
            &runs,
            &EnergySource::Trace(trace),
            &EnergyOptions::default(),
        );
        assert!(aggs[0].energy_mj_per_mtok.is_none());
        assert_eq!(notes.len(), 1);
        assert!(notes[0].contains("outside trace coverage"), "{}", notes[0]);
    }

    #[test]
    fn attach_trace_integrates_covering_window() {
        use crate::bench::aggregate_runs;
        use crate::testutil::synthetic_run;
        let runs = vec![synthetic_run("dev", "m", 0.5, 10.0, 100)];
        let t0 = runs[0].wall_start_utc_ms;
        let t_end = t0 + (runs[0].elapsed_s() * 1000.0) as i64;
        let trace = PowerTrace::new(
            vec![(t0 - 1000, 8.0), (t_end + 1000, 8.0)],
            "meter",
        )
        .unwrap();
        let mut aggs = aggregate_runs(&runs);
        let notes = attach_energy(
            &mut aggs,
            &runs,
            &EnergySource::Trace(trace),
            &EnergyOptions::default(),
        );
        assert!(notes.is_empty(), "{notes:?}");
        let energy = aggs[0].energy_mj_per_mtok.unwrap();
        let expected = 8.0 / aggs[0].throughput_tps.mean;
        assert!((energy.mean - expected).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trip_and_bad_lines() {
        let csv = "timestamp_utc_ms,watts\n0,5.0\n1000,6.5\n";
        let trace = PowerTrace::from_csv_str(csv, Path::new("t.csv"), "meter").unwrap();
        assert_eq!(trace.samples, vec![(0, 5.0), (1000, 6.5)]);

        let bad = "timestamp_utc_ms,watts\n0,notanumber\n";
        match PowerTrace::from_csv_str(bad, Path::new("t.csv"), "meter") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        /// integrate([t0,t1]) + integrate([t1,t2]) == integrate([t0,t2])
        #[test]
        fn additivity(
            watts in proptest::collection::vec(0.0f64..50.0, 3..20),
            split in 0.1f64..0.9,
        ) {
            let samples: Vec<(i64, f64)> =
                watts.iter().enumerate().map(|(i, &w)| (i as i64 * 500, w)).collect();
            let t_end = samples.last().unwrap().0 as f64;
            let trace = PowerTrace::new(samples, "prop").unwrap();
            let mid = (t_end * split).max(1.0).min(t_end - 1.0);
            let full = integrate(&trace, 0.0, t_end, false).unwrap().joules;
            let a = integrate(&trace, 0.0, mid, false).unwrap().joules;
            let b = integrate(&trace, mid, t_end, false).unwrap().joules;
            prop_assert!((a + b - full).abs() < 1e-6 * full.max(1.0));
        }

        /// Scaling watts by k scales joules and MJ/Mtok by k; scaling power
        /// and token rate together leaves MJ/Mtok unchanged.
        #[test]
        fn scale_equivariance(
            power in 0.5f64..40.0,
            rate in 0.1f64..50.0,
            k in 0.1f64..10.0,
            window in 1.0f64..100.0,
        ) {
            let tokens = (rate * window).ceil().max(1.0) as u64;
            let base = EnergyResult::constant(power, window).unwrap();
            let scaled = EnergyResult::constant(k * power, window).unwrap();
            let m0 = energy_per_mtok(&base, tokens).unwrap();
            let m1 = energy_per_mtok(&scaled, tokens).unwrap();
            prop_assert!((m1 - k * m0).abs() < 1e-9 * m0.abs().max(1.0));

            // scaling power by k and generating the same tokens in 1/k of the
            // time scales the token rate by k and leaves MJ/Mtok unchanged
            let both = EnergyResult::constant(k * power, window / k).unwrap();
            let mk = energy_per_mtok(&both, tokens).unwrap();
            let rel = (mk - m0).abs() / m0;
            prop_assert!(rel < 1e-12, "rel={rel}");
        }

        /// implied_power(energy_per_mtok) recovers constant power exactly
        /// when throughput = tokens / window.
        #[test]
        fn implied_power_identity(
            power in 0.1f64..50.0,
            window in 1.0f64..500.0,
            tokens in 1u64..10_000,
        ) {
            let e = EnergyResult::constant(power, window).unwrap();
            let mj = energy_per_mtok(&e, tokens).unwrap();
            let throughput = tokens as f64 / window;
            let p = implied_power_w(throughput, mj).unwrap();
            prop_assert!((p - power).abs() < 1e-9 * power.max(1.0));
        }
    }
}
