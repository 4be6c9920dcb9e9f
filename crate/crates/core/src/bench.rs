//! Measurement engine: warmup, timed streaming runs, and aggregation.
//!
//! Timing is client-side: submission and every chunk receipt are stamped on
//! the monotonic clock, and throughput is tokens divided by total elapsed
//! time including TTFT. A generation-phase rate (first-to-last token) is
//! kept alongside for diagnostics.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::adapters::{
    chat_stream, health_check, InferenceRequest, RuntimeEndpoint, RuntimeKind, TokenEvent, Timeouts,
};
use crate::catalog::ModelSpec;
use crate::clock::{monotonic_ns, wall_utc_ms};
use crate::error::{Error, Result};

pub const DEFAULT_PROMPT: &str = "Explain why the sky is blue in two or more paragraphs.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub runs: u32,
    pub warmup_runs: u32,
    #[serde(default)]
    pub decode_params: BTreeMap<String, serde_json::Value>,
    /// Seconds of idle between timed runs, for thermal settling.
    pub cooldown_s: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            prompt: DEFAULT_PROMPT.to_string(),
            max_new_tokens: 100,
            runs: 5,
            warmup_runs: 1,
            decode_params: BTreeMap::new(),
            cooldown_s: 2.0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::validation("bench.runs", "must be at least 1"));
        }
        if self.max_new_tokens < 1 {
            return Err(Error::validation("bench.max_new_tokens", "must be at least 1"));
        }
        if self.cooldown_s < 0.0 {
            return Err(Error::validation("bench.cooldown_s", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "reason")]
pub enum RunStatus {
    Ok,
    Failed(String),
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }
}

/// One timed streaming inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub device_id: String,
    pub model_id: String,
    pub runtime_kind: RuntimeKind,
    pub submit_monotonic_ns: u64,
    pub first_token_ns: u64,
    pub last_token_ns: u64,
    /// UTC ms at submission; aligns the run window with power traces.
    pub wall_start_utc_ms: i64,
    pub token_count: u64,
    pub events: Vec<TokenEvent>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn ttft_s(&self) -> f64 {
        (self.first_token_ns.saturating_sub(self.submit_monotonic_ns)) as f64 * 1e-9
    }

    /// Total elapsed seconds, submission to last token (includes TTFT).
    pub fn elapsed_s(&self) -> f64 {
        (self.last_token_ns.saturating_sub(self.submit_monotonic_ns)) as f64 * 1e-9
    }

    /// Canonical throughput: tokens over total elapsed time.
    pub fn throughput_tps(&self) -> f64 {
        let e = self.elapsed_s();
        if e > 0.0 {
            self.token_count as f64 / e
        } else {
            0.0
        }
    }

    /// Generation-phase rate over the inter-token gaps only; needs >= 2 tokens.
    pub fn generation_tps(&self) -> Option<f64> {
        if self.token_count < 2 {
            return None;
        }
        let span = (self.last_token_ns.saturating_sub(self.first_token_ns)) as f64 * 1e-9;
        if span > 0.0 {
            Some((self.token_count - 1) as f64 / span)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Stats {
    pub mean: f64,
    pub stdev: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn from_samples(xs: &[f64]) -> Stats {
        if xs.is_empty() {
            return Stats::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stdev = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Stats { mean, stdev, min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStdev {
    pub mean: f64,
    pub stdev: f64,
}

/// Statistics for one (device, model, runtime) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub device_id: String,
    pub model_id: String,
    pub runtime_kind: RuntimeKind,
    /// Count of ok runs aggregated.
    pub n: u32,
    pub status: RunStatus,
    pub throughput_tps: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_tps: Option<Stats>,
    pub ttft_s: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_mj_per_mtok: Option<MeanStdev>,
    /// run throughput minus mean throughput, per ok run.
    pub per_run_deviations: Vec<f64>,
    /// Set when the configuration ran without any warmup.
    #[serde(default)]
    pub no_warmup: bool,
}

/// Endpoint under test plus the operator-chosen device identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTarget {
    pub device_id: String,
    pub kind: RuntimeKind,
    pub base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chat_path: Option<String>,
}

impl BenchTarget {
    pub fn new(device_id: impl Into<String>, kind: RuntimeKind, base_url: impl Into<String>) -> Self {
        BenchTarget {
            device_id: device_id.into(),
            kind,
            base_url: base_url.into(),
            chat_path: None,
        }
    }

    pub fn endpoint(&self) -> RuntimeEndpoint {
        RuntimeEndpoint {
            kind: self.kind,
            base_url: self.base_url.clone(),
            chat_path: self.chat_path.clone(),
        }
    }
}

/// Suite configuration file: catalog reference, endpoints, model list, and
/// the measurement protocol.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SuiteConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<std::path::PathBuf>,
    #[serde(default, rename = "endpoint")]
    pub endpoints: Vec<BenchTarget>,
    /// Catalog model ids to benchmark; empty means every catalog model.
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default = "BenchmarkConfig::default")]
    pub bench: BenchmarkConfig,
}

impl SuiteConfig {
    pub fn load(path: &std::path::Path) -> Result<SuiteConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: SuiteConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.message().to_string(),
        })?;
        config.bench.validate()?;
        Ok(config)
    }
}

fn resolve_model_id<'a>(endpoint: &RuntimeEndpoint, model: &'a ModelSpec) -> Result<&'a str> {
    model
        .runtime_model_ids
        .get(&endpoint.kind)
        .map(|s| s.as_str())
        .ok_or_else(|| {
            Error::validation(
                format!("model[{}].runtime_model_ids", model.id),
                format!("no identifier for runtime `{}`", endpoint.kind),
            )
        })
}

fn build_request(runtime_model_id: &str, config: &BenchmarkConfig, max_tokens: u32) -> InferenceRequest {
    let mut req = InferenceRequest::new(runtime_model_id, config.prompt.clone(), max_tokens);
    req.decode_params = config.decode_params.clone();
    req
}

/// One timed run. Adapter failures land in `status`, never panic.
pub fn run_once(
    target: &BenchTarget,
    model: &ModelSpec,
    config: &BenchmarkConfig,
    timeouts: &Timeouts,
) -> RunRecord {
    let mut record = RunRecord {
        device_id: target.device_id.clone(),
        model_id: model.id.clone(),
        runtime_kind: target.kind,
        submit_monotonic_ns: 0,
        first_token_ns: 0,
        last_token_ns: 0,
        wall_start_utc_ms: 0,
        token_count: 0,
        events: Vec::new(),
        status: RunStatus::Ok,
    };
    let runtime_model_id = match resolve_model_id(&target.endpoint(), model) {
        Ok(id) => id.to_string(),
        Err(e) => {
            record.status = RunStatus::Failed(e.to_string());
            return record;
        }
    };
    let request = build_request(&runtime_model_id, config, config.max_new_tokens);

    record.wall_start_utc_ms = wall_utc_ms();
    record.submit_monotonic_ns = monotonic_ns();
    let mut events: Vec<TokenEvent> = Vec::with_capacity(config.max_new_tokens as usize + 1);
    let outcome = chat_stream(&target.endpoint(), &request, timeouts, &mut |e| events.push(e));

    match outcome {
        Ok(_) => {
            let tokens: Vec<&TokenEvent> = events.iter().filter(|e| !e.is_final).collect();
            if tokens.is_empty() {
                record.status = RunStatus::Failed("stream carried no token events".into());
            } else {
                record.first_token_ns = tokens[0].recv_monotonic_ns;
                record.last_token_ns = tokens[tokens.len() - 1].recv_monotonic_ns;
                record.token_count = tokens.len() as u64;
                // reconcile against the runtime's own count; client wins
                if let Some(reported) = events.iter().rev().find_map(|e| e.server_reported) {
                    if reported.eval_count != record.token_count {
                        eprintln!(
                            "warning: {}: server eval_count {} != client token count {}",
                            record.model_id, reported.eval_count, record.token_count
                        );
                    }
                }
            }
            record.events = events;
        }
        Err(e) => {
            record.status = RunStatus::Failed(e.to_string());
            record.events = events;
        }
    }
    record
}

/// Untimed request that loads the model; its timing is never recorded.
pub fn warmup(
    target: &BenchTarget,
    model: &ModelSpec,
    config: &BenchmarkConfig,
    timeouts: &Timeouts,
) -> Result<()> {
    let runtime_model_id = resolve_model_id(&target.endpoint(), model)?;
    let request = build_request(runtime_model_id, config, config.max_new_tokens.min(8));
    chat_stream(&target.endpoint(), &request, timeouts, &mut |_| {}).map_err(|e| {
        Error::WarmupFailed {
            context: format!("{}/{}", target.device_id, model.id),
            message: e.to_string(),
        }
    })?;
    Ok(())
}

/// Everything `run_suite` produced: per-run records plus aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateResult>,
}

/// Executes the full protocol for every (target × model) pair, strictly
/// sequentially: warmup, then `runs` timed runs with cooldown between them.
/// Failed runs are retried once and never averaged; a pair with zero ok runs
/// still appears in the output, annotated.
pub fn run_suite(
    targets: &[BenchTarget],
    models: &[ModelSpec],
    config: &BenchmarkConfig,
    timeouts: &Timeouts,
) -> Result<SuiteOutcome> {
    config.validate()?;
    let mut all_runs = Vec::new();
    let mut aggregates = Vec::new();

    for target in targets {
        if !health_check(&target.endpoint(), timeouts) {
            for model in models {
                aggregates.push(failed_aggregate(
                    target,
                    model,
                    config,
                    format!("endpoint {} failed health check", target.base_url),
                ));
            }
            continue;
        }
        for model in models {
            let mut warmup_err = None;
            for _ in 0..config.warmup_runs {
                if let Err(e) = warmup(target, model, config, timeouts) {
                    warmup_err = Some(e);
                    break;
                }
            }
            if let Some(e) = warmup_err {
                aggregates.push(failed_aggregate(target, model, config, e.to_string()));
                continue;
            }

            let mut ok_runs = Vec::new();
            let mut last_failure = None;
            for i in 0..config.runs {
                if i > 0 && config.cooldown_s > 0.0 {
                    std::thread::sleep(Duration::from_secs_f64(config.cooldown_s));
                }
                let mut record = run_once(target, model, config, timeouts);
                if !record.status.is_ok() {
                    // one retry, outside the recorded sample
                    record = run_once(target, model, config, timeouts);
                }
                match &record.status {
                    RunStatus::Ok => ok_runs.push(record.clone()),
                    RunStatus::Failed(reason) => last_failure = Some(reason.clone()),
                }
                all_runs.push(record);
            }

            let mut agg = aggregate_pair(&ok_runs).unwrap_or_else(|| {
                failed_aggregate(
                    target,
                    model,
                    config,
                    last_failure.unwrap_or_else(|| "no successful runs".into()),
                )
            });
            agg.no_warmup = config.warmup_runs == 0;
            aggregates.push(agg);
        }
    }

    Ok(SuiteOutcome {
        runs: all_runs,
        aggregates,
    })
}

fn failed_aggregate(
    target: &BenchTarget,
    model: &ModelSpec,
    _config: &BenchmarkConfig,
    reason: String,
) -> AggregateResult {
    AggregateResult {
        device_id: target.device_id.clone(),
        model_id: model.id.clone(),
        runtime_kind: target.kind,
        n: 0,
        status: RunStatus::Failed(reason),
        throughput_tps: Stats::default(),
        generation_tps: None,
        ttft_s: Stats::default(),
        energy_mj_per_mtok: None,
        per_run_deviations: Vec::new(),
        no_warmup: false,
    }
}

/// Aggregates ok runs of a single (device, model, runtime) pair.
/// Returns None when the slice is empty.
pub fn aggregate_pair(ok_runs: &[RunRecord]) -> Option<AggregateResult> {
    let first = ok_runs.first()?;
    let throughputs: Vec<f64> = ok_runs.iter().map(|r| r.throughput_tps()).collect();
    let ttfts: Vec<f64> = ok_runs.iter().map(|r| r.ttft_s()).collect();
    let gen: Vec<f64> = ok_runs.iter().filter_map(|r| r.generation_tps()).collect();
    let tps = Stats::from_samples(&throughputs);
    Some(AggregateResult {
        device_id: first.device_id.clone(),
        model_id: first.model_id.clone(),
        runtime_kind: first.runtime_kind,
        n: ok_runs.len() as u32,
        status: RunStatus::Ok,
        throughput_tps: tps,
        generation_tps: if gen.len() == ok_runs.len() {
            Some(Stats::from_samples(&gen))
        } else {
            None
        },
        ttft_s: Stats::from_samples(&ttfts),
        energy_mj_per_mtok: None,
        per_run_deviations: throughputs.iter().map(|t| t - tps.mean).collect(),
        no_warmup: false,
    })
}

/// Recomputes aggregates from persisted runs, grouped by configuration in
/// first-appearance order. The store's recompute-equals-stored check rides
/// on this.
pub fn aggregate_runs(runs: &[RunRecord]) -> Vec<AggregateResult> {
    let mut order: Vec<(String, String, RuntimeKind)> = Vec::new();
    let mut groups: BTreeMap<(String, String, RuntimeKind), Vec<RunRecord>> = BTreeMap::new();
    for r in runs {
        let key = (r.device_id.clone(), r.model_id.clone(), r.runtime_kind);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r.clone());
    }
    order
        .into_iter()
        .filter_map(|key| {
            let group = &groups[&key];
            let ok: Vec<RunRecord> = group.iter().filter(|r| r.status.is_ok()).cloned().collect();
            aggregate_pair(&ok).or_else(|| {
                group.first().map(|first| AggregateResult {
                    device_id: first.device_id.clone(),
                    model_id: first.model_id.clone(),
                    runtime_kind: first.runtime_kind,
                    n: 0,
                    status: RunStatus::Failed("no successful runs".into()),
                    throughput_tps: Stats::default(),
                    generation_tps: None,
                    ttft_s: Stats::default(),
                    energy_mj_per_mtok: None,
                    per_run_deviations: Vec::new(),
                    no_warmup: false,
                })
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::synthetic_run;
    use proptest::prelude::*;

    #[test]
    fn derived_quantities_from_synthetic_run() {
        // 10 tok/s, 500 ms ttft, 100 tokens: elapsed = 0.5 + 9.9 = 10.4 s
        let r = synthetic_run("d", "m", 0.5, 10.0, 100);
        assert!((r.ttft_s() - 0.5).abs() < 1e-9);
        assert!((r.elapsed_s() - 10.4).abs() < 1e-9);
        assert!((r.throughput_tps() - 100.0 / 10.4).abs() < 1e-6);
        assert!((r.generation_tps().unwrap() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn single_token_run_has_defined_throughput() {
        let r = synthetic_run("d", "m", 0.0, 10.0, 1);
        assert!(r.ttft_s() < 1e-9);
        assert!(r.generation_tps().is_none());
        // elapsed is 0 for a same-instant single token; throughput guards it
        assert!(r.throughput_tps() >= 0.0);
    }

    #[test]
    fn stats_single_sample_has_zero_stdev() {
        let s = Stats::from_samples(&[4.2]);
        assert_eq!(s.stdev, 0.0);
        assert_eq!(s.mean, 4.2);
        assert_eq!((s.min, s.max), (4.2, 4.2));
    }

    #[test]
    fn aggregate_mean_in_min_max_band() {
        let runs: Vec<RunRecord> = (0..5)
            .map(|i| synthetic_run("d", "m", 0.1, 8.0 + i as f64 * 0.1, 50))
            .collect();
        let agg = aggregate_pair(&runs).unwrap();
        assert_eq!(agg.n, 5);
        assert!(agg.throughput_tps.min <= agg.throughput_tps.mean);
        assert!(agg.throughput_tps.mean <= agg.throughput_tps.max);
        assert_eq!(agg.per_run_deviations.len(), 5);
        let dev_sum: f64 = agg.per_run_deviations.iter().sum();
        assert!(dev_sum.abs() < 1e-9);
    }

    #[test]
    fn aggregate_runs_groups_and_keeps_failures_visible() {
        let mut runs = vec![
            synthetic_run("a", "m", 0.1, 10.0, 20),
            synthetic_run("a", "m", 0.1, 10.0, 20),
            synthetic_run("b", "m", 0.1, 5.0, 20),
        ];
        runs[2].status = RunStatus::Failed("mid-stream drop".into());
        let aggs = aggregate_runs(&runs);
        assert_eq!(aggs.len(), 2);
        assert_eq!(aggs[0].n, 2);
        assert!(aggs[0].status.is_ok());
        assert_eq!(aggs[1].n, 0);
        assert!(!aggs[1].status.is_ok());
    }

    proptest! {
        /// throughput * elapsed == token_count up to rounding.
        #[test]
        fn throughput_times_elapsed_is_token_count(
            ttft in 0.0f64..2.0,
            rate in 0.5f64..100.0,
            tokens in 2u64..500,
        ) {
            let r = synthetic_run("d", "m", ttft, rate, tokens);
            let recon = r.throughput_tps() * r.elapsed_s();
            prop_assert!((recon - tokens as f64).abs() < 1e-6);
            prop_assert!(r.ttft_s() <= r.elapsed_s() + 1e-12);
        }

        /// Aggregate mean equals the arithmetic mean of per-run throughputs.
        #[test]
        fn aggregate_mean_is_arithmetic_mean(
            rates in proptest::collection::vec(0.5f64..100.0, 1..10)
        ) {
            let runs: Vec<RunRecord> = rates
                .iter()
                .map(|&r| synthetic_run("d", "m", 0.05, r, 30))
                .collect();
            let agg = aggregate_pair(&runs).unwrap();
            let expected: f64 =
                runs.iter().map(|r| r.throughput_tps()).sum::<f64>() / runs.len() as f64;
            prop_assert!((agg.throughput_tps.mean - expected).abs() < 1e-9);
            if runs.len() == 1 {
                prop_assert_eq!(agg.throughput_tps.stdev, 0.0);
            }
        }
    }
}
