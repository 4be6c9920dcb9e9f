//! `edgebench`: operator entry point for the benchmarking pipeline.
//!
//! Exit codes: 0 ok, 1 validation/config error, 2 endpoint/transport
//! failure, 3 acceptance-check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgebench_core::adapters::{RuntimeKind, Timeouts};
use edgebench_core::bench::{run_suite, BenchTarget, SuiteConfig};
use edgebench_core::catalog::Catalog;
use edgebench_core::energy::{attach_energy, EnergyOptions, EnergySource, PowerTrace};
use edgebench_core::error::{Error, Result};
use edgebench_core::fixtures::{
    builtin_catalog, GoldenFixture, CONFIG_ORDER, NARRATIVE_POWER_W, TABLE3_RENDERED,
};
use edgebench_core::metrics::{
    pareto_frontier, partition_defined, ConfigKey, Direction, MetricVector, Objective,
    ObjectiveField,
};
use edgebench_core::mock::MockProfileSet;
use edgebench_core::store::{
    config_hash_hex, export_figure_data, normalize_whitespace, render_table, FigureKind,
    ResultStore, StoreMetadata, TableData,
};

#[derive(Parser)]
#[command(name = "edgebench", version, about = "Streaming LLM benchmarks for edge devices")]
struct Cli {
    /// Result store directory.
    #[arg(long, global = true, env = "EDGEBENCH_STORE", default_value = "store")]
    store: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the benchmark suite and persist runs + aggregates.
    Run(RunArgs),
    /// Attach a power trace (or constant wattage) to stored runs and
    /// recompute MJ/Mtok.
    IngestPower(IngestArgs),
    /// Compute composite metrics and the Pareto frontier from the store.
    Metrics(CatalogArg),
    /// Render the results table from stored aggregates.
    Report,
    /// Write figure-ready CSV datasets under <store>/exports/.
    Export(ExportArgs),
    /// Serve deterministic mock endpoints speaking the streaming-chat wire
    /// protocol.
    MockServe(MockServeArgs),
    /// Replay the golden-fixture checks and print one pass/fail line each.
    ValidateFixture(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Suite configuration TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override: bench a single endpoint, `KIND=URL` (kinds: ollama_native,
    /// hailo_ollama, stackflow_stub, mock).
    #[arg(long)]
    endpoint: Option<String>,
    /// Restrict to these catalog model ids (repeatable).
    #[arg(long)]
    model: Vec<String>,
    /// Timed runs per (endpoint, model) pair.
    #[arg(long)]
    runs: Option<u32>,
    /// Token generation cap per request.
    #[arg(long)]
    num_predict: Option<u32>,
}

#[derive(Args)]
struct IngestArgs {
    /// Power meter trace CSV (`timestamp_utc_ms,watts`).
    #[arg(long, conflicts_with = "constant_power_w")]
    power_trace: Option<PathBuf>,
    /// Constant mean wattage instead of a trace.
    #[arg(long)]
    constant_power_w: Option<f64>,
}

#[derive(Args)]
struct CatalogArg {
    /// Device/model catalog TOML; defaults to the bundled catalog.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    catalog: CatalogArg,
    /// Figures to export: power_vs_throughput_bubble, density_surface,
    /// energy_surface, throughput_surface. Defaults to all.
    figures: Vec<String>,
}

#[derive(Args)]
struct MockServeArgs {
    /// Mock profile TOML (`[[profile]]` tables).
    #[arg(long)]
    config: PathBuf,
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1:11434")]
    bind: String,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    catalog: CatalogArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("error[usage]: {}", e.kind());
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };

    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            if e.is_transport() {
                2
            } else {
                1
            }
        }
    };
    ExitCode::from(code)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Run(args) => cmd_run(&cli.store, args),
        Command::IngestPower(args) => cmd_ingest_power(&cli.store, args),
        Command::Metrics(args) => cmd_metrics(&cli.store, args),
        Command::Report => cmd_report(&cli.store),
        Command::Export(args) => cmd_export(&cli.store, args),
        Command::MockServe(args) => cmd_mock_serve(args),
        Command::ValidateFixture(args) => cmd_validate_fixture(args),
    }
}

fn load_catalog(path: &Option<PathBuf>) -> Result<Catalog> {
    match path {
        Some(p) => Catalog::load(p),
        None => Ok(builtin_catalog()),
    }
}

fn parse_endpoint(spec: &str) -> Result<BenchTarget> {
    let (kind_str, url) = spec.split_once('=').ok_or_else(|| {
        Error::validation("endpoint", "expected `KIND=URL`, e.g. `mock=http://127.0.0.1:11434`")
    })?;
    let kind: RuntimeKind = kind_str.parse()?;
    Ok(BenchTarget::new(kind.as_str(), kind, url))
}

fn cmd_run(store_path: &PathBuf, args: &RunArgs) -> Result<u8> {
    let mut suite = match &args.config {
        Some(p) => SuiteConfig::load(p)?,
        None => SuiteConfig::default(),
    };
    if let Some(spec) = &args.endpoint {
        suite.endpoints = vec![parse_endpoint(spec)?];
    }
    if suite.endpoints.is_empty() {
        return Err(Error::validation(
            "endpoint",
            "no endpoints: pass --endpoint KIND=URL or list [[endpoint]] in --config",
        ));
    }
    if !args.model.is_empty() {
        suite.models = args.model.clone();
    }
    if let Some(n) = args.runs {
        suite.bench.runs = n;
    }
    if let Some(n) = args.num_predict {
        suite.bench.max_new_tokens = n;
    }
    suite.bench.validate()?;

    let catalog = match &suite.catalog {
        Some(p) => Catalog::load(p)?,
        None => builtin_catalog(),
    };
    let models = if suite.models.is_empty() {
        catalog.models.clone()
    } else {
        suite
            .models
            .iter()
            .map(|id| {
                catalog
                    .model(id)
                    .cloned()
                    .ok_or_else(|| Error::validation("model", format!("unknown model id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?
    };

    let outcome = run_suite(&suite.endpoints, &models, &suite.bench, &Timeouts::default())?;

    let store = ResultStore::open(store_path)?;
    for run in &outcome.runs {
        store.append_run(run)?;
    }
    let metadata = StoreMetadata::new(config_hash_hex(&suite));
    // aggregates reflect the whole run log, not just this invocation
    let (all_runs, diagnostics) = store.load_runs()?;
    for d in &diagnostics {
        eprintln!("warning: skipped corrupt run record: {d}");
    }
    let aggregates = edgebench_core::bench::aggregate_runs(&all_runs);
    store.save_aggregates(&aggregates, &metadata)?;

    let ok = outcome.runs.iter().filter(|r| r.status.is_ok()).count();
    let failed = outcome.runs.len() - ok;
    println!(
        "recorded {ok} ok run(s), {failed} failed, {} aggregate(s) -> {}",
        aggregates.len(),
        store.root().display()
    );
    for agg in &outcome.aggregates {
        match &agg.status {
            edgebench_core::bench::RunStatus::Ok => println!(
                "  {}/{}/{}: n={} throughput {:.3}±{:.3} tok/s, ttft {:.3}±{:.3} s",
                agg.device_id,
                agg.model_id,
                agg.runtime_kind,
                agg.n,
                agg.throughput_tps.mean,
                agg.throughput_tps.stdev,
                agg.ttft_s.mean,
                agg.ttft_s.stdev
            ),
            edgebench_core::bench::RunStatus::Failed(reason) => {
                println!("  {}/{}/{}: failed: {reason}", agg.device_id, agg.model_id, agg.runtime_kind)
            }
        }
    }
    // endpoint failures surface as exit 2 even though the suite completed
    if ok == 0 && !outcome.runs.is_empty() {
        return Err(Error::Connect {
            url: suite.endpoints[0].base_url.clone(),
            message: "no successful runs".into(),
        });
    }
    if outcome.runs.is_empty() && outcome.aggregates.iter().all(|a| !a.status.is_ok()) {
        return Err(Error::Connect {
            url: suite.endpoints[0].base_url.clone(),
            message: "every endpoint failed its health check".into(),
        });
    }
    Ok(0)
}

fn cmd_ingest_power(store_path: &PathBuf, args: &IngestArgs) -> Result<u8> {
    let source = match (&args.power_trace, args.constant_power_w) {
        (Some(path), None) => EnergySource::Trace(PowerTrace::load_csv(path)?),
        (None, Some(w)) => {
            if w <= 0.0 {
                return Err(Error::validation("constant-power-w", "must be positive"));
            }
            EnergySource::ConstantPower(w)
        }
        _ => {
            return Err(Error::validation(
                "ingest-power",
                "exactly one of --power-trace or --constant-power-w is required",
            ))
        }
    };

    let store = ResultStore::open(store_path)?;
    let (runs, diagnostics) = store.load_runs()?;
    for d in &diagnostics {
        eprintln!("warning: skipped corrupt run record: {d}");
    }
    if runs.is_empty() {
        return Err(Error::validation("store", "no runs recorded yet; run the suite first"));
    }
    let (mut metadata, mut aggregates) = store.load_aggregates()?;
    let notes = attach_energy(&mut aggregates, &runs, &source, &EnergyOptions::default());
    metadata.updated_utc_ms = edgebench_core::clock::wall_utc_ms();
    store.save_aggregates(&aggregates, &metadata)?;

    let attached = aggregates.iter().filter(|a| a.energy_mj_per_mtok.is_some()).count();
    println!("energy attached to {attached}/{} aggregate(s)", aggregates.len());
    for note in notes {
        println!("  note: {note}");
    }
    Ok(0)
}

/// Default frontier objectives: throughput up, energy down.
fn default_objectives() -> Vec<Objective> {
    vec![
        (ObjectiveField::ThroughputTps, Direction::Maximize),
        (ObjectiveField::MjPerMtok, Direction::Minimize),
    ]
}

fn vectors_from_store(store: &ResultStore, catalog: &Catalog) -> Result<(Vec<MetricVector>, Vec<String>)> {
    let (_, aggregates) = store.load_aggregates()?;
    let mut vectors = Vec::new();
    let mut notes = Vec::new();
    for a in aggregates.iter().filter(|a| a.status.is_ok()) {
        let volume_m3 = match catalog.device(&a.device_id) {
            Some(d) => d.volume_m3(),
            None => {
                let note = format!("{}: device not in catalog, density omitted", a.device_id);
                if !notes.contains(&note) {
                    notes.push(note);
                }
                0.0
            }
        };
        let mj = a.energy_mj_per_mtok.map(|e| e.mean);
        vectors.push(
            MetricVector {
                config_key: ConfigKey::new(&a.device_id, &a.model_id, a.runtime_kind),
                throughput_tps: a.throughput_tps.mean,
                ttft_s: a.ttft_s.mean,
                mj_per_mtok: mj,
                tps_per_m3: None,
                power_w: mj.map(|m| m * a.throughput_tps.mean),
                volume_m3,
            }
            .with_density(),
        );
    }
    Ok((vectors, notes))
}

fn cmd_metrics(store_path: &PathBuf, args: &CatalogArg) -> Result<u8> {
    let catalog = load_catalog(&args.config)?;
    let store = ResultStore::open(store_path)?;
    let (vectors, notes) = vectors_from_store(&store, &catalog)?;
    for note in &notes {
        println!("note: {note}");
    }
    if vectors.is_empty() {
        println!("no successful aggregates in store");
        return Ok(0);
    }

    println!("config\tthroughput_tps\tttft_s\tmj_per_mtok\ttps_per_m3\tpower_w");
    for v in &vectors {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "--".into());
        println!(
            "{}\t{:.4}\t{:.4}\t{}\t{}\t{}",
            v.config_key,
            v.throughput_tps,
            v.ttft_s,
            opt(v.mj_per_mtok),
            opt(v.tps_per_m3),
            opt(v.power_w)
        );
    }

    let objectives = default_objectives();
    let (defined, excluded) = partition_defined(&vectors, &objectives);
    for note in &excluded {
        println!("note: {note}");
    }
    if defined.is_empty() {
        println!("pareto frontier: undefined (no point carries all objectives; ingest power first)");
        return Ok(0);
    }
    let frontier = pareto_frontier(&defined, &objectives)?;
    println!("pareto frontier (throughput max, energy min):");
    for v in frontier {
        println!("  {}", v.config_key);
    }
    Ok(0)
}

fn cmd_report(store_path: &PathBuf) -> Result<u8> {
    let store = ResultStore::open(store_path)?;
    let aggregates = match store.load_aggregates() {
        Ok((_, aggregates)) => aggregates,
        // empty store: header-only table, not an error
        Err(Error::Store { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    print!("{}", render_table(&TableData::from_aggregates(&aggregates)));
    Ok(0)
}

fn cmd_export(store_path: &PathBuf, args: &ExportArgs) -> Result<u8> {
    let kinds: Vec<FigureKind> = if args.figures.is_empty() {
        vec![
            FigureKind::PowerVsThroughputBubble,
            FigureKind::DensitySurface,
            FigureKind::EnergySurface,
            FigureKind::ThroughputSurface,
        ]
    } else {
        args.figures
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<_>>>()?
    };

    let catalog = load_catalog(&args.catalog.config)?;
    let store = ResultStore::open(store_path)?;
    let (vectors, notes) = vectors_from_store(&store, &catalog)?;
    for note in &notes {
        println!("note: {note}");
    }

    for kind in kinds {
        let (csv, notes) = export_figure_data(&vectors, kind);
        let path = store.write_export(kind.export_name(), &csv, &notes)?;
        println!("wrote {}", path.display());
        for note in notes {
            println!("  note: {note}");
        }
    }
    Ok(0)
}

fn cmd_mock_serve(args: &MockServeArgs) -> Result<u8> {
    let profiles = MockProfileSet::load(&args.config)?;
    if profiles.profiles.is_empty() {
        return Err(Error::validation("config", "no [[profile]] entries"));
    }
    let server = edgebench_core::mock::serve(profiles.profiles, &args.bind)?;
    println!("mock server listening on {}", server.base_url());
    loop {
        std::thread::park();
    }
}

fn cmd_validate_fixture(args: &ValidateArgs) -> Result<u8> {
    let catalog = load_catalog(&args.catalog.config)?;
    let fixture = GoldenFixture::builtin();
    let vectors = fixture.metric_vectors(&catalog)?;
    let mut failed = 0u32;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{name}: {} ({detail})", if ok { "pass" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    };

    // implied per-device power medians vs published narrative, ±25%
    for (device, narrative) in NARRATIVE_POWER_W {
        let mut powers: Vec<f64> = fixture
            .supported_cells()
            .filter(|c| {
                if device == "jetson" {
                    c.config_id.starts_with("jetson")
                } else {
                    c.config_id == device
                }
            })
            .map(|c| c.throughput_tps.unwrap() * c.mj_per_mtok.unwrap())
            .collect();
        powers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if powers.len() % 2 == 1 {
            powers[powers.len() / 2]
        } else {
            (powers[powers.len() / 2 - 1] + powers[powers.len() / 2]) / 2.0
        };
        check(
            &format!("implied power median [{device}]"),
            (median - narrative).abs() <= narrative * 0.25,
            format!("{median:.2} W vs {narrative} W"),
        );
    }

    // HAT and GPU efficiency gains
    let mj = |cfg: &str, model: &str| fixture.cell(cfg, model).unwrap().mj_per_mtok.unwrap();
    let gains = [
        ("deepseek rpi5/hat", mj("rpi5", "deepseek-r1-1.5b") / mj("rpi5-hat", "deepseek-r1-1.5b"), 9.58, 0.05),
        ("qwen-instruct rpi5/hat", mj("rpi5", "qwen2.5-instruct-1.5b") / mj("rpi5-hat", "qwen2.5-instruct-1.5b"), 40.13, 0.2),
        ("deepseek jetson cpu/gpu", mj("jetson-cpu", "deepseek-r1-1.5b") / mj("jetson-gpu", "deepseek-r1-1.5b"), 1.82, 0.01),
        ("qwen2.5-1.5b jetson cpu/gpu", mj("jetson-cpu", "qwen2.5-1.5b") / mj("jetson-gpu", "qwen2.5-1.5b"), 1.24, 0.01),
    ];
    for (name, got, want, tol) in gains {
        check(
            &format!("efficiency gain [{name}]"),
            (got - want).abs() <= tol,
            format!("{got:.3} vs {want}"),
        );
    }

    // peak throughput density
    let density = vectors
        .iter()
        .find(|v| v.config_key.device_id == "m5stack" && v.config_key.model_id == "llama3.2-1b")
        .and_then(|v| v.tps_per_m3)
        .unwrap_or(0.0);
    check(
        "throughput density [m5stack llama3.2-1b]",
        density >= 90_000.0 && (density - 90_746.0).abs() / 90_746.0 <= 0.01,
        format!("{density:.0} Tps/m3"),
    );

    // device volumes round to the published cm3 figures
    for (id, cm3) in [("m5stack-llm", 38.0), ("rpi5", 81.0), ("rpi5-hat", 95.0), ("jetson-orin-nano", 166.0)] {
        let got = catalog.device(id).map(|d| d.volume_cm3().round()).unwrap_or(0.0);
        check(
            &format!("volume [{id}]"),
            (got - cm3).abs() <= 1.0,
            format!("{got} cm3 vs {cm3}"),
        );
    }

    // DeepSeek frontier over (throughput max, energy min)
    let deepseek: Vec<MetricVector> = vectors
        .iter()
        .filter(|v| v.config_key.model_id == "deepseek-r1-1.5b")
        .cloned()
        .collect();
    let mut ids: Vec<String> = pareto_frontier(&deepseek, &default_objectives())?
        .iter()
        .map(|v| v.config_key.device_id.clone())
        .collect();
    ids.sort();
    check(
        "deepseek pareto frontier",
        ids == ["jetson-gpu", "m5stack"],
        format!("{{{}}}", ids.join(", ")),
    );

    // rerendering the fixture reproduces the checked-in table
    let rendered = render_table(&TableData::from_fixture(&fixture));
    check(
        "table rerender",
        normalize_whitespace(&rendered) == normalize_whitespace(TABLE3_RENDERED),
        format!("{} lines", rendered.lines().count()),
    );

    // fixture shape: every configuration column present
    check(
        "fixture shape",
        fixture.cells.len() == CONFIG_ORDER.len() * 7,
        format!("{} cells", fixture.cells.len()),
    );

    if failed > 0 {
        println!("{failed} check(s) failed");
        return Ok(3);
    }
    println!("all checks passed");
    Ok(0)
}
