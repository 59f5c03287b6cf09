//! Command line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::driver::{Conventions, FulfillmentTiming, RunConfig, Simulation, TraceOptions};
use crate::error::{Error, Result};
use crate::experiment::{
    append_results, compare_all, enumerate, read_results, render_tables, run_cells, write_results, GridSpec,
    Instance, Manifest, RunSettings, ALPHA_SET,
};
use crate::forecast::{read_replay, BiasSchedule};
use crate::kpi::CostBasis;
use crate::mrp::{LotPolicy, MrpMode, OverdueReceipts, PlanningParams, COMPONENT_LOT_SET};
use crate::system::{build_default_system, SystemOverrides, UtilizationLevel};

const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Parser)]
#[command(name = "mrpsim", version, about = "Rolling-horizon MRP simulation experiments")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// TOML file with system overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log every simulated period to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print planned machine utilizations and grid sizes.
    Validate,
    /// Run one replication and print its summary.
    Simulate(SimulateArgs),
    /// Run an experiment grid and write its results.
    Grid(GridArgs),
    /// Compare the best standard and extended parameter sets.
    Analyze(AnalyzeArgs),
    /// Render summary tables.
    Tables(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct ConventionArgs {
    /// When demands ship: period-start or period-end.
    #[arg(long, default_value = "period-start")]
    fulfillment: String,
    /// Stock levels costs are charged on: time-weighted or period-end.
    #[arg(long, default_value = "time-weighted")]
    cost_basis: String,
    /// Receipt period of overdue orders: current or reproject.
    #[arg(long, default_value = "current")]
    overdue: String,
}

impl ConventionArgs {
    fn parse(&self) -> Result<(Conventions, OverdueReceipts)> {
        let fulfillment = FulfillmentTiming::parse(&self.fulfillment)
            .ok_or_else(|| not_allowed("fulfillment", &self.fulfillment, "{period-start, period-end}"))?;
        let cost_basis = CostBasis::parse(&self.cost_basis)
            .ok_or_else(|| not_allowed("cost basis", &self.cost_basis, "{time-weighted, period-end}"))?;
        let overdue = OverdueReceipts::parse(&self.overdue)
            .ok_or_else(|| not_allowed("overdue", &self.overdue, "{current, reproject}"))?;
        Ok((Conventions { fulfillment, cost_basis }, overdue))
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    alpha: f64,
    /// Bias level; defaults to 1 for biased schedules.
    #[arg(long)]
    beta: Option<f64>,
    /// unbiased, temp-over, temp-under, perm-over or perm-under.
    #[arg(long, default_value = "unbiased")]
    bias: String,
    #[arg(long, default_value = "low")]
    utilization: String,
    /// standard or extended.
    #[arg(long, default_value = "standard")]
    mode: String,
    /// Safety stock factor.
    #[arg(long)]
    sst: f64,
    /// Planned lead time of final products.
    #[arg(long)]
    plt: i64,
    /// FOP:P or FOQ:Q.
    #[arg(long)]
    policy: String,
    /// Component FOQ lot size.
    #[arg(long, default_value_t = 800)]
    comp_lot: i64,
    #[arg(long, default_value_t = crate::driver::RUN_LENGTH)]
    periods: i64,
    #[arg(long, default_value_t = crate::driver::WARMUP)]
    warmup: i64,
    /// Accept parameters outside the published grid.
    #[arg(long)]
    off_grid: bool,
    #[command(flatten)]
    conventions: ConventionArgs,
    /// Write every MRP record to this CSV.
    #[arg(long)]
    trace_mrp: Option<PathBuf>,
    /// Write shop floor events to this CSV.
    #[arg(long)]
    trace_events: Option<PathBuf>,
    /// Write every forecast update to this CSV.
    #[arg(long)]
    dump_streams: Option<PathBuf>,
    /// Replay forecast updates from a stream dump; sampled where absent.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// full, desk, dominance, bias or null.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "MRPSIM_WORKERS")]
    workers: Option<usize>,
    /// Print the number of cells and exit.
    #[arg(long)]
    dry_run: bool,
    /// Add to an existing results file instead of replacing it.
    #[arg(long)]
    append: bool,
    #[command(flatten)]
    conventions: ConventionArgs,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Directory holding results.csv.
    #[arg(long = "in")]
    input: PathBuf,
    /// Paired t-test on replication-wise differences instead of Welch.
    #[arg(long)]
    paired: bool,
}

fn not_allowed(name: &'static str, value: &str, allowed: &str) -> Error {
    Error::NotInGrid { name, value: value.into(), allowed: allowed.into() }
}

fn is_usage_error(e: &Error) -> bool {
    match e {
        Error::Config(_) | Error::NotInGrid { .. } | Error::HorizonTooShort { .. } | Error::EmptyGrid(_) | Error::Toml(_) => {
            true
        }
        Error::Cell { source, .. } => is_usage_error(source),
        _ => false,
    }
}

fn overrides(path: Option<&Path>) -> Result<SystemOverrides> {
    match path {
        Some(p) => SystemOverrides::load(p).map_err(|e| match e {
            Error::Toml(t) => Error::Config(format!("{}: {t}", p.display())),
            other => other,
        }),
        None => Ok(SystemOverrides::default()),
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 when a run or cell fails, 2 on usage errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Validate => validate(&cli, out),
        Command::Simulate(a) => simulate(&cli, a, out, err),
        Command::Grid(a) => grid(&cli, a, out, err),
        Command::Analyze(a) => analyze(a, out),
        Command::Tables(a) => tables(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if is_usage_error(&e) {
                2
            } else {
                1
            }
        }
    }
}

fn validate(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let o = overrides(cli.config.as_deref())?;
    writeln!(out, "machine scenario utilization")?;
    for level in UtilizationLevel::ALL {
        let sys = build_default_system(level).with_overrides(&o)?;
        for row in sys.utilization_table(&COMPONENT_LOT_SET)? {
            let product_row = row.machine.0 < 200;
            if !product_row && level != UtilizationLevel::Low {
                continue;
            }
            if row.scenario == "baseline" && level != UtilizationLevel::Low {
                continue;
            }
            writeln!(
                out,
                "M{} {} {:.2} ({:.1}%)",
                row.machine,
                row.scenario,
                row.utilization,
                row.utilization * 100.0
            )?;
        }
    }
    let full = GridSpec::full();
    let instances = full.instances();
    let unbiased = instances.iter().filter(|i| i.bias == BiasSchedule::Unbiased).count();
    writeln!(out, "parameter sets per instance: {}", full.parameter_sets(MrpMode::Standard).len())?;
    writeln!(out, "instances: {} unbiased + {} biased", unbiased, instances.len() - unbiased)?;
    writeln!(out, "alpha values: {:?}", ALPHA_SET)?;
    writeln!(out, "full grid: {} cells", full.cell_count())?;
    Ok(0)
}

fn simulate(cli: &Cli, a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let bias = BiasSchedule::parse(&a.bias)
        .ok_or_else(|| not_allowed("bias", &a.bias, "{unbiased, temp-over, temp-under, perm-over, perm-under}"))?;
    let level = UtilizationLevel::parse(&a.utilization)
        .ok_or_else(|| not_allowed("utilization", &a.utilization, "{low, medium, high}"))?;
    let mode = MrpMode::parse(&a.mode).ok_or_else(|| not_allowed("mode", &a.mode, "{standard, extended}"))?;
    let policy = LotPolicy::parse(&a.policy).ok_or_else(|| not_allowed("policy", &a.policy, "FOP:P or FOQ:Q"))?;
    let beta = a.beta.unwrap_or(if bias == BiasSchedule::Unbiased { 0.0 } else { 1.0 });
    let instance = Instance::new(a.alpha, beta, bias, level)?;
    let (conventions, overdue) = a.conventions.parse()?;

    let mut params = PlanningParams::new(a.sst, a.plt, policy, a.comp_lot, mode);
    params.overdue = overdue;
    if a.off_grid {
        params.validate()?;
    } else {
        params.validate_grid()?;
    }
    let system = build_default_system(level).with_overrides(&overrides(cli.config.as_deref())?)?;
    let mut config = RunConfig::new(system, instance.scenario(), params, cli.seed);
    config.run_length = a.periods;
    config.warmup = a.warmup;
    config.conventions = conventions;

    let replay = match &a.replay {
        Some(p) => Some(read_replay(BufReader::new(File::open(p)?))?),
        None => None,
    };
    let trace = TraceOptions { mrp: a.trace_mrp.is_some(), events: a.trace_events.is_some() };
    let mut sim = Simulation::with_options(config, trace, replay)?;
    while sim.period() < a.periods {
        sim.step_period()?;
        if cli.verbose {
            let s = sim.snapshots().last().expect("snapshot per period");
            writeln!(
                err,
                "period {} wip {} fgi {} backorder {} open orders {}",
                s.period,
                s.wip_pieces,
                s.fgi_pieces,
                s.backorder_pieces,
                sim.orders().iter().filter(|o| o.is_open()).count()
            )?;
        }
    }
    sim.check_piece_balance()?;
    if let Some(p) = &a.trace_mrp {
        sim.write_mrp_trace(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &a.trace_events {
        sim.write_event_trace(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &a.dump_streams {
        sim.forecasts().dump_csv(BufWriter::new(File::create(p)?))?;
    }
    let s = sim.summary()?;
    writeln!(out, "instance {instance}")?;
    writeln!(out, "params {mode} sst {} plt {} {policy} comp {}", a.sst, a.plt, a.comp_lot)?;
    writeln!(out, "seed {}", cli.seed)?;
    writeln!(out, "overall_cost {:.2}", s.overall_cost)?;
    writeln!(out, "wip_cost {:.2}", s.wip_cost)?;
    writeln!(out, "fgi_cost {:.2}", s.fgi_cost)?;
    writeln!(out, "backorder_cost {:.2}", s.backorder_cost)?;
    writeln!(out, "service_level {:.4}", s.service_level)?;
    writeln!(out, "n_final_orders {}", s.n_final_orders)?;
    writeln!(out, "leadtime_mean {:.4}", s.leadtime_mean)?;
    writeln!(out, "leadtime_sd {:.4}", s.leadtime_sd)?;
    for (m, u) in &s.utilization {
        writeln!(out, "utilization M{m} {u:.4}")?;
    }
    Ok(0)
}

fn grid(cli: &Cli, a: &GridArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let spec = GridSpec::preset(&a.preset)?;
    if a.dry_run {
        writeln!(out, "{} cells", spec.cell_count())?;
        return Ok(0);
    }
    let dir = a.out.as_ref().ok_or_else(|| Error::Config("grid needs --out DIR (or --dry-run)".into()))?;
    let (conventions, overdue) = a.conventions.parse()?;
    let mut settings = RunSettings::for_grid(cli.seed, &spec);
    settings.overrides = overrides(cli.config.as_deref())?;
    settings.conventions = conventions;
    settings.overdue = overdue;
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));

    let cells = enumerate(&spec)?;
    std::fs::create_dir_all(dir)?;
    writeln!(err, "running {} cells on {workers} workers", cells.len())?;
    let mut rows = Vec::with_capacity(cells.len());
    let mut failures = 0usize;
    for r in run_cells(&cells, &settings, workers)? {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                failures += 1;
                writeln!(err, "error: {e}")?;
            }
        }
    }
    let path = dir.join(RESULTS_FILE);
    if a.append {
        let n = append_results(&path, &rows)?;
        writeln!(out, "appended {n} rows to {}", path.display())?;
    } else {
        write_results(&rows, &path)?;
        writeln!(out, "wrote {} rows to {}", rows.len(), path.display())?;
    }
    Manifest::new(&a.preset, &spec, &settings).write(&dir.join("manifest.txt"))?;
    if failures > 0 {
        writeln!(err, "{failures} cells failed")?;
        return Ok(1);
    }
    Ok(0)
}

fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let rows = read_results(&a.input.join(RESULTS_FILE))?;
    let comparisons = compare_all(&rows, a.paired)?;
    let mut w = csv::Writer::from_path(a.input.join("comparisons.csv"))?;
    w.write_record([
        "instance_id",
        "standard_cost",
        "extended_cost",
        "cost_reduction",
        "p",
        "significance",
    ])?;
    writeln!(out, "instance  standard  extended  reduction")?;
    for c in &comparisons {
        w.write_record([
            c.instance_id.clone(),
            c.standard.mean_cost.to_string(),
            c.extended.mean_cost.to_string(),
            c.cost_reduction.to_string(),
            c.p.to_string(),
            c.significance.to_string(),
        ])?;
        writeln!(
            out,
            "{}  {:.0}  {:.0}  {:.1}% {}",
            c.instance_id,
            c.standard.mean_cost,
            c.extended.mean_cost,
            c.cost_reduction * 100.0,
            c.significance
        )?;
    }
    w.flush()?;
    Ok(0)
}

fn tables(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let rows = read_results(&a.input.join(RESULTS_FILE))?;
    let report = render_tables(&rows, a.paired)?;
    std::fs::write(a.input.join("tables.csv"), &report.csv)?;
    std::fs::write(a.input.join("tables.txt"), &report.text)?;
    write!(out, "{}", report.text)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("mrpsim").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn validate_prints_utilization() {
        let (code, out, _) = call(&["validate"]);
        assert_eq!(code, 0);
        assert!(out.contains("M101 low 0.90"), "{out}");
        assert!(out.contains("M101 high 0.98"));
        assert!(out.contains("M201 FOQ800 0.89 (88.6%)"));
        assert!(out.contains("M202 FOQ1600 0.82 (82.1%)"));
        assert!(out.contains("4032000 cells"));
    }

    #[test]
    fn dry_run_counts_cells() {
        let (code, out, _) = call(&["grid", "--preset", "full", "--dry-run"]);
        assert_eq!(code, 0);
        assert_eq!(out.trim(), "4032000 cells");
    }

    #[test]
    fn usage_errors_exit_2() {
        let (code, _, err) =
            call(&["simulate", "--alpha", "0.02", "--sst", "0.3", "--plt", "2", "--policy", "FOP:1"]);
        assert_eq!(code, 2);
        assert!(err.contains("{0, 0.2, 0.4, 0.6, 0.8, 1, 1.5, 2}"), "{err}");
        assert_eq!(call(&["simulate", "--alpha"]).0, 2);
        assert_eq!(call(&["grid", "--preset", "huge", "--dry-run"]).0, 2);
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn simulate_prints_summary() {
        let (code, out, err) = call(&[
            "simulate", "--alpha", "0.04", "--sst", "0.2", "--plt", "2", "--policy", "FOQ:200", "--periods", "60",
            "--warmup", "20", "--seed", "3", "-v",
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("overall_cost "));
        assert_eq!(err.lines().filter(|l| l.starts_with("period ")).count(), 60);
    }

    #[test]
    fn missing_results_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, _) = call(&["analyze", "--in", dir.path().to_str().unwrap()]);
        assert_eq!(code, 1);
    }
}
