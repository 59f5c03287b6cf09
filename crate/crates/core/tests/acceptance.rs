//! Acceptance criteria. Every test writes one PASS/FAIL line to stdout,
//! then asserts.
//!
//! Heavy criteria hold `SERIAL` while they run so that their wall-clock
//! budgets are measured without competing for cores.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrpsim::driver::{RunConfig, Simulation};
use mrpsim::experiment::{
    best_per_instance, enumerate, run_cells, write_results, BestParams, Cell, GridSpec, Instance, ResultRow,
    RunSettings,
};
use mrpsim::forecast::{sample_update, BiasSchedule, ForecastBook, ForecastStream, ScenarioParams};
use mrpsim::mrp::{
    lot_size_fop, lot_size_foq, net_requirements_extended, net_requirements_standard, LotPolicy, MrpMode,
};
use mrpsim::shopfloor::sample_setup;
use mrpsim::stats::{ci_half_width, mean_sd};
use mrpsim::system::{build_default_system, ItemId, MachineId, UtilizationLevel};
use mrpsim::{Period, Pieces};

static SERIAL: Mutex<()> = Mutex::new(());

const BASE_SEED: u64 = 1;

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn verdict(n: u32, what: &str, ok: bool, detail: &str, elapsed: Duration, budget: Duration) {
    let in_time = elapsed < budget;
    let status = if ok && in_time { "PASS" } else { "FAIL" };
    let line = format!("{status} criterion {n}: {what} ({detail}; {:.2}s of {}s)\n", elapsed.as_secs_f64(), budget.as_secs());
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded {}s: {:.2}s", budget.as_secs(), elapsed.as_secs_f64());
}

fn run_grid(grid: &GridSpec) -> Vec<ResultRow> {
    let cells = enumerate(grid).unwrap();
    let settings = RunSettings::for_grid(BASE_SEED, grid);
    run_cells(&cells, &settings, workers())
        .unwrap()
        .into_iter()
        .collect::<mrpsim::Result<Vec<_>>>()
        .unwrap()
}

fn best(rows: &[ResultRow], mode: MrpMode, alpha: f64, bias: BiasSchedule) -> BestParams {
    best_per_instance(rows)
        .unwrap()
        .into_iter()
        .find(|b| b.mode == mode && b.instance.alpha == alpha && b.instance.bias == bias)
        .expect("instance present")
}

#[test]
fn criterion_01_forecast_replay() {
    let start = Instant::now();
    let system = build_default_system(UtilizationLevel::Low);
    let products: Vec<ItemId> = system.final_products().map(|i| i.id).collect();
    let due: Period = 40;
    let product = *products.iter().find(|&&p| system.demand.is_due(p, due)).unwrap();

    let cases: [(ScenarioParams, [Pieces; 10], [Pieces; 12]); 3] = [
        (
            ScenarioParams::unbiased(0.04),
            [24, 32, -15, -47, 123, 27, -125, 56, -58, -78],
            [800, 824, 856, 841, 794, 917, 944, 819, 875, 817, 739, 739],
        ),
        (
            ScenarioParams::new(0.04, 1.0, BiasSchedule::PermUnder),
            [56, 64, 17, -15, 155, 59, -93, 88, -26, -46],
            [480, 536, 600, 617, 602, 757, 816, 723, 811, 785, 739, 739],
        ),
        (
            ScenarioParams::new(0.04, 1.0, BiasSchedule::TempOver),
            [24, 32, 17, -15, 187, 27, -125, -8, -90, -110],
            [800, 824, 856, 873, 858, 1045, 1072, 947, 939, 849, 739, 739],
        ),
    ];

    let mut matched = 0;
    let mut mismatches = Vec::new();
    for (n, (scenario, eps, expected)) in cases.iter().enumerate() {
        let replay: BTreeMap<_, _> = eps.iter().enumerate().map(|(k, &e)| ((product, due, 10 - k as u32), e)).collect();
        let mut book = ForecastBook::new(*scenario, 7).with_replay(replay);
        let mut seen = Vec::new();
        for t in due - 11..=due {
            book.update(&system.demand, &products, t);
            seen.push(if t == due { book.firm(product, due) } else { book.forecast(product, due) });
        }

        let mut stream = ForecastStream::new(product, due, scenario);
        let mut direct = vec![stream.value()];
        for (k, &e) in eps.iter().enumerate() {
            stream.apply(10 - k as u32, e);
            direct.push(stream.value());
        }
        stream.apply(0, 0);
        direct.push(stream.value());

        for (got, want) in [(&seen, expected), (&direct, expected)] {
            matched += got.iter().zip(want.iter()).filter(|(a, b)| a == b).count();
        }
        if seen != expected || direct != expected {
            mismatches.push(format!("scenario {}: book {seen:?} stream {direct:?}", n + 1));
        }
    }
    let detail = format!("{}/36 values matched, finals 739", matched / 2);
    let detail = if mismatches.is_empty() { detail } else { mismatches.join("; ") };
    verdict(1, "published forecast streams replay bit-exactly", mismatches.is_empty(), &detail, start.elapsed(), Duration::from_secs(1));
}

#[test]
fn criterion_02_utilization_arithmetic() {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (level, target) in [(UtilizationLevel::Low, 0.90), (UtilizationLevel::Medium, 0.95), (UtilizationLevel::High, 0.98)] {
        let system = build_default_system(level);
        let rows = system.utilization_table(&[800, 1600]).unwrap();
        for m in [101, 102, 111, 112] {
            let u = rows
                .iter()
                .find(|r| r.machine == MachineId(m) && r.scenario == level.label())
                .unwrap()
                .utilization;
            ok &= (u - target).abs() <= 1e-9;
        }
        for (lot, want) in [(800, 88.6), (1600, 82.1)] {
            for m in [201, 202] {
                let u = rows
                    .iter()
                    .find(|r| r.machine == MachineId(m) && r.scenario == format!("FOQ{lot}"))
                    .unwrap()
                    .utilization;
                ok &= (u * 1000.0).round() / 10.0 == want;
            }
        }
        detail.push(format!("{} {target:.2}", level.label()));
    }

    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = mrpsim::cli::run(["mrpsim", "validate"], &mut out, &mut err);
    let text = String::from_utf8(out).unwrap();
    ok &= code == 0;
    for line in ["M101 low 0.90", "M101 medium 0.95", "M101 high 0.98", "(88.6%)", "(82.1%)"] {
        ok &= text.contains(line);
    }
    detail.push("components 88.6% and 82.1%".into());
    verdict(2, "planned utilizations", ok, &detail.join(", "), start.elapsed(), Duration::from_secs(1));
}

#[test]
fn criterion_03_grid_cardinalities() {
    let start = Instant::now();
    let grid = GridSpec::full();
    let sets = grid.parameter_sets(MrpMode::Standard).len();
    let instances = grid.instances();
    let unbiased = instances.iter().filter(|i| i.bias == BiasSchedule::Unbiased).count();
    let biased = instances.len() - unbiased;

    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = mrpsim::cli::run(["mrpsim", "grid", "--preset", "full", "--dry-run"], &mut out, &mut err);
    let text = String::from_utf8(out).unwrap();

    let ok = sets == 960 && unbiased == 21 && biased == 84 && code == 0 && text.contains("4032000 cells");
    let detail = format!("{sets} sets, {unbiased} unbiased + {biased} biased instances, dry run: {}", text.trim());
    verdict(3, "full grid cardinalities", ok, &detail, start.elapsed(), Duration::from_secs(1));
}

#[test]
fn criterion_04_null_scenario() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let grid = GridSpec::null();
    let rows = run_grid(&grid);
    let by_policy = |fop: bool| -> BestParams {
        let subset: Vec<ResultRow> = rows
            .iter()
            .filter(|r| matches!(r.lot_policy(), Some(LotPolicy::Fop(_))) == fop)
            .cloned()
            .collect();
        best(&subset, MrpMode::Standard, 0.0, BiasSchedule::Unbiased)
    };
    let fop = by_policy(true);
    let foq = by_policy(false);
    assert_eq!(fop.costs.len(), 20);
    let interval = |b: &BestParams| {
        let h = ci_half_width(&b.costs, 0.95);
        (b.mean_cost - h, b.mean_cost + h)
    };
    let (a, b) = (interval(&fop), interval(&foq));
    let overlap = a.0 <= b.1 && b.0 <= a.1;
    let anchor = 4158.0;
    let near = |c: f64| (c - anchor).abs() <= 0.25 * anchor;
    let ok = overlap && near(fop.mean_cost) && near(foq.mean_cost);
    let detail = format!(
        "FOP1 {:.1} [{:.1}, {:.1}] sst {} plt {}, FOQ800 {:.1} [{:.1}, {:.1}] sst {} plt {}, band [{:.1}, {:.1}]",
        fop.mean_cost, a.0, a.1, fop.sst_factor, fop.plt, foq.mean_cost, b.0, b.1, foq.sst_factor, foq.plt,
        0.75 * anchor, 1.25 * anchor
    );
    verdict(4, "deterministic demand anchor", ok, &detail, start.elapsed(), Duration::from_secs(120));
}

struct Dominance {
    rows: Vec<ResultRow>,
    elapsed: Duration,
}

fn dominance() -> &'static Dominance {
    static RUN: OnceLock<Dominance> = OnceLock::new();
    RUN.get_or_init(|| {
        let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
        let start = Instant::now();
        let rows = run_grid(&GridSpec::dominance());
        Dominance { rows, elapsed: start.elapsed() }
    })
}

#[test]
fn criterion_05_extended_dominates() {
    let run = dominance();
    let grid = GridSpec::dominance();
    let mut ok = true;
    let mut detail = Vec::new();
    for &alpha in &grid.alphas {
        let s = best(&run.rows, MrpMode::Standard, alpha, BiasSchedule::Unbiased).mean_cost;
        let x = best(&run.rows, MrpMode::Extended, alpha, BiasSchedule::Unbiased).mean_cost;
        let reduction = (s - x) / s;
        ok &= x < s && reduction >= 0.05;
        detail.push(format!("a={alpha}: {s:.1} -> {x:.1} ({:.1}%)", reduction * 100.0));
    }
    verdict(5, "extended netting beats standard by at least 5%", ok, &detail.join(", "), run.elapsed, Duration::from_secs(900));
}

#[test]
fn criterion_06_cost_increases_with_alpha() {
    let run = dominance();
    let grid = GridSpec::dominance();
    let mut ok = true;
    let mut detail = Vec::new();
    for mode in [MrpMode::Standard, MrpMode::Extended] {
        let costs: Vec<f64> = grid
            .alphas
            .iter()
            .map(|&a| best(&run.rows, mode, a, BiasSchedule::Unbiased).mean_cost)
            .collect();
        ok &= costs.windows(2).all(|w| w[0] < w[1]);
        let shown: Vec<String> = costs.iter().map(|c| format!("{c:.1}")).collect();
        detail.push(format!("{mode}: {}", shown.join(" < ")));
    }
    verdict(6, "best cost strictly increasing in alpha", ok, &detail.join(", "), run.elapsed, Duration::from_secs(900));
}

#[test]
fn criterion_07_underbooking_costs_more() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let rows = run_grid(&GridSpec::bias());
    let under = best(&rows, MrpMode::Extended, 0.06, BiasSchedule::PermUnder);
    let over = best(&rows, MrpMode::Extended, 0.06, BiasSchedule::PermOver);
    let ok = under.mean_cost >= over.mean_cost;
    let detail = format!(
        "underbooking {:.1} (sst {} plt {} {}), overbooking {:.1} (sst {} plt {} {})",
        under.mean_cost, under.sst_factor, under.plt, under.policy, over.mean_cost, over.sst_factor, over.plt, over.policy
    );
    verdict(7, "permanent underbooking at least as costly as overbooking", ok, &detail, start.elapsed(), Duration::from_secs(900));
}

#[test]
fn criterion_08_netting_and_lot_sizing() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = Vec::new();
    const STATES: usize = 100_000;
    for n in 0..STATES {
        let y: Pieces = rng.random_range(-2000..=3000);
        let g: Pieces = rng.random_range(0..=2000);
        let r: Pieces = if rng.random_bool(0.5) { 0 } else { rng.random_range(0..=2400) };
        let s: Pieces = if rng.random_bool(0.2) { 0 } else { rng.random_range(0..=1200) };
        let t: Period = rng.random_range(0..=30);
        let delta: Period = rng.random_range(-1..=30);
        let std = net_requirements_standard(y, g, r, s);
        let ext = net_requirements_extended(y, g, r, s, t, delta);
        if (t > delta || s == 0) && ext != std {
            violations.push(format!("state {n}: ext {ext} != std {std}"));
        }
        if ext > std {
            violations.push(format!("state {n}: ext {ext} > std {std}"));
        }

        let len = rng.random_range(1..=20);
        let net: Vec<Pieces> = (0..len).map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(0..=1600) }).collect();
        let first: Period = rng.random_range(0..=50);
        let q: Pieces = [100, 200, 400, 800, 1600][rng.random_range(0..5)];
        let foq = lot_size_foq(&net, first, q);
        if foq.iter().any(|l| l.quantity <= 0 || l.quantity % q != 0) {
            violations.push(format!("state {n}: FOQ {q} lot not a positive multiple"));
        }
        let mut cumulative_net = 0;
        let mut cumulative_lots = 0;
        for (tau, &need) in net.iter().enumerate() {
            cumulative_net += need;
            cumulative_lots += foq.iter().filter(|l| l.due == first + tau as Period).map(|l| l.quantity).sum::<Pieces>();
            if cumulative_lots < cumulative_net || cumulative_lots - cumulative_net >= q {
                violations.push(format!("state {n}: FOQ {q} coverage off at {tau}"));
                break;
            }
        }

        let p: u32 = rng.random_range(1..=5);
        let fop = lot_size_fop(&net, first, p);
        let mut covered = vec![false; net.len()];
        for l in &fop {
            let lo = (l.covered.0 - first) as usize;
            let hi = ((l.covered.1 - first) as usize).min(net.len() - 1);
            let window: Pieces = net[lo..=hi].iter().sum();
            if l.quantity != window || l.due != l.covered.0 || net[lo] == 0 {
                violations.push(format!("state {n}: FOP {p} lot {} != window {window}", l.quantity));
            }
            for c in &mut covered[lo..=hi] {
                if *c {
                    violations.push(format!("state {n}: FOP {p} windows overlap"));
                }
                *c = true;
            }
        }
        if net.iter().zip(&covered).any(|(&need, &c)| need > 0 && !c) {
            violations.push(format!("state {n}: FOP {p} leaves a requirement uncovered"));
        }
    }
    let detail = match violations.first() {
        None => format!("{STATES} random states"),
        Some(v) => format!("{} violations, first: {v}", violations.len()),
    };
    verdict(8, "netting and lot sizing properties", violations.is_empty(), &detail, start.elapsed(), Duration::from_secs(10));
}

fn random_cells(rng: &mut ChaCha8Rng, count: usize) -> Vec<Cell> {
    let grid = GridSpec::full();
    let instances = grid.instances();
    (0..count)
        .map(|_| {
            let instance: Instance = instances[rng.random_range(0..instances.len())];
            let mode = grid.modes[rng.random_range(0..grid.modes.len())];
            let sets = grid.parameter_sets(mode);
            Cell { instance, params: sets[rng.random_range(0..sets.len())], replication: rng.random_range(0..20) }
        })
        .collect()
}

#[test]
fn criterion_09_conservation_and_determinism() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cells = random_cells(&mut rng, 100);
    let settings = RunSettings::new(BASE_SEED);
    let mut problems = Vec::new();

    for cell in &cells {
        let config: RunConfig = settings.run_config(cell).unwrap();
        let items: Vec<ItemId> = config.system.items.iter().map(|i| i.id).collect();
        let length = config.run_length;
        let mut sim = Simulation::new(config).unwrap();
        while sim.period() < length {
            if let Err(e) = sim.step_period() {
                problems.push(format!("{}: {e}", cell.key()));
                break;
            }
            if let Err(e) = sim.check_piece_balance().and_then(|_| sim.ledger().check_conservation()) {
                problems.push(format!("{} period {}: {e}", cell.key(), sim.period()));
                break;
            }
            if let Some(i) = items.iter().find(|&&i| sim.ledger().on_hand(i) < 0) {
                problems.push(format!("{} period {}: negative stock of {i}", cell.key(), sim.period()));
                break;
            }
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (n, w) in [1, 1, 4].into_iter().enumerate() {
        let rows: Vec<ResultRow> = run_cells(&cells, &settings, w)
            .unwrap()
            .into_iter()
            .collect::<mrpsim::Result<_>>()
            .unwrap();
        let path = dir.path().join(format!("results_{n}.csv"));
        write_results(&rows, &path).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    if files[0] != files[1] {
        problems.push("repeated run wrote different bytes".into());
    }
    if files[0] != files[2] {
        problems.push("4 workers wrote different bytes than 1".into());
    }

    let detail = match problems.first() {
        None => format!("{} runs, {} result bytes identical across repeats and worker counts", cells.len(), files[0].len()),
        Some(p) => format!("{} problems, first: {p}", problems.len()),
    };
    verdict(9, "conservation, non-negative stock, reproducible results", problems.is_empty(), &detail, start.elapsed(), Duration::from_secs(300));
}

#[test]
fn criterion_10_sampler_moments() {
    let start = Instant::now();
    const DRAWS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    let setups: Vec<f64> = (0..DRAWS).map(|_| sample_setup(216.0, 0.2, &mut rng)).collect();
    let (m, sd) = mean_sd(&setups);
    let cv = sd / m;
    let setup_ok = (m - 216.0).abs() <= 0.01 * 216.0 && (cv - 0.2).abs() <= 0.02 * 0.2 && setups.iter().all(|&x| x > 0.0);

    let (prev, mu, sigma) = (800, 32.0, 32.0);
    let eps: Vec<f64> = (0..DRAWS).map(|_| sample_update(prev, mu, sigma, &mut rng) as f64).collect();
    let (em, esd) = mean_sd(&eps);
    let bounded = eps.iter().all(|&e| e >= -(prev as f64) && e <= prev as f64 + 2.0 * mu);
    let eps_ok = (em - mu).abs() <= 0.02 * mu && (esd - sigma).abs() <= 0.02 * sigma && bounded;

    let mut nonnegative = true;
    let mut tight_bounds = true;
    for (k, alpha) in [0.06, 0.12, 0.5, 1.0].into_iter().enumerate() {
        for bias in BiasSchedule::ALL {
            let beta = if bias == BiasSchedule::Unbiased { 0.0 } else { 4.0 };
            let scenario = ScenarioParams::new(alpha, beta, bias);
            for due in 0..200 {
                let mut stream = ForecastStream::new(ItemId(10), due + 1000 * k as Period, &scenario);
                for j in (0..=10).rev() {
                    let before = stream.value();
                    stream.advance(j, &scenario, &mut rng);
                    nonnegative &= stream.value() >= 0;
                    if j > 0 {
                        let mean = scenario.update_mean(j);
                        let e = stream.value() - before;
                        tight_bounds &= e >= -before && (mean < 0.0 || e as f64 <= before as f64 + 2.0 * mean + 0.5);
                    }
                }
            }
        }
    }

    let ok = setup_ok && eps_ok && nonnegative && tight_bounds;
    let detail = format!(
        "setup mean {m:.2} cv {cv:.4}, update mean {em:.2} sd {esd:.2}, bounds {}, forecasts non-negative {nonnegative}",
        bounded && tight_bounds
    );
    verdict(10, "sampler moments and bounds", ok, &detail, start.elapsed(), Duration::from_secs(10));
}
