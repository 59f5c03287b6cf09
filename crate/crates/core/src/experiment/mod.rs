//! Experiment grids: scenario instances × planning parameter sets ×
//! replications, run in parallel with common random numbers.

mod analysis;
mod manifest;
mod results;
mod tables;

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use analysis::{best_per_instance, compare, compare_all, BestParams, Comparison, Significance};
pub use manifest::Manifest;
pub use results::{append_results, read_results, write_results, ResultKey, ResultRow, RESULT_HEADER};
pub use tables::{render_tables, Report};

use crate::driver::{Conventions, RunConfig, Simulation};
use crate::error::{Error, Result};
use crate::forecast::{BiasSchedule, ScenarioParams};
use crate::mrp::{
    LotPolicy, MrpMode, OverdueReceipts, PlanningParams, COMPONENT_LOT_SET, FOP_SET, FOQ_SET, PLT_SET, SST_SET,
};
use crate::system::{build_default_system, ProductionSystemConfig, SystemOverrides, UtilizationLevel};
use crate::Period;

pub const ALPHA_SET: [f64; 7] = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10, 0.12];
pub const REPLICATIONS: u32 = 20;

/// One scenario of the study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub alpha: f64,
    pub beta: f64,
    pub bias: BiasSchedule,
    pub utilization: UtilizationLevel,
}

impl Instance {
    pub fn new(alpha: f64, beta: f64, bias: BiasSchedule, utilization: UtilizationLevel) -> Result<Self> {
        if (beta == 0.0) != (bias == BiasSchedule::Unbiased) {
            return Err(Error::Config(format!(
                "beta {beta} does not fit bias schedule {bias}; beta = 0 goes with unbiased only"
            )));
        }
        Ok(Self { alpha, beta, bias, utilization })
    }

    pub fn id(&self) -> String {
        format!("{}_a{}_b{}_{}", self.utilization, self.alpha, self.beta, self.bias)
    }

    pub fn scenario(&self) -> ScenarioParams {
        ScenarioParams::new(self.alpha, self.beta, self.bias)
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// A factorial experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub utilizations: Vec<UtilizationLevel>,
    /// Include the unbiased instance of every (utilization, alpha).
    pub unbiased: bool,
    /// Biased schedules, run with beta = 1.
    pub biases: Vec<BiasSchedule>,
    pub plts: Vec<Period>,
    pub ssts: Vec<f64>,
    pub fops: Vec<u32>,
    pub foqs: Vec<i64>,
    pub component_lots: Vec<i64>,
    pub modes: Vec<MrpMode>,
    pub replications: u32,
    pub run_length: Period,
    pub warmup: Period,
}

impl GridSpec {
    pub const PRESETS: [&'static str; 5] = ["full", "desk", "dominance", "bias", "null"];

    /// The complete study.
    pub fn full() -> Self {
        Self {
            alphas: ALPHA_SET.to_vec(),
            utilizations: UtilizationLevel::ALL.to_vec(),
            unbiased: true,
            biases: BiasSchedule::BIASED.to_vec(),
            plts: PLT_SET.to_vec(),
            ssts: SST_SET.to_vec(),
            fops: FOP_SET.to_vec(),
            foqs: FOQ_SET.to_vec(),
            component_lots: COMPONENT_LOT_SET.to_vec(),
            modes: MrpMode::ALL.to_vec(),
            replications: REPLICATIONS,
            run_length: crate::driver::RUN_LENGTH,
            warmup: crate::driver::WARMUP,
        }
    }

    /// Standard against extended at low utilization on a reduced grid.
    pub fn dominance() -> Self {
        Self {
            alphas: vec![0.02, 0.06, 0.10],
            utilizations: vec![UtilizationLevel::Low],
            unbiased: true,
            biases: Vec::new(),
            plts: vec![1, 3, 4],
            ssts: vec![0.2, 0.4, 0.6, 1.5],
            fops: vec![1],
            foqs: vec![200, 400],
            component_lots: vec![800],
            modes: MrpMode::ALL.to_vec(),
            replications: 10,
            run_length: crate::driver::RUN_LENGTH,
            warmup: crate::driver::WARMUP,
        }
    }

    /// [`Self::dominance`] on 200 periods.
    pub fn desk() -> Self {
        Self { run_length: 200, ..Self::dominance() }
    }

    /// Permanent over- and underbooking at alpha 0.06, extended mode.
    pub fn bias() -> Self {
        Self {
            alphas: vec![0.06],
            unbiased: false,
            biases: vec![BiasSchedule::PermOver, BiasSchedule::PermUnder],
            modes: vec![MrpMode::Extended],
            ..Self::dominance()
        }
    }

    /// Constant demand: FOP 1 against FOQ 800 over all lead times, safety
    /// stocks and component lots.
    pub fn null() -> Self {
        Self {
            alphas: vec![0.0],
            fops: vec![1],
            foqs: vec![800],
            modes: vec![MrpMode::Standard],
            replications: REPLICATIONS,
            ..Self::full()
        }
        .only_unbiased_low()
    }

    fn only_unbiased_low(mut self) -> Self {
        self.utilizations = vec![UtilizationLevel::Low];
        self.biases.clear();
        self
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            "dominance" => Ok(Self::dominance()),
            "bias" => Ok(Self::bias()),
            "null" => Ok(Self::null()),
            _ => Err(Error::NotInGrid {
                name: "preset",
                value: name.into(),
                allowed: format!("{{{}}}", Self::PRESETS.join(", ")),
            }),
        }
    }

    pub fn instances(&self) -> Vec<Instance> {
        let mut out = Vec::new();
        for &utilization in &self.utilizations {
            for &alpha in &self.alphas {
                if self.unbiased {
                    out.push(Instance { alpha, beta: 0.0, bias: BiasSchedule::Unbiased, utilization });
                }
                for &bias in &self.biases {
                    out.push(Instance { alpha, beta: 1.0, bias, utilization });
                }
            }
        }
        out
    }

    pub fn policies(&self) -> Vec<LotPolicy> {
        self.fops
            .iter()
            .map(|&p| LotPolicy::Fop(p))
            .chain(self.foqs.iter().map(|&q| LotPolicy::Foq(q)))
            .collect()
    }

    /// Parameter sets of one mode, in grid order.
    pub fn parameter_sets(&self, mode: MrpMode) -> Vec<PlanningParams> {
        let mut out = Vec::new();
        for &plt in &self.plts {
            for &sst in &self.ssts {
                for policy in self.policies() {
                    for &comp in &self.component_lots {
                        out.push(PlanningParams::new(sst, plt, policy, comp, mode));
                    }
                }
            }
        }
        out
    }

    pub fn cell_count(&self) -> u64 {
        let per_mode = (self.plts.len() * self.ssts.len() * (self.fops.len() + self.foqs.len()) * self.component_lots.len()) as u64;
        self.instances().len() as u64 * per_mode * self.modes.len() as u64 * self.replications as u64
    }

    fn check(&self) -> Result<()> {
        let sets: [(&'static str, usize); 7] = [
            ("alphas", self.alphas.len()),
            ("utilizations", self.utilizations.len()),
            ("lead times", self.plts.len()),
            ("safety stocks", self.ssts.len()),
            ("lot policies", self.fops.len() + self.foqs.len()),
            ("component lots", self.component_lots.len()),
            ("modes", self.modes.len()),
        ];
        if let Some((name, _)) = sets.iter().find(|(_, n)| *n == 0) {
            return Err(Error::EmptyGrid(name));
        }
        if !self.unbiased && self.biases.is_empty() {
            return Err(Error::EmptyGrid("bias schedules"));
        }
        if self.replications == 0 {
            return Err(Error::EmptyGrid("replications"));
        }
        Ok(())
    }
}

/// One simulation run of an experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub instance: Instance,
    pub params: PlanningParams,
    pub replication: u32,
}

impl Cell {
    pub fn key(&self) -> ResultKey {
        ResultKey::new(&self.instance, &self.params, self.replication)
    }
}

/// All cells ordered by instance, mode, parameter set and replication.
pub fn enumerate(grid: &GridSpec) -> Result<Vec<Cell>> {
    grid.check()?;
    let mut cells = Vec::with_capacity(grid.cell_count() as usize);
    for instance in grid.instances() {
        for &mode in &grid.modes {
            for params in grid.parameter_sets(mode) {
                for replication in 0..grid.replications {
                    cells.push(Cell { instance, params, replication });
                }
            }
        }
    }
    Ok(cells)
}

/// Seed of a replication. Every cell of the replication shares it, so
/// forecasts are identical across parameter sets and modes.
pub fn replication_seed(base_seed: u64, replication: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replication as u64);
    rng.next_u64()
}

/// Everything besides the cell that a run depends on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSettings {
    pub base_seed: u64,
    pub overrides: SystemOverrides,
    pub conventions: Conventions,
    pub overdue: OverdueReceipts,
    pub run_length: Option<Period>,
    pub warmup: Option<Period>,
}

impl RunSettings {
    pub fn new(base_seed: u64) -> Self {
        Self { base_seed, ..Self::default() }
    }

    pub fn for_grid(base_seed: u64, grid: &GridSpec) -> Self {
        Self {
            run_length: Some(grid.run_length),
            warmup: Some(grid.warmup),
            ..Self::new(base_seed)
        }
    }

    pub fn system(&self, level: UtilizationLevel) -> Result<ProductionSystemConfig> {
        build_default_system(level).with_overrides(&self.overrides)
    }

    pub fn run_config(&self, cell: &Cell) -> Result<RunConfig> {
        let mut params = cell.params;
        params.overdue = self.overdue;
        let mut config = RunConfig::new(
            self.system(cell.instance.utilization)?,
            cell.instance.scenario(),
            params,
            replication_seed(self.base_seed, cell.replication),
        );
        config.conventions = self.conventions;
        if let Some(n) = self.run_length {
            config.run_length = n;
        }
        if let Some(w) = self.warmup {
            config.warmup = w;
        }
        Ok(config)
    }
}

pub fn run_cell(cell: &Cell, settings: &RunSettings) -> Result<ResultRow> {
    let wrap = |e: Error| Error::Cell { cell: cell.key().to_string(), source: Box::new(e) };
    let config = settings.run_config(cell).map_err(wrap)?;
    let seed = config.seed;
    let outcome = Simulation::new(config).and_then(Simulation::run).map_err(wrap)?;
    Ok(ResultRow::new(cell, seed, &outcome.summary))
}

/// Runs `cells` on `workers` threads. Results come back in cell order
/// whatever the worker count.
pub fn run_cells(cells: &[Cell], settings: &RunSettings, workers: usize) -> Result<Vec<Result<ResultRow>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(|c| run_cell(c, settings)).collect()))
}
