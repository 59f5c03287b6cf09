//! Period loop: forecast update, firm demands, MRP run, order release,
//! shop floor, fulfillment and cost accrual.
//!
//! Period `t` covers simulation time `[(t-1)·1440, t·1440)`. Planning
//! happens at the start of the period. Demands ship at the start or at the
//! end of the period, see [`FulfillmentTiming`].

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::forecast::{ForecastBook, ReplayUpdates, ScenarioParams};
use crate::inventory::{fulfill, CustomerDemand, ReleaseOutcome, StockLedger};
use crate::kpi::{summarize, AverageLevels, CostBasis, DemandRecord, OrderRecord, PeriodSnapshot, RunHistory, RunSummary};
use crate::mrp::{
    coverage_end, run_mrp, MrpItemState, MrpTraceRow, OrderId, OrderStatus, PlanningParams, ProductionOrder,
    PLANNING_HORIZON,
};
use crate::shopfloor::ShopFloor;
use crate::system::{ItemId, ProductionSystemConfig};
use crate::{Minutes, Period, Pieces, MINUTES_PER_PERIOD};

pub const RUN_LENGTH: Period = 400;
pub const WARMUP: Period = 40;

pub fn period_start(t: Period) -> Minutes {
    (t - 1) as Minutes * MINUTES_PER_PERIOD
}

pub fn period_end(t: Period) -> Minutes {
    t as Minutes * MINUTES_PER_PERIOD
}

/// When in its due period a demand must be available.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FulfillmentTiming {
    /// Demands ship from stock at the start of a period, before the shop
    /// floor runs; a lot finishing during its due period is late.
    #[default]
    PeriodStart,
    /// Demands ship at the end of a period, after the shop floor ran.
    PeriodEnd,
}

impl FulfillmentTiming {
    pub fn label(self) -> &'static str {
        match self {
            Self::PeriodStart => "period-start",
            Self::PeriodEnd => "period-end",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "period-start" => Some(Self::PeriodStart),
            "period-end" => Some(Self::PeriodEnd),
            _ => None,
        }
    }
}

/// Timing and accounting conventions of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Conventions {
    pub fulfillment: FulfillmentTiming,
    pub cost_basis: CostBasis,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub system: ProductionSystemConfig,
    pub scenario: ScenarioParams,
    pub params: PlanningParams,
    pub seed: u64,
    pub run_length: Period,
    pub warmup: Period,
    pub horizon: usize,
    pub conventions: Conventions,
}

impl RunConfig {
    pub fn new(system: ProductionSystemConfig, scenario: ScenarioParams, params: PlanningParams, seed: u64) -> Self {
        Self {
            system,
            scenario,
            params,
            seed,
            run_length: RUN_LENGTH,
            warmup: WARMUP,
            horizon: PLANNING_HORIZON as usize,
            conventions: Conventions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.scenario.validate()?;
        self.params.validate()?;
        if self.run_length <= self.warmup || self.warmup < 0 {
            return Err(Error::Config(format!(
                "run length {} must exceed warm-up {}",
                self.run_length, self.warmup
            )));
        }
        let required = self.params.required_horizon();
        if (self.horizon as Period) < required {
            return Err(Error::HorizonTooShort {
                horizon: self.horizon as Period,
                required,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceOptions {
    pub mrp: bool,
    pub events: bool,
}

/// Full record of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub history: RunHistory,
    pub orders: Vec<ProductionOrder>,
    pub demands: Vec<CustomerDemand>,
}

pub struct Simulation {
    config: RunConfig,
    products: Vec<ItemId>,
    components: Vec<ItemId>,
    period: Period,
    forecasts: ForecastBook,
    ledger: StockLedger,
    shop: ShopFloor,
    orders: Vec<ProductionOrder>,
    demands: Vec<CustomerDemand>,
    delta: BTreeMap<ItemId, Period>,
    snapshots: Vec<PeriodSnapshot>,
    mrp_trace: Option<Vec<MrpTraceRow>>,
    clock: Minutes,
    /// Piece-minutes accumulated in the current period.
    area: AverageLevels,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        Self::with_options(config, TraceOptions::default(), None)
    }

    pub fn with_options(config: RunConfig, trace: TraceOptions, replay: Option<ReplayUpdates>) -> Result<Self> {
        config.validate()?;
        let products: Vec<ItemId> = config.system.final_products().map(|i| i.id).collect();
        let components: Vec<ItemId> = config.system.components().map(|i| i.id).collect();
        let mut forecasts = ForecastBook::new(config.scenario, config.seed);
        if let Some(r) = replay {
            forecasts = forecasts.with_replay(r);
        }
        let mut shop = ShopFloor::new(&config.system, config.seed);
        if trace.events {
            shop = shop.with_trace();
        }
        let ledger = StockLedger::new(&config.system);
        let delta = products.iter().map(|&p| (p, 0)).collect();
        let mut sim = Self {
            products,
            components,
            period: 0,
            forecasts,
            ledger,
            shop,
            orders: Vec::new(),
            demands: Vec::new(),
            delta,
            snapshots: Vec::new(),
            mrp_trace: trace.mrp.then(Vec::new),
            clock: 0.0,
            area: AverageLevels::default(),
            config,
        };
        let initial = sim.snapshot();
        sim.snapshots.push(initial);
        Ok(sim)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Last completed period (0 before the first step).
    pub fn period(&self) -> Period {
        self.period
    }

    pub fn forecasts(&self) -> &ForecastBook {
        &self.forecasts
    }

    pub fn ledger(&self) -> &StockLedger {
        &self.ledger
    }

    pub fn shop(&self) -> &ShopFloor {
        &self.shop
    }

    pub fn orders(&self) -> &[ProductionOrder] {
        &self.orders
    }

    pub fn demands(&self) -> &[CustomerDemand] {
        &self.demands
    }

    pub fn snapshots(&self) -> &[PeriodSnapshot] {
        &self.snapshots
    }

    pub fn mrp_trace(&self) -> Option<&[MrpTraceRow]> {
        self.mrp_trace.as_deref()
    }

    pub fn delta(&self, product: ItemId) -> Period {
        self.delta.get(&product).copied().unwrap_or(0)
    }

    fn item_states(&mut self, t: Period) -> Result<(Vec<MrpItemState>, Vec<MrpItemState>)> {
        let h = self.config.horizon;
        let system = &self.config.system;
        let mut receipts: BTreeMap<ItemId, Vec<Pieces>> = BTreeMap::new();
        for o in self.orders.iter().filter(|o| o.is_open()) {
            let tau = (o.projected_receipt(t, self.config.params.overdue) - t).clamp(0, h as Period - 1) as usize;
            receipts.entry(o.item).or_insert_with(|| vec![0; h])[tau] += o.lotsize;
        }

        let mut gross = self
            .forecasts
            .gross_requirements(&system.demand, &self.products, t, h);
        for g in gross.values_mut() {
            g[0] = 0;
        }
        for d in self.demands.iter().filter(|d| d.is_open() && d.due_period <= t) {
            gross.get_mut(&d.product).expect("known product")[0] += d.quantity;
        }

        let mut products = Vec::with_capacity(self.products.len());
        for &p in &self.products {
            let item = system.item(p)?;
            let mut s = MrpItemState::new(p, h);
            s.on_hand = self.ledger.on_hand(p);
            s.gross_requirements = gross.remove(&p).expect("row per product");
            if let Some(r) = receipts.remove(&p) {
                s.scheduled_receipts = r;
            }
            s.safety_stock = self.config.params.safety_stock(item.expected_order_amount);
            s.delta = self.delta(p);
            products.push(s);
        }

        let mut components = Vec::with_capacity(self.components.len());
        for &c in &self.components {
            let mut s = MrpItemState::new(c, h);
            s.on_hand = self.ledger.on_hand(c);
            if let Some(r) = receipts.remove(&c) {
                s.scheduled_receipts = r;
            }
            s.safety_stock = self.config.params.component_sst;
            components.push(s);
        }
        // Issued parents that still wait for material.
        for id in self.ledger.blocked() {
            let o = &self.orders[id];
            for line in &system.item(o.item)?.bom {
                if let Some(s) = components.iter_mut().find(|s| s.item == line.component) {
                    s.gross_requirements[0] += o.lotsize * line.quantity;
                }
            }
        }
        Ok((products, components))
    }

    fn release(&mut self, id: OrderId) -> Result<()> {
        let now = self.shop.now();
        let order = &mut self.orders[id];
        order.status = OrderStatus::Released;
        order.release_time = Some(now);
        self.shop.dispatch(order, &self.config.system)
    }

    /// Piece levels now, with `extra` pieces still counted as in process.
    /// During period `t` a demand is late from the moment it can no longer
    /// ship on time.
    fn levels(&self, t: Period, extra: Pieces) -> (Pieces, Pieces, Pieces) {
        let in_process: Pieces = self.shop.pieces_in_process().values().sum();
        let comp_stock: Pieces = self.components.iter().map(|&c| self.ledger.on_hand(c)).sum();
        let fgi: Pieces = self.products.iter().map(|&p| self.ledger.on_hand(p)).sum();
        let last_late = match self.config.conventions.fulfillment {
            FulfillmentTiming::PeriodStart => t,
            FulfillmentTiming::PeriodEnd => t - 1,
        };
        let backorder = self
            .demands
            .iter()
            .filter(|d| d.is_open() && d.due_period <= last_late)
            .map(|d| d.quantity)
            .sum();
        (in_process + comp_stock + extra, fgi, backorder)
    }

    fn accumulate(&mut self, t: Period, now: Minutes, extra: Pieces) {
        let dt = now - self.clock;
        if dt > 0.0 {
            let (w, f, b) = self.levels(t, extra);
            self.area.wip += w as f64 * dt;
            self.area.fgi += f as f64 * dt;
            self.area.backorder += b as f64 * dt;
        }
        self.clock = self.clock.max(now);
    }

    /// Simulates the next period.
    pub fn step_period(&mut self) -> Result<()> {
        let t = self.period + 1;
        let system = &self.config.system;
        self.clock = period_start(t);
        self.area = AverageLevels::default();

        self.forecasts.update(&system.demand, &self.products, t);
        for &p in &self.products {
            if system.demand.is_due(p, t) {
                let q = self.forecasts.firm(p, t);
                self.demands.push(CustomerDemand::new(p, t, q));
            }
        }
        if self.config.conventions.fulfillment == FulfillmentTiming::PeriodStart {
            fulfill(&mut self.demands, &mut self.ledger, t);
        }

        let (products, components) = self.item_states(t)?;
        let plan = run_mrp(
            &products,
            &components,
            &self.config.params,
            &self.config.system,
            t,
            self.config.horizon,
        )?;
        if let Some(trace) = self.mrp_trace.as_mut() {
            trace.extend(plan.trace);
        }

        // Components first so that their release order is independent of
        // material availability.
        let mut issued: Vec<OrderId> = Vec::new();
        for planned in plan.release.iter() {
            let item = self.config.system.item(planned.item)?;
            let plt = if item.is_final_product() {
                self.config.params.plt
            } else {
                self.config.params.component_plt
            };
            let id = self.orders.len();
            self.orders.push(ProductionOrder::from_planned(id, planned, plt, t));
            if item.is_final_product() {
                let d = self.delta.entry(planned.item).or_insert(0);
                let end = coverage_end(planned, &plan.planned, t + self.config.horizon as Period - 1);
                *d = (*d).max(end);
            }
            issued.push(id);
        }
        issued.sort_by_key(|&id| self.config.system.item(self.orders[id].item).map(|i| i.is_final_product()).unwrap_or(true));
        for id in issued {
            match self.ledger.try_release(&self.orders[id], &self.config.system)? {
                ReleaseOutcome::Released => self.release(id)?,
                ReleaseOutcome::Blocked => {}
            }
        }

        let end = period_end(t);
        while let Some(done) = self.shop.run_until(end) {
            self.accumulate(t, done.time, done.lotsize);
            let order = &mut self.orders[done.order];
            order.status = OrderStatus::Completed;
            order.end_time = Some(done.time);
            self.ledger.receive(done.item, done.lotsize);
            if !self.config.system.item(done.item)?.is_final_product() {
                for id in self.ledger.retry_blocked(&self.orders, &self.config.system)? {
                    self.release(id)?;
                }
            }
        }

        self.accumulate(t, end, 0);
        if self.config.conventions.fulfillment == FulfillmentTiming::PeriodEnd {
            fulfill(&mut self.demands, &mut self.ledger, t);
        }
        self.ledger.check_conservation()?;
        self.period = t;
        let snap = self.snapshot();
        self.snapshots.push(snap);
        Ok(())
    }

    fn snapshot(&self) -> PeriodSnapshot {
        let system = &self.config.system;
        // At the end of the period every open demand due by now is late.
        let (wip, fgi, _) = self.levels(self.period, 0);
        let backorder = self
            .demands
            .iter()
            .filter(|d| d.is_open() && d.due_period <= self.period)
            .map(|d| d.quantity)
            .sum();
        let now = self.shop.now();
        PeriodSnapshot {
            period: self.period,
            wip_pieces: wip,
            fgi_pieces: fgi,
            backorder_pieces: backorder,
            average: AverageLevels {
                wip: self.area.wip / MINUTES_PER_PERIOD,
                fgi: self.area.fgi / MINUTES_PER_PERIOD,
                backorder: self.area.backorder / MINUTES_PER_PERIOD,
            },
            busy: system
                .machines
                .iter()
                .filter_map(|m| self.shop.machine(m.id).map(|s| (m.id, s.busy_minutes(now))))
                .collect(),
        }
    }

    /// Piece balance over the whole run: every piece produced is in stock,
    /// consumed by a released parent or shipped.
    pub fn check_piece_balance(&self) -> Result<()> {
        let system = &self.config.system;
        for &c in &self.components {
            let produced: Pieces = self
                .orders
                .iter()
                .filter(|o| o.item == c && o.status == OrderStatus::Completed)
                .map(|o| o.lotsize)
                .sum();
            let mut consumed = 0;
            for o in self.orders.iter().filter(|o| o.release_time.is_some()) {
                for line in system.item(o.item)?.bom.iter().filter(|l| l.component == c) {
                    consumed += o.lotsize * line.quantity;
                }
            }
            if produced - consumed != self.ledger.on_hand(c) {
                return Err(Error::Conservation(format!(
                    "component {c}: produced {produced}, consumed {consumed}, on hand {}",
                    self.ledger.on_hand(c)
                )));
            }
        }
        for &p in &self.products {
            let produced: Pieces = self
                .orders
                .iter()
                .filter(|o| o.item == p && o.status == OrderStatus::Completed)
                .map(|o| o.lotsize)
                .sum();
            let shipped: Pieces = self
                .demands
                .iter()
                .filter(|d| d.product == p && !d.is_open())
                .map(|d| d.quantity)
                .sum();
            if produced - shipped != self.ledger.on_hand(p) {
                return Err(Error::Conservation(format!(
                    "product {p}: produced {produced}, shipped {shipped}, on hand {}",
                    self.ledger.on_hand(p)
                )));
            }
        }
        Ok(())
    }

    pub fn history(&self) -> RunHistory {
        let system = &self.config.system;
        RunHistory {
            snapshots: self.snapshots.clone(),
            demands: self
                .demands
                .iter()
                .map(|d| DemandRecord {
                    due_period: d.due_period,
                    fulfilled_period: d.fulfilled_period,
                })
                .collect(),
            orders: self
                .orders
                .iter()
                .filter_map(|o| {
                    o.release_time.map(|r| OrderRecord {
                        is_final_product: system.item(o.item).map(|i| i.is_final_product()).unwrap_or(false),
                        release_time: r,
                        completion_time: o.end_time,
                    })
                })
                .collect(),
        }
    }

    pub fn summary(&self) -> Result<RunSummary> {
        summarize(
            &self.history(),
            &self.config.system.costs,
            self.config.conventions.cost_basis,
            self.config.warmup,
            self.config.run_length,
        )
    }

    /// Runs the remaining periods and summarizes the measurement window.
    pub fn run(mut self) -> Result<RunOutcome> {
        while self.period < self.config.run_length {
            self.step_period()?;
        }
        self.check_piece_balance()?;
        let summary = self.summary()?;
        Ok(RunOutcome {
            summary,
            history: self.history(),
            orders: self.orders,
            demands: self.demands,
        })
    }

    pub fn write_mrp_trace<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.mrp_trace.iter().flatten() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_event_trace<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "event", "order", "machine"])?;
        for row in self.shop.trace().into_iter().flatten() {
            w.write_record([
                format!("{:.3}", row.time),
                row.event.clone(),
                row.order.map(|o| o.to_string()).unwrap_or_default(),
                row.machine.map(|m| format!("M{m}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs one configuration to completion.
pub fn simulate(config: RunConfig) -> Result<RunSummary> {
    Ok(Simulation::new(config)?.run()?.summary)
}
