//! Rolling-horizon MRP: netting, lot sizing, backward scheduling and BOM
//! explosion.
//!
//! The netting and lot-sizing primitives are generic over [`Quantity`];
//! [`run_mrp`] drives them on whole pieces for one planning run.
//!
//! Projected on-hand follows `y_t = y_{t-1} - g_t + r_t + planned_t` with
//! `y_{-1}` the physical stock. Net requirements are computed lot-for-lot
//! (each period is brought back to its threshold) and then grouped or
//! rounded by the lot-sizing policy.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::FORECAST_HORIZON;
use crate::scalar::Quantity;
use crate::system::{ItemId, ProductionSystemConfig};
use crate::{Minutes, Period, Pieces};

pub const PLT_SET: [Period; 6] = [1, 2, 3, 4, 6, 8];
pub const SST_SET: [f64; 8] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.5, 2.0];
pub const FOP_SET: [u32; 5] = [1, 2, 5, 6, 9];
pub const FOQ_SET: [Pieces; 5] = [200, 400, 800, 1200, 1600];
pub const COMPONENT_LOT_SET: [Pieces; 2] = [800, 1600];
pub const COMPONENT_PLT: Period = 3;
/// Planning horizon in periods.
pub const PLANNING_HORIZON: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MrpMode {
    /// Net against the safety stock everywhere.
    Standard,
    /// Net against zero for periods already covered by a released order.
    Extended,
}

impl MrpMode {
    pub const ALL: [MrpMode; 2] = [Self::Standard, Self::Extended];

    pub fn label(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Extended => "extended",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Some(Self::Standard),
            "extended" => Some(Self::Extended),
            _ => None,
        }
    }
}

impl fmt::Display for MrpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LotPolicy {
    /// Fixed order period: one lot covers `P` consecutive periods.
    Fop(u32),
    /// Fixed order quantity: lots are multiples of `Q`.
    Foq(Pieces),
}

impl LotPolicy {
    pub fn kind(self) -> &'static str {
        match self {
            Self::Fop(_) => "FOP",
            Self::Foq(_) => "FOQ",
        }
    }

    pub fn param(self) -> i64 {
        match self {
            Self::Fop(p) => p as i64,
            Self::Foq(q) => q,
        }
    }

    /// Periods a single lot may cover.
    pub fn window(self) -> Period {
        match self {
            Self::Fop(p) => p as Period,
            Self::Foq(_) => 1,
        }
    }

    /// Parses `FOP:1` / `FOQ:200` (also `FOP 1`, `fop1`).
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_uppercase();
        let (kind, rest) = s.split_at(s.len().min(3));
        let value: i64 = rest.trim_start_matches([':', ' ', '=']).parse().ok()?;
        match kind {
            "FOP" if value >= 1 => Some(Self::Fop(value as u32)),
            "FOQ" if value >= 1 => Some(Self::Foq(value)),
            _ => None,
        }
    }

    pub fn from_parts(kind: &str, param: i64) -> Option<Self> {
        Self::parse(&format!("{kind}:{param}"))
    }
}

impl fmt::Display for LotPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind(), self.param())
    }
}

/// Where an open order past its due period is expected in later runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OverdueReceipts {
    /// In the current period.
    #[default]
    CurrentPeriod,
    /// At `current + plt`, recomputed every run.
    Reproject,
}

impl OverdueReceipts {
    pub fn label(self) -> &'static str {
        match self {
            Self::CurrentPeriod => "current",
            Self::Reproject => "reproject",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "current" => Some(Self::CurrentPeriod),
            "reproject" => Some(Self::Reproject),
            _ => None,
        }
    }
}

/// One cell of the planning-parameter grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningParams {
    /// Safety stock as a multiple of the expected order amount (final
    /// products only).
    pub sst_factor: f64,
    /// Planned lead time of final products.
    pub plt: Period,
    pub lot_policy: LotPolicy,
    /// FOQ lot size of components.
    pub component_lot: Pieces,
    pub component_plt: Period,
    pub component_sst: Pieces,
    pub mode: MrpMode,
    pub overdue: OverdueReceipts,
}

impl PlanningParams {
    pub fn new(sst_factor: f64, plt: Period, lot_policy: LotPolicy, component_lot: Pieces, mode: MrpMode) -> Self {
        Self {
            sst_factor,
            plt,
            lot_policy,
            component_lot,
            component_plt: COMPONENT_PLT,
            component_sst: 0,
            mode,
            overdue: OverdueReceipts::CurrentPeriod,
        }
    }

    pub fn safety_stock(&self, expected_order_amount: Pieces) -> Pieces {
        (self.sst_factor * expected_order_amount as f64).round() as Pieces
    }

    pub fn validate(&self) -> Result<()> {
        if self.plt < 1 || self.component_plt < 1 {
            return Err(Error::Config("planned lead times must be >= 1".into()));
        }
        if !(self.sst_factor >= 0.0) || self.component_sst < 0 || self.component_lot < 1 {
            return Err(Error::Config("safety stocks must be >= 0, lot sizes >= 1".into()));
        }
        match self.lot_policy {
            LotPolicy::Fop(0) | LotPolicy::Foq(0) => {
                Err(Error::Config("lot-sizing parameter must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Checks membership in the published parameter grid.
    pub fn validate_grid(&self) -> Result<()> {
        self.validate()?;
        fn fmt_set<T: fmt::Display>(set: &[T]) -> String {
            let items: Vec<String> = set.iter().map(|v| v.to_string()).collect();
            format!("{{{}}}", items.join(", "))
        }
        if !SST_SET.contains(&self.sst_factor) {
            return Err(Error::NotInGrid {
                name: "sst",
                value: self.sst_factor.to_string(),
                allowed: fmt_set(&SST_SET),
            });
        }
        if !PLT_SET.contains(&self.plt) {
            return Err(Error::NotInGrid {
                name: "plt",
                value: self.plt.to_string(),
                allowed: fmt_set(&PLT_SET),
            });
        }
        match self.lot_policy {
            LotPolicy::Fop(p) if !FOP_SET.contains(&p) => Err(Error::NotInGrid {
                name: "FOP period",
                value: p.to_string(),
                allowed: fmt_set(&FOP_SET),
            }),
            LotPolicy::Foq(q) if !FOQ_SET.contains(&q) => Err(Error::NotInGrid {
                name: "FOQ quantity",
                value: q.to_string(),
                allowed: fmt_set(&FOQ_SET),
            }),
            _ if !COMPONENT_LOT_SET.contains(&self.component_lot) => Err(Error::NotInGrid {
                name: "component lot",
                value: self.component_lot.to_string(),
                allowed: fmt_set(&COMPONENT_LOT_SET),
            }),
            _ => Ok(()),
        }
    }

    /// Shortest horizon that still sees every requirement a lot released
    /// now can be tied to.
    pub fn required_horizon(&self) -> Period {
        self.plt + self.lot_policy.window() + self.component_plt + FORECAST_HORIZON as Period
    }
}

/// Net requirement of the standard netting rule:
/// `max(s - (y_prev - g + r), 0)`.
pub fn net_requirements_standard<Q: Quantity>(y_prev: Q, g: Q, r: Q, s: Q) -> Q {
    (s - (y_prev - g + r)).max_zero()
}

/// Net requirement with safety stock exploitation: periods up to `delta`
/// are only replenished when projected stock drops below zero.
pub fn net_requirements_extended<Q: Quantity>(
    y_prev: Q,
    g: Q,
    r: Q,
    s: Q,
    t: Period,
    delta: Period,
) -> Q {
    if t <= delta {
        (g - y_prev - r).max_zero()
    } else {
        net_requirements_standard(y_prev, g, r, s)
    }
}

/// Lot-for-lot net requirements over a horizon starting at `first_period`.
///
/// `delta` selects the netting rule: `None` is standard netting, `Some(d)`
/// nets against zero up to period `d`.
pub fn net_requirements<Q: Quantity>(
    on_hand: Q,
    gross: &[Q],
    receipts: &[Q],
    safety_stock: Q,
    first_period: Period,
    delta: Option<Period>,
) -> Vec<Q> {
    let mut y = on_hand;
    gross
        .iter()
        .enumerate()
        .map(|(tau, &g)| {
            let r = receipts.get(tau).copied().unwrap_or_else(Q::zero);
            let n = match delta {
                None => net_requirements_standard(y, g, r, safety_stock),
                Some(d) => net_requirements_extended(y, g, r, safety_stock, first_period + tau as Period, d),
            };
            y = y - g + r + n;
            n
        })
        .collect()
}

/// A sized lot before scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedLot<Q> {
    pub due: Period,
    pub quantity: Q,
    /// First and last due period whose net requirements the lot covers.
    pub covered: (Period, Period),
}

/// Fixed order period: the first period with a positive requirement
/// anchors a lot covering it and the following `periods - 1` periods.
pub fn lot_size_fop<Q: Quantity>(net: &[Q], first_period: Period, periods: u32) -> Vec<PlannedLot<Q>> {
    let p = periods.max(1) as usize;
    let mut lots = Vec::new();
    let mut tau = 0;
    while tau < net.len() {
        if net[tau] > Q::zero() {
            let end = (tau + p).min(net.len());
            let quantity = net[tau..end].iter().fold(Q::zero(), |acc, &n| acc + n);
            lots.push(PlannedLot {
                due: first_period + tau as Period,
                quantity,
                covered: (first_period + tau as Period, first_period + (tau + p - 1) as Period),
            });
            tau += p;
        } else {
            tau += 1;
        }
    }
    lots
}

/// Fixed order quantity: each residual requirement gets one lot of the
/// smallest multiple of `q` covering it; the surplus is carried into the
/// following periods before they are netted.
pub fn lot_size_foq<Q: Quantity>(net: &[Q], first_period: Period, q: Q) -> Vec<PlannedLot<Q>> {
    let mut surplus = Q::zero();
    let mut lots = Vec::new();
    for (tau, &n) in net.iter().enumerate() {
        let residual = (n - surplus).max_zero();
        surplus = (surplus - n).max_zero();
        if residual > Q::zero() {
            let quantity = residual.round_up_to_multiple(q);
            surplus = surplus + (quantity - residual);
            let period = first_period + tau as Period;
            lots.push(PlannedLot {
                due: period,
                quantity,
                covered: (period, period),
            });
        }
    }
    lots
}

pub fn lot_size(net: &[Pieces], first_period: Period, policy: LotPolicy) -> Vec<PlannedLot<Pieces>> {
    match policy {
        LotPolicy::Fop(p) => lot_size_fop(net, first_period, p),
        LotPolicy::Foq(q) => lot_size_foq(net, first_period, q),
    }
}

/// Projected on-hand after receipts and planned lots, per period.
pub fn projected_on_hand<Q: Quantity>(
    on_hand: Q,
    gross: &[Q],
    receipts: &[Q],
    lots: &[PlannedLot<Q>],
    first_period: Period,
) -> Vec<Q> {
    let mut y = on_hand;
    gross
        .iter()
        .enumerate()
        .map(|(tau, &g)| {
            let period = first_period + tau as Period;
            let r = receipts.get(tau).copied().unwrap_or_else(Q::zero);
            let planned = lots
                .iter()
                .filter(|l| l.due == period)
                .fold(Q::zero(), |acc, l| acc + l.quantity);
            y = y - g + r + planned;
            y
        })
        .collect()
}

/// A scheduled lot proposed by one MRP run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedOrder {
    pub item: ItemId,
    pub lotsize: Pieces,
    pub due_period: Period,
    pub planned_start: Period,
    /// Expected completion: the due period, or `now + plt` when the lot
    /// is already late at planning time.
    pub projected_completion: Period,
    pub covered: (Period, Period),
}

/// Offsets a lot by its planned lead time. Starts in the past are moved
/// to `current_period` and completion to `current_period + plt`.
pub fn backward_schedule(item: ItemId, lot: &PlannedLot<Pieces>, plt: Period, current_period: Period) -> PlannedOrder {
    let start = lot.due - plt;
    let (planned_start, projected_completion) = if start < current_period {
        (current_period, current_period + plt)
    } else {
        (start, lot.due)
    };
    PlannedOrder {
        item,
        lotsize: lot.quantity,
        due_period: lot.due,
        planned_start,
        projected_completion,
        covered: lot.covered,
    }
}

/// Dependent component requirements, placed in the parent's planned start
/// period (clamped into the horizon).
pub fn explode_bom(
    orders: &[PlannedOrder],
    system: &ProductionSystemConfig,
    first_period: Period,
    horizon: usize,
) -> Result<BTreeMap<ItemId, Vec<Pieces>>> {
    let mut out: BTreeMap<ItemId, Vec<Pieces>> = BTreeMap::new();
    for c in system.components() {
        out.insert(c.id, vec![0; horizon]);
    }
    for order in orders {
        let item = system.item(order.item)?;
        let tau = (order.planned_start - first_period).max(0) as usize;
        if tau >= horizon {
            continue;
        }
        for line in &item.bom {
            out.entry(line.component).or_insert_with(|| vec![0; horizon])[tau] +=
                order.lotsize * line.quantity;
        }
    }
    Ok(out)
}

/// Planning state of one item at the start of an MRP run. Vectors are
/// indexed relative to the current period.
#[derive(Clone, Debug, PartialEq)]
pub struct MrpItemState {
    pub item: ItemId,
    /// Physical stock.
    pub on_hand: Pieces,
    /// Firm requirements: forecasts and open demands for final products,
    /// withdrawals of issued but unreleased parents for components.
    pub gross_requirements: Vec<Pieces>,
    /// Open orders at their projected completion period.
    pub scheduled_receipts: Vec<Pieces>,
    pub safety_stock: Pieces,
    /// Latest due period covered by an issued order.
    pub delta: Period,
}

impl MrpItemState {
    pub fn new(item: ItemId, horizon: usize) -> Self {
        Self {
            item,
            on_hand: 0,
            gross_requirements: vec![0; horizon],
            scheduled_receipts: vec![0; horizon],
            safety_stock: 0,
            delta: 0,
        }
    }
}

/// Raises `delta` to the last period covered by `order`; never lowers it.
pub fn update_delta(delta: Period, order: &PlannedOrder) -> Period {
    delta.max(order.covered.1)
}

/// Last period whose net requirements `order` aggregates: its covered
/// window, stretched over the following periods without a planned lot of
/// the same item up to the next one (or the horizon end).
pub fn coverage_end(order: &PlannedOrder, planned: &[PlannedOrder], horizon_end: Period) -> Period {
    planned
        .iter()
        .filter(|o| o.item == order.item && o.due_period > order.covered.1)
        .map(|o| o.due_period - 1)
        .min()
        .unwrap_or(horizon_end)
        .max(order.covered.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrpTraceRow {
    pub period: Period,
    pub item: u32,
    pub g: Pieces,
    pub r: Pieces,
    pub y: Pieces,
    pub n: Pieces,
    pub lots: Pieces,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MrpResult {
    /// Every scheduled lot of this run, products first.
    pub planned: Vec<PlannedOrder>,
    /// Lots whose planned start has been reached; the rest is discarded
    /// and re-planned next period.
    pub release: Vec<PlannedOrder>,
    pub trace: Vec<MrpTraceRow>,
}

fn trace_rows(
    state: &MrpItemState,
    gross: &[Pieces],
    net: &[Pieces],
    lots: &[PlannedLot<Pieces>],
    first_period: Period,
) -> Vec<MrpTraceRow> {
    let y = projected_on_hand(state.on_hand, gross, &state.scheduled_receipts, lots, first_period);
    (0..gross.len())
        .map(|tau| {
            let period = first_period + tau as Period;
            MrpTraceRow {
                period,
                item: state.item.0,
                g: gross[tau],
                r: state.scheduled_receipts.get(tau).copied().unwrap_or(0),
                y: y[tau],
                n: net[tau],
                lots: lots.iter().filter(|l| l.due == period).map(|l| l.quantity).sum(),
            }
        })
        .collect()
}

/// One MRP run at `current_period` over `horizon` periods.
///
/// Final products are netted with the mode's rule, sized with the
/// configured policy and offset by the planned lead time. Their planned
/// starts are exploded into component requirements, which are netted
/// (standard rule), sized with the component FOQ and offset by the
/// component lead time.
pub fn run_mrp(
    products: &[MrpItemState],
    components: &[MrpItemState],
    params: &PlanningParams,
    system: &ProductionSystemConfig,
    current_period: Period,
    horizon: usize,
) -> Result<MrpResult> {
    let required = params.required_horizon();
    if (horizon as Period) < required {
        return Err(Error::HorizonTooShort {
            horizon: horizon as Period,
            required,
        });
    }
    let mut result = MrpResult::default();

    for state in products {
        let delta = match params.mode {
            MrpMode::Standard => None,
            MrpMode::Extended => Some(state.delta),
        };
        let gross = &state.gross_requirements[..horizon];
        let net = net_requirements(
            state.on_hand,
            gross,
            &state.scheduled_receipts,
            state.safety_stock,
            current_period,
            delta,
        );
        let lots = lot_size(&net, current_period, params.lot_policy);
        result.trace.extend(trace_rows(state, gross, &net, &lots, current_period));
        result.planned.extend(
            lots.iter()
                .map(|lot| backward_schedule(state.item, lot, params.plt, current_period)),
        );
    }

    let exploded = explode_bom(&result.planned, system, current_period, horizon)?;
    for state in components {
        let mut gross = state.gross_requirements[..horizon].to_vec();
        if let Some(dep) = exploded.get(&state.item) {
            for (g, d) in gross.iter_mut().zip(dep) {
                *g += d;
            }
        }
        let net = net_requirements(
            state.on_hand,
            &gross,
            &state.scheduled_receipts,
            state.safety_stock,
            current_period,
            None,
        );
        let lots = lot_size_foq(&net, current_period, params.component_lot);
        result.trace.extend(trace_rows(state, &gross, &net, &lots, current_period));
        result.planned.extend(
            lots.iter()
                .map(|lot| backward_schedule(state.item, lot, params.component_plt, current_period)),
        );
    }

    result.release = result
        .planned
        .iter()
        .filter(|o| o.planned_start <= current_period)
        .copied()
        .collect();
    Ok(result)
}

pub type OrderId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OrderStatus {
    /// Issued by MRP, waiting for release (e.g. blocked on material).
    Planned,
    Released,
    InProcess,
    Completed,
}

/// A firm production order. The lot size never changes after creation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductionOrder {
    pub id: OrderId,
    pub item: ItemId,
    pub lotsize: Pieces,
    pub due_period: Period,
    pub planned_start: Period,
    pub plt: Period,
    pub covered: (Period, Period),
    pub issued_period: Period,
    pub release_time: Option<Minutes>,
    pub start_time: Option<Minutes>,
    pub end_time: Option<Minutes>,
    pub status: OrderStatus,
}

impl ProductionOrder {
    pub fn from_planned(id: OrderId, planned: &PlannedOrder, plt: Period, issued_period: Period) -> Self {
        debug_assert!(planned.lotsize > 0);
        Self {
            id,
            item: planned.item,
            lotsize: planned.lotsize,
            due_period: planned.due_period,
            planned_start: planned.planned_start,
            plt,
            covered: planned.covered,
            issued_period,
            release_time: None,
            start_time: None,
            end_time: None,
            status: OrderStatus::Planned,
        }
    }

    /// Period in which the order is expected to arrive as seen from
    /// `current_period`: its due period until it is overdue.
    pub fn projected_receipt(&self, current_period: Period, rule: OverdueReceipts) -> Period {
        if self.due_period >= current_period {
            return self.due_period;
        }
        match rule {
            OverdueReceipts::CurrentPeriod => current_period,
            OverdueReceipts::Reproject => current_period + self.plt,
        }
    }

    pub fn is_open(&self) -> bool {
        self.status != OrderStatus::Completed
    }
}
