//! Per-period cost accrual and run summaries over the measurement window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{CostRates, MachineId};
use crate::{Cost, Minutes, Period, Pieces, MINUTES_PER_PERIOD};

/// Which stock levels a period's cost is charged on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostBasis {
    /// Levels averaged over the period.
    #[default]
    TimeWeighted,
    /// Levels at the end of the period.
    PeriodEnd,
}

impl CostBasis {
    pub fn label(self) -> &'static str {
        match self {
            Self::TimeWeighted => "time-weighted",
            Self::PeriodEnd => "period-end",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "time-weighted" => Some(Self::TimeWeighted),
            "period-end" => Some(Self::PeriodEnd),
            _ => None,
        }
    }
}

/// Stock levels averaged over a period, in pieces.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AverageLevels {
    pub wip: f64,
    pub fgi: f64,
    pub backorder: f64,
}

/// Stock positions of a period.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeriodSnapshot {
    pub period: Period,
    /// Pieces on the shop floor plus component stock.
    pub wip_pieces: Pieces,
    /// Final products in stock.
    pub fgi_pieces: Pieces,
    /// Quantity of demands due up to `period` that are still unfilled after
    /// the period's fulfillment.
    pub backorder_pieces: Pieces,
    pub average: AverageLevels,
    /// Cumulative busy minutes per machine at the end of the period.
    pub busy: BTreeMap<MachineId, Minutes>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodCost {
    pub wip: Cost,
    pub fgi: Cost,
    pub backorder: Cost,
}

impl PeriodCost {
    pub fn total(&self) -> Cost {
        self.wip + self.fgi + self.backorder
    }
}

pub fn accrue(snapshot: &PeriodSnapshot, rates: &CostRates, basis: CostBasis) -> PeriodCost {
    let (wip, fgi, backorder) = match basis {
        CostBasis::TimeWeighted => (snapshot.average.wip, snapshot.average.fgi, snapshot.average.backorder),
        CostBasis::PeriodEnd => (
            snapshot.wip_pieces as f64,
            snapshot.fgi_pieces as f64,
            snapshot.backorder_pieces as f64,
        ),
    };
    PeriodCost {
        wip: wip * rates.wip,
        fgi: fgi * rates.fgi,
        backorder: backorder * rates.backorder,
    }
}

/// A firm demand as recorded for the service level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DemandRecord {
    pub due_period: Period,
    pub fulfilled_period: Option<Period>,
}

/// A production order finished on the shop floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderRecord {
    pub is_final_product: bool,
    pub release_time: Minutes,
    pub completion_time: Option<Minutes>,
}

/// Everything a run records for its summary.
#[derive(Clone, Debug, Default)]
pub struct RunHistory {
    pub snapshots: Vec<PeriodSnapshot>,
    pub demands: Vec<DemandRecord>,
    pub orders: Vec<OrderRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Average cost per period over the measurement window.
    pub overall_cost: Cost,
    pub wip_cost: Cost,
    pub fgi_cost: Cost,
    pub backorder_cost: Cost,
    /// Share of demands due in the window that shipped in their due period.
    pub service_level: f64,
    /// Final-product orders released in the window.
    pub n_final_orders: u64,
    /// Release-to-completion time of final-product orders finishing in the
    /// window, in periods.
    pub leadtime_mean: f64,
    pub leadtime_sd: f64,
    pub utilization: BTreeMap<MachineId, f64>,
}

/// Summarizes periods `warmup + 1 ..= run_length`.
pub fn summarize(
    history: &RunHistory,
    rates: &CostRates,
    basis: CostBasis,
    warmup: Period,
    run_length: Period,
) -> Result<RunSummary> {
    if run_length <= warmup {
        return Err(Error::Config(format!(
            "run length {run_length} must exceed warm-up {warmup}"
        )));
    }
    let by_period: BTreeMap<Period, &PeriodSnapshot> = history.snapshots.iter().map(|s| (s.period, s)).collect();
    let window: Vec<&PeriodSnapshot> = ((warmup + 1)..=run_length)
        .map(|t| {
            by_period
                .get(&t)
                .copied()
                .ok_or_else(|| Error::IncompleteRun(format!("no snapshot for period {t}")))
        })
        .collect::<Result<_>>()?;
    let n = window.len() as f64;

    let mut cost = PeriodCost::default();
    for s in &window {
        let c = accrue(s, rates, basis);
        cost.wip += c.wip;
        cost.fgi += c.fgi;
        cost.backorder += c.backorder;
    }
    cost.wip /= n;
    cost.fgi /= n;
    cost.backorder /= n;

    let in_window = |p: Period| p > warmup && p <= run_length;
    let due: Vec<_> = history.demands.iter().filter(|d| in_window(d.due_period)).collect();
    let service_level = if due.is_empty() {
        1.0
    } else {
        due.iter().filter(|d| d.fulfilled_period == Some(d.due_period)).count() as f64 / due.len() as f64
    };

    let start = warmup as f64 * MINUTES_PER_PERIOD;
    let end = run_length as f64 * MINUTES_PER_PERIOD;
    let finals = history.orders.iter().filter(|o| o.is_final_product);
    let n_final_orders = finals
        .clone()
        .filter(|o| o.release_time >= start && o.release_time < end)
        .count() as u64;
    let leadtimes: Vec<f64> = finals
        .filter_map(|o| o.completion_time.map(|c| (o.release_time, c)))
        .filter(|&(_, c)| c >= start && c < end)
        .map(|(r, c)| (c - r) / MINUTES_PER_PERIOD)
        .collect();
    let (leadtime_mean, leadtime_sd) = crate::stats::mean_sd(&leadtimes);

    let first = by_period.get(&warmup).map(|s| &s.busy);
    let last = &window[window.len() - 1].busy;
    let utilization = last
        .iter()
        .map(|(&m, &b)| {
            let b0 = first.and_then(|f| f.get(&m)).copied().unwrap_or(0.0);
            (m, (b - b0) / (end - start))
        })
        .collect();

    Ok(RunSummary {
        overall_cost: cost.total(),
        wip_cost: cost.wip,
        fgi_cost: cost.fgi,
        backorder_cost: cost.backorder,
        service_level,
        n_final_orders,
        leadtime_mean,
        leadtime_sd,
        utilization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn snap(period: Period, wip: Pieces, fgi: Pieces, bo: Pieces) -> PeriodSnapshot {
        PeriodSnapshot {
            period,
            wip_pieces: wip,
            fgi_pieces: fgi,
            backorder_pieces: bo,
            average: AverageLevels { wip: wip as f64 / 2.0, fgi: fgi as f64, backorder: bo as f64 },
            busy: BTreeMap::from([(MachineId(101), period as f64 * 720.0)]),
        }
    }

    #[test]
    fn accrual_example() {
        let c = accrue(&snap(1, 200, 100, 50), &CostRates::default(), CostBasis::PeriodEnd);
        assert_relative_eq!(c.total(), 1150.0);
        assert_relative_eq!(c.backorder, 950.0);
        let c = accrue(&snap(1, 200, 100, 50), &CostRates::default(), CostBasis::TimeWeighted);
        assert_relative_eq!(c.total(), 1100.0);
    }

    #[test]
    fn service_level_and_averages() {
        let mut h = RunHistory::default();
        for t in 0..=10 {
            h.snapshots.push(snap(t, if t > 2 { 200 } else { 1000 }, 100, 50));
        }
        for i in 0..20 {
            let due = 3 + (i % 8);
            let fulfilled = if i < 18 { Some(due) } else { Some(due + 1) };
            h.demands.push(DemandRecord { due_period: due, fulfilled_period: fulfilled });
        }
        // Outside the window; ignored.
        h.demands.push(DemandRecord { due_period: 1, fulfilled_period: None });
        h.orders.push(OrderRecord { is_final_product: true, release_time: 1.0 * 1440.0, completion_time: Some(4.0 * 1440.0) });
        h.orders.push(OrderRecord { is_final_product: true, release_time: 5.0 * 1440.0, completion_time: Some(6.0 * 1440.0) });
        h.orders.push(OrderRecord { is_final_product: false, release_time: 5.0 * 1440.0, completion_time: None });
        let s = summarize(&h, &CostRates::default(), CostBasis::PeriodEnd, 2, 10).unwrap();
        assert_relative_eq!(s.service_level, 0.90);
        assert_relative_eq!(s.overall_cost, 1150.0);
        assert_eq!(s.n_final_orders, 1);
        assert_relative_eq!(s.leadtime_mean, 2.0);
        assert_relative_eq!(s.utilization[&MachineId(101)], 0.5);
    }

    #[test]
    fn incomplete_run_is_an_error() {
        let h = RunHistory { snapshots: vec![snap(1, 0, 0, 0), snap(3, 0, 0, 0)], ..Default::default() };
        assert!(matches!(summarize(&h, &CostRates::default(), CostBasis::PeriodEnd, 0, 3), Err(Error::IncompleteRun(_))));
        assert!(summarize(&h, &CostRates::default(), CostBasis::PeriodEnd, 3, 3).is_err());
    }
}
