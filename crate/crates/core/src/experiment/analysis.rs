//! Best parameter set per instance and mode, and standard against
//! extended comparisons.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Instance, ResultRow};
use crate::error::{Error, Result};
use crate::mrp::{LotPolicy, MrpMode};
use crate::stats::{mean_sd, significance_stars, WelchTest};
use crate::{Period, Pieces};

/// The cheapest parameter set of one instance and mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BestParams {
    pub instance: Instance,
    pub instance_id: String,
    pub mode: MrpMode,
    pub sst_factor: f64,
    pub plt: Period,
    pub policy: LotPolicy,
    pub comp_lot: Pieces,
    /// Overall cost per replication, by replication index.
    pub costs: Vec<f64>,
    pub mean_cost: f64,
    pub wip_cost: f64,
    pub fgi_cost: f64,
    pub backorder_cost: f64,
    pub service_level: f64,
    pub n_final_orders: f64,
    pub leadtime_mean: f64,
}

type ParamKey = (u64, Period, &'static str, i64, Pieces);

fn param_key(r: &ResultRow) -> Result<(ParamKey, LotPolicy)> {
    let policy = r
        .lot_policy()
        .ok_or_else(|| Error::Config(format!("invalid lot policy {} {}", r.policy, r.policy_param)))?;
    Ok(((r.sst_factor.to_bits(), r.plt, policy.kind(), policy.param(), r.comp_lot), policy))
}

fn mean_of(rows: &[&ResultRow], f: impl Fn(&ResultRow) -> f64) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| f(r)).collect();
    mean_sd(&xs).0
}

fn summarize(rows: &mut Vec<&ResultRow>, policy: LotPolicy) -> BestParams {
    rows.sort_by_key(|r| r.replication);
    let r0 = rows[0];
    let costs: Vec<f64> = rows.iter().map(|r| r.overall_cost).collect();
    BestParams {
        instance: r0.instance(),
        instance_id: r0.instance_id.clone(),
        mode: r0.mode,
        sst_factor: r0.sst_factor,
        plt: r0.plt,
        policy,
        comp_lot: r0.comp_lot,
        mean_cost: mean_sd(&costs).0,
        costs,
        wip_cost: mean_of(rows, |r| r.wip_cost),
        fgi_cost: mean_of(rows, |r| r.fgi_cost),
        backorder_cost: mean_of(rows, |r| r.backorder_cost),
        service_level: mean_of(rows, |r| r.service_level),
        n_final_orders: mean_of(rows, |r| r.n_final_orders as f64),
        leadtime_mean: mean_of(rows, |r| r.leadtime_mean),
    }
}

/// Lower mean cost, then smaller safety stock, smaller lead time, policy
/// and component lot.
fn rank(a: &BestParams, b: &BestParams) -> Ordering {
    a.mean_cost
        .total_cmp(&b.mean_cost)
        .then(a.sst_factor.total_cmp(&b.sst_factor))
        .then(a.plt.cmp(&b.plt))
        .then((a.policy.kind(), a.policy.param()).cmp(&(b.policy.kind(), b.policy.param())))
        .then(a.comp_lot.cmp(&b.comp_lot))
}

/// Parameter set with the lowest mean overall cost for every instance and
/// mode, ordered by instance id and mode. Every parameter set of an
/// instance and mode must carry the same replications.
pub fn best_per_instance(rows: &[ResultRow]) -> Result<Vec<BestParams>> {
    type Group<'a> = BTreeMap<ParamKey, (LotPolicy, Vec<&'a ResultRow>)>;
    let mut groups: BTreeMap<(String, MrpMode), Group> = BTreeMap::new();
    for r in rows {
        let (key, policy) = param_key(r)?;
        groups
            .entry((r.instance_id.clone(), r.mode))
            .or_default()
            .entry(key)
            .or_insert_with(|| (policy, Vec::new()))
            .1
            .push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((id, mode), group) in groups {
        let all: BTreeSet<u32> = group.values().flat_map(|(_, rs)| rs.iter().map(|r| r.replication)).collect();
        let mut candidates = Vec::with_capacity(group.len());
        for (_, (policy, mut rs)) in group {
            let reps: BTreeSet<u32> = rs.iter().map(|r| r.replication).collect();
            if reps != all {
                let missing: Vec<String> = all.difference(&reps).map(|r| r.to_string()).collect();
                return Err(Error::MissingReplications(format!(
                    "{id}/{mode}: sst {} plt {} {policy} comp {} lacks replications {}",
                    rs[0].sst_factor,
                    rs[0].plt,
                    rs[0].comp_lot,
                    missing.join(",")
                )));
            }
            candidates.push(summarize(&mut rs, policy));
        }
        out.push(candidates.into_iter().min_by(rank).expect("non-empty group"));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub enum Significance {
    #[default]
    None,
    /// p < 0.05
    Significant,
    /// p < 0.01
    HighlySignificant,
}

impl Significance {
    pub fn from_p(p: f64) -> Self {
        match significance_stars(p) {
            "**" => Self::HighlySignificant,
            "*" => Self::Significant,
            _ => Self::None,
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            Self::None => "",
            Self::Significant => "*",
            Self::HighlySignificant => "**",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stars())
    }
}

/// Best extended against best standard for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub instance_id: String,
    pub standard: BestParams,
    pub extended: BestParams,
    /// `(extended - standard) / standard`; negative when extended is
    /// cheaper.
    pub cost_reduction: f64,
    pub p: f64,
    pub significance: Significance,
}

/// Compares two best parameter sets with an unequal-variance t-test, or a
/// paired test on replication-wise differences.
pub fn compare(standard: &BestParams, extended: &BestParams, paired: bool) -> Comparison {
    let a = &extended.costs;
    let b = &standard.costs;
    let cost_reduction = (extended.mean_cost - standard.mean_cost) / standard.mean_cost;
    let (p, significance) = if a == b {
        (1.0, Significance::None)
    } else {
        let test = if paired { WelchTest::paired(a, b) } else { WelchTest::new(a, b) };
        match test {
            Some(t) => (t.p, Significance::from_p(t.p)),
            None => (f64::NAN, Significance::None),
        }
    };
    Comparison {
        instance_id: standard.instance_id.clone(),
        standard: standard.clone(),
        extended: extended.clone(),
        cost_reduction: if a == b { 0.0 } else { cost_reduction },
        p,
        significance,
    }
}

/// Comparisons for every instance run in both modes, by instance id.
pub fn compare_all(rows: &[ResultRow], paired: bool) -> Result<Vec<Comparison>> {
    let best = best_per_instance(rows)?;
    let mut by_instance: BTreeMap<&str, (Option<&BestParams>, Option<&BestParams>)> = BTreeMap::new();
    for b in &best {
        let e = by_instance.entry(b.instance_id.as_str()).or_default();
        match b.mode {
            MrpMode::Standard => e.0 = Some(b),
            MrpMode::Extended => e.1 = Some(b),
        }
    }
    Ok(by_instance
        .into_values()
        .filter_map(|pair| match pair {
            (Some(s), Some(e)) => Some(compare(s, e, paired)),
            _ => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{enumerate, GridSpec};
    use crate::kpi::RunSummary;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn row(mode: MrpMode, sst: f64, plt: Period, policy: LotPolicy, rep: u32, cost: f64) -> ResultRow {
        let cell = enumerate(&GridSpec::dominance()).unwrap()[0];
        let mut r = ResultRow::new(
            &cell,
            0,
            &RunSummary {
                overall_cost: cost,
                wip_cost: cost / 2.0,
                fgi_cost: cost / 2.0,
                backorder_cost: 0.0,
                service_level: 1.0,
                n_final_orders: 700,
                leadtime_mean: 2.0,
                leadtime_sd: 0.1,
                utilization: BTreeMap::new(),
            },
        );
        r.mode = mode;
        r.sst_factor = sst;
        r.plt = plt;
        r.policy = policy.kind().into();
        r.policy_param = policy.param();
        r.replication = rep;
        r
    }

    fn set(mode: MrpMode, sst: f64, plt: Period, policy: LotPolicy, costs: &[f64]) -> Vec<ResultRow> {
        costs.iter().enumerate().map(|(i, &c)| row(mode, sst, plt, policy, i as u32, c)).collect()
    }

    #[test]
    fn lowest_mean_wins() {
        let mut rows = set(MrpMode::Standard, 0.2, 3, LotPolicy::Foq(200), &[7830.0, 7830.0]);
        rows.extend(set(MrpMode::Standard, 0.4, 3, LotPolicy::Foq(200), &[9548.0, 9548.0]));
        let best = best_per_instance(&rows).unwrap();
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].mean_cost, 7830.0);
        assert_eq!(best[0].sst_factor, 0.2);

        let single = set(MrpMode::Extended, 1.5, 4, LotPolicy::Fop(1), &[1.0, 2.0]);
        let best = best_per_instance(&single).unwrap();
        assert_eq!((best[0].sst_factor, best[0].plt, best[0].mean_cost), (1.5, 4, 1.5));
    }

    #[test]
    fn ties_go_to_smaller_safety_stock() {
        let mut rows = set(MrpMode::Standard, 0.6, 1, LotPolicy::Fop(1), &[100.0, 200.0]);
        rows.extend(set(MrpMode::Standard, 0.4, 4, LotPolicy::Foq(400), &[200.0, 100.0]));
        rows.extend(set(MrpMode::Standard, 0.4, 3, LotPolicy::Foq(400), &[150.0, 150.0]));
        let best = &best_per_instance(&rows).unwrap()[0];
        assert_eq!((best.sst_factor, best.plt), (0.4, 3));
    }

    #[test]
    fn permutation_invariant() {
        let mut rows = Vec::new();
        for (k, sst) in [0.2, 0.4, 0.6].into_iter().enumerate() {
            let costs: Vec<f64> = (0..10).map(|i| 1000.0 + (i * 37 % 11) as f64 + k as f64 * 0.1).collect();
            rows.extend(set(MrpMode::Standard, sst, 3, LotPolicy::Fop(1), &costs));
            rows.extend(set(MrpMode::Extended, sst, 3, LotPolicy::Fop(1), &costs));
        }
        let expected = best_per_instance(&rows).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            rows.shuffle(&mut rng);
            assert_eq!(best_per_instance(&rows).unwrap(), expected);
        }
    }

    #[test]
    fn missing_replication_is_an_error() {
        let mut rows = set(MrpMode::Standard, 0.2, 3, LotPolicy::Foq(200), &[1.0, 2.0, 3.0]);
        rows.extend(set(MrpMode::Standard, 0.4, 3, LotPolicy::Foq(200), &[1.0, 2.0]));
        assert!(matches!(best_per_instance(&rows), Err(Error::MissingReplications(_))));
    }

    #[test]
    fn comparisons() {
        let std_costs: Vec<f64> = (0..20).map(|i| 7830.0 + (i % 5) as f64 * 10.0 - 20.0).collect();
        let ext_costs: Vec<f64> = (0..20).map(|i| 6149.0 + (i % 4) as f64 * 10.0 - 15.0).collect();
        let mut rows = set(MrpMode::Standard, 0.2, 3, LotPolicy::Foq(200), &std_costs);
        rows.extend(set(MrpMode::Extended, 0.2, 2, LotPolicy::Fop(1), &ext_costs));
        let c = &compare_all(&rows, false).unwrap()[0];
        assert_relative_eq!(c.cost_reduction, (6149.0 - 7830.0) / 7830.0, epsilon = 1e-12);
        assert_eq!(format!("{:.0}%", c.cost_reduction * 100.0), "-21%");
        assert_eq!(c.significance, Significance::HighlySignificant);
        assert_eq!(compare(&c.standard, &c.extended, true).significance, Significance::HighlySignificant);

        let same = compare(&c.standard, &c.standard, false);
        assert_eq!((same.cost_reduction, same.significance), (0.0, Significance::None));
        assert_eq!(Significance::from_p(0.03).stars(), "*");
    }
}
