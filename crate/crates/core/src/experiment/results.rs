//! Result rows and their CSV files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, Instance};
use crate::error::{Error, Result};
use crate::forecast::BiasSchedule;
use crate::kpi::RunSummary;
use crate::mrp::{LotPolicy, MrpMode, PlanningParams};
use crate::system::UtilizationLevel;
use crate::{Period, Pieces};

pub const RESULT_HEADER: [&str; 21] = [
    "instance_id",
    "alpha",
    "beta",
    "bias",
    "utilization",
    "mode",
    "sst_factor",
    "plt",
    "policy",
    "policy_param",
    "comp_lot",
    "replication",
    "seed",
    "overall_cost",
    "wip_cost",
    "fgi_cost",
    "backorder_cost",
    "service_level",
    "n_final_orders",
    "leadtime_mean",
    "leadtime_sd",
];

/// One replication of one parameter set. Field order is the CSV column
/// order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: String,
    pub alpha: f64,
    pub beta: f64,
    pub bias: BiasSchedule,
    pub utilization: UtilizationLevel,
    pub mode: MrpMode,
    pub sst_factor: f64,
    pub plt: Period,
    /// `FOP` or `FOQ`.
    pub policy: String,
    pub policy_param: i64,
    pub comp_lot: Pieces,
    pub replication: u32,
    pub seed: u64,
    pub overall_cost: f64,
    pub wip_cost: f64,
    pub fgi_cost: f64,
    pub backorder_cost: f64,
    pub service_level: f64,
    pub n_final_orders: u64,
    pub leadtime_mean: f64,
    pub leadtime_sd: f64,
}

impl ResultRow {
    pub fn new(cell: &Cell, seed: u64, s: &RunSummary) -> Self {
        let i = &cell.instance;
        let p = &cell.params;
        Self {
            instance_id: i.id(),
            alpha: i.alpha,
            beta: i.beta,
            bias: i.bias,
            utilization: i.utilization,
            mode: p.mode,
            sst_factor: p.sst_factor,
            plt: p.plt,
            policy: p.lot_policy.kind().into(),
            policy_param: p.lot_policy.param(),
            comp_lot: p.component_lot,
            replication: cell.replication,
            seed,
            overall_cost: s.overall_cost,
            wip_cost: s.wip_cost,
            fgi_cost: s.fgi_cost,
            backorder_cost: s.backorder_cost,
            service_level: s.service_level,
            n_final_orders: s.n_final_orders,
            leadtime_mean: s.leadtime_mean,
            leadtime_sd: s.leadtime_sd,
        }
    }

    pub fn instance(&self) -> Instance {
        Instance {
            alpha: self.alpha,
            beta: self.beta,
            bias: self.bias,
            utilization: self.utilization,
        }
    }

    pub fn lot_policy(&self) -> Option<LotPolicy> {
        LotPolicy::from_parts(&self.policy, self.policy_param)
    }

    pub fn params(&self) -> Option<PlanningParams> {
        Some(PlanningParams::new(self.sst_factor, self.plt, self.lot_policy()?, self.comp_lot, self.mode))
    }

    pub fn key(&self) -> ResultKey {
        ResultKey {
            instance_id: self.instance_id.clone(),
            mode: self.mode,
            sst_bits: self.sst_factor.to_bits(),
            plt: self.plt,
            policy: self.policy.clone(),
            policy_param: self.policy_param,
            comp_lot: self.comp_lot,
            replication: self.replication,
        }
    }

    /// Equality that treats two NaNs as equal.
    fn same_as(&self, other: &Self) -> bool {
        record(self).ok() == record(other).ok()
    }
}

fn record(row: &ResultRow) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.serialize(row)?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Unique key of a result row.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResultKey {
    pub instance_id: String,
    pub mode: MrpMode,
    sst_bits: u64,
    pub plt: Period,
    pub policy: String,
    pub policy_param: i64,
    pub comp_lot: Pieces,
    pub replication: u32,
}

impl ResultKey {
    pub fn new(instance: &Instance, params: &PlanningParams, replication: u32) -> Self {
        Self {
            instance_id: instance.id(),
            mode: params.mode,
            sst_bits: params.sst_factor.to_bits(),
            plt: params.plt,
            policy: params.lot_policy.kind().into(),
            policy_param: params.lot_policy.param(),
            comp_lot: params.component_lot,
            replication,
        }
    }

    pub fn sst_factor(&self) -> f64 {
        f64::from_bits(self.sst_bits)
    }
}

impl fmt::Display for ResultKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/sst{}/plt{}/{}{}/comp{}/rep{}",
            self.instance_id,
            self.mode,
            self.sst_factor(),
            self.plt,
            self.policy,
            self.policy_param,
            self.comp_lot,
            self.replication
        )
    }
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(RESULT_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a results file. Rows are checked against the header and for
/// duplicate keys.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let parse_err = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    for (i, expected) in RESULT_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == *expected => {}
            Some(h) => return Err(parse_err(1, format!("column {}: expected `{expected}`, found `{h}`", i + 1))),
            None => return Err(parse_err(1, format!("missing column `{expected}`"))),
        }
    }
    if header.len() > RESULT_HEADER.len() {
        return Err(parse_err(1, format!("unexpected column `{}`", &header[RESULT_HEADER.len()])));
    }
    let mut rows = Vec::new();
    let mut seen: BTreeMap<ResultKey, u64> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: ResultRow = rec
            .deserialize(Some(&header))
            .map_err(|e| parse_err(line, e.to_string()))?;
        if row.lot_policy().is_none() {
            return Err(parse_err(line, format!("invalid lot policy {} {}", row.policy, row.policy_param)));
        }
        if let Some(first) = seen.insert(row.key(), line) {
            return Err(parse_err(line, format!("key {} already on line {first}", row.key())));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Appends rows to a results file, creating it if needed. Rows whose key
/// is already present with identical values are skipped; a key with
/// different values is an error and nothing is written. Returns the number
/// of rows appended.
pub fn append_results(path: &Path, rows: &[ResultRow]) -> Result<usize> {
    let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
    let mut known: BTreeMap<ResultKey, ResultRow> = if exists {
        read_results(path)?.into_iter().map(|r| (r.key(), r)).collect()
    } else {
        BTreeMap::new()
    };
    let mut fresh = Vec::new();
    for row in rows {
        match known.get(&row.key()) {
            Some(old) if old.same_as(row) => {}
            Some(_) => return Err(Error::DuplicateKey(row.key().to_string())),
            None => {
                known.insert(row.key(), row.clone());
                fresh.push(row);
            }
        }
    }
    let file: File = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    if !exists && fresh.is_empty() {
        w.write_record(RESULT_HEADER)?;
    }
    for row in &fresh {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(fresh.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{enumerate, GridSpec};
    use std::collections::BTreeMap;

    fn rows() -> Vec<ResultRow> {
        enumerate(&GridSpec::bias())
            .unwrap()
            .iter()
            .take(25)
            .enumerate()
            .map(|(n, c)| {
                let s = RunSummary {
                    overall_cost: 7830.0 + n as f64 / 3.0,
                    wip_cost: 0.1 + n as f64,
                    fgi_cost: 1e-17,
                    backorder_cost: 2.0 / 3.0,
                    service_level: 0.95,
                    n_final_orders: 720 + n as u64,
                    leadtime_mean: 1.8523456789,
                    leadtime_sd: if n == 3 { f64::NAN } else { 0.19 },
                    utilization: BTreeMap::new(),
                };
                ResultRow::new(c, 1000 + n as u64, &s)
            })
            .collect()
    }

    #[test]
    fn header_matches_fields() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(&rows()[0]).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULT_HEADER.join(","));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = rows();
        write_results(&rows, &path).unwrap();
        let back = read_results(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert!(a.same_as(b));
            assert_eq!(a.overall_cost.to_bits(), b.overall_cost.to_bits());
        }
        assert!(back[3].leadtime_sd.is_nan());
        assert_eq!(back[0], rows[0]);

        write_results(&[], &path).unwrap();
        assert!(read_results(&path).unwrap().is_empty());
    }

    #[test]
    fn header_mismatch_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&rows(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("service_level", "sl", 1);
        std::fs::write(&path, text).unwrap();
        let err = read_results(&path).unwrap_err().to_string();
        assert!(err.contains("service_level"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&rows()[..3], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = lines[2].replacen("extended", "sideways", 1);
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_results(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn append_dedupes_and_rejects_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = rows();
        assert_eq!(append_results(&path, &rows[..10]).unwrap(), 10);
        assert_eq!(append_results(&path, &rows[5..]).unwrap(), 15);
        assert_eq!(read_results(&path).unwrap().len(), 25);

        let mut changed = rows[7].clone();
        changed.overall_cost += 1.0;
        assert!(matches!(append_results(&path, &[changed]), Err(Error::DuplicateKey(_))));
        assert_eq!(read_results(&path).unwrap().len(), 25);
    }
}
