//! Summary tables: best parameters and cost per instance.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{best_per_instance, compare, BestParams, Comparison, Instance, ResultRow};
use crate::error::Result;
use crate::forecast::BiasSchedule;
use crate::mrp::MrpMode;
use crate::system::UtilizationLevel;

const CSV_HEADER: [&str; 16] = [
    "utilization",
    "bias",
    "beta",
    "alpha",
    "std_sst",
    "std_plt",
    "std_lotsize",
    "std_cost",
    "std_service",
    "ext_sst",
    "ext_plt",
    "ext_lotsize",
    "ext_cost",
    "ext_service",
    "cost_reduction",
    "significance",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub csv: String,
    pub text: String,
}

#[derive(Default)]
struct Entry {
    instance: Option<Instance>,
    standard: Option<BestParams>,
    extended: Option<BestParams>,
    comparison: Option<Comparison>,
}

impl Entry {
    fn reduction(&self) -> String {
        self.comparison
            .as_ref()
            .map(|c| format!("{:.0}% {}", c.cost_reduction * 100.0, c.significance).trim_end().to_string())
            .unwrap_or_default()
    }
}

fn best_cells(b: Option<&BestParams>) -> Vec<String> {
    match b {
        Some(b) => vec![
            format!("{:.1}", b.sst_factor),
            b.plt.to_string(),
            b.policy.to_string(),
            format!("{:.0}", b.mean_cost),
            format!("{:.0}%", b.service_level * 100.0),
        ],
        None => vec![String::new(); 5],
    }
}

fn align(title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = format!("{title}\n");
    out += &line(header.to_vec());
    out.push('\n');
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
        out.push('\n');
    }
    out
}

/// Renders the best parameter sets of every instance: a CSV with one line
/// per instance and aligned text tables, unbiased instances with both
/// modes side by side and biased instances with over- and underbooking
/// side by side.
pub fn render_tables(rows: &[ResultRow], paired: bool) -> Result<Report> {
    let mut entries: BTreeMap<(UtilizationLevel, BiasSchedule, u64, u64), Entry> = BTreeMap::new();
    for b in best_per_instance(rows)? {
        let i = b.instance;
        let e = entries.entry((i.utilization, i.bias, i.beta.to_bits(), i.alpha.to_bits())).or_default();
        e.instance = Some(i);
        match b.mode {
            MrpMode::Standard => e.standard = Some(b),
            MrpMode::Extended => e.extended = Some(b),
        }
    }
    for e in entries.values_mut() {
        if let (Some(s), Some(x)) = (&e.standard, &e.extended) {
            e.comparison = Some(compare(s, x, paired));
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for e in entries.values() {
        let i = e.instance.expect("entry has an instance");
        let mut rec = vec![i.utilization.to_string(), i.bias.to_string(), i.beta.to_string(), i.alpha.to_string()];
        for b in [&e.standard, &e.extended] {
            match b {
                Some(b) => rec.extend([
                    b.sst_factor.to_string(),
                    b.plt.to_string(),
                    b.policy.to_string(),
                    b.mean_cost.to_string(),
                    b.service_level.to_string(),
                ]),
                None => rec.extend(vec![String::new(); 5]),
            }
        }
        match &e.comparison {
            Some(c) => rec.extend([c.cost_reduction.to_string(), c.significance.to_string()]),
            None => rec.extend([String::new(), String::new()]),
        }
        w.write_record(&rec)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8");

    let mut text = String::new();
    if entries.is_empty() {
        text += &align("No results", &["alpha", "SST", "PLT", "Lotsize", "Cost", "SL"], &[]);
    }
    for level in UtilizationLevel::ALL {
        let unbiased: Vec<Vec<String>> = entries
            .iter()
            .filter(|((u, b, _, _), _)| *u == level && *b == BiasSchedule::Unbiased)
            .map(|(_, e)| {
                let mut r = vec![e.instance.expect("instance").alpha.to_string()];
                r.extend(best_cells(e.standard.as_ref()));
                r.extend(best_cells(e.extended.as_ref()));
                r.push(e.reduction());
                r
            })
            .collect();
        if !unbiased.is_empty() {
            let header = [
                "alpha", "std SST", "PLT", "Lotsize", "Cost", "SL", "ext SST", "PLT", "Lotsize", "Cost", "SL", "Cost red.",
            ];
            let _ = writeln!(text, "{}", align(&format!("{level} utilization, unbiased"), &header, &unbiased));
        }
        for (kind, over, under) in [
            ("permanent", BiasSchedule::PermOver, BiasSchedule::PermUnder),
            ("temporary", BiasSchedule::TempOver, BiasSchedule::TempUnder),
        ] {
            let mut by_alpha: BTreeMap<(u64, u64), (Option<&Entry>, Option<&Entry>)> = BTreeMap::new();
            for ((u, b, beta, alpha), e) in &entries {
                if *u != level {
                    continue;
                }
                let slot = by_alpha.entry((*beta, *alpha)).or_default();
                if *b == over {
                    slot.0 = Some(e);
                } else if *b == under {
                    slot.1 = Some(e);
                }
            }
            let lines: Vec<Vec<String>> = by_alpha
                .iter()
                .filter(|(_, (o, u))| o.is_some() || u.is_some())
                .map(|(&(_, alpha), (o, u))| {
                    let mut r = vec![f64::from_bits(alpha).to_string()];
                    for e in [o, u] {
                        r.extend(best_cells(e.and_then(|e| e.extended.as_ref())));
                        r.push(e.map(|e| e.reduction()).unwrap_or_default());
                    }
                    r
                })
                .collect();
            if !lines.is_empty() {
                let header = [
                    "alpha", "over SST", "PLT", "Lotsize", "Cost", "SL", "Cost red.", "under SST", "PLT", "Lotsize",
                    "Cost", "SL", "Cost red.",
                ];
                let title = format!("{level} utilization, {kind} bias, extended");
                let _ = writeln!(text, "{}", align(&title, &header, &lines));
            }
        }
    }
    Ok(Report { csv, text })
}
