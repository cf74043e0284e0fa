//! Per-point averages of a results file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_results, PilotPolicy, Scheme, RESULTS_FILE};
use crate::Result;

pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point: usize,
    pub scheme: Scheme,
    pub pilots: PilotPolicy,
    pub p_rd: f64,
    pub m: f64,
    pub antennas: usize,
    pub q: usize,
    pub tau_ul: usize,
    pub drops: usize,
    pub network_ee: f64,
    pub wsum_ee: f64,
    pub jain: f64,
    pub sum_rate: f64,
    pub total_power: f64,
    pub converged: f64,
}

/// Averages `results.csv` in `dir` over drops and writes `summary.csv`.
pub fn report(dir: &Path) -> Result<Vec<SummaryRow>> {
    let rows = read_results(&dir.join(RESULTS_FILE))?;
    let mut groups: BTreeMap<(usize, String), Vec<_>> = BTreeMap::new();
    for row in rows {
        groups.entry((row.point, row.scheme.name().to_string())).or_default().push(row);
    }
    let mut out = Vec::with_capacity(groups.len());
    for rows in groups.into_values() {
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&super::ResultRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let first = &rows[0];
        out.push(SummaryRow {
            point: first.point,
            scheme: first.scheme,
            pilots: first.pilots,
            p_rd: first.p_rd,
            m: first.m,
            antennas: first.antennas,
            q: first.q,
            tau_ul: first.tau_ul,
            drops: rows.len(),
            network_ee: mean(&|r| r.network_ee),
            wsum_ee: mean(&|r| r.wsum_ee),
            jain: mean(&|r| r.jain),
            sum_rate: mean(&|r| r.sum_rate),
            total_power: mean(&|r| r.total_power),
            converged: mean(&|r| if r.converged { 1.0 } else { 0.0 }),
        });
    }
    let mut w = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    for row in &out {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(out)
}
