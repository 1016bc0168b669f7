//! CSV, JSON summary and two-column plot data for experiment reports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bounds::sweep::{CrossingRecord, MARGIN_SLACK};
use crate::bounds::{ExperimentReport, SweepConstants, SweepRow, Theorem};
use crate::environment::Tolerances;
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 11] =
    ["t", "pair-id", "exact-tv", "exact-sep", "T1", "T3", "T4-tv", "T4-sep", "T5", "T6", "dominance-margin-min"];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.t.to_string(),
            r.pair_id.clone(),
            r.exact_tv.to_string(),
            r.exact_sep.to_string(),
            cell(r.t1),
            cell(r.t3),
            cell(r.t4_tv),
            cell(r.t4_sep),
            cell(r.t5),
            cell(r.t6),
            cell(r.margin),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(report: &ExperimentReport) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(report, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary<'a> {
    pub generator: &'a str,
    pub seed: u64,
    pub size: usize,
    pub horizon: usize,
    pub theorems: &'a [Theorem],
    pub constants: &'a SweepConstants,
    pub nash_b: Option<f64>,
    pub t5_r: &'a BTreeMap<String, usize>,
    pub crossings: &'a [CrossingRecord],
    pub min_margin: Option<f64>,
    pub margin_slack: f64,
    pub dominance_violations: usize,
    pub tolerances: Tolerances,
    pub notes: &'a [String],
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl<'a> Summary<'a> {
    pub fn new(generator: &'a str, seed: u64, report: &'a ExperimentReport) -> Self {
        Summary {
            generator,
            seed,
            size: report.size,
            horizon: report.horizon,
            theorems: &report.theorems,
            constants: &report.constants,
            nash_b: report.nash_b,
            t5_r: &report.t5_r,
            crossings: &report.crossings,
            min_margin: report.min_margin,
            margin_slack: MARGIN_SLACK,
            dominance_violations: report.violations().count(),
            tolerances: Tolerances::default(),
            notes: &report.notes,
            extra: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

const CURVES: [(&str, fn(&SweepRow) -> Option<f64>); 8] = [
    ("exact-tv", |r| Some(r.exact_tv)),
    ("exact-sep", |r| Some(r.exact_sep)),
    ("T1", |r| r.t1),
    ("T3", |r| r.t3),
    ("T4-tv", |r| r.t4_tv),
    ("T4-sep", |r| r.t4_sep),
    ("T5", |r| r.t5),
    ("T6", |r| r.t6),
];

/// Writes `dir/<pair-id>/<curve>.dat` with lines `t value` for every nonempty curve.
pub fn write_plot_files(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut by_pair: BTreeMap<&str, Vec<&SweepRow>> = BTreeMap::new();
    for r in &report.rows {
        by_pair.entry(&r.pair_id).or_default().push(r);
    }
    let mut written = Vec::new();
    for (pair, rows) in by_pair {
        let pdir = dir.join(pair);
        fs::create_dir_all(&pdir)?;
        for (name, get) in CURVES {
            let mut body = String::new();
            for r in &rows {
                if let Some(v) = get(r) {
                    body.push_str(&format!("{} {}\n", r.t, v));
                }
            }
            if body.is_empty() {
                continue;
            }
            let path = pdir.join(format!("{name}.dat"));
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{bound_vs_exact_sweep, Query};
    use crate::networks::{cycle_edges, gen_stick, ConductanceSchedule, EdgeExpr};
    use crate::spectral::poincare_gammas;

    fn report() -> ExperimentReport {
        let s = ConductanceSchedule::uniform(4, 10, &cycle_edges(4), EdgeExpr::Constant { value: 1.0 }, true).unwrap();
        let env = gen_stick(4, &s).unwrap();
        let c = SweepConstants::poincare(poincare_gammas(&env).unwrap());
        bound_vs_exact_sweep(&env, &[Query::Pair(0, 2), Query::Centered], &[Theorem::T1, Theorem::T3], &c, &[0.25]).unwrap()
    }

    #[test]
    fn csv_has_stable_columns() {
        let text = csv_string(&report()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 11);
        assert_eq!(first[0], "1");
        assert_eq!(first[1], "0-2");
        assert!(first[6].is_empty());
        assert_eq!(text.lines().count(), 1 + 20);
    }

    #[test]
    fn summary_serializes() {
        let r = report();
        let json = Summary::new("stick", 3, &r).to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["seed"], 3);
        assert_eq!(v["crossings"].as_array().unwrap().len(), 2);
        assert_eq!(v["dominance_violations"], 0);
    }

    #[test]
    fn plot_files_per_pair_and_curve() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_plot_files(&report(), dir.path()).unwrap();
        assert!(files.iter().any(|p| p.ends_with("0-2/T3.dat")));
        assert!(files.iter().any(|p| p.ends_with("centered/exact-sep.dat")));
        assert!(!files.iter().any(|p| p.ends_with("centered/T3.dat")));
        let body = fs::read_to_string(dir.path().join("0-2/T1.dat")).unwrap();
        assert_eq!(body.lines().count(), 10);
    }
}
