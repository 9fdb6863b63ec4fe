//! Run reports: one flat record per (layer, architecture), serialized as a
//! JSON document or CSV with a fixed column order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sparse_accel_core::sim::{Arch, CycleReport};

use crate::atomic::write_atomic;
use crate::error::CliError;

pub const REPORT_VERSION: u32 = 1;

/// CSV header, in column order.
pub const COLUMNS: [&str; 10] = [
    "layer",
    "arch",
    "cycles",
    "macs_performed",
    "macs_skipped",
    "broadcasts",
    "footprint_bits",
    "utilization",
    "speedup",
    "verdict",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub layer: String,
    pub arch: String,
    pub cycles: u64,
    pub macs_performed: u64,
    pub macs_skipped: u64,
    pub broadcasts: u64,
    pub footprint_bits: u64,
    pub utilization: f64,
    /// Baseline cycles over these cycles; null when this run took no cycles.
    pub speedup: Option<f64>,
    pub verdict: Verdict,
}

impl ReportRow {
    pub fn new(layer: &str, report: &CycleReport, baseline_cycles: u64, verdict: Verdict) -> Self {
        ReportRow {
            layer: layer.to_owned(),
            arch: report.arch.name().to_owned(),
            cycles: report.cycles,
            macs_performed: report.macs_performed,
            macs_skipped: report.macs_skipped,
            broadcasts: report.broadcasts,
            footprint_bits: report.footprint_bits,
            utilization: report.utilization(),
            speedup: (report.cycles != 0).then(|| baseline_cycles as f64 / report.cycles as f64),
            verdict,
        }
    }

    fn record(&self) -> [String; 10] {
        [
            self.layer.clone(),
            self.arch.clone(),
            self.cycles.to_string(),
            self.macs_performed.to_string(),
            self.macs_skipped.to_string(),
            self.broadcasts.to_string(),
            self.footprint_bits.to_string(),
            self.utilization.to_string(),
            self.speedup.map(|s| s.to_string()).unwrap_or_default(),
            self.verdict.as_str().to_owned(),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self, CliError> {
        let bad = |what: &str| CliError::Input(format!("bad CSV {what} field in row {:?}", r));
        let int = |k: usize| r.get(k).and_then(|s| s.parse::<u64>().ok()).ok_or_else(|| bad(COLUMNS[k]));
        let speedup = match r.get(8) {
            Some("") => None,
            Some(s) => Some(s.parse().map_err(|_| bad("speedup"))?),
            None => return Err(bad("speedup")),
        };
        let verdict = match r.get(9) {
            Some("PASS") => Verdict::Pass,
            Some("FAIL") => Verdict::Fail,
            _ => return Err(bad("verdict")),
        };
        Ok(ReportRow {
            layer: r.get(0).ok_or_else(|| bad("layer"))?.to_owned(),
            arch: r.get(1).ok_or_else(|| bad("arch"))?.to_owned(),
            cycles: int(2)?,
            macs_performed: int(3)?,
            macs_skipped: int(4)?,
            broadcasts: int(5)?,
            footprint_bits: int(6)?,
            utilization: r.get(7).and_then(|s| s.parse().ok()).ok_or_else(|| bad("utilization"))?,
            speedup,
            verdict,
        })
    }
}

/// Settings a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub tiles: usize,
    pub filters_per_tile: usize,
    pub lanes: usize,
    pub sync: String,
    pub empty_brick: String,
    pub product_scope: String,
    pub act_crit: String,
    pub weight_crit: String,
    pub format: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub version: u32,
    pub settings: Option<RunSettings>,
    pub rows: Vec<ReportRow>,
}

impl RunReport {
    pub fn new(settings: Option<RunSettings>, rows: Vec<ReportRow>) -> Self {
        RunReport {
            version: REPORT_VERSION,
            settings,
            rows,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict == Verdict::Pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        csv_text(&self.rows, &[])
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.to_json().as_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.to_csv().as_bytes()).map_err(|e| CliError::io(path, e))
    }

    /// Reads a JSON report, or a CSV one when the name ends in `.csv`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            let mut reader = csv::Reader::from_reader(text.as_bytes());
            let header = reader.headers().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if header.iter().ne(COLUMNS) {
                return Err(CliError::Input(format!("{}: unexpected CSV columns", path.display())));
            }
            let rows = reader
                .records()
                .map(|r| {
                    let r = r.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                    ReportRow::from_record(&r)
                })
                .collect::<Result<_, _>>()?;
            return Ok(RunReport::new(None, rows));
        }
        let report: RunReport =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if report.version != REPORT_VERSION {
            return Err(CliError::Input(format!(
                "{}: report version {} not supported",
                path.display(),
                report.version
            )));
        }
        Ok(report)
    }
}

/// Geometric mean of the defined speedups of one architecture.
pub fn geomean_speedup<'a>(rows: impl IntoIterator<Item = &'a ReportRow>, arch: &str) -> Option<f64> {
    let logs: Vec<f64> = rows
        .into_iter()
        .filter(|r| r.arch == arch)
        .filter_map(|r| r.speedup)
        .map(f64::ln)
        .collect();
    (!logs.is_empty()).then(|| (logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

/// Rows of every report, then one `geomean` row per architecture present
/// (only the speedup column is filled in).
pub fn merged_csv(reports: &[RunReport]) -> String {
    let rows: Vec<ReportRow> = reports.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let mut archs: Vec<String> = Vec::new();
    for name in Arch::ALL.iter().map(|a| a.name().to_owned()).chain(rows.iter().map(|r| r.arch.clone())) {
        if rows.iter().any(|r| r.arch == name) && !archs.contains(&name) {
            archs.push(name);
        }
    }
    let summary: Vec<[String; 10]> = archs
        .iter()
        .map(|arch| {
            let mut rec: [String; 10] = Default::default();
            rec[0] = "geomean".to_owned();
            rec[1] = arch.clone();
            rec[8] = geomean_speedup(&rows, arch).map(|s| s.to_string()).unwrap_or_default();
            rec
        })
        .collect();
    csv_text(&rows, &summary)
}

fn csv_text(rows: &[ReportRow], extra: &[[String; 10]]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record(r.record()).expect("in-memory write");
    }
    for r in extra {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// Plain aligned table for the console.
pub fn console_table(rows: &[ReportRow]) -> String {
    let body: Vec<[String; 10]> = rows
        .iter()
        .map(|r| {
            let mut rec = r.record();
            rec[7] = format!("{:.3}", r.utilization);
            rec[8] = r.speedup.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
            rec
        })
        .collect();
    let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
    for rec in &body {
        for (w, cell) in widths.iter_mut().zip(rec) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let header: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
    for rec in std::iter::once(&header[..]).chain(body.iter().map(|r| &r[..])) {
        let line: Vec<String> = rec
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (cell, &w))| if k < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
