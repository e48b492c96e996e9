//! Mode reports, report comparison and serialization.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ModalError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const UNMATCHED: &str = "unmatched";
pub const STATIC: &str = "static";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub scaled_freq: f64,
    pub damping_ratio: f64,
    pub growth_rate: f64,
    pub amplitude: f64,
    pub is_static: bool,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementInfo {
    pub kind: String,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<MeasurementInfo>,
    #[serde(default)]
    pub excluded_channels: Vec<String>,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub delay: Option<usize>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub converged: Option<bool>,
    /// Wall-clock figures vary between runs, so they stay out of the
    /// serialized report and are written to a separate timing file.
    #[serde(skip)]
    pub runtime_seconds: f64,
    #[serde(skip)]
    pub stage_timings: Vec<StageTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub schema_version: u32,
    pub test_point_id: String,
    pub modes: Vec<ModeEntry>,
    pub provenance: Provenance,
}

impl ModeReport {
    /// Builds a report with modes sorted by ascending frequency.
    pub fn new(test_point_id: impl Into<String>, mut modes: Vec<ModeEntry>, provenance: Provenance) -> Self {
        sort_modes(&mut modes);
        Self {
            schema_version: SCHEMA_VERSION,
            test_point_id: test_point_id.into(),
            modes,
            provenance,
        }
    }

    pub fn non_static(&self) -> impl Iterator<Item = &ModeEntry> {
        self.modes.iter().filter(|m| !m.is_static)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.scaled_freq).collect()
    }
}

pub fn sort_modes(modes: &mut [ModeEntry]) {
    modes.sort_by(|a, b| {
        a.scaled_freq
            .total_cmp(&b.scaled_freq)
            .then(a.damping_ratio.total_cmp(&b.damping_ratio))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = ModalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(ModalError::Config(format!("unknown report format `{other}`"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Table => "txt",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

const CSV_HEADER: &str = "scaled_freq,damping_ratio,growth_rate,amplitude,is_static,flags";

pub fn emit_report(report: &ModeReport, format: ReportFormat, mut sink: impl Write) -> std::io::Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, report)?;
            writeln!(sink)?;
        }
        ReportFormat::Csv => {
            writeln!(sink, "{CSV_HEADER}")?;
            for m in &report.modes {
                writeln!(
                    sink,
                    "{},{},{},{},{},{}",
                    m.scaled_freq,
                    m.damping_ratio,
                    m.growth_rate,
                    m.amplitude,
                    m.is_static,
                    m.flags.join(";")
                )?;
            }
        }
        ReportFormat::Table => {
            writeln!(sink, "test point: {}", report.test_point_id)?;
            writeln!(
                sink,
                "{:>4}  {:>12}  {:>12}  {:>13}  {:>12}  flags",
                "#", "freq 2fdt", "damping", "growth", "|amplitude|"
            )?;
            for (i, m) in report.modes.iter().enumerate() {
                writeln!(
                    sink,
                    "{:>4}  {:>12.6}  {:>12.6}  {:>13.6e}  {:>12.4e}  {}",
                    i + 1,
                    m.scaled_freq,
                    m.damping_ratio,
                    m.growth_rate,
                    m.amplitude,
                    m.flags.join(",")
                )?;
            }
        }
    }
    sink.flush()
}

pub fn report_to_string(report: &ModeReport, format: ReportFormat) -> String {
    let mut buf = Vec::new();
    emit_report(report, format, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("report text is UTF-8")
}

pub fn read_json_report(source: impl std::io::Read) -> Result<ModeReport> {
    serde_json::from_reader(source).map_err(|e| ModalError::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

/// Parses the mode rows of a CSV report.
pub fn read_csv_modes(source: impl BufRead) -> Result<Vec<ModeEntry>> {
    let mut lines = source.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(ModalError::Parse {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    let mut modes = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| ModalError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(ModalError::Parse {
                line: line_no,
                message: format!("expected 6 fields, found {}", cells.len()),
            });
        }
        let num = |k: usize| -> Result<f64> {
            cells[k].parse().map_err(|_| ModalError::Parse {
                line: line_no,
                message: format!("`{}` is not numeric", cells[k]),
            })
        };
        modes.push(ModeEntry {
            scaled_freq: num(0)?,
            damping_ratio: num(1)?,
            growth_rate: num(2)?,
            amplitude: num(3)?,
            is_static: cells[4].parse().map_err(|_| ModalError::Parse {
                line: line_no,
                message: format!("`{}` is not a boolean", cells[4]),
            })?,
            flags: cells[5]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        });
    }
    Ok(modes)
}

/// Reads a JSON report, or a CSV mode table named after its file stem.
pub fn load_report_path(path: &std::path::Path) -> Result<ModeReport> {
    let file = std::fs::File::open(path).map_err(|e| ModalError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        Ok(ModeReport::new(id, read_csv_modes(reader)?, Provenance::default()))
    } else {
        read_json_report(reader)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub reference_freq: Option<f64>,
    pub candidate_freq: Option<f64>,
    pub reference_damping: Option<f64>,
    pub candidate_damping: Option<f64>,
    pub freq_error_pct: Option<f64>,
    pub damping_error_pct: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Rows sorted by frequency; unmatched rows carry the `unmatched` flag.
    pub rows: Vec<ComparisonRow>,
    /// `(reference index, candidate index)` of every match.
    pub matches: Vec<(usize, usize)>,
    /// Reference modes with no counterpart.
    pub missed: Vec<usize>,
    /// Candidate modes with no counterpart.
    pub spurious: Vec<usize>,
}

fn percent_error(estimate: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        if estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (estimate - truth).abs() / truth.abs() * 100.0
    }
}

/// Greedy nearest-frequency matching of non-static modes: the closest pair
/// within `freq_tol` (relative to the reference frequency) is matched
/// first, then the next closest among the remaining modes.
pub fn compare_reports(reference: &ModeReport, candidate: &ModeReport, freq_tol: f64) -> Comparison {
    let ref_idx: Vec<usize> = (0..reference.modes.len())
        .filter(|&i| !reference.modes[i].is_static)
        .collect();
    let cand_idx: Vec<usize> = (0..candidate.modes.len())
        .filter(|&i| !candidate.modes[i].is_static)
        .collect();
    let mut pairs = Vec::new();
    for &i in &ref_idx {
        for &j in &cand_idx {
            let fr = reference.modes[i].scaled_freq;
            let fc = candidate.modes[j].scaled_freq;
            let dist = (fr - fc).abs();
            if dist <= freq_tol * fr.abs() {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut ref_used = vec![false; reference.modes.len()];
    let mut cand_used = vec![false; candidate.modes.len()];
    let mut matches = Vec::new();
    for (_, i, j) in pairs {
        if !ref_used[i] && !cand_used[j] {
            ref_used[i] = true;
            cand_used[j] = true;
            matches.push((i, j));
        }
    }
    matches.sort_unstable();
    let missed: Vec<usize> = ref_idx.iter().copied().filter(|&i| !ref_used[i]).collect();
    let spurious: Vec<usize> = cand_idx.iter().copied().filter(|&j| !cand_used[j]).collect();

    let mut rows: Vec<ComparisonRow> = matches
        .iter()
        .map(|&(i, j)| {
            let a = &reference.modes[i];
            let b = &candidate.modes[j];
            ComparisonRow {
                reference_freq: Some(a.scaled_freq),
                candidate_freq: Some(b.scaled_freq),
                reference_damping: Some(a.damping_ratio),
                candidate_damping: Some(b.damping_ratio),
                freq_error_pct: Some(percent_error(b.scaled_freq, a.scaled_freq)),
                damping_error_pct: Some(percent_error(b.damping_ratio, a.damping_ratio)),
                flag: None,
            }
        })
        .collect();
    for &i in &missed {
        let a = &reference.modes[i];
        rows.push(ComparisonRow {
            reference_freq: Some(a.scaled_freq),
            candidate_freq: None,
            reference_damping: Some(a.damping_ratio),
            candidate_damping: None,
            freq_error_pct: None,
            damping_error_pct: None,
            flag: Some(UNMATCHED.into()),
        });
    }
    for &j in &spurious {
        let b = &candidate.modes[j];
        rows.push(ComparisonRow {
            reference_freq: None,
            candidate_freq: Some(b.scaled_freq),
            reference_damping: None,
            candidate_damping: Some(b.damping_ratio),
            freq_error_pct: None,
            damping_error_pct: None,
            flag: Some(UNMATCHED.into()),
        });
    }
    rows.sort_by(|a, b| {
        let fa = a.reference_freq.or(a.candidate_freq).unwrap_or(0.0);
        let fb = b.reference_freq.or(b.candidate_freq).unwrap_or(0.0);
        fa.total_cmp(&fb)
    });
    Comparison {
        rows,
        matches,
        missed,
        spurious,
    }
}

pub fn emit_comparison(cmp: &Comparison, mut sink: impl Write) -> std::io::Result<()> {
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    writeln!(
        sink,
        "{:>10}  {:>10}  {:>9}  {:>10}  {:>10}  {:>9}  flag",
        "ref freq", "cand freq", "freq err%", "ref damp", "cand damp", "damp err%"
    )?;
    for r in &cmp.rows {
        writeln!(
            sink,
            "{:>10}  {:>10}  {:>9}  {:>10}  {:>10}  {:>9}  {}",
            opt(r.reference_freq, 6),
            opt(r.candidate_freq, 6),
            opt(r.freq_error_pct, 2),
            opt(r.reference_damping, 4),
            opt(r.candidate_damping, 4),
            opt(r.damping_error_pct, 2),
            r.flag.as_deref().unwrap_or("")
        )?;
    }
    sink.flush()
}

/// Scoring of an estimate against a ground-truth table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTable {
    pub comparison: Comparison,
    /// Matched modes whose damping error is within `damp_tol`.
    pub accepted: usize,
    pub damp_tol_pct: f64,
}

impl MatchTable {
    pub fn detected(&self) -> usize {
        self.comparison.matches.len()
    }

    pub fn max_freq_error_pct(&self) -> f64 {
        self.comparison
            .rows
            .iter()
            .filter_map(|r| r.freq_error_pct)
            .fold(0.0, f64::max)
    }
}

/// Matches `report` against `truth`; `freq_tol` is a relative frequency
/// window and `damp_tol` a relative damping tolerance (fractions).
pub fn score(report: &ModeReport, truth: &ModeReport, freq_tol: f64, damp_tol: f64) -> MatchTable {
    let comparison = compare_reports(truth, report, freq_tol);
    let accepted = comparison
        .rows
        .iter()
        .filter(|r| r.damping_error_pct.is_some_and(|e| e <= damp_tol * 100.0))
        .count();
    MatchTable {
        comparison,
        accepted,
        damp_tol_pct: damp_tol * 100.0,
    }
}
