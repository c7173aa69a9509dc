use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::DimensionReport;
use crate::datasets::Dimension;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Pretty JSON, full precision.
    Structured,
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "structured" | "json" => Ok(Self::Structured),
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(Error::Parameter(format!("unknown report format '{other}'"))),
        }
    }
}

/// One row per dimension plus the average.
pub fn render_csv(report: &DimensionReport) -> String {
    let mut out = String::from("dimension,score,hits,total\n");
    for dim in Dimension::ALL {
        let t = report.tallies.get(dim);
        let _ = writeln!(
            out,
            "{dim},{:.2},{},{}",
            report.scores().get(dim),
            t.hits,
            t.total
        );
    }
    let _ = writeln!(out, "average,{:.2},,", report.average);
    out
}

/// Markdown table in Rel./Gen./Loc./Port./Avg. column order, one row per report.
pub fn render_table(reports: &[&DimensionReport]) -> String {
    let header: Vec<String> = std::iter::once("Method".to_string())
        .chain(Dimension::ALL.iter().map(|d| d.label().to_string()))
        .chain(std::iter::once("Avg.".to_string()))
        .collect();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let s = r.scores();
            std::iter::once(r.config.method.clone())
                .chain(Dimension::ALL.iter().map(|d| format!("{:.2}", s.get(*d))))
                .chain(std::iter::once(format!("{:.2}", s.average)))
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain(std::iter::once(header[c].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();

    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for (i, cell) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, " {:<w$} |", cell, w = widths[i]);
            } else {
                let _ = write!(s, " {:>w$} |", cell, w = widths[i]);
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(&header);
    out.push('|');
    for w in &widths {
        out.push_str(&"-".repeat(w + 2));
        out.push('|');
    }
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
    }
    out
}

pub fn write_report(
    report: &DimensionReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Table => render_table(&[report]),
    };
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Reads a structured report.
pub fn read_report(path: impl AsRef<Path>) -> Result<DimensionReport> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}
