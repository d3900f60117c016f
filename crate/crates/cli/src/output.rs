use bdkit::harness::ResultRow;
use bdkit::verification::CheckResult;
use serde::Serialize;
use serde_json::Value;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

pub const CSV_COLUMNS: [&str; 10] = [
    "quantity",
    "model",
    "dist",
    "n_or_level",
    "value",
    "log_value",
    "std_error",
    "n_reps",
    "source",
    "pass",
];

/// Everything a command produced.
#[derive(Debug, Default, Serialize)]
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    pub checks: Vec<CheckResult>,
    /// Check failures that were errors rather than verdicts.
    pub errors: Vec<String>,
}

impl Outcome {
    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.checks.iter().all(|c| c.pass) && self.rows.iter().all(|r| r.pass != Some(false))
    }
}

/// Plain decimal for ordinary magnitudes, scientific otherwise.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e7).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn value_cell(row: &ResultRow) -> String {
    match (row.value, row.log_value) {
        (Some(v), _) if v.is_finite() => format_number(v),
        (_, Some(l)) if l.is_finite() => "overflow".into(),
        _ => String::new(),
    }
}

fn cells(row: &ResultRow) -> [String; 10] {
    let opt = |x: Option<f64>| x.map(format_number).unwrap_or_default();
    [
        row.quantity.clone(),
        row.model.clone(),
        row.dist.clone(),
        row.n_or_level.map(|n| n.to_string()).unwrap_or_default(),
        value_cell(row),
        opt(row.log_value),
        opt(row.std_error),
        row.n_reps.map(|n| n.to_string()).unwrap_or_default(),
        row.source.to_string(),
        row.pass.map(|p| p.to_string()).unwrap_or_default(),
    ]
}

fn header_lines(echo: &Value, no_timestamp: bool) -> Vec<String> {
    let mut lines = Vec::new();
    if !no_timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        lines.push(format!("# generated {secs} (unix seconds) by bdkit {}", env!("CARGO_PKG_VERSION")));
    }
    lines.push(format!("# config {echo}"));
    lines
}

pub fn write_csv(path: &Path, rows: &[ResultRow], echo: &Value, no_timestamp: bool) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut file = std::fs::File::create(path).map_err(io)?;
    for line in header_lines(echo, no_timestamp) {
        writeln!(file, "{line}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for row in rows {
        w.write_record(cells(row)).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

pub fn write_report(path: &Path, outcome: &Outcome, echo: &Value, no_timestamp: bool) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(skip_serializing_if = "Option::is_none")]
        generated_unix: Option<u64>,
        config: &'a Value,
        rows: &'a [ResultRow],
        checks: &'a [CheckResult],
        errors: &'a [String],
        pass: bool,
    }
    let generated_unix = (!no_timestamp).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let report = Report {
        generated_unix,
        config: echo,
        rows: &outcome.rows,
        checks: &outcome.checks,
        errors: &outcome.errors,
        pass: outcome.all_pass(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Aligned table for the terminal. A closed pipe ends output quietly.
pub fn print_table(rows: &[ResultRow], echo: &Value, no_timestamp: bool) {
    let _ = write_table(&mut std::io::stdout().lock(), rows, echo, no_timestamp);
}

fn write_table(out: &mut impl Write, rows: &[ResultRow], echo: &Value, no_timestamp: bool) -> std::io::Result<()> {
    for line in header_lines(echo, no_timestamp) {
        writeln!(out, "{line}")?;
    }
    if rows.is_empty() {
        return Ok(());
    }
    let table: Vec<[String; 10]> = rows.iter().map(cells).collect();
    let used: Vec<usize> = (0..CSV_COLUMNS.len())
        .filter(|&j| table.iter().any(|r| !r[j].is_empty()))
        .collect();
    let widths: Vec<usize> = used
        .iter()
        .map(|&j| table.iter().map(|r| r[j].len()).max().unwrap_or(0).max(CSV_COLUMNS[j].len()))
        .collect();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(out, "{}", parts.join("  ").trim_end())
    };
    line(used.iter().map(|&j| CSV_COLUMNS[j]).collect())?;
    for r in &table {
        line(used.iter().map(|&j| r[j].as_str()).collect())?;
    }
    Ok(())
}
