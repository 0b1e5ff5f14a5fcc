//! Result tables in CSV and markdown.

use std::fmt::Write as _;

use crate::train::{Algorithm, StartMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// One cell of a results table: a single run (`seed` set) or the mean over
/// `runs` seeds. `accuracy` is `None` when every run of the cell failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub start: StartMode,
    pub blend_rho: f64,
    pub seed: Option<u64>,
    pub runs: usize,
    pub accuracy: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub reference: Option<f64>,
    /// Seeds that did not finish; a nonzero count marks the row failed.
    pub failed: usize,
}

impl ResultRow {
    pub fn gap(&self) -> Option<f64> {
        Some(self.reference? - self.accuracy?)
    }

    pub fn status(&self) -> &'static str {
        if self.failed > 0 {
            "failed"
        } else {
            "ok"
        }
    }
}

pub const COLUMNS: [&str; 10] = [
    "algorithm",
    "start",
    "blend_rho",
    "seed",
    "runs",
    "accuracy",
    "accuracy_std",
    "reference",
    "gap",
    "status",
];

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

fn cells(row: &ResultRow) -> [String; 10] {
    [
        row.algorithm.to_string(),
        row.start.to_string(),
        format!("{}", row.blend_rho),
        row.seed.map_or_else(|| "mean".into(), |s| s.to_string()),
        row.runs.to_string(),
        fixed(row.accuracy),
        fixed(row.accuracy_std),
        fixed(row.reference),
        fixed(row.gap()),
        row.status().to_string(),
    ]
}

/// Renders `rows` with a header line. The gap column is always
/// `reference - accuracy`, computed here rather than stored.
pub fn emit_table(rows: &[ResultRow], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS).expect("in-memory write");
            for row in rows {
                w.write_record(cells(row)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
        TableFormat::Markdown => {
            let mut out = format!("| {} |\n", COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(COLUMNS.len()));
            for row in rows {
                let _ = writeln!(out, "| {} |", cells(row).join(" | "));
            }
            out
        }
    }
}

/// Grid view: one line per start mode and blend setting, one column per
/// algorithm, with the full-precision reference first. Cells read
/// `mean ± std`.
pub fn emit_grid_markdown(rows: &[ResultRow]) -> String {
    let columns = [
        Algorithm::FullPrecision,
        Algorithm::MedianBc,
        Algorithm::Bc,
        Algorithm::BinaryRelax,
    ];
    let mut blends: Vec<f64> = rows
        .iter()
        .filter(|r| r.algorithm.is_quantized())
        .map(|r| r.blend_rho)
        .collect();
    blends.sort_by(f64::total_cmp);
    blends.dedup();

    let baseline = rows
        .iter()
        .find(|r| r.algorithm == Algorithm::FullPrecision);
    let mut out = String::from("| start | 32 bit | Median BC | BC | BR |\n|---|---|---|---|---|\n");
    for start in [StartMode::Cold, StartMode::Warm] {
        for &rho in &blends {
            let label = if rho > 0.0 {
                format!("{start}, blend {rho}")
            } else {
                start.to_string()
            };
            let mut line = format!("| {label} |");
            for algo in columns {
                let cell = if algo == Algorithm::FullPrecision {
                    baseline
                } else {
                    rows.iter()
                        .find(|r| r.algorithm == algo && r.start == start && r.blend_rho == rho)
                };
                let text = match cell {
                    Some(r) if r.failed > 0 && r.accuracy.is_none() => "failed".to_string(),
                    Some(r) => {
                        let mut s = fixed(r.accuracy);
                        if let Some(sd) = r.accuracy_std {
                            let _ = write!(s, " ± {sd:.4}");
                        }
                        if r.failed > 0 {
                            s.push_str(" (failed)");
                        }
                        s
                    }
                    None => String::new(),
                };
                let _ = write!(line, " {text} |");
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}
