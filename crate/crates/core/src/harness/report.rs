//! Report type and CSV/JSON emission.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Column set of sweep, theory and σ-scan tables.
pub const BREAKDOWN_COLUMNS: [&str; 9] = ["sigma", "tau", "gamma", "N", "term0", "term_tau", "term_tauN", "term_N", "total"];

/// One table cell. Non-finite numbers never reach a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    pub fn num(x: f64) -> Cell {
        if x.is_finite() {
            Cell::Num(x)
        } else {
            Cell::Text("E_NONFINITE".into())
        }
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:?}"),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from header in table {}", self.name);
        self.rows.push(row);
    }
}

/// Single check inside a verification suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable comparison, e.g. `<= 4 SE`.
    pub tolerance: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64, unit: &str) -> Self {
        Self { name: name.into(), value, tolerance: format!("<= {bound:?}{unit}"), pass: value <= bound }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64, unit: &str) -> Self {
        Self { name: name.into(), value, tolerance: format!(">= {bound:?}{unit}"), pass: value >= bound }
    }

    pub fn greater(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, tolerance: format!("> {bound:?}"), pass: value > bound }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), value: if pass { 1.0 } else { 0.0 }, tolerance: "true".into(), pass }
    }

    /// Shown in the report but not counted toward the verdict.
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, tolerance: "informational".into(), pass: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub criterion: u8,
    pub title: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl SuiteResult {
    pub fn new(criterion: u8, title: &str, checks: Vec<Check>, notes: Vec<String>) -> Self {
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        Self { criterion, title: title.into(), pass, checks, notes }
    }

    /// `PASS [k] title: worst check`.
    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        let failing: Vec<&Check> = self.checks.iter().filter(|c| !c.pass).collect();
        let shown = failing.first().copied().or(self.checks.first());
        match shown {
            Some(c) => format!("{tag} [{}] {} ({}: {:.4e}, tol {})", self.criterion, self.title, c.name, c.value, c.tolerance),
            None => format!("{tag} [{}] {}", self.criterion, self.title),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub task: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub mode: String,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub seeds: Vec<SeedRecord>,
    pub tables: Vec<Table>,
    pub suites: Vec<SuiteResult>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mode: config.mode.name().into(),
            config: config.clone(),
            master_seed: config.seed,
            seeds: Vec::new(),
            tables: Vec::new(),
            suites: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Derives and records the seed of a stochastic task.
    pub fn seed_for(&mut self, task: &str) -> u64 {
        let seed = crate::rng::derive_seed(self.master_seed, task);
        self.seeds.push(SeedRecord { task: task.into(), seed });
        seed
    }

    pub fn all_pass(&self) -> bool {
        self.suites.iter().all(|s| s.pass)
    }

    /// CSV text: a single table is written bare, several tables are each
    /// preceded by a `# name` line and separated by blank lines.
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        let single = self.tables.len() == 1;
        for (k, t) in self.tables.iter().enumerate() {
            if !single {
                if k > 0 {
                    out.push(b'\n');
                }
                writeln!(out, "# {}", t.name).expect("write to vec");
            }
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(&t.columns).expect("write to vec");
            for r in &t.rows {
                w.write_record(r.iter().map(Cell::csv)).expect("write to vec");
            }
            out.extend(w.into_inner().expect("flush to vec"));
        }
        String::from_utf8(out).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn emit_csv(report: &Report, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, report.to_csv())
}

pub fn emit_json(report: &Report, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, report.to_json())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats() {
        let mut r = Report::new(&ExperimentConfig::default());
        let mut t = Table::new("t", &["x", "y"]);
        t.push(vec![Cell::num(0.1 + 0.2), Cell::num(f64::NAN)]);
        t.push(vec![Cell::num(1e-300), Cell::Empty]);
        r.tables.push(t);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,y");
        assert_eq!(lines[1].split(',').next().unwrap().parse::<f64>().unwrap(), 0.1 + 0.2);
        assert!(lines[1].ends_with("E_NONFINITE"));
        assert_eq!(lines[2], "1e-300,");
    }

    #[test]
    fn suite_line_reports_failing_check() {
        let s = SuiteResult::new(
            3,
            "demo",
            vec![Check::at_most("a", 1.0, 4.0, " SE"), Check::greater("slope", 0.5, 1.0)],
            vec![],
        );
        assert!(!s.pass);
        assert!(s.line().starts_with("FAIL [3] demo (slope"));
    }
}
