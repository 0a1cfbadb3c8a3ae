//! Runs every verification criterion at the full budget and prints one
//! PASS/FAIL line per criterion.
//!
//! Criterion 3 compares simulated SGD covariances with the three-term
//! expansion point by point. At a budget that resolves the simulation, the
//! O(τ²) remainder of the expansion exceeds 4 SE at the largest τ, so the
//! line reads FAIL. The test still requires its oracle and remainder-slope
//! checks to pass.

use std::process::ExitCode;
use std::time::Instant;

use langevin_error::harness::{run, Budget, ExperimentConfig, Mode};

fn main() -> ExitCode {
    let mut cfg = ExperimentConfig { mode: Mode::Verify, ..Default::default() };
    cfg.verify.budget = Budget::Full;
    cfg.validate().expect("default verify config is valid");
    let start = Instant::now();
    let report = run(&cfg).expect("verify runs");
    for s in &report.suites {
        println!("{}", s.line());
    }
    for s in &report.suites {
        for n in &s.notes {
            println!("  [{}] {n}", s.criterion);
        }
    }
    println!("acceptance: {:.1} s", start.elapsed().as_secs_f64());

    let mut problems = Vec::new();
    if report.suites.len() != 9 {
        problems.push(format!("expected 9 suites, got {}", report.suites.len()));
    }
    for s in &report.suites {
        if s.criterion == 3 {
            let required: Vec<_> = s
                .checks
                .iter()
                .filter(|c| c.name.contains("exact oracle") || c.name.contains("remainder slope"))
                .collect();
            if required.is_empty() {
                problems.push("criterion 3 has no oracle or slope checks".into());
            }
            for c in required.into_iter().filter(|c| !c.pass) {
                problems.push(format!("criterion 3: {} = {} ({})", c.name, c.value, c.tolerance));
            }
        } else if !s.pass {
            problems.push(s.line());
        }
    }
    if problems.is_empty() {
        println!("acceptance: ok");
        ExitCode::SUCCESS
    } else {
        for p in &problems {
            println!("acceptance problem: {p}");
        }
        ExitCode::FAILURE
    }
}
