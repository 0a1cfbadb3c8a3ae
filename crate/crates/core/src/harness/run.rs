//! Mode dispatch.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{AxisName, DataMode, ExperimentConfig, Mode};
use super::report::{Cell, Report, Table, BREAKDOWN_COLUMNS};
use super::verify::run_suites;
use crate::error::Result;
use crate::langevin::{run_ula_chain, ula_stationary};
use crate::matrixkit::SpdMatrix;
use crate::pipeline::{expected_pipeline_error, sigma_tradeoff_scan, ErrorBreakdown, PipelineParams};
use crate::score_theory::{optimal_score, sgd_full_moments, sgd_stationary_exact, SampleSize};
use crate::sgd_sim::{run_sgd_chain, run_sgd_ensemble, DataSource, EmpiricalGaussian};
use crate::stats::MomentEstimate;

/// Runs a validated config, inside a dedicated thread pool when `threads` is set.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| crate::Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(config))
        }
        None => dispatch(config),
    }
}

fn dispatch(config: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new(config);
    match config.mode {
        Mode::Theory => theory(config, &mut report)?,
        Mode::Sweep => sweep(config, &mut report),
        Mode::SigmaOpt => sigma_opt(config, &mut report)?,
        Mode::SimulateSgd => simulate_sgd(config, &mut report)?,
        Mode::SimulateUla => simulate_ula(config, &mut report)?,
        Mode::Verify => {
            let suites = run_suites(&mut report, config.verify.budget, &config.verify.only, config.tau_n_sign);
            let mut t = Table::new("suites", &["criterion", "pass", "title", "summary"]);
            let mut checks = Table::new("checks", &["criterion", "check", "value", "tolerance", "pass"]);
            for s in &suites {
                t.push(vec![Cell::Int(s.criterion as u64), Cell::Bool(s.pass), Cell::text(&s.title), Cell::text(s.line())]);
                for c in &s.checks {
                    checks.push(vec![
                        Cell::Int(s.criterion as u64),
                        Cell::text(&c.name),
                        Cell::num(c.value),
                        Cell::text(&c.tolerance),
                        Cell::Bool(c.pass),
                    ]);
                }
            }
            report.tables.push(t);
            report.tables.push(checks);
            report.suites = suites;
        }
    }
    Ok(report)
}

fn breakdown_row(p: &PipelineParams, r: &Result<ErrorBreakdown>) -> Vec<Cell> {
    let mut row = vec![Cell::num(p.sigma), Cell::num(p.tau), Cell::num(p.gamma), Cell::Int(p.n)];
    match r {
        Ok(b) => row.extend([b.term0, b.term_tau, b.term_tau_n, b.term_n, b.total].map(Cell::num)),
        Err(e) => {
            row.extend(std::iter::repeat_n(Cell::Empty, 4));
            row.push(Cell::text(e.code()));
        }
    }
    row
}

fn theory(config: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let p = config.params.pipeline();
    let r = expected_pipeline_error(&config.spectrum(), &p, config.tau_n_sign);
    let mut t = Table::new("theory", &BREAKDOWN_COLUMNS);
    t.push(breakdown_row(&p, &r));
    report.tables.push(t);
    r.map(|_| ())
}

/// Cartesian product of the sweep axes in row-major order (first axis slowest).
pub fn sweep_points(config: &ExperimentConfig) -> Vec<PipelineParams> {
    let mut points = vec![config.params.pipeline()];
    for axis in &config.sweep.axes {
        let vals = axis.grid.values();
        points = points
            .iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = *p;
                    match axis.name {
                        AxisName::Sigma => q.sigma = v,
                        AxisName::Tau => q.tau = v,
                        AxisName::Gamma => q.gamma = v,
                        AxisName::N => q.n = v as u64,
                    }
                    q
                })
            })
            .collect();
    }
    points
}

fn sweep(config: &ExperimentConfig, report: &mut Report) {
    let spec = config.spectrum();
    let points = sweep_points(config);
    let rows: Vec<Vec<Cell>> = points
        .par_iter()
        .map(|p| breakdown_row(p, &expected_pipeline_error(&spec, p, config.tau_n_sign)))
        .collect();
    let mut t = Table::new("sweep", &BREAKDOWN_COLUMNS);
    for r in rows {
        t.push(r);
    }
    report.tables.push(t);
}

fn sigma_opt(config: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let p = config.params;
    let grid = config.sigma_opt.grid.values();
    let scan = sigma_tradeoff_scan(&config.spectrum(), p.tau, p.gamma, p.n, &grid, config.tau_n_sign)?;
    let mut t = Table::new("sigma_scan", &BREAKDOWN_COLUMNS);
    for row in &scan.rows {
        let q = PipelineParams { sigma: row.sigma, tau: p.tau, gamma: p.gamma, n: p.n };
        let r = match (&row.breakdown, &row.error) {
            (Some(b), _) => Ok(*b),
            (None, e) => Err(crate::Error::DomainError(e.clone().unwrap_or_default())),
        };
        let mut cells = breakdown_row(&q, &r);
        if let Some(code) = &row.error {
            cells[8] = Cell::text(code);
        }
        t.push(cells);
    }
    let mut s = Table::new("sigma_opt", &["sigma_star", "total_star", "interior", "grid_argmin_sigma"]);
    s.push(vec![
        Cell::num(scan.sigma_star),
        Cell::num(scan.total_star),
        Cell::Bool(scan.interior),
        Cell::num(grid[scan.grid_argmin]),
    ]);
    report.tables.push(t);
    report.tables.push(s);
    if !scan.interior {
        report.notes.push("grid minimum lies on the boundary; sigma_star is the boundary point".into());
    }
    Ok(())
}

const MOMENT_COLUMNS: [&str; 9] =
    ["quantity", "row", "col", "estimate", "se", "reference", "z", "expansion", "z_expansion"];

fn push_moments(
    t: &mut Table,
    name: &str,
    est: &DMatrix<f64>,
    se: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    expansion: Option<&DMatrix<f64>>,
) {
    for j in 0..est.ncols() {
        for i in 0..est.nrows() {
            let z = |r: f64| if se[(i, j)] > 0.0 { Cell::num((est[(i, j)] - r) / se[(i, j)]) } else { Cell::Empty };
            let (ex, zx) = match expansion {
                Some(m) => (Cell::num(m[(i, j)]), z(m[(i, j)])),
                None => (Cell::Empty, Cell::Empty),
            };
            t.push(vec![
                Cell::text(name),
                Cell::Int(i as u64),
                Cell::Int(j as u64),
                Cell::num(est[(i, j)]),
                Cell::num(se[(i, j)]),
                Cell::num(reference[(i, j)]),
                z(reference[(i, j)]),
                ex,
                zx,
            ]);
        }
    }
}

fn col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn simulate_sgd(config: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let spec = config.spectrum();
    let d = spec.len();
    let c = SpdMatrix::diagonal(&spec)?;
    let p = config.params;
    let cfg = config.chain.chain_config(report.seed_for("simulate-sgd/chain"));
    let zero = DVector::zeros(d);
    struct Reference {
        mean_a: DMatrix<f64>,
        mean_b: DVector<f64>,
        cov_b: DMatrix<f64>,
        cov_a: DMatrix<f64>,
    }
    let (est, reference, expansion) = match config.simulate.data {
        DataMode::Population => {
            let est = run_sgd_chain(&c, p.sigma, p.tau, DataSource::Exact, &cfg)?;
            let th = sgd_stationary_exact(c.matrix(), p.sigma, &zero, p.tau)?;
            let m = sgd_full_moments(&c, p.sigma, p.tau, SampleSize::Infinite, config.tau_n_sign)?;
            let r = Reference { mean_a: m.mean_a.clone(), mean_b: m.mean_b.clone(), cov_b: th.cov_b(), cov_a: th.cov_a() };
            (est, r, Some(m))
        }
        DataMode::Dataset => {
            let data_seed = report.seed_for("simulate-sgd/dataset");
            let est = run_sgd_chain(&c, p.sigma, p.tau, DataSource::Empirical { n: p.n, seed: data_seed }, &cfg)?;
            let mut rng = crate::rng::stream(data_seed, "sgd/dataset");
            let emp = EmpiricalGaussian::draw(c.sqrt().matrix(), p.n, &mut rng);
            let th = sgd_stationary_exact(&emp.cov, p.sigma, &emp.mean, p.tau)?;
            let inv = (&emp.cov + DMatrix::identity(d, d) * (p.sigma * p.sigma))
                .try_inverse()
                .ok_or_else(|| crate::Error::SingularSystem("empirical C + sigma^2 I".into()))?;
            let r = Reference { mean_b: &inv * &emp.mean, mean_a: inv, cov_b: th.cov_b(), cov_a: th.cov_a() };
            (est, r, None)
        }
        DataMode::Ensemble => {
            let n = SampleSize::Finite(p.n);
            let est = run_sgd_ensemble(&c, p.sigma, p.tau, n, config.simulate.datasets, &cfg)?;
            let m = sgd_full_moments(&c, p.sigma, p.tau, n, config.tau_n_sign)?;
            report.notes.push("ensemble references are the three-term expansion".into());
            let r = Reference { mean_a: m.mean_a.clone(), mean_b: m.mean_b.clone(), cov_b: m.cov_b.clone(), cov_a: m.cov_a.clone() };
            (est, r, Some(m))
        }
    };
    let mut t = Table::new("sgd_moments", &MOMENT_COLUMNS);
    push_moments(&mut t, "mean_A", &est.mean_a(), &est.se_mean_a(), &reference.mean_a, None);
    push_moments(&mut t, "mean_b", &col(&est.mean_b()), &col(&est.se_mean_b()), &col(&reference.mean_b), None);
    push_moments(&mut t, "cov_b", &est.cov_b(), &est.se_cov_b(), &reference.cov_b, expansion.as_ref().map(|m| &m.cov_b));
    push_moments(&mut t, "cov_A", &est.cov_a(), &est.se_cov_a(), &reference.cov_a, expansion.as_ref().map(|m| &m.cov_a));
    report.tables.push(t);
    Ok(())
}

fn simulate_ula(config: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let spec = config.spectrum();
    let c = SpdMatrix::diagonal(&spec)?;
    let p = config.params;
    let score = optimal_score(&c, p.sigma)?;
    let law = ula_stationary(&score, p.gamma)?;
    let cfg = config.chain.chain_config(report.seed_for("simulate-ula/chain"));
    let est: MomentEstimate = run_ula_chain(&score, p.gamma, &cfg)?;
    let mut t = Table::new("ula_moments", &MOMENT_COLUMNS);
    push_moments(&mut t, "mean", &col(&est.mean), &col(&est.se_mean), &col(&law.mean), None);
    push_moments(&mut t, "cov", &est.cov, &est.se_cov, law.cov.matrix(), None);
    report.tables.push(t);
    let data = crate::gaussian_metrics::GaussianModel::centered(c.clone());
    let w2 = crate::gaussian_metrics::w2_sq_gauss(&data, &law.gaussian())?;
    let mut s = Table::new("ula_law", &["w2_sq_data_vs_ula", "n_effective"]);
    s.push(vec![Cell::num(w2), Cell::num(est.n_effective)]);
    report.tables.push(s);
    Ok(())
}
