//! Verification suites for acceptance criteria 1 to 9.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::config::Budget;
use super::report::{Check, Report, SuiteResult};
use crate::error::Result;
use crate::gaussian_metrics::{bures_sq, bures_taylor2, log_grid, loglog_slope, sqrt_taylor2};
use crate::langevin::{
    expected_w2_perturbed, perturbation_mc, run_ula_chain, sigma_expansion, ula_stationary, Flavor, PerturbationLaw,
};
use crate::matrixkit::{
    kron, lyap_inverse_dense, lyap_inverse_spd, psd_sqrt, rel_frobenius, symmetrize, SpdMatrix,
};
use crate::pipeline::{
    expected_pipeline_error, perturbation_law_from_sgd, pipeline_nested_mc, sigma_tradeoff_scan, PipelineParams,
    UlaMode,
};
use crate::rng::{normal_vector, random_matrix, random_orthogonal, random_spd, random_spd_with_spectrum, stream};
use crate::score_theory::{
    isserlis_quartic, isserlis_quartic_oracle, isserlis_sigma_eps_oracle, noise_matrix_four_term,
    noise_matrix_sigma_eps, optimal_score, sgd_full_moments, sgd_stationary_exact, sgd_tau_bound, LinearScore,
    SampleSize, TauNSign,
};
use crate::sgd_sim::{run_sgd_chain, run_sgd_ensemble, semi_analytic_study, ChainConfig, DataSource};
use crate::stats::max_z;

pub const TITLES: [&str; 9] = [
    "Lyapunov eigenbasis inverse equals dense vectorized solve",
    "ULA chain matches its stationary law",
    "SGD stationary covariance three-term expansion",
    "gradient-noise second moments match Isserlis sampling",
    "second-order expansion remainders are cubic",
    "perturbed ULA error matches nested Monte Carlo",
    "pipeline error: internal identity and nested Monte Carlo",
    "interior optimum of the noise level sigma",
    "verify is deterministic under a fixed master seed",
];

/// Runs the selected suites (all when `only` is empty), logging timings to stderr.
pub fn run_suites(report: &mut Report, budget: Budget, only: &[u8], sign: TauNSign) -> Vec<SuiteResult> {
    let mut out = Vec::new();
    for k in 1..=9u8 {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let title = TITLES[k as usize - 1];
        let res = match k {
            1 => criterion1(report),
            2 => criterion2(report, budget),
            3 => criterion3(report, budget, sign),
            4 => criterion4(report, budget),
            5 => criterion5(report),
            6 => criterion6(report, budget),
            7 => criterion7(report, budget, sign),
            8 => criterion8(sign),
            _ => criterion9(report, sign),
        };
        let suite = match res {
            Ok((checks, notes)) => SuiteResult::new(k, title, checks, notes),
            Err(e) => SuiteResult::new(k, title, vec![Check::flag("completed without error", false)], vec![e.to_string()]),
        };
        eprintln!("[verify] criterion {k}: {} in {:.2} s", if suite.pass { "pass" } else { "fail" }, start.elapsed().as_secs_f64());
        out.push(suite);
    }
    out
}

type Outcome = Result<(Vec<Check>, Vec<String>)>;

fn criterion1(rep: &mut Report) -> Outcome {
    let mut rng = stream(rep.seed_for("verify/1/cases"), "cases");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = 1 + (rng.random::<u32>() % 8) as usize;
        let c = random_spd(&mut rng, d);
        let x = random_matrix(&mut rng, d, d);
        for tau in [0.1 / c.max_eig(), 1.0 / c.max_eig()] {
            let a = lyap_inverse_spd(&c, tau, &x)?;
            let b = lyap_inverse_dense(c.matrix(), tau, &x)?;
            worst = worst.max(rel_frobenius(&a, &b));
        }
    }
    Ok((vec![Check::at_most("max relative Frobenius error over 200 solves", worst, 1e-10, "")], vec![]))
}

fn criterion2(rep: &mut Report, budget: Budget) -> Outcome {
    let n_steps = match budget {
        Budget::Quick => 200_000,
        Budget::Full => 1_000_000,
    };
    let mut rng = stream(rep.seed_for("verify/2/cases"), "cases");
    let mut worst_cov: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    for case in 0..10 {
        let d = 1 + (rng.random::<u32>() % 4) as usize;
        let spec: Vec<f64> = (0..d).map(|_| 0.5 + rng.random::<f64>()).collect();
        let s = random_spd_with_spectrum(&mut rng, &spec);
        let g = random_matrix(&mut rng, d, d);
        let a = s.matrix() + (&g - g.transpose()) * 0.15;
        let b = normal_vector(&mut rng, d);
        let norm = a.clone().svd(false, false).singular_values.max();
        let gamma = (0.3 + 0.5 * rng.random::<f64>()) * 2.0 * s.min_eig() / (norm * norm);
        let score = LinearScore::new(a, b)?;
        let law = ula_stationary(&score, gamma)?;
        let cfg = ChainConfig { n_steps, seed: rep.seed_for(&format!("verify/2/chain/{case}")), ..Default::default() };
        let est = run_ula_chain(&score, gamma, &cfg)?;
        worst_cov = worst_cov.max(est.max_cov_z(law.cov.matrix()));
        worst_mean = worst_mean.max(est.max_mean_z(&law.mean));
    }
    let score = LinearScore::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1))?;
    let cfg = ChainConfig { n_steps, seed: rep.seed_for("verify/2/scalar"), ..Default::default() };
    let est = run_ula_chain(&score, 0.5, &cfg)?;
    let z_scalar = est.max_cov_z(&DMatrix::from_element(1, 1, 2.0 / (2.0 - 0.5)));
    Ok((
        vec![
            Check::at_most("max covariance z over 10 random cases", worst_cov, 4.0, " SE"),
            Check::at_most("max mean z over 10 random cases", worst_mean, 4.0, " SE"),
            Check::at_most("scalar a=1, gamma=0.5 variance z vs 2/(2a-gamma a^2)", z_scalar, 4.0, " SE"),
        ],
        vec![format!("{n_steps} kept steps per chain, 30 batch means")],
    ))
}

/// Remainder of the τ-dependent covariance after removing the modeled
/// `τ` and `τ/N` terms.
struct TauRemainder {
    b: Vec<f64>,
    a: Vec<f64>,
}

fn criterion3(rep: &mut Report, budget: Budget, adopted: TauNSign) -> Outcome {
    let (chain_steps, datasets, steps_per_dataset, semi_datasets) = match budget {
        Budget::Quick => (400_000, 300, 1000, 10_000),
        Budget::Full => (4_000_000, 3000, 1000, 100_000),
    };
    let taus = [0.02, 0.01, 0.005];
    let sigma = 1.0;
    let mut checks = Vec::new();
    let mut notes = vec![format!("adopted tau/N sign: {}", sign_name(adopted))];
    let mut favour = [0.0f64; 2];
    let mut shrinking = [0usize; 2];
    let mut cells = 0usize;
    for spec in [vec![1.0], vec![1.0, 3.0]] {
        let d = spec.len();
        let c = SpdMatrix::diagonal(&spec)?;
        let id = DMatrix::identity(d, d);
        for n in [SampleSize::Finite(50), SampleSize::Finite(200), SampleSize::Infinite] {
            let label = match n {
                SampleSize::Finite(k) => format!("d={d}, N={k}"),
                SampleSize::Infinite => format!("d={d}, N=inf"),
            };
            let semi = match n {
                SampleSize::Finite(k) => {
                    Some(semi_analytic_study(&c, sigma, &taus, k, semi_datasets, rep.seed_for(&format!("verify/3/semi/{label}")))?)
                }
                SampleSize::Infinite => None,
            };
            let mut z_oracle: f64 = 0.0;
            let mut z_model: f64 = 0.0;
            let mut rem = [TauRemainder { b: vec![], a: vec![] }, TauRemainder { b: vec![], a: vec![] }];
            for (k, &tau) in taus.iter().enumerate() {
                let seed = rep.seed_for(&format!("verify/3/sim/{label}/tau={tau}"));
                let est = match n {
                    SampleSize::Infinite => {
                        let cfg = ChainConfig { n_steps: chain_steps, seed, ..Default::default() };
                        run_sgd_chain(&c, sigma, tau, DataSource::Exact, &cfg)?
                    }
                    SampleSize::Finite(_) => {
                        let cfg = ChainConfig { n_steps: steps_per_dataset, seed, ..Default::default() };
                        run_sgd_ensemble(&c, sigma, tau, n, datasets, &cfg)?
                    }
                };
                // Oracle: exact stationary law (N = ∞) or dataset-averaged exact law.
                let (ob, sob, oa, soa, within_b, within_a) = match &semi {
                    None => {
                        let th = sgd_stationary_exact(c.matrix(), sigma, &DVector::zeros(d), tau)?;
                        let (zb, za) = (DMatrix::zeros(d, d), DMatrix::zeros(d * d, d * d));
                        (th.cov_b(), zb.clone(), th.cov_a(), za.clone(), th.cov_b(), th.cov_a())
                    }
                    Some(st) => {
                        let p = &st.points[k];
                        let wb = &p.curvature_b + &st.mean_s * (tau / 2.0);
                        let wa = &p.curvature_a + kron(&id, &st.mean_s) * (tau / 2.0);
                        (p.cov_b.clone(), p.se_cov_b.clone(), p.cov_a.clone(), p.se_cov_a.clone(), wb, wa)
                    }
                };
                let comb = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.zip_map(b, |x, y| (x * x + y * y).sqrt());
                z_oracle = z_oracle
                    .max(max_z(est.cov_b().as_slice(), ob.as_slice(), comb(&est.se_cov_b(), &sob).as_slice()))
                    .max(max_z(est.cov_a().as_slice(), oa.as_slice(), comb(&est.se_cov_a(), &soa).as_slice()));
                let m = sgd_full_moments(&c, sigma, tau, n, adopted)?;
                z_model = z_model
                    .max(max_z(est.cov_b().as_slice(), m.cov_b.as_slice(), est.se_cov_b().as_slice()))
                    .max(max_z(est.cov_a().as_slice(), m.cov_a.as_slice(), est.se_cov_a().as_slice()));
                for (s_idx, sign) in [TauNSign::Minus, TauNSign::Plus].into_iter().enumerate() {
                    let m = sgd_full_moments(&c, sigma, tau, n, sign)?;
                    let mb = &m.breakdown_b.tau + &m.breakdown_b.tau_n * sign.value();
                    let ma = &m.breakdown_a.tau + &m.breakdown_a.tau_n * sign.value();
                    rem[s_idx].b.push((&within_b - mb).amax());
                    rem[s_idx].a.push((&within_a - ma).amax());
                }
            }
            checks.push(Check::at_most(format!("{label}: simulation vs exact oracle, max z"), z_oracle, 4.0, " SE"));
            checks.push(Check::at_most(format!("{label}: simulation vs three-term expansion, max z"), z_model, 4.0, " SE"));
            cells += 1;
            for (s_idx, sign) in [TauNSign::Minus, TauNSign::Plus].into_iter().enumerate() {
                let sb = loglog_slope(&taus, &rem[s_idx].b);
                let sa = loglog_slope(&taus, &rem[s_idx].a);
                favour[s_idx] += rem[s_idx].b.iter().chain(&rem[s_idx].a).sum::<f64>();
                shrinking[s_idx] += (sb > 1.0 && sa > 1.0) as usize;
                let name = format!("{label}: tau-remainder slope, {} sign", sign_name(sign));
                if sign == adopted {
                    checks.push(Check::greater(format!("{name}, Cov(b)"), sb, 1.0));
                    checks.push(Check::greater(format!("{name}, Cov(A)"), sa, 1.0));
                } else {
                    checks.push(Check::info(format!("{name}, Cov(b)"), sb));
                    checks.push(Check::info(format!("{name}, Cov(A)"), sa));
                }
            }
        }
    }
    notes.push(format!(
        "remainder slope > 1 for both Cov(b) and Cov(A) in {}/{cells} (d, N) cells with the minus sign, {}/{cells} with the plus sign",
        shrinking[0], shrinking[1]
    ));
    notes.push(format!(
        "summed remainder magnitudes: minus {:.4e}, plus {:.4e} (dominated by the O(tau^2) part at tau = 0.02)",
        favour[0], favour[1]
    ));
    notes.push(format!(
        "simulation budget: {chain_steps} steps per population chain; {datasets} datasets x {steps_per_dataset} steps per ensemble; {semi_datasets} datasets for the dataset-averaged oracle"
    ));
    Ok((checks, notes))
}

fn sign_name(s: TauNSign) -> &'static str {
    match s {
        TauNSign::Plus => "plus",
        TauNSign::Minus => "minus",
    }
}

fn criterion4(rep: &mut Report, budget: Budget) -> Outcome {
    let n_samples = match budget {
        Budget::Quick => 50_000,
        Budget::Full => 200_000,
    };
    let mut rng = stream(rep.seed_for("verify/4/cases"), "cases");
    let mut worst_z: f64 = 0.0;
    let mut cases = 0;
    for (d, with_mean) in [(1, true), (2, false), (2, true), (3, true)] {
        let c = random_spd(&mut rng, d);
        let sigma = 0.5 + rng.random::<f64>();
        let mu = if with_mean { normal_vector(&mut rng, d) } else { DVector::zeros(d) };
        for i in 0..d {
            for j in 0..d {
                let exact = noise_matrix_sigma_eps(&c, sigma, &mu, i, j)?;
                let seed = rep.seed_for(&format!("verify/4/oracle/d={d}/mean={with_mean}/{i}{j}"));
                let (mean, se) = isserlis_sigma_eps_oracle(&c, sigma, &mu, i, j, n_samples, seed)?;
                worst_z = worst_z.max(max_z(mean.as_slice(), exact.as_slice(), se.as_slice()));
                cases += 1;
            }
        }
    }
    let k_root = random_matrix(&mut rng, 3, 3) * 0.6;
    let r = normal_vector(&mut rng, 3) * 0.5;
    let s = random_matrix(&mut rng, 3, 3);
    let c = &k_root * k_root.transpose() + &r * r.transpose();
    let exact = isserlis_quartic(&c, &r, &s);
    let mut qrng = stream(rep.seed_for("verify/4/quartic"), "quartic");
    let (mean, se) = isserlis_quartic_oracle(&k_root, &r, &s, n_samples, &mut qrng);
    let z_quartic = max_z(mean.as_slice(), exact.as_slice(), se.as_slice());
    let mut worst_rel: f64 = 0.0;
    for _ in 0..50 {
        let d = 1 + (rng.random::<u32>() % 3) as usize;
        let c = random_spd(&mut rng, d);
        let sigma = 0.3 + rng.random::<f64>();
        let mu = normal_vector(&mut rng, d);
        for i in 0..d {
            for j in 0..d {
                let a = noise_matrix_sigma_eps(&c, sigma, &mu, i, j)?;
                let b = noise_matrix_four_term(&c, sigma, &mu, i, j)?;
                worst_rel = worst_rel.max((&a - &b).norm() / (1.0 + a.norm()));
            }
        }
    }
    Ok((
        vec![
            Check::at_most(format!("closed form vs sampling oracle, max z over {cases} (i,j) blocks"), worst_z, 4.0, " SE"),
            Check::at_most("fourth-moment identity vs sampling oracle, max z", z_quartic, 4.0, " SE"),
            Check::at_most("four-term assembly vs closed form, 50 cases", worst_rel, 1e-10, " relative"),
        ],
        vec![format!("{n_samples} samples per oracle")],
    ))
}

fn criterion5(rep: &mut Report) -> Outcome {
    let mut rng = stream(rep.seed_for("verify/5/cases"), "cases");
    let eps = log_grid(1e-3, 1e-1, 8);
    let (mut s_sqrt, mut s_bures, mut s_sigma) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for _ in 0..3 {
        let h0 = random_spd(&mut rng, 3);
        let h1 = symmetrize(&random_matrix(&mut rng, 3, 3));
        let h2 = symmetrize(&random_matrix(&mut rng, 3, 3));
        let (x0, x1, x2) = sqrt_taylor2(&h0, &h1)?;
        let rem: Vec<f64> =
            eps.iter().map(|&e| (psd_sqrt(&(h0.matrix() + &h1 * e)) - (&x0 + &x1 * e + &x2 * (e * e))).norm()).collect();
        s_sqrt = s_sqrt.min(loglog_slope(&eps, &rem));

        let sig = random_spd(&mut rng, 3);
        let (c0, c1, c2) = bures_taylor2(&sig, &h0, &h1, &h2)?;
        let rem = eps
            .iter()
            .map(|&e| {
                let h = SpdMatrix::new(symmetrize(&(h0.matrix() + &h1 * e + &h2 * (e * e))))?;
                Ok((bures_sq(&sig, &h) - (c0 + c1 * e + c2 * e * e)).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        s_bures = s_bures.min(loglog_slope(&eps, &rem));

        let c = random_spd(&mut rng, 3);
        let (sigma, gamma) = (0.5, 0.1);
        let delta = random_matrix(&mut rng, 3, 3);
        let (z0, z1, z2) = sigma_expansion(&c, sigma, gamma, &delta)?;
        let a_star = optimal_score(&c, sigma)?.a;
        let rem = eps
            .iter()
            .map(|&e| {
                let s = LinearScore::new(&a_star + &delta * e, DVector::zeros(3))?;
                let q = ula_stationary(&s, gamma)?;
                Ok((q.cov.matrix() - (&z0 + &z1 * e + &z2 * (e * e))).norm())
            })
            .collect::<Result<Vec<f64>>>()?;
        s_sigma = s_sigma.min(loglog_slope(&eps, &rem));
    }
    Ok((
        vec![
            Check::at_least("matrix square root expansion, min slope over 3 cases", s_sqrt, 2.7, ""),
            Check::at_least("Bures expansion, min slope over 3 cases", s_bures, 2.7, ""),
            Check::at_least("ULA covariance expansion, min slope over 3 cases", s_sigma, 2.7, ""),
        ],
        vec!["epsilon grid: 8 log-spaced points on [1e-3, 1e-1]".into()],
    ))
}

fn criterion6(rep: &mut Report, budget: Budget) -> Outcome {
    let pairs = match budget {
        Budget::Quick => 5000,
        Budget::Full => 50_000,
    };
    let mut rng = stream(rep.seed_for("verify/6/case"), "case");
    let spectrum = [1.0, 0.5];
    let c = random_spd_with_spectrum(&mut rng, &spectrum);
    let (sigma, gamma) = (0.7, 0.05);
    let law = perturbation_law_from_sgd(&spectrum, sigma, 0.02, SampleSize::Finite(200), TauNSign::Minus)?;
    let scale = 1.0 / law.m2.amax().max(law.cov_delta.amax());
    let law = PerturbationLaw { cov_delta: &law.cov_delta * scale, m2: &law.m2 * scale, m2x: &law.m2x * scale };
    let eps = [0.02, 0.01, 0.005];
    let mut checks = Vec::new();
    for flavor in [Flavor::Wasserstein, Flavor::L2] {
        let name = match flavor {
            Flavor::Wasserstein => "W2",
            Flavor::L2 => "L2",
        };
        let seed = rep.seed_for(&format!("verify/6/mc/{name}"));
        let pts = perturbation_mc(&c, sigma, gamma, &law, &eps, pairs, flavor, seed)?;
        let res: Vec<f64> = pts.iter().map(|p| p.residual()).collect();
        checks.push(Check::at_least(format!("{name}: residual slope in epsilon"), loglog_slope(&eps, &res), 2.5, ""));
        let z = pts.iter().map(|p| (p.mc_mean - p.model_true_law).abs() / p.mc_se).fold(0.0, f64::max);
        checks.push(Check::at_most(format!("{name}: MC vs model at the generating law, max z"), z, 4.0, " SE"));
    }
    Ok((checks, vec![format!("d=2, {} draws per epsilon as {pairs} antithetic pairs shared across epsilon", 2 * pairs)]))
}

fn criterion7(rep: &mut Report, budget: Budget, sign: TauNSign) -> Outcome {
    let outer = match budget {
        Budget::Quick => 200,
        Budget::Full => 4000,
    };
    let mut rng = stream(rep.seed_for("verify/7/internal"), "internal");
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = 1 + (rng.random::<u32>() % 4) as usize;
        let spec: Vec<f64> = (0..d).map(|_| 0.1 + 2.0 * rng.random::<f64>()).collect();
        let sigma = 0.2 + rng.random::<f64>();
        let lmax = spec.iter().cloned().fold(0.0, f64::max);
        let lmin = spec.iter().cloned().fold(f64::INFINITY, f64::min);
        let p = PipelineParams {
            sigma,
            tau: 0.5 * sgd_tau_bound(lmax, sigma) * rng.random::<f64>(),
            gamma: 0.9 * (lmin + sigma * sigma) * rng.random::<f64>(),
            n: 2 + rng.random::<u64>() % 5000,
        };
        let b = expected_pipeline_error(&spec, &p, sign)?;
        let law = perturbation_law_from_sgd(&spec, sigma, p.tau, SampleSize::Finite(p.n), sign)?;
        let t2 = expected_w2_perturbed(&spec, sigma, p.gamma, &law, 1.0, Flavor::Wasserstein)?;
        worst = worst.max((b.total - t2).abs() / t2.abs().max(1.0));
    }
    let mut rng = stream(rep.seed_for("verify/7/rotation"), "rotation");
    let q = random_orthogonal(&mut rng, 2);
    let c = SpdMatrix::new(symmetrize(&(&q * DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.5])) * q.transpose())))?;
    let params = PipelineParams { sigma: 0.5, tau: 5e-3, gamma: 0.01, n: 200 };
    let nested = pipeline_nested_mc(&c, &params, outer, rep.seed_for("verify/7/nested"), UlaMode::Exact, sign)?;
    Ok((
        vec![
            Check::at_most("pipeline formula vs perturbation formula on the SGD law, 20 draws", worst, 1e-10, " relative"),
            Check::at_most("nested MC vs formula, |z|", nested.z.abs(), 4.0, " SE"),
            Check::info("nested MC mean", nested.mc_mean),
            Check::info("nested MC standard error", nested.mc_se),
            Check::info("formula total", nested.formula.total),
        ],
        vec![format!(
            "spectrum {{1, 0.5}} in a random basis, sigma=0.5, tau=5e-3, gamma=0.01, N=200, {outer} outer draws, {} ULA-unstable draws",
            nested.unstable_draws
        )],
    ))
}

fn criterion8(sign: TauNSign) -> Outcome {
    let spec = [1.0, 0.5, 0.25];
    let grid = log_grid(0.05, 5.0, 40);
    let scan = sigma_tradeoff_scan(&spec, 1e-3, 1e-2, 1000, &grid, sign)?;
    let rows: Vec<_> = scan.rows.iter().filter_map(|r| r.breakdown).collect();
    let k = scan.grid_argmin;
    let mut checks = vec![Check::flag("grid minimum is interior", scan.interior)];
    if scan.interior {
        let t = |i: usize| scan.rows[i].breakdown.map_or(f64::INFINITY, |b| b.total);
        let margin = scan.total_star - t(k - 1).min(t(k + 1));
        checks.push(Check::at_most("refined total minus smaller grid neighbour", margin, 0.0, ""));
    }
    let inc0 = rows.windows(2).all(|w| w[1].term0 >= w[0].term0);
    checks.push(Check::flag("term0 nondecreasing in sigma over the grid", inc0));
    let left = &rows[..=k.min(rows.len() - 1)];
    checks.push(Check::flag(
        "term_tau decreasing in sigma up to the grid minimum",
        left.windows(2).all(|w| w[1].term_tau < w[0].term_tau),
    ));
    let all_tau = rows.windows(2).all(|w| w[1].term_tau < w[0].term_tau);
    let n_dec = rows.windows(2).all(|w| w[1].term_n <= w[0].term_n);
    let tn_dec = rows.windows(2).all(|w| w[1].term_tau_n.abs() <= w[0].term_tau_n.abs());
    checks.push(Check::info("term_tau decreasing over the whole grid (1 = yes)", all_tau as u8 as f64));
    checks.push(Check::info("term_N nonincreasing over the whole grid (1 = yes)", n_dec as u8 as f64));
    checks.push(Check::info("|term_tauN| nonincreasing over the whole grid (1 = yes)", tn_dec as u8 as f64));
    checks.push(Check::info("sigma*", scan.sigma_star));
    checks.push(Check::info("total at sigma*", scan.total_star));
    let (n_lo, n_hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.term_n), b.max(r.term_n)));
    Ok((
        checks,
        vec![format!("term_N ranges over [{n_lo:.4e}, {n_hi:.4e}] on the grid; 40 log-spaced sigma in [0.05, 5]")],
    ))
}

fn criterion9(rep: &mut Report, sign: TauNSign) -> Outcome {
    let mut cfg = rep.config.clone();
    cfg.mode = super::config::Mode::Verify;
    cfg.verify = super::config::VerifySection { budget: Budget::Quick, only: (1..=8).collect() };
    let run_once = || {
        let mut r = Report::new(&cfg);
        r.suites = run_suites(&mut r, Budget::Quick, &cfg.verify.only, sign);
        r.to_json()
    };
    let a = run_once();
    let b = run_once();
    let same = a == b;
    Ok((
        vec![Check::flag("two quick verify runs produce byte-identical reports", same)],
        vec![format!("compared {} bytes of JSON", a.len())],
    ))
}
