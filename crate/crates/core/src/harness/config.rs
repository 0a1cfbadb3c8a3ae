//! TOML experiment configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::PipelineParams;
use crate::score_theory::{sgd_tau_bound, TauNSign};
use crate::sgd_sim::ChainConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Theory,
    SimulateSgd,
    SimulateUla,
    Verify,
    Sweep,
    SigmaOpt,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Theory => "theory",
            Mode::SimulateSgd => "simulate-sgd",
            Mode::SimulateUla => "simulate-ula",
            Mode::Verify => "verify",
            Mode::Sweep => "sweep",
            Mode::SigmaOpt => "sigma-opt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// `λ_k = scale · k^(-exponent)` for `k = 1..=d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub d: usize,
    pub exponent: f64,
    #[serde(default = "one_f64")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumSpec {
    Explicit(Vec<f64>),
    PowerLaw { power_law: PowerLaw },
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        SpectrumSpec::Explicit(vec![1.0])
    }
}

impl SpectrumSpec {
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self {
            SpectrumSpec::Explicit(v) => v.clone(),
            SpectrumSpec::PowerLaw { power_law: p } => {
                (1..=p.d).map(|k| p.scale * (k as f64).powf(-p.exponent)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(default = "one_f64")]
    pub sigma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(rename = "N", default = "default_n")]
    pub n: u64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self { sigma: 1.0, tau: default_tau(), gamma: default_gamma(), n: default_n() }
    }
}

impl ParamsSection {
    pub fn pipeline(&self) -> PipelineParams {
        PipelineParams { sigma: self.sigma, tau: self.tau, gamma: self.gamma, n: self.n }
    }
}

/// Chain budget; seeds come from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default = "default_steps")]
    pub n_steps: u64,
    #[serde(default = "one_u64")]
    pub thinning: u64,
    #[serde(default = "one_u32")]
    pub replicas: u32,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self { burn_in: None, n_steps: default_steps(), thinning: 1, replicas: 1 }
    }
}

impl ChainSection {
    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            burn_in: self.burn_in,
            n_steps: self.n_steps,
            thinning: self.thinning,
            seed,
            replicas: self.replicas,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    /// Fresh samples from the population law.
    #[default]
    Population,
    /// One fixed dataset of size `N`.
    Dataset,
    /// Pooled over many datasets of size `N`.
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default)]
    pub data: DataMode,
    #[serde(default = "default_datasets")]
    pub datasets: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { data: DataMode::Population, datasets: default_datasets() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisName {
    Sigma,
    Tau,
    Gamma,
    #[serde(rename = "N")]
    N,
}

/// Either explicit values or a log-spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Log { log: LogGrid },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Log { log } if log.points == 1 => vec![log.lo],
            Grid::Log { log } => crate::gaussian_metrics::log_grid(log.lo, log.hi, log.points),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: AxisName,
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaOptSection {
    pub grid: Grid,
}

impl Default for SigmaOptSection {
    fn default() -> Self {
        Self { grid: Grid::Log { log: LogGrid { lo: 0.05, hi: 5.0, points: 40 } } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    #[default]
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub budget: Budget,
    /// Criteria to run; empty means all.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub only: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub tau_n_sign: TauNSign,
    #[serde(default)]
    pub spectrum: SpectrumSpec,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub sigma_opt: SigmaOptSection,
    #[serde(default)]
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Theory,
            seed: 0,
            out: None,
            format: OutputFormat::Csv,
            threads: None,
            tau_n_sign: TauNSign::Minus,
            spectrum: SpectrumSpec::default(),
            params: ParamsSection::default(),
            chain: ChainSection::default(),
            simulate: SimulateSection::default(),
            sweep: SweepSection::default(),
            sigma_opt: SigmaOptSection::default(),
            verify: VerifySection::default(),
        }
    }
}

fn one_f64() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn one_u32() -> u32 {
    1
}
fn default_tau() -> f64 {
    1e-3
}
fn default_gamma() -> f64 {
    1e-2
}
fn default_n() -> u64 {
    10_000
}
fn default_steps() -> u64 {
    1_000_000
}
fn default_datasets() -> usize {
    300
}

impl ExperimentConfig {
    pub fn spectrum(&self) -> Vec<f64> {
        self.spectrum.eigenvalues()
    }

    /// Every violated invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let spec = self.spectrum();
        if let SpectrumSpec::PowerLaw { power_law: p } = &self.spectrum {
            if p.d == 0 {
                v.push("spectrum.power_law.d must be at least 1".into());
            }
            if !p.exponent.is_finite() {
                v.push("spectrum.power_law.exponent must be finite".into());
            }
            if !(p.scale > 0.0) || !p.scale.is_finite() {
                v.push("spectrum.power_law.scale must be positive".into());
            }
        }
        if spec.is_empty() {
            v.push("spectrum must be nonempty".into());
        }
        if spec.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            v.push("spectrum entries must be positive and finite".into());
        }
        let valid_spec = v.is_empty();
        if self.seed > i64::MAX as u64 {
            v.push(format!("seed = {} must be at most {}", self.seed, i64::MAX));
        }
        if self.threads == Some(0) {
            v.push("threads must be at least 1".into());
        }
        let chain = self.chain.chain_config(0);
        v.extend(chain.violations());
        match self.mode {
            Mode::Theory => {
                if valid_spec {
                    v.extend(self.params.pipeline().violations(&spec));
                }
            }
            Mode::SimulateSgd => {
                if valid_spec {
                    v.extend(sgd_violations(&spec, self.params.sigma, self.params.tau));
                }
                if self.simulate.data != DataMode::Population && self.params.n < 2 {
                    v.push(format!("N = {} must be at least 2", self.params.n));
                }
                if self.simulate.data == DataMode::Ensemble && self.simulate.datasets < crate::stats::N_BATCHES {
                    v.push(format!("simulate.datasets must be at least {}", crate::stats::N_BATCHES));
                }
            }
            Mode::SimulateUla => {
                if !(self.params.sigma >= 0.0) {
                    v.push(format!("sigma = {} must be nonnegative", self.params.sigma));
                }
                if !(self.params.gamma > 0.0) {
                    v.push(format!("gamma = {} must be positive", self.params.gamma));
                } else if valid_spec && self.params.sigma >= 0.0 {
                    let law = crate::matrixkit::SpdMatrix::diagonal(&spec)
                        .and_then(|c| crate::score_theory::optimal_score(&c, self.params.sigma))
                        .and_then(|score| crate::langevin::ula_stationary(&score, self.params.gamma));
                    if let Err(e) = law {
                        v.push(e.to_string());
                    }
                }
            }
            Mode::Verify => {
                if let Some(k) = self.verify.only.iter().find(|k| !(1..=9).contains(*k)) {
                    v.push(format!("verify.only contains {k}; criteria are numbered 1 to 9"));
                }
            }
            Mode::Sweep => {
                if self.sweep.axes.is_empty() {
                    v.push("sweep.axes must name at least one axis".into());
                }
                let mut seen = Vec::new();
                for a in &self.sweep.axes {
                    if seen.contains(&a.name) {
                        v.push(format!("sweep axis {:?} listed twice", a.name));
                    }
                    seen.push(a.name);
                    v.extend(grid_violations(&format!("sweep axis {:?}", a.name), &a.grid));
                    if a.name == AxisName::N {
                        for x in a.grid.values() {
                            if x.fract() != 0.0 || x < 2.0 {
                                v.push(format!("sweep axis N value {x} must be an integer at least 2"));
                            }
                        }
                    }
                }
            }
            Mode::SigmaOpt => {
                v.extend(grid_violations("sigma_opt.grid", &self.sigma_opt.grid));
                let p = self.params;
                if valid_spec {
                    let lmax = spec.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    if !(p.tau > 0.0) {
                        v.push(format!("tau = {} must be positive", p.tau));
                    } else if p.tau >= sgd_tau_bound(lmax, 0.0) {
                        v.push(format!(
                            "tau = {} violates the SGD stepsize bound 2/max(max_k λ_k + σ², 1) for every σ",
                            p.tau
                        ));
                    }
                    if !(p.gamma > 0.0) {
                        v.push(format!("gamma = {} must be positive", p.gamma));
                    }
                }
                if p.n < 2 {
                    v.push(format!("N = {} must be at least 2", p.n));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(v))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn sgd_violations(spec: &[f64], sigma: f64, tau: f64) -> Vec<String> {
    let mut v = Vec::new();
    if !(sigma > 0.0) {
        v.push(format!("sigma = {sigma} must be positive"));
        return v;
    }
    let lmax = spec.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bound = sgd_tau_bound(lmax, sigma);
    if !(tau > 0.0) || tau >= bound {
        v.push(format!("tau = {tau} violates the SGD stepsize bound 2/max(max_k λ_k + σ², 1) = {bound}"));
    }
    v
}

fn grid_violations(name: &str, grid: &Grid) -> Vec<String> {
    let mut v = Vec::new();
    if let Grid::Log { log } = grid {
        if !(log.lo > 0.0 && log.hi >= log.lo && log.hi.is_finite()) {
            v.push(format!("{name}: log grid needs 0 < lo <= hi"));
            return v;
        }
        if log.points == 0 {
            v.push(format!("{name}: log grid needs at least one point"));
        }
    }
    let vals = grid.values();
    if vals.is_empty() {
        v.push(format!("{name}: grid must be nonempty"));
    }
    if vals.iter().any(|x| !x.is_finite()) {
        v.push(format!("{name}: grid values must be finite"));
    }
    v
}

/// Parses and validates a TOML config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg = parse_unvalidated(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses without checking numeric invariants.
pub fn parse_unvalidated(text: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str::<ExperimentConfig>(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        ConfigError::Parse { line, column, message: e.message().to_string() }
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_valid() {
        let cfg = parse_config("spectrum = [1.0]\n").unwrap();
        assert_eq!(cfg.mode, Mode::Theory);
        assert_eq!(cfg.params.n, 10_000);
        assert_eq!(cfg.spectrum(), vec![1.0]);
    }

    #[test]
    fn tau_bound_is_named() {
        let err = parse_config("spectrum = [1.0]\n[params]\ntau = 1.5\n").unwrap_err();
        let ConfigError::Validation(v) = err else { panic!("{err:?}") };
        assert!(v.iter().any(|m| m.contains("2/max(max_k λ_k + σ², 1)")));
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let err = parse_config("spectrum = [1.0]\n[params]\nsigmaa = 1.0\n").unwrap_err();
        match err {
            ConfigError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("sigmaa"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported() {
        let err = parse_config("spectrum = [1.0]\nthreads = 0\n[params]\ntau = 5.0\ngamma = 9.0\nN = 1\n").unwrap_err();
        let ConfigError::Validation(v) = err else { panic!() };
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn power_law_and_grids() {
        let cfg = parse_config(
            "mode = \"sweep\"\n[spectrum.power_law]\nd = 3\nexponent = 1.0\n[[sweep.axes]]\nname = \"sigma\"\ngrid = { log = { lo = 0.1, hi = 1.0, points = 3 } }\n[[sweep.axes]]\nname = \"N\"\ngrid = [100, 1000]\n",
        )
        .unwrap();
        assert_eq!(cfg.spectrum(), vec![1.0, 0.5, 1.0 / 3.0]);
        assert_eq!(cfg.sweep.axes[1].grid.values(), vec![100.0, 1000.0]);
        assert!(parse_config("mode = \"sweep\"\n").is_err());
    }
}
