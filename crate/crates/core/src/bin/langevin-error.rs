use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use langevin_error::harness::config::{parse_unvalidated, Budget, DataMode, SpectrumSpec};
use langevin_error::harness::{run, ConfigError, ExperimentConfig, Mode, OutputFormat};
use langevin_error::score_theory::TauNSign;

#[derive(Parser, Debug)]
#[command(name = "langevin-error", version, about = "Error analysis of SGD-trained linear scores sampled with ULA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated eigenvalues of the data covariance.
    #[arg(long, global = true, value_delimiter = ',')]
    spectrum: Option<Vec<f64>>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Dataset size N.
    #[arg(short = 'N', long = "N", global = true)]
    n: Option<u64>,
    #[arg(long, global = true, value_enum)]
    tau_n_sign: Option<Sign>,
    #[arg(long, global = true)]
    n_steps: Option<u64>,
    #[arg(long, global = true)]
    burn_in: Option<u64>,
    #[arg(long, global = true)]
    thinning: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<u32>,
    #[arg(long, global = true, value_enum)]
    data: Option<Data>,
    #[arg(long, global = true)]
    datasets: Option<usize>,
    #[arg(long, global = true, value_enum)]
    budget: Option<BudgetArg>,
    /// Comma-separated criteria to verify.
    #[arg(long, global = true, value_delimiter = ',')]
    only: Option<Vec<u8>>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Closed-form error breakdown at one parameter point.
    Theory,
    /// Simulate the SGD chain and compare its moments with theory.
    SimulateSgd,
    /// Simulate ULA at the optimal score and compare with its stationary law.
    SimulateUla,
    /// Run the verification suites.
    Verify,
    /// Closed-form breakdown over a parameter grid.
    Sweep,
    /// Scan sigma and refine the optimum.
    SigmaOpt,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Sign {
    Plus,
    Minus,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Data {
    Population,
    Dataset,
    Ensemble,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BudgetArg {
    Quick,
    Full,
}

impl Cli {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.mode = match self.command {
            Command::Theory => Mode::Theory,
            Command::SimulateSgd => Mode::SimulateSgd,
            Command::SimulateUla => Mode::SimulateUla,
            Command::Verify => Mode::Verify,
            Command::Sweep => Mode::Sweep,
            Command::SigmaOpt => Mode::SigmaOpt,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.display().to_string());
        }
        if let Some(f) = self.format {
            cfg.format = match f {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if let Some(s) = &self.spectrum {
            cfg.spectrum = SpectrumSpec::Explicit(s.clone());
        }
        let p = &mut cfg.params;
        self.sigma.inspect(|v| p.sigma = *v);
        self.tau.inspect(|v| p.tau = *v);
        self.gamma.inspect(|v| p.gamma = *v);
        self.n.inspect(|v| p.n = *v);
        if let Some(s) = self.tau_n_sign {
            cfg.tau_n_sign = match s {
                Sign::Plus => TauNSign::Plus,
                Sign::Minus => TauNSign::Minus,
            };
        }
        let ch = &mut cfg.chain;
        self.n_steps.inspect(|v| ch.n_steps = *v);
        if self.burn_in.is_some() {
            ch.burn_in = self.burn_in;
        }
        self.thinning.inspect(|v| ch.thinning = *v);
        self.replicas.inspect(|v| ch.replicas = *v);
        if let Some(d) = self.data {
            cfg.simulate.data = match d {
                Data::Population => DataMode::Population,
                Data::Dataset => DataMode::Dataset,
                Data::Ensemble => DataMode::Ensemble,
            };
        }
        self.datasets.inspect(|v| cfg.simulate.datasets = *v);
        if let Some(b) = self.budget {
            cfg.verify.budget = match b {
                BudgetArg::Quick => Budget::Quick,
                BudgetArg::Full => Budget::Full,
            };
        }
        if let Some(o) = &self.only {
            cfg.verify.only = o.clone();
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_unvalidated(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    cli.apply(&mut cfg);
    cfg.validate().map_err(|e: ConfigError| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let start = std::time::Instant::now();
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            return ExitCode::from(3);
        }
    };
    for s in &report.suites {
        eprintln!("{}", s.line());
    }
    for n in &report.notes {
        eprintln!("note: {n}");
    }
    eprintln!("elapsed: {:.2} s", start.elapsed().as_secs_f64());
    let text = match cfg.format {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => report.to_json(),
    };
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {path}: {e}");
                return ExitCode::from(3);
            }
        }
        None => print!("{text}"),
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
