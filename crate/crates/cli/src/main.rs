use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use usf_core::harness::identities::run_identities;
use usf_core::harness::{self, ExperimentReport, RunConfig, RunManifest, Verdict};
use usf_core::kernel::{derive_constants, derive_constants_quadrature, KernelFamily, KernelSpec};
use usf_core::spectral::{beta_cubic_residual, EigenSystem, ShearParams};

#[derive(Parser)]
#[command(name = "usf", version, about = "Uniform shear flow kinetics: constants, spectra, DSMC runs and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// grad_cutoff, constant or even_poly
    #[arg(long, default_value = "grad_cutoff")]
    family: KernelFamily,
    /// Comma-separated coefficients
    #[arg(long, value_delimiter = ',', default_value = "1")]
    coeffs: Vec<f64>,
}

impl KernelArgs {
    fn kernel(&self) -> Result<KernelSpec> {
        Ok(KernelSpec::new(self.family, self.coeffs.clone())?)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Single-threaded execution
    #[arg(long)]
    reproducible: bool,
    /// Time-series CSV path; overrides `output.path`
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Collision constants of an angular kernel
    Constants {
        #[command(flatten)]
        kernel: KernelArgs,
    },
    /// Energy growth exponent for a shear rate
    Beta {
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        kernel: KernelArgs,
    },
    /// Eigenvalues and long-time projector of the moment matrix
    Spectrum {
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        kernel: KernelArgs,
    },
    /// Algebraic and Monte Carlo identity checks
    Identities {
        #[arg(long, default_value_t = 10_000_000)]
        n_pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a DSMC simulation and write its time series
    Simulate(RunArgs),
    /// Run an unmodulated configuration and check the moment dynamics
    VerifyHomogeneous(RunArgs),
    /// Run a modulated configuration and check mode decay and Duhamel predictions
    VerifyInhomogeneous(RunArgs),
    /// Rebuild fits and the energy-growth table from a finished run's CSV
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

fn verdict_exit(verdicts: &[Verdict]) -> ExitCode {
    for v in verdicts {
        eprintln!("{v}");
    }
    if verdicts.iter().all(|v| v.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn shear_params(alpha: f64, kernel: &KernelSpec) -> Result<ShearParams> {
    let c = derive_constants(kernel);
    c.require_nondegenerate()?;
    Ok(ShearParams::new(alpha, c.b0)?)
}

fn csv_target(args_csv: Option<&Path>, config: &RunConfig) -> Option<PathBuf> {
    args_csv.map(Path::to_path_buf).or_else(|| config.output_path.clone())
}

fn run_and_report(args: &RunArgs, homogeneous: bool) -> Result<ExitCode> {
    let config = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    let (report, output): (ExperimentReport, _) = if homogeneous {
        harness::verify_homogeneous(&config.sim, args.reproducible)?
    } else {
        harness::verify_inhomogeneous(&config.sim, args.reproducible)?
    };
    let manifest = match csv_target(args.csv.as_deref(), &config) {
        Some(path) => Some(harness::write_run(&config, &output, args.reproducible, &path)?),
        None => None,
    };
    emit(&json!({ "report": report, "manifest": manifest }), args.out.as_deref())?;
    Ok(verdict_exit(&report.verdicts))
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Constants { kernel } => {
            let k = kernel.kernel()?;
            emit(
                &json!({
                    "family": k.family().to_string(),
                    "coeffs": k.coeffs(),
                    "closed_form": derive_constants(&k),
                    "quadrature": derive_constants_quadrature(&k),
                }),
                None,
            )?;
        }
        Command::Beta { alpha, kernel } => {
            let p = shear_params(alpha, &kernel.kernel()?)?;
            emit(
                &json!({
                    "alpha": p.alpha,
                    "b0": p.b0,
                    "beta": p.beta,
                    "beta_linearized": p.beta_linearized(),
                    "cubic_residual": beta_cubic_residual(p.beta, p.alpha, p.b0),
                }),
                None,
            )?;
        }
        Command::Spectrum { alpha, kernel } => {
            let p = shear_params(alpha, &kernel.kernel()?)?;
            let eig = EigenSystem::new(&p)?;
            let s_inf = eig.limit_semigroup();
            let rows: Vec<[f64; 3]> = (0..3).map(|i| [s_inf[(i, 0)], s_inf[(i, 1)], s_inf[(i, 2)]]).collect();
            emit(
                &json!({
                    "alpha": p.alpha,
                    "b0": p.b0,
                    "beta": p.beta,
                    "lambda2_re": eig.eigenvalues[1].re,
                    "lambda2_im": eig.eigenvalues[1].im,
                    "spectral_gap": eig.spectral_gap,
                    "eigenvector_condition": eig.condition_number(),
                    "S_infinity": rows,
                }),
                None,
            )?;
        }
        Command::Identities { n_pairs, seed, out } => {
            let verdicts = run_identities(n_pairs, seed)?;
            let passed = verdicts.iter().all(|v| v.passed);
            emit(&json!({ "verdicts": verdicts, "all_passed": passed }), out.as_deref())?;
            return Ok(verdict_exit(&verdicts));
        }
        Command::Simulate(args) => {
            let config = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
            let output = if args.reproducible {
                usf_core::dsmc::run_reproducible(&config.sim)?
            } else {
                usf_core::dsmc::run(&config.sim)?
            };
            match csv_target(args.csv.as_deref(), &config) {
                Some(path) => {
                    let manifest = harness::write_run(&config, &output, args.reproducible, &path)?;
                    emit(&serde_json::to_value(&manifest)?, args.out.as_deref())?;
                }
                None => {
                    let manifest = RunManifest::new(&config, &output, args.reproducible, None);
                    emit(&json!({ "manifest": manifest, "records": output.records }), args.out.as_deref())?;
                }
            }
        }
        Command::VerifyHomogeneous(args) => return run_and_report(&args, true),
        Command::VerifyInhomogeneous(args) => return run_and_report(&args, false),
        Command::Report { config, csv, out } => {
            let run_config = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let Some(path) = csv_target(csv.as_deref(), &run_config) else {
                bail!("no CSV given: pass --csv or set output.path in the config");
            };
            let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let rows = harness::read_csv(file)?;
            let report = harness::report_from_rows(&run_config.sim, &rows)?;
            emit(&serde_json::to_value(&report)?, out.as_deref())?;
            return Ok(verdict_exit(&report.verdicts));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
