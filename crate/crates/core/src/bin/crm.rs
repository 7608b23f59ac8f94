//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for invalid input or usage, 2 for numerical
//! failures (non-finite likelihood, optimizer non-convergence).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crm_core::copula_density::{log_density, log_density_independent};
use crm_core::dependence::{build_sigma, is_positive_definite, FrequencyVector, ThetaParams};
use crm_core::estimate::{fit_from_template, rho_inference, rho_inference_from, FitResult, ModelVariant,
    ParameterEstimate,
};
use crm_core::io::{
    comparison_csv, comparison_report, estimates_csv, fit_report, load_portfolio, predictions_csv, rho_report,
    summarize, summary_by_year_csv, summary_report, summary_severity_csv, write_portfolio, RunConfig,
};
use crm_core::model::{CopulaFamily, ModelParams};
use crm_core::portfolio::{PolicyHistory, PolicyYear, YearClaim};
use crm_core::quadrature::QuadratureRule;
use crm_core::simulate::{simulate_portfolio, ScenarioConfig};
use crm_core::validate::{nested_model_comparison, predict_aggregate_loss, split_holdout, HoldoutRow};
use crm_core::{CrmError, Result};

/// Environment variable holding the default worker-thread count.
const THREADS_ENV: &str = "CRM_THREADS";

#[derive(Parser)]
#[command(name = "crm", version, about = "Multi-year collective risk model with copula dependence")]
struct Cli {
    /// Worker threads [default: $CRM_THREADS, else all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Policy-year CSV (policy_id,year,count,covariates...)
    #[arg(long)]
    policy_years: PathBuf,
    /// Claims CSV (policy_id,year,claim_index,amount)
    #[arg(long)]
    claims: PathBuf,
    /// JSON run configuration [default: intercept-only Poisson/Weibull, Gaussian copula]
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a portfolio and write it as two CSV files
    Simulate {
        /// Reference scenario 1-8 (500 policies, 3 years, lambda 2, xi exp(8), nu 0.7)
        #[arg(long)]
        scenario: Option<usize>,
        /// JSON run configuration whose "simulation" entry gives the scenario
        #[arg(long)]
        config: Option<PathBuf>,
        /// RNG seed [default: from the scenario]
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of policies
        #[arg(long)]
        policies: Option<usize>,
        /// Override the number of years
        #[arg(long)]
        years: Option<usize>,
        /// Use a t copula with these degrees of freedom
        #[arg(long)]
        nu_df: Option<f64>,
        /// Output directory for policy_years.csv and claims.csv
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the model; writes <out>.txt, <out>.csv and <out>.json
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// full | no_within_year | no_shared | independent [default: from config]
        #[arg(long)]
        variant: Option<String>,
        /// Output path prefix
        #[arg(long)]
        out: PathBuf,
    },
    /// Latent correlations with delta-method standard errors
    Rho {
        /// Fit result JSON written by `fit`
        #[arg(long, conflicts_with = "theta")]
        fit: Option<PathBuf>,
        /// Loadings theta1,theta2,theta3,theta4 (no standard errors)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        /// Write <out>.txt and <out>.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict hold-out aggregate losses from a fitted model
    Predict {
        #[command(flatten)]
        data: DataArgs,
        /// Fit result JSON written by `fit`
        #[arg(long)]
        fit: PathBuf,
        /// Hold-out year [default: config split.test_year]
        #[arg(long)]
        year: Option<i64>,
        /// Monte Carlo draws per policy [default: config prediction.samples]
        #[arg(long)]
        samples: Option<usize>,
        /// RNG seed [default: config seed]
        #[arg(long)]
        seed: Option<u64>,
        /// CSV of policy_id,actual,predicted
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit nested models on the training years and compare hold-out errors
    Validate {
        #[command(flatten)]
        data: DataArgs,
        /// Hold-out year [default: config split.test_year]
        #[arg(long)]
        year: Option<i64>,
        /// Comma-separated variants [default: all four]
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        /// Monte Carlo draws per policy [default: config prediction.samples]
        #[arg(long)]
        samples: Option<usize>,
        /// RNG seed [default: config seed]
        #[arg(long)]
        seed: Option<u64>,
        /// Writes <out>.txt, <out>.csv and <out>_predictions.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint density of one claim history
    Density {
        /// JSON history: a policy history object or {"years": [[amounts...], ...]}
        #[arg(long)]
        history: PathBuf,
        /// JSON model parameters or a fit result
        #[arg(long)]
        params: PathBuf,
        /// Quadrature nodes for the shared factor
        #[arg(long, default_value_t = 64)]
        factor_nodes: usize,
        /// Quadrature nodes for the t-copula mixing variable
        #[arg(long, default_value_t = 32)]
        mixing_nodes: usize,
    },
    /// Admissibility and positive definiteness of the correlation matrix
    Pdcheck {
        /// Loadings theta1,theta2,theta3,theta4
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        theta: Vec<f64>,
        /// Claim counts per year
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Frequency-by-year and severity-by-frequency tables
    Summarize {
        #[command(flatten)]
        data: DataArgs,
        /// Also write <out>_by_year.csv and <out>_severity.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CrmError::Config(format!("{THREADS_ENV}='{v}' is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads.filter(|n| *n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CrmError::Config(e.to_string()))?;
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| {
        CrmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CrmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    serde_json::from_str(&text).map_err(|e| CrmError::Config(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ParamsInput {
    Fit(Box<FitResult>),
    Params(ModelParams),
}

impl ParamsInput {
    fn params(self) -> ModelParams {
        match self {
            ParamsInput::Fit(f) => f.estimates,
            ParamsInput::Params(p) => p,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HistoryInput {
    Full(PolicyHistory),
    Amounts {
        #[serde(default = "default_policy_id")]
        policy_id: String,
        years: Vec<Vec<f64>>,
    },
}

fn default_policy_id() -> String {
    "1".into()
}

impl HistoryInput {
    fn history(self) -> PolicyHistory {
        match self {
            HistoryInput::Full(h) => h,
            HistoryInput::Amounts { policy_id, years } => PolicyHistory {
                policy_id,
                years: years
                    .into_iter()
                    .enumerate()
                    .map(|(i, a)| PolicyYear::intercept_only(i as i64 + 1, YearClaim::new(a)))
                    .collect(),
            },
        }
    }
}

fn theta_arg(values: &[f64]) -> Result<ThetaParams> {
    match values {
        [a, b, c, d] => Ok(ThetaParams::new(*a, *b, *c, *d)),
        _ => Err(CrmError::InvalidArgument(format!(
            "--theta needs 4 comma-separated values, got {}",
            values.len()
        ))),
    }
}

fn holdout_year(flag: Option<i64>, cfg: &RunConfig) -> Result<i64> {
    flag.or(cfg.split.test_year).ok_or_else(|| {
        CrmError::InvalidArgument("no hold-out year: pass --year or set split.test_year in the config".into())
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            scenario,
            config,
            seed,
            policies,
            years,
            nu_df,
            out_dir,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut sc = match (scenario, cfg.simulation.clone()) {
                (Some(k), _) => ScenarioConfig::reference(k)?,
                (None, Some(s)) => s,
                (None, None) => {
                    return Err(CrmError::InvalidArgument(
                        "--scenario is required unless the config has a \"simulation\" entry".into(),
                    ))
                }
            };
            if let Some(s) = seed {
                sc.seed = s;
            }
            if let Some(p) = policies {
                sc.policies = p;
            }
            if let Some(t) = years {
                sc.years = t;
            }
            if let Some(nu) = nu_df {
                sc.copula = CopulaFamily::T { nu_df: nu };
            }
            let sim = simulate_portfolio(&sc, false)?;
            std::fs::create_dir_all(&out_dir)?;
            let (py, cl) = (out_dir.join("policy_years.csv"), out_dir.join("claims.csv"));
            write_portfolio(&sim.portfolio, &py, &cl)?;
            println!(
                "simulated {} policies x {} years, {} claims -> {}, {}",
                sc.policies,
                sc.years,
                sim.portfolio.total_claims(),
                py.display(),
                cl.display()
            );
        }
        Command::Fit { data, variant, out } => {
            let mut cfg = load_config(data.config.as_deref())?;
            if let Some(v) = variant {
                cfg.variant = ModelVariant::from_name(&v)?;
            }
            let mut portfolio = load_portfolio(&data.policy_years, &data.claims, &cfg)?;
            if let Some(y) = cfg.split.test_year {
                portfolio = portfolio.filter_years(|t| t != y);
            }
            let fit = fit_from_template(&portfolio, &cfg.template(&portfolio), &cfg.fit_options())?;
            let report = fit_report(&fit);
            write(&with_suffix(&out, ".txt"), &report)?;
            write(&with_suffix(&out, ".csv"), &estimates_csv(&fit.parameters)?)?;
            write(&with_suffix(&out, ".json"), &serde_json::to_string_pretty(&fit)?)?;
            print!("{report}");
        }
        Command::Rho { fit, theta, out } => {
            let inference = match (fit, theta) {
                (Some(path), _) => rho_inference(&read_json::<FitResult>(&path)?)?,
                (None, Some(t)) => {
                    let theta = theta_arg(&t)?;
                    if !theta.is_admissible() {
                        return Err(CrmError::Inadmissible(theta));
                    }
                    let mut inf = rho_inference_from(&theta, &[[0.0; 4]; 4]);
                    for r in &mut inf.rows {
                        *r = ParameterEstimate::new(r.name.clone(), r.estimate, None);
                    }
                    inf
                }
                (None, None) => return Err(CrmError::InvalidArgument("pass --fit or --theta".into())),
            };
            let report = rho_report(&inference);
            if let Some(out) = out {
                write(&with_suffix(&out, ".txt"), &report)?;
                write(&with_suffix(&out, ".csv"), &estimates_csv(&inference.rows)?)?;
            }
            print!("{report}");
        }
        Command::Predict {
            data,
            fit,
            year,
            samples,
            seed,
            out,
        } => {
            let cfg = load_config(data.config.as_deref())?;
            let fit: FitResult = read_json(&fit)?;
            let portfolio = load_portfolio(&data.policy_years, &data.claims, &cfg)?;
            let (_, rows) = split_holdout(&portfolio, holdout_year(year, &cfg)?);
            let mut pc = cfg.prediction_config();
            pc.variant = fit.variant;
            if let Some(s) = samples {
                pc.samples = s;
            }
            if let Some(s) = seed {
                pc.seed = s;
            }
            let preds = predict_aggregate_loss(&rows, &fit.estimates, &pc)?;
            write(&out, &predictions_csv(&rows, &preds)?)?;
            println!("predicted {} hold-out policy-years -> {}", rows.len(), out.display());
        }
        Command::Validate {
            data,
            year,
            variants,
            samples,
            seed,
            out,
        } => {
            let cfg = load_config(data.config.as_deref())?;
            let portfolio = load_portfolio(&data.policy_years, &data.claims, &cfg)?;
            let (train, rows): (_, Vec<HoldoutRow>) = split_holdout(&portfolio, holdout_year(year, &cfg)?);
            let variants = match variants {
                Some(v) => v.iter().map(|n| ModelVariant::from_name(n)).collect::<Result<Vec<_>>>()?,
                None => ModelVariant::ALL.to_vec(),
            };
            let mut pc = cfg.prediction_config();
            if let Some(s) = samples {
                pc.samples = s;
            }
            if let Some(s) = seed {
                pc.seed = s;
            }
            let cmp = nested_model_comparison(&train, &rows, &cfg.template(&train), &variants, &cfg.fit_options(), &pc)?;
            let report = comparison_report(&cmp);
            write(&with_suffix(&out, ".txt"), &report)?;
            write(&with_suffix(&out, ".csv"), &comparison_csv(&cmp)?)?;
            let mut all = String::from("model,policy_id,actual,predicted\n");
            for (row, preds) in cmp.rows.iter().zip(&cmp.predictions) {
                let body = predictions_csv(&rows, preds)?;
                for line in body.lines().skip(1) {
                    all.push_str(row.variant.name());
                    all.push(',');
                    all.push_str(line);
                    all.push('\n');
                }
            }
            write(&with_suffix(&out, "_predictions.csv"), &all)?;
            print!("{report}");
        }
        Command::Density {
            history,
            params,
            factor_nodes,
            mixing_nodes,
        } => {
            let h = read_json::<HistoryInput>(&history)?.history();
            let p = read_json::<ParamsInput>(&params)?.params();
            let quad = QuadratureRule::new(factor_nodes, mixing_nodes);
            let v = log_density(&h, &p, &quad)?;
            if !v.log_density.is_finite() {
                return Err(CrmError::NonFinite { policy_id: h.policy_id });
            }
            println!("log_density = {:.12}", v.log_density);
            println!("density = {:.12e}", v.log_density.exp());
            println!("independent_log_density = {:.12}", log_density_independent(&h, &p)?);
            if !v.diagnostics.is_clean() {
                println!(
                    "warning: {} clamped cdf value(s), {} floored variance(s)",
                    v.diagnostics.clamped, v.diagnostics.sigma_floored
                );
            }
        }
        Command::Pdcheck { theta, n } => {
            let theta = theta_arg(&theta)?;
            let rho = theta.rho();
            let sigma = build_sigma(&FrequencyVector::new(n)?, &rho);
            println!("admissible={}", theta.is_admissible());
            println!("PD={}", is_positive_definite(&sigma));
            let r = rho.to_array();
            println!("rho=({:.4}, {:.4}, {:.4}, {:.4}, {:.4})", r[0], r[1], r[2], r[3], r[4]);
        }
        Command::Summarize { data, out } => {
            let cfg = load_config(data.config.as_deref())?;
            let portfolio = load_portfolio(&data.policy_years, &data.claims, &cfg)?;
            let s = summarize(&portfolio);
            if let Some(out) = out {
                write(&with_suffix(&out, "_by_year.csv"), &summary_by_year_csv(&s)?)?;
                write(&with_suffix(&out, "_severity.csv"), &summary_severity_csv(&s)?)?;
            }
            print!("{}", summary_report(&s));
        }
    }
    Ok(())
}
