//! Command-line interface.
//!
//! Exit codes: 0 when the model is not falsified, 1 when it is, 2 on usage
//! or data errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ivcheck::falsify::{
    test_conditional_gs, test_conditional_perlevel, test_discrete, test_unconditional,
    FalsifyReport,
};
use ivcheck::simlab::{run_scenarios, write_scenario_log, SimConfig};
use ivcheck::tabulate::{
    dichotomize_median, ingest_csv, tabulate, ColumnMap, JointCounts, StratifiedCounts,
};
use ivcheck::tests2x2::TestMethod;
use ivcheck::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ivcheck",
    version,
    about = "Falsification tests for the binary and discrete instrumental variable model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test the binary unconditional model (four inequalities at alpha/2)
    FalsifyUnconditional(FalsifyArgs),
    /// Test the binary conditional model across covariate strata
    FalsifyConditional(ConditionalArgs),
    /// Test the discrete model with any number of instrument/treatment levels
    FalsifyDiscrete(FalsifyArgs),
    /// Run Monte Carlo scenarios from a JSON configuration
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Wald when every instrument arm has at least 200 units, else Boschloo
    Auto,
    Wald,
    Boschloo,
    BergerBoos,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DichotomizeArg {
    /// Outcomes must already be 0/1
    None,
    /// Split at the sample median; ties go to 0
    Median,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConditionalModeArg {
    /// Pool strata with the one-sided chi-bar-squared statistic
    GailSimon,
    /// Test every stratum separately at alpha / (2 K)
    PerLevel,
}

#[derive(Args)]
struct FalsifyArgs {
    /// CSV file with a header row and one row per unit
    #[arg(long)]
    input: PathBuf,
    /// Instrument column name
    #[arg(long, default_value = "z")]
    z: String,
    /// Treatment column name
    #[arg(long, default_value = "d")]
    d: String,
    /// Outcome column name
    #[arg(long, default_value = "y")]
    y: String,
    /// Overall test level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Nuisance confidence-set level for berger-boos (default 0.001)
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum, default_value_t = DichotomizeArg::None)]
    dichotomize: DichotomizeArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Args)]
struct ConditionalArgs {
    #[command(flatten)]
    base: FalsifyArgs,
    /// Covariate columns defining the strata, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    #[arg(long, value_enum, default_value_t = ConditionalModeArg::GailSimon)]
    conditional_mode: ConditionalModeArg,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with a master seed and a list of scenarios
    #[arg(long)]
    scenarios: PathBuf,
    /// Override the master seed from the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Write results as CSV (scenario_id,n,reps,rate,mc_se,seed)
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

fn load_strata(args: &FalsifyArgs, covariates: &[String]) -> Result<StratifiedCounts> {
    let schema = ColumnMap {
        z: args.z.clone(),
        d: args.d.clone(),
        y: args.y.clone(),
        covariates: covariates.to_vec(),
    };
    let mut records = ingest_csv(&args.input, &schema)?;
    if args.dichotomize == DichotomizeArg::Median {
        dichotomize_median(&mut records)?;
    }
    let selected: Vec<usize> = (0..covariates.len()).collect();
    tabulate(&records, &selected)
}

fn single_table(args: &FalsifyArgs) -> Result<JointCounts> {
    let strat = load_strata(args, &[])?;
    Ok(strat
        .strata
        .into_values()
        .next()
        .expect("tabulate returns at least one stratum"))
}

/// Smallest nonempty instrument arm, across strata.
fn min_arm(strat: &StratifiedCounts) -> u64 {
    strat
        .strata
        .values()
        .flat_map(|t| (0..t.levels_z()).map(move |z| t.arm_total(z)))
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(0)
}

fn resolve_method(arg: MethodArg, smallest_arm: u64) -> TestMethod {
    match arg {
        MethodArg::Auto => {
            if smallest_arm >= 200 {
                TestMethod::Wald
            } else {
                TestMethod::Boschloo
            }
        }
        MethodArg::Wald => TestMethod::Wald,
        MethodArg::Boschloo => TestMethod::Boschloo,
        MethodArg::BergerBoos => TestMethod::BergerBoos,
    }
}

fn resolve_gamma(method: TestMethod, gamma: Option<f64>) -> Option<f64> {
    match method {
        TestMethod::BergerBoos => Some(gamma.unwrap_or(0.001)),
        _ => gamma,
    }
}

fn emit(report: &FalsifyReport, format: FormatArg) -> Result<bool> {
    let text = match format {
        FormatArg::Text => report.to_text(),
        FormatArg::Json => {
            let mut json = report.to_json()?;
            json.push('\n');
            json
        }
    };
    write_stdout(&text, report.falsified)?;
    Ok(report.falsified)
}

/// A consumer closing stdout early (`ivcheck ... | head`) is a normal way to
/// stop reading, not a failure: exit with the verdict code the full run would
/// have produced instead of reporting an i/o error.
fn write_stdout(text: &str, falsified: bool) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {
            std::process::exit(i32::from(falsified))
        }
        other => other,
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::FalsifyUnconditional(args) => {
            let table = single_table(&args)?;
            let method = resolve_method(args.method, min_arm(&StratifiedCounts::single(table.clone())));
            let gamma = resolve_gamma(method, args.gamma);
            let report = test_unconditional(&table, args.alpha, method, gamma)?;
            emit(&report, args.format)
        }
        Command::FalsifyConditional(args) => {
            let strat = load_strata(&args.base, &args.covariates)?;
            let report = match args.conditional_mode {
                ConditionalModeArg::GailSimon => {
                    if args.base.gamma.is_some() || args.base.method != MethodArg::Auto {
                        eprintln!(
                            "note: --method and --gamma are ignored in gail-simon mode"
                        );
                    }
                    test_conditional_gs(&strat, args.base.alpha)?
                }
                ConditionalModeArg::PerLevel => {
                    let method = resolve_method(args.base.method, min_arm(&strat));
                    let gamma = resolve_gamma(method, args.base.gamma);
                    test_conditional_perlevel(&strat, args.base.alpha, method, gamma)?
                }
            };
            emit(&report, args.base.format)
        }
        Command::FalsifyDiscrete(args) => {
            let table = single_table(&args)?;
            let method =
                resolve_method(args.method, min_arm(&StratifiedCounts::single(table.clone())));
            let gamma = resolve_gamma(method, args.gamma);
            let report = test_discrete(&table, args.alpha, method, gamma)?;
            emit(&report, args.format)
        }
        Command::Simulate(args) => {
            let text = std::fs::read_to_string(&args.scenarios)?;
            let mut config = SimConfig::from_json(&text)?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            let results = run_scenarios(&config)?;
            if let Some(path) = &args.log {
                write_scenario_log(&results, path)?;
            }
            let text = match args.format {
                FormatArg::Json => {
                    let mut json = serde_json::to_string_pretty(&results)?;
                    json.push('\n');
                    json
                }
                FormatArg::Text => {
                    let mut text = format!(
                        "{:<24}  {:>8}  {:>7}  {:>8}  {:>8}  {:>20}\n",
                        "scenario", "n", "reps", "rate", "mc_se", "seed"
                    );
                    for r in &results {
                        text.push_str(&format!(
                            "{:<24}  {:>8}  {:>7}  {:>8.4}  {:>8.4}  {:>20}\n",
                            r.scenario_id, r.n, r.reps, r.rate, r.mc_se, r.seed
                        ));
                    }
                    text
                }
            };
            write_stdout(&text, false)?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::from(0),
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Parse { .. } | Error::MissingColumn(_) = e {
                eprintln!("hint: check the column flags (--z, --d, --y, --covariates)");
            }
            ExitCode::from(2)
        }
    }
}
