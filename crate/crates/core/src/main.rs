#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use grw_core::arrow::ArrowConfig;
use grw_core::harness::{
    self, check_arrow, check_ensemble, check_lg, check_sweep, config_digest, load_config, run_ensemble,
    run_lg_ladder, run_sweep, Check, Direction, LoadedConfig, OutputDir, Provenance, Quantity, UnitScales,
};
use grw_core::scenarios::{ScenarioConfig, ScenarioRunner};
use grw_core::Error;

/// Environment variable naming the root for relative `--out` paths.
const OUT_ROOT_ENV: &str = "GRW_OUT_ROOT";
const DEFAULT_TRAJECTORIES: usize = 1000;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "grw", version, about = "Spontaneous-localization simulator")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Exit with code 3 when a statistical threshold is breached.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Single trajectory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Trajectory ensemble (or an n_eff sweep when the config has one).
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Leggett-Garg correlations over a ladder of collapse strengths.
    Lg {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Kac-ring equilibration experiment.
    Arrow {
        #[arg(long, default_value_t = 10_000)]
        sites: usize,
        #[arg(long, default_value_t = 0.1)]
        marker_fraction: f64,
        #[arg(long, default_value_t = 1e-2)]
        flip_rate: f64,
        /// Steps; defaults to sites / 2.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
    /// SI ↔ internal unit arithmetic and the mean first-jump table.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct ConvertArgs {
    /// Per-constituent mean hit interval in seconds.
    #[arg(long, default_value_t = 1e15)]
    tau: f64,
    /// Number of constituents.
    #[arg(long, default_value_t = 1e23)]
    n_eff: f64,
    /// Optional value to convert.
    #[arg(long, requires = "quantity")]
    value: Option<f64>,
    #[arg(long, value_enum)]
    quantity: Option<QuantityArg>,
    #[arg(long, value_enum, default_value = "internal")]
    to: DirectionArg,
    #[arg(long, default_value_t = 1.0)]
    length_unit: f64,
    #[arg(long, default_value_t = 1.0)]
    time_unit: f64,
    #[arg(long, default_value_t = 1.0)]
    mass_unit: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantityArg {
    Length,
    Time,
    Mass,
    Rate,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Internal,
    Si,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

enum Failure {
    Error(Error),
    Checks(Vec<Check>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type CliResult = Result<Vec<Check>, Failure>;

fn out_dir(path: &Path) -> Result<OutputDir, Error> {
    let resolved = match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    };
    OutputDir::create(resolved)
}

fn wrong_kind(command: &str, loaded: &LoadedConfig) -> Error {
    let kind = match loaded {
        LoadedConfig::Scenario(_) => "cat or measurement_chain",
        LoadedConfig::LeggettGarg(_) => "leggett_garg",
        LoadedConfig::Arrow(_) => "arrow",
    };
    Error::Validation(format!("`{command}` cannot run a {kind} config"))
}

fn provenance<T: Serialize>(command: &str, config: &T, seed: u64) -> Provenance {
    Provenance::new(command, config_digest(config), seed)
}

fn scenario_of(command: &str, loaded: &LoadedConfig) -> Result<ScenarioConfig, Error> {
    match loaded {
        LoadedConfig::Scenario(s) => Ok(s.config.clone()),
        other => Err(wrong_kind(command, other)),
    }
}

#[derive(Serialize)]
struct SeriesRow {
    time: f64,
    weight_1: f64,
    weight_2: f64,
    mean: f64,
    variance: f64,
}

fn cmd_run(config: &Path, common: &Common) -> CliResult {
    let loaded = load_config(config)?;
    let scenario = scenario_of("run", &loaded)?;
    let out = out_dir(&common.out)?;
    out.write_provenance(&loaded.echo()?, &provenance("run", &scenario, common.seed))?;
    let record = ScenarioRunner::new(&scenario)?.trajectory(common.seed, 0)?;
    out.write_json("trajectory.json", &record)?;
    out.write_jsonl("events.jsonl", &record.events)?;
    out.write_csv(
        "series.csv",
        record.series.iter().map(|p| SeriesRow {
            time: p.time,
            weight_1: p.branch_weights[0],
            weight_2: p.branch_weights[1],
            mean: p.mean,
            variance: p.variance,
        }),
    )?;
    println!(
        "{}: outcome {} after {} jumps (weights {:.6} / {:.6})",
        scenario.name,
        record.outcome.label(),
        record.events.len(),
        record.final_branch_weights[0],
        record.final_branch_weights[1]
    );
    Ok(Vec::new())
}

fn cmd_ensemble(config: &Path, trajectories: Option<usize>, workers: usize, common: &Common) -> CliResult {
    let loaded = load_config(config)?;
    let LoadedConfig::Scenario(run) = &loaded else {
        return Err(wrong_kind("ensemble", &loaded).into());
    };
    let n = trajectories.or(run.trajectories).unwrap_or(DEFAULT_TRAJECTORIES);
    let out = out_dir(&common.out)?;
    out.write_provenance(&loaded.echo()?, &provenance("ensemble", &loaded, common.seed))?;
    if run.sweep.is_empty() {
        let e = run_ensemble(&run.config, n, common.seed, workers)?;
        e.write(&out)?;
        let s = &e.summary;
        println!(
            "{}: {} trajectories, outcome 1: {} ({:.4}), outcome 2: {} ({:.4}), undecided: {}",
            s.scenario,
            s.trajectories,
            s.tally.counts[0],
            s.tally.frequencies[0],
            s.tally.counts[1],
            s.tally.frequencies[1],
            s.tally.counts[2]
        );
        if let Some(c) = &s.chi_square {
            println!("chi-square vs Born: {:.4} (p = {:.4})", c.statistic, c.p_value);
        }
        Ok(check_ensemble(s))
    } else {
        let (sweep, ensembles) = run_sweep(&run.config, &run.sweep, n, common.seed, workers)?;
        for (p, e) in sweep.points.iter().zip(&ensembles) {
            e.write(&out.subdir(&format!("n_eff_{}", p.n_eff))?)?;
            println!("n_eff = {}: median survival {:?}", p.n_eff, p.median_survival);
        }
        out.write_json("sweep.json", &sweep)?;
        if let Some(f) = &sweep.fit {
            println!("log-log slope {:.4} (95% CI {:.4} .. {:.4})", f.slope, f.slope_ci.0, f.slope_ci.1);
        }
        Ok(check_sweep(&sweep))
    }
}

fn cmd_lg(config: &Path, common: &Common) -> CliResult {
    let loaded = load_config(config)?;
    let LoadedConfig::LeggettGarg(run) = &loaded else {
        return Err(wrong_kind("lg", &loaded).into());
    };
    let out = out_dir(&common.out)?;
    out.write_provenance(&loaded.echo()?, &provenance("lg", &loaded, common.seed))?;
    let entries = run_lg_ladder(run, common.seed)?;
    harness::write_lg(&out, &entries)?;
    for e in &entries {
        println!(
            "hits/interval {:>8}: C12 {:.4}  C23 {:.4}  C13 {:.4}  K {:.4}",
            e.hits_per_interval, e.result.c12, e.result.c23, e.result.c13, e.result.k
        );
    }
    Ok(check_lg(&entries))
}

fn cmd_arrow(config: ArrowConfig, common: &Common) -> CliResult {
    config.validate()?;
    let loaded = LoadedConfig::Arrow(config.clone());
    let out = out_dir(&common.out)?;
    out.write_provenance(&loaded.echo()?, &provenance("arrow", &loaded, common.seed))?;
    let s = harness::run_and_write_arrow(&config, common.seed, &out)?;
    for (name, arm) in harness::arms(&s) {
        println!(
            "{name:>20}: in band {:.3}, anti-thermal {:.3}",
            arm.in_band_fraction, arm.anti_thermal_fraction
        );
    }
    Ok(check_arrow(&s))
}

fn cmd_convert(args: &ConvertArgs) -> CliResult {
    let scales = UnitScales::new(args.length_unit, args.time_unit, args.mass_unit)?;
    println!("mean first-jump time tau / n_eff, tau = {:e} s", args.tau);
    println!("{:>12}  {:>14}", "n_eff", "time [s]");
    let mut sizes: Vec<f64> = [1.0, 1e3, 1e6, 1e10, 1e15, 1e20].to_vec();
    if !sizes.contains(&args.n_eff) {
        sizes.push(args.n_eff);
    }
    for (n, t) in harness::amplification_table(args.tau, &sizes) {
        println!("{n:>12e}  {t:>14e}");
    }
    let gap = harness::mean_first_jump_time(args.tau, args.n_eff);
    println!("tau = {:e} s, n_eff = {:e}: mean first-jump time {:e} s", args.tau, args.n_eff, gap);
    if let (Some(v), Some(q)) = (args.value, args.quantity) {
        let quantity = match q {
            QuantityArg::Length => Quantity::Length,
            QuantityArg::Time => Quantity::Time,
            QuantityArg::Mass => Quantity::Mass,
            QuantityArg::Rate => Quantity::Rate,
        };
        let direction = match args.to {
            DirectionArg::Internal => Direction::ToInternal,
            DirectionArg::Si => Direction::ToSi,
        };
        println!("{:e}", harness::si_conversion(v, quantity, direction, &scales)?);
    }
    Ok(Vec::new())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (result, check) = match &cli.command {
        Command::Run { config, common } => (cmd_run(config, common), common.check),
        Command::Ensemble {
            config,
            trajectories,
            workers,
            common,
        } => (cmd_ensemble(config, *trajectories, *workers, common), common.check),
        Command::Lg { config, common } => (cmd_lg(config, common), common.check),
        Command::Arrow {
            sites,
            marker_fraction,
            flip_rate,
            horizon,
            trials,
            common,
        } => {
            let base = ArrowConfig::new(*sites, *marker_fraction, *flip_rate, *trials);
            let horizon = horizon.unwrap_or(base.horizon);
            let config = ArrowConfig {
                horizon,
                sample_every: (horizon / 100).max(1),
                ..base
            };
            (cmd_arrow(config, common), common.check)
        }
        Command::Convert(args) => (cmd_convert(args), false),
    };
    let result = result.and_then(|checks| {
        let failed: Vec<Check> = checks.into_iter().filter(|c| !c.passed).collect();
        if check && !failed.is_empty() {
            Err(Failure::Checks(failed))
        } else {
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(failed)) => {
            for c in failed {
                eprintln!("check failed: {} ({})", c.name, c.detail);
            }
            ExitCode::from(EXIT_CHECK)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}
