//! Ensemble orchestration, statistics and persistence.

pub mod config;
pub mod stats;
pub mod units;

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arrow::{run_arrow, ArrowConfig, ArrowSummary};
use crate::collapse::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::rng::RNG_ALGORITHM;
use crate::scenarios::{
    predicted_unitary_k, run_leggett_garg, LgResult, Mode, OutcomeTally, ScenarioConfig, ScenarioRunner,
    SurvivalStats, MAX_UNDECIDED_FRACTION,
};

pub use config::{load_config, parse_config, LgRun, LoadedConfig, ScenarioRun};
pub use stats::{born_chi_square, fit_scaling, two_proportion_z_test, ChiSquare, ProportionTest, ScalingFit};
pub use units::{amplification_table, mean_first_jump_time, si_conversion, Direction, Quantity, UnitScales};

/// Ensembles abort when more than this fraction of trajectories fail.
pub const FAILURE_BUDGET: f64 = 0.01;
/// Born chi-square p-value below which `--check` fails.
pub const CHECK_P_VALUE: f64 = 0.01;
pub const CHECK_SLOPE_TOLERANCE: f64 = 0.05;

pub const FLOAT_PROFILE: &str =
    "IEEE 754 binary64, round-to-nearest-even, no fused multiply-add contraction, scalar (non-SIMD) FFT kernels";

pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Master seed of sweep point `index`: the first 8 bytes of
/// SHA-256(master_seed ‖ index), little-endian. Distinct points get
/// unrelated streams, so their medians are independent samples.
pub fn sweep_point_seed(master_seed: u64, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn config_digest<T: Serialize>(config: &T) -> String {
    digest_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub rng: String,
    pub float_profile: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub command: String,
}

impl Provenance {
    pub fn new(command: &str, config_digest: String, master_seed: u64) -> Self {
        Self {
            tool: "grw".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng: RNG_ALGORITHM.into(),
            float_profile: FLOAT_PROFILE.into(),
            config_digest,
            master_seed,
            command: command.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub trajectory: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub scenario: String,
    pub mode: Mode,
    pub config_digest: String,
    pub master_seed: u64,
    pub trajectories: usize,
    pub failed: usize,
    pub tally: OutcomeTally,
    /// Born weights `(|c₁|², |c₂|²)`.
    pub expected: [f64; 2],
    pub jump_events: usize,
    pub survival: Option<SurvivalStats>,
    pub chi_square: Option<ChiSquare>,
    /// Why `chi_square` is absent, when it is.
    pub chi_square_note: Option<String>,
}

impl EnsembleSummary {
    pub fn undecided_fraction(&self) -> f64 {
        self.tally.undecided_fraction()
    }
}

pub struct Ensemble {
    pub summary: EnsembleSummary,
    /// Successful trajectories in index order.
    pub records: Vec<TrajectoryRecord>,
    pub failures: Vec<TrajectoryFailure>,
    pub wall_time_s: f64,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(format!("cannot start worker pool: {e}")))
}

/// Runs trajectories `0..trajectories` on `workers` threads and merges them
/// in index order, so the result does not depend on scheduling.
pub fn run_ensemble(config: &ScenarioConfig, trajectories: usize, master_seed: u64, workers: usize) -> Result<Ensemble> {
    let started = Instant::now();
    let runner = ScenarioRunner::new(config)?;
    if trajectories == 0 {
        log::warn!("{}: zero trajectories requested; writing an empty summary", config.name);
    }
    let results = pool(workers)?.install(|| runner.run(trajectories, master_seed));
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(TrajectoryFailure {
                trajectory: k as u64,
                error: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > FAILURE_BUDGET * trajectories as f64 {
        return Err(Error::FailureBudget {
            failed: failures.len(),
            total: trajectories,
            first: failures[0].error.clone(),
        });
    }
    for f in &failures {
        log::warn!("trajectory {} failed: {}", f.trajectory, f.error);
    }
    let tally = OutcomeTally::from_outcomes(records.iter().map(|r| r.outcome));
    let expected = [config.state.c1_sq, 1.0 - config.state.c1_sq];
    let (chi_square, chi_square_note) = if config.mode == Mode::Unitary {
        (None, Some("no collapse: outcomes are not expected to be decided".to_string()))
    } else {
        match born_chi_square(&tally, expected) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    if config.mode == Mode::Grw && tally.total > 0 && tally.undecided_fraction() > MAX_UNDECIDED_FRACTION {
        log::warn!(
            "{}: {} of {} trajectories undecided at the horizon",
            config.name,
            tally.counts[2],
            tally.total
        );
    }
    let summary = EnsembleSummary {
        scenario: config.name.clone(),
        mode: config.mode,
        config_digest: config_digest(config),
        master_seed,
        trajectories,
        failed: failures.len(),
        jump_events: records.iter().map(|r| r.events.len()).sum(),
        survival: SurvivalStats::from_records(&records),
        tally,
        expected,
        chi_square,
        chi_square_note,
    };
    Ok(Ensemble {
        summary,
        records,
        failures,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_eff: f64,
    pub median_survival: Option<f64>,
    pub summary: EnsembleSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub points: Vec<SweepPoint>,
    pub fit: Option<ScalingFit>,
    pub fit_note: Option<String>,
}

/// Median survival time against `n_eff` at fixed tau, with a log-log fit.
/// Point `i` runs with [`sweep_point_seed`]`(master_seed, i)`.
pub fn run_sweep(
    config: &ScenarioConfig,
    n_effs: &[f64],
    trajectories: usize,
    master_seed: u64,
    workers: usize,
) -> Result<(SweepSummary, Vec<Ensemble>)> {
    let mut points = Vec::with_capacity(n_effs.len());
    let mut ensembles = Vec::with_capacity(n_effs.len());
    for (i, &n) in n_effs.iter().enumerate() {
        let e = run_ensemble(&config.with_n_eff(n), trajectories, sweep_point_seed(master_seed, i), workers)?;
        points.push(SweepPoint {
            n_eff: n,
            median_survival: e.summary.survival.as_ref().map(|s| s.median),
            summary: e.summary.clone(),
        });
        ensembles.push(e);
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.median_survival.map(|m| (p.n_eff, m)))
        .collect();
    let (fit, fit_note) = match fit_scaling(&xy) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok((SweepSummary { points, fit, fit_note }, ensembles))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgEntry {
    pub hits_per_interval: f64,
    pub result: LgResult,
    pub predicted_unitary_k: f64,
}

pub fn run_lg_ladder(run: &LgRun, master_seed: u64) -> Result<Vec<LgEntry>> {
    run.ladder
        .iter()
        .zip(&run.hits_per_interval)
        .map(|(c, &h)| {
            Ok(LgEntry {
                hits_per_interval: h,
                result: run_leggett_garg(c, run.trajectories, master_seed)?,
                predicted_unitary_k: predicted_unitary_k(c.omega, c.times),
            })
        })
        .collect()
}

/// Output directory writer.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn subdir(&self, name: &str) -> Result<Self> {
        Self::create(self.root.join(name))
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.root.join(name);
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| Error::Io(format!("{}: {e}", p.display())))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let mut f = self.file(name)?;
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_jsonl<'a, T: Serialize + 'a>(&self, name: &str, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
        let mut f = self.file(name)?;
        for item in items {
            serde_json::to_writer(&mut f, item).map_err(|e| Error::Io(e.to_string()))?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn write_csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.file(name)?);
        for r in rows {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Resolved config and provenance, present in every output directory.
    pub fn write_provenance(&self, echo: &str, provenance: &Provenance) -> Result<()> {
        self.write_text("config.toml", echo)?;
        self.write_json("provenance.json", provenance)
    }
}

#[derive(Serialize)]
struct OutcomeRow {
    trajectory: u64,
    outcome: &'static str,
    weight_1: f64,
    weight_2: f64,
    jump_events: usize,
    survival_time: Option<f64>,
}

#[derive(Serialize)]
struct Timings<'a> {
    total_wall_time_s: f64,
    trajectory_wall_time_s: &'a [f64],
}

impl Ensemble {
    /// `events.jsonl`, `failures.jsonl`, `summary.json` and `outcomes.csv` are
    /// deterministic; wall times go to `timings.json`.
    pub fn write(&self, out: &OutputDir) -> Result<()> {
        out.write_jsonl("events.jsonl", &self.records)?;
        out.write_jsonl("failures.jsonl", &self.failures)?;
        out.write_json("summary.json", &self.summary)?;
        out.write_csv(
            "outcomes.csv",
            self.records.iter().map(|r| OutcomeRow {
                trajectory: r.seeds.stream_id,
                outcome: r.outcome.label(),
                weight_1: r.final_branch_weights[0],
                weight_2: r.final_branch_weights[1],
                jump_events: r.events.len(),
                survival_time: r.survival_time(),
            }),
        )?;
        let per: Vec<f64> = self.records.iter().map(|r| r.wall_time_s).collect();
        out.write_json(
            "timings.json",
            &Timings {
                total_wall_time_s: self.wall_time_s,
                trajectory_wall_time_s: &per,
            },
        )
    }
}

#[derive(Serialize)]
struct LgRow {
    hits_per_interval: f64,
    c12: f64,
    c23: f64,
    c13: f64,
    k: f64,
    predicted_unitary_k: f64,
    trajectories: usize,
}

pub fn write_lg(out: &OutputDir, entries: &[LgEntry]) -> Result<()> {
    out.write_json("lg.json", &entries)?;
    out.write_csv(
        "lg.csv",
        entries.iter().map(|e| LgRow {
            hits_per_interval: e.hits_per_interval,
            c12: e.result.c12,
            c23: e.result.c23,
            c13: e.result.c13,
            k: e.result.k,
            predicted_unitary_k: e.predicted_unitary_k,
            trajectories: e.result.trajectories,
        }),
    )
}

#[derive(Serialize)]
struct ArmRow {
    arm: &'static str,
    in_band_fraction: f64,
    anti_thermal_fraction: f64,
    trials: usize,
}

#[derive(Serialize)]
struct SeriesRow {
    arm: &'static str,
    trial: usize,
    step: usize,
    m: f64,
}

pub fn arms(s: &ArrowSummary) -> [(&'static str, &crate::arrow::ArmSummary); 3] {
    [
        ("bad_unperturbed", &s.bad_unperturbed),
        ("bad_perturbed", &s.bad_perturbed),
        ("typical_unperturbed", &s.typical_unperturbed),
    ]
}

pub fn run_and_write_arrow(config: &ArrowConfig, master_seed: u64, out: &OutputDir) -> Result<ArrowSummary> {
    let s = run_arrow(config, master_seed)?;
    out.write_csv(
        "arrow_summary.csv",
        arms(&s).map(|(name, a)| ArmRow {
            arm: name,
            in_band_fraction: a.in_band_fraction,
            anti_thermal_fraction: a.anti_thermal_fraction,
            trials: a.final_m.len(),
        }),
    )?;
    let mut rows = Vec::new();
    for (name, a) in arms(&s) {
        for (trial, series) in a.series.iter().enumerate() {
            for (&step, &m) in s.sample_times.iter().zip(series) {
                rows.push(SeriesRow { arm: name, trial, step, m });
            }
        }
    }
    out.write_csv("series.csv", rows)?;
    out.write_json("arrow_summary.json", &s)?;
    Ok(s)
}

/// One named `--check` threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

pub fn check_ensemble(s: &EnsembleSummary) -> Vec<Check> {
    let mut out = Vec::new();
    if s.mode == Mode::Grw {
        out.push(Check::new(
            "undecided",
            s.undecided_fraction() <= MAX_UNDECIDED_FRACTION,
            format!("undecided fraction {:.4}", s.undecided_fraction()),
        ));
    }
    if let Some(c) = &s.chi_square {
        out.push(Check::new(
            "born_chi_square",
            c.p_value > CHECK_P_VALUE,
            format!("statistic {:.4}, p = {:.4}", c.statistic, c.p_value),
        ));
    }
    out
}

pub fn check_sweep(s: &SweepSummary) -> Vec<Check> {
    let mut out: Vec<Check> = s.points.iter().flat_map(|p| check_ensemble(&p.summary)).collect();
    out.push(match &s.fit {
        Some(f) => Check::new(
            "scaling_slope",
            (f.slope + 1.0).abs() <= CHECK_SLOPE_TOLERANCE,
            format!("slope {:.4}", f.slope),
        ),
        None => Check::new("scaling_slope", false, s.fit_note.clone().unwrap_or_default()),
    });
    out
}

/// Unitary entries must match the closed form within three standard errors
/// of the estimator and `K` must not increase along the ladder.
pub fn check_lg(entries: &[LgEntry]) -> Vec<Check> {
    let mut out = Vec::new();
    for e in entries.iter().filter(|e| e.hits_per_interval == 0.0) {
        let tol = 3.0 * (3.0 / e.result.trajectories as f64).sqrt();
        out.push(Check::new(
            "unitary_k",
            (e.result.k - e.predicted_unitary_k).abs() <= tol,
            format!("K = {:.4}, predicted {:.4}", e.result.k, e.predicted_unitary_k),
        ));
    }
    let mut sorted: Vec<&LgEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.hits_per_interval.total_cmp(&b.hits_per_interval));
    let monotone = sorted.windows(2).all(|w| {
        let tol = 3.0 * (6.0 / w[0].result.trajectories as f64).sqrt();
        w[1].result.k <= w[0].result.k + tol
    });
    out.push(Check::new(
        "k_monotone",
        monotone,
        sorted.iter().map(|e| format!("{}:{:.4}", e.hits_per_interval, e.result.k)).collect::<Vec<_>>().join(" "),
    ));
    out
}

pub fn check_arrow(s: &ArrowSummary) -> Vec<Check> {
    let mut out = vec![
        Check::new(
            "bad_unperturbed_anti_thermal",
            s.bad_unperturbed.anti_thermal_fraction == 1.0,
            format!("{}", s.bad_unperturbed.anti_thermal_fraction),
        ),
        Check::new(
            "typical_in_band",
            s.typical_unperturbed.in_band_fraction >= 0.95,
            format!("{}", s.typical_unperturbed.in_band_fraction),
        ),
    ];
    if s.config.flip_rate >= 1e-2 {
        out.push(Check::new(
            "bad_perturbed_in_band",
            s.bad_perturbed.in_band_fraction >= 0.99,
            format!("{}", s.bad_perturbed.in_band_fraction),
        ));
    }
    out
}
