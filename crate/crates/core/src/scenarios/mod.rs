//! Runnable thought experiments: collapse of a two-peak superposition, the
//! system–pointer measurement chain, the projective-reduction baseline and the
//! Leggett–Garg test.

mod leggett_garg;

pub use leggett_garg::{lg_trajectory, predicted_unitary_k, run_leggett_garg, LgConfig, LgResult, LgSample};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Distribution, OrderStatistics};

use crate::collapse::{
    evolve_prepared, Branches, GrwParams, Localizer, Outcome, Sample, TrajectoryOptions, TrajectoryRecord,
    MAX_DT_FRACTION_OF_GAP,
};
use crate::error::{Error, Result};
use crate::propagator::{premeasurement_evolve, Method, Potential, Propagator, PropagatorConfig};
use crate::qstate::{GridSpec, WaveFunction};
use crate::rng::RngStream;

/// Undecided trajectories beyond this fraction make a collapse run non-convergent.
pub const MAX_UNDECIDED_FRACTION: f64 = 0.01;
/// Minimum peak separation in units of the localization width.
pub const MIN_SEPARATION_WIDTHS: f64 = 10.0;
/// Support must stay this many widths away from the periodic seam.
pub const SEAM_MARGIN_WIDTHS: f64 = 5.0;
/// z used for the reported binomial intervals.
pub const INTERVAL_Z: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Grw,
    Wpr,
    Unitary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Two-peak superposition of one collective coordinate.
    #[default]
    Cat,
    /// Two-level system premeasured by a pointer, then left to collapse.
    MeasurementChain,
}

/// Initial state recipe: `c₁|1⟩ + c₂|2⟩` with `|c₁|² = c1_sq` and relative phase `phase`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecipe {
    pub c1_sq: f64,
    pub phase: f64,
    /// Density standard deviation of each packet.
    pub sigma: f64,
    /// Cat: distance between the two peaks. Chain: pointer displacement of each branch.
    pub separation: f64,
}

impl StateRecipe {
    pub fn coefficients(&self) -> [Complex64; 2] {
        let c1 = self.c1_sq.clamp(0.0, 1.0).sqrt();
        let c2 = (1.0 - self.c1_sq).clamp(0.0, 1.0).sqrt();
        [Complex64::new(c1, 0.0), Complex64::from_polar(c2, self.phase)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    pub mode: Mode,
    pub grid: GridSpec,
    pub state: StateRecipe,
    pub grw: GrwParams,
    pub propagator: PropagatorConfig,
    pub potential: Potential,
    pub horizon: f64,
    /// Outcome regions are `x < split` (outcome 1) and `x ≥ split` (outcome 2).
    pub split: f64,
    /// Projection time of the reduction baseline.
    pub measurement_time: f64,
}

impl ScenarioConfig {
    /// Two packets (σ = 1) at ±10 on a 512-point grid over [−64, 64), a = 2,
    /// about ten hits before the horizon.
    pub fn cat(c1_sq: f64) -> Self {
        Self {
            name: "cat".into(),
            kind: ScenarioKind::Cat,
            mode: Mode::Grw,
            grid: GridSpec::new(-64.0, 64.0, 512).expect("static grid"),
            state: StateRecipe {
                c1_sq,
                phase: 0.0,
                sigma: 1.0,
                separation: 20.0,
            },
            grw: GrwParams {
                tau: 1000.0,
                a: 2.0,
                n_eff: 5000.0,
            },
            propagator: PropagatorConfig {
                method: Method::SplitStep,
                dt: 0.01,
                steps_per_event_check: 25,
            },
            potential: Potential::free(),
            horizon: 2.0,
            split: 0.0,
            measurement_time: 0.0,
        }
    }

    /// Pointer (σ = 1) displaced by ±30 per level, a = 2, tau = 1, eight mean
    /// gaps to the horizon.
    pub fn measurement_chain(c1_sq: f64) -> Self {
        Self {
            name: "measurement_chain".into(),
            kind: ScenarioKind::MeasurementChain,
            state: StateRecipe {
                c1_sq,
                phase: 0.0,
                sigma: 1.0,
                separation: 30.0,
            },
            grw: GrwParams {
                tau: 1.0,
                a: 2.0,
                n_eff: 1.0,
            },
            horizon: 8.0,
            ..Self::cat(c1_sq)
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let v = |msg: String| Err(Error::Validation(msg));
        if !(0.0..=1.0).contains(&self.state.c1_sq) {
            return v(format!(
                "normalization: |c1|^2 = {} must lie in [0, 1]",
                self.state.c1_sq
            ));
        }
        if !(self.state.sigma > 0.0) {
            return v(format!("packet width sigma = {} must be positive", self.state.sigma));
        }
        if !self.state.phase.is_finite() {
            return v("phase must be finite".into());
        }
        self.grw.validate_for_grid(&self.grid)?;
        self.propagator.validate()?;
        self.potential.validate(&self.grid)?;
        if !(self.horizon > 0.0) {
            return v(format!("horizon = {} must be positive", self.horizon));
        }
        self.propagator.steps_in(self.horizon)?;
        if self.mode == Mode::Grw && self.propagator.dt > MAX_DT_FRACTION_OF_GAP * self.grw.mean_gap() {
            return v(format!(
                "dt = {} must not exceed 1/20 of the mean hit gap tau/n_eff = {}",
                self.propagator.dt,
                self.grw.mean_gap()
            ));
        }
        if !(self.split > self.grid.x_min() && self.split < self.grid.x_max()) {
            return v(format!("split = {} must lie strictly inside the grid", self.split));
        }
        if !(self.measurement_time >= 0.0 && self.measurement_time <= self.horizon) {
            return v(format!(
                "measurement_time = {} must lie in [0, horizon]",
                self.measurement_time
            ));
        }
        let a = self.grw.a;
        let sigma = self.state.sigma;
        let half = 0.5 * self.grid.length();
        let reach = match self.kind {
            ScenarioKind::Cat => {
                if self.state.separation < MIN_SEPARATION_WIDTHS * a {
                    return v(format!(
                        "peak separation {} is below {MIN_SEPARATION_WIDTHS} a = {}",
                        self.state.separation,
                        MIN_SEPARATION_WIDTHS * a
                    ));
                }
                0.5 * self.state.separation
            }
            ScenarioKind::MeasurementChain => {
                let need = MIN_SEPARATION_WIDTHS * (sigma + a);
                if self.state.separation < need {
                    return v(format!(
                        "pointer displacement {} is below 10 (sigma + a) = {need}",
                        self.state.separation
                    ));
                }
                self.state.separation
            }
        };
        if (reach + 5.0 * sigma + SEAM_MARGIN_WIDTHS * a) > half {
            return v(format!(
                "support reaches {} from the grid center; must stay {SEAM_MARGIN_WIDTHS} a from the periodic seam at {half}",
                reach + 5.0 * sigma
            ));
        }
        if self.mode == Mode::Grw && self.kind == ScenarioKind::Cat {
            let drift = self.kick_drift();
            if 4.0 * drift > reach {
                log::warn!(
                    "{}: momentum kicks from hits spread packets by ~{drift:.3} over the horizon, comparable to the branch offset {reach}; outcomes may be mislabelled",
                    self.name
                );
            }
        }
        Ok(())
    }

    /// Position spread accumulated over the horizon from the momentum kicks
    /// of hits, `1/(2a²)` in `⟨p²⟩` per hit.
    pub fn kick_drift(&self) -> f64 {
        let h = self.horizon;
        (self.grw.rate() * h.powi(3) / (6.0 * self.grw.a * self.grw.a)).sqrt()
    }

    /// Rescales time so that `n_eff` changes while `horizon · rate` and
    /// `dt · rate` stay fixed.
    pub fn with_n_eff(&self, n_eff: f64) -> Self {
        let factor = self.grw.n_eff / n_eff;
        let mut out = self.clone();
        out.grw = self.grw.with_n_eff(n_eff);
        out.horizon *= factor;
        out.propagator.dt *= factor;
        out.measurement_time *= factor;
        out.name = format!("{}@n_eff={n_eff}", self.name);
        out
    }

    fn center(&self) -> f64 {
        0.5 * (self.grid.x_min() + self.grid.x_max())
    }

    fn branches(&self) -> Branches {
        match self.kind {
            ScenarioKind::Cat => Branches::Split { at: self.split },
            ScenarioKind::MeasurementChain => Branches::Levels,
        }
    }

    /// State at the start of the collapse dynamics.
    pub fn initial_state(&self) -> Result<WaveFunction> {
        let [c1, c2] = self.state.coefficients();
        let x0 = self.center();
        match self.kind {
            ScenarioKind::Cat => {
                let d = 0.5 * self.state.separation;
                WaveFunction::superposition(
                    self.grid,
                    &[(c1, x0 - d, self.state.sigma), (c2, x0 + d, self.state.sigma)],
                )
            }
            ScenarioKind::MeasurementChain => {
                let pointer = WaveFunction::gaussian(self.grid, x0, self.state.sigma, 0.0)?;
                let coupling = Potential::pointer_coupling(self.state.separation);
                Ok(premeasurement_evolve([c1, c2], &pointer, &coupling, 1.0)?.state)
            }
        }
    }

    fn effective_grw(&self) -> GrwParams {
        match self.mode {
            Mode::Unitary => GrwParams::no_collapse(self.grw.a),
            _ => self.grw,
        }
    }
}

/// Counts per outcome with binomial intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTally {
    /// Counts for outcome 1, outcome 2, undecided.
    pub counts: [usize; 3],
    pub total: usize,
    pub frequencies: [f64; 3],
    /// Wilson intervals at z = 3 for outcomes 1 and 2.
    pub intervals: [(f64, f64); 2],
}

impl OutcomeTally {
    pub fn from_outcomes<I: IntoIterator<Item = Outcome>>(outcomes: I) -> Self {
        let mut counts = [0usize; 3];
        for o in outcomes {
            counts[match o {
                Outcome::First => 0,
                Outcome::Second => 1,
                Outcome::Undecided => 2,
            }] += 1;
        }
        let total = counts.iter().sum();
        let freq = |k: usize| if total == 0 { 0.0 } else { counts[k] as f64 / total as f64 };
        Self {
            counts,
            total,
            frequencies: [freq(0), freq(1), freq(2)],
            intervals: [wilson(counts[0], total), wilson(counts[1], total)],
        }
    }

    pub fn decided(&self) -> usize {
        self.counts[0] + self.counts[1]
    }

    pub fn undecided_fraction(&self) -> f64 {
        self.frequencies[2]
    }
}

fn wilson(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = INTERVAL_Z * INTERVAL_Z;
    let denom = 1.0 + z2 / n;
    let mid = (p + z2 / (2.0 * n)) / denom;
    let half = INTERVAL_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

/// Summary of survival times (first time one branch holds all but 10⁻³).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalStats {
    /// Trajectories that reached a definite branch.
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
}

impl SurvivalStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TrajectoryRecord>) -> Option<Self> {
        let times: Vec<f64> = records.into_iter().filter_map(|r| r.survival_time()).collect();
        if times.is_empty() {
            return None;
        }
        let count = times.len();
        let mut data = Data::new(times);
        Some(Self {
            count,
            median: data.median(),
            mean: data.mean().unwrap_or(f64::NAN),
            lower_quartile: data.lower_quartile(),
            upper_quartile: data.upper_quartile(),
        })
    }
}

/// Per-scenario tables shared read-only by every trajectory of an ensemble.
pub struct ScenarioRunner {
    config: ScenarioConfig,
    initial: WaveFunction,
    propagator: Propagator,
    localizer: Localizer,
}

impl ScenarioRunner {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let initial = config.initial_state()?;
        let propagator = Propagator::new(config.grid, initial.levels(), &config.potential, &config.propagator)?;
        let localizer = Localizer::new(config.grid, config.effective_grw())?;
        Ok(Self {
            config: config.clone(),
            initial,
            propagator,
            localizer,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn initial_state(&self) -> &WaveFunction {
        &self.initial
    }

    /// One trajectory on stream `(master_seed, index)`.
    pub fn trajectory(&self, master_seed: u64, index: u64) -> Result<TrajectoryRecord> {
        let mut rng = RngStream::for_trajectory(master_seed, index);
        match self.config.mode {
            Mode::Wpr => Ok(self.wpr_record(&mut rng)),
            Mode::Grw | Mode::Unitary => {
                let opts = TrajectoryOptions {
                    scenario: self.config.name.clone(),
                    branches: self.config.branches(),
                };
                evolve_prepared(
                    &self.initial,
                    &self.propagator,
                    &self.localizer,
                    &self.config.propagator,
                    self.config.horizon,
                    &mut rng,
                    &opts,
                )
                .map(|t| t.record)
            }
        }
    }

    /// Projective reduction at `measurement_time` with probability equal to the
    /// branch weight; no grid dynamics.
    fn wpr_record(&self, rng: &mut RngStream) -> TrajectoryRecord {
        let weights = self.config.branches().weights(&self.initial);
        let u = rng.uniform();
        let (outcome, post) = if u < weights[0] {
            (Outcome::First, [1.0, 0.0])
        } else {
            (Outcome::Second, [0.0, 1.0])
        };
        TrajectoryRecord {
            scenario: self.config.name.clone(),
            seeds: rng.id(),
            events: Vec::new(),
            series: vec![Sample {
                time: self.config.measurement_time,
                branch_weights: post,
                mean: f64::NAN,
                variance: f64::NAN,
            }],
            outcome,
            final_branch_weights: post,
            wall_time_s: 0.0,
        }
    }

    /// Runs trajectories `0..n` on the current rayon pool, in index order.
    pub fn run(&self, trajectories: usize, master_seed: u64) -> Vec<Result<TrajectoryRecord>> {
        (0..trajectories as u64)
            .into_par_iter()
            .map(|k| self.trajectory(master_seed, k))
            .collect()
    }
}

fn collect_records(results: Vec<Result<TrajectoryRecord>>) -> Result<Vec<TrajectoryRecord>> {
    results.into_iter().collect()
}

fn check_convergence(config: &ScenarioConfig, tally: &OutcomeTally) -> Result<()> {
    if config.mode == Mode::Grw && tally.total > 0 && tally.undecided_fraction() > MAX_UNDECIDED_FRACTION {
        return Err(Error::NonConvergent {
            undecided: tally.counts[2],
            total: tally.total,
        });
    }
    Ok(())
}

/// Collapse of a two-peak superposition; each trajectory is labelled by the
/// region holding more than `1 − 10⁻³` of the weight at the horizon.
pub fn run_cat(config: &ScenarioConfig, trajectories: usize, master_seed: u64) -> Result<OutcomeTally> {
    if config.kind != ScenarioKind::Cat || config.mode == Mode::Wpr {
        return Err(Error::Validation("run_cat needs kind = cat and mode = grw or unitary".into()));
    }
    let runner = ScenarioRunner::new(config)?;
    let records = collect_records(runner.run(trajectories, master_seed))?;
    let tally = OutcomeTally::from_outcomes(records.iter().map(|r| r.outcome));
    check_convergence(config, &tally)?;
    Ok(tally)
}

/// Premeasurement followed by collapse dynamics on the pointer.
pub fn run_measurement_chain(
    config: &ScenarioConfig,
    trajectories: usize,
    master_seed: u64,
) -> Result<(OutcomeTally, Option<SurvivalStats>)> {
    if config.kind != ScenarioKind::MeasurementChain || config.mode == Mode::Wpr {
        return Err(Error::Validation(
            "run_measurement_chain needs kind = measurement_chain and mode = grw or unitary".into(),
        ));
    }
    let runner = ScenarioRunner::new(config)?;
    let records = collect_records(runner.run(trajectories, master_seed))?;
    let tally = OutcomeTally::from_outcomes(records.iter().map(|r| r.outcome));
    check_convergence(config, &tally)?;
    Ok((tally, SurvivalStats::from_records(&records)))
}

/// Copenhagen baseline: instantaneous projection with Born probabilities.
pub fn run_wpr_baseline(config: &ScenarioConfig, trajectories: usize, master_seed: u64) -> Result<OutcomeTally> {
    if config.mode != Mode::Wpr {
        return Err(Error::Validation("run_wpr_baseline needs mode = wpr".into()));
    }
    let runner = ScenarioRunner::new(config)?;
    let records = collect_records(runner.run(trajectories, master_seed))?;
    Ok(OutcomeTally::from_outcomes(records.iter().map(|r| r.outcome)))
}
