//! Spontaneous localization: Poisson hit scheduling, hit-center sampling and
//! the Gaussian localization operator.
//!
//! A hit centred at `x` maps `ψ ↦ j(· − x) ψ / R(x)` with
//! `j(d) = K exp(−d² / 2a²)`, where `K` makes `Σ_i j(x_i − x)² dx = 1`. The
//! center is drawn from `P(x) = R(x)² = ‖j(· − x) ψ‖²`, which integrates to one
//! for every normalized `ψ` under this normalization of `j`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Exp1;
use rustfft::{Fft, FftPlannerScalar};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::{Potential, Propagator, PropagatorConfig};
use crate::qstate::{position_moments, GridSpec, WaveFunction, ZERO_NORM_SQR};
pub use crate::rng::{RngStream, SeedPair};

/// Minimum grid points per localization width.
pub const MIN_POINTS_PER_WIDTH: f64 = 4.0;
/// A branch holding more than `1 − DECIDED_THRESHOLD` of the weight is a definite outcome.
pub const DECIDED_THRESHOLD: f64 = 1e-3;
/// Hit times snap to the dt lattice; dt may be at most this fraction of the mean gap.
pub const MAX_DT_FRACTION_OF_GAP: f64 = 1.0 / 20.0;

/// The two constants of the theory plus the constituent count the collapsing
/// coordinate stands for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrwParams {
    /// Mean time between hits for one constituent. `+∞` switches collapse off.
    pub tau: f64,
    /// Localization width.
    pub a: f64,
    /// Number of constituents; multiplies the hit rate.
    #[serde(default = "one")]
    pub n_eff: f64,
}

fn one() -> f64 {
    1.0
}

impl GrwParams {
    pub fn new(tau: f64, a: f64, n_eff: f64) -> Result<Self> {
        let p = Self { tau, a, n_eff };
        p.validate()?;
        Ok(p)
    }

    /// Pure Schrödinger dynamics with the given width on record.
    pub fn no_collapse(a: f64) -> Self {
        Self {
            tau: f64::INFINITY,
            a,
            n_eff: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || self.tau.is_nan() {
            return Err(Error::InvalidParams(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParams(format!("a must be positive, got {}", self.a)));
        }
        if !(self.n_eff >= 1.0 && self.n_eff.is_finite()) {
            return Err(Error::InvalidParams(format!("n_eff must be >= 1, got {}", self.n_eff)));
        }
        Ok(())
    }

    pub fn validate_for_grid(&self, grid: &GridSpec) -> Result<()> {
        self.validate()?;
        if self.a < MIN_POINTS_PER_WIDTH * grid.dx() * (1.0 - 1e-12) {
            return Err(Error::UnresolvedWidth {
                a: self.a,
                dx: grid.dx(),
            });
        }
        Ok(())
    }

    /// Hit rate `n_eff / tau` of the collective coordinate.
    pub fn rate(&self) -> f64 {
        self.n_eff / self.tau
    }

    /// Mean waiting time `tau / n_eff` before the next hit.
    pub fn mean_gap(&self) -> f64 {
        self.tau / self.n_eff
    }

    pub fn with_n_eff(self, n_eff: f64) -> Self {
        Self { n_eff, ..self }
    }
}

/// Which pair of weights a trajectory tracks as its two branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Branches {
    /// Weights of internal levels 0 and 1.
    Levels,
    /// Weights of `x < split` and `x ≥ split`.
    Split { at: f64 },
}

impl Branches {
    pub fn weights(&self, psi: &WaveFunction) -> [f64; 2] {
        match *self {
            Branches::Levels => {
                let w = psi.level_weights();
                let first = w.first().copied().unwrap_or(0.0);
                let rest: f64 = w.iter().skip(1).sum();
                pair(first, rest)
            }
            Branches::Split { at } => {
                let grid = psi.grid();
                let (mut left, mut right) = (0.0, 0.0);
                for (i, r) in psi.density().into_iter().enumerate() {
                    if grid.x(i) < at {
                        left += r;
                    } else {
                        right += r;
                    }
                }
                pair(left, right)
            }
        }
    }
}

fn pair(a: f64, b: f64) -> [f64; 2] {
    let s = a + b;
    if s > 0.0 {
        [a / s, b / s]
    } else {
        [0.0, 0.0]
    }
}

/// One recorded localization hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    /// Which argument of the wavefunction was hit; always 0 for one collective coordinate.
    pub coordinate_index: usize,
    pub center: f64,
    pub pre_branch_weights: [f64; 2],
    pub post_branch_weights: [f64; 2],
}

/// Outcome label of a trajectory at its horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "undecided")]
    Undecided,
}

impl Outcome {
    pub fn from_weights(w: [f64; 2]) -> Self {
        if w[0] > 1.0 - DECIDED_THRESHOLD {
            Outcome::First
        } else if w[1] > 1.0 - DECIDED_THRESHOLD {
            Outcome::Second
        } else {
            Outcome::Undecided
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::First => "1",
            Outcome::Second => "2",
            Outcome::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub branch_weights: [f64; 2],
    pub mean: f64,
    pub variance: f64,
}

/// One stochastic realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub scenario: String,
    pub seeds: SeedPair,
    pub events: Vec<JumpEvent>,
    pub series: Vec<Sample>,
    pub outcome: Outcome,
    pub final_branch_weights: [f64; 2],
    /// Excluded from serialized logs so they stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrajectoryRecord {
    /// First event time at which a branch holds more than `1 − DECIDED_THRESHOLD`.
    pub fn survival_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| Outcome::from_weights(e.post_branch_weights) != Outcome::Undecided)
            .map(|e| e.time)
    }
}

/// Final state together with its record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: WaveFunction,
    pub record: TrajectoryRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOptions {
    pub scenario: String,
    pub branches: Branches,
}

/// Values of the normalized jump function `j(x_i − center)` on `grid`.
pub fn jump_function_values(center: f64, params: &GrwParams, grid: &GridSpec) -> Result<Vec<f64>> {
    params.validate_for_grid(grid)?;
    let a2 = params.a * params.a;
    let mut j: Vec<f64> = grid
        .positions()
        .map(|x| {
            let d = grid.periodic_offset(x - center);
            (-d * d / (2.0 * a2)).exp()
        })
        .collect();
    let sum_sq: f64 = j.iter().map(|v| v * v).sum::<f64>() * grid.dx();
    let k = 1.0 / sum_sq.sqrt();
    j.iter_mut().for_each(|v| *v *= k);
    Ok(j)
}

/// Precomputed `j²` kernel in Fourier space for one grid and width.
///
/// Read-only after construction; share it between trajectories on the same grid.
pub struct Localizer {
    grid: GridSpec,
    params: GrwParams,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex64>,
}

impl Localizer {
    pub fn new(grid: GridSpec, params: GrwParams) -> Result<Self> {
        params.validate_for_grid(&grid)?;
        let n = grid.n_points();
        let dx = grid.dx();
        let a2 = params.a * params.a;
        // j² on periodic offsets m·dx, normalized so Σ_m j²(m dx) dx = 1.
        let mut kernel: Vec<Complex64> = (0..n)
            .map(|m| {
                let d = grid.periodic_offset(m as f64 * dx);
                Complex64::new((-d * d / a2).exp(), 0.0)
            })
            .collect();
        let total: f64 = kernel.iter().map(|z| z.re).sum::<f64>() * dx;
        kernel.iter_mut().for_each(|z| *z /= total);

        let mut planner = FftPlannerScalar::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        fwd.process(&mut kernel);
        Ok(Self {
            grid,
            params,
            fwd,
            inv,
            kernel_hat: kernel,
        })
    }

    pub fn params(&self) -> &GrwParams {
        &self.params
    }

    /// `P(x_k) = Σ_s Σ_i j²(x_k − x_i) |ψ_s(x_i)|² dx` by circular convolution.
    pub fn center_density(&self, psi: &WaveFunction) -> Result<Vec<f64>> {
        if *psi.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.n_points();
        let mut buf: Vec<Complex64> = psi.density().into_iter().map(|r| Complex64::new(r, 0.0)).collect();
        self.fwd.process(&mut buf);
        for (z, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *z *= k;
        }
        self.inv.process(&mut buf);
        let scale = self.grid.dx() / n as f64;
        Ok(buf.into_iter().map(|z| (z.re * scale).max(0.0)).collect())
    }

    /// Draws a hit center by inverse-CDF sampling of the discrete density.
    pub fn sample_center(&self, psi: &WaveFunction, rng: &mut RngStream) -> Result<f64> {
        let density = self.center_density(psi)?;
        let dx = self.grid.dx();
        let mut cumulative = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        for p in &density {
            acc += p * dx;
            cumulative.push(acc);
        }
        if !(acc >= 1e-12) {
            return Err(Error::ZeroDensity(acc));
        }
        let u = rng.uniform() * acc;
        let idx = cumulative.partition_point(|&c| c <= u).min(density.len() - 1);
        Ok(self.grid.x(idx))
    }

    pub fn apply_jump(&self, psi: &WaveFunction, center: f64, branches: Branches) -> Result<(WaveFunction, JumpEvent)> {
        apply_jump_with(psi, center, &self.params, branches)
    }
}

/// Density of hit centers on the grid of `psi`.
pub fn center_density(psi: &WaveFunction, params: &GrwParams) -> Result<Vec<f64>> {
    Localizer::new(*psi.grid(), *params)?.center_density(psi)
}

/// Samples a hit center from [`center_density`].
pub fn sample_center(psi: &WaveFunction, params: &GrwParams, rng: &mut RngStream) -> Result<f64> {
    Localizer::new(*psi.grid(), *params)?.sample_center(psi, rng)
}

/// Applies one localization hit centred at `center`. The returned event has
/// `time = 0`; trajectory drivers stamp the actual time.
pub fn apply_jump(
    psi: &WaveFunction,
    center: f64,
    params: &GrwParams,
    branches: Branches,
) -> Result<(WaveFunction, JumpEvent)> {
    apply_jump_with(psi, center, params, branches)
}

fn apply_jump_with(
    psi: &WaveFunction,
    center: f64,
    params: &GrwParams,
    branches: Branches,
) -> Result<(WaveFunction, JumpEvent)> {
    let grid = *psi.grid();
    if !grid.contains(center) {
        return Err(Error::Validation(format!("hit center {center} lies outside the grid")));
    }
    let j = jump_function_values(center, params, &grid)?;
    let n = grid.n_points();
    let mut amps = psi.amplitudes().to_vec();
    for chunk in amps.chunks_exact_mut(n) {
        for (z, w) in chunk.iter_mut().zip(&j) {
            *z *= *w;
        }
    }
    let mut out = WaveFunction::from_parts_unchecked(grid, psi.levels(), amps);
    let r2 = out.norm_sqr();
    if !(r2 >= ZERO_NORM_SQR) {
        return Err(Error::ZeroNorm(r2));
    }
    out.renormalize()?;
    let event = JumpEvent {
        time: 0.0,
        coordinate_index: 0,
        center,
        pre_branch_weights: branches.weights(psi),
        post_branch_weights: branches.weights(&out),
    };
    Ok((out, event))
}

/// Hit times of a homogeneous Poisson process of rate `n_eff / tau` on `(0, horizon]`.
pub fn schedule_jumps(params: &GrwParams, horizon: f64, rng: &mut RngStream) -> Vec<f64> {
    let rate = params.rate();
    let mut times = Vec::new();
    if !(horizon > 0.0) || !(rate > 0.0) {
        return times;
    }
    let mut t = 0.0;
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap / rate;
        if t > horizon {
            break;
        }
        times.push(t);
    }
    times
}

/// Schrödinger evolution interleaved with localization hits at Poisson times.
///
/// Hit times are drawn first, then snapped to the nearest dt boundary; the
/// state is propagated in chunks of `cfg.steps_per_event_check` steps, with an
/// observable sample at every chunk boundary.
pub fn evolve_with_collapse(
    psi: &WaveFunction,
    v: &Potential,
    params: &GrwParams,
    cfg: &PropagatorConfig,
    horizon: f64,
    rng: &mut RngStream,
    opts: &TrajectoryOptions,
) -> Result<Trajectory> {
    let propagator = Propagator::new(*psi.grid(), psi.levels(), v, cfg)?;
    let localizer = Localizer::new(*psi.grid(), *params)?;
    evolve_prepared(psi, &propagator, &localizer, cfg, horizon, rng, opts)
}

/// Like [`evolve_with_collapse`] with propagator and localizer tables built once
/// and shared across an ensemble.
pub fn evolve_prepared(
    psi: &WaveFunction,
    propagator: &Propagator,
    localizer: &Localizer,
    cfg: &PropagatorConfig,
    horizon: f64,
    rng: &mut RngStream,
    opts: &TrajectoryOptions,
) -> Result<Trajectory> {
    let started = std::time::Instant::now();
    let params = localizer.params();
    let dt = propagator.dt();
    if dt > MAX_DT_FRACTION_OF_GAP * params.mean_gap() {
        return Err(Error::InvalidParams(format!(
            "dt = {dt} exceeds 1/20 of the mean hit gap {}",
            params.mean_gap()
        )));
    }
    let total = cfg.steps_in(horizon)?;
    let stride = cfg.steps_per_event_check.max(1);
    let seeds = rng.id();

    let event_steps: Vec<usize> = schedule_jumps(params, horizon, rng)
        .into_iter()
        .map(|t| ((t / dt).round() as usize).min(total))
        .collect();

    let mut state = psi.clone();
    let mut events = Vec::with_capacity(event_steps.len());
    let mut series = Vec::with_capacity(total / stride + 2);
    let mut pending = event_steps.iter().copied().peekable();
    let mut cur = 0usize;
    loop {
        while pending.peek() == Some(&cur) {
            pending.next();
            let center = localizer.sample_center(&state, rng)?;
            let (next, mut event) = localizer.apply_jump(&state, center, opts.branches)?;
            event.time = cur as f64 * dt;
            events.push(event);
            state = next;
        }
        if cur.is_multiple_of(stride) || cur == total {
            let (mean, variance) = position_moments(&state);
            series.push(Sample {
                time: cur as f64 * dt,
                branch_weights: opts.branches.weights(&state),
                mean,
                variance,
            });
        }
        if cur == total {
            break;
        }
        let boundary = ((cur / stride + 1) * stride).min(total);
        let target = pending.peek().map_or(boundary, |&s| s.min(boundary));
        propagator.advance(&mut state, target - cur)?;
        cur = target;
    }

    let final_branch_weights = opts.branches.weights(&state);
    let record = TrajectoryRecord {
        scenario: opts.scenario.clone(),
        seeds,
        events,
        series,
        outcome: Outcome::from_weights(final_branch_weights),
        final_branch_weights,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(Trajectory {
        final_state: state,
        record,
    })
}

#[cfg(test)]
mod tests;
