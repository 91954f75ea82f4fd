//! Unitary Schrödinger evolution between collapse events.
//!
//! Internal units: ħ = 1, mass = 1, so `i ∂ψ/∂t = [−½ ∂²/∂x² + V(x) + g_s p] ψ`
//! where the optional level-diagonal term `g_s p` translates the level-`s`
//! component at velocity `g_s` (the system–pointer coupling).

mod crank_nicolson;
mod spectral;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{inner_product, GridSpec, WaveFunction, NORM_TOLERANCE};

use crank_nicolson::CrankNicolson;
pub(crate) use spectral::Spectral;

/// Norm drift allowed over one `step` call before it is reported as unstable.
pub const UNSTABLE_DRIFT: f64 = 1e-6;
/// Per-step drift allowed by the startup dry run.
pub const DRY_RUN_DRIFT: f64 = 1e-10;
const DRY_RUN_STEPS: usize = 100;

/// Pointer overlap above which premeasurement branches are flagged as not
/// macroscopically distinguishable.
pub const SEPARATION_WARNING: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Free,
    Harmonic { omega: f64 },
    /// `V(x) = barrier · ((2x / separation)² − 1)²`, minima at `±separation/2`.
    DoubleWell { barrier: f64, separation: f64 },
    Tabulated { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    #[serde(flatten)]
    pub kind: PotentialKind,
    /// Per-level pointer velocities `g_s`; `None` for a plain particle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Vec<f64>>,
}

impl Potential {
    pub fn free() -> Self {
        Self {
            kind: PotentialKind::Free,
            coupling: None,
        }
    }

    pub fn harmonic(omega: f64) -> Self {
        Self {
            kind: PotentialKind::Harmonic { omega },
            coupling: None,
        }
    }

    pub fn double_well(barrier: f64, separation: f64) -> Self {
        Self {
            kind: PotentialKind::DoubleWell {
                barrier,
                separation,
            },
            coupling: None,
        }
    }

    pub fn tabulated(values: Vec<f64>) -> Self {
        Self {
            kind: PotentialKind::Tabulated { values },
            coupling: None,
        }
    }

    /// Level-diagonal translation generator: level `s` moves at velocity `velocities[s]`.
    pub fn with_coupling(mut self, velocities: Vec<f64>) -> Self {
        self.coupling = Some(velocities);
        self
    }

    /// Symmetric measurement coupling: level 0 moves to `+displacement`,
    /// level 1 to `−displacement`, over unit time.
    pub fn pointer_coupling(displacement: f64) -> Self {
        Self::free().with_coupling(vec![displacement, -displacement])
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, PotentialKind::Free)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        match &self.kind {
            PotentialKind::Free => {}
            PotentialKind::Harmonic { omega } => {
                if !(*omega > 0.0 && omega.is_finite()) {
                    return Err(Error::InvalidPotential(format!(
                        "harmonic omega must be positive, got {omega}"
                    )));
                }
            }
            PotentialKind::DoubleWell {
                barrier,
                separation,
            } => {
                if !(barrier.is_finite() && *separation > 0.0 && separation.is_finite()) {
                    return Err(Error::InvalidPotential(
                        "double well needs finite barrier and positive separation".into(),
                    ));
                }
            }
            PotentialKind::Tabulated { values } => {
                if values.len() != grid.n_points() {
                    return Err(Error::InvalidPotential(format!(
                        "{} tabulated values for {} grid points",
                        values.len(),
                        grid.n_points()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidPotential("tabulated values must be finite".into()));
                }
            }
        }
        if let Some(g) = &self.coupling {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPotential("coupling velocities must be finite".into()));
            }
        }
        Ok(())
    }

    /// Potential energy at each grid point.
    pub fn values(&self, grid: &GridSpec) -> Vec<f64> {
        match &self.kind {
            PotentialKind::Free => vec![0.0; grid.n_points()],
            PotentialKind::Harmonic { omega } => grid
                .positions()
                .map(|x| 0.5 * omega * omega * x * x)
                .collect(),
            PotentialKind::DoubleWell {
                barrier,
                separation,
            } => grid
                .positions()
                .map(|x| {
                    let u = 2.0 * x / separation;
                    barrier * (u * u - 1.0).powi(2)
                })
                .collect(),
            PotentialKind::Tabulated { values } => values.clone(),
        }
    }

    pub(crate) fn coupling_for(&self, levels: usize) -> Result<Vec<f64>> {
        match &self.coupling {
            None => Ok(vec![0.0; levels]),
            Some(g) if g.len() == levels => Ok(g.clone()),
            Some(g) => Err(Error::InvalidPotential(format!(
                "coupling has {} levels, state has {levels}",
                g.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    SplitStep,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    #[serde(default)]
    pub method: Method,
    pub dt: f64,
    #[serde(default = "default_steps_per_event_check")]
    pub steps_per_event_check: usize,
}

fn default_steps_per_event_check() -> usize {
    50
}

impl PropagatorConfig {
    pub fn new(method: Method, dt: f64) -> Self {
        Self {
            method,
            dt,
            steps_per_event_check: default_steps_per_event_check(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidPropagator(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps_per_event_check == 0 {
            return Err(Error::InvalidPropagator(
                "steps_per_event_check must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Runs 100 steps on `psi` and checks the per-step norm drift.
    pub fn dry_run(&self, psi: &WaveFunction, v: &Potential) -> Result<()> {
        self.validate()?;
        let prop = Propagator::new(*psi.grid(), psi.levels(), v, self)?;
        let mut probe = psi.clone();
        let before = probe.norm_sqr();
        prop.advance(&mut probe, DRY_RUN_STEPS)?;
        let drift = (probe.norm_sqr() - before).abs() / DRY_RUN_STEPS as f64;
        if drift > DRY_RUN_DRIFT {
            return Err(Error::UnstableStep {
                drift,
                tolerance: DRY_RUN_DRIFT,
            });
        }
        Ok(())
    }

    /// Number of whole steps in `t`, or an error if `t` is not a multiple of dt.
    pub fn steps_in(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::NotMultipleOfDt { t, dt: self.dt });
        }
        let n = (t / self.dt).round();
        if (n * self.dt - t).abs() > 1e-9 * t.max(self.dt) {
            return Err(Error::NotMultipleOfDt { t, dt: self.dt });
        }
        Ok(n as usize)
    }
}

enum Engine {
    Spectral(Spectral),
    CrankNicolson(CrankNicolson),
}

/// A propagator prepared for one grid, level count, potential and time step.
///
/// Holds only read-only tables; scratch space is allocated per call, so one
/// instance can be shared between threads.
pub struct Propagator {
    engine: Engine,
    dt: f64,
}

impl Propagator {
    pub fn new(grid: GridSpec, levels: usize, v: &Potential, cfg: &PropagatorConfig) -> Result<Self> {
        cfg.validate()?;
        v.validate(&grid)?;
        let coupling = v.coupling_for(levels)?;
        let engine = match cfg.method {
            Method::SplitStep => Engine::Spectral(Spectral::new(grid, v, coupling, cfg.dt)),
            Method::CrankNicolson => {
                Engine::CrankNicolson(CrankNicolson::new(grid, &v.values(&grid), &coupling, cfg.dt))
            }
        };
        Ok(Self { engine, dt: cfg.dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `psi` in place by `n_steps · dt`.
    pub fn advance(&self, psi: &mut WaveFunction, n_steps: usize) -> Result<()> {
        if n_steps == 0 {
            return Ok(());
        }
        let before = psi.norm_sqr();
        let n = psi.grid().n_points();
        match &self.engine {
            Engine::Spectral(s) => s.advance(psi.amplitudes_mut(), n, n_steps),
            Engine::CrankNicolson(c) => c.advance(psi.amplitudes_mut(), n, n_steps),
        }
        let after = psi.norm_sqr();
        let drift = (after - before).abs();
        if !(drift <= UNSTABLE_DRIFT) {
            return Err(Error::UnstableStep {
                drift,
                tolerance: UNSTABLE_DRIFT,
            });
        }
        // Fold accumulated rounding back onto the unit sphere.
        if drift > 0.0 {
            psi.renormalize()?;
        }
        Ok(())
    }
}

/// Evolves `psi` for duration `t`, which must be an integer multiple of `cfg.dt`.
pub fn step(psi: &WaveFunction, v: &Potential, cfg: &PropagatorConfig, t: f64) -> Result<WaveFunction> {
    let n_steps = cfg.steps_in(t)?;
    let mut out = psi.clone();
    if n_steps == 0 {
        return Ok(out);
    }
    let prop = Propagator::new(*psi.grid(), psi.levels(), v, cfg)?;
    prop.advance(&mut out, n_steps)?;
    debug_assert!((out.norm_sqr() - 1.0).abs() < NORM_TOLERANCE);
    Ok(out)
}

/// Result of coupling a two-level system to a pointer.
#[derive(Debug, Clone)]
pub struct Premeasurement {
    pub state: WaveFunction,
    /// `|⟨A₁|A₂⟩|` of the displaced pointer states.
    pub pointer_overlap: f64,
}

impl Premeasurement {
    pub fn is_distinguishable(&self) -> bool {
        self.pointer_overlap <= SEPARATION_WARNING
    }
}

/// Entangles a two-level system with a pointer by the exact level-diagonal
/// translation `exp(−i g_s p t)`: `(c₁|1⟩ + c₂|2⟩)|A₀⟩ → c₁|1⟩|A₁⟩ + c₂|2⟩|A₂⟩`.
///
/// The coupling acts impulsively; only `coupling.coupling` is used and the
/// system amplitudes are never altered (ideal measurement).
pub fn premeasurement_evolve(
    system: [Complex64; 2],
    pointer: &WaveFunction,
    coupling: &Potential,
    t: f64,
) -> Result<Premeasurement> {
    let total = system[0].norm_sqr() + system[1].norm_sqr();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "system amplitudes have |c1|^2 + |c2|^2 = {total}, expected 1"
        )));
    }
    if pointer.levels() != 1 {
        return Err(Error::GridMismatch);
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Validation(format!("coupling duration {t} must be nonnegative")));
    }
    let velocities = coupling.coupling_for(2)?;
    let grid = *pointer.grid();
    let shifter = Spectral::free(grid);
    let branches: Vec<WaveFunction> = velocities
        .iter()
        .map(|&g| {
            let mut amps = pointer.amplitudes().to_vec();
            shifter.translate(&mut amps, g * t);
            WaveFunction::from_parts_unchecked(grid, 1, amps)
        })
        .collect();
    let pointer_overlap = inner_product(&branches[0], &branches[1])?.norm();
    if pointer_overlap > SEPARATION_WARNING {
        log::warn!(
            "insufficient pointer separation: |<A1|A2>| = {pointer_overlap:.3e} > {SEPARATION_WARNING:e}"
        );
    }
    let state = WaveFunction::from_levels(&branches, &system)?;
    Ok(Premeasurement {
        state,
        pointer_overlap,
    })
}

#[cfg(test)]
mod tests;
