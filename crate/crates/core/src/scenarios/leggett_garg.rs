//! Two-time correlations of a precessing two-level system with projective
//! readout of `Q = ±1` on the level index.
//!
//! Collapse mode treats each localization hit on a far-separated pointer as a
//! projective `Q` measurement: once the pointer branches are many widths apart
//! a single hit leaves one branch with all but a vanishing fraction of the
//! weight, chosen with the Born probability.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collapse::{schedule_jumps, GrwParams};
use crate::error::{Error, Result};
use crate::rng::RngStream;

type Qubit = [Complex64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgConfig {
    pub name: String,
    /// Precession angular frequency.
    pub omega: f64,
    pub times: [f64; 3],
    /// Hits between readouts; `None` is plain unitary precession.
    pub collapse: Option<GrwParams>,
}

impl LgConfig {
    pub fn new(omega: f64, times: [f64; 3], collapse: Option<GrwParams>) -> Result<Self> {
        let c = Self {
            name: "leggett_garg".into(),
            omega,
            times,
            collapse,
        };
        c.validate()?;
        Ok(c)
    }

    /// Equal spacing `Δt` starting at `t₁ = 0`.
    pub fn equally_spaced(omega: f64, spacing: f64, collapse: Option<GrwParams>) -> Result<Self> {
        Self::new(omega, [0.0, spacing, 2.0 * spacing], collapse)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::Validation(format!("omega = {} must be positive", self.omega)));
        }
        let [t1, t2, t3] = self.times;
        if !(t1.is_finite() && t1 >= 0.0 && t1 < t2 && t2 < t3 && t3.is_finite()) {
            return Err(Error::Validation(format!(
                "measurement times {:?} must be finite, nonnegative and increasing",
                self.times
            )));
        }
        if let Some(p) = &self.collapse {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgResult {
    pub c12: f64,
    pub c23: f64,
    pub c13: f64,
    pub k: f64,
    pub trajectories: usize,
}

impl LgResult {
    pub fn macrorealist(&self) -> bool {
        self.k <= 1.0
    }
}

/// Readout products `Q(tᵢ)Q(tⱼ)` of one trajectory for the pairs (1,2), (2,3), (1,3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LgSample {
    pub products: [i8; 3],
    pub hits: usize,
}

/// `K` of unitary precession with projective readouts.
pub fn predicted_unitary_k(omega: f64, times: [f64; 3]) -> f64 {
    let c = |a: f64, b: f64| (omega * (b - a)).cos();
    c(times[0], times[1]) + c(times[1], times[2]) - c(times[0], times[2])
}

fn precess(psi: &mut Qubit, omega: f64, dt: f64) {
    let (s, c) = (0.5 * omega * dt).sin_cos();
    let mi_s = Complex64::new(0.0, -s);
    let [a, b] = *psi;
    psi[0] = c * a + mi_s * b;
    psi[1] = mi_s * a + c * b;
}

/// Projective `Q` readout; returns `+1` for level 0.
fn measure(psi: &mut Qubit, rng: &mut RngStream) -> i8 {
    let p0 = psi[0].norm_sqr() / (psi[0].norm_sqr() + psi[1].norm_sqr());
    if rng.uniform() < p0 {
        *psi = [psi[0] / psi[0].norm(), Complex64::new(0.0, 0.0)];
        1
    } else {
        *psi = [Complex64::new(0.0, 0.0), psi[1] / psi[1].norm()];
        -1
    }
}

/// Evolves over `[0, duration]` with hits, returning the hit count.
fn evolve(psi: &mut Qubit, config: &LgConfig, duration: f64, rng: &mut RngStream) -> usize {
    let mut hits = 0;
    let mut now = 0.0;
    if let Some(p) = &config.collapse {
        for t in schedule_jumps(p, duration, rng) {
            precess(psi, config.omega, t - now);
            measure(psi, rng);
            now = t;
            hits += 1;
        }
    }
    precess(psi, config.omega, duration - now);
    hits
}

/// One two-time experiment: prepare `|0⟩`, read at `ta`, read at `tb`.
fn two_time(config: &LgConfig, ta: f64, tb: f64, rng: &mut RngStream) -> (i8, usize) {
    let mut psi = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let mut hits = evolve(&mut psi, config, ta, rng);
    let qa = measure(&mut psi, rng);
    hits += evolve(&mut psi, config, tb - ta, rng);
    let qb = measure(&mut psi, rng);
    (qa * qb, hits)
}

/// Each trajectory runs the three pairwise experiments on fresh preparations,
/// so a readout at the middle time never disturbs the (1,3) correlation.
pub fn lg_trajectory(config: &LgConfig, master_seed: u64, index: u64) -> LgSample {
    let mut rng = RngStream::for_trajectory(master_seed, index);
    let [t1, t2, t3] = config.times;
    let mut products = [0i8; 3];
    let mut hits = 0;
    for (slot, (ta, tb)) in [(t1, t2), (t2, t3), (t1, t3)].into_iter().enumerate() {
        let (q, h) = two_time(config, ta, tb, &mut rng);
        products[slot] = q;
        hits += h;
    }
    LgSample { products, hits }
}

pub fn run_leggett_garg(config: &LgConfig, trajectories: usize, master_seed: u64) -> Result<LgResult> {
    config.validate()?;
    if trajectories == 0 {
        return Err(Error::InsufficientData { decided: 0, required: 1 });
    }
    let samples: Vec<LgSample> = (0..trajectories as u64)
        .into_par_iter()
        .map(|k| lg_trajectory(config, master_seed, k))
        .collect();
    let mut sums = [0i64; 3];
    for s in &samples {
        for (acc, &q) in sums.iter_mut().zip(&s.products) {
            *acc += q as i64;
        }
    }
    let n = trajectories as f64;
    let [c12, c23, c13] = sums.map(|s| s as f64 / n);
    Ok(LgResult {
        c12,
        c23,
        c13,
        k: c12 + c23 - c13,
        trajectories,
    })
}
