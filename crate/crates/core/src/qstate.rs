//! Grid wavefunctions and elementary state algebra.
//!
//! A [`WaveFunction`] stores `levels × n_points` complex amplitudes laid out
//! level-major: the amplitude of internal level `s` at grid point `i` lives at
//! index `s * n_points + i`. Every public constructor returns a state with unit
//! squared norm `Σ_s Σ_i |ψ_s(x_i)|² dx`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared norms below this are treated as an empty state.
pub const ZERO_NORM_SQR: f64 = 1e-30;

/// Tolerance on the unit-norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Uniform periodic grid on `[x_min, x_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if n_points < 8 {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points}, need at least 8"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Always derived from the bounds, never stored.
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.x(i))
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * std::f64::consts::PI / self.length();
        (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                m * dk
            })
            .collect()
    }

    /// Minimum-image separation on the periodic domain.
    pub fn periodic_offset(&self, d: f64) -> f64 {
        let l = self.length();
        d - l * (d / l).round()
    }

    /// Index of the grid point nearest to `x` (periodic).
    pub fn nearest_index(&self, x: f64) -> usize {
        let n = self.n_points as f64;
        let idx = ((x - self.x_min) / self.dx()).round().rem_euclid(n);
        (idx as usize) % self.n_points
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }
}

/// Half-open interval `[lo, hi)` on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lo: f64,
    hi: f64,
}

impl Region {
    pub fn new(lo: f64, hi: f64, grid: &GridSpec) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidRegion {
            lo,
            hi,
            reason: reason.to_string(),
        };
        if !(lo < hi) {
            return Err(bad("lo must be below hi"));
        }
        if !grid.contains(lo) || !grid.contains(hi) {
            return Err(bad("bounds must lie inside the grid"));
        }
        Ok(Self { lo, hi })
    }

    /// The whole grid.
    pub fn full(grid: &GridSpec) -> Self {
        Self {
            lo: grid.x_min(),
            hi: grid.x_max(),
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.hi <= other.lo || other.hi <= self.lo
    }
}

/// Complex amplitudes `ψ_s(x_i)` on a [`GridSpec`], with unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: GridSpec,
    levels: usize,
    amps: Vec<Complex64>,
}

/// Rescales raw amplitudes to unit norm. This is the only way to turn
/// arbitrary amplitudes into a [`WaveFunction`].
pub fn normalize(grid: GridSpec, levels: usize, amps: Vec<Complex64>) -> Result<WaveFunction> {
    if levels == 0 || amps.len() != levels * grid.n_points() {
        return Err(Error::GridMismatch);
    }
    if amps.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite);
    }
    let mut psi = WaveFunction { grid, levels, amps };
    psi.renormalize()?;
    Ok(psi)
}

/// `Σ_s Σ_i conj(φ_s(x_i)) ψ_s(x_i) dx`.
pub fn inner_product(phi: &WaveFunction, psi: &WaveFunction) -> Result<Complex64> {
    if phi.grid != psi.grid || phi.levels != psi.levels {
        return Err(Error::GridMismatch);
    }
    let sum: Complex64 = phi
        .amps
        .iter()
        .zip(&psi.amps)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(sum * psi.grid.dx())
}

/// Born weight of `region`, summed over internal levels.
pub fn region_weight(psi: &WaveFunction, region: &Region) -> f64 {
    let n = psi.grid.n_points();
    let dx = psi.grid.dx();
    let w: f64 = (0..n)
        .filter(|&i| region.contains(psi.grid.x(i)))
        .map(|i| (0..psi.levels).map(|s| psi.amps[s * n + i].norm_sqr()).sum::<f64>())
        .sum();
    (w * dx).clamp(0.0, 1.0)
}

/// Mean and variance of position under `|ψ|²` (levels summed).
pub fn position_moments(psi: &WaveFunction) -> (f64, f64) {
    let rho = psi.density();
    let dx = psi.grid.dx();
    let mut mean = 0.0;
    for (i, r) in rho.iter().enumerate() {
        mean += psi.grid.x(i) * r;
    }
    mean *= dx;
    let mut var = 0.0;
    for (i, r) in rho.iter().enumerate() {
        let d = psi.grid.x(i) - mean;
        var += d * d * r;
    }
    (mean, (var * dx).max(0.0))
}

impl WaveFunction {
    /// Gaussian packet whose probability density has mean `center` and
    /// standard deviation `sigma`, carrying mean momentum `momentum`.
    pub fn gaussian(grid: GridSpec, center: f64, sigma: f64, momentum: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidGrid(format!("packet width {sigma} must be positive")));
        }
        let amps = grid
            .positions()
            .map(|x| {
                let d = grid.periodic_offset(x - center);
                let env = (-d * d / (4.0 * sigma * sigma)).exp();
                Complex64::from_polar(env, momentum * d)
            })
            .collect();
        normalize(grid, 1, amps)
    }

    /// Coherent sum `Σ c_k g_k` of unit-norm Gaussian packets on a single level.
    ///
    /// `packets` holds `(coefficient, center, sigma)`. For well-separated
    /// packets the Born weight near packet `k` is `|c_k|² / Σ |c|²`.
    pub fn superposition(grid: GridSpec, packets: &[(Complex64, f64, f64)]) -> Result<Self> {
        let mut amps = vec![Complex64::new(0.0, 0.0); grid.n_points()];
        for &(c, center, sigma) in packets {
            let g = Self::gaussian(grid, center, sigma, 0.0)?;
            for (a, b) in amps.iter_mut().zip(&g.amps) {
                *a += c * b;
            }
        }
        normalize(grid, 1, amps)
    }

    /// Product state `Σ_s c_s |s⟩ ⊗ pointer`.
    pub fn tensor(coefficients: &[Complex64], pointer: &WaveFunction) -> Result<Self> {
        if pointer.levels != 1 {
            return Err(Error::GridMismatch);
        }
        let amps = coefficients
            .iter()
            .flat_map(|&c| pointer.amps.iter().map(move |a| c * a))
            .collect();
        normalize(pointer.grid, coefficients.len(), amps)
    }

    /// Assembles a state from per-level components; the result is normalized.
    pub fn from_levels(components: &[WaveFunction], coefficients: &[Complex64]) -> Result<Self> {
        let first = components.first().ok_or(Error::GridMismatch)?;
        if components.len() != coefficients.len()
            || components
                .iter()
                .any(|c| c.grid != first.grid || c.levels != 1)
        {
            return Err(Error::GridMismatch);
        }
        let amps = components
            .iter()
            .zip(coefficients)
            .flat_map(|(comp, &c)| comp.amps.iter().map(move |a| c * a))
            .collect();
        normalize(first.grid, components.len(), amps)
    }

    pub(crate) fn from_parts_unchecked(grid: GridSpec, levels: usize, amps: Vec<Complex64>) -> Self {
        debug_assert_eq!(amps.len(), levels * grid.n_points());
        Self { grid, levels, amps }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    /// Amplitudes of internal level `s`.
    pub fn level(&self, s: usize) -> &[Complex64] {
        let n = self.grid.n_points();
        &self.amps[s * n..(s + 1) * n]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// `Σ_s |ψ_s(x_i)|²` at each grid point.
    pub fn density(&self) -> Vec<f64> {
        let n = self.grid.n_points();
        let mut rho = vec![0.0; n];
        for chunk in self.amps.chunks_exact(n) {
            for (r, z) in rho.iter_mut().zip(chunk) {
                *r += z.norm_sqr();
            }
        }
        rho
    }

    /// Probability carried by each internal level.
    pub fn level_weights(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        self.amps
            .chunks_exact(self.grid.n_points())
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx)
            .collect()
    }

    /// Complex conjugate (the time-reversed state for a real Hamiltonian).
    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            levels: self.levels,
            amps: self.amps.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Largest pointwise amplitude difference.
    pub fn max_abs_diff(&self, other: &WaveFunction) -> Result<f64> {
        if self.grid != other.grid || self.levels != other.levels {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub(crate) fn renormalize(&mut self) -> Result<()> {
        let n2 = self.norm_sqr();
        if !(n2 >= ZERO_NORM_SQR) {
            return Err(Error::ZeroNorm(n2));
        }
        let scale = 1.0 / n2.sqrt();
        self.amps.iter_mut().for_each(|z| *z *= scale);
        Ok(())
    }
}
