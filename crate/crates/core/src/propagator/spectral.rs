use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlannerScalar};

use super::Potential;
use crate::qstate::GridSpec;

/// FFT plans and phase tables for one grid.
///
/// Plans come from the scalar planner so results do not depend on which SIMD
/// instruction set the host happens to offer.
pub(crate) struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
    dt: f64,
    coupling: Vec<f64>,
    /// `None` for a free particle: kinetic evolution is then exact in one shot.
    potential: Option<PotentialPhases>,
}

struct PotentialPhases {
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    kinetic: Vec<Vec<Complex64>>,
}

fn phases(values: impl Iterator<Item = f64>, t: f64) -> Vec<Complex64> {
    values.map(|e| Complex64::from_polar(1.0, -e * t)).collect()
}

impl Spectral {
    pub(crate) fn new(grid: GridSpec, v: &Potential, coupling: Vec<f64>, dt: f64) -> Self {
        let mut s = Self::free(grid);
        s.dt = dt;
        if !v.is_free() {
            let values = v.values(&grid);
            let kinetic = coupling
                .iter()
                .map(|&g| phases(s.k.iter().map(|&k| 0.5 * k * k + g * k), dt))
                .collect();
            s.potential = Some(PotentialPhases {
                half: phases(values.iter().copied(), 0.5 * dt),
                full: phases(values.iter().copied(), dt),
                kinetic,
            });
        }
        s.coupling = coupling;
        s
    }

    pub(crate) fn free(grid: GridSpec) -> Self {
        let mut planner = FftPlannerScalar::new();
        let n = grid.n_points();
        Self {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            k: grid.wavenumbers(),
            dt: 0.0,
            coupling: Vec::new(),
            potential: None,
        }
    }

    fn scratch(&self) -> Vec<Complex64> {
        let len = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        vec![Complex64::new(0.0, 0.0); len]
    }

    fn inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inv.process_with_scratch(buf, scratch);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }

    /// Exact band-limited translation `ψ(x) → ψ(x − d)`.
    pub(crate) fn translate(&self, amps: &mut [Complex64], d: f64) {
        let mut scratch = self.scratch();
        self.fwd.process_with_scratch(amps, &mut scratch);
        for (z, &k) in amps.iter_mut().zip(&self.k) {
            *z *= Complex64::from_polar(1.0, -k * d);
        }
        self.inverse(amps, &mut scratch);
    }

    /// Strang-split evolution by `n_steps · dt`, level by level.
    pub(crate) fn advance(&self, amps: &mut [Complex64], n: usize, n_steps: usize) {
        let mut scratch = self.scratch();
        for (level, buf) in amps.chunks_exact_mut(n).enumerate() {
            let g = self.coupling.get(level).copied().unwrap_or(0.0);
            match &self.potential {
                None => {
                    let t = self.dt * n_steps as f64;
                    self.fwd.process_with_scratch(buf, &mut scratch);
                    for (z, &k) in buf.iter_mut().zip(&self.k) {
                        *z *= Complex64::from_polar(1.0, -(0.5 * k * k + g * k) * t);
                    }
                    self.inverse(buf, &mut scratch);
                }
                Some(p) => {
                    let kinetic = &p.kinetic[level];
                    mul(buf, &p.half);
                    for step in 0..n_steps {
                        self.fwd.process_with_scratch(buf, &mut scratch);
                        mul(buf, kinetic);
                        self.inverse(buf, &mut scratch);
                        mul(buf, if step + 1 == n_steps { &p.half } else { &p.full });
                    }
                }
            }
        }
    }
}

fn mul(buf: &mut [Complex64], phase: &[Complex64]) {
    for (z, p) in buf.iter_mut().zip(phase) {
        *z *= p;
    }
}
