use num_complex::Complex64;

use crate::qstate::GridSpec;

/// Crank–Nicolson on the periodic second-difference Laplacian.
///
/// Each step solves `(1 + i dt H/2) ψ' = (1 − i dt H/2) ψ` with `H` cyclic
/// tridiagonal; the corner terms are handled by Sherman–Morrison, and the
/// Thomas factorisation is computed once per level.
pub(crate) struct CrankNicolson {
    levels: Vec<LevelSystem>,
}

struct LevelSystem {
    /// Stencil of `H`: sub, diagonal, super.
    h_sub: Complex64,
    h_diag: Vec<Complex64>,
    h_sup: Complex64,
    half_dt: f64,
    solver: CyclicTridiagonal,
}

impl CrankNicolson {
    pub(crate) fn new(grid: GridSpec, potential: &[f64], coupling: &[f64], dt: f64) -> Self {
        let dx = grid.dx();
        let lap = 1.0 / (2.0 * dx * dx);
        let i = Complex64::i();
        let levels = coupling
            .iter()
            .map(|&g| {
                let drift = g / (2.0 * dx);
                let h_sub = Complex64::new(-lap, drift);
                let h_sup = Complex64::new(-lap, -drift);
                let h_diag: Vec<Complex64> = potential
                    .iter()
                    .map(|&v| Complex64::new(2.0 * lap + v, 0.0))
                    .collect();
                let a = i * 0.5 * dt * h_sub;
                let c = i * 0.5 * dt * h_sup;
                let b: Vec<Complex64> = h_diag.iter().map(|&d| 1.0 + i * 0.5 * dt * d).collect();
                LevelSystem {
                    h_sub,
                    h_diag,
                    h_sup,
                    half_dt: 0.5 * dt,
                    solver: CyclicTridiagonal::new(a, &b, c),
                }
            })
            .collect();
        Self { levels }
    }

    pub(crate) fn advance(&self, amps: &mut [Complex64], n: usize, n_steps: usize) {
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        for (sys, buf) in self.levels.iter().zip(amps.chunks_exact_mut(n)) {
            for _ in 0..n_steps {
                sys.explicit_half(buf, &mut rhs);
                sys.solver.solve(&rhs, buf);
            }
        }
    }
}

impl LevelSystem {
    /// `out = (1 − i dt H / 2) psi`.
    fn explicit_half(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let n = psi.len();
        let f = -Complex64::i() * self.half_dt;
        for j in 0..n {
            let left = psi[(j + n - 1) % n];
            let right = psi[(j + 1) % n];
            let h = self.h_sub * left + self.h_diag[j] * psi[j] + self.h_sup * right;
            out[j] = psi[j] + f * h;
        }
    }
}

/// Solver for `A x = r` where `A` has constant off-diagonals `a` (sub) and
/// `c` (super), diagonal `b`, and periodic corners `A[0][n−1] = a`,
/// `A[n−1][0] = c`.
pub(crate) struct CyclicTridiagonal {
    a: Complex64,
    beta: Complex64,
    gamma: Complex64,
    /// Thomas factors of the corner-modified matrix.
    c_prime: Vec<Complex64>,
    inv_denom: Vec<Complex64>,
    /// Solution of the modified system against the Sherman–Morrison vector.
    z: Vec<Complex64>,
}

impl CyclicTridiagonal {
    pub(crate) fn new(a: Complex64, b: &[Complex64], c: Complex64) -> Self {
        let n = b.len();
        let alpha = c;
        let beta = a;
        let gamma = -b[0];
        let mut bb = b.to_vec();
        bb[0] = b[0] - gamma;
        bb[n - 1] = b[n - 1] - alpha * beta / gamma;

        let mut c_prime = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_denom = vec![Complex64::new(0.0, 0.0); n];
        inv_denom[0] = 1.0 / bb[0];
        c_prime[0] = c * inv_denom[0];
        for j in 1..n {
            inv_denom[j] = 1.0 / (bb[j] - a * c_prime[j - 1]);
            c_prime[j] = c * inv_denom[j];
        }
        let mut s = Self {
            a,
            beta,
            gamma,
            c_prime,
            inv_denom,
            z: Vec::new(),
        };
        let mut u = vec![Complex64::new(0.0, 0.0); n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        s.thomas(&u, &mut z);
        s.z = z;
        s
    }

    fn thomas(&self, r: &[Complex64], x: &mut [Complex64]) {
        let n = r.len();
        x[0] = r[0] * self.inv_denom[0];
        for j in 1..n {
            x[j] = (r[j] - self.a * x[j - 1]) * self.inv_denom[j];
        }
        for j in (0..n - 1).rev() {
            let next = x[j + 1];
            x[j] -= self.c_prime[j] * next;
        }
    }

    pub(crate) fn solve(&self, r: &[Complex64], x: &mut [Complex64]) {
        let n = r.len();
        self.thomas(r, x);
        let z = &self.z;
        let fact = (x[0] + self.beta * x[n - 1] / self.gamma)
            / (1.0 + z[0] + self.beta * z[n - 1] / self.gamma);
        for (xi, zi) in x.iter_mut().zip(z) {
            *xi -= fact * zi;
        }
    }
}
