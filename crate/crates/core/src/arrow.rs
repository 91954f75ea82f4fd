//! Kac ring: balls on a ring hop one site per step and flip color when they
//! cross a marked edge. Reversible and recurrent after `2n` steps, so
//! low-entropy futures can be planted in equilibrium-looking microstates.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Equilibrium band half-width around `m = ½`.
pub const EQUILIBRIUM_BAND: f64 = 0.05;
/// `|m − ½|` above this counts as an anti-thermal excursion.
pub const ANTI_THERMAL: f64 = 0.4;

const WORD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KacRing {
    n_sites: usize,
    /// Bit `i` is the color of the ball on site `i` (1 = black).
    colors: Vec<u64>,
    /// Bit `i` marks the edge from site `i` to site `i + 1`.
    markers: Vec<u64>,
    step_count: i64,
}

fn words(n: usize) -> usize {
    n.div_ceil(WORD)
}

fn pack(bits: impl ExactSizeIterator<Item = bool>) -> Vec<u64> {
    let mut out = vec![0u64; words(bits.len())];
    for (i, b) in bits.enumerate() {
        out[i / WORD] |= (b as u64) << (i % WORD);
    }
    out
}

fn bit(v: &[u64], i: usize) -> bool {
    v[i / WORD] >> (i % WORD) & 1 == 1
}

impl KacRing {
    pub fn new(colors: &[bool], markers: &[bool]) -> Result<Self> {
        if colors.is_empty() || colors.len() != markers.len() {
            return Err(Error::InvalidParams(format!(
                "ring needs equal nonzero lengths, got {} colors and {} markers",
                colors.len(),
                markers.len()
            )));
        }
        Ok(Self {
            n_sites: colors.len(),
            colors: pack(colors.iter().copied()),
            markers: pack(markers.iter().copied()),
            step_count: 0,
        })
    }

    /// Ring of up to 64 sites from bit masks.
    pub fn from_bits(n_sites: usize, colors: u64, markers: u64) -> Result<Self> {
        if n_sites == 0 || n_sites > WORD {
            return Err(Error::InvalidParams(format!("from_bits needs 1..=64 sites, got {n_sites}")));
        }
        let mask = if n_sites == WORD { u64::MAX } else { (1 << n_sites) - 1 };
        Ok(Self {
            n_sites,
            colors: vec![colors & mask],
            markers: vec![markers & mask],
            step_count: 0,
        })
    }

    /// Each edge marked with probability `marker_fraction`; colors fair coins.
    pub fn random(n_sites: usize, marker_fraction: f64, rng: &mut RngStream) -> Result<Self> {
        if !(0.0..=1.0).contains(&marker_fraction) {
            return Err(Error::InvalidParams(format!("marker_fraction {marker_fraction} not in [0, 1]")));
        }
        let markers: Vec<bool> = (0..n_sites).map(|_| rng.random_bool(marker_fraction)).collect();
        let colors: Vec<bool> = (0..n_sites).map(|_| rng.random_bool(0.5)).collect();
        Self::new(&colors, &markers)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn step_count(&self) -> i64 {
        self.step_count
    }

    pub fn color(&self, i: usize) -> bool {
        bit(&self.colors, i)
    }

    pub fn marker(&self, i: usize) -> bool {
        bit(&self.markers, i)
    }

    pub fn colors(&self) -> Vec<bool> {
        (0..self.n_sites).map(|i| self.color(i)).collect()
    }

    pub fn markers(&self) -> Vec<bool> {
        (0..self.n_sites).map(|i| self.marker(i)).collect()
    }

    /// Same ring with every ball set to `black`.
    pub fn with_uniform_colors(&self, black: bool) -> Self {
        let mut out = self.clone();
        out.colors.fill(if black { u64::MAX } else { 0 });
        out.clear_tail();
        out.step_count = 0;
        out
    }

    pub fn same_colors(&self, other: &KacRing) -> bool {
        self.n_sites == other.n_sites && self.colors == other.colors
    }

    pub fn black_count(&self) -> usize {
        self.colors.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Macrostate `m`: fraction of black balls.
    pub fn fraction(&self) -> f64 {
        self.black_count() as f64 / self.n_sites as f64
    }

    fn clear_tail(&mut self) {
        let r = self.n_sites % WORD;
        if r != 0 {
            *self.colors.last_mut().expect("nonempty") &= (1u64 << r) - 1;
        }
    }

    pub fn step(&mut self) {
        for (c, m) in self.colors.iter_mut().zip(&self.markers) {
            *c ^= m;
        }
        let top = bit(&self.colors, self.n_sites - 1) as u64;
        let mut carry = top;
        for w in self.colors.iter_mut() {
            let out = *w >> (WORD - 1);
            *w = (*w << 1) | carry;
            carry = out;
        }
        self.clear_tail();
        self.step_count += 1;
    }

    pub fn step_inverse(&mut self) {
        let low = self.colors[0] & 1;
        let last = self.colors.len() - 1;
        for k in 0..last {
            self.colors[k] = (self.colors[k] >> 1) | (self.colors[k + 1] << (WORD - 1));
        }
        self.colors[last] >>= 1;
        let top = self.n_sites - 1;
        self.colors[top / WORD] |= low << (top % WORD);
        for (c, m) in self.colors.iter_mut().zip(&self.markers) {
            *c ^= m;
        }
        self.step_count -= 1;
    }

    fn flip(&mut self, i: usize) {
        self.colors[i / WORD] ^= 1 << (i % WORD);
    }

    /// Deterministic step followed by independent color flips; returns the
    /// number of flips.
    pub fn step_perturbed(&mut self, pert: &mut PerturbationConfig) -> usize {
        self.step();
        let Some(geo) = pert.skip else {
            return 0;
        };
        let n = self.n_sites as u64;
        let mut pos = 0u64;
        let mut flips = 0;
        loop {
            // Failures before the next flip.
            let skip = geo.sample(&mut pert.rng);
            if skip >= n - pos {
                break;
            }
            pos += skip;
            self.flip(pos as usize);
            flips += 1;
            pos += 1;
            if pos == n {
                break;
            }
        }
        flips
    }
}

pub fn kac_step(ring: &KacRing) -> KacRing {
    let mut out = ring.clone();
    out.step();
    out
}

pub fn kac_step_inverse(ring: &KacRing) -> KacRing {
    let mut out = ring.clone();
    out.step_inverse();
    out
}

pub fn kac_step_perturbed(ring: &KacRing, pert: &mut PerturbationConfig) -> KacRing {
    let mut out = ring.clone();
    out.step_perturbed(pert);
    out
}

/// Per-site, per-step flip probability with its random stream.
#[derive(Debug, Clone)]
pub struct PerturbationConfig {
    flip_rate: f64,
    skip: Option<Geometric>,
    pub rng: RngStream,
}

impl PerturbationConfig {
    pub fn new(flip_rate: f64, rng: RngStream) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip_rate) {
            return Err(Error::InvalidParams(format!("flip_rate {flip_rate} not in [0, 1]")));
        }
        let skip = if flip_rate > 0.0 {
            Some(Geometric::new(flip_rate).map_err(|e| Error::InvalidParams(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { flip_rate, skip, rng })
    }

    pub fn flip_rate(&self) -> f64 {
        self.flip_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowConfig {
    pub n_sites: usize,
    pub marker_fraction: f64,
    pub flip_rate: f64,
    /// Steps; also the time at which bad microstates are engineered to be all black.
    pub horizon: usize,
    pub trials: usize,
    /// Sampling stride of the `m(t)` series.
    pub sample_every: usize,
}

impl ArrowConfig {
    /// Defaults: horizon `n/2`, 100 samples per series.
    pub fn new(n_sites: usize, marker_fraction: f64, flip_rate: f64, trials: usize) -> Self {
        let horizon = n_sites / 2;
        Self {
            n_sites,
            marker_fraction,
            flip_rate,
            horizon,
            trials,
            sample_every: (horizon / 100).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return Err(Error::InvalidParams("n_sites must be positive".into()));
        }
        if !(self.marker_fraction > 0.0 && self.marker_fraction < 0.5) {
            return Err(Error::InvalidParams(format!(
                "marker_fraction {} not in (0, 0.5)",
                self.marker_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_rate) {
            return Err(Error::InvalidParams(format!("flip_rate {} not in [0, 1]", self.flip_rate)));
        }
        if self.horizon >= 2 * self.n_sites {
            return Err(Error::InvalidHorizon {
                horizon: self.horizon,
                recurrence: 2 * self.n_sites,
            });
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParams("sample_every must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<usize> {
        let mut t: Vec<usize> = (0..=self.horizon).step_by(self.sample_every).collect();
        if t.last() != Some(&self.horizon) {
            t.push(self.horizon);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    /// Fraction of trials with `|m − ½| < 0.05` at the horizon.
    pub in_band_fraction: f64,
    /// Fraction of trials with `|m − ½| > 0.4` at the horizon.
    pub anti_thermal_fraction: f64,
    pub final_m: Vec<f64>,
    /// `m` at [`ArrowSummary::sample_times`], one row per trial.
    pub series: Vec<Vec<f64>>,
}

impl ArmSummary {
    fn from_series(series: Vec<Vec<f64>>) -> Self {
        let final_m: Vec<f64> = series.iter().map(|s| *s.last().expect("sampled at horizon")).collect();
        let frac = |pred: &dyn Fn(f64) -> bool| {
            if final_m.is_empty() {
                0.0
            } else {
                final_m.iter().filter(|&&m| pred(m)).count() as f64 / final_m.len() as f64
            }
        };
        Self {
            in_band_fraction: frac(&|m| (m - 0.5).abs() < EQUILIBRIUM_BAND),
            anti_thermal_fraction: frac(&|m| (m - 0.5).abs() > ANTI_THERMAL),
            final_m,
            series,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowSummary {
    pub config: ArrowConfig,
    pub master_seed: u64,
    pub sample_times: Vec<usize>,
    /// Bad microstates, deterministic dynamics.
    pub bad_unperturbed: ArmSummary,
    /// Bad microstates with per-site flips.
    pub bad_perturbed: ArmSummary,
    /// Random microstates, deterministic dynamics.
    pub typical_unperturbed: ArmSummary,
}

fn run_arm(mut ring: KacRing, config: &ArrowConfig, mut pert: Option<PerturbationConfig>) -> Vec<f64> {
    let mut out = Vec::with_capacity(config.horizon / config.sample_every + 2);
    for t in 0..=config.horizon {
        if t % config.sample_every == 0 || t == config.horizon {
            out.push(ring.fraction());
        }
        if t == config.horizon {
            break;
        }
        match pert.as_mut() {
            Some(p) => {
                ring.step_perturbed(p);
            }
            None => ring.step(),
        }
    }
    out
}

/// A microstate that looks typical now but turns all black after `horizon`
/// deterministic steps.
pub fn bad_microstate(ring: &KacRing, horizon: usize) -> KacRing {
    let mut bad = ring.with_uniform_colors(true);
    for _ in 0..horizon {
        bad.step_inverse();
    }
    bad.step_count = 0;
    bad
}

/// Trial `k` draws its ring from stream `2k` and its perturbation from `2k + 1`.
fn trial(config: &ArrowConfig, master_seed: u64, k: u64) -> Result<[Vec<f64>; 3]> {
    let mut rng = RngStream::for_trajectory(master_seed, 2 * k);
    let typical = KacRing::random(config.n_sites, config.marker_fraction, &mut rng)?;
    let bad = bad_microstate(&typical, config.horizon);
    let pert = PerturbationConfig::new(config.flip_rate, RngStream::for_trajectory(master_seed, 2 * k + 1))?;
    Ok([
        run_arm(bad.clone(), config, None),
        run_arm(bad, config, Some(pert)),
        run_arm(typical, config, None),
    ])
}

pub fn run_arrow(config: &ArrowConfig, master_seed: u64) -> Result<ArrowSummary> {
    config.validate()?;
    let trials: Vec<[Vec<f64>; 3]> = (0..config.trials as u64)
        .into_par_iter()
        .map(|k| trial(config, master_seed, k))
        .collect::<Result<_>>()?;
    let mut arms: [Vec<Vec<f64>>; 3] = Default::default();
    for t in trials {
        for (arm, s) in arms.iter_mut().zip(t) {
            arm.push(s);
        }
    }
    let [a, b, c] = arms;
    Ok(ArrowSummary {
        config: config.clone(),
        master_seed,
        sample_times: config.sample_times(),
        bad_unperturbed: ArmSummary::from_series(a),
        bad_perturbed: ArmSummary::from_series(b),
        typical_unperturbed: ArmSummary::from_series(c),
    })
}

pub fn equilibration_experiment(
    n_sites: usize,
    marker_fraction: f64,
    flip_rate: f64,
    horizon: usize,
    trials: usize,
    master_seed: u64,
) -> Result<ArrowSummary> {
    let config = ArrowConfig {
        horizon,
        sample_every: (horizon / 100).max(1),
        ..ArrowConfig::new(n_sites, marker_fraction, flip_rate, trials)
    };
    run_arrow(&config, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_step(colors: &[bool], markers: &[bool]) -> Vec<bool> {
        let n = colors.len();
        let mut out = vec![false; n];
        for i in 0..n {
            out[(i + 1) % n] = colors[i] ^ markers[i];
        }
        out
    }

    #[test]
    fn packed_step_matches_site_by_site_rule() {
        let mut rng = RngStream::new(1, 0);
        for n in [1, 2, 63, 64, 65, 127, 128, 200] {
            let ring = KacRing::random(n, 0.3, &mut rng).unwrap();
            let stepped = kac_step(&ring);
            assert_eq!(stepped.colors(), naive_step(&ring.colors(), &ring.markers()), "n = {n}");
            assert_eq!(stepped.markers(), ring.markers());
            assert_eq!(stepped.step_count(), 1);
        }
    }

    #[test]
    fn no_markers_is_pure_rotation() {
        let colors: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
        let mut ring = KacRing::new(&colors, &[false; 10]).unwrap();
        for _ in 0..7 {
            ring.step();
            assert_eq!(ring.black_count(), 4);
        }
        // After a full turn every ball is home.
        for _ in 0..3 {
            ring.step();
        }
        assert_eq!(ring.colors(), colors);
    }

    #[test]
    fn single_marker_flips_crossing_ball() {
        let mut colors = [false; 5];
        colors[2] = true;
        let mut markers = [false; 5];
        markers[2] = true;
        let ring = kac_step(&KacRing::new(&colors, &markers).unwrap());
        assert_eq!(ring.black_count(), 0);
    }

    #[test]
    fn exhaustive_recurrence_and_inverse_small_rings() {
        for n in 1..=12usize {
            let total = 1u64 << n;
            (0..total).into_par_iter().for_each(|markers| {
                for colors in 0..total {
                    let start = KacRing::from_bits(n, colors, markers).unwrap();
                    let mut ring = start.clone();
                    ring.step();
                    assert_eq!(kac_step_inverse(&ring), start);
                    for _ in 1..2 * n {
                        ring.step();
                    }
                    assert!(ring.same_colors(&start), "n={n} c={colors:b} m={markers:b}");
                }
            });
        }
    }

    #[test]
    fn random_large_rings_recur() {
        let mut rng = RngStream::new(2, 0);
        for _ in 0..1000 {
            let n = rng.random_range(13..=700);
            let start = KacRing::random(n, rng.random_range(0.0..0.5), &mut rng).unwrap();
            assert_eq!(kac_step_inverse(&kac_step(&start)), start);
            let mut ring = start.clone();
            for _ in 0..2 * n {
                ring.step();
            }
            assert!(ring.same_colors(&start));
        }
    }

    #[test]
    fn perturbation_limits() {
        let mut rng = RngStream::new(3, 0);
        let ring = KacRing::random(300, 0.2, &mut rng).unwrap();
        let mut off = PerturbationConfig::new(0.0, RngStream::new(3, 1)).unwrap();
        assert_eq!(kac_step_perturbed(&ring, &mut off), kac_step(&ring));
        let mut all = PerturbationConfig::new(1.0, RngStream::new(3, 2)).unwrap();
        let flipped = kac_step_perturbed(&ring, &mut all);
        let plain = kac_step(&ring);
        assert!(flipped.colors().iter().zip(plain.colors()).all(|(a, b)| *a != b));
        assert!(PerturbationConfig::new(1.5, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn mean_flip_count() {
        let mut rng = RngStream::new(4, 0);
        let mut ring = KacRing::random(10_000, 0.1, &mut rng).unwrap();
        let mut pert = PerturbationConfig::new(1e-3, RngStream::new(4, 1)).unwrap();
        let steps = 2000;
        let flips: usize = (0..steps).map(|_| ring.step_perturbed(&mut pert)).sum();
        let mean = flips as f64 / steps as f64;
        // Binomial(10⁴, 10⁻³) per step: sd of the mean ≈ √10/√2000.
        assert!((mean - 10.0).abs() < 3.0 * (10.0f64 * 0.999 / steps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn perturbed_rings_do_not_recur() {
        for k in 0..1000 {
            let mut rng = RngStream::new(5, k);
            let n = 64;
            let start = KacRing::random(n, 0.2, &mut rng).unwrap();
            let mut pert = PerturbationConfig::new(1e-3, RngStream::new(6, k)).unwrap();
            let mut ring = start.clone();
            let mut flips = 0;
            for _ in 0..2 * n {
                flips += ring.step_perturbed(&mut pert);
            }
            // Recurrence survives only when no flip happened at all.
            assert_eq!(ring.same_colors(&start), flips == 0, "trial {k}");
        }
    }

    #[test]
    fn bad_microstate_reaches_all_black() {
        let mut rng = RngStream::new(7, 0);
        let ring = KacRing::random(1000, 0.1, &mut rng).unwrap();
        let bad = bad_microstate(&ring, 400);
        assert!((bad.fraction() - 0.5).abs() < 0.1, "looks typical: {}", bad.fraction());
        let mut fwd = bad.clone();
        for _ in 0..400 {
            fwd.step();
        }
        assert_eq!(fwd.fraction(), 1.0);
        assert_eq!(fwd.markers(), ring.markers());
    }

    #[test]
    fn horizon_at_recurrence_is_rejected() {
        assert!(matches!(
            equilibration_experiment(100, 0.1, 0.0, 200, 1, 0),
            Err(Error::InvalidHorizon { .. })
        ));
        assert!(equilibration_experiment(100, 0.5, 0.0, 50, 1, 0).is_err());
    }

    #[test]
    fn small_experiment_shape_and_determinism() {
        let s = equilibration_experiment(2000, 0.1, 1e-2, 1000, 8, 9).unwrap();
        assert_eq!(s.sample_times.first(), Some(&0));
        assert_eq!(s.sample_times.last(), Some(&1000));
        for arm in [&s.bad_unperturbed, &s.bad_perturbed, &s.typical_unperturbed] {
            assert_eq!(arm.series.len(), 8);
            assert!(arm.series.iter().all(|row| row.len() == s.sample_times.len()));
        }
        assert_eq!(s.bad_unperturbed.anti_thermal_fraction, 1.0);
        assert_eq!(s, equilibration_experiment(2000, 0.1, 1e-2, 1000, 8, 9).unwrap());
    }
}
