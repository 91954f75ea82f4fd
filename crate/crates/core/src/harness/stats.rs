use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::scenarios::OutcomeTally;

/// Decided trajectories needed before a chi-square is meaningful.
pub const MIN_DECIDED: usize = 100;
/// Confidence level of the slope interval in [`fit_scaling`].
pub const SLOPE_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p_value: f64,
    /// Set when an outcome with zero expected probability was observed.
    pub impossible_outcome: bool,
    /// Excluded from the statistic, reported here.
    pub undecided: usize,
}

/// One-degree-of-freedom goodness of fit of decided counts against `expected`.
pub fn born_chi_square(tally: &OutcomeTally, expected: [f64; 2]) -> Result<ChiSquare> {
    let n = tally.decided();
    if n < MIN_DECIDED {
        return Err(Error::InsufficientData {
            decided: n,
            required: MIN_DECIDED,
        });
    }
    let total = expected[0] + expected[1];
    if !(total > 0.0) || expected.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::Validation(format!("expected probabilities {expected:?} are not a distribution")));
    }
    let mut statistic = 0.0;
    let mut impossible = false;
    for (&p, &count) in expected.iter().zip(&tally.counts) {
        let e = n as f64 * p / total;
        let o = count as f64;
        if e == 0.0 {
            if o > 0.0 {
                impossible = true;
                statistic = f64::INFINITY;
            }
            continue;
        }
        statistic += (o - e) * (o - e) / e;
    }
    let p_value = if statistic.is_infinite() {
        0.0
    } else {
        let dist = ChiSquared::new(1.0).expect("one degree of freedom");
        dist.sf(statistic).clamp(0.0, 1.0)
    };
    Ok(ChiSquare {
        statistic,
        p_value,
        impossible_outcome: impossible,
        undecided: tally.counts[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval on the slope.
    pub slope_ci: (f64, f64),
    pub points: usize,
}

/// Least squares of `log10 y` against `log10 x`.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 3", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::DegenerateFit("log-log fit needs positive finite values".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("abscissae are not distinct".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let dof = n - 2.0;
    let half = if dof > 0.0 {
        let se = (rss / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.5 + SLOPE_CONFIDENCE / 2.0);
        t * se
    } else {
        0.0
    };
    Ok(ScalingFit {
        slope,
        intercept,
        slope_ci: (slope - half, slope + half),
        points: points.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Pooled two-sample test of `k1/n1` against `k2/n2`.
pub fn two_proportion_z_test(k1: usize, n1: usize, k2: usize, n2: usize) -> Result<ProportionTest> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::InsufficientData {
            decided: n1.min(n2),
            required: 1,
        });
    }
    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64);
    if var == 0.0 {
        // Both samples all-or-nothing on the same side.
        return Ok(ProportionTest { z: 0.0, p_value: 1.0 });
    }
    let z = (p1 - p2) / var.sqrt();
    let normal = Normal::standard();
    Ok(ProportionTest {
        z,
        p_value: (2.0 * normal.sf(z.abs())).min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::Outcome;

    fn tally(a: usize, b: usize, u: usize) -> OutcomeTally {
        let it = std::iter::repeat_n(Outcome::First, a)
            .chain(std::iter::repeat_n(Outcome::Second, b))
            .chain(std::iter::repeat_n(Outcome::Undecided, u));
        OutcomeTally::from_outcomes(it)
    }

    #[test]
    fn exact_match_has_zero_statistic() {
        let c = born_chi_square(&tally(700, 300, 0), [0.7, 0.3]).unwrap();
        assert!(c.statistic.abs() < 1e-12);
        assert!((c.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_statistic() {
        let c = born_chi_square(&tally(750, 250, 5), [0.7, 0.3]).unwrap();
        let hand = 2500.0 / 700.0 + 2500.0 / 300.0;
        assert!((c.statistic - hand).abs() < 1e-9, "{}", c.statistic);
        // χ²₁ survival at 11.905: erfc(√(11.905/2)).
        assert!((c.p_value - 0.000_559_9).abs() < 2e-6, "{}", c.p_value);
        assert_eq!(c.undecided, 5);
    }

    #[test]
    fn impossible_outcome_is_flagged() {
        let c = born_chi_square(&tally(999, 1, 0), [1.0, 0.0]).unwrap();
        assert!(c.statistic.is_infinite());
        assert_eq!(c.p_value, 0.0);
        assert!(c.impossible_outcome);
        let clean = born_chi_square(&tally(1000, 0, 0), [1.0, 0.0]).unwrap();
        assert_eq!(clean.p_value, 1.0);
    }

    #[test]
    fn too_few_decided() {
        assert!(matches!(
            born_chi_square(&tally(50, 40, 500), [0.5, 0.5]),
            Err(Error::InsufficientData { decided: 90, .. })
        ));
    }

    #[test]
    fn exact_power_law() {
        let f = fit_scaling(&[(1.0, 1000.0), (10.0, 100.0), (100.0, 10.0)]).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-9);
        assert!((f.intercept - 3.0).abs() < 1e-9);
        assert!((f.slope_ci.1 - f.slope_ci.0).abs() < 1e-9);
    }

    #[test]
    fn noisy_fit_interval_covers_slope() {
        let pts = [(1.0, 1.05), (10.0, 0.098), (100.0, 0.0102), (1000.0, 0.00097)];
        let f = fit_scaling(&pts).unwrap();
        assert!(f.slope_ci.0 < f.slope && f.slope < f.slope_ci.1);
        assert!((f.slope + 1.0).abs() < 0.05);
    }

    #[test]
    fn degenerate_fits() {
        assert!(matches!(fit_scaling(&[(1.0, 1.0)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(
            fit_scaling(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn proportion_test() {
        let same = two_proportion_z_test(700, 1000, 700, 1000).unwrap();
        assert_eq!(same.z, 0.0);
        assert!((same.p_value - 1.0).abs() < 1e-12);
        // p1 = 0.7, p2 = 0.65, pooled 0.675, se = √(0.675·0.325·0.002) ≈ 0.020946.
        let t = two_proportion_z_test(700, 1000, 650, 1000).unwrap();
        assert!((t.z - 2.387_08).abs() < 1e-4, "{}", t.z);
        assert!((t.p_value - 0.016_98).abs() < 1e-4, "{}", t.p_value);
        assert_eq!(two_proportion_z_test(10, 10, 5, 5).unwrap().p_value, 1.0);
    }
}
