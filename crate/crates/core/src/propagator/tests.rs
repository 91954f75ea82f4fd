use super::*;
use crate::qstate::{normalize, position_moments, region_weight, Region};
use approx::assert_abs_diff_eq;
use std::f64::consts::PI;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Closed-form free evolution of a minimum-uncertainty packet with density
/// standard deviation `s0` centred at the origin.
fn free_gaussian_exact(x: f64, s0: f64, t: f64) -> Complex64 {
    let q = Complex64::new(1.0, t / (2.0 * s0 * s0));
    let pref = (2.0 * PI * s0 * s0).powf(-0.25) / q.sqrt();
    pref * (-(x * x) / (4.0 * s0 * s0 * q)).exp()
}

#[test]
fn free_packet_spreads_as_closed_form() {
    let grid = GridSpec::new(-40.0, 40.0, 1024).unwrap();
    let psi = WaveFunction::gaussian(grid, 0.0, 1.0, 0.0).unwrap();
    let cfg = PropagatorConfig::new(Method::SplitStep, 0.01);
    let out = step(&psi, &Potential::free(), &cfg, 2.0).unwrap();
    let (_, var) = position_moments(&out);
    assert!((var - 2.0).abs() / 2.0 < 0.01, "variance {var}");
    let worst = grid
        .positions()
        .zip(out.amplitudes())
        .map(|(x, z)| (z - free_gaussian_exact(x, 1.0, 2.0)).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "pointwise error {worst}");
}

#[test]
fn harmonic_coherent_state_oscillates() {
    let grid = GridSpec::new(-16.0, 16.0, 512).unwrap();
    let omega: f64 = 1.0;
    let psi = WaveFunction::gaussian(grid, 3.0, (0.5 / omega).sqrt(), 0.0).unwrap();
    let v = Potential::harmonic(omega);
    let cfg = PropagatorConfig::new(Method::SplitStep, 2.0 * PI / 2000.0);
    let prop = Propagator::new(grid, 1, &v, &cfg).unwrap();
    let mut state = psi;
    for k in 1..=20 {
        prop.advance(&mut state, 100).unwrap();
        let t = k as f64 * 100.0 * cfg.dt;
        let (mean, _) = position_moments(&state);
        assert!((mean - 3.0 * (omega * t).cos()).abs() < 0.03, "t={t} mean={mean}");
    }
}

#[test]
fn zero_duration_is_identity() {
    let grid = GridSpec::new(-20.0, 20.0, 256).unwrap();
    let psi = WaveFunction::gaussian(grid, 1.0, 1.0, 0.5).unwrap();
    let cfg = PropagatorConfig::new(Method::CrankNicolson, 0.01);
    assert_eq!(step(&psi, &Potential::harmonic(0.5), &cfg, 0.0).unwrap(), psi);
}

#[test]
fn rejects_duration_off_the_dt_lattice() {
    let grid = GridSpec::new(-20.0, 20.0, 256).unwrap();
    let psi = WaveFunction::gaussian(grid, 0.0, 1.0, 0.0).unwrap();
    let cfg = PropagatorConfig::new(Method::SplitStep, 0.01);
    assert!(matches!(
        step(&psi, &Potential::free(), &cfg, 0.015),
        Err(Error::NotMultipleOfDt { .. })
    ));
}

#[test]
fn unitarity_and_overlap_preservation() {
    let grid = GridSpec::new(-20.0, 20.0, 512).unwrap();
    let a = WaveFunction::gaussian(grid, -1.0, 0.8, 1.0).unwrap();
    let b = WaveFunction::gaussian(grid, 1.5, 1.2, -0.5).unwrap();
    let v = Potential::double_well(2.0, 4.0);
    for method in [Method::SplitStep, Method::CrankNicolson] {
        let cfg = PropagatorConfig::new(method, 0.005);
        let a1 = step(&a, &v, &cfg, 1.0).unwrap();
        let b1 = step(&b, &v, &cfg, 1.0).unwrap();
        assert_abs_diff_eq!(a1.norm_sqr(), 1.0, epsilon = 1e-9);
        let before = inner_product(&a, &b).unwrap();
        let after = inner_product(&a1, &b1).unwrap();
        assert!((before - after).norm() < 1e-8, "{method:?}");
    }
}

#[test]
fn time_reversal_recovers_conjugate() {
    let grid = GridSpec::new(-20.0, 20.0, 512).unwrap();
    let psi = WaveFunction::superposition(
        grid,
        &[(c(0.8), -4.0, 0.7), (Complex64::new(0.0, 0.6), 4.0, 0.7)],
    )
    .unwrap();
    let v = Potential::harmonic(0.3);
    for method in [Method::SplitStep, Method::CrankNicolson] {
        let cfg = PropagatorConfig::new(method, 0.01);
        let fwd = step(&psi, &v, &cfg, 3.0).unwrap();
        let back = step(&fwd.conj(), &v, &cfg, 3.0).unwrap();
        let err = back.max_abs_diff(&psi.conj()).unwrap();
        assert!(err < 1e-7, "{method:?}: {err}");
    }
}

#[test]
fn spectral_and_crank_nicolson_agree_on_free_packet() {
    let grid = GridSpec::new(-25.6, 25.6, 2048).unwrap();
    let psi = WaveFunction::gaussian(grid, 0.0, 1.0, 0.0).unwrap();
    let spectral = step(&psi, &Potential::free(), &PropagatorConfig::new(Method::SplitStep, 0.001), 1.0).unwrap();
    let cn = step(&psi, &Potential::free(), &PropagatorConfig::new(Method::CrankNicolson, 0.001), 1.0).unwrap();
    let err = spectral.max_abs_diff(&cn).unwrap();
    assert!(err < 1e-4, "max-norm difference {err}");
}

#[test]
fn coupling_translates_each_level() {
    let grid = GridSpec::new(-32.0, 32.0, 512).unwrap();
    let pointer = WaveFunction::gaussian(grid, 0.0, 1.0, 0.0).unwrap();
    let both = WaveFunction::tensor(&[c(0.5f64.sqrt()), c(0.5f64.sqrt())], &pointer).unwrap();
    let v = Potential::free().with_coupling(vec![4.0, -2.0]);
    let out = step(&both, &v, &PropagatorConfig::new(Method::SplitStep, 0.01), 1.0).unwrap();
    let up = WaveFunction::from_parts_unchecked(grid, 1, out.level(0).to_vec());
    let down = WaveFunction::from_parts_unchecked(grid, 1, out.level(1).to_vec());
    assert_abs_diff_eq!(position_moments(&normalize(grid, 1, up.into_amplitudes()).unwrap()).0, 4.0, epsilon = 1e-9);
    assert_abs_diff_eq!(position_moments(&normalize(grid, 1, down.into_amplitudes()).unwrap()).0, -2.0, epsilon = 1e-9);
}

#[test]
fn dry_run_accepts_reasonable_config() {
    let grid = GridSpec::new(-20.0, 20.0, 256).unwrap();
    let psi = WaveFunction::gaussian(grid, 0.0, 1.0, 0.0).unwrap();
    for method in [Method::SplitStep, Method::CrankNicolson] {
        PropagatorConfig::new(method, 0.01)
            .dry_run(&psi, &Potential::harmonic(1.0))
            .unwrap();
    }
    let bad = PropagatorConfig::new(Method::SplitStep, -1.0);
    assert!(bad.validate().is_err());
}

#[test]
fn potential_validation() {
    let grid = GridSpec::new(-1.0, 1.0, 8).unwrap();
    assert!(Potential::harmonic(0.0).validate(&grid).is_err());
    assert!(Potential::tabulated(vec![0.0; 7]).validate(&grid).is_err());
    assert!(Potential::tabulated(vec![f64::NAN; 8]).validate(&grid).is_err());
    assert!(Potential::tabulated(vec![1.0; 8]).validate(&grid).is_ok());
}

mod premeasurement {
    use super::*;

    fn setup() -> (GridSpec, WaveFunction, Potential) {
        let grid = GridSpec::new(-64.0, 64.0, 512).unwrap();
        let pointer = WaveFunction::gaussian(grid, 0.0, 1.0, 0.0).unwrap();
        (grid, pointer, Potential::pointer_coupling(30.0))
    }

    #[test]
    fn definite_system_gives_product_state() {
        let (grid, pointer, coupling) = setup();
        let pm = premeasurement_evolve([c(1.0), c(0.0)], &pointer, &coupling, 1.0).unwrap();
        let w = pm.state.level_weights();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_eq!(w[1], 0.0);
        let up = normalize(grid, 1, pm.state.level(0).to_vec()).unwrap();
        assert_abs_diff_eq!(position_moments(&up).0, 30.0, epsilon = 1e-9);
        assert!(pm.pointer_overlap < 1e-6);
        assert!(pm.is_distinguishable());
    }

    #[test]
    fn branch_weights_follow_born_coefficients() {
        let (grid, pointer, coupling) = setup();
        let pm =
            premeasurement_evolve([c(0.7f64.sqrt()), c(0.3f64.sqrt())], &pointer, &coupling, 1.0).unwrap();
        let w = pm.state.level_weights();
        assert_abs_diff_eq!(w[0], 0.7, epsilon = 1e-6);
        assert_abs_diff_eq!(w[1], 0.3, epsilon = 1e-6);
        // Pointer positions alone also carry the Born weights.
        let right = Region::new(0.0, 64.0, &grid).unwrap();
        assert_abs_diff_eq!(region_weight(&pm.state, &right), 0.7, epsilon = 1e-6);
    }

    #[test]
    fn equal_superposition() {
        let (_, pointer, coupling) = setup();
        let h = 0.5f64.sqrt();
        let pm = premeasurement_evolve([c(h), c(h)], &pointer, &coupling, 1.0).unwrap();
        let w = pm.state.level_weights();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn weak_coupling_flags_overlap() {
        let (_, pointer, _) = setup();
        let pm = premeasurement_evolve([c(0.6), c(0.8)], &pointer, &Potential::pointer_coupling(0.5), 1.0).unwrap();
        assert!(!pm.is_distinguishable());
    }

    #[test]
    fn rejects_unnormalized_coefficients() {
        let (_, pointer, coupling) = setup();
        assert!(premeasurement_evolve([c(1.0), c(0.5)], &pointer, &coupling, 1.0).is_err());
    }
}
