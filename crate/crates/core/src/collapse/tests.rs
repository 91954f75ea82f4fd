use super::*;
use crate::propagator::{premeasurement_evolve, step, Method};
use crate::qstate::{normalize, region_weight, Region};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use std::f64::consts::PI;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn grid() -> GridSpec {
    GridSpec::new(-64.0, 64.0, 512).unwrap()
}

fn params(a: f64) -> GrwParams {
    GrwParams::new(1000.0, a, 2000.0).unwrap()
}

fn two_peak(w1: f64, d: f64, sigma: f64) -> WaveFunction {
    WaveFunction::superposition(
        grid(),
        &[(c(w1.sqrt()), -d, sigma), (c((1.0 - w1).sqrt()), d, sigma)],
    )
    .unwrap()
}

fn point_like(x0: f64) -> WaveFunction {
    let g = grid();
    let mut amps = vec![c(0.0); g.n_points()];
    amps[g.nearest_index(x0)] = c(1.0);
    normalize(g, 1, amps).unwrap()
}

/// Trapezoid rule on an independent fine mesh.
fn quad(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = 0.5 * (f(lo) + f(hi));
    for k in 1..n {
        s += f(lo + k as f64 * h);
    }
    s * h
}

mod jump_function {
    use super::*;

    #[test]
    fn unit_square_norm_for_any_center() {
        let g = grid();
        let p = params(2.0);
        for center in [-10.3, 0.0, 0.125, 7.77, 63.9] {
            let j = jump_function_values(center, &p, &g).unwrap();
            let s: f64 = j.iter().map(|v| v * v).sum::<f64>() * g.dx();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-8);
            assert!(j.iter().all(|&v| v >= 0.0));
        }
        // The discrete constant agrees with the continuum value (π a²)^(−1/4).
        let gauss_sq = quad(|x| (-x * x / 4.0).exp(), -40.0, 40.0, 400_000);
        let k_cont = 1.0 / gauss_sq.sqrt();
        assert_abs_diff_eq!(k_cont, (PI * 4.0).powf(-0.25), epsilon = 1e-10);
        let j = jump_function_values(0.0, &p, &g).unwrap();
        assert_abs_diff_eq!(j[g.nearest_index(0.0)], k_cont, epsilon = 1e-8);
    }

    #[test]
    fn peak_value_for_unit_width() {
        let g = GridSpec::new(-16.0, 16.0, 512).unwrap();
        let p = GrwParams::new(1.0, 1.0, 1.0).unwrap();
        let j = jump_function_values(0.0, &p, &g).unwrap();
        let peak = j.iter().cloned().fold(0.0, f64::max);
        assert_abs_diff_eq!(peak, 0.7511, epsilon = 1e-4);
        assert_abs_diff_eq!(peak, PI.powf(-0.25), epsilon = 1e-4);
    }

    #[test]
    fn tail_at_six_widths() {
        let g = grid();
        let p = params(2.0);
        let j = jump_function_values(0.0, &p, &g).unwrap();
        let peak = j[g.nearest_index(0.0)];
        assert!(j[g.nearest_index(12.0)] < 1e-7 * peak);
        assert!(j[g.nearest_index(-12.0)] < 1e-7 * peak);
    }

    #[test]
    fn unresolved_width_is_rejected() {
        let g = grid();
        let p = GrwParams::new(1.0, 0.9, 1.0).unwrap();
        assert!(matches!(
            jump_function_values(0.0, &p, &g),
            Err(Error::UnresolvedWidth { .. })
        ));
        assert!(GrwParams::new(1.0, 1.0, 1.0).unwrap().validate_for_grid(&g).is_ok());
    }

    #[test]
    fn param_validation() {
        assert!(GrwParams::new(0.0, 1.0, 1.0).is_err());
        assert!(GrwParams::new(1.0, -1.0, 1.0).is_err());
        assert!(GrwParams::new(1.0, 1.0, 0.5).is_err());
        assert!(GrwParams::no_collapse(1.0).validate().is_ok());
        assert_eq!(GrwParams::no_collapse(1.0).rate(), 0.0);
    }
}

mod density {
    use super::*;

    #[test]
    fn point_like_state_gives_gaussian_of_variance_half_a_squared() {
        let g = grid();
        let a = 2.0;
        let x0 = 3.0;
        let p = center_density(&point_like(x0), &params(a)).unwrap();
        // Oracle: j² convolved with a delta is K² exp(−(x − x0)²/a²).
        let k2 = 1.0 / quad(|x| (-x * x / (a * a)).exp(), -60.0, 60.0, 400_000);
        for (i, &v) in p.iter().enumerate() {
            let d = g.x(i) - x0;
            assert_abs_diff_eq!(v, k2 * (-d * d / (a * a)).exp(), epsilon = 1e-9);
        }
        let dx = g.dx();
        let mean: f64 = p.iter().enumerate().map(|(i, v)| g.x(i) * v).sum::<f64>() * dx;
        let var: f64 = p.iter().enumerate().map(|(i, v)| (g.x(i) - mean).powi(2) * v).sum::<f64>() * dx;
        assert_abs_diff_eq!(mean, x0, epsilon = 1e-9);
        assert_abs_diff_eq!(var, a * a / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn two_peak_mass_follows_weights() {
        let g = grid();
        let a = 2.0;
        let psi = two_peak(0.7, 10.0, 1.0);
        let p = center_density(&psi, &params(a)).unwrap();
        let near1: f64 = p
            .iter()
            .enumerate()
            .filter(|(i, _)| (g.x(*i) + 10.0).abs() <= 5.0 * a)
            .map(|(_, v)| v)
            .sum::<f64>()
            * g.dx();
        assert_abs_diff_eq!(near1, 0.7, epsilon = 1e-3);
    }

    #[test]
    fn symmetric_peaks_give_symmetric_density() {
        let g = grid();
        let p = center_density(&two_peak(0.5, 10.0, 1.0), &params(2.0)).unwrap();
        let n = g.n_points();
        for i in 1..n {
            assert_abs_diff_eq!(p[i], p[n - i], epsilon = 1e-9);
        }
    }
}

mod sampling {
    use super::*;

    fn fraction_left(psi: &WaveFunction, draws: usize, seed: u64) -> f64 {
        let loc = Localizer::new(*psi.grid(), params(2.0)).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let left = (0..draws)
            .filter(|_| loc.sample_center(psi, &mut rng).unwrap() < 0.0)
            .count();
        left as f64 / draws as f64
    }

    #[test]
    fn equal_peaks_split_evenly() {
        let f = fraction_left(&two_peak(0.5, 10.0, 1.0), 10_000, 11);
        assert!((f - 0.5).abs() <= 0.015, "{f}");
    }

    #[test]
    fn weighted_peaks_follow_born_weight() {
        let f = fraction_left(&two_peak(0.7, 10.0, 1.0), 10_000, 12);
        assert!((f - 0.7).abs() <= 0.014, "{f}");
    }

    #[test]
    fn point_like_samples_stay_within_four_widths() {
        let a = 2.0;
        let psi = point_like(5.0);
        let loc = Localizer::new(*psi.grid(), params(a)).unwrap();
        let mut rng = RngStream::new(13, 0);
        let inside = (0..10_000)
            .filter(|_| (loc.sample_center(&psi, &mut rng).unwrap() - 5.0).abs() <= 4.0 * a)
            .count();
        assert!(inside as f64 / 1e4 > 0.9999);
    }

    #[test]
    fn sampling_is_reproducible() {
        let psi = two_peak(0.3, 10.0, 1.0);
        let a: Vec<f64> = {
            let mut rng = RngStream::new(5, 9);
            (0..50).map(|_| sample_center(&psi, &params(2.0), &mut rng).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut rng = RngStream::new(5, 9);
            (0..50).map(|_| sample_center(&psi, &params(2.0), &mut rng).unwrap()).collect()
        };
        assert_eq!(a, b);
    }
}

mod jump {
    use super::*;

    #[test]
    fn gaussian_hit_at_center_narrows_by_product_rule() {
        let g = grid();
        let a = 2.0;
        // Amplitude width s: ψ ∝ exp(−x²/2s²), i.e. density standard deviation s/√2.
        let s = 3.0;
        let psi = WaveFunction::gaussian(g, 4.0, s / 2f64.sqrt(), 0.0).unwrap();
        let (out, _) = apply_jump(&psi, 4.0, &params(a), Branches::Split { at: 0.0 }).unwrap();
        let s_post = (1.0 / (s * s) + 1.0 / (a * a)).powf(-0.5);
        let (mean, var) = position_moments(&out);
        assert_abs_diff_eq!(mean, 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(var.sqrt(), s_post / 2f64.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn hit_on_one_peak_suppresses_the_other() {
        let g = grid();
        let a = 2.0;
        let d = 10.0 * a;
        let psi = two_peak(0.5, d, 1.0);
        let (out, event) = apply_jump(&psi, d, &params(a), Branches::Split { at: 0.0 }).unwrap();
        let left = Region::new(-64.0, 0.0, &g).unwrap();
        assert!(region_weight(&out, &left) < 1e-8);
        assert_abs_diff_eq!(event.pre_branch_weights[0], 0.5, epsilon = 1e-9);
        assert!(event.post_branch_weights[1] > 1.0 - 1e-8);
    }

    #[test]
    fn flat_state_localizes_to_half_a_squared() {
        let g = grid();
        let a = 2.0;
        let psi = WaveFunction::gaussian(g, 0.0, 200.0, 0.0).unwrap();
        let (out, _) = apply_jump(&psi, 1.5, &params(a), Branches::Levels).unwrap();
        let (_, var) = position_moments(&out);
        assert!((var - a * a / 2.0).abs() / (a * a / 2.0) < 0.02, "{var}");
    }

    #[test]
    fn hit_outside_support_is_zero_norm() {
        let g = grid();
        let mut amps = vec![c(0.0); g.n_points()];
        amps[g.nearest_index(-50.0)] = c(1.0);
        let psi = normalize(g, 1, amps).unwrap();
        assert!(matches!(
            apply_jump(&psi, 50.0, &params(1.0), Branches::Levels),
            Err(Error::ZeroNorm(_))
        ));
    }
}

mod scheduling {
    use super::*;

    #[test]
    fn amplified_mean_gap_matches_si_arithmetic() {
        let p = GrwParams::new(1e15, 1e-7, 1e23).unwrap();
        assert_eq!(p.mean_gap(), 1e-8);
        let mut rng = RngStream::new(21, 0);
        let times = schedule_jumps(&p, 1.2e-4, &mut rng);
        assert!(times.len() >= 10_000);
        let gaps: Vec<f64> = std::iter::once(times[0])
            .chain(times.windows(2).map(|w| w[1] - w[0]))
            .take(10_000)
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!((mean - 1e-8).abs() / 1e-8 < 0.03, "{mean}");
    }

    #[test]
    fn unit_rate_count() {
        let p = GrwParams::new(1.0, 1.0, 1.0).unwrap();
        let runs = 10_000;
        let total: usize = (0..runs)
            .map(|k| schedule_jumps(&p, 1.0, &mut RngStream::new(22, k)).len())
            .sum();
        let mean = total as f64 / runs as f64;
        assert!((mean - 1.0).abs() <= 0.03, "{mean}");
    }

    #[test]
    fn degenerate_horizons_and_rates() {
        let p = GrwParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(schedule_jumps(&p, 0.0, &mut RngStream::new(1, 1)).is_empty());
        assert!(schedule_jumps(&GrwParams::no_collapse(1.0), 10.0, &mut RngStream::new(1, 1)).is_empty());
        let t = schedule_jumps(&p, 50.0, &mut RngStream::new(1, 2));
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn median_first_hit_scales_inversely_with_constituents() {
        let tau = 1000.0;
        let pts: Vec<(f64, f64)> = [1.0, 10.0, 100.0, 1000.0]
            .iter()
            .map(|&n| {
                let p = GrwParams::new(tau, 1.0, n).unwrap();
                let mut firsts: Vec<f64> = (0..4000)
                    .map(|k| {
                        schedule_jumps(&p, 100.0 * tau / n, &mut RngStream::new(23, k))
                            .first()
                            .copied()
                            .unwrap()
                    })
                    .collect();
                firsts.sort_by(f64::total_cmp);
                (n.log10(), firsts[firsts.len() / 2].log10())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() <= 0.05, "{slope}");
    }
}

mod invariants {
    use super::*;

    #[test]
    fn exact_center_average_preserves_level_distribution() {
        let g = grid();
        let p = params(2.0);
        let loc = Localizer::new(g, p).unwrap();
        let pointer = WaveFunction::gaussian(g, 0.0, 1.0, 0.0).unwrap();
        let coeffs = [c(0.6), c(0.8)];
        let overlapping = WaveFunction::tensor(&coeffs, &pointer).unwrap();
        let separated = premeasurement_evolve(coeffs, &pointer, &crate::propagator::Potential::pointer_coupling(30.0), 1.0)
            .unwrap()
            .state;
        for psi in [overlapping, separated] {
            let density = loc.center_density(&psi).unwrap();
            let mut avg = [0.0, 0.0];
            for (i, &pc) in density.iter().enumerate() {
                // Far tails are FFT roundoff; their jumps have no norm left.
                let Ok((out, _)) = loc.apply_jump(&psi, g.x(i), Branches::Levels) else {
                    assert!(pc * g.dx() < 1e-12);
                    continue;
                };
                let w = out.level_weights();
                avg[0] += pc * g.dx() * w[0];
                avg[1] += pc * g.dx() * w[1];
            }
            assert_abs_diff_eq!(avg[0], 0.36, epsilon = 1e-6);
            assert_abs_diff_eq!(avg[1], 0.64, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_hit_outcome_law_matches_born_weight() {
        let g = grid();
        let a = 2.0;
        let psi = two_peak(0.7, 10.0 * a / 2.0 + 5.0, 1.0);
        let left = Region::new(-64.0, 0.0, &g).unwrap();
        let born = region_weight(&psi, &left);
        let loc = Localizer::new(g, params(a)).unwrap();
        let density = loc.center_density(&psi).unwrap();
        let mut p_left = 0.0;
        for (i, &pc) in density.iter().enumerate() {
            if pc * g.dx() < 1e-14 {
                continue;
            }
            let (out, ev) = loc.apply_jump(&psi, g.x(i), Branches::Split { at: 0.0 }).unwrap();
            if ev.post_branch_weights[0] > 1.0 - DECIDED_THRESHOLD {
                p_left += pc * g.dx();
                // Absorbing: a second hit drawn from the collapsed state keeps the branch.
                let d2 = loc.center_density(&out).unwrap();
                let keep: f64 = d2
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| g.x(*k) < 0.0)
                    .map(|(_, v)| v * g.dx())
                    .sum();
                assert!(keep > 1.0 - 1e-6);
            }
        }
        assert_abs_diff_eq!(p_left, born, epsilon = 1e-3);
    }

    #[test]
    fn jumps_break_time_reversal() {
        let g = grid();
        let psi = two_peak(0.5, 12.0, 1.0);
        let v = crate::propagator::Potential::free();
        let cfg = PropagatorConfig::new(Method::SplitStep, 0.01);
        let half = step(&psi, &v, &cfg, 1.0).unwrap();
        let (hit, _) = apply_jump(&half, 12.0, &params(2.0), Branches::Split { at: 0.0 }).unwrap();
        let fwd = step(&hit, &v, &cfg, 1.0).unwrap();
        let back = step(&fwd.conj(), &v, &cfg, 2.0).unwrap();
        assert!(back.max_abs_diff(&psi.conj()).unwrap() > 0.1);
        // Without the hit the same protocol is reversible.
        let fwd = step(&half, &v, &cfg, 1.0).unwrap();
        let back = step(&fwd.conj(), &v, &cfg, 2.0).unwrap();
        assert!(back.max_abs_diff(&psi.conj()).unwrap() < 1e-7);
        let _ = g;
    }

    fn random_state(centers: &[(f64, f64, f64, f64)]) -> WaveFunction {
        let packets: Vec<(Complex64, f64, f64)> = centers
            .iter()
            .map(|&(w, phase, x, s)| (Complex64::from_polar(w, phase), x, s))
            .collect();
        WaveFunction::superposition(grid(), &packets).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn jumps_preserve_norm_and_density_integrates_to_one(
            packets in prop::collection::vec((0.1f64..1.0, 0.0f64..(2.0 * PI), -40.0f64..40.0, 0.3f64..6.0), 1..4),
            center in -44.0f64..44.0,
            a in 1.0f64..4.0,
        ) {
            let psi = random_state(&packets);
            let p = GrwParams::new(100.0, a, 1.0).unwrap();
            let loc = Localizer::new(*psi.grid(), p).unwrap();
            let dens = loc.center_density(&psi).unwrap();
            let total: f64 = dens.iter().sum::<f64>() * psi.grid().dx();
            prop_assert!((total - 1.0).abs() < 1e-6);
            match loc.apply_jump(&psi, center, Branches::Split { at: 0.0 }) {
                Ok((out, ev)) => {
                    prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
                    prop_assert!((ev.post_branch_weights[0] + ev.post_branch_weights[1] - 1.0).abs() < 1e-9);
                }
                Err(Error::ZeroNorm(_)) => {}
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}

mod trajectories {
    use super::*;
    use crate::propagator::Potential;

    const HORIZON: f64 = 2.0;

    /// Rate 5: about ten hits per run, few enough that momentum kicks cannot
    /// carry a packet across the split.
    fn fast() -> GrwParams {
        GrwParams::new(1000.0, 2.0, 5000.0).unwrap()
    }

    fn cfg() -> PropagatorConfig {
        PropagatorConfig {
            method: Method::SplitStep,
            dt: 0.01,
            steps_per_event_check: 25,
        }
    }

    fn opts() -> TrajectoryOptions {
        TrajectoryOptions {
            scenario: "test".into(),
            branches: Branches::Split { at: 0.0 },
        }
    }

    #[test]
    fn no_collapse_equals_unitary_evolution() {
        let psi = two_peak(0.7, 10.0, 1.0);
        let v = Potential::free();
        let traj = evolve_with_collapse(
            &psi,
            &v,
            &GrwParams::no_collapse(2.0),
            &cfg(),
            2.0,
            &mut RngStream::new(1, 1),
            &opts(),
        )
        .unwrap();
        assert!(traj.record.events.is_empty());
        assert_eq!(traj.record.outcome, Outcome::Undecided);
        let unitary = step(&psi, &v, &cfg(), 2.0).unwrap();
        assert!(traj.final_state.max_abs_diff(&unitary).unwrap() < 1e-12);
    }

    #[test]
    fn collapsed_trajectories_follow_born_weights() {
        let psi = two_peak(0.7, 10.0, 1.0);
        let v = Potential::free();
        let p = fast();
        let prop = Propagator::new(*psi.grid(), 1, &v, &cfg()).unwrap();
        let loc = Localizer::new(*psi.grid(), p).unwrap();
        let mut first = 0;
        for k in 0..10_000 {
            let mut rng = RngStream::new(31, k);
            let t = evolve_prepared(&psi, &prop, &loc, &cfg(), HORIZON, &mut rng, &opts()).unwrap();
            if let Some(e) = t.record.events.first() {
                let w = e.post_branch_weights;
                assert!(w[0].max(w[1]) > 1.0 - 1e-6, "{k}: {w:?}");
            }
            if t.record.outcome == Outcome::First {
                first += 1;
            }
        }
        let f = first as f64 / 1e4;
        assert!((f - 0.7).abs() <= 0.014, "{f}");
    }

    #[test]
    fn definite_state_always_gives_outcome_one() {
        let psi = two_peak(1.0, 10.0, 1.0);
        for k in 0..50 {
            let t = evolve_with_collapse(
                &psi,
                &Potential::free(),
                &fast(),
                &cfg(),
                HORIZON,
                &mut RngStream::new(32, k),
                &opts(),
            )
            .unwrap();
            assert_eq!(t.record.outcome, Outcome::First);
        }
    }

    #[test]
    fn trajectory_is_bit_reproducible_and_well_formed() {
        let psi = two_peak(0.5, 10.0, 1.0);
        let run = || {
            evolve_with_collapse(
                &psi,
                &Potential::free(),
                &fast(),
                &cfg(),
                HORIZON,
                &mut RngStream::new(33, 4),
                &opts(),
            )
            .unwrap()
            .record
        };
        let (a, b) = (run(), run());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.series.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.events.windows(2).all(|w| w[0].time <= w[1].time));
        assert_eq!(a.series.last().unwrap().time, HORIZON);
        assert!(a.survival_time().is_some());
    }

    #[test]
    fn coarse_dt_is_rejected() {
        let psi = two_peak(0.5, 10.0, 1.0);
        let coarse = PropagatorConfig {
            dt: 0.02,
            ..cfg()
        };
        assert!(matches!(
            evolve_with_collapse(&psi, &Potential::free(), &fast(), &coarse, 5.0, &mut RngStream::new(1, 1), &opts()),
            Err(Error::InvalidParams(_))
        ));
    }
}
