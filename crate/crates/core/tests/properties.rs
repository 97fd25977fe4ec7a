mod common;

use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use arrival_core::povm::{fit_spin_povm, project_to_povm, trace_pair_residual, tv_distance};
use arrival_core::toymeasure::{
    born_outcome_dist, decoupling_check, extract_povm, random_experiment, random_state, random_unitary, spin_decoupled, CVector,
    FiniteExperiment,
};
use arrival_core::{direction_from_spinor, spinor_from_direction, ArrivalDistribution, SpinDirection, TimeBinning};
use num_complex::Complex64;
use proptest::prelude::*;

fn direction() -> impl Strategy<Value = SpinDirection> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, phi)| {
        let s = (1.0 - z * z).sqrt();
        SpinDirection::new([s * phi.cos(), s * phi.sin(), z]).unwrap()
    })
}

fn distribution(n_bins: usize) -> impl Strategy<Value = ArrivalDistribution> {
    prop::collection::vec(0.0f64..1.0, n_bins + 1).prop_filter_map("nonzero mass", move |raw| {
        let total: f64 = raw.iter().sum();
        (total > 1e-6).then(|| {
            let b = TimeBinning::new(1.0, n_bins).unwrap();
            ArrivalDistribution::from_masses(b, raw.iter().map(|v| v / total).collect()).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn spinor_round_trip(n in direction()) {
        let back = direction_from_spinor(&spinor_from_direction(&n));
        for (a, b) in back.vector().iter().zip(n.vector()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!((spinor_from_direction(&n).norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predictions_are_distributions_with_direction_free_pair_sums(seed in any::<u64>(), bins in 1usize..12, n in direction(), m in direction()) {
        let p = common::random_povm(&mut common::rng(seed), bins);
        common::assert_valid_povm(&p);
        let (pn, pm) = (p.predict(&n), p.predict(&m));
        let sn: f64 = pn.mass().iter().sum();
        prop_assert!((sn - 1.0).abs() < 1e-12);
        prop_assert!(pn.mass().iter().all(|&v| v >= 0.0));
        let r = trace_pair_residual(&pn, &p.predict(&n.negated()), &pm, &p.predict(&m.negated())).unwrap();
        prop_assert!(r.value < 1e-12);
        let sum: Vec<f64> = pn.mass().iter().zip(p.predict(&n.negated()).mass()).map(|(a, b)| a + b).collect();
        for (s, e0) in sum.iter().zip(p.e0()) {
            prop_assert!((s - 2.0 * e0).abs() < 1e-12);
        }
    }

    #[test]
    fn axial_povm_ignores_azimuth(seed in any::<u64>(), alpha in 0.0f64..std::f64::consts::PI, b1 in 0.0f64..std::f64::consts::TAU, b2 in 0.0f64..std::f64::consts::TAU) {
        let p = common::random_povm(&mut common::rng(seed), 6);
        let e: Vec<[f64; 3]> = p.e_vec().iter().map(|v| [0.0, 0.0, v[2]]).collect();
        let axial = arrival_core::SpinPovm::new(*p.binning(), p.e0().to_vec(), e).unwrap();
        let a = axial.predict(&SpinDirection::from_angles(alpha, b1));
        let b = axial.predict(&SpinDirection::from_angles(alpha, b2));
        for (x, y) in a.mass().iter().zip(b.mass()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_are_affine_in_direction(seed in any::<u64>(), n in direction()) {
        let p = common::random_povm(&mut common::rng(seed), 8);
        let pred = p.predict(&n);
        let b = p.binning();
        let arrived: f64 = pred.mass()[..b.n_bins].iter().sum();
        let direct: f64 = (0..b.n_bins).map(|k| b.midpoint(k) * pred.mass()[k]).sum();
        let (tau0, tau) = p.time_moments();
        let v = n.vector();
        prop_assert!((direct - (tau0 + tau[0] * v[0] + tau[1] * v[1] + tau[2] * v[2])).abs() < 1e-12);
        prop_assert!((pred.mean_arrival() - direct / arrived).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_any_povm(seed in any::<u64>(), bins in 1usize..10) {
        let mut rng = common::rng(seed);
        let p = common::random_povm(&mut rng, bins);
        let dirs: Vec<SpinDirection> = (0..5).map(|_| common::random_direction(&mut rng)).collect();
        let dists: Vec<ArrivalDistribution> = dirs.iter().map(|n| p.predict(n)).collect();
        let fit = fit_spin_povm(&dirs, &dists).unwrap();
        prop_assert!(fit.residual_unconstrained < 1e-10);
        prop_assert!(fit.residual_projected >= fit.residual_unconstrained);
        for k in 0..p.binning().n_outcomes() {
            prop_assert!((fit.povm.e0()[k] - p.e0()[k]).abs() < 1e-8);
            for i in 0..3 {
                prop_assert!((fit.povm.e_vec()[k][i] - p.e_vec()[k][i]).abs() < 1e-8);
            }
        }
        common::assert_valid_povm(&fit.povm);
    }

    #[test]
    fn projection_always_yields_a_povm(raw in prop::collection::vec((-0.5f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 2..10)) {
        let b = TimeBinning::new(1.0, raw.len() - 1).unwrap();
        let e0 = raw.iter().map(|r| r.0).collect();
        let e = raw.iter().map(|r| [r.1, r.2, r.3]).collect();
        common::assert_valid_povm(&project_to_povm(b, e0, e).unwrap());
    }

    #[test]
    fn tv_is_a_metric(p in distribution(6), q in distribution(6), r in distribution(6)) {
        let pq = tv_distance(&p, &q).unwrap();
        let brute: f64 = 0.5 * p.mass().iter().zip(q.mass()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        prop_assert!((pq - brute).abs() < 1e-15);
        prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-15);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&pq));
    }

    #[test]
    fn born_rule_equals_extracted_povm(seed in any::<u64>(), d_sys in 1usize..4, d_app in 1usize..4, labels in 1usize..5) {
        let mut rng = common::rng(seed);
        let exp = random_experiment(d_sys, d_app, labels, &mut rng);
        let povm = extract_povm(&exp);
        prop_assert!(povm.completeness_error() < 1e-10);
        prop_assert!(povm.min_eigenvalue() > -1e-10);
        let psi = random_state(d_sys, &mut rng);
        let born = born_outcome_dist(&exp, &psi).unwrap();
        let via = povm.expectation(&psi);
        for (l, p) in &born {
            prop_assert!((p - via[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn outcome_distribution_is_quadratic(seed in any::<u64>(), ar in -1.0f64..1.0, ai in -1.0f64..1.0, br in -1.0f64..1.0, bi in -1.0f64..1.0) {
        let mut rng = common::rng(seed);
        let exp = random_experiment(3, 2, 3, &mut rng);
        let povm = extract_povm(&exp);
        let (psi, phi) = (random_state(3, &mut rng), random_state(3, &mut rng));
        let mix: CVector = &psi * Complex64::new(ar, ai) + &phi * Complex64::new(br, bi);
        let norm = mix.norm();
        prop_assume!(norm > 1e-3);
        let (a, b) = (Complex64::new(ar, ai) / norm, Complex64::new(br, bi) / norm);
        let chi = &mix / Complex64::from(norm);
        let born: BTreeMap<String, f64> = born_outcome_dist(&exp, &chi).unwrap();
        for (label, e) in povm.labels.iter().zip(&povm.elements) {
            let q = |u: &CVector, v: &CVector| (u.adjoint() * e * v)[(0, 0)];
            let expanded = (a.conj() * a * q(&psi, &psi)
                + b.conj() * b * q(&phi, &phi)
                + a.conj() * b * q(&psi, &phi)
                + b.conj() * a * q(&phi, &psi))
            .re;
            prop_assert!((born[label] - expanded).abs() < 1e-10);
        }
    }

    #[test]
    fn spin_decoupled_experiments_ignore_the_spin(seed in any::<u64>(), rest in 1usize..3, d_app in 1usize..4, labels in 1usize..4) {
        let mut rng = common::rng(seed);
        let half = rest * d_app;
        let calibration = (0..2 * half).map(|i| format!("o{}", (i % half) % labels)).collect();
        let exp = FiniteExperiment::new(2 * rest, d_app, spin_decoupled(&random_unitary(half, &mut rng)), random_state(d_app, &mut rng), calibration).unwrap();
        let dirs: Vec<SpinDirection> = (0..20).map(|_| common::random_direction(&mut rng)).collect();
        prop_assert!(decoupling_check(&exp, &random_state(rest, &mut rng), &dirs).unwrap() < 1e-10);
    }
}

#[test]
fn sum_of_extracted_elements_is_identity_for_larger_models() {
    let mut rng = common::rng(11);
    for _ in 0..10 {
        let exp = random_experiment(4, 5, 6, &mut rng);
        let povm = extract_povm(&exp);
        assert_abs_diff_eq!(povm.completeness_error(), 0.0, epsilon = 1e-10);
    }
}
