mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use pco_core::analysis::{alpha1, check_local_sync, symmetric_eigen};
use pco_core::dynamics::{check_invariance, fit_rate, vector_field, Trajectory};
use pco_core::prf::{wrap_angle, PhaseResponseFunction};
use pco_core::pulse_sim::{EnergyConfig, PulseNetwork};
use pco_core::topology::Topology;

use common::{char_poly_roots, random_connected_edges, random_symmetric, random_topology};

const GRID: usize = 2000;

fn tanh(e: f64) -> PhaseResponseFunction {
    PhaseResponseFunction::tanh(e).unwrap()
}

fn eps() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_is_incidence_gram(n in 2usize..14, p in 0.0f64..1.0, seed in any::<u64>()) {
        let edges = random_connected_edges(n, p, seed);
        let t = Topology::new(n, &edges, vec![0.0; n], 0.0, 1.0).unwrap();
        let b = t.incidence_matrix();
        prop_assert_eq!(t.laplacian(), &b * b.transpose());
        prop_assert!(t.is_connected());
    }

    #[test]
    fn energy_decays_at_least_at_bound_rate(
        n in 2usize..10,
        seed in any::<u64>(),
        eg in eps(),
        el in eps(),
        frac in 0.05f64..0.99,
        xs in prop::collection::vec(-1.0f64..1.0, 10),
    ) {
        let t = random_topology(n, seed);
        let eps_bar = frac * std::f64::consts::FRAC_PI_2;
        let (qg, ql) = (tanh(eg), tanh(el));
        let a1 = alpha1(&t, &qg, &ql, eps_bar, GRID).unwrap().alpha1.unwrap();
        prop_assert!(a1 > 0.0);
        let xi: Vec<f64> = xs[..n].iter().map(|x| x * eps_bar).collect();
        let f = vector_field(&t, &qg, &ql, &xi).unwrap();
        let dot: f64 = xi.iter().zip(&f).map(|(a, b)| a * b).sum();
        let norm_sq: f64 = xi.iter().map(|x| x * x).sum();
        prop_assert!(dot <= -a1 * norm_sq * (1.0 - 1e-6) + 1e-15, "{} vs {}", dot, -a1 * norm_sq);
    }

    #[test]
    fn rayleigh_quotient_bounded_by_min_eigenvalue(n in 1usize..9, seed in any::<u64>(),
                                                   x in prop::collection::vec(-1.0f64..1.0, 8)) {
        let a = random_symmetric(n, seed);
        let e = symmetric_eigen(&a, false).unwrap();
        let v = nalgebra::DVector::from_column_slice(&x[..n]);
        prop_assume!(v.norm() > 1e-3);
        let q = (v.transpose() * &a * &v)[(0, 0)] / v.norm_squared();
        prop_assert!(q >= e.min() - 1e-12 && q <= e.max() + 1e-12);
    }

    #[test]
    fn rate_bound_nondecreasing_in_each_gain(n in 2usize..9, seed in any::<u64>(), node in 0usize..9,
                                             bump in 0.0f64..0.05, el in eps()) {
        let t = random_topology(n, seed);
        let i = node % n;
        let mut gains = t.global_gains().to_vec();
        gains[i] += bump;
        let bigger = t.with_coupling(gains, t.local_strength()).unwrap();
        let (qg, ql) = (tanh(0.4), tanh(el));
        let a = alpha1(&t, &qg, &ql, 1.0, GRID).unwrap().alpha1.unwrap();
        let b = alpha1(&bigger, &qg, &ql, 1.0, GRID).unwrap().alpha1.unwrap();
        prop_assert!(b >= a - 1e-14);
    }

    #[test]
    fn leaderless_network_conserves_phase_sum(n in 2usize..10, seed in any::<u64>(), el in eps(),
                                              xs in prop::collection::vec(-3.1f64..3.1, 10)) {
        let t = random_topology(n, seed);
        let t = t.with_coupling(vec![0.0; n], t.local_strength()).unwrap();
        let f = vector_field(&t, &tanh(0.4), &tanh(el), &xs[..n]).unwrap();
        prop_assert!(f.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn eigen_decomposition_reconstructs(n in 1usize..10, seed in any::<u64>()) {
        let a = random_symmetric(n, seed);
        let e = symmetric_eigen(&a, true).unwrap();
        let v = e.vectors.unwrap();
        let recon = &v * DMatrix::from_diagonal(&e.values) * v.transpose();
        prop_assert!((recon - &a).amax() < 1e-12);
        prop_assert!((v.transpose() * &v - DMatrix::identity(n, n)).amax() < 1e-12);
        prop_assert!((e.values.sum() - a.trace()).abs() < 1e-12);
        prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eigenvalues_are_char_poly_roots(seed in any::<u64>()) {
        let a = random_symmetric(4, seed);
        let roots = char_poly_roots(&a, 20_000);
        prop_assume!(roots.len() == 4);
        let e = symmetric_eigen(&a, false).unwrap();
        for (r, v) in roots.iter().zip(e.values.iter()) {
            prop_assert!((r - v).abs() < 1e-8, "{} vs {}", r, v);
        }
    }

    #[test]
    fn planted_rate_is_recovered(alpha in 1e-4f64..1.0, c in 0.1f64..10.0) {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let norms = times.iter().map(|t| c * (-alpha * t).exp()).collect();
        let fit = fit_rate(&Trajectory::from_norms(times, norms), (0.0, 10.0)).unwrap();
        prop_assert!((fit.alpha_hat - alpha).abs() < 1e-6);
    }

    #[test]
    fn box_is_invariant_under_local_conditions(n in 2usize..8, seed in any::<u64>(), eg in eps(),
                                               el in eps(), frac in 0.05f64..0.99) {
        let t = random_topology(n, seed);
        prop_assert!(check_local_sync(&t).passed);
        let r = check_invariance(&t, &tanh(eg), &tanh(el), frac * std::f64::consts::FRAC_PI_2, 50, seed)
            .unwrap();
        prop_assert!(r.passed(), "{:?}", r.violations.first());
    }

    #[test]
    fn uncoupled_pulses_rotate_rigidly(phases in prop::collection::vec(0.0f64..6.28, 1..8),
                                       cue in 0.0f64..6.28, period in 0.1f64..5.0) {
        let n = phases.len();
        let t = Topology::new(n, &[], vec![0.0; n], 0.0, period).unwrap();
        let mut net = PulseNetwork::new(t, tanh(0.4), tanh(0.4), cue, &phases, EnergyConfig::default())
            .unwrap();
        net.run(period, 1e-3).unwrap();
        for (p, q) in net.phases()[1..].iter().zip(&phases) {
            prop_assert!(wrap_angle(p - q).abs() < 1e-12);
        }
        prop_assert!(wrap_angle(net.phases()[0] - cue).abs() < 1e-12);
    }

    #[test]
    fn energy_nondecreasing(n in 1usize..30, t0 in 0.0f64..1e4, dt in 0.0f64..1e4, p0 in 0u64..1000, dp in 0u64..1000) {
        let e = EnergyConfig::default();
        prop_assert!(e.energy(n, t0 + dt, p0) >= e.energy(n, t0, p0));
        prop_assert!(e.energy(n, t0, p0 + dp) >= e.energy(n, t0, p0));
    }
}
