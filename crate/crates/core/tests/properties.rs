//! Property-based invariants across the core modules.

use mixflow_core::duality::{check_kmp_edge_duality, eval_duality, DualityKind};
use mixflow_core::engine::{gillespie_run, thinned_run, Recording, DEFAULT_RATE_CAP};
use mixflow_core::generators::{
    harmonic_edge_apply, harmonic_reservoir_apply, kmp_continuous_edge_apply, kmp_discrete_edge_apply,
    kmp_hidden_edge_apply, kmp_hidden_reservoir_apply, kmp_reservoir_apply, sip_rates, Direction,
    HarmonicReservoirPart, PairState,
};
use mixflow_core::quadrature::integrate_adaptive;
use mixflow_core::sampling::{
    beta_binomial_pmf, beta_pdf, discrete_gamma_pmf, harmonic_bulk_rate, ordered_dirichlet_sample, poisson_pmf,
    GammaLaw, JumpMeasure, MixingLaw,
};
use mixflow_core::{build_graph, Family, Graph, Model, ModelSpec, ReservoirSpec, RngStream, StateVector};
use proptest::prelude::*;
use rand::RngCore;

fn two_s() -> impl Strategy<Value = f64> {
    0.1f64..4.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_rebuild_is_idempotent_and_symmetric(n in 1usize..7, w in proptest::collection::vec(0.1f64..3.0, 6)) {
        let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let edges: Vec<(String, String, f64)> = (1..n).map(|i| (ids[i - 1].clone(), ids[i].clone(), w[i - 1])).collect();
        let g = build_graph(&ids, &edges, &[(ids[0].clone(), 1.0)]).unwrap();
        let again = build_graph(g.vertices(), &g.edge_triples(), &g.coupling_pairs()).unwrap();
        prop_assert_eq!(&g, &again);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
    }

    #[test]
    fn pmfs_normalize(n in 0u64..40, ts in two_s(), theta in 0.0f64..3.0, z in 0.0f64..20.0) {
        let bb: f64 = (0..=n).map(|k| beta_binomial_pmf(n, k, ts).unwrap()).sum();
        prop_assert!((bb - 1.0).abs() < 1e-10);
        for k in 0..=n {
            let a = beta_binomial_pmf(n, k, ts).unwrap();
            let b = beta_binomial_pmf(n, n - k, ts).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
        let mut dg = 0.0;
        let mut m = 0;
        while dg < 1.0 - 1e-13 && m < 20_000 {
            dg += discrete_gamma_pmf(m, theta, ts).unwrap();
            m += 1;
        }
        prop_assert!((dg - 1.0).abs() < 1e-10);
        let po: f64 = (0..400).map(|k| poisson_pmf(k, z).unwrap()).sum();
        prop_assert!((po - 1.0).abs() < 1e-10);
    }

    #[test]
    fn densities_integrate_to_one(ts in 0.6f64..4.0, theta in 0.2f64..3.0) {
        let beta = integrate_adaptive(|u| beta_pdf(ts, u).unwrap(), 0.0, 1.0, 1e-11, 1e-11);
        prop_assert!((beta.value - 1.0).abs() < 1e-8, "beta {}", beta.value);
        let g = GammaLaw::new(ts, theta).unwrap();
        let gamma = mixflow_core::quadrature::integrate_to_infinity(|x| g.pdf(x), 0.0, 1e-11, 1e-11);
        prop_assert!((gamma.value - 1.0).abs() < 1e-8, "gamma {}", gamma.value);
    }

    #[test]
    fn ordered_dirichlet_samples_are_sorted(n in 1usize..6, ts in two_s(), lo in 0.0f64..2.0, width in 0.0f64..3.0, seed in any::<u64>()) {
        let law = MixingLaw::new(n, ts, lo, lo + width).unwrap();
        let mut r = RngStream::new(seed, 0);
        for _ in 0..20 {
            let th = ordered_dirichlet_sample(&law, &mut r);
            prop_assert_eq!(th.len(), n);
            prop_assert!(th.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(th.iter().all(|&t| t >= lo && t <= lo + width));
        }
    }

    #[test]
    fn truncated_rates_decrease_and_samples_respect_cut(ts in two_s(), e1 in 1e-6f64..0.99, e2 in 1e-6f64..0.99, seed in any::<u64>()) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(harmonic_bulk_rate(ts, lo).unwrap() >= harmonic_bulk_rate(ts, hi).unwrap());
        let bulk = JumpMeasure::harmonic_bulk(ts, lo).unwrap();
        let input = JumpMeasure::reservoir_input(lo).unwrap();
        prop_assert!(input.rate() >= JumpMeasure::reservoir_input(hi).unwrap().rate());
        let mut r = RngStream::new(seed, 1);
        for _ in 0..50 {
            let u = bulk.sample(&mut r);
            prop_assert!((lo..=1.0).contains(&u));
            prop_assert!(input.sample(&mut r) >= lo);
        }
    }

    #[test]
    fn streams_reproduce_bit_for_bit(seed in any::<u64>(), id in any::<u64>()) {
        let mut a = RngStream::new(seed, id);
        let mut b = RngStream::new(seed, id);
        for _ in 0..32 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn edge_kernels_conserve_and_stay_nonnegative(x in 0u64..50, y in 0u64..50, a in 0.0f64..10.0, b in 0.0f64..10.0, ts in two_s(), seed in any::<u64>()) {
        let mut r = RngStream::new(seed, 2);
        let (x2, y2) = kmp_discrete_edge_apply(x, y, ts, &mut r).unwrap();
        prop_assert_eq!(x2 + y2, x + y);
        let (a2, b2) = kmp_continuous_edge_apply(a, b, ts, &mut r).unwrap();
        prop_assert!(a2 >= 0.0 && b2 >= 0.0 && ((a2 + b2) - (a + b)).abs() <= 1e-12 * (a + b).max(1.0));
        let bulk = JumpMeasure::harmonic_bulk(ts, 1e-3).unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            match harmonic_edge_apply(PairState::Counts(x, y), ts, None, dir, &mut r).unwrap() {
                PairState::Counts(p, q) => prop_assert_eq!(p + q, x + y),
                other => prop_assert!(false, "kind changed: {:?}", other),
            }
            match harmonic_edge_apply(PairState::Masses(a, b), ts, Some(&bulk), dir, &mut r).unwrap() {
                PairState::Masses(p, q) => prop_assert!(p >= 0.0 && q >= 0.0 && ((p + q) - (a + b)).abs() <= 1e-12 * (a + b).max(1.0)),
                other => prop_assert!(false, "kind changed: {:?}", other),
            }
        }
        prop_assert!(kmp_reservoir_apply(a, b, ts, &mut r).unwrap() >= 0.0);
        for part in [HarmonicReservoirPart::Exit, HarmonicReservoirPart::InputStandard, HarmonicReservoirPart::InputSampled] {
            prop_assert!(harmonic_reservoir_apply(a, b, ts, 1e-3, part, &mut r).unwrap() >= 0.0);
        }
    }

    #[test]
    fn hidden_kernels_contract(a in 0.0f64..5.0, b in 0.0f64..5.0, star in 0.0f64..5.0, ts in two_s(), seed in any::<u64>()) {
        let mut r = RngStream::new(seed, 3);
        let (lo, hi) = (a.min(b), a.max(b));
        let tol = 1e-12 * hi.max(1.0);
        let (p, q) = kmp_hidden_edge_apply(a, b, ts, &mut r).unwrap();
        prop_assert_eq!(p, q);
        prop_assert!(p >= lo - tol && p <= hi + tol);
        let bulk = JumpMeasure::harmonic_bulk(ts, 1e-3).unwrap();
        match harmonic_edge_apply(PairState::Thetas(a, b), ts, Some(&bulk), Direction::Forward, &mut r).unwrap() {
            PairState::Thetas(p, q) => {
                prop_assert_eq!(q, b);
                prop_assert!(p >= lo - tol && p <= hi + tol);
            }
            other => prop_assert!(false, "kind changed: {:?}", other),
        }
        let (rlo, rhi) = (a.min(star), a.max(star));
        let v = kmp_hidden_reservoir_apply(a, star, ts, &mut r).unwrap();
        prop_assert!(v >= rlo - tol && v <= rhi + tol);
        let w = harmonic_reservoir_apply(a, star, ts, 1e-3, HarmonicReservoirPart::Hidden, &mut r).unwrap();
        prop_assert!(w >= rlo - tol && w <= rhi + tol);
    }

    #[test]
    fn sip_rates_are_nonnegative_and_vanish_when_impossible(eta in proptest::collection::vec(0u64..20, 3), ts in two_s()) {
        let g = Graph::chain(3, 1.0).unwrap();
        let spec = ModelSpec::new(Family::Sip, ts)
            .with_reservoir("1", ReservoirSpec::rates(1.0, 2.0))
            .with_reservoir("3", ReservoirSpec::rates(0.5, 3.0));
        let m = Model::new(&g, spec).unwrap();
        for (ev, rate) in sip_rates(&eta, &m).unwrap() {
            prop_assert!(rate >= 0.0);
            match ev {
                mixflow_core::generators::ParticleEvent::Hop { from, .. } if eta[from] == 0 => prop_assert_eq!(rate, 0.0),
                mixflow_core::generators::ParticleEvent::Death { site, .. } if eta[site] == 0 => prop_assert_eq!(rate, 0.0),
                _ => {}
            }
        }
    }

    #[test]
    fn factorial_duality_indicator(xi in proptest::collection::vec(0u64..6, 3), eta in proptest::collection::vec(0u64..6, 3), ts in two_s()) {
        let v = eval_duality(DualityKind::Factorial { two_s: ts }, &StateVector::Counts(xi.clone()), &StateVector::Counts(eta.clone())).unwrap();
        if xi.iter().zip(&eta).any(|(k, n)| k > n) {
            prop_assert_eq!(v, 0.0);
        } else {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn parameter_duality_scale_covariance(xi in proptest::collection::vec(0u64..6, 3), th in proptest::collection::vec(0.0f64..2.0, 3), c in 0.0f64..3.0) {
        let d = |t: Vec<f64>| eval_duality(DualityKind::Parameter, &StateVector::Counts(xi.clone()), &StateVector::Thetas(t)).unwrap();
        let scaled = d(th.iter().map(|t| c * t).collect());
        let expected = c.powi(xi.iter().sum::<u64>() as i32) * d(th.clone());
        prop_assert!((scaled - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
    }

    #[test]
    fn identity_pass_is_monotone_in_tolerance(a in 0u32..6, b in 0u32..6, ti in 0.0f64..3.0, tj in 0.0f64..3.0, ts in two_s(), t1 in 1e-18f64..1e-6, t2 in 1e-18f64..1e-6) {
        let r = check_kmp_edge_duality((a, b), (ti, tj), ts, t1).unwrap();
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(!r.clone().with_tolerance(lo).pass || r.with_tolerance(hi).pass);
    }

    #[test]
    fn trajectories_are_deterministic_valid_and_conserving(n0 in 0u64..8, n1 in 0u64..8, seed in any::<u64>(), ts in two_s()) {
        let g = build_graph(&["1", "2"], &[("1", "2", 1.0)], &[] as &[(&str, f64)]).unwrap();
        let m = Model::new(&g, ModelSpec::new(Family::KmpDiscrete, ts)).unwrap();
        let init = StateVector::Counts(vec![n0, n1]);
        let run = || gillespie_run(&m, init.clone(), 3.0, RngStream::new(seed, 0), Recording::Events, DEFAULT_RATE_CAP).unwrap();
        let (a, b) = (run(), run());
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.times.len(), a.states.len());
        prop_assert!(a.times.windows(2).all(|w| w[0] < w[1]));
        for s in &a.states {
            prop_assert!(s.validate().is_ok());
            prop_assert_eq!(s.total(), (n0 + n1) as f64);
        }
    }

    #[test]
    fn hidden_harmonic_box_is_forward_invariant(t0 in 0.0f64..1.0, t1 in 0.0f64..1.0, seed in any::<u64>(), ts in two_s()) {
        let g = Graph::chain(2, 1.0).unwrap();
        let spec = ModelSpec::new(Family::HiddenHarmonic, ts)
            .with_reservoir("1", ReservoirSpec::theta(0.0))
            .with_reservoir("2", ReservoirSpec::theta(1.0));
        let m = Model::new(&g, spec).unwrap();
        let tr = thinned_run(&m, StateVector::Thetas(vec![t0, t1]), 5.0, 1e-2, RngStream::new(seed, 0), Recording::Events).unwrap();
        prop_assert!(tr.states.iter().flat_map(|s| s.to_f64()).all(|x| (0.0..=1.0).contains(&x)));
    }
}
