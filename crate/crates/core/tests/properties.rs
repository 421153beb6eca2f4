use mdiqkd_core::channel::single_photon_pair_yield;
use mdiqkd_core::estimator::{s11_with, DecoyCoefficients};
use mdiqkd_core::keyrate::{rate_for_model, RateModel};
use mdiqkd_core::lp::{LinearProgram, LpStatus, Relation};
use mdiqkd_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn any_spec() -> impl Strategy<Value = SourceSpec> {
    (
        0.01..0.3f64,
        0.05..0.5f64,
        0.05..0.8f64,
        0.05..0.5f64,
        0.02..0.3f64,
        0.1..0.6f64,
    )
        .prop_filter_map(
            "probabilities must leave room for vacuum",
            |(mx, dy, mz, px, py, pz)| {
                let spec = SourceSpec::new(mx, mx + dy, mz, px, py, pz);
                (spec.p_o() > 0.01).then_some(spec)
            },
        )
}

fn line() -> impl Strategy<Value = DeviceLine> {
    prop_oneof![
        Just(DeviceLine::A),
        Just(DeviceLine::B),
        Just(DeviceLine::C)
    ]
}

proptest! {
    #[test]
    fn ranges_bracket_the_count(k in 0.0..1e9f64, eps in 1e-12..0.1f64, gamma in 0.5..8.0f64) {
        for policy in [
            FluctuationPolicy::chernoff(eps).unwrap(),
            FluctuationPolicy::normal(gamma).unwrap(),
            FluctuationPolicy::Exact,
        ] {
            let (lo, hi) = mean_range(k, policy).unwrap();
            prop_assert!(lo >= 0.0 && lo <= k && k <= hi);
        }
    }

    #[test]
    fn chernoff_ranges_widen_as_epsilon_shrinks(k in 0.0..1e8f64, eps in 1e-12..0.1f64) {
        let (lo1, hi1) = mean_range(k, FluctuationPolicy::chernoff(eps).unwrap()).unwrap();
        let (lo2, hi2) = mean_range(k, FluctuationPolicy::chernoff(eps / 10.0).unwrap()).unwrap();
        prop_assert!(lo2 <= lo1 + 1e-9 * k.max(1.0));
        prop_assert!(hi2 >= hi1);
    }

    #[test]
    fn chernoff_contains_normal_at_moderate_epsilon(log_k in 2.0..8.0f64, eps in 1e-4..0.05f64) {
        let k = 10f64.powf(log_k);
        let (clo, chi) = mean_range(k, FluctuationPolicy::chernoff(eps).unwrap()).unwrap();
        let (nlo, nhi) = mean_range(k, FluctuationPolicy::normal_for_epsilon(eps).unwrap()).unwrap();
        prop_assert!(clo <= nlo && chi >= nhi, "k={} eps={}", k, eps);
    }

    #[test]
    fn entropy_is_symmetric_and_bounded(p in 0.0..=1.0f64) {
        let h = binary_entropy(p).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - binary_entropy(1.0 - p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn poisson_mass_is_conserved(mu in 0.0..2.0f64) {
        let d = poisson_coefficients(mu, 20).unwrap();
        let total: f64 = d.coefficients.iter().sum::<f64>() + d.tail_mass;
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_counts_add_up(spec in any_spec(), log_n in 6.0..12.0f64) {
        let n = 10f64.powf(log_n) as u64;
        let counts = pair_counts(&spec, n).unwrap();
        let mut expected = 0.0;
        for source in PairSource::ALL {
            let (l, r) = source.sides();
            let share = n as f64 * spec.probability(l) * spec.probability(r);
            prop_assert!((counts.get(source) as f64 - share).abs() <= 0.5);
            expected += share;
        }
        prop_assert!((counts.total() as f64 - expected).abs() <= 4.0);
    }

    #[test]
    fn gains_are_probabilities(
        mu_a in 0.0..1.0f64, mu_b in 0.0..1.0f64, d in 0.0..150.0f64, line in line()
    ) {
        let p = ChannelParams::line(line, d);
        let eta = arm_transmittance(&p);
        for g in [gain_x(mu_a, mu_b, eta, eta, &p), gain_z(mu_a, mu_b, eta, eta, &p)] {
            prop_assert!(g.q >= 0.0 && g.q <= 1.0);
            prop_assert!(g.eq >= 0.0 && g.eq <= g.q * (1.0 + 1e-12));
        }
    }

    #[test]
    fn joint_analysis_dominates_baselines(spec in any_spec(), d in 0.0..60.0f64, line in line()) {
        let p = ChannelParams::line(line, d);
        let stats = simulate_observed(&spec, &p, 10_000_000_000, SimulationMode::Expected, 0).unwrap();
        let settings = RateSettings { grid_points: 51, ..RateSettings::default() };
        let model = RateModel::new(&stats, &spec, &p, FluctuationPolicy::reference_normal(), settings).unwrap();
        let ours = rate_for_model(&model, RateMethod::ThisWork).unwrap();
        let sep = rate_for_model(&model, RateMethod::JointSeparate).unwrap();
        let ind = rate_for_model(&model, RateMethod::Independent).unwrap();
        let slack = 1e-12 * ours.raw_rate.abs().max(1e-18);
        prop_assert!(ours.raw_rate >= sep.raw_rate - slack);
        prop_assert!(ours.rate_per_pair >= ind.rate_per_pair);
        prop_assert!(sep.s11 >= ind.s11 * (1.0 - 1e-9));
    }

    #[test]
    fn exact_yield_bound_is_sound(spec in any_spec(), d in 0.0..100.0f64, line in line()) {
        let p = ChannelParams::line(line, d);
        let stats = simulate_observed(&spec, &p, 10_000_000_000, SimulationMode::Expected, 0).unwrap();
        let mut ledger = FailureLedger::default();
        let c = build_constraints(&stats, FluctuationPolicy::Exact, &mut ledger).unwrap();
        let h = h_interval(&stats, &spec, FluctuationPolicy::Exact).unwrap();
        let s = s11_lower_bound(&c, &spec, h.h).unwrap();
        let eta = arm_transmittance(&p);
        let truth = single_photon_pair_yield(eta, eta, &p);
        prop_assert!(s.raw <= truth * (1.0 + 1e-9), "bound {} exceeds truth {}", s.raw, truth);
    }

    #[test]
    fn kappa_one_is_a_pass_through(spec in any_spec(), d in 0.0..40.0f64) {
        let p = ChannelParams::line(DeviceLine::A, d);
        let stats = simulate_observed(&spec, &p, 10_000_000_000, SimulationMode::Expected, 0).unwrap();
        let policy = FluctuationPolicy::reference_normal();
        let a = worst_case_rate(&stats, &spec, &p, policy, RateSettings::default()).unwrap();
        let explicit = RateSettings { kappa_s: 1.0, kappa_e: 1.0, ..RateSettings::default() };
        let b = worst_case_rate(&stats, &spec, &p, policy, explicit).unwrap();
        prop_assert_eq!(a.raw_rate.to_bits(), b.raw_rate.to_bits());
    }
}

/// Random bounded LPs built around a known feasible point.
#[test]
fn lp_optimum_never_exceeds_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(2..=7);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let lower: Vec<f64> = x0.iter().map(|x| x - rng.random_range(0.0..0.5)).collect();
        let upper: Vec<f64> = x0.iter().map(|x| x + rng.random_range(0.0..0.5)).collect();
        let objective: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut lp = LinearProgram::new(objective, lower.clone(), upper.clone());
        for _ in 0..rng.random_range(0..6) {
            let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let at: f64 = row.iter().zip(&x0).map(|(a, b)| a * b).sum();
            match rng.random_range(0..3) {
                0 => lp.push("le", row, Relation::Le, at + rng.random_range(0.0..0.2)),
                1 => lp.push("ge", row, Relation::Ge, at - rng.random_range(0.0..0.2)),
                _ => lp.push("eq", row, Relation::Eq, at),
            }
        }
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(
            lp.violation(&sol.x) < 1e-9,
            "violation {}",
            lp.violation(&sol.x)
        );
        assert!(sol.objective <= lp.evaluate(&x0) + 1e-9);
        for _ in 0..50 {
            let t: f64 = rng.random_range(0.0..1.0);
            let y: Vec<f64> = x0
                .iter()
                .zip(&sol.x)
                .map(|(a, b)| a + t * (b - a))
                .collect();
            assert!(sol.objective <= lp.evaluate(&y) + 1e-9);
        }
    }
}

#[test]
fn exact_lp_matches_closed_form() {
    let spec = SourceSpec::new(0.071, 0.212, 0.280, 0.357, 0.121, 0.479);
    let coeffs = DecoyCoefficients::new(&spec).unwrap();
    for line in [DeviceLine::A, DeviceLine::B] {
        for d in [0.0, 25.0, 50.0, 100.0] {
            let p = ChannelParams::line(line, d);
            let stats =
                simulate_observed(&spec, &p, 10_000_000_000, SimulationMode::Expected, 0).unwrap();
            let mut ledger = FailureLedger::default();
            let c = build_constraints(&stats, FluctuationPolicy::Exact, &mut ledger).unwrap();
            let h = h_interval(&stats, &spec, FluctuationPolicy::Exact)
                .unwrap()
                .h;
            let lp = s11_with(&c, &coeffs, h).unwrap().raw;
            let direct = coeffs.s11_formula(&c.observed, h);
            assert!(
                (lp - direct).abs() <= 1e-10 * direct.abs(),
                "{line:?} {d}: {lp} vs {direct}"
            );
        }
    }
}

#[test]
fn optimizer_is_deterministic() {
    let problem = optimizer::Problem {
        params: ChannelParams::line(DeviceLine::A, 40.0),
        n_total: 10_000_000_000,
        policy: FluctuationPolicy::reference_normal(),
        method: RateMethod::ThisWork,
        settings: RateSettings::default(),
    };
    let cfg = SearchConfig {
        starts: 3,
        max_iterations: 80,
        seed: 5,
        ..SearchConfig::default()
    };
    let a = optimize(&problem, &cfg).unwrap();
    let b = optimize(&problem, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(validate_spec(&a.spec).is_ok());
    let best = a
        .starts
        .iter()
        .map(|s| s.best_score)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(a
        .starts
        .iter()
        .all(|s| s.history.windows(2).all(|w| w[1] >= w[0])));
    assert!(best >= a.result.search_rate * (1.0 - 1e-2));
}

#[test]
fn optimizer_improves_towards_asymptotic_ceiling() {
    let problem = optimizer::Problem {
        params: ChannelParams::line(DeviceLine::B, 0.0),
        n_total: 10_000_000_000_000_000,
        policy: FluctuationPolicy::Exact,
        method: RateMethod::ThisWork,
        settings: RateSettings::default(),
    };
    let cfg = SearchConfig {
        starts: 2,
        max_iterations: 150,
        ..SearchConfig::default()
    };
    let r = optimize(&problem, &cfg).unwrap();
    for s in &r.starts {
        assert!(s.history.windows(2).all(|w| w[1] >= w[0]));
    }
    assert!(r.spec.p_z > 0.5, "p_z = {}", r.spec.p_z);
}
