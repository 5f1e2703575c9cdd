//! Invariants of the dual risk measures, the transport plan and the
//! simulation generators, checked on random inputs.

use mdro::datagen::{expected_abs_gaussian, generate, SimSpec, Variant};
use mdro::evaluation::{eval_oracle, RiskReport};
use mdro::marginal::TransportPlan;
use mdro::risk_duals::pnorm_objective;
use mdro::{cvar_dual, pnorm_dual, Dataset, ParamVector};
use proptest::prelude::*;

/// Tail average with fractional weight on the boundary value: the
/// worst-case mean over all reweightings with density at most `1/alpha`.
fn brute_cvar(values: &[f64], alpha: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut budget = alpha * values.len() as f64;
    let mut total = 0.0;
    for v in sorted {
        let w = budget.min(1.0);
        if w <= 0.0 {
            break;
        }
        total += w * v;
        budget -= w;
    }
    total / (alpha * values.len() as f64)
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..40)
}

proptest! {
    #[test]
    fn cvar_matches_tail_average(v in values(), alpha in 0.01f64..=1.0) {
        let (risk, _) = cvar_dual(&v, alpha).unwrap();
        let want = brute_cvar(&v, alpha);
        prop_assert!((risk - want).abs() <= 1e-9 * (1.0 + want.abs()), "{risk} vs {want}");
    }

    #[test]
    fn cvar_lies_between_mean_and_max(v in values(), alpha in 0.01f64..=1.0) {
        let (risk, _) = cvar_dual(&v, alpha).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(risk >= mean - 1e-9 && risk <= max + 1e-9);
    }

    #[test]
    fn pnorm_dominates_cvar(v in values(), alpha in 0.05f64..0.95, p in 1.2f64..3.0) {
        let (cvar, _) = cvar_dual(&v, alpha).unwrap();
        let (pn, _) = pnorm_dual(&v, alpha, p).unwrap();
        prop_assert!(pn >= cvar - 1e-7 * (1.0 + cvar.abs()), "{pn} < {cvar}");
    }

    #[test]
    fn pnorm_objective_is_convex_in_eta(
        v in values(),
        alpha in 0.05f64..0.95,
        p in 1.0f64..3.0,
        a in -6.0f64..6.0,
        b in -6.0f64..6.0,
    ) {
        let mid = pnorm_objective(&v, 0.5 * (a + b), alpha, p);
        let chord = 0.5 * (pnorm_objective(&v, a, alpha, p) + pnorm_objective(&v, b, alpha, p));
        prop_assert!(mid <= chord + 1e-9 * (1.0 + chord.abs()));
    }

    #[test]
    fn risk_report_is_monotone_and_ends_at_mean(
        v in values(),
        alphas in prop::collection::vec(0.01f64..1.0, 1..8),
    ) {
        let mut grid = alphas.clone();
        grid.push(1.0);
        let report = RiskReport::from_values(&v, &grid, "test").unwrap();
        prop_assert!(report.alphas.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(report.risks.windows(2).all(|w| w[0] >= w[1] - 1e-9));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let at_one = report.risk_at(1.0).unwrap();
        prop_assert!((at_one - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
    }

    #[test]
    fn adjustments_sum_to_zero(n in 1usize..8, seed in prop::collection::vec(0.0f64..3.0, 64)) {
        let b: Vec<f64> = seed.into_iter().take(n * n).collect();
        let plan = TransportPlan::from_matrix(n, b).unwrap();
        let total: f64 = plan.adjustments().iter().sum();
        prop_assert!(total.abs() <= 1e-12 * (1.0 + plan.mass()));
    }

    #[test]
    fn oracle_report_ignores_row_order(seed in 0u64..1000, slope in -2.0f64..2.0, shift in 0usize..50) {
        let data: Dataset<f64> = generate(&SimSpec::new(Variant::Simdist, 50, 2, seed)).unwrap();
        let perm: Vec<usize> = (0..50).map(|i| (i * 7 + shift) % 50).collect();
        let shuffled = data.subset(&perm).unwrap();
        let theta = ParamVector::new(vec![slope, 0.3], 0.1).unwrap();
        let alphas = [0.1, 0.5, 1.0];
        let a = eval_oracle(&theta, &data, Variant::Simdist, &alphas).unwrap();
        let b = eval_oracle(&theta, &shuffled, Variant::Simdist, &alphas).unwrap();
        for (x, y) in a.risks.iter().zip(&b.risks) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), n in 1usize..60, d in 1usize..4) {
        for variant in [Variant::Simdist, Variant::Confounded] {
            let spec = SimSpec::new(variant, n, d, seed);
            let a: Dataset<f64> = generate(&spec).unwrap();
            let b: Dataset<f64> = generate(&spec).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn generated_moments_match_the_model() {
    let data: Dataset<f64> = generate(&SimSpec::new(Variant::Simdist, 40_000, 3, 5)).unwrap();
    let group = data.group().unwrap();
    let minority = group.iter().filter(|&&g| g == 1).count() as f64 / data.len() as f64;
    assert!((minority - 0.15).abs() < 0.01, "minority share {minority}");
    let mut resid = Vec::new();
    for i in 0..data.len() {
        let x = data.row(i);
        assert!(x[1..].iter().all(|v| (-1.0..=1.0).contains(v)));
        if x[0] < 0.0 {
            assert_eq!(data.labels()[i], -x[0]);
        } else {
            resid.push(data.labels()[i] - x[0]);
        }
    }
    let m = resid.iter().sum::<f64>() / resid.len() as f64;
    let var = resid.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / resid.len() as f64;
    assert!(m.abs() < 0.02 && (var - 1.0).abs() < 0.03, "noise mean {m} var {var}");
}

#[test]
fn expected_abs_gaussian_reference_values() {
    assert!((expected_abs_gaussian(0.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    assert!((expected_abs_gaussian(1.0) - 1.166_6).abs() < 1e-4);
    assert!((expected_abs_gaussian(-1.0) - expected_abs_gaussian(1.0)).abs() < 1e-12);
}

#[test]
fn conditional_risk_agrees_with_monte_carlo() {
    use mdro::datagen::conditional_risk_oracle;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let theta = ParamVector::new(vec![0.6, -0.4], 0.2).unwrap();
    let draws = 100_000;
    for k in 0..50 {
        let x1 = -1.0 + 2.0 * (k as f64 + 0.5) / 50.0;
        let x = [x1, 0.25];
        let f = theta.predict(&x);
        let mc = if x1 < 0.0 {
            (f + x1).abs()
        } else {
            let total: f64 = (0..draws)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (f - x1 - e).abs()
                })
                .sum();
            total / draws as f64
        };
        let exact = conditional_risk_oracle(&theta, &x, Variant::Simdist).unwrap();
        assert!((exact - mc).abs() < 0.01, "x1 = {x1}: {exact} vs {mc}");
    }
}
