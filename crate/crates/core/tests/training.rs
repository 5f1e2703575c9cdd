//! End-to-end training behaviour on simulated data.

use mdro::datagen::{generate, SimSpec, Variant};
use mdro::evaluation::eval_joint;
use mdro::optimizer::{train, Objective, OptimizerConfig};
use mdro::{Dataset32, Dataset64, LossKind, OptimizerConfig32, RobustSpec32, RobustSpec64};

fn sim(n: usize, seed: u64) -> Dataset64 {
    generate(&SimSpec::new(Variant::Simdist, n, 2, seed)).unwrap()
}

fn config(objective: Objective, iters: usize) -> OptimizerConfig<f64> {
    let mut opt = OptimizerConfig::new(objective);
    opt.max_iters = iters;
    opt.fit_intercept = false;
    opt
}

#[test]
fn huge_lipschitz_ratio_trains_like_joint() {
    let data = sim(200, 3);
    let spec = RobustSpec64::new(0.3, 2.0).unwrap().with_lipschitz_ratio(1e6).unwrap();
    let kind = LossKind::AbsoluteDeviation;
    let marginal = train(&data, kind, &spec, &config(Objective::Marginal, 400)).unwrap();
    let joint = train(&data, kind, &spec, &config(Objective::JointPnorm, 400)).unwrap();
    assert!(marginal.final_state.plan.mass() < 1e-9, "plan mass {}", marginal.final_state.plan.mass());
    let alphas = [0.3];
    let rm = eval_joint(&marginal.params, &data, kind, &alphas).unwrap().risks[0];
    let rj = eval_joint(&joint.params, &data, kind, &alphas).unwrap().risks[0];
    assert!((rm - rj).abs() <= 0.02 * rj, "marginal {rm} vs joint {rj}");
}

#[test]
fn trained_plans_stay_nonnegative() {
    let data = sim(120, 8);
    for objective in [Objective::Marginal, Objective::MarginalConfounded] {
        let spec = RobustSpec64::new(0.2, 2.0)
            .unwrap()
            .with_lipschitz_ratio(10.0)
            .unwrap()
            .with_delta(1e-4)
            .unwrap();
        let res = train(&data, LossKind::AbsoluteDeviation, &spec, &config(objective, 200)).unwrap();
        assert!(res.final_state.plan.as_slice().iter().all(|&b| b >= 0.0));
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}

/// Best objective after the default iteration budget, relative to a run ten
/// times longer.
fn gap_to_long_run(objective: Objective) -> f64 {
    let data: Dataset64 = generate(&SimSpec::new(Variant::Toy1d, 300, 1, 4)).unwrap();
    let spec = RobustSpec64::new(0.3, 2.0).unwrap().with_lipschitz_ratio(10.0).unwrap();
    let short_opt = OptimizerConfig::new(objective);
    let long_opt = OptimizerConfig {
        max_iters: 10 * short_opt.max_iters,
        ..short_opt
    };
    let short = train(&data, LossKind::AbsoluteDeviation, &spec, &short_opt).unwrap();
    let long = train(&data, LossKind::AbsoluteDeviation, &spec, &long_opt).unwrap();
    (short.best_value - long.best_value) / long.best_value.abs()
}

#[test]
fn best_iterate_is_close_to_a_long_run() {
    for objective in [Objective::Erm, Objective::JointCvar, Objective::JointPnorm] {
        let gap = gap_to_long_run(objective);
        assert!((-1e-12..=0.01).contains(&gap), "{objective}: gap {gap}");
    }
}

#[test]
fn plan_objectives_approach_a_long_run() {
    // Subgradient steps on the n x n plan converge at the slow 1/sqrt(t)
    // rate; the default budget lands a few percent above the long run.
    for objective in [Objective::Marginal, Objective::BoundedHolder, Objective::Rkhs] {
        let gap = gap_to_long_run(objective);
        assert!((-1e-12..=0.05).contains(&gap), "{objective}: gap {gap}");
    }
}

#[test]
fn single_precision_pipeline_runs() {
    let data: Dataset32 = generate(&SimSpec::new(Variant::Simdist, 100, 2, 1)).unwrap();
    let spec = RobustSpec32::new(0.3, 2.0).unwrap().with_lipschitz_ratio(10.0).unwrap();
    let mut opt = OptimizerConfig32::new(Objective::Marginal);
    opt.max_iters = 100;
    let res = train(&data, LossKind::AbsoluteDeviation, &spec, &opt).unwrap();
    assert!(res.params.is_finite());
    let risk = eval_joint(&res.params, &data, LossKind::AbsoluteDeviation, &[0.3f32]).unwrap();
    assert!(risk.risks[0].is_finite());
}
