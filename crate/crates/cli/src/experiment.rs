//! Building blocks shared by `cv`, `repro` and the acceptance suite:
//! seed offsets, hyperparameter selection and the oracle slope search.

use mdro::datagen::{generate_replicates, SimSpec, Variant};
use mdro::evaluation::{eval_oracle, eval_replicates};
use mdro::optimizer::{train, OptimizerConfig, TrainResult};
use mdro::{Dataset, LossKind, ParamVector, RobustSpec};
use rayon::prelude::*;

use crate::{CliError, CliResult};

/// Offset added to the base seed for the held-out replicate sample.
pub const HOLDOUT_SEED_OFFSET: u64 = 1_000;
/// Offset added to the base seed for oracle evaluation samples.
pub const EVAL_SEED_OFFSET: u64 = 2_000;

pub const DEFAULT_HOLDOUT_N: usize = 1000;
pub const DEFAULT_HOLDOUT_M: usize = 100;

/// Held-out sample with replicated labels for scoring a grid.
pub fn synthetic_holdout(variant: Variant, d: usize, n: usize, m: usize, seed: u64) -> CliResult<Dataset<f64>> {
    Ok(generate_replicates(
        &SimSpec::new(variant, n, d, seed.wrapping_add(HOLDOUT_SEED_OFFSET)),
        m,
    )?)
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub lipschitz_ratio: f64,
    /// Held-out worst-case risk, or why the point failed.
    pub score: Result<f64, String>,
    pub params: Option<ParamVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    /// Sorted by increasing ratio.
    pub points: Vec<GridPoint>,
    pub best: usize,
}

impl CvOutcome {
    pub fn best_point(&self) -> &GridPoint {
        &self.points[self.best]
    }

    pub fn best_ratio(&self) -> f64 {
        self.best_point().lipschitz_ratio
    }

    pub fn best_params(&self) -> &ParamVector<f64> {
        self.best_point().params.as_ref().expect("the selected point trained")
    }

    /// `lipschitz_ratio,score,selected` rows; failed points carry `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lipschitz_ratio,score,selected\n");
        for (k, p) in self.points.iter().enumerate() {
            let score = p.score.as_ref().map_or(f64::NAN, |s| *s);
            out.push_str(&format!("{},{},{}\n", p.lipschitz_ratio, score, u8::from(k == self.best)));
        }
        out
    }
}

/// Trains one model per `lipschitz_ratio` in `grid` and keeps the one with
/// the lowest replicate-estimated worst-case risk at `score_alpha` on
/// `holdout`. Ties go to the smaller ratio; failed points are recorded.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    data: &Dataset<f64>,
    holdout: &Dataset<f64>,
    kind: LossKind,
    spec: &RobustSpec<f64>,
    opt: &OptimizerConfig<f64>,
    grid: &[f64],
    score_alpha: f64,
    jobs: usize,
) -> CliResult<CvOutcome> {
    if grid.is_empty() {
        return Err(CliError::Usage("the lipschitz_ratio grid is empty".into()));
    }
    if holdout.replicates().is_none() {
        return Err(CliError::Usage("the held-out set needs replicate columns".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let evaluate = |ratio: f64| -> GridPoint {
        let run = || -> Result<(f64, ParamVector<f64>), String> {
            let spec = spec.with_lipschitz_ratio(ratio).map_err(|e| e.to_string())?;
            let fit = train(data, kind, &spec, opt).map_err(|e| e.to_string())?;
            let report = eval_replicates(&fit.params, holdout, kind, &[score_alpha], None).map_err(|e| e.to_string())?;
            let score = report.risks[0];
            if score.is_finite() {
                Ok((score, fit.params))
            } else {
                Err("non-finite score".into())
            }
        };
        match run() {
            Ok((score, params)) => GridPoint {
                lipschitz_ratio: ratio,
                score: Ok(score),
                params: Some(params),
            },
            Err(reason) => GridPoint {
                lipschitz_ratio: ratio,
                score: Err(reason),
                params: None,
            },
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let points: Vec<GridPoint> = pool.install(|| sorted.par_iter().map(|&r| evaluate(r)).collect());
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in points.iter().enumerate() {
        if let Ok(s) = p.score {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((k, s));
            }
        }
    }
    match best {
        Some((best, _)) => Ok(CvOutcome { points, best }),
        None => Err(CliError::Runtime(format!(
            "every grid point failed: {}",
            points
                .iter()
                .map(|p| format!("{} ({})", p.lipschitz_ratio, p.score.as_ref().err().cloned().unwrap_or_default()))
                .collect::<Vec<_>>()
                .join("; ")
        ))),
    }
}

/// Plain training call with a readable error.
pub fn fit(
    data: &Dataset<f64>,
    kind: LossKind,
    spec: &RobustSpec<f64>,
    opt: &OptimizerConfig<f64>,
) -> CliResult<TrainResult<f64>> {
    Ok(train(data, kind, spec, opt)?)
}

/// Best slope on the first coordinate (others and the intercept zero) for
/// the oracle worst-case risk at `alpha`: a coarse grid over `[lo, hi]`
/// refined twice around the minimizer.
pub fn oracle_slope(eval_data: &Dataset<f64>, variant: Variant, alpha: f64, lo: f64, hi: f64) -> CliResult<(f64, f64)> {
    let d = eval_data.dim();
    let risk = |s: f64| -> CliResult<f64> {
        let mut theta = vec![0.0; d];
        theta[0] = s;
        let params = ParamVector::new(theta, 0.0)?;
        Ok(eval_oracle(&params, eval_data, variant, &[alpha])?.risks[0])
    };
    let (mut a, mut b) = (lo, hi);
    let mut best = (lo, f64::INFINITY);
    for _ in 0..3 {
        let steps = 40;
        let h = (b - a) / steps as f64;
        for k in 0..=steps {
            let s = a + h * k as f64;
            let r = risk(s)?;
            if r < best.1 {
                best = (s, r);
            }
        }
        a = best.0 - h;
        b = best.0 + h;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdro::datagen::generate;
    use mdro::optimizer::Objective;

    #[test]
    fn singleton_grid_is_selected() {
        let data: Dataset<f64> = generate(&SimSpec::new(Variant::Simdist, 80, 1, 3)).unwrap();
        let holdout = synthetic_holdout(Variant::Simdist, 1, 60, 5, 3).unwrap();
        let spec = RobustSpec::new(0.3, 2.0).unwrap();
        let mut opt = OptimizerConfig::new(Objective::Marginal);
        opt.max_iters = 30;
        let cv = cross_validate(&data, &holdout, LossKind::AbsoluteDeviation, &spec, &opt, &[2.0], 0.3, 1).unwrap();
        assert_eq!(cv.best_ratio(), 2.0);
        assert_eq!(cv.to_csv().lines().count(), 2);
    }

    #[test]
    fn all_failures_are_fatal() {
        let data: Dataset<f64> = generate(&SimSpec::new(Variant::Simdist, 30, 1, 3)).unwrap();
        let holdout = synthetic_holdout(Variant::Simdist, 1, 30, 2, 3).unwrap();
        let spec = RobustSpec::new(0.3, 2.0).unwrap();
        let opt = OptimizerConfig::new(Objective::Marginal);
        // negative ratios are rejected by RobustSpec validation
        let err = cross_validate(&data, &holdout, LossKind::AbsoluteDeviation, &spec, &opt, &[-1.0, -2.0], 0.3, 2);
        assert!(matches!(err, Err(CliError::Runtime(_))));
    }

    #[test]
    fn oracle_slope_on_toy_is_small() {
        let eval: Dataset<f64> = generate(&SimSpec::new(Variant::Toy1d, 4000, 1, 9)).unwrap();
        let (s, r) = oracle_slope(&eval, Variant::Toy1d, 0.05, -0.5, 1.5).unwrap();
        assert!(s.abs() < 0.4, "{s}");
        assert!(r < 1.2);
    }
}
