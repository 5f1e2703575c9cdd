//! Scripted desk-scale versions of the simulation figures. Each figure
//! returns one `(file name, CSV text)` pair per panel.

use std::str::FromStr;

use mdro::datagen::{generate, generate_replicates, SimSpec, Variant, CONFOUNDER_SUPPORT};
use mdro::evaluation::{eval_oracle, eval_replicates, oracle_sample, DEFAULT_ORACLE_ROWS};
use mdro::optimizer::{Objective, OptimizerConfig};
use mdro::{Dataset, LossKind, ParamVector, RobustSpec};

use crate::config::Settings;
use crate::experiment::{cross_validate, fit, oracle_slope, synthetic_holdout, EVAL_SEED_OFFSET};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    DimDep,
    AlphaSweep,
    LipSensitivity,
    Confounded,
    Toy,
}

impl Figure {
    pub const ALL: [Figure; 5] = [
        Figure::DimDep,
        Figure::AlphaSweep,
        Figure::LipSensitivity,
        Figure::Confounded,
        Figure::Toy,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::DimDep => "fig_dimdep",
            Figure::AlphaSweep => "fig_alpha_sweep",
            Figure::LipSensitivity => "fig_lip_sensitivity",
            Figure::Confounded => "fig_confounded",
            Figure::Toy => "fig_toy",
        }
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Figure::ALL.iter().copied().find(|f| f.id() == s).ok_or_else(|| {
            let ids: Vec<&str> = Figure::ALL.iter().map(|f| f.id()).collect();
            format!("unknown figure '{s}'; valid ids: {}", ids.join(", "))
        })
    }
}

/// Knobs shared by the scripted experiments; every field can be overridden
/// through the settings of the same name.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub seed: u64,
    pub train_alpha: f64,
    pub test_alpha: f64,
    pub iters: usize,
    pub step0: f64,
    pub grid: Vec<f64>,
    pub eval_n: usize,
    pub holdout_n: usize,
    pub holdout_m: usize,
    pub jobs: usize,
}

impl Protocol {
    pub fn from_settings(settings: &Settings) -> CliResult<Self> {
        Ok(Protocol {
            seed: settings.seed()?,
            train_alpha: settings.parsed_or("alpha0", 0.3)?,
            test_alpha: settings.parsed_or("cv_alpha", 0.05)?,
            iters: settings.parsed_or("iters", 300)?,
            step0: settings.parsed_or("step0", 0.5)?,
            grid: settings
                .list("lipschitz_ratio")?
                .unwrap_or_else(|| vec![0.1, 1.0, 10.0, 100.0]),
            eval_n: settings.parsed_or("eval_n", DEFAULT_ORACLE_ROWS)?,
            holdout_n: settings.parsed_or("holdout_n", 1000)?,
            holdout_m: settings.parsed_or("holdout_m", 100)?,
            jobs: settings.parsed_or("jobs", 1)?,
        })
    }

    pub fn optimizer(&self, objective: Objective) -> OptimizerConfig<f64> {
        let mut opt = OptimizerConfig::new(objective);
        opt.max_iters = self.iters;
        opt.step0 = self.step0;
        // the simulated models are linear through the origin
        opt.fit_intercept = false;
        opt.seed = self.seed;
        opt
    }

    pub fn spec(&self, p: f64) -> CliResult<RobustSpec<f64>> {
        Ok(RobustSpec::new(self.train_alpha, p)?)
    }
}

/// A trained baseline or robust model with its label.
#[derive(Debug, Clone)]
pub struct Trained {
    pub method: String,
    pub params: ParamVector<f64>,
    pub lipschitz_ratio: Option<f64>,
}

/// ERM, joint DRO (p = 2) and cross-validated marginal DRO (p = 2) on `data`.
pub fn core_methods(data: &Dataset<f64>, variant: Variant, proto: &Protocol) -> CliResult<Vec<Trained>> {
    let kind = LossKind::AbsoluteDeviation;
    let spec = proto.spec(2.0)?;
    let erm = fit(data, kind, &spec, &proto.optimizer(Objective::Erm))?;
    let joint = fit(data, kind, &spec, &proto.optimizer(Objective::JointPnorm))?;
    let holdout = synthetic_holdout(variant, data.dim(), proto.holdout_n, proto.holdout_m, proto.seed)?;
    let cv = cross_validate(
        data,
        &holdout,
        kind,
        &spec,
        &proto.optimizer(Objective::Marginal),
        &proto.grid,
        proto.test_alpha,
        proto.jobs,
    )?;
    Ok(vec![
        Trained {
            method: "erm".into(),
            params: erm.params,
            lipschitz_ratio: None,
        },
        Trained {
            method: "joint".into(),
            params: joint.params,
            lipschitz_ratio: None,
        },
        Trained {
            method: "marginal".into(),
            params: cv.best_params().clone(),
            lipschitz_ratio: Some(cv.best_ratio()),
        },
    ])
}

fn eval_sample(variant: Variant, d: usize, proto: &Protocol) -> CliResult<Dataset<f64>> {
    Ok(oracle_sample(variant, d, proto.eval_n, proto.seed.wrapping_add(EVAL_SEED_OFFSET))?)
}

fn opt_ratio(r: Option<f64>) -> String {
    r.map_or_else(String::new, |v| v.to_string())
}

/// `method,slope,intercept,lipschitz_ratio,risk_tail,mean_risk`
pub fn fig_toy(settings: &Settings) -> CliResult<Vec<(String, String)>> {
    let proto = Protocol::from_settings(settings)?;
    let n = settings.parsed_or("n", 5000)?;
    let data: Dataset<f64> = generate(&SimSpec::new(Variant::Toy1d, n, 1, proto.seed))?;
    let eval = eval_sample(Variant::Toy1d, 1, &proto)?;
    let mut out = String::from("method,slope,intercept,lipschitz_ratio,risk_tail,mean_risk\n");
    for m in core_methods(&data, Variant::Toy1d, &proto)? {
        let report = eval_oracle(&m.params, &eval, Variant::Toy1d, &[proto.test_alpha])?;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.method,
            m.params.theta[0],
            m.params.intercept,
            opt_ratio(m.lipschitz_ratio),
            report.risks[0],
            report.mean_risk
        ));
    }
    Ok(vec![("fig_toy.csv".into(), out)])
}

/// `method,alpha0,risk`, with an `oracle` row per test α₀ from the slope
/// search.
pub fn fig_alpha_sweep(settings: &Settings) -> CliResult<Vec<(String, String)>> {
    let proto = Protocol::from_settings(settings)?;
    let n = settings.parsed_or("n", 2000)?;
    let alphas: Vec<f64> = settings
        .list("alphas")?
        .unwrap_or_else(|| vec![0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0]);
    let data: Dataset<f64> = generate(&SimSpec::new(Variant::Simdist, n, 1, proto.seed))?;
    let eval = eval_sample(Variant::Simdist, 1, &proto)?;
    let mut out = String::from("method,alpha0,risk\n");
    for m in core_methods(&data, Variant::Simdist, &proto)? {
        let report = eval_oracle(&m.params, &eval, Variant::Simdist, &alphas)?;
        for (a, r) in report.alphas.iter().zip(&report.risks) {
            out.push_str(&format!("{},{a},{r}\n", m.method));
        }
    }
    for &a in &alphas {
        let (_, r) = oracle_slope(&eval, Variant::Simdist, a, -0.5, 1.5)?;
        out.push_str(&format!("oracle,{a},{r}\n"));
    }
    Ok(vec![("fig_alpha_sweep.csv".into(), out)])
}

/// `method,lipschitz_ratio,risk`: marginal DRO across the grid plus the
/// ratio-free baselines.
pub fn fig_lip_sensitivity(settings: &Settings) -> CliResult<Vec<(String, String)>> {
    let proto = Protocol::from_settings(settings)?;
    let n = settings.parsed_or("n", 2000)?;
    let grid: Vec<f64> = settings
        .list("lipschitz_ratio")?
        .unwrap_or_else(|| vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]);
    let data: Dataset<f64> = generate(&SimSpec::new(Variant::Simdist, n, 1, proto.seed))?;
    let eval = eval_sample(Variant::Simdist, 1, &proto)?;
    let kind = LossKind::AbsoluteDeviation;
    let spec = proto.spec(2.0)?;
    let mut out = String::from("method,lipschitz_ratio,risk\n");
    for &ratio in &grid {
        let m = fit(&data, kind, &spec.with_lipschitz_ratio(ratio)?, &proto.optimizer(Objective::Marginal))?;
        let r = eval_oracle(&m.params, &eval, Variant::Simdist, &[proto.test_alpha])?.risks[0];
        out.push_str(&format!("marginal,{ratio},{r}\n"));
    }
    for (name, obj) in [("erm", Objective::Erm), ("joint", Objective::JointPnorm)] {
        let m = fit(&data, kind, &spec, &proto.optimizer(obj))?;
        let r = eval_oracle(&m.params, &eval, Variant::Simdist, &[proto.test_alpha])?.risks[0];
        out.push_str(&format!("{name},,{r}\n"));
    }
    Ok(vec![("fig_lip_sensitivity.csv".into(), out)])
}

/// `d,n,method,risk` over a small grid of dimensions and sample sizes.
pub fn fig_dimdep(settings: &Settings) -> CliResult<Vec<(String, String)>> {
    let proto = Protocol::from_settings(settings)?;
    let dims: Vec<usize> = settings.list("d")?.unwrap_or_else(|| vec![1, 10, 50]);
    let sizes: Vec<usize> = settings.list("n")?.unwrap_or_else(|| vec![100, 500, 1000]);
    let kind = LossKind::AbsoluteDeviation;
    let mut out = String::from("d,n,method,risk\n");
    for &d in &dims {
        let eval = eval_sample(Variant::Simdist, d, &proto)?;
        for &n in &sizes {
            let data: Dataset<f64> = generate(&SimSpec::new(Variant::Simdist, n, d, proto.seed))?;
            let mut models = core_methods(&data, Variant::Simdist, &proto)?;
            let cvar = fit(&data, kind, &proto.spec(1.0)?, &proto.optimizer(Objective::JointCvar))?;
            models.push(Trained {
                method: "joint_cvar".into(),
                params: cvar.params,
                lipschitz_ratio: None,
            });
            let ratio = models[2].lipschitz_ratio.unwrap_or(1.0);
            let holder = fit(
                &data,
                kind,
                &proto.spec(2.0)?.with_lipschitz_ratio(ratio)?,
                &proto.optimizer(Objective::BoundedHolder),
            )?;
            models.push(Trained {
                method: "bounded_holder".into(),
                params: holder.params,
                lipschitz_ratio: Some(ratio),
            });
            for m in &models {
                let r = eval_oracle(&m.params, &eval, Variant::Simdist, &[proto.test_alpha])?.risks[0];
                out.push_str(&format!("{d},{n},{},{r}\n", m.method));
            }
        }
    }
    Ok(vec![("fig_dimdep.csv".into(), out)])
}

/// Confounding levels used by [`fig_confounded`] unless overridden.
pub const DEFAULT_DELTAS: &[f64] = &[0.0, 0.001, 0.01, 0.1, 1.0];

/// Models trained on the confounded generator at each postulated δ, plus
/// the baselines, all at the protocol's training α₀.
/// A trained model labelled by method name and, for confounded training, δ.
pub type DeltaModel = (String, Option<f64>, ParamVector<f64>);

pub fn confounded_models(data: &Dataset<f64>, deltas: &[f64], ratio: f64, proto: &Protocol) -> CliResult<Vec<DeltaModel>> {
    let kind = LossKind::AbsoluteDeviation;
    let spec = proto.spec(2.0)?.with_lipschitz_ratio(ratio)?;
    let mut models = Vec::new();
    for &delta in deltas {
        let fitted = fit(data, kind, &spec.with_delta(delta)?, &proto.optimizer(Objective::MarginalConfounded))?;
        models.push((format!("marginal_delta={delta}"), Some(delta), fitted.params));
    }
    let erm = fit(data, kind, &spec, &proto.optimizer(Objective::Erm))?;
    models.push(("erm".into(), None, erm.params));
    let j1 = fit(data, kind, &proto.spec(1.0)?, &proto.optimizer(Objective::JointCvar))?;
    models.push(("joint_p1".into(), None, j1.params));
    let j2 = fit(data, kind, &spec, &proto.optimizer(Objective::JointPnorm))?;
    models.push(("joint_p2".into(), None, j2.params));
    Ok(models)
}

/// `model,delta,c,risk`: replicate-estimated worst-case risk conditional on
/// each confounder value.
pub fn fig_confounded(settings: &Settings) -> CliResult<Vec<(String, String)>> {
    let mut proto = Protocol::from_settings(settings)?;
    proto.train_alpha = settings.parsed_or("alpha0", 0.1)?;
    let n = settings.parsed_or("n", 2000)?;
    let d = settings.parsed_or("d", 1)?;
    let m = settings.parsed_or("replicates", 10)?;
    let ratio = match settings.list::<f64>("lipschitz_ratio")? {
        Some(v) if v.len() == 1 => v[0],
        Some(_) => return Err(CliError::Usage("fig_confounded takes a single lipschitz_ratio".into())),
        None => 10.0,
    };
    let deltas: Vec<f64> = settings.list("delta")?.unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
    let train_data: Dataset<f64> = generate(&SimSpec::new(Variant::Confounded, n, d, proto.seed))?;
    let test: Dataset<f64> = generate_replicates(
        &SimSpec::new(Variant::Confounded, n, d, proto.seed.wrapping_add(EVAL_SEED_OFFSET)),
        m,
    )?;
    let mut out = String::from("model,delta,c,risk\n");
    for (name, delta, params) in confounded_models(&train_data, &deltas, ratio, &proto)? {
        for &c in &CONFOUNDER_SUPPORT {
            let r = eval_replicates(&params, &test, LossKind::AbsoluteDeviation, &[proto.test_alpha], Some(c))?.risks[0];
            out.push_str(&format!("{name},{},{c},{r}\n", delta.map_or_else(String::new, |v| v.to_string())));
        }
    }
    Ok(vec![("fig_confounded.csv".into(), out)])
}

pub fn run(figure: Figure, settings: &Settings) -> CliResult<Vec<(String, String)>> {
    match figure {
        Figure::DimDep => fig_dimdep(settings),
        Figure::AlphaSweep => fig_alpha_sweep(settings),
        Figure::LipSensitivity => fig_lip_sensitivity(settings),
        Figure::Confounded => fig_confounded(settings),
        Figure::Toy => fig_toy(settings),
    }
}
