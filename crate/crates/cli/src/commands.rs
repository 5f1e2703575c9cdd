//! Subcommand bodies. Each takes the merged [`Settings`] and returns a
//! [`CliError`] whose exit code the binary forwards.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use mdro::datagen::{generate, generate_replicates, SimSpec, Variant};
use mdro::evaluation::{eval_joint, eval_oracle, eval_replicates, oracle_sample, RiskReport, DEFAULT_ORACLE_ROWS};
use mdro::optimizer::{Objective, OptimizerConfig, Schedule, DENSE_PLAN_WARN_N};
use mdro::variational::KernelSpec;
use mdro::{LossKind, RobustSpec};

use crate::config::Settings;
use crate::csv_io::{dataset_to_csv, model_to_text, read_dataset, read_model, write_text};
use crate::experiment::{cross_validate, synthetic_holdout, EVAL_SEED_OFFSET, DEFAULT_HOLDOUT_M, DEFAULT_HOLDOUT_N};
use crate::{CliError, CliResult};

pub const DEFAULT_ALPHAS: &[f64] = &[0.05, 0.1, 0.2, 0.3, 0.5, 1.0];

/// Writes `text` to `out_csv` when set, else to stdout.
fn emit(settings: &Settings, text: &str) -> CliResult<()> {
    match settings.get("out_csv") {
        Some(path) => write_text(Path::new(path), text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub fn sim_spec(settings: &Settings) -> CliResult<SimSpec> {
    let variant: Variant = settings.parsed_or("variant", Variant::Simdist)?;
    let d = settings.parsed_or("d", 1usize)?;
    let n = settings.parsed_or("n", 1000usize)?;
    let mut spec = SimSpec::new(variant, n, d, settings.seed()?);
    spec.alpha_true = settings.parsed_or("alpha_true", spec.alpha_true)?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

/// Robust spec from the settings; a single `lipschitz_ratio` is required
/// here (grids are for `cv`).
pub fn robust_spec(settings: &Settings) -> CliResult<RobustSpec<f64>> {
    let alpha0 = settings.parsed_or("alpha0", 0.3)?;
    let p = settings.parsed_or("p", 2.0)?;
    let mut spec = RobustSpec::new(alpha0, p)?;
    if let Some(grid) = settings.list::<f64>("lipschitz_ratio")? {
        if grid.len() != 1 {
            return Err(CliError::Usage("lipschitz_ratio must be a single value here; use cv for grids".into()));
        }
        spec = spec.with_lipschitz_ratio(grid[0])?;
    }
    if let Some(eps) = settings.parsed("eps")? {
        spec = spec.with_eps(eps)?;
    }
    if let Some(delta) = settings.parsed("delta")? {
        spec = spec.with_delta(delta)?;
    }
    Ok(spec)
}

pub fn optimizer_config(settings: &Settings) -> CliResult<OptimizerConfig<f64>> {
    let objective: Objective = settings.parsed_or("objective", Objective::Marginal)?;
    let mut opt = OptimizerConfig::new(objective);
    opt.max_iters = settings.parsed_or("iters", 500usize)?;
    opt.step0 = settings.parsed_or("step0", opt.step0)?;
    opt.schedule = settings.parsed_or("schedule", Schedule::InvSqrt)?;
    opt.tol = settings.parsed_or("tol", opt.tol)?;
    opt.ridge = settings.parsed_or("ridge", opt.ridge)?;
    opt.fit_intercept = settings.parsed_or("fit_intercept", opt.fit_intercept)?;
    opt.seed = settings.seed()?;
    if objective == Objective::Rkhs {
        opt.kernel = KernelSpec::gaussian(
            settings.parsed_or("bandwidth", 1.0)?,
            settings.parsed_or("radius", 1.0)?,
        )?;
    }
    opt.validate()?;
    Ok(opt)
}

fn loss_kind(settings: &Settings) -> CliResult<LossKind> {
    settings.parsed_or("loss", LossKind::AbsoluteDeviation)
}

fn alphas(settings: &Settings) -> CliResult<Vec<f64>> {
    Ok(settings.list("alphas")?.unwrap_or_else(|| DEFAULT_ALPHAS.to_vec()))
}

fn input_path(settings: &Settings, key: &str) -> CliResult<PathBuf> {
    let path = PathBuf::from(settings.require(key)?);
    if !path.exists() {
        return Err(CliError::Usage(format!("{key}: {} does not exist", path.display())));
    }
    Ok(path)
}

pub fn cmd_gen(settings: &Settings) -> CliResult<()> {
    let spec = sim_spec(settings)?;
    let m = settings.parsed_or("replicates", 0usize)?;
    let data = if m > 0 {
        generate_replicates(&spec, m)?
    } else {
        generate(&spec)?
    };
    let path = settings.require("out_csv")?;
    write_text(Path::new(path), &dataset_to_csv(&data))
}

pub fn cmd_train(settings: &Settings) -> CliResult<()> {
    let data = read_dataset(&input_path(settings, "in_csv")?)?;
    let spec = robust_spec(settings)?;
    let opt = optimizer_config(settings)?;
    let model_path = PathBuf::from(settings.require("model")?);
    if opt.objective.uses_plan() && data.len() > DENSE_PLAN_WARN_N {
        eprintln!(
            "warning: {} rows means a dense {}x{} transport plan",
            data.len(),
            data.len(),
            data.len()
        );
    }
    let fit = mdro::optimizer::train(&data, loss_kind(settings)?, &spec, &opt)?;
    write_text(&model_path, &model_to_text(&fit.params))?;
    let trace_path = match settings.get("trace") {
        Some(p) => PathBuf::from(p),
        None => {
            let mut p = model_path.into_os_string();
            p.push(".trace.jsonl");
            PathBuf::from(p)
        }
    };
    let mut trace = String::new();
    for (k, v) in fit.trace.iter().enumerate() {
        let line = serde_json::json!({ "iter": k + 1, "objective": v });
        trace.push_str(&line.to_string());
        trace.push('\n');
    }
    write_text(&trace_path, &trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Oracle,
    Replicates,
    Joint,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(EvalMode::Oracle),
            "replicates" => Ok(EvalMode::Replicates),
            "joint" => Ok(EvalMode::Joint),
            other => Err(format!("unknown mode '{other}' (oracle, replicates, joint)")),
        }
    }
}

pub fn evaluate(settings: &Settings) -> CliResult<RiskReport<f64>> {
    let params = read_model(&input_path(settings, "model")?)?;
    let mode: EvalMode = settings.parsed_or("mode", EvalMode::Oracle)?;
    let alphas = alphas(settings)?;
    let kind = loss_kind(settings)?;
    match mode {
        EvalMode::Oracle => {
            let variant: Variant = settings.parsed_or("variant", Variant::Simdist)?;
            if variant == Variant::Confounded {
                return Err(CliError::Usage(
                    "oracle evaluation is unsupported for the confounded variant; use mode=replicates".into(),
                ));
            }
            if settings.get("condition").is_some() {
                return Err(CliError::Usage("condition only applies to mode=replicates".into()));
            }
            let n = settings.parsed_or("eval_n", DEFAULT_ORACLE_ROWS)?;
            let seed = settings.seed()?.wrapping_add(EVAL_SEED_OFFSET);
            let sample = oracle_sample(variant, params.dim(), n, seed).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(eval_oracle(&params, &sample, variant, &alphas)?)
        }
        EvalMode::Replicates => {
            let data = read_dataset(&input_path(settings, "in_csv")?)?;
            Ok(eval_replicates(&params, &data, kind, &alphas, settings.parsed("condition")?)?)
        }
        EvalMode::Joint => {
            let data = read_dataset(&input_path(settings, "in_csv")?)?;
            Ok(eval_joint(&params, &data, kind, &alphas)?)
        }
    }
}

pub fn cmd_eval(settings: &Settings) -> CliResult<()> {
    let report = evaluate(settings)?;
    emit(settings, &report.to_csv())
}

pub fn cmd_cv(settings: &Settings) -> CliResult<()> {
    let grid = settings
        .list::<f64>("lipschitz_ratio")?
        .ok_or_else(|| CliError::Usage("cv needs a lipschitz_ratio grid".into()))?;
    let mut base = settings.clone();
    base.set("lipschitz_ratio", "1")?;
    let spec = robust_spec(&base)?;
    let opt = optimizer_config(settings)?;
    let kind = loss_kind(settings)?;
    let (data, holdout) = match settings.get("in_csv") {
        Some(_) => {
            let data = read_dataset(&input_path(settings, "in_csv")?)?;
            let holdout = read_dataset(&input_path(settings, "holdout_csv")?)?;
            (data, holdout)
        }
        None => {
            let sim = sim_spec(settings)?;
            let data = generate(&sim)?;
            let holdout = synthetic_holdout(
                sim.variant,
                sim.d,
                settings.parsed_or("holdout_n", DEFAULT_HOLDOUT_N)?,
                settings.parsed_or("holdout_m", DEFAULT_HOLDOUT_M)?,
                sim.seed,
            )?;
            (data, holdout)
        }
    };
    let score_alpha = settings.parsed_or("cv_alpha", spec.alpha0)?;
    let jobs = settings.parsed_or("jobs", 1usize)?;
    let outcome = cross_validate(&data, &holdout, kind, &spec, &opt, &grid, score_alpha, jobs)?;
    for p in &outcome.points {
        if let Err(reason) = &p.score {
            eprintln!("grid point {} failed: {reason}", p.lipschitz_ratio);
        }
    }
    if let Some(path) = settings.get("model") {
        write_text(Path::new(path), &model_to_text(outcome.best_params()))?;
    }
    emit(settings, &outcome.to_csv())?;
    eprintln!("selected lipschitz_ratio={}", outcome.best_ratio());
    Ok(())
}
