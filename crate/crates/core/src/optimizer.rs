//! Full-batch projected subgradient descent over `(θ, b, η, aux)`, where
//! `aux` is the transport plan `B` (marginal and bounded-Hölder objectives)
//! or the RKHS dual vector `β`.
//!
//! Steps on `B` and `β` are preconditioned by `n²` and `n` respectively:
//! their raw partials scale like `1/n²` and `1/n`, so without the scaling the
//! plan would barely move while `θ` converges.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, DroError, Result};
use crate::marginal::{hinge_block, DualState, PairwiseDistances, SurrogateGradient, TransportPlan};
use crate::model::{Dataset, LossKind, ParamVector};
use crate::risk_duals::{pnorm_block, pnorm_dual, RobustSpec};
use crate::scalar::{max_of, mean, Scalar};
use crate::variational::{gram, holder_coefficient, rkhs_gradient, GramMatrix, KernelSpec};

/// Datasets larger than this get a warning: the plan is stored densely.
pub const DENSE_PLAN_WARN_N: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Erm,
    JointCvar,
    JointPnorm,
    Marginal,
    MarginalConfounded,
    Rkhs,
    BoundedHolder,
}

impl Objective {
    pub const ALL: [Objective; 7] = [
        Objective::Erm,
        Objective::JointCvar,
        Objective::JointPnorm,
        Objective::Marginal,
        Objective::MarginalConfounded,
        Objective::Rkhs,
        Objective::BoundedHolder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Erm => "erm",
            Objective::JointCvar => "joint_cvar",
            Objective::JointPnorm => "joint_pnorm",
            Objective::Marginal => "marginal",
            Objective::MarginalConfounded => "marginal_confounded",
            Objective::Rkhs => "rkhs",
            Objective::BoundedHolder => "bounded_holder",
        }
    }

    /// Whether the objective carries an n×n transport plan.
    pub fn uses_plan(self) -> bool {
        matches!(
            self,
            Objective::Marginal | Objective::MarginalConfounded | Objective::BoundedHolder
        )
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = DroError;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .iter()
            .copied()
            .find(|o| o.name() == s)
            .ok_or_else(|| invalid("objective", format!("unknown objective '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    /// `step0/√t`.
    InvSqrt,
}

impl FromStr for Schedule {
    type Err = DroError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "inv_sqrt" => Ok(Schedule::InvSqrt),
            other => Err(invalid("schedule", format!("unknown schedule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig<T> {
    pub max_iters: usize,
    pub step0: T,
    pub schedule: Schedule,
    /// Stop when the best objective improved by less than `tol` (relative)
    /// over the last `patience` iterations; `0` disables early stopping.
    pub tol: T,
    pub patience: usize,
    pub objective: Objective,
    /// Coefficient of `‖θ‖²` (intercept excluded).
    pub ridge: T,
    pub fit_intercept: bool,
    /// Exact η refresh period for the joint objectives.
    pub eta_refresh: usize,
    /// Kernel of the RKHS objective.
    pub kernel: KernelSpec<T>,
    /// Carried for experiment bookkeeping. Full-batch training draws no
    /// randomness, so it does not influence the result.
    pub seed: u64,
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn new(objective: Objective) -> Self {
        OptimizerConfig {
            max_iters: 1000,
            step0: T::lit(0.5),
            schedule: Schedule::InvSqrt,
            tol: T::zero(),
            patience: 200,
            objective,
            ridge: T::zero(),
            fit_intercept: true,
            eta_refresh: 10,
            kernel: KernelSpec {
                kind: crate::variational::KernelKind::Gaussian,
                bandwidth: T::one(),
                radius: T::one(),
            },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("iters", "at least one iteration"));
        }
        if !(self.step0 > T::zero()) || !self.step0.is_finite() {
            return Err(invalid("step0", "must be positive"));
        }
        if !(self.ridge >= T::zero()) {
            return Err(invalid("ridge", "must be nonnegative"));
        }
        if !(self.tol >= T::zero()) {
            return Err(invalid("tol", "must be nonnegative"));
        }
        if self.objective == Objective::Rkhs {
            self.kernel.validate()?;
        }
        Ok(())
    }

    fn step(&self, t: usize) -> T {
        match self.schedule {
            Schedule::Constant => self.step0,
            Schedule::InvSqrt => self.step0 / T::from_usize_lossy(t).sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    /// Best iterate's parameters.
    pub params: ParamVector<T>,
    /// η at the best iterate.
    pub eta: T,
    /// Best objective value seen after each iteration (nonincreasing).
    pub trace: Vec<T>,
    pub best_value: T,
    pub best_iter: usize,
    pub iterations: usize,
    /// Last iterate, including the plan / β variables.
    pub final_state: DualState<T>,
}

/// Minimizing η of the joint dual at fixed losses.
pub fn optimal_eta_exact<T: Scalar>(losses: &[T], alpha0: T, p: T) -> Result<T> {
    Ok(pnorm_dual(losses, alpha0, p)?.1)
}

/// Everything needed to evaluate one objective on one dataset.
pub struct Problem<'a, T: Scalar> {
    data: &'a Dataset<T>,
    kind: LossKind,
    spec: RobustSpec<T>,
    objective: Objective,
    ridge: T,
    dist: Option<PairwiseDistances<T>>,
    gram: Option<GramMatrix<T>>,
    radius: T,
}

/// Value of an objective at a state with its partials in the losses.
struct Evaluation<T> {
    value: T,
    /// `∂value/∂ℓᵢ`.
    weights: Vec<T>,
    d_eta: T,
    /// Hinge weights driving the plan / β step (already scaled by 1/α₀ where
    /// it applies); empty when the floor is active.
    aux_weights: Vec<T>,
}

impl<'a, T: Scalar> Problem<'a, T> {
    pub fn new(
        data: &'a Dataset<T>,
        kind: LossKind,
        spec: &RobustSpec<T>,
        opt: &OptimizerConfig<T>,
    ) -> Result<Self> {
        spec.validate()?;
        opt.validate()?;
        if !kind.is_trainable() {
            return Err(DroError::Unsupported("cannot train on the zero_one loss".into()));
        }
        let objective = opt.objective;
        if matches!(objective, Objective::Marginal | Objective::MarginalConfounded)
            && !(spec.p > T::one() && spec.p <= T::lit(2.0))
        {
            return Err(invalid("p", "marginal objectives need p in (1, 2]"));
        }
        let dist = if objective.uses_plan() {
            Some(PairwiseDistances::from_dataset(data, spec.p - T::one()))
        } else {
            None
        };
        let gram = if objective == Objective::Rkhs {
            Some(gram(data.features(), data.dim(), &opt.kernel)?)
        } else {
            None
        };
        Ok(Problem {
            data,
            kind,
            spec: *spec,
            objective,
            ridge: opt.ridge,
            dist,
            gram,
            radius: opt.kernel.radius,
        })
    }

    pub fn distances(&self) -> Option<&PairwiseDistances<T>> {
        self.dist.as_ref()
    }

    fn n(&self) -> T {
        T::from_usize_lossy(self.data.len())
    }

    /// Zero parameters, zero plan/β and η at the CVaR quantile of the
    /// initial losses.
    pub fn initial_state(&self, init: Option<ParamVector<T>>) -> Result<DualState<T>> {
        let params = init.unwrap_or_else(|| ParamVector::zeros(self.data.dim()));
        if params.dim() != self.data.dim() {
            return Err(DroError::DimensionMismatch {
                expected: self.data.dim(),
                got: params.dim(),
                context: "initial parameters",
            });
        }
        let n = self.data.len();
        let losses = crate::model::losses(self.kind, &params, self.data);
        let eta = match self.objective {
            Objective::Erm => T::zero(),
            Objective::JointPnorm => optimal_eta_exact(&losses, self.spec.alpha0, self.spec.p)?,
            _ => optimal_eta_exact(&losses, self.spec.alpha0, T::one())?,
        };
        let plan = if self.objective.uses_plan() {
            TransportPlan::zeros(n)
        } else {
            TransportPlan::zeros(0)
        };
        let mut state = DualState::new(params, eta, plan);
        if self.objective == Objective::Rkhs {
            state.beta = vec![T::zero(); n];
        }
        Ok(state)
    }

    fn check_state(&self, state: &DualState<T>) -> Result<()> {
        let n = self.data.len();
        if state.params.dim() != self.data.dim() {
            return Err(DroError::DimensionMismatch {
                expected: self.data.dim(),
                got: state.params.dim(),
                context: "parameters",
            });
        }
        if self.objective.uses_plan() && state.plan.len() != n {
            return Err(DroError::DimensionMismatch {
                expected: n,
                got: state.plan.len(),
                context: "transport plan",
            });
        }
        if self.objective == Objective::Rkhs && state.beta.len() != n {
            return Err(DroError::DimensionMismatch {
                expected: n,
                got: state.beta.len(),
                context: "beta",
            });
        }
        Ok(())
    }

    fn plan_terms(&self, plan: &TransportPlan<T>) -> (T, T) {
        match plan.memo {
            Some(m) => m,
            None => {
                let dist = self.dist.as_ref().expect("plan objectives carry distances");
                let cost = dist
                    .powered()
                    .iter()
                    .zip(plan.as_slice())
                    .map(|(&d, &b)| d * b)
                    .sum();
                (cost, plan.mass())
            }
        }
    }

    fn evaluate(&self, losses: &[T], state: &DualState<T>) -> Evaluation<T> {
        let spec = &self.spec;
        let n = self.n();
        let inv_a = spec.alpha0.recip();
        let eta = state.eta;
        match self.objective {
            Objective::Erm => Evaluation {
                value: mean(losses),
                weights: vec![n.recip(); losses.len()],
                d_eta: T::zero(),
                aux_weights: Vec::new(),
            },
            Objective::JointCvar => {
                let unit = inv_a / n;
                let weights: Vec<T> = losses
                    .iter()
                    .map(|&l| if l > eta { unit } else { T::zero() })
                    .collect();
                let hinge: T = losses.iter().map(|&l| (l - eta).pos()).sum();
                let d_eta = T::one() - weights.iter().copied().sum::<T>();
                Evaluation {
                    value: hinge * unit + eta,
                    weights,
                    d_eta,
                    aux_weights: Vec::new(),
                }
            }
            Objective::JointPnorm => {
                let p = spec.p;
                let block = pnorm_block(losses, eta, p);
                let weights: Vec<T> = if block > T::zero() {
                    let factor = inv_a / n * block.powf(T::one() - p);
                    losses
                        .iter()
                        .map(|&l| {
                            let h = (l - eta).pos();
                            if h > T::zero() {
                                factor * h.powf(p - T::one())
                            } else {
                                T::zero()
                            }
                        })
                        .collect()
                } else {
                    vec![T::zero(); losses.len()]
                };
                let d_eta = T::one() - weights.iter().copied().sum::<T>();
                Evaluation {
                    value: block * inv_a + eta,
                    weights,
                    d_eta,
                    aux_weights: Vec::new(),
                }
            }
            Objective::Marginal | Objective::MarginalConfounded => {
                let (block, w) = hinge_block(losses, state.plan.adjustments(), eta, spec.p, true);
                let (cost, mass) = self.plan_terms(&state.plan);
                let mut obj = block + spec.transport_coefficient() * cost / (n * n);
                if self.objective == Objective::MarginalConfounded {
                    obj = obj + spec.confounding_coefficient() * mass / (n * n);
                }
                let floor = spec.floor();
                if obj < floor {
                    return Evaluation {
                        value: floor * inv_a + eta,
                        weights: vec![T::zero(); losses.len()],
                        d_eta: T::one(),
                        aux_weights: Vec::new(),
                    };
                }
                let weights: Vec<T> = w.iter().map(|&v| v * inv_a).collect();
                let d_eta = T::one() - weights.iter().copied().sum::<T>();
                Evaluation {
                    value: obj * inv_a + eta,
                    aux_weights: weights.clone(),
                    weights,
                    d_eta,
                }
            }
            Objective::BoundedHolder => {
                let unit = inv_a / n;
                let adjust = state.plan.adjustments();
                let weights: Vec<T> = losses
                    .iter()
                    .zip(adjust)
                    .map(|(&l, &c)| if l - c - eta > T::zero() { unit } else { T::zero() })
                    .collect();
                let hinge: T = losses
                    .iter()
                    .zip(adjust)
                    .map(|(&l, &c)| (l - c - eta).pos())
                    .sum();
                let (cost, _) = self.plan_terms(&state.plan);
                let d_eta = T::one() - weights.iter().copied().sum::<T>();
                Evaluation {
                    value: hinge * unit + holder_coefficient(spec) * cost / (n * n) + eta,
                    aux_weights: weights.clone(),
                    weights,
                    d_eta,
                }
            }
            Objective::Rkhs => {
                let gram = self.gram.as_ref().expect("rkhs carries a Gram matrix");
                let unit = inv_a / n;
                let hinge: T = losses
                    .iter()
                    .zip(&state.beta)
                    .map(|(&l, &b)| (l - eta + b).pos())
                    .sum();
                let quad = gram.quadratic_form(&state.beta).max(T::zero());
                let (w, _) = rkhs_gradient(losses, gram, eta, &state.beta, spec.alpha0, self.radius);
                let d_eta = T::one() - w.iter().copied().sum::<T>();
                Evaluation {
                    value: hinge * unit + (quad / self.radius).sqrt() / n + eta,
                    aux_weights: w.clone(),
                    weights: w,
                    d_eta,
                }
            }
        }
    }

    fn losses_and_derivs(&self, params: &ParamVector<T>) -> (Vec<T>, Vec<T>) {
        let data = self.data;
        let mut losses = Vec::with_capacity(data.len());
        let mut derivs = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let f = params.predict(data.row(i));
            let y = data.labels()[i];
            losses.push(self.kind.value_at(f, y));
            derivs.push(self.kind.derivative_at(f, y).expect("trainable loss"));
        }
        (losses, derivs)
    }

    fn ridge_value(&self, params: &ParamVector<T>) -> T {
        self.ridge * params.theta.iter().map(|&t| t * t).sum::<T>()
    }

    /// Training objective (including ridge) at `state`.
    pub fn value(&self, state: &DualState<T>) -> Result<T> {
        self.check_state(state)?;
        let (losses, _) = self.losses_and_derivs(&state.params);
        Ok(self.evaluate(&losses, state).value + self.ridge_value(&state.params))
    }

    /// A subgradient of [`Problem::value`] in every variable, with the
    /// plan / β partials materialized.
    pub fn gradient(&self, state: &DualState<T>) -> Result<SurrogateGradient<T>> {
        self.check_state(state)?;
        let (losses, derivs) = self.losses_and_derivs(&state.params);
        let ev = self.evaluate(&losses, state);
        let (theta, intercept) = self.param_gradient(&ev.weights, &derivs, &state.params);
        let n = self.data.len();
        let nt = self.n();
        let mut plan = Vec::new();
        let mut beta = Vec::new();
        if self.objective.uses_plan() {
            plan = vec![T::zero(); n * n];
            if !ev.aux_weights.is_empty() {
                let (pen, flat) = self.plan_coefficients();
                let dp = self.dist.as_ref().unwrap().powered();
                let w = &ev.aux_weights;
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            plan[i * n + j] = (w[j] - w[i]) / nt + (pen * dp[i * n + j] + flat) / (nt * nt);
                        }
                    }
                }
            }
        }
        if self.objective == Objective::Rkhs {
            let gram = self.gram.as_ref().unwrap();
            beta = rkhs_gradient(&losses, gram, state.eta, &state.beta, self.spec.alpha0, self.radius).1;
        }
        Ok(SurrogateGradient {
            theta,
            intercept,
            eta: ev.d_eta,
            plan,
            beta,
        })
    }

    /// Per-unit plan cost `(pen·D_ij + flat)` in the objective, times n².
    fn plan_coefficients(&self) -> (T, T) {
        let inv_a = self.spec.alpha0.recip();
        match self.objective {
            Objective::Marginal => (self.spec.transport_coefficient() * inv_a, T::zero()),
            Objective::MarginalConfounded => (
                self.spec.transport_coefficient() * inv_a,
                self.spec.confounding_coefficient() * inv_a,
            ),
            Objective::BoundedHolder => (holder_coefficient(&self.spec), T::zero()),
            _ => (T::zero(), T::zero()),
        }
    }

    fn param_gradient(&self, weights: &[T], derivs: &[T], params: &ParamVector<T>) -> (Vec<T>, T) {
        let d = self.data.dim();
        let mut g = vec![T::zero(); d];
        let mut gb = T::zero();
        for i in 0..self.data.len() {
            let s = weights[i] * derivs[i];
            if s == T::zero() {
                continue;
            }
            for (gk, &xk) in g.iter_mut().zip(self.data.row(i)) {
                *gk = *gk + s * xk;
            }
            gb = gb + s;
        }
        let two = T::lit(2.0);
        for (gk, &tk) in g.iter_mut().zip(&params.theta) {
            *gk = *gk + two * self.ridge * tk;
        }
        (g, gb)
    }
}

pub fn train<T: Scalar>(
    data: &Dataset<T>,
    kind: LossKind,
    spec: &RobustSpec<T>,
    opt: &OptimizerConfig<T>,
) -> Result<TrainResult<T>> {
    train_from(data, kind, spec, opt, None)
}

/// [`train`] starting from `init` instead of zero parameters.
pub fn train_from<T: Scalar>(
    data: &Dataset<T>,
    kind: LossKind,
    spec: &RobustSpec<T>,
    opt: &OptimizerConfig<T>,
    init: Option<ParamVector<T>>,
) -> Result<TrainResult<T>> {
    let problem = Problem::new(data, kind, spec, opt)?;
    let mut state = problem.initial_state(init)?;
    run(&problem, opt, &mut state)
}

fn run<T: Scalar>(problem: &Problem<'_, T>, opt: &OptimizerConfig<T>, state: &mut DualState<T>) -> Result<TrainResult<T>> {
    let objective = opt.objective;
    let spec = problem.spec;
    let nt = problem.n();
    let joint = matches!(objective, Objective::JointCvar | Objective::JointPnorm);
    let eta_p = if objective == Objective::JointPnorm { spec.p } else { T::one() };
    let (pen, flat) = problem.plan_coefficients();

    let mut trace = Vec::with_capacity(opt.max_iters);
    let mut best_value = T::infinity();
    let mut best_params = state.params.clone();
    let mut best_eta = state.eta;
    let mut best_iter = 0;
    let mut iterations = 0;
    for t in 1..=opt.max_iters {
        iterations = t;
        let (losses, derivs) = problem.losses_and_derivs(&state.params);
        if joint && opt.eta_refresh > 0 && (t - 1) % opt.eta_refresh == 0 {
            state.eta = optimal_eta_exact(&losses, spec.alpha0, eta_p)?;
        }
        let ev = problem.evaluate(&losses, state);
        let value = ev.value + problem.ridge_value(&state.params);
        if !value.is_finite() {
            return Err(DroError::Diverged {
                iteration: t,
                value: value.as_f64(),
            });
        }
        if value < best_value {
            best_value = value;
            best_params = state.params.clone();
            best_eta = state.eta;
            best_iter = t;
        }
        trace.push(best_value);
        if opt.tol > T::zero() && t > opt.patience {
            let old = trace[t - 1 - opt.patience];
            if old - best_value <= opt.tol * best_value.abs().max(T::lit(1e-12)) {
                break;
            }
        }

        let step = opt.step(t);
        let (g_theta, g_b) = problem.param_gradient(&ev.weights, &derivs, &state.params);
        for (th, g) in state.params.theta.iter_mut().zip(&g_theta) {
            *th = *th - step * *g;
        }
        if opt.fit_intercept {
            state.params.intercept = state.params.intercept - step * g_b;
        }
        if objective != Objective::Erm {
            let upper = spec.loss_bound.unwrap_or_else(|| max_of(&losses).max(T::zero()));
            state.eta = (state.eta - step * ev.d_eta).max(T::zero()).min(upper);
        }
        if objective.uses_plan() && !ev.aux_weights.is_empty() {
            let dist = problem.dist.as_ref().expect("plan objectives carry distances");
            state
                .plan
                .descend(&ev.aux_weights, dist.powered(), nt, pen, flat, step);
        }
        if objective == Objective::Rkhs {
            let gram = problem.gram.as_ref().expect("rkhs carries a Gram matrix");
            let (_, gb) = rkhs_gradient(&losses, gram, state.eta, &state.beta, spec.alpha0, problem.radius);
            for (b, g) in state.beta.iter_mut().zip(&gb) {
                *b = *b - step * nt * *g;
            }
        }
        if !state.params.is_finite() {
            return Err(DroError::Diverged {
                iteration: t,
                value: f64::NAN,
            });
        }
    }
    Ok(TrainResult {
        params: best_params,
        eta: best_eta,
        trace,
        best_value,
        best_iter,
        iterations,
        final_state: state.clone(),
    })
}
