//! Empirical marginal DRO dual with a transport plan.
//!
//! For per-example losses `ℓ`, a plan `B ≥ 0` moves loss mass between
//! examples: the adjusted loss of example `i` is `ℓᵢ − cᵢ` with
//! `cᵢ = (1/n)Σⱼ(B_ij − B_ji)`, and moving mass from `i` to `j` costs
//! `‖xᵢ − xⱼ‖^{p−1}` per unit. The objective is
//!
//! ```text
//! ((p−1)/n · Σᵢ (ℓᵢ − cᵢ − η)₊^p)^{1/p} + (L^{p−1}/(ε n²)) Σᵢⱼ ‖xᵢ − xⱼ‖^{p−1} B_ij
//! ```
//!
//! and the surrogate minimized in training is
//! `(1/α₀)·max(objective, ε^{q−1}) + η`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, DroError, Result};
use crate::model::{Dataset, LossKind, ParamVector};
use crate::risk_duals::RobustSpec;
use crate::scalar::Scalar;

/// Dense n×n Euclidean distance matrix with its `(p−1)`-th power
/// materialized on first use.
#[derive(Debug)]
pub struct PairwiseDistances<T> {
    n: usize,
    base: Vec<T>,
    exponent: T,
    powered: OnceLock<Vec<T>>,
}

impl<T: Scalar> PairwiseDistances<T> {
    /// Distances between the rows of `data`, to be raised to `exponent`.
    pub fn from_dataset(data: &Dataset<T>, exponent: T) -> Self {
        Self::from_rows(data.features(), data.dim(), exponent)
    }

    pub fn from_rows(features: &[T], d: usize, exponent: T) -> Self {
        let n = features.len() / d;
        let mut base = vec![T::zero(); n * n];
        for i in 0..n {
            let xi = &features[i * d..(i + 1) * d];
            for j in (i + 1)..n {
                let xj = &features[j * d..(j + 1) * d];
                let s: T = xi.iter().zip(xj).map(|(&a, &b)| (a - b) * (a - b)).sum();
                let dist = s.sqrt();
                base[i * n + j] = dist;
                base[j * n + i] = dist;
            }
        }
        PairwiseDistances {
            n,
            base,
            exponent,
            powered: OnceLock::new(),
        }
    }

    /// Wraps a precomputed symmetric base-distance matrix.
    pub fn from_matrix(n: usize, base: Vec<T>, exponent: T) -> Result<Self> {
        if base.len() != n * n {
            return Err(DroError::DimensionMismatch {
                expected: n * n,
                got: base.len(),
                context: "distance matrix",
            });
        }
        for i in 0..n {
            if base[i * n + i] != T::zero() {
                return Err(invalid("distances", "diagonal must be zero"));
            }
            for j in 0..n {
                let v = base[i * n + j];
                if !(v >= T::zero()) || v != base[j * n + i] {
                    return Err(invalid("distances", "must be nonnegative and symmetric"));
                }
            }
        }
        Ok(PairwiseDistances {
            n,
            base,
            exponent,
            powered: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn exponent(&self) -> T {
        self.exponent
    }

    /// Unpowered Euclidean distances, row-major.
    pub fn base(&self) -> &[T] {
        &self.base
    }

    /// `‖xᵢ − xⱼ‖^{exponent}`, row-major.
    pub fn powered(&self) -> &[T] {
        if self.exponent == T::one() {
            return &self.base;
        }
        self.powered.get_or_init(|| {
            self.base
                .iter()
                .map(|&v| if v == T::zero() { T::zero() } else { v.powf(self.exponent) })
                .collect()
        })
    }
}

/// Nonnegative n×n plan with cached adjustments `cᵢ = (1/n)Σⱼ(B_ij − B_ji)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T> {
    n: usize,
    b: Vec<T>,
    adjust: Vec<T>,
    /// `(Σ D∘B, Σ B)` for the distances of the last fused update.
    pub(crate) memo: Option<(T, T)>,
}

impl<T: Scalar> TransportPlan<T> {
    pub fn zeros(n: usize) -> Self {
        TransportPlan {
            n,
            b: vec![T::zero(); n * n],
            adjust: vec![T::zero(); n],
            memo: Some((T::zero(), T::zero())),
        }
    }

    pub fn from_matrix(n: usize, b: Vec<T>) -> Result<Self> {
        if b.len() != n * n {
            return Err(DroError::DimensionMismatch {
                expected: n * n,
                got: b.len(),
                context: "transport plan",
            });
        }
        if let Some(k) = b.iter().position(|v| !(*v >= T::zero())) {
            return Err(DroError::NegativePlan { row: k / n, col: k % n });
        }
        let mut plan = TransportPlan {
            n,
            b,
            adjust: vec![T::zero(); n],
            memo: None,
        };
        plan.refresh();
        Ok(plan)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.b[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.b
    }

    /// The adjustment vector `c`.
    pub fn adjustments(&self) -> &[T] {
        &self.adjust
    }

    /// `Σ B_ij`.
    pub fn mass(&self) -> T {
        self.b.iter().copied().sum()
    }

    fn refresh(&mut self) {
        let n = self.n;
        let inv_n = T::one() / T::from_usize_lossy(n.max(1));
        let mut rows = vec![T::zero(); n];
        let mut cols = vec![T::zero(); n];
        for (row, total) in self.b.chunks_exact(n.max(1)).zip(rows.iter_mut()) {
            let mut s = T::zero();
            for (j, &v) in row.iter().enumerate() {
                s = s + v;
                cols[j] = cols[j] + v;
            }
            *total = s;
        }
        for i in 0..n {
            self.adjust[i] = (rows[i] - cols[i]) * inv_n;
        }
    }

    /// Projected step `B ← max(0, B − step·G)` with
    /// `G_ij = w_scale·(w_j − w_i) + pen_scale·D_ij + flat`, fused with the
    /// recomputation of `c`, `Σ D∘B` and `Σ B`.
    pub(crate) fn descend(
        &mut self,
        weights: &[T],
        dist: &[T],
        w_scale: T,
        pen_scale: T,
        flat: T,
        step: T,
    ) {
        let n = self.n;
        let mut cols = vec![T::zero(); n];
        let mut rows = vec![T::zero(); n];
        let mut cost = T::zero();
        let mut mass = T::zero();
        let sw: Vec<T> = weights.iter().map(|&w| step * w_scale * w).collect();
        let sp = step * pen_scale;
        let sf = step * flat;
        for i in 0..n {
            let row = &mut self.b[i * n..(i + 1) * n];
            let drow = &dist[i * n..(i + 1) * n];
            let base = sf - sw[i];
            let mut rsum = T::zero();
            let mut rcost = T::zero();
            for j in 0..n {
                let v = (row[j] - (base + sw[j] + sp * drow[j])).pos();
                row[j] = v;
                rsum = rsum + v;
                rcost = rcost + v * drow[j];
                cols[j] = cols[j] + v;
            }
            // self-transport is free and null
            let diag = row[i];
            if diag != T::zero() {
                row[i] = T::zero();
                rsum = rsum - diag;
                cols[i] = cols[i] - diag;
            }
            rows[i] = rsum;
            mass = mass + rsum;
            cost = cost + rcost;
        }
        let inv_n = T::one() / T::from_usize_lossy(n);
        for i in 0..n {
            self.adjust[i] = (rows[i] - cols[i]) * inv_n;
        }
        self.memo = Some((cost, mass));
    }
}

/// Optimization variables `(θ, η, B)`; `beta` holds the RKHS dual
/// variables when that objective is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState<T> {
    pub params: ParamVector<T>,
    pub eta: T,
    pub plan: TransportPlan<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> DualState<T> {
    pub fn new(params: ParamVector<T>, eta: T, plan: TransportPlan<T>) -> Self {
        DualState {
            params,
            eta,
            plan,
            beta: Vec::new(),
        }
    }
}

fn check_marginal<T: Scalar>(
    losses: &[T],
    dist: &PairwiseDistances<T>,
    plan: &TransportPlan<T>,
    spec: &RobustSpec<T>,
) -> Result<()> {
    spec.validate()?;
    if !(spec.p > T::one() && spec.p <= T::lit(2.0)) {
        return Err(invalid("p", format!("marginal objective needs p in (1, 2], got {}", spec.p)));
    }
    let n = losses.len();
    if n == 0 {
        return Err(DroError::Empty("losses"));
    }
    if dist.len() != n {
        return Err(DroError::DimensionMismatch {
            expected: n,
            got: dist.len(),
            context: "distance matrix",
        });
    }
    if plan.len() != n {
        return Err(DroError::DimensionMismatch {
            expected: n,
            got: plan.len(),
            context: "transport plan",
        });
    }
    Ok(())
}

/// `((p−1)/n Σ (ℓᵢ − cᵢ − η)₊^p)^{1/p}` and its partials `∂/∂ℓᵢ`.
pub(crate) fn hinge_block<T: Scalar>(
    losses: &[T],
    adjust: &[T],
    eta: T,
    p: T,
    want_weights: bool,
) -> (T, Vec<T>) {
    let n = T::from_usize_lossy(losses.len());
    let scale = (p - T::one()) / n;
    let mut s = T::zero();
    for (&l, &c) in losses.iter().zip(adjust) {
        let h = (l - c - eta).pos();
        if h > T::zero() {
            s = s + h.powf(p);
        }
    }
    let block = (scale * s).powf(p.recip());
    if !want_weights {
        return (block, Vec::new());
    }
    if block == T::zero() {
        return (block, vec![T::zero(); losses.len()]);
    }
    let factor = scale * block.powf(T::one() - p);
    let w = losses
        .iter()
        .zip(adjust)
        .map(|(&l, &c)| {
            let h = (l - c - eta).pos();
            if h > T::zero() {
                factor * h.powf(p - T::one())
            } else {
                T::zero()
            }
        })
        .collect();
    (block, w)
}

fn transport_cost<T: Scalar>(dist: &PairwiseDistances<T>, plan: &TransportPlan<T>) -> T {
    dist.powered()
        .iter()
        .zip(plan.as_slice())
        .map(|(&d, &b)| d * b)
        .sum()
}

pub fn marginal_objective<T: Scalar>(
    losses: &[T],
    dist: &PairwiseDistances<T>,
    eta: T,
    plan: &TransportPlan<T>,
    spec: &RobustSpec<T>,
) -> Result<T> {
    check_marginal(losses, dist, plan, spec)?;
    let n = T::from_usize_lossy(losses.len());
    let (block, _) = hinge_block(losses, plan.adjustments(), eta, spec.p, false);
    Ok(block + spec.transport_coefficient() / (n * n) * transport_cost(dist, plan))
}

/// [`marginal_objective`] plus `(2δ^{p−1}/(ε n²)) Σ |B_ij|`.
pub fn confounded_objective<T: Scalar>(
    losses: &[T],
    dist: &PairwiseDistances<T>,
    eta: T,
    plan: &TransportPlan<T>,
    spec: &RobustSpec<T>,
) -> Result<T> {
    let base = marginal_objective(losses, dist, eta, plan, spec)?;
    let n = T::from_usize_lossy(losses.len());
    Ok(base + spec.confounding_coefficient() / (n * n) * plan.mass())
}

/// `(1/α₀)·max(objective, ε^{q−1}) + η` at the current losses of `state`.
pub fn robust_surrogate<T: Scalar>(
    state: &DualState<T>,
    data: &Dataset<T>,
    dist: &PairwiseDistances<T>,
    kind: LossKind,
    spec: &RobustSpec<T>,
    confounded: bool,
) -> Result<T> {
    let losses = crate::model::losses(kind, &state.params, data);
    let obj = if confounded {
        confounded_objective(&losses, dist, state.eta, &state.plan, spec)?
    } else {
        marginal_objective(&losses, dist, state.eta, &state.plan, spec)?
    };
    Ok(obj.max(spec.floor()) / spec.alpha0 + state.eta)
}

/// Subgradient of [`robust_surrogate`] in `(θ, b, η, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGradient<T> {
    pub theta: Vec<T>,
    pub intercept: T,
    pub eta: T,
    /// Row-major n×n; empty for objectives without a plan.
    pub plan: Vec<T>,
    /// RKHS dual variables; empty unless that objective is used.
    pub beta: Vec<T>,
}

pub fn subgradient<T: Scalar>(
    state: &DualState<T>,
    data: &Dataset<T>,
    dist: &PairwiseDistances<T>,
    kind: LossKind,
    spec: &RobustSpec<T>,
    confounded: bool,
) -> Result<SurrogateGradient<T>> {
    if !kind.is_trainable() {
        return Err(DroError::Unsupported("zero_one loss cannot be differentiated".into()));
    }
    let losses = crate::model::losses(kind, &state.params, data);
    check_marginal(&losses, dist, &state.plan, spec)?;
    let n = losses.len();
    let nt = T::from_usize_lossy(n);
    let (block, w) = hinge_block(&losses, state.plan.adjustments(), state.eta, spec.p, true);
    let coef = spec.transport_coefficient() / (nt * nt);
    let flat = if confounded {
        spec.confounding_coefficient() / (nt * nt)
    } else {
        T::zero()
    };
    let obj = block + coef * transport_cost(dist, &state.plan) + flat * state.plan.mass();
    let d = data.dim();
    if obj < spec.floor() {
        return Ok(SurrogateGradient {
            theta: vec![T::zero(); d],
            intercept: T::zero(),
            eta: T::one(),
            plan: vec![T::zero(); n * n],
            beta: Vec::new(),
        });
    }
    let inv_a = spec.alpha0.recip();
    let mut theta = vec![T::zero(); d];
    let mut intercept = T::zero();
    for (i, &wi) in w.iter().enumerate().take(n) {
        if wi == T::zero() {
            continue;
        }
        let x = data.row(i);
        let g = kind
            .derivative_at(state.params.predict(x), data.labels()[i])
            .expect("trainable loss");
        let s = inv_a * wi * g;
        for (t, &xi) in theta.iter_mut().zip(x) {
            *t = *t + s * xi;
        }
        intercept = intercept + s;
    }
    let eta = T::one() - inv_a * w.iter().copied().sum::<T>();
    let dp = dist.powered();
    let mut plan = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            plan[i * n + j] = inv_a * ((w[j] - w[i]) / nt + coef * dp[i * n + j] + flat);
        }
    }
    Ok(SurrogateGradient {
        theta,
        intercept,
        eta,
        plan,
        beta: Vec::new(),
    })
}

/// Approximate `inf_{B ≥ 0}` of the (optionally confounded) objective at
/// fixed losses and η by projected subgradient descent; returns the best
/// value seen and its plan.
pub fn minimize_over_plan<T: Scalar>(
    losses: &[T],
    dist: &PairwiseDistances<T>,
    eta: T,
    spec: &RobustSpec<T>,
    confounded: bool,
    iters: usize,
) -> Result<(T, TransportPlan<T>)> {
    let n = losses.len();
    let mut plan = TransportPlan::zeros(n);
    check_marginal(losses, dist, &plan, spec)?;
    let nt = T::from_usize_lossy(n);
    let coef = spec.transport_coefficient();
    let flat = if confounded { spec.confounding_coefficient() } else { T::zero() };
    let value = |plan: &TransportPlan<T>| -> T {
        let (cost, mass) = plan.memo.expect("memo set by descend");
        let (block, _) = hinge_block(losses, plan.adjustments(), eta, spec.p, false);
        block + (coef * cost + flat * mass) / (nt * nt)
    };
    let mut best_val = value(&plan);
    let mut best = plan.clone();
    // preconditioned: gradient in B is O(1/n²), steps are scaled by n²
    let scale = losses.iter().fold(T::zero(), |m, &l| m.max(l.abs())).max(T::lit(1e-3));
    for t in 1..=iters {
        let (_, w) = hinge_block(losses, plan.adjustments(), eta, spec.p, true);
        let step = scale / T::from_usize_lossy(t).sqrt();
        plan.descend(&w, dist.powered(), nt, coef, flat, step);
        let v = value(&plan);
        if v < best_val {
            best_val = v;
            best = plan.clone();
        }
    }
    Ok((best_val, best))
}

const MAX_PRIMAL_N: usize = 6;

/// Strong-duality oracle: the supremum over Hölder-smooth weights,
///
/// ```text
/// sup { (1/(εn)) Σ hᵢ(ℓᵢ − η) : h ≥ 0, hᵢ − hⱼ ≤ L^{p−1}‖xᵢ − xⱼ‖^{p−1}, (mean h^q)^{1/q} ≤ ε }
/// ```
///
/// For `p = 2` every candidate active set of the linear constraints is
/// enumerated and the remaining ball problem is solved in closed form; for
/// other `p` a shrinking grid search is used (n ≤ 4). Oracle use only.
pub fn primal_inner_sup<T: Scalar>(
    losses: &[T],
    dist: &PairwiseDistances<T>,
    eta: T,
    spec: &RobustSpec<T>,
) -> Result<T> {
    let n = losses.len();
    if n == 0 {
        return Err(DroError::Empty("losses"));
    }
    if n > MAX_PRIMAL_N {
        return Err(invalid("n", format!("primal oracle is combinatorial; n <= {MAX_PRIMAL_N}")));
    }
    if dist.len() != n {
        return Err(DroError::DimensionMismatch {
            expected: n,
            got: dist.len(),
            context: "distance matrix",
        });
    }
    spec.validate()?;
    let a: Vec<f64> = losses.iter().map(|&l| (l - eta).as_f64()).collect();
    let k = spec.transport_coefficient().as_f64();
    let dp: Vec<f64> = dist.powered().iter().map(|v| v.as_f64()).collect();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        let mut r = vec![0.0; n];
        r[i] = -1.0;
        rows.push((r, 0.0));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && k.is_finite() {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r[j] = -1.0;
                rows.push((r, k * dp[i * n + j]));
            }
        }
    }
    let best = if (spec.p.as_f64() - 2.0).abs() < 1e-12 {
        primal_enumerate(&a, &rows)
    } else {
        if n > 4 {
            return Err(invalid("n", "grid primal oracle supports n <= 4 for p != 2"));
        }
        primal_grid(&a, &rows, spec.q().as_f64())
    };
    Ok(T::lit(best))
}

fn feasible(h: &[f64], rows: &[(Vec<f64>, f64)], tol: f64) -> bool {
    rows.iter().all(|(r, s)| {
        let v: f64 = r.iter().zip(h).map(|(a, b)| a * b).sum();
        v <= s + tol
    })
}

fn primal_enumerate(a: &[f64], rows: &[(Vec<f64>, f64)]) -> f64 {
    let n = a.len();
    let radius2 = n as f64;
    let av = DVector::from_column_slice(a);
    let tol = 1e-9 * (1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut best = 0.0f64; // h = 0 is always feasible
    let m = rows.len();
    let mut subset: Vec<usize> = Vec::with_capacity(n);
    let consider = |subset: &[usize], best: &mut f64| {
        let (h0, proj) = if subset.is_empty() {
            (DVector::zeros(n), av.clone())
        } else {
            let e = DMatrix::from_fn(subset.len(), n, |r, c| rows[subset[r]].0[c]);
            let f = DVector::from_fn(subset.len(), |r, _| rows[subset[r]].1);
            let svd = e.clone().svd(true, true);
            let pinv = match svd.pseudo_inverse(1e-10) {
                Ok(p) => p,
                Err(_) => return,
            };
            let h0 = &pinv * &f;
            if (&e * &h0 - &f).norm() > 1e-8 * (1.0 + f.norm()) {
                return;
            }
            let proj = &av - &pinv * (&e * &av);
            (h0, proj)
        };
        let r2 = radius2 - h0.norm_squared();
        if r2 < -1e-9 {
            return;
        }
        let pn = proj.norm();
        let h = if pn > 1e-12 {
            &h0 + &proj * (r2.max(0.0).sqrt() / pn)
        } else {
            h0
        };
        if feasible(h.as_slice(), rows, 1e-7) {
            let v = av.dot(&h) / n as f64;
            if v > *best + tol * 0.0 {
                *best = v;
            }
        }
    };
    // all subsets of size <= n, in lexicographic order
    fn rec(
        start: usize,
        m: usize,
        depth: usize,
        subset: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        f(subset);
        if depth == 0 {
            return;
        }
        for s in start..m {
            subset.push(s);
            rec(s + 1, m, depth - 1, subset, f);
            subset.pop();
        }
    }
    rec(0, m, n, &mut subset, &mut |s| consider(s, &mut best));
    best
}

fn primal_grid(a: &[f64], rows: &[(Vec<f64>, f64)], q: f64) -> f64 {
    let n = a.len();
    let nf = n as f64;
    let upper = nf.powf(1.0 / q);
    let ok = |h: &[f64]| -> bool {
        feasible(h, rows, 1e-12) && h.iter().map(|v| v.powf(q)).sum::<f64>() / nf <= 1.0 + 1e-12
    };
    let value = |h: &[f64]| a.iter().zip(h).map(|(x, y)| x * y).sum::<f64>() / nf;
    let g = 21usize;
    let mut lo = vec![0.0; n];
    let mut hi = vec![upper; n];
    let mut best_h = vec![0.0; n];
    let mut best = 0.0;
    let mut h = vec![0.0; n];
    for _round in 0..40 {
        let total = g.pow(n as u32);
        for idx in 0..total {
            let mut r = idx;
            for c in 0..n {
                let k = r % g;
                r /= g;
                h[c] = lo[c] + (hi[c] - lo[c]) * k as f64 / (g - 1) as f64;
            }
            if ok(&h) {
                let v = value(&h);
                if v > best {
                    best = v;
                    best_h.copy_from_slice(&h);
                }
            }
        }
        for c in 0..n {
            let w = (hi[c] - lo[c]) / (g - 1) as f64 * 3.0;
            lo[c] = (best_h[c] - w).max(0.0);
            hi[c] = (best_h[c] + w).min(upper);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(ratio: f64) -> RobustSpec<f64> {
        RobustSpec::new(0.5, 2.0)
            .unwrap()
            .with_eps(0.01)
            .unwrap()
            .with_lipschitz_ratio(ratio)
            .unwrap()
    }

    fn two_points() -> (Vec<f64>, PairwiseDistances<f64>, TransportPlan<f64>) {
        let dist = PairwiseDistances::from_rows(&[0.0, 1.0], 1, 1.0);
        let plan = TransportPlan::from_matrix(2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        (vec![0.0, 2.0], dist, plan)
    }

    #[test]
    fn objective_with_empty_plan_is_rms_hinge() {
        let v = [0.5, 1.5, 3.0];
        let dist = PairwiseDistances::from_rows(&[0.0, 1.0, 2.0], 1, 1.0);
        let got = marginal_objective(&v, &dist, 1.0, &TransportPlan::zeros(3), &spec(5.0)).unwrap();
        let want = ((0.25 + 4.0) / 3.0f64).sqrt();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn single_point_plan_is_inert() {
        let dist = PairwiseDistances::from_rows(&[0.3], 1, 1.0);
        let plan = TransportPlan::from_matrix(1, vec![7.0]).unwrap();
        let got = marginal_objective(&[2.0], &dist, 0.5, &plan, &spec(1.0)).unwrap();
        assert!((got - 1.5).abs() < 1e-14);
    }

    #[test]
    fn two_point_worked_example() {
        let (l, dist, plan) = two_points();
        // c = [-1, 1]; adjusted losses [1, 1]; penalty 2/4
        assert_eq!(plan.adjustments(), &[-1.0, 1.0]);
        let m = marginal_objective(&l, &dist, 0.0, &plan, &spec(1.0)).unwrap();
        assert!((m - 1.5).abs() < 1e-14);
        let s = spec(1.0).with_delta(0.01).unwrap(); // 2δ/ε = 2
        let c = confounded_objective(&l, &dist, 0.0, &plan, &s).unwrap();
        assert!((c - 2.5).abs() < 1e-12);
        let data = Dataset::new(vec![0.0, 1.0], 1, vec![0.0, 2.0]).unwrap();
        let state = DualState::new(ParamVector::zeros(1), 0.0, plan);
        let r = robust_surrogate(&state, &data, &dist, LossKind::AbsoluteDeviation, &spec(1.0), false).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn floor_branch() {
        let data = Dataset::new(vec![0.0, 1.0], 1, vec![0.0, 0.0]).unwrap();
        let dist = PairwiseDistances::from_dataset(&data, 1.0);
        let state = DualState::new(ParamVector::zeros(1), 0.3, TransportPlan::zeros(2));
        let r = robust_surrogate(&state, &data, &dist, LossKind::AbsoluteDeviation, &spec(1.0), false).unwrap();
        assert!((r - 0.32).abs() < 1e-12);
        let g = subgradient(&state, &data, &dist, LossKind::AbsoluteDeviation, &spec(1.0), false).unwrap();
        assert_eq!(g.eta, 1.0);
        assert!(g.theta.iter().all(|&v| v == 0.0));

        let data = Dataset::new(vec![0.0, 1.0], 1, vec![0.8, 0.8]).unwrap();
        let state = DualState::new(ParamVector::zeros(1), 0.8, TransportPlan::zeros(2));
        let r = robust_surrogate(&state, &data, &dist, LossKind::AbsoluteDeviation, &spec(1.0), false).unwrap();
        assert!((r - (0.01 / 0.5 + 0.8)).abs() < 1e-12);
    }

    #[test]
    fn negative_plan_rejected() {
        assert!(matches!(
            TransportPlan::from_matrix(2, vec![0.0, -1e-3, 0.0, 0.0]),
            Err(DroError::NegativePlan { row: 0, col: 1 })
        ));
    }

    #[test]
    fn adjustments_sum_to_zero() {
        let plan = TransportPlan::from_matrix(3, vec![0.0, 1.0, 2.0, 0.5, 0.0, 0.0, 3.0, 0.25, 0.0]).unwrap();
        let s: f64 = plan.adjustments().iter().sum();
        assert!(s.abs() < 1e-14);
    }

    #[test]
    fn p_outside_range_rejected() {
        let (l, dist, plan) = two_points();
        let s = RobustSpec::new(0.5, 2.5).unwrap();
        assert!(marginal_objective(&l, &dist, 0.0, &plan, &s).is_err());
    }

    #[test]
    fn inactive_hinge_gradient() {
        let data = Dataset::new(vec![0.0, 1.0, 3.0], 1, vec![0.1, 0.2, 0.3]).unwrap();
        let dist = PairwiseDistances::from_dataset(&data, 1.0);
        let s = spec(2.0);
        let state = DualState::new(ParamVector::zeros(1), 0.5, TransportPlan::from_matrix(3, vec![0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
        let g = subgradient(&state, &data, &dist, LossKind::AbsoluteDeviation, &s, false).unwrap();
        assert_eq!(g.theta, vec![0.0]);
        assert_eq!(g.eta, 1.0);
        // penalty coefficients only: (1/α₀)·K·D_ij/n²
        let want = 2.0 * 2.0 * 3.0 / 9.0;
        assert!((g.plan[2] - want).abs() < 1e-14);
    }

    #[test]
    fn primal_oracle_trivial_cases() {
        let dist = PairwiseDistances::from_rows(&[0.0], 1, 1.0);
        let v = primal_inner_sup(&[2.5], &dist, 1.0, &spec(1.0)).unwrap();
        assert!((v - 1.5).abs() < 1e-9);
        let dist = PairwiseDistances::from_rows(&[0.0, 1.0, 2.0], 1, 1.0);
        let v = primal_inner_sup(&[0.1, 0.2, 0.3], &dist, 0.5, &spec(1.0)).unwrap();
        assert_eq!(v, 0.0);
        let dist = PairwiseDistances::from_rows(&[0.0; 7], 1, 1.0);
        assert!(primal_inner_sup(&[0.0; 7], &dist, 0.0, &spec(1.0)).is_err());
    }

    #[test]
    fn primal_matches_dual_two_points() {
        let dist = PairwiseDistances::from_rows(&[0.0, 0.4], 1, 1.0);
        let l = [0.3, 1.7];
        for ratio in [0.0, 0.5, 2.0, 50.0] {
            let s = spec(ratio);
            let primal = primal_inner_sup(&l, &dist, 0.2, &s).unwrap();
            let (dual, _) = minimize_over_plan(&l, &dist, 0.2, &s, false, 10_000).unwrap();
            assert!(dual >= primal - 1e-9, "weak duality {dual} {primal}");
            assert!(dual - primal < 1e-3, "ratio {ratio}: {dual} vs {primal}");
        }
    }

    #[test]
    fn grid_primal_agrees_with_enumeration_shape() {
        // for p != 2 the grid route must still respect weak duality
        let dist = PairwiseDistances::from_rows(&[0.0, 0.5], 1, 0.5);
        let s = RobustSpec::new(0.5, 1.5).unwrap().with_eps(0.1).unwrap().with_lipschitz_ratio(1e6).unwrap();
        let l = [0.2, 1.0];
        let primal = primal_inner_sup(&l, &dist, 0.1, &s).unwrap();
        // unconstrained Hölder: sup = (mean a₊^p)^{1/p}
        let want = ((0.1f64.powf(1.5) + 0.9f64.powf(1.5)) / 2.0).powf(1.0 / 1.5);
        assert!((primal - want).abs() < 1e-3, "{primal} {want}");
    }
}
