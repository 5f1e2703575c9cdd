//! One-dimensional duals of worst-case subpopulation risk.
//!
//! The CVaR dual `inf_η (1/α₀)·mean(v − η)₊ + η` is solved exactly by
//! sorting; its higher-order counterpart
//! `inf_η (1/α₀)·(mean (v − η)₊^p)^{1/p} + η` by golden-section search
//! over `η ∈ [0, max v]`.

use crate::error::{invalid, DroError, Result};
use crate::scalar::{max_of, mean, Scalar};

/// Hyperparameters shared by every robust objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustSpec<T> {
    /// Smallest subpopulation proportion protected against.
    pub alpha0: T,
    /// Dual exponent; `q = p/(p−1)` is derived.
    pub p: T,
    /// Ratio `L/ε` of the Hölder constant to the floor level.
    pub lipschitz_ratio: T,
    /// Floor level `ε` entering `ε^{q−1}`.
    pub eps: T,
    /// Postulated confounding level `δ`.
    pub delta: T,
    /// Upper bound on losses; `None` means "max observed loss".
    pub loss_bound: Option<T>,
}

impl<T: Scalar> RobustSpec<T> {
    pub fn new(alpha0: T, p: T) -> Result<Self> {
        let spec = RobustSpec {
            alpha0,
            p,
            lipschitz_ratio: T::lit(1.0),
            eps: T::lit(1e-3),
            delta: T::zero(),
            loss_bound: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_lipschitz_ratio(mut self, ratio: T) -> Result<Self> {
        self.lipschitz_ratio = ratio;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eps(mut self, eps: T) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: T) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_loss_bound(mut self, bound: Option<T>) -> Result<Self> {
        self.loss_bound = bound;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha0)?;
        if !(self.p >= T::one()) || !self.p.is_finite() {
            return Err(invalid("p", format!("must be >= 1, got {}", self.p)));
        }
        if !(self.lipschitz_ratio >= T::zero()) {
            return Err(invalid("lipschitz_ratio", "must be nonnegative"));
        }
        if !(self.eps > T::zero()) || !self.eps.is_finite() {
            return Err(invalid("eps", "must be positive and finite"));
        }
        if !(self.delta >= T::zero()) {
            return Err(invalid("delta", "must be nonnegative"));
        }
        if let Some(m) = self.loss_bound {
            if !(m > T::zero()) {
                return Err(invalid("loss_bound", "must be positive"));
            }
        }
        Ok(())
    }

    /// Conjugate exponent `p/(p−1)`; infinite at `p = 1`.
    pub fn q(&self) -> T {
        if self.p == T::one() {
            T::infinity()
        } else {
            self.p / (self.p - T::one())
        }
    }

    /// `ε^{q−1}`, the floor below which the surrogate is flat.
    pub fn floor(&self) -> T {
        self.eps.powf(self.q() - T::one())
    }

    /// `L^{p−1}/ε` with `L = lipschitz_ratio·ε`.
    pub fn transport_coefficient(&self) -> T {
        let l = self.lipschitz_ratio * self.eps;
        l.powf(self.p - T::one()) / self.eps
    }

    /// `2δ^{p−1}/ε`, the per-unit cost of confounded transport.
    pub fn confounding_coefficient(&self) -> T {
        if self.delta == T::zero() {
            return T::zero();
        }
        T::lit(2.0) * self.delta.powf(self.p - T::one()) / self.eps
    }

    /// ε making the floor contribution `ε^{q−1}/α₀` equal to
    /// `1e−3·mean_loss`.
    pub fn default_eps(alpha0: T, p: T, mean_loss: T) -> T {
        let target = (T::lit(1e-3) * alpha0 * mean_loss).max(T::lit(1e-12));
        // ε^{q−1} = target with q − 1 = 1/(p − 1)
        if p <= T::one() {
            return target;
        }
        target.powf(p - T::one())
    }
}

pub(crate) fn check_alpha<T: Scalar>(alpha0: T) -> Result<()> {
    if !(alpha0 > T::zero() && alpha0 <= T::one()) {
        return Err(invalid("alpha0", format!("must lie in (0, 1], got {alpha0}")));
    }
    Ok(())
}

/// `(1/α₀)·mean(v − η)₊ + η`.
pub fn cvar_objective<T: Scalar>(values: &[T], eta: T, alpha0: T) -> T {
    let s: T = values.iter().map(|&v| (v - eta).pos()).sum();
    s / (alpha0 * T::from_usize_lossy(values.len())) + eta
}

/// `(1/α₀)·(mean (v − η)₊^p)^{1/p} + η`.
pub fn pnorm_objective<T: Scalar>(values: &[T], eta: T, alpha0: T, p: T) -> T {
    pnorm_block(values, eta, p) / alpha0 + eta
}

/// `(mean (v − η)₊^p)^{1/p}`.
pub(crate) fn pnorm_block<T: Scalar>(values: &[T], eta: T, p: T) -> T {
    let s: T = values.iter().map(|&v| (v - eta).pos().powf(p)).sum();
    (s / T::from_usize_lossy(values.len())).powf(p.recip())
}

/// Index (0-based, in descending order) of the ⌈α₀n⌉-th largest value.
fn tail_rank<T: Scalar>(n: usize, alpha0: T) -> usize {
    let k = alpha0.as_f64() * n as f64;
    let k = (k - 1e-9 * k.max(1.0)).ceil().max(1.0) as usize;
    k.min(n) - 1
}

/// CVaR dual solved exactly: returns `(risk, η*)` with η* the
/// ⌈α₀n⌉-th largest value. Non-integer `α₀n` gets the fractional tail weight.
pub fn cvar_dual<T: Scalar>(values: &[T], alpha0: T) -> Result<(T, T)> {
    if values.is_empty() {
        return Err(DroError::Empty("cvar_dual values"));
    }
    check_alpha(alpha0)?;
    if !values.iter().all(|v| v.is_finite()) {
        return Err(DroError::NonFinite("cvar_dual values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let eta = sorted[tail_rank(values.len(), alpha0)];
    let risk = cvar_objective(values, eta, alpha0);
    let (lo, hi) = (mean(values), sorted[0]);
    Ok((risk.max(lo).min(hi), eta))
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of a convex function on `[lo, hi]`.
pub(crate) fn golden_section<T: Scalar>(
    mut lo: T,
    mut hi: T,
    tol: T,
    f: impl Fn(T) -> T,
) -> (T, T) {
    let g = T::lit(GOLDEN);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    // endpoints can win for monotone objectives
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Joint-DRO p-norm dual: returns `(risk, η*)`, minimizing over
/// `η ∈ [min(0, min v), max v]`. `p = 1` delegates to [`cvar_dual`].
pub fn pnorm_dual<T: Scalar>(values: &[T], alpha0: T, p: T) -> Result<(T, T)> {
    if values.is_empty() {
        return Err(DroError::Empty("pnorm_dual values"));
    }
    if !(p >= T::one()) {
        return Err(invalid("p", format!("must be >= 1, got {p}")));
    }
    check_alpha(alpha0)?;
    if p == T::one() {
        return cvar_dual(values, alpha0);
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(DroError::NonFinite("pnorm_dual values"));
    }
    let hi = max_of(values);
    let lo = values.iter().copied().fold(T::zero(), T::min);
    let tol = T::lit(1e-10) * (T::one() + hi.abs());
    let tol = tol.max(T::epsilon() * T::lit(4.0) * (T::one() + hi.abs()));
    let (eta, risk) = golden_section(lo, hi, tol, |eta| pnorm_objective(values, eta, alpha0, p));
    Ok((risk, eta))
}

/// Plug-in worst-case risk from replicated losses: CVaR of the row means.
pub fn replicate_worst_case<T: Scalar>(rows: &[Vec<T>], alpha0: T) -> Result<T> {
    if rows.is_empty() {
        return Err(DroError::Empty("replicate matrix"));
    }
    let m = rows[0].len();
    if m == 0 {
        return Err(DroError::Empty("replicate row"));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(DroError::DimensionMismatch {
            expected: m,
            got: bad.len(),
            context: "ragged replicate matrix",
        });
    }
    let means: Vec<T> = rows.iter().map(|r| mean(r)).collect();
    Ok(cvar_dual(&means, alpha0)?.0)
}

/// Row means of a flat n×m matrix, the per-row conditional-risk estimate.
pub fn row_means<T: Scalar>(flat: &[T], m: usize) -> Vec<T> {
    flat.chunks(m).map(mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_min(v: &[f64], alpha0: f64, p: f64) -> f64 {
        let hi = v.iter().cloned().fold(0.0, f64::max);
        let steps = 200_000;
        (0..=steps)
            .map(|k| {
                let eta = hi * k as f64 / steps as f64;
                let s: f64 = v.iter().map(|&x| (x - eta).max(0.0).powf(p)).sum::<f64>() / v.len() as f64;
                s.powf(1.0 / p) / alpha0 + eta
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn cvar_examples() {
        let (r, eta) = cvar_dual::<f64>(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert!((r - 3.5).abs() < 1e-12);
        assert_eq!(eta, 3.0);
        assert!((grid_min(&[1.0, 2.0, 3.0, 4.0], 0.5, 1.0) - 3.5).abs() < 1e-4);
        let (r, _) = cvar_dual::<f64>(&[0.7; 5], 0.13).unwrap();
        assert!((r - 0.7).abs() < 1e-15);
        let v = [0.3, 1.9, 0.2, 5.0];
        let (r, _) = cvar_dual::<f64>(&v, 1.0).unwrap();
        assert!((r - 1.85).abs() < 1e-12);
    }

    #[test]
    fn cvar_fractional_tail() {
        // α₀n = 1.5: the top value with weight 1 and the next with weight 1/2
        let (r, _) = cvar_dual::<f64>(&[0.0, 1.0, 2.0], 0.5).unwrap();
        assert!((r - (2.0 + 0.5) / 1.5).abs() < 1e-12);
    }

    #[test]
    fn cvar_rejects_bad_input() {
        assert!(matches!(cvar_dual::<f64>(&[], 0.5), Err(DroError::Empty(_))));
        assert!(cvar_dual::<f64>(&[1.0], 0.0).is_err());
        assert!(cvar_dual::<f64>(&[1.0], 1.5).is_err());
    }

    #[test]
    fn pnorm_examples() {
        let (r, _) = pnorm_dual::<f64>(&[1.25; 4], 0.5, 2.0).unwrap();
        assert!((r - 1.25).abs() < 1e-9);
        let (r, eta) = pnorm_dual::<f64>(&[0.0, 2.0], 0.5, 2.0).unwrap();
        assert!((r - 2.0).abs() < 1e-9, "{r}");
        assert!((eta - 2.0).abs() < 1e-6);
        let (r, _) = pnorm_dual::<f64>(&[0.0, 1.0, 5.0], 1.0, 1.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(pnorm_dual::<f64>(&[1.0], 0.5, 0.5).is_err());
    }

    #[test]
    fn pnorm_matches_grid() {
        let v = [0.1, 0.9, 2.3, 0.4, 1.7];
        for &p in &[1.5, 2.0] {
            let (r, _) = pnorm_dual::<f64>(&v, 0.3, p).unwrap();
            assert!((r - grid_min(&v, 0.3, p)).abs() < 1e-5);
        }
    }

    #[test]
    fn replicate_examples() {
        let r = replicate_worst_case::<f64>(&[vec![0.0, 2.0], vec![4.0, 6.0]], 0.5).unwrap();
        assert!((r - 5.0).abs() < 1e-12);
        let r = replicate_worst_case::<f64>(&[vec![1.5, 1.5], vec![1.5, 1.5]], 0.2).unwrap();
        assert!((r - 1.5).abs() < 1e-12);
        let v = [0.2, 3.0, 1.0];
        let rows: Vec<Vec<f64>> = v.iter().map(|&x| vec![x]).collect();
        assert_eq!(replicate_worst_case::<f64>(&rows, 0.4).unwrap(), cvar_dual::<f64>(&v, 0.4).unwrap().0);
        assert!(matches!(
            replicate_worst_case::<f64>(&[vec![1.0, 2.0], vec![1.0]], 0.5),
            Err(DroError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spec_derived_quantities() {
        let s = RobustSpec::<f64>::new(0.5, 2.0).unwrap().with_eps(0.01).unwrap().with_lipschitz_ratio(3.0).unwrap();
        assert!((s.q() - 2.0).abs() < 1e-15);
        assert!((s.floor() - 0.01).abs() < 1e-15);
        assert!((s.transport_coefficient() - 3.0).abs() < 1e-12);
        let s = s.with_delta(0.25).unwrap();
        assert!((s.confounding_coefficient() - 50.0).abs() < 1e-9);
        assert!(RobustSpec::<f64>::new(0.0, 2.0).is_err());
        assert!(RobustSpec::<f64>::new(0.5, 0.9).is_err());
        assert!(RobustSpec::<f64>::new(0.5, 2.0).unwrap().with_eps(0.0).is_err());
        let e: f64 = RobustSpec::default_eps(0.3, 2.0, 1.0);
        assert!((e / 0.3 - 1e-3).abs() < 1e-15);
    }
}
