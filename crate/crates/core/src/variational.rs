//! Alternative smoothing classes for the worst-case weight function: an
//! RKHS ball (Gaussian kernel) and bounded Hölder functions. Both enter
//! through their convex duals over `(η, β)` and `(η, B)` respectively.

use nalgebra::DMatrix;

use crate::error::{invalid, DroError, Result};
use crate::marginal::{PairwiseDistances, TransportPlan};
use crate::risk_duals::{check_alpha, RobustSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    /// σ in `exp(−‖x − x′‖²/(2σ²))`.
    pub bandwidth: T,
    /// RKHS norm budget `R`.
    pub radius: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn gaussian(bandwidth: T, radius: T) -> Result<Self> {
        let k = KernelSpec {
            kind: KernelKind::Gaussian,
            bandwidth,
            radius,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > T::zero()) || !self.bandwidth.is_finite() {
            return Err(invalid("bandwidth", "must be positive and finite"));
        }
        if !(self.radius > T::zero()) || !self.radius.is_finite() {
            return Err(invalid("radius", "must be positive and finite"));
        }
        Ok(())
    }
}

/// Kernel evaluated on all sample pairs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    n: usize,
    k: Vec<T>,
}

impl<T: Scalar> GramMatrix<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.k[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.k
    }

    /// `K v`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        self.k
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `vᵀ K v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        self.apply(v).iter().zip(v).map(|(&a, &b)| a * b).sum()
    }

    /// Attempts a Cholesky factorization of `K + jitter·I`.
    pub fn is_psd(&self) -> bool {
        let n = self.n;
        let jitter = 1e-10 * n as f64;
        let m = DMatrix::from_fn(n, n, |i, j| {
            self.get(i, j).as_f64() + if i == j { jitter } else { 0.0 }
        });
        m.cholesky().is_some()
    }
}

pub fn gram<T: Scalar>(features: &[T], d: usize, kernel: &KernelSpec<T>) -> Result<GramMatrix<T>> {
    kernel.validate()?;
    if d == 0 || features.is_empty() || !features.len().is_multiple_of(d) {
        return Err(DroError::Empty("features"));
    }
    let n = features.len() / d;
    let scale = -T::one() / (T::lit(2.0) * kernel.bandwidth * kernel.bandwidth);
    let mut k = vec![T::one(); n * n];
    for i in 0..n {
        let xi = &features[i * d..(i + 1) * d];
        for j in (i + 1)..n {
            let xj = &features[j * d..(j + 1) * d];
            let s: T = xi.iter().zip(xj).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let v = (scale * s).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    Ok(GramMatrix { n, k })
}

fn check_len<T>(losses: &[T], n: usize, context: &'static str) -> Result<()> {
    if losses.is_empty() {
        return Err(DroError::Empty("losses"));
    }
    if losses.len() != n {
        return Err(DroError::DimensionMismatch {
            expected: losses.len(),
            got: n,
            context,
        });
    }
    Ok(())
}

fn psd_quad<T: Scalar>(gram: &GramMatrix<T>, beta: &[T]) -> Result<T> {
    let quad = gram.quadratic_form(beta);
    let scale: T = beta.iter().map(|&b| b * b).sum::<T>() * T::from_usize_lossy(gram.len());
    if quad < -T::lit(1e-9) * (T::one() + scale) {
        return Err(DroError::NotPsd(quad.as_f64()));
    }
    Ok(quad.max(T::zero()))
}

/// `(1/(α₀n)) Σ (ℓᵢ − η + βᵢ)₊ + (1/n)·sqrt(βᵀKβ / R)`.
pub fn rkhs_objective<T: Scalar>(
    losses: &[T],
    gram: &GramMatrix<T>,
    eta: T,
    beta: &[T],
    alpha0: T,
    radius: T,
) -> Result<T> {
    check_len(losses, gram.len(), "Gram matrix")?;
    check_len(losses, beta.len(), "beta")?;
    check_alpha(alpha0)?;
    if !(radius > T::zero()) {
        return Err(invalid("radius", "must be positive"));
    }
    let n = T::from_usize_lossy(losses.len());
    let hinge: T = losses
        .iter()
        .zip(beta)
        .map(|(&l, &b)| (l - eta + b).pos())
        .sum();
    let quad = psd_quad(gram, beta)?;
    Ok(hinge / (alpha0 * n) + (quad / radius).sqrt() / n)
}

/// Partials of [`rkhs_objective`]: `(∂/∂ℓ, ∂/∂β)`; `∂/∂η = −Σ ∂/∂ℓ`.
pub(crate) fn rkhs_gradient<T: Scalar>(
    losses: &[T],
    gram: &GramMatrix<T>,
    eta: T,
    beta: &[T],
    alpha0: T,
    radius: T,
) -> (Vec<T>, Vec<T>) {
    let n = T::from_usize_lossy(losses.len());
    let unit = T::one() / (alpha0 * n);
    let w: Vec<T> = losses
        .iter()
        .zip(beta)
        .map(|(&l, &b)| if l - eta + b > T::zero() { unit } else { T::zero() })
        .collect();
    let kb = gram.apply(beta);
    let quad: T = kb.iter().zip(beta).map(|(&a, &b)| a * b).sum();
    let mut gb = w.clone();
    if quad > T::zero() {
        let denom = n * (radius * quad).sqrt();
        for (g, &v) in gb.iter_mut().zip(&kb) {
            *g = *g + v / denom;
        }
    }
    (w, gb)
}

/// `(1/(α₀n)) Σ (ℓᵢ − cᵢ − η)₊ + (L^{p−1}/n²) Σ ‖xᵢ − xⱼ‖^{p−1} B_ij` with
/// `L = spec.lipschitz_ratio`; the penalty carries no `1/ε`.
pub fn bounded_holder_objective<T: Scalar>(
    losses: &[T],
    dist: &PairwiseDistances<T>,
    eta: T,
    plan: &TransportPlan<T>,
    alpha0: T,
    spec: &RobustSpec<T>,
) -> Result<T> {
    check_len(losses, dist.len(), "distance matrix")?;
    check_len(losses, plan.len(), "transport plan")?;
    check_alpha(alpha0)?;
    spec.validate()?;
    let n = T::from_usize_lossy(losses.len());
    let hinge: T = losses
        .iter()
        .zip(plan.adjustments())
        .map(|(&l, &c)| (l - c - eta).pos())
        .sum();
    let cost: T = dist
        .powered()
        .iter()
        .zip(plan.as_slice())
        .map(|(&d, &b)| d * b)
        .sum();
    Ok(hinge / (alpha0 * n) + holder_coefficient(spec) * cost / (n * n))
}

/// `L^{p−1}` for the bounded Hölder class.
pub(crate) fn holder_coefficient<T: Scalar>(spec: &RobustSpec<T>) -> T {
    spec.lipschitz_ratio.powf(spec.p - T::one())
}
