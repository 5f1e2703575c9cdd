//! Data containers and pointwise losses.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, DroError, Result};
use crate::scalar::Scalar;

/// Row-major sample of covariates with labels and optional side columns.
///
/// `replicates` holds repeated label draws for each row (n×m, row-major);
/// `group` is the latent mixture indicator and is never used for training;
/// `confounder` is the observed value of the unmeasured confounder in
/// simulated data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    labels: Vec<T>,
    n: usize,
    d: usize,
    replicates: Option<Vec<T>>,
    n_replicates: usize,
    group: Option<Vec<u8>>,
    confounder: Option<Vec<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Vec<T>, d: usize, labels: Vec<T>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "feature dimension must be at least 1"));
        }
        let n = labels.len();
        if n == 0 {
            return Err(DroError::Empty("dataset"));
        }
        if features.len() != n * d {
            return Err(DroError::DimensionMismatch {
                expected: n * d,
                got: features.len(),
                context: "feature matrix",
            });
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(DroError::NonFinite("features"));
        }
        if !labels.iter().all(|v| v.is_finite()) {
            return Err(DroError::NonFinite("labels"));
        }
        Ok(Dataset {
            features,
            labels,
            n,
            d,
            replicates: None,
            n_replicates: 0,
            group: None,
            confounder: None,
        })
    }

    /// Attaches an n×m row-major replicate matrix.
    pub fn with_replicates(mut self, m: usize, values: Vec<T>) -> Result<Self> {
        if m == 0 {
            return Err(invalid("m", "at least one replicate per row"));
        }
        if values.len() != self.n * m {
            return Err(DroError::DimensionMismatch {
                expected: self.n * m,
                got: values.len(),
                context: "replicate matrix",
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(DroError::NonFinite("replicates"));
        }
        self.replicates = Some(values);
        self.n_replicates = m;
        Ok(self)
    }

    pub fn with_group(mut self, group: Vec<u8>) -> Result<Self> {
        if group.len() != self.n {
            return Err(DroError::DimensionMismatch {
                expected: self.n,
                got: group.len(),
                context: "group column",
            });
        }
        if group.iter().any(|&g| g > 1) {
            return Err(invalid("group", "entries must be 0 or 1"));
        }
        self.group = Some(group);
        Ok(self)
    }

    pub fn with_confounder(mut self, confounder: Vec<T>) -> Result<Self> {
        if confounder.len() != self.n {
            return Err(DroError::DimensionMismatch {
                expected: self.n,
                got: confounder.len(),
                context: "confounder column",
            });
        }
        if !confounder.iter().all(|v| v.is_finite()) {
            return Err(DroError::NonFinite("confounder"));
        }
        self.confounder = Some(confounder);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn n_replicates(&self) -> usize {
        self.n_replicates
    }

    pub fn replicates(&self) -> Option<&[T]> {
        self.replicates.as_deref()
    }

    /// Replicate labels of row `i`, if replicates are attached.
    pub fn replicate_row(&self, i: usize) -> Option<&[T]> {
        let m = self.n_replicates;
        self.replicates.as_ref().map(|r| &r[i * m..(i + 1) * m])
    }

    pub fn group(&self) -> Option<&[u8]> {
        self.group.as_deref()
    }

    pub fn confounder(&self) -> Option<&[T]> {
        self.confounder.as_deref()
    }

    /// Rows selected by `keep`, preserving every attached column.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(DroError::Empty("row selection"));
        }
        let mut features = Vec::with_capacity(keep.len() * self.d);
        let mut labels = Vec::with_capacity(keep.len());
        for &i in keep {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let mut out = Dataset::new(features, self.d, labels)?;
        if self.replicates.is_some() {
            let mut reps = Vec::with_capacity(keep.len() * self.n_replicates);
            for &i in keep {
                reps.extend_from_slice(self.replicate_row(i).unwrap());
            }
            out = out.with_replicates(self.n_replicates, reps)?;
        }
        if let Some(g) = &self.group {
            out = out.with_group(keep.iter().map(|&i| g[i]).collect())?;
        }
        if let Some(c) = &self.confounder {
            out = out.with_confounder(keep.iter().map(|&i| c[i]).collect())?;
        }
        Ok(out)
    }
}

/// Linear predictor `x ↦ θᵀx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    pub theta: Vec<T>,
    pub intercept: T,
}

impl<T: Scalar> ParamVector<T> {
    pub fn zeros(d: usize) -> Self {
        ParamVector {
            theta: vec![T::zero(); d],
            intercept: T::zero(),
        }
    }

    pub fn new(theta: Vec<T>, intercept: T) -> Result<Self> {
        if !theta.iter().all(|v| v.is_finite()) || !intercept.is_finite() {
            return Err(DroError::NonFinite("parameters"));
        }
        Ok(ParamVector { theta, intercept })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    #[inline]
    pub fn predict(&self, x: &[T]) -> T {
        self.theta
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (&t, &xi)| acc + t * xi)
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.theta.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    AbsoluteDeviation,
    Logistic,
    /// Misclassification indicator; evaluation only.
    ZeroOne,
}

impl LossKind {
    pub fn is_trainable(self) -> bool {
        !matches!(self, LossKind::ZeroOne)
    }

    /// Loss as a function of the prediction `f = θᵀx + b`.
    #[inline]
    pub fn value_at<T: Scalar>(self, f: T, y: T) -> T {
        match self {
            LossKind::AbsoluteDeviation => (f - y).abs(),
            LossKind::Logistic => softplus(-y * f),
            LossKind::ZeroOne => {
                let predicted = if f >= T::zero() { T::one() } else { -T::one() };
                if predicted == y {
                    T::zero()
                } else {
                    T::one()
                }
            }
        }
    }

    /// An element of ∂ℓ/∂f; `None` for the zero-one loss.
    ///
    /// At the absolute-loss kink the zero element is returned.
    #[inline]
    pub fn derivative_at<T: Scalar>(self, f: T, y: T) -> Option<T> {
        match self {
            LossKind::AbsoluteDeviation => {
                let r = f - y;
                Some(if r > T::zero() {
                    T::one()
                } else if r < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                })
            }
            LossKind::Logistic => Some(-y * sigmoid(-y * f)),
            LossKind::ZeroOne => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::AbsoluteDeviation => "absolute_deviation",
            LossKind::Logistic => "logistic",
            LossKind::ZeroOne => "zero_one",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = DroError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute_deviation" | "absolute" | "l1" => Ok(LossKind::AbsoluteDeviation),
            "logistic" => Ok(LossKind::Logistic),
            "zero_one" | "01" => Ok(LossKind::ZeroOne),
            other => Err(invalid("loss", format!("unknown loss '{other}'"))),
        }
    }
}

#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    // log(1 + e^z) without overflow
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn check_dims<T: Scalar>(theta: &ParamVector<T>, x: &[T]) -> Result<()> {
    if theta.dim() != x.len() {
        return Err(DroError::DimensionMismatch {
            expected: theta.dim(),
            got: x.len(),
            context: "covariate vector",
        });
    }
    Ok(())
}

pub fn loss_value<T: Scalar>(kind: LossKind, theta: &ParamVector<T>, x: &[T], y: T) -> Result<T> {
    check_dims(theta, x)?;
    Ok(kind.value_at(theta.predict(x), y))
}

/// Subgradient with respect to `(θ, b)`; the intercept component is last.
pub fn loss_subgradient<T: Scalar>(
    kind: LossKind,
    theta: &ParamVector<T>,
    x: &[T],
    y: T,
) -> Result<Vec<T>> {
    check_dims(theta, x)?;
    let g = kind.derivative_at(theta.predict(x), y).ok_or_else(|| {
        DroError::Unsupported("zero_one loss has no useful subgradient".into())
    })?;
    let mut out: Vec<T> = x.iter().map(|&xi| g * xi).collect();
    out.push(g);
    Ok(out)
}

/// Per-example losses of `theta` on `data`.
pub fn losses<T: Scalar>(kind: LossKind, theta: &ParamVector<T>, data: &Dataset<T>) -> Vec<T> {
    (0..data.len())
        .map(|i| kind.value_at(theta.predict(data.row(i)), data.labels()[i]))
        .collect()
}
