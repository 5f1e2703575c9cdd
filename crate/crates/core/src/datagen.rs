//! Seeded generators for the simulated mixture distributions.
//!
//! Every column is drawn from its own ChaCha8 stream (same seed, distinct
//! stream id), so the covariates of a row never depend on how many label
//! replicates are drawn and results are bitwise reproducible across
//! platforms.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, DroError, Result};
use crate::model::{Dataset, ParamVector};
use crate::scalar::Scalar;

/// Support of the simulated confounder `C`.
pub const CONFOUNDER_SUPPORT: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

const STREAM_GROUP: u64 = 0;
const STREAM_X1: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_CONFOUNDER: u64 = 3;
const STREAM_REPLICATES: u64 = 4;
const STREAM_COVARIATES: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// One-dimensional mixture with Gaussian noise on the majority side.
    Toy1d,
    /// `d`-dimensional version with nuisance covariates on `[−1, 1]`.
    Simdist,
    /// Noise replaced by a discrete confounder; nuisance covariates on `[0, 1]`.
    Confounded,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Toy1d => "toy_1d",
            Variant::Simdist => "simdist",
            Variant::Confounded => "confounded",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = DroError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy_1d" | "toy" => Ok(Variant::Toy1d),
            "simdist" => Ok(Variant::Simdist),
            "confounded" => Ok(Variant::Confounded),
            other => Err(invalid("variant", format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub d: usize,
    /// Minority (left-group) proportion.
    pub alpha_true: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(variant: Variant, n: usize, d: usize, seed: u64) -> Self {
        SimSpec {
            n,
            d,
            alpha_true: 0.15,
            variant,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if self.d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        if self.variant == Variant::Toy1d && self.d != 1 {
            return Err(invalid("d", "toy_1d is one-dimensional"));
        }
        if !(self.alpha_true > 0.0 && self.alpha_true < 1.0) {
            return Err(invalid("alpha_true", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }
}

/// Draws one label perturbation for a majority-side row.
fn perturbation(variant: Variant, noise: &mut ChaCha8Rng, conf: &mut ChaCha8Rng) -> (f64, Option<f64>) {
    match variant {
        Variant::Toy1d | Variant::Simdist => (noise.sample(StandardNormal), None),
        Variant::Confounded => {
            let c = CONFOUNDER_SUPPORT[conf.random_range(0..CONFOUNDER_SUPPORT.len())];
            (c, Some(c))
        }
    }
}

pub fn generate<T: Scalar>(spec: &SimSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut group_rng = spec.stream(STREAM_GROUP);
    let mut x1_rng = spec.stream(STREAM_X1);
    let mut noise_rng = spec.stream(STREAM_NOISE);
    let mut conf_rng = spec.stream(STREAM_CONFOUNDER);
    let mut cov_rngs: Vec<ChaCha8Rng> = (1..d).map(|k| spec.stream(STREAM_COVARIATES + k as u64)).collect();

    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    let mut confounder = Vec::with_capacity(n);
    for _ in 0..n {
        let z = group_rng.random_bool(spec.alpha_true);
        let u: f64 = x1_rng.random();
        let x1 = if z { -u } else { u };
        features.push(T::lit(x1));
        for rng in cov_rngs.iter_mut() {
            let v: f64 = rng.random();
            let v = match spec.variant {
                Variant::Confounded => v,
                _ => 2.0 * v - 1.0,
            };
            features.push(T::lit(v));
        }
        // both streams advance on every row so row i only depends on i
        let (e, c) = perturbation(spec.variant, &mut noise_rng, &mut conf_rng);
        let y = if x1 >= 0.0 { x1.abs() + e } else { x1.abs() };
        labels.push(T::lit(y));
        group.push(z as u8);
        confounder.push(T::lit(c.unwrap_or(0.0)));
    }
    let data = Dataset::new(features, d, labels)?.with_group(group)?;
    if spec.variant == Variant::Confounded {
        data.with_confounder(confounder)
    } else {
        Ok(data)
    }
}

/// Same rows as [`generate`], plus `m` fresh label draws per row.
///
/// Replicates are draws of `Y` given the row's covariates and, for the
/// confounded variant, its confounder value: the unmeasured `C` is part of
/// what a repeated measurement holds fixed, so confounded replicates repeat
/// the primary label.
pub fn generate_replicates<T: Scalar>(spec: &SimSpec, m: usize) -> Result<Dataset<T>> {
    if m == 0 {
        return Err(invalid("m", "at least one replicate per row"));
    }
    let data: Dataset<T> = generate(spec)?;
    let mut rng = spec.stream(STREAM_REPLICATES);
    let mut reps = Vec::with_capacity(spec.n * m);
    for i in 0..data.len() {
        let x1 = data.row(i)[0].as_f64();
        let offset = data.confounder().map(|c| c[i].as_f64());
        for _ in 0..m {
            let e = match offset {
                Some(c) => c,
                None => rng.sample(StandardNormal),
            };
            let y = if x1 >= 0.0 { x1.abs() + e } else { x1.abs() };
            reps.push(T::lit(y));
        }
    }
    data.with_replicates(m, reps)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// `E|μ − ε|` for `ε ~ N(0, 1)`.
pub fn expected_abs_gaussian(mu: f64) -> f64 {
    (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * mu * mu).exp() + mu * (1.0 - 2.0 * normal_cdf(-mu))
}

/// `E[|θᵀx + b − Y| | X = x]` under the simulated model.
pub fn conditional_risk_oracle<T: Scalar>(theta: &ParamVector<T>, x: &[T], variant: Variant) -> Result<T> {
    if variant == Variant::Confounded {
        return Err(DroError::Unsupported(
            "no closed-form conditional risk for the confounded variant; use replicate evaluation".into(),
        ));
    }
    if x.len() != theta.dim() {
        return Err(DroError::DimensionMismatch {
            expected: theta.dim(),
            got: x.len(),
            context: "covariate vector",
        });
    }
    let f = theta.predict(x).as_f64();
    let x1 = x[0].as_f64();
    let r = if x1 < 0.0 {
        (f - x1.abs()).abs()
    } else {
        expected_abs_gaussian(f - x1)
    };
    Ok(T::lit(r))
}

/// Conditional risks of every row of `data`.
pub fn oracle_risks<T: Scalar>(theta: &ParamVector<T>, data: &Dataset<T>, variant: Variant) -> Result<Vec<T>> {
    (0..data.len())
        .map(|i| conditional_risk_oracle(theta, data.row(i), variant))
        .collect()
}
