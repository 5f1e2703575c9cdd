//! Worst-case subpopulation risk over a grid of test-time `α₀`.
//!
//! Three estimators share the same final step (exact CVaR over per-row
//! values): closed-form conditional risks for simulated data, row means of
//! replicated labels, and raw per-example losses (the joint, conservative
//! view).

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::datagen::{generate, oracle_risks, SimSpec, Variant};
use crate::error::{invalid, DroError, Result};
use crate::model::{losses, Dataset, LossKind, ParamVector};
use crate::risk_duals::{check_alpha, cvar_dual, row_means};
use crate::scalar::{mean, Scalar};

/// Default size of the evaluation sample for oracle sweeps; keeps the tail
/// at `α₀ = 0.05` above a thousand points.
pub const DEFAULT_ORACLE_ROWS: usize = 20_000;

/// Groups smaller than this are not scored by [`eval_group_split`].
pub const MIN_GROUP_ROWS: usize = 10;

/// Worst-case risks over a sorted `α₀` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport<T> {
    pub alphas: Vec<T>,
    pub risks: Vec<T>,
    pub method_tag: String,
    /// Plain average of the per-row values (the `α₀ = 1` risk).
    pub mean_risk: T,
}

impl<T: Scalar> RiskReport<T> {
    /// Worst-case risk of every `alpha` in `alphas` over the per-row values.
    pub fn from_values(values: &[T], alphas: &[T], method_tag: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(DroError::Empty("evaluation values"));
        }
        if alphas.is_empty() {
            return Err(DroError::Empty("alpha grid"));
        }
        for &a in alphas {
            check_alpha(a)?;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DroError::NonFinite("evaluation values"));
        }
        let mut sorted = alphas.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("alphas are finite"));
        sorted.dedup();
        let risks = sorted
            .par_iter()
            .map(|&a| cvar_dual(values, a).map(|(risk, _)| risk))
            .collect::<Result<Vec<T>>>()?;
        Ok(RiskReport {
            alphas: sorted,
            risks,
            method_tag: method_tag.into(),
            mean_risk: mean(values),
        })
    }

    /// Risk at `alpha`, if it is on the grid.
    pub fn risk_at(&self, alpha: T) -> Option<T> {
        self.alphas.iter().position(|&a| a == alpha).map(|k| self.risks[k])
    }

    /// `alpha0,risk,method` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha0,risk,method\n");
        self.append_csv_rows(&mut out);
        out
    }

    /// Appends the data rows only, for concatenating several reports.
    pub fn append_csv_rows(&self, out: &mut String) {
        for (a, r) in self.alphas.iter().zip(&self.risks) {
            let _ = writeln!(out, "{},{},{}", a, r, self.method_tag);
        }
    }
}

/// Fresh evaluation sample for [`eval_oracle`].
pub fn oracle_sample<T: Scalar>(variant: Variant, d: usize, n: usize, seed: u64) -> Result<Dataset<T>> {
    generate(&SimSpec::new(variant, n, d, seed))
}

/// CVaR of the closed-form conditional risks over `eval_data`'s covariates.
pub fn eval_oracle<T: Scalar>(
    theta: &ParamVector<T>,
    eval_data: &Dataset<T>,
    variant: Variant,
    alphas: &[T],
) -> Result<RiskReport<T>> {
    let risks = oracle_risks(theta, eval_data, variant)?;
    RiskReport::from_values(&risks, alphas, "oracle")
}

/// Plug-in estimate from replicated labels: per-row mean loss, then CVaR.
///
/// With `condition = Some(c)`, only rows whose confounder equals `c` are
/// kept, which estimates the risk conditional on `C = c`.
pub fn eval_replicates<T: Scalar>(
    theta: &ParamVector<T>,
    data: &Dataset<T>,
    kind: LossKind,
    alphas: &[T],
    condition: Option<T>,
) -> Result<RiskReport<T>> {
    let m = data.n_replicates();
    let reps = data
        .replicates()
        .ok_or_else(|| invalid("dataset", "replicate evaluation needs replicate columns"))?;
    if theta.dim() != data.dim() {
        return Err(DroError::DimensionMismatch {
            expected: data.dim(),
            got: theta.dim(),
            context: "parameters",
        });
    }
    let keep: Vec<usize> = match condition {
        None => (0..data.len()).collect(),
        Some(c) => {
            let conf = data
                .confounder()
                .ok_or_else(|| invalid("condition", "dataset has no confounder column"))?;
            let tol = T::lit(1e-9);
            let rows: Vec<usize> = (0..data.len()).filter(|&i| (conf[i] - c).abs() <= tol).collect();
            if rows.is_empty() {
                return Err(invalid("condition", format!("no rows with confounder {c}")));
            }
            rows
        }
    };
    let mut row_losses = Vec::with_capacity(keep.len() * m);
    for &i in &keep {
        let f = theta.predict(data.row(i));
        row_losses.extend(reps[i * m..(i + 1) * m].iter().map(|&y| kind.value_at(f, y)));
    }
    let values = row_means(&row_losses, m);
    let tag = match condition {
        None => "replicates".to_string(),
        Some(c) => format!("replicates_c={c}"),
    };
    RiskReport::from_values(&values, alphas, tag)
}

/// CVaR of the raw per-example losses.
pub fn eval_joint<T: Scalar>(
    theta: &ParamVector<T>,
    data: &Dataset<T>,
    kind: LossKind,
    alphas: &[T],
) -> Result<RiskReport<T>> {
    if theta.dim() != data.dim() {
        return Err(DroError::DimensionMismatch {
            expected: data.dim(),
            got: theta.dim(),
            context: "parameters",
        });
    }
    RiskReport::from_values(&losses(kind, theta, data), alphas, "joint")
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupOutcome<T> {
    /// Mean loss of the worse of the two groups, with both group means.
    Scored { worst: T, mean_zero: T, mean_one: T },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSplit<T> {
    pub column: usize,
    pub outcome: GroupOutcome<T>,
}

/// Worst-group mean loss for each binary feature column in `columns`.
pub fn eval_group_split<T: Scalar>(
    theta: &ParamVector<T>,
    data: &Dataset<T>,
    kind: LossKind,
    columns: &[usize],
) -> Result<Vec<GroupSplit<T>>> {
    if theta.dim() != data.dim() {
        return Err(DroError::DimensionMismatch {
            expected: data.dim(),
            got: theta.dim(),
            context: "parameters",
        });
    }
    let per_row = losses(kind, theta, data);
    let mut out = Vec::with_capacity(columns.len());
    for &col in columns {
        if col >= data.dim() {
            return Err(invalid("columns", format!("column {col} out of range for d = {}", data.dim())));
        }
        let (mut zero, mut one) = (Vec::new(), Vec::new());
        for (i, &l) in per_row.iter().enumerate() {
            let v = data.row(i)[col];
            if v == T::zero() {
                zero.push(l);
            } else if v == T::one() {
                one.push(l);
            } else {
                return Err(invalid(
                    "columns",
                    format!("column {col} is not binary (row {i} has value {v})"),
                ));
            }
        }
        let outcome = if zero.len() < MIN_GROUP_ROWS || one.len() < MIN_GROUP_ROWS {
            GroupOutcome::Skipped {
                reason: format!(
                    "group sizes {}/{} below the minimum of {MIN_GROUP_ROWS}",
                    zero.len(),
                    one.len()
                ),
            }
        } else {
            let (m0, m1) = (mean(&zero), mean(&one));
            GroupOutcome::Scored {
                worst: m0.max(m1),
                mean_zero: m0,
                mean_one: m1,
            }
        };
        out.push(GroupSplit { column: col, outcome });
    }
    Ok(out)
}
