//! Penalty-level selection by sample splitting: fit on the first half over a
//! geometric grid below λ_max, score each fit by the unpenalized risk on the
//! second half.

use alloc::vec::Vec;

use ndarray::Array1;

use crate::error::{invalid, Error, Result};
use crate::glm::{empirical_risk, Dataset, LossKind};
use crate::norms::Norm;
use crate::solver::{fit_from, intercept_only, lambda_max, FitOptions};

/// {λ_max·baseᵏ : k = 1..=len}, decreasing.
pub fn geometric_grid(lambda_max: f64, base: f64, len: usize) -> Vec<f64> {
    (1..=len).map(|k| lambda_max * libm::pow(base, k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSelection {
    pub lambda: f64,
    /// Grid in decreasing order.
    pub grid: Vec<f64>,
    /// Held-out risk per grid point; `None` where the fit failed.
    pub held_out_risk: Vec<Option<f64>>,
}

/// The grid built from λ_max of the first half of `data`.
pub fn split_grid(data: &Dataset, kind: LossKind, norm: &Norm, base: f64, len: usize) -> Result<Vec<f64>> {
    if !(base > 0.0 && base < 1.0) || len == 0 {
        return Err(invalid("grid needs base in (0, 1) and at least one point"));
    }
    let (train, _) = halves(data)?;
    Ok(geometric_grid(lambda_max(&train, kind, norm)?, base, len))
}

fn halves(data: &Dataset) -> Result<(Dataset, Dataset)> {
    let half = data.n() / 2;
    if half < 2 || data.n() - half < 2 {
        return Err(invalid("sample splitting needs at least four observations"));
    }
    Ok((data.row_range(0, half)?, data.row_range(half, data.n())?))
}

/// Fits rows `0..⌊n/2⌋` at every λ of `grid` and returns the λ whose fit has
/// the smallest unpenalized risk on the remaining rows; ties go to the
/// larger λ. Fits run from large to small λ, each warm-started at the
/// previous solution.
pub fn select_lambda_split(
    data: &Dataset,
    kind: LossKind,
    norm: &Norm,
    grid: &[f64],
    opts: &FitOptions,
) -> Result<SplitSelection> {
    if grid.is_empty() {
        return Err(invalid("lambda grid is empty"));
    }
    let (train, test) = halves(data)?;
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));

    let mut start: Array1<f64> = intercept_only(&train, kind).unwrap_or_else(|_| Array1::zeros(train.p()));
    let mut held_out_risk = Vec::with_capacity(order.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, &lambda) in order.iter().enumerate() {
        let risk = match fit_from(&train, kind, norm, lambda, opts, start.view()) {
            Ok(res) => {
                let r = empirical_risk(kind, &test, res.beta_hat.view())?;
                start = res.beta_hat;
                r.is_finite().then_some(r)
            }
            Err(Error::Numeric(_)) => None,
            Err(e) => return Err(e),
        };
        if let Some(r) = risk {
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((i, r));
            }
        }
        held_out_risk.push(risk);
    }
    let (idx, _) = best.ok_or_else(|| Error::Numeric("every fit on the lambda grid failed".into()))?;
    Ok(SplitSelection { lambda: order[idx], grid: order, held_out_risk })
}
