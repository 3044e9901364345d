//! Feasible weighted nodewise regression: each column of the weighted
//! design X_β̂ = W_β̂ X is regressed on the others under a weak-norm penalty,
//! and the fitted coefficients become one row of Θ̂, an approximate inverse
//! of the singular Hessian Σ̂_β̂ = X_β̂'X_β̂/n.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::glm::{hessian_weights, Dataset, LossKind};
use crate::norms::Norm;
use crate::solver::{fit, fit_from, FitOptions};

/// Slack added to λ before dividing by τ̂² in the approximate-inverse
/// certificate.
pub const CERTIFICATE_SLACK: f64 = 1e-8;

/// The weighted design X_β̂ = W_β̂ X.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDesign(Array2<f64>);

impl WeightedDesign {
    pub fn from_matrix(x: Array2<f64>) -> Self {
        Self(x)
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    /// Σ̂_β̂ = X_β̂'X_β̂/n.
    pub fn gram(&self) -> Array2<f64> {
        self.0.t().dot(&self.0) / self.n() as f64
    }

    fn split(&self, j: usize, rows: Option<&[usize]>) -> (Array1<f64>, Array2<f64>) {
        let others: Vec<usize> = (0..self.p()).filter(|&k| k != j).collect();
        match rows {
            None => (self.0.column(j).to_owned(), self.0.select(Axis(1), &others)),
            Some(rows) => {
                let sub = self.0.select(Axis(0), rows);
                (sub.column(j).to_owned(), sub.select(Axis(1), &others))
            }
        }
    }
}

/// Row i of X scaled by w_i = √ρ̈(y_i, X_i'β̂).
pub fn weighted_design(data: &Dataset, kind: LossKind, beta_hat: ndarray::ArrayView1<f64>) -> Result<WeightedDesign> {
    let w = hessian_weights(kind, data, beta_hat)?;
    Ok(WeightedDesign(&data.x() * &w.insert_axis(Axis(1))))
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodewiseGrid {
    Explicit(Vec<f64>),
    /// `len` log-spaced values from the row's λ_max down to `ratio`·λ_max.
    LogSpaced { len: usize, ratio: f64 },
}

impl Default for NodewiseGrid {
    fn default() -> Self {
        NodewiseGrid::LogSpaced { len: 20, ratio: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaRule {
    /// One λ shared by every row.
    Fixed(f64),
    /// Per-row K-fold cross-validation.
    CrossValidated { folds: usize, grid: NodewiseGrid },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::CrossValidated { folds: 5, grid: NodewiseGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseConfig {
    /// 0-based coefficient indices H whose rows of Θ̂ are estimated.
    pub target_rows: Vec<usize>,
    pub lambda_rule: LambdaRule,
    pub tau_floor: f64,
    /// Seeds the fold shuffle.
    pub seed: u64,
    /// Options for the final per-row fit, which feeds the certificate.
    pub fit: FitOptions,
    /// Options for the fits inside cross-validation.
    pub cv_fit: FitOptions,
}

impl NodewiseConfig {
    pub fn new(target_rows: Vec<usize>) -> Self {
        Self {
            target_rows,
            lambda_rule: LambdaRule::default(),
            tau_floor: 1e-8,
            seed: 0,
            fit: FitOptions { max_iter: 50_000, tol: 1e-10, ..FitOptions::default() },
            cv_fit: FitOptions::default(),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.target_rows.is_empty() {
            return Err(invalid("nodewise target rows must be non-empty"));
        }
        if let Some(&j) = self.target_rows.iter().find(|&&j| j >= p) {
            return Err(invalid(format!("nodewise row {} exceeds p = {p}", j + 1)));
        }
        if !(self.tau_floor > 0.0) {
            return Err(invalid("tau floor must be positive"));
        }
        match &self.lambda_rule {
            LambdaRule::Fixed(l) if !(*l >= 0.0 && l.is_finite()) => {
                return Err(invalid("nodewise lambda must be finite and non-negative"))
            }
            LambdaRule::CrossValidated { folds, grid } => {
                if *folds < 2 {
                    return Err(invalid("cross-validation needs at least two folds"));
                }
                match grid {
                    NodewiseGrid::Explicit(g) if g.is_empty() => return Err(invalid("nodewise grid is empty")),
                    NodewiseGrid::Explicit(g) if g.iter().any(|l| !(*l >= 0.0)) => {
                        return Err(invalid("nodewise grid values must be non-negative"))
                    }
                    NodewiseGrid::LogSpaced { len, ratio } if *len == 0 || !(*ratio > 0.0 && *ratio <= 1.0) => {
                        return Err(invalid("log-spaced grid needs len ≥ 1 and ratio in (0, 1]"))
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        self.fit.validate()?;
        self.cv_fit.validate()
    }
}

/// One fitted row of Θ̂.
#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseRow {
    pub row: usize,
    /// Θ̂_j, length p.
    pub theta: Array1<f64>,
    /// γ̂_j, length p − 1, in column order with j skipped.
    pub gamma: Array1<f64>,
    pub tau_sq: f64,
    pub lambda: f64,
    /// Ω̲_*(Θ̂_j'Σ̂_β̂ − e_j').
    pub inverse_residual: f64,
    pub tau_floored: bool,
    pub converged: bool,
}

impl NodewiseRow {
    /// The approximate-inverse bound (λ + slack)/τ̂². The slack absorbs the
    /// solver's stationarity tolerance, which the division by τ̂² magnifies.
    pub fn certificate_bound(&self) -> f64 {
        (self.lambda + CERTIFICATE_SLACK) / self.tau_sq
    }
}

/// Regresses column `j` of the weighted design on the rest:
/// γ̂_j = argmin ½‖X_j − X_{−j}γ‖²_n + λ·Ω̲(γ), which is the
/// ‖·‖²_n + 2λΩ̲ problem rescaled, then τ̂_j² = X_j'(X_j − X_{−j}γ̂_j)/n.
///
/// `weak` is Ω̲ over all p columns; column `j` is dropped from it here.
pub fn nodewise_fit(
    xw: &WeightedDesign,
    j: usize,
    lambda: f64,
    weak: &Norm,
    tau_floor: f64,
    opts: &FitOptions,
) -> Result<NodewiseRow> {
    let p = xw.p();
    if j >= p {
        return Err(invalid(format!("row {} exceeds p = {p}", j + 1)));
    }
    crate::error::check_len(p, weak.p())?;
    let (target, others) = xw.split(j, None);
    let n = xw.n() as f64;
    let data = Dataset::new(target.clone(), others)?;
    let res = fit(&data, LossKind::Gaussian, &weak.without(j), lambda, opts)?;
    let gamma = res.beta_hat;

    let residual = &target - &data.x().dot(&gamma);
    let raw_tau = target.dot(&residual) / n;
    let tau_floored = !(raw_tau >= tau_floor);
    let tau_sq = if tau_floored { tau_floor } else { raw_tau };

    let mut theta = Array1::zeros(p);
    theta[j] = 1.0 / tau_sq;
    for (k, &g) in (0..p).filter(|&k| k != j).zip(gamma.iter()) {
        theta[k] = -g / tau_sq;
    }

    let fitted = xw.0.dot(&theta);
    let mut gap = xw.0.t().dot(&fitted) / n;
    gap[j] -= 1.0;
    let inverse_residual = weak.dual_unchecked(gap.view());

    Ok(NodewiseRow {
        row: j,
        theta,
        gamma,
        tau_sq,
        lambda,
        inverse_residual,
        tau_floored,
        converged: res.converged,
    })
}

/// λ_max for the nodewise regression of column `j`.
pub fn nodewise_lambda_max(xw: &WeightedDesign, j: usize, weak: &Norm) -> Result<f64> {
    if j >= xw.p() {
        return Err(invalid(format!("row {} exceeds p = {}", j + 1, xw.p())));
    }
    let (target, others) = xw.split(j, None);
    let score = others.t().dot(&target) / xw.n() as f64;
    weak.without(j).dual(score.view())
}

/// The log-spaced grid from λ_max down to `ratio`·λ_max, in decreasing order.
pub fn log_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return alloc::vec![lambda_max];
    }
    (0..len)
        .map(|k| lambda_max * libm::pow(ratio, k as f64 / (len - 1) as f64))
        .collect()
}

/// Contiguous folds over a seeded shuffle of `0..n`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(invalid("cross-validation needs at least two folds"));
    }
    if n < folds {
        return Err(invalid(format!("{n} observations cannot fill {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..folds).map(|k| order[k * n / folds..(k + 1) * n / folds].to_vec()).collect())
}

/// K-fold choice of λ for row `j`: minimizes the mean over folds of the
/// held-out squared error, breaking ties toward the larger λ.
pub fn cv_select_lambda(
    xw: &WeightedDesign,
    j: usize,
    folds: &[Vec<usize>],
    grid: &[f64],
    weak: &Norm,
    opts: &FitOptions,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("nodewise grid is empty"));
    }
    if j >= xw.p() {
        return Err(invalid(format!("row {} exceeds p = {}", j + 1, xw.p())));
    }
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    if order.len() == 1 {
        return Ok(order[0]);
    }
    let norm = weak.without(j);
    let n = xw.n();
    let mut in_fold = alloc::vec![usize::MAX; n];
    for (k, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_fold[i] = k;
        }
    }

    let mut mse = alloc::vec![0.0; order.len()];
    for (k, fold) in folds.iter().enumerate() {
        if fold.is_empty() {
            return Err(invalid(format!("fold {} is empty", k + 1)));
        }
        let train: Vec<usize> = (0..n).filter(|&i| in_fold[i] != k).collect();
        let (y_train, x_train) = xw.split(j, Some(&train));
        let (y_test, x_test) = xw.split(j, Some(fold));
        let data = Dataset::new(y_train, x_train)?;
        let mut start = Array1::zeros(xw.p() - 1);
        for (slot, &lambda) in mse.iter_mut().zip(&order) {
            let res = fit_from(&data, LossKind::Gaussian, &norm, lambda, opts, start.view())?;
            let err = &y_test - &x_test.dot(&res.beta_hat);
            *slot += err.dot(&err) / fold.len() as f64 / folds.len() as f64;
            start = res.beta_hat;
        }
    }

    let mut best = 0;
    for (i, &e) in mse.iter().enumerate() {
        if e < mse[best] {
            best = i;
        }
    }
    if !mse[best].is_finite() {
        return Err(Error::Numeric(format!("cross-validation error for row {} is not finite", j + 1)));
    }
    Ok(order[best])
}

/// Picks λ for row `j` according to the configured rule and fits it.
pub fn fit_row(xw: &WeightedDesign, j: usize, weak: &Norm, config: &NodewiseConfig) -> Result<NodewiseRow> {
    let lambda = match &config.lambda_rule {
        LambdaRule::Fixed(l) => *l,
        LambdaRule::CrossValidated { folds, grid } => {
            let folds = fold_assignment(xw.n(), *folds, config.seed)?;
            let grid = match grid {
                NodewiseGrid::Explicit(g) => g.clone(),
                NodewiseGrid::LogSpaced { len, ratio } => log_grid(nodewise_lambda_max(xw, j, weak)?, *len, *ratio),
            };
            cv_select_lambda(xw, j, &folds, &grid, weak, &config.cv_fit)?
        }
    };
    nodewise_fit(xw, j, lambda, weak, config.tau_floor, &config.fit)
}

/// Rows of Θ̂ for a target set H.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    p: usize,
    rows: BTreeMap<usize, NodewiseRow>,
}

impl PrecisionEstimate {
    /// Wraps rows of a known Θ (for example an exact inverse). The nodewise
    /// quantities are derived from the rows: τ² = 1/Θ_jj, γ = −Θ_{j,−j}τ²,
    /// λ = 0; the certificate residual is not available and is NaN.
    pub fn from_dense(theta: ArrayView2<f64>, rows: &[usize]) -> Result<Self> {
        let p = theta.ncols();
        let mut map = BTreeMap::new();
        for &j in rows {
            if j >= theta.nrows() || j >= p {
                return Err(invalid(format!("row {} is outside the matrix", j + 1)));
            }
            let row = theta.row(j).to_owned();
            if !(row[j] > 0.0) {
                return Err(invalid(format!("diagonal entry {} must be positive", j + 1)));
            }
            let tau_sq = 1.0 / row[j];
            let gamma = (0..p).filter(|&k| k != j).map(|k| -row[k] * tau_sq).collect();
            map.insert(
                j,
                NodewiseRow {
                    row: j,
                    theta: row,
                    gamma,
                    tau_sq,
                    lambda: 0.0,
                    inverse_residual: f64::NAN,
                    tau_floored: false,
                    converged: true,
                },
            );
        }
        Ok(Self { p, rows: map })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, j: usize) -> Result<&NodewiseRow> {
        self.rows.get(&j).ok_or(Error::MissingRow(j))
    }

    pub fn rows(&self) -> impl Iterator<Item = &NodewiseRow> {
        self.rows.values()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.rows.contains_key(&j)
    }

    /// Rows whose τ̂² hit the floor.
    pub fn floored_rows(&self) -> usize {
        self.rows.values().filter(|r| r.tau_floored).count()
    }

    pub fn all_converged(&self) -> bool {
        self.rows.values().all(|r| r.converged)
    }
}

/// Collects fitted rows into a [`PrecisionEstimate`], checking the
/// approximate-inverse certificate Ω̲_*(Θ̂_j'Σ̂ − e_j') ≤ λ_j/τ̂_j² + 1e−8
/// on every row.
pub fn assemble_theta(rows: Vec<NodewiseRow>) -> Result<PrecisionEstimate> {
    let p = rows.first().map(|r| r.theta.len()).ok_or_else(|| invalid("no nodewise rows to assemble"))?;
    let mut map = BTreeMap::new();
    for row in rows {
        crate::error::check_len(p, row.theta.len())?;
        let bound = row.certificate_bound();
        if !(row.inverse_residual <= bound) {
            return Err(Error::Certificate { row: row.row, residual: row.inverse_residual, bound });
        }
        if map.insert(row.row, row).is_some() {
            return Err(invalid("a nodewise row was supplied twice"));
        }
    }
    Ok(PrecisionEstimate { p, rows: map })
}

/// Fits every target row in index order and assembles Θ̂.
pub fn estimate_precision(xw: &WeightedDesign, weak: &Norm, config: &NodewiseConfig) -> Result<PrecisionEstimate> {
    config.validate(xw.p())?;
    let mut targets = config.target_rows.clone();
    targets.sort_unstable();
    targets.dedup();
    let rows = targets
        .into_iter()
        .map(|j| fit_row(xw, j, weak, config))
        .collect::<Result<Vec<_>>>()?;
    assemble_theta(rows)
}
