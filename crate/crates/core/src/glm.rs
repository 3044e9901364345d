//! GLM losses ρ(y, a) with their derivatives in the linear predictor, and
//! the empirical quantities built from them.

use alloc::format;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_len, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// ρ(y, a) = −ya + ln(1 + eᵃ), y ∈ {0, 1}.
    Logistic,
    /// ρ(y, a) = ½(y − a)².
    Gaussian,
}

/// ρ together with its first two derivatives in `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossDerivatives {
    pub rho: f64,
    pub rho_dot: f64,
    pub rho_ddot: f64,
}

/// σ(a) = eᵃ/(1 + eᵃ) without overflow.
#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + libm::exp(-a))
    } else {
        let e = libm::exp(a);
        e / (1.0 + e)
    }
}

/// ln(1 + eᵃ) without overflow.
#[inline]
fn log1p_exp(a: f64) -> f64 {
    if a > 0.0 {
        a + libm::log1p(libm::exp(-a))
    } else {
        libm::log1p(libm::exp(a))
    }
}

impl LossKind {
    pub fn check_response(self, y: f64) -> Result<()> {
        match self {
            LossKind::Logistic if y != 0.0 && y != 1.0 => {
                Err(invalid(format!("logistic response must be 0 or 1, got {y}")))
            }
            _ if !y.is_finite() => Err(invalid(format!("response {y} is not finite"))),
            _ => Ok(()),
        }
    }

    /// ρ, ρ̇ and ρ̈ at (y, a). Validates `y`.
    pub fn derivatives(self, y: f64, a: f64) -> Result<LossDerivatives> {
        self.check_response(y)?;
        Ok(LossDerivatives {
            rho: self.rho(y, a),
            rho_dot: self.rho_dot(y, a),
            rho_ddot: self.rho_ddot(a),
        })
    }

    #[inline]
    pub(crate) fn rho(self, y: f64, a: f64) -> f64 {
        match self {
            LossKind::Logistic => log1p_exp(a) - y * a,
            LossKind::Gaussian => 0.5 * (y - a) * (y - a),
        }
    }

    #[inline]
    pub(crate) fn rho_dot(self, y: f64, a: f64) -> f64 {
        match self {
            LossKind::Logistic => sigmoid(a) - y,
            LossKind::Gaussian => a - y,
        }
    }

    #[inline]
    pub(crate) fn rho_ddot(self, a: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                // eᵃ/(1+eᵃ)² = σ(a)·σ(−a), symmetric in a
                let e = libm::exp(-libm::fabs(a));
                e / ((1.0 + e) * (1.0 + e))
            }
            LossKind::Gaussian => 1.0,
        }
    }
}

/// Response vector and design matrix. With `intercept` set, column 0 of the
/// design is all ones and stays unpenalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Array1<f64>,
    x: Array2<f64>,
    intercept: bool,
}

impl Dataset {
    /// Wraps `x` as is; `x` must not contain an intercept column.
    pub fn new(y: Array1<f64>, x: Array2<f64>) -> Result<Self> {
        Self::build(y, x, false)
    }

    /// Prepends a column of ones to `x`.
    pub fn with_intercept(y: Array1<f64>, x: ArrayView2<f64>) -> Result<Self> {
        let mut full = Array2::ones((x.nrows(), x.ncols() + 1));
        full.slice_mut(ndarray::s![.., 1..]).assign(&x);
        Self::build(y, full, true)
    }

    /// Uses `x` whose first column is already the intercept column.
    pub fn from_parts(y: Array1<f64>, x: Array2<f64>, intercept: bool) -> Result<Self> {
        if intercept && x.ncols() > 0 && x.column(0).iter().any(|&v| v != 1.0) {
            return Err(invalid("intercept column must be all ones"));
        }
        Self::build(y, x, intercept)
    }

    fn build(y: Array1<f64>, x: Array2<f64>, intercept: bool) -> Result<Self> {
        check_len(x.nrows(), y.len())?;
        if y.len() < 2 {
            return Err(invalid("at least two observations are required"));
        }
        if let Some(((i, j), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("design entry ({}, {}) is {v}", i + 1, j + 1)));
        }
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("response entry {} is {v}", i + 1)));
        }
        Ok(Self { y, x, intercept })
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Total number of coefficients, intercept included.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Number of leading unpenalized coordinates (0 or 1).
    pub fn offset(&self) -> usize {
        usize::from(self.intercept)
    }

    pub fn penalized_p(&self) -> usize {
        self.p() - self.offset()
    }

    /// The observations with the given row indices.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::build(self.y.select(Axis(0), rows), self.x.select(Axis(0), rows), self.intercept)
    }

    /// Rows `start..end`, in order.
    pub fn row_range(&self, start: usize, end: usize) -> Result<Self> {
        Self::build(
            self.y.slice(ndarray::s![start..end]).to_owned(),
            self.x.slice(ndarray::s![start..end, ..]).to_owned(),
            self.intercept,
        )
    }

    pub fn validate_for(&self, kind: LossKind) -> Result<()> {
        self.y.iter().try_for_each(|&y| kind.check_response(y))
    }

    pub(crate) fn check_beta(&self, beta: ArrayView1<f64>) -> Result<()> {
        check_len(self.p(), beta.len())
    }

    /// X β.
    pub fn linear_predictor(&self, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_beta(beta)?;
        Ok(self.x.dot(&beta))
    }
}

/// ρ, ρ̇, ρ̈ at (y, a); the free-function form of [`LossKind::derivatives`].
pub fn loss_derivatives(kind: LossKind, y: f64, a: f64) -> Result<LossDerivatives> {
    kind.derivatives(y, a)
}

/// R_n(β) = (1/n) Σ ρ(y_i, X_i'β).
pub fn empirical_risk(kind: LossKind, data: &Dataset, beta: ArrayView1<f64>) -> Result<f64> {
    let eta = data.linear_predictor(beta)?;
    Ok(risk_from_predictor(kind, data.y(), eta.view()))
}

pub(crate) fn risk_from_predictor(kind: LossKind, y: ArrayView1<f64>, eta: ArrayView1<f64>) -> f64 {
    let total: f64 = y.iter().zip(eta.iter()).map(|(&y, &a)| kind.rho(y, a)).sum();
    total / y.len() as f64
}

/// ∇R_n(β) = (1/n) Σ X_i ρ̇(y_i, X_i'β).
pub fn risk_gradient(kind: LossKind, data: &Dataset, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
    let eta = data.linear_predictor(beta)?;
    Ok(gradient_from_predictor(kind, data, eta.view()))
}

pub(crate) fn scores(kind: LossKind, y: ArrayView1<f64>, eta: ArrayView1<f64>) -> Array1<f64> {
    y.iter().zip(eta.iter()).map(|(&y, &a)| kind.rho_dot(y, a)).collect()
}

pub(crate) fn gradient_from_predictor(kind: LossKind, data: &Dataset, eta: ArrayView1<f64>) -> Array1<f64> {
    let s = scores(kind, data.y(), eta);
    let mut g = data.x.t().dot(&s);
    g /= data.n() as f64;
    g
}

/// w_i = √ρ̈(y_i, X_i'β).
pub fn hessian_weights(kind: LossKind, data: &Dataset, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
    let eta = data.linear_predictor(beta)?;
    Ok(eta.mapv(|a| libm::sqrt(kind.rho_ddot(a))))
}

/// Â = (1/n) Σ X_i X_i' ρ̇(y_i, X_i'β)².
pub fn score_variance_matrix(kind: LossKind, data: &Dataset, beta: ArrayView1<f64>) -> Result<Array2<f64>> {
    let eta = data.linear_predictor(beta)?;
    let s = scores(kind, data.y(), eta.view());
    let scaled = &data.x * &s.insert_axis(Axis(1));
    let mut a = scaled.t().dot(&scaled);
    a /= data.n() as f64;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use ndarray::array;

    #[test]
    fn logistic_at_zero() {
        let d = loss_derivatives(LossKind::Logistic, 1.0, 0.0).unwrap();
        assert!((d.rho - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(d.rho_dot, -0.5);
        assert_eq!(d.rho_ddot, 0.25);
    }

    #[test]
    fn logistic_far_tail() {
        let d = loss_derivatives(LossKind::Logistic, 0.0, 30.0).unwrap();
        assert!((d.rho_dot - 1.0).abs() < 1e-12);
        assert!((d.rho_ddot - libm::exp(-30.0)).abs() < 1e-20);
        for a in [-700.0, -300.0, 300.0, 700.0] {
            for y in [0.0, 1.0] {
                let d = loss_derivatives(LossKind::Logistic, y, a).unwrap();
                assert!(d.rho.is_finite() && d.rho_dot.is_finite() && d.rho_ddot.is_finite());
                assert!(d.rho_ddot >= 0.0 && d.rho_ddot <= 0.25);
            }
        }
    }

    #[test]
    fn gaussian_derivatives() {
        let d = loss_derivatives(LossKind::Gaussian, 2.0, 0.0).unwrap();
        assert_eq!((d.rho, d.rho_dot, d.rho_ddot), (2.0, -2.0, 1.0));
    }

    #[test]
    fn logistic_rejects_non_binary_response() {
        assert!(loss_derivatives(LossKind::Logistic, 0.5, 0.0).is_err());
        let data = Dataset::new(array![0.0, 2.0], Array2::eye(2)).unwrap();
        assert!(data.validate_for(LossKind::Logistic).is_err());
        assert!(data.validate_for(LossKind::Gaussian).is_ok());
    }

    #[test]
    fn gaussian_identity_design() {
        let data = Dataset::new(array![1.0, 2.0], Array2::eye(2)).unwrap();
        let zero = Array1::zeros(2);
        assert_eq!(empirical_risk(LossKind::Gaussian, &data, zero.view()).unwrap(), 1.25);
        assert_eq!(risk_gradient(LossKind::Gaussian, &data, zero.view()).unwrap(), array![-0.5, -1.0]);
        assert_eq!(hessian_weights(LossKind::Gaussian, &data, array![3.0, 1.0].view()).unwrap(), array![1.0, 1.0]);
    }

    #[test]
    fn logistic_at_zero_coefficients() {
        let x = array![[1.0, 0.3], [1.0, -2.0], [1.0, 0.7], [1.0, 5.0]];
        let data = Dataset::new(array![1.0, 0.0, 0.0, 1.0], x).unwrap();
        let zero = Array1::zeros(2);
        let r = empirical_risk(LossKind::Logistic, &data, zero.view()).unwrap();
        assert!((r - core::f64::consts::LN_2).abs() < 1e-15);
        let w = hessian_weights(LossKind::Logistic, &data, zero.view()).unwrap();
        assert!(w.iter().all(|&w| w == 0.5));
    }

    #[test]
    fn balanced_intercept_only_gradient_vanishes() {
        let data = Dataset::with_intercept(array![1.0, 0.0, 1.0, 0.0], Array2::zeros((4, 0)).view()).unwrap();
        let g = risk_gradient(LossKind::Logistic, &data, array![0.0].view()).unwrap();
        assert_eq!(g, array![0.0]);
    }

    #[test]
    fn single_outer_product() {
        // ρ̇ = a − y = 3 with a = 0, y = −3
        let data = Dataset::new(array![-3.0, 0.0], array![[1.0, 2.0], [0.0, 0.0]]).unwrap();
        let a = score_variance_matrix(LossKind::Gaussian, &data, array![0.0, 0.0].view()).unwrap();
        // the zero row contributes nothing; n = 2 halves the single outer product
        assert_eq!(a * 2.0, array![[9.0, 18.0], [18.0, 36.0]]);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(array![1.0], array![[1.0]]).is_err());
        assert!(Dataset::new(array![1.0, 2.0], array![[1.0], [f64::NAN]]).is_err());
        assert!(Dataset::new(array![1.0, 2.0, 3.0], array![[1.0], [2.0]]).is_err());
        assert!(Dataset::from_parts(array![1.0, 2.0], array![[1.0, 2.0], [0.5, 1.0]], true).is_err());
        let d = Dataset::with_intercept(array![1.0, 2.0], array![[4.0], [5.0]].view()).unwrap();
        assert_eq!(d.x().column(0).to_vec(), vec![1.0, 1.0]);
        assert_eq!((d.p(), d.penalized_p(), d.offset()), (2, 1, 1));
    }
}
