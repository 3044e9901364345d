//! Accelerated proximal gradient (FISTA) for min_β R_n(β) + λ·Ω(β), with
//! backtracking, adaptive restart and a prox fixed-point KKT certificate.

use alloc::format;

use ndarray::{s, Array1, ArrayView1};

use crate::error::{check_len, invalid, Error, Result};
use crate::glm::{gradient_from_predictor, risk_from_predictor, Dataset, LossKind};
use crate::norms::Norm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Target for the scaled prox fixed-point residual.
    pub tol: f64,
    /// Step shrink factor on a failed sufficient-decrease test, in (0, 1).
    pub backtrack: f64,
    pub initial_step: f64,
    /// Gradient-based momentum restart.
    pub restart: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 5000, tol: 1e-7, backtrack: 0.5, initial_step: 1.0, restart: true }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(invalid("backtracking factor must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(invalid("initial step must be positive and finite"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_hat: Array1<f64>,
    pub lambda: f64,
    pub iterations: usize,
    /// ‖β̂ − prox(β̂ − s∇R_n(β̂), sλ)‖∞ / s at the final step size s.
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
    /// Final step size accepted by the line search.
    pub step: f64,
}

struct Problem<'a> {
    kind: LossKind,
    data: &'a Dataset,
    norm: &'a Norm,
    lambda: f64,
    offset: usize,
}

impl Problem<'_> {
    fn penalty(&self, beta: &Array1<f64>) -> f64 {
        self.lambda * self.norm.value_unchecked(beta.slice(s![self.offset..]))
    }

    fn prox(&self, v: &mut Array1<f64>, step: f64) {
        self.norm.prox_in_place(v.slice_mut(s![self.offset..]), step * self.lambda);
    }

    fn risk(&self, eta: &Array1<f64>) -> f64 {
        risk_from_predictor(self.kind, self.data.y(), eta.view())
    }

    fn gradient(&self, eta: &Array1<f64>) -> Array1<f64> {
        gradient_from_predictor(self.kind, self.data, eta.view())
    }

    fn predictor(&self, beta: &Array1<f64>) -> Array1<f64> {
        self.data.x().dot(beta)
    }

    fn kkt_residual(&self, beta: &Array1<f64>, eta: &Array1<f64>, step: f64) -> f64 {
        let grad = self.gradient(eta);
        let mut p = beta - &(&grad * step);
        self.prox(&mut p, step);
        max_abs_diff(beta, &p) / step
    }
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn check_problem(data: &Dataset, kind: LossKind, norm: &Norm, lambda: f64, opts: &FitOptions) -> Result<()> {
    opts.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    check_len(data.penalized_p(), norm.p())?;
    data.validate_for(kind)
}

/// R_n(β) + λ·Ω(β) with the intercept, if any, left out of Ω.
pub fn objective(data: &Dataset, kind: LossKind, norm: &Norm, lambda: f64, beta: ArrayView1<f64>) -> Result<f64> {
    check_len(data.penalized_p(), norm.p())?;
    let eta = data.linear_predictor(beta)?;
    Ok(risk_from_predictor(kind, data.y(), eta.view())
        + lambda * norm.value_unchecked(beta.slice(s![data.offset()..])))
}

/// Unpenalized fit over the unpenalized coordinates only: the intercept-only
/// model, or the zero vector when there is no intercept.
pub fn intercept_only(data: &Dataset, kind: LossKind) -> Result<Array1<f64>> {
    data.validate_for(kind)?;
    let mut beta = Array1::zeros(data.p());
    if data.has_intercept() {
        let mean = data.y().mean().unwrap_or(0.0);
        beta[0] = match kind {
            LossKind::Gaussian => mean,
            LossKind::Logistic => {
                if mean <= 0.0 || mean >= 1.0 {
                    return Err(invalid("all responses are identical; the intercept-only logistic fit diverges"));
                }
                libm::log(mean / (1.0 - mean))
            }
        };
    }
    Ok(beta)
}

/// Smallest λ at which every penalized coefficient is zero:
/// Ω_*(∇R_n(β̃)) over the penalized coordinates, β̃ = [`intercept_only`].
pub fn lambda_max(data: &Dataset, kind: LossKind, norm: &Norm) -> Result<f64> {
    check_len(data.penalized_p(), norm.p())?;
    let start = intercept_only(data, kind)?;
    let grad = crate::glm::risk_gradient(kind, data, start.view())?;
    Ok(norm.dual_unchecked(grad.slice(s![data.offset()..])))
}

/// Fits from the intercept-only solution (zero when that diverges).
pub fn fit(data: &Dataset, kind: LossKind, norm: &Norm, lambda: f64, opts: &FitOptions) -> Result<FitResult> {
    check_problem(data, kind, norm, lambda, opts)?;
    let init = intercept_only(data, kind).unwrap_or_else(|_| Array1::zeros(data.p()));
    run(data, kind, norm, lambda, opts, init)
}

/// Fits from a caller-supplied starting point.
pub fn fit_from(
    data: &Dataset,
    kind: LossKind,
    norm: &Norm,
    lambda: f64,
    opts: &FitOptions,
    init: ArrayView1<f64>,
) -> Result<FitResult> {
    check_problem(data, kind, norm, lambda, opts)?;
    check_len(data.p(), init.len())?;
    run(data, kind, norm, lambda, opts, init.to_owned())
}

fn run(
    data: &Dataset,
    kind: LossKind,
    norm: &Norm,
    lambda: f64,
    opts: &FitOptions,
    init: Array1<f64>,
) -> Result<FitResult> {
    let prob = Problem { kind, data, norm, lambda, offset: data.offset() };

    let mut x = init;
    let mut eta_x = prob.predictor(&x);
    let mut fx = prob.risk(&eta_x) + prob.penalty(&x);
    if !fx.is_finite() {
        return Err(Error::Numeric(format!("objective is {fx} at the starting point")));
    }
    let mut y = x.clone();
    let mut eta_y = eta_x.clone();
    let mut momentum = 1.0;
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let risk_y = prob.risk(&eta_y);
        let grad_y = prob.gradient(&eta_y);
        let slack = 16.0 * f64::EPSILON * risk_y.abs().max(1.0);

        let (z, eta_z, risk_z) = loop {
            let mut z = &y - &(&grad_y * step);
            prob.prox(&mut z, step);
            let eta_z = prob.predictor(&z);
            let risk_z = prob.risk(&eta_z);
            let d = &z - &y;
            let model = risk_y + grad_y.dot(&d) + d.dot(&d) / (2.0 * step);
            if risk_z <= model + slack {
                break (z, eta_z, risk_z);
            }
            step *= opts.backtrack;
            if step < 1e-30 {
                return Err(Error::Numeric("line search step underflow".into()));
            }
        };

        let fz = risk_z + prob.penalty(&z);
        if fz.is_nan() {
            return Err(Error::Numeric(format!("objective became NaN at iteration {iterations}")));
        }
        // increases at the rounding level of the objective are not real
        if fz > fx + 16.0 * f64::EPSILON * fx.abs().max(1.0) {
            if momentum > 1.0 {
                // drop the momentum and redo from the last accepted point
                y.assign(&x);
                eta_y.assign(&eta_x);
                momentum = 1.0;
                continue;
            }
            // a plain prox-gradient step failed to descend: rounding floor
            stalled = true;
            break;
        }

        let mapping = max_abs_diff(&z, &y) / step;
        let restart = opts.restart && (&y - &z).dot(&(&z - &x)) > 0.0;
        let next = if restart { 1.0 } else { (1.0 + libm::sqrt(1.0 + 4.0 * momentum * momentum)) / 2.0 };
        let beta = if restart { 0.0 } else { (momentum - 1.0) / next };
        y = &z + &((&z - &x) * beta);
        eta_y = &eta_z + &((&eta_z - &eta_x) * beta);
        x = z;
        eta_x = eta_z;
        fx = fz;
        momentum = next;

        if mapping <= opts.tol && prob.kkt_residual(&x, &eta_x, step) <= opts.tol {
            converged = true;
            break;
        }
    }

    let kkt_residual = prob.kkt_residual(&x, &eta_x, step);
    if stalled {
        converged = kkt_residual <= 10.0 * opts.tol;
    }
    Ok(FitResult { beta_hat: x, lambda, iterations, kkt_residual, objective: fx, converged, step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::norms::GroupPartition;
    use ndarray::{array, Array2};

    #[test]
    fn lambda_max_gaussian_l1() {
        // (1/n) X'y = (0.5, 1)
        let data = Dataset::new(array![1.0, 2.0], Array2::eye(2)).unwrap();
        let lmax = lambda_max(&data, LossKind::Gaussian, &Norm::L1 { p: 2 }).unwrap();
        assert_eq!(lmax, 1.0);
        let fit = fit(&data, LossKind::Gaussian, &Norm::L1 { p: 2 }, 1.0 + 1e-6, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn lambda_max_group_formula() {
        let x = array![[1.0, 0.0, 2.0], [0.0, 1.0, -1.0], [1.0, 1.0, 0.0], [2.0, 0.0, 1.0]];
        let data = Dataset::new(array![1.0, -1.0, 0.5, 2.0], x).unwrap();
        let part = GroupPartition::contiguous(&[2, 1]).unwrap();
        let g = crate::glm::risk_gradient(LossKind::Gaussian, &data, Array1::zeros(3).view()).unwrap();
        let expect = ((g[0] * g[0] + g[1] * g[1]).sqrt() / 2f64.sqrt()).max(g[2].abs());
        let lmax = lambda_max(&data, LossKind::Gaussian, &Norm::WeightedGroupLasso(part)).unwrap();
        assert!((lmax - expect).abs() < 1e-15);
    }

    #[test]
    fn identical_logistic_responses_are_rejected() {
        let data = Dataset::with_intercept(array![1.0, 1.0, 1.0], array![[0.1], [0.2], [0.3]].view()).unwrap();
        assert!(lambda_max(&data, LossKind::Logistic, &Norm::L1 { p: 1 }).is_err());
    }

    #[test]
    fn option_validation() {
        let bad = FitOptions { backtrack: 1.0, ..FitOptions::default() };
        assert!(bad.validate().is_err());
        let bad = FitOptions { tol: 0.0, ..FitOptions::default() };
        assert!(bad.validate().is_err());
        let data = Dataset::new(array![1.0, 2.0], Array2::eye(2)).unwrap();
        assert!(fit(&data, LossKind::Gaussian, &Norm::L1 { p: 2 }, -1.0, &FitOptions::default()).is_err());
        assert!(fit(&data, LossKind::Gaussian, &Norm::L1 { p: 3 }, 1.0, &FitOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let x = array![[1.0, 0.3], [0.2, 1.0], [0.5, 0.5], [0.9, -0.4]];
        let data = Dataset::new(array![1.0, 2.0, -1.0, 0.5], x).unwrap();
        let opts = FitOptions { max_iter: 1, ..FitOptions::default() };
        let res = fit(&data, LossKind::Gaussian, &Norm::L1 { p: 2 }, 0.01, &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
    }
}
