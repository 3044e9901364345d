//! Debiased estimator b̂ = β̂ − Θ̂∇R_n(β̂), the sandwich scale V̂_α, Wald
//! statistics for linear restrictions α'β₀ = c and coordinate intervals.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use ndarray::{Array1, ArrayView1};

use crate::error::{check_len, invalid, Error, Result};
use crate::glm::{risk_gradient, scores, Dataset, LossKind};
use crate::nodewise::PrecisionEstimate;
use crate::normal;

/// V̂_α² below this is reported as [`Error::DegenerateVariance`].
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// A linear restriction α'β = c with ‖α‖₂ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionSpec {
    alpha: Array1<f64>,
    null_value: f64,
    coordinates: Vec<usize>,
}

impl RestrictionSpec {
    /// `null_value` is the hypothesised value of α'β for the `alpha` given;
    /// both are rescaled together when α is normalized.
    pub fn new(alpha: Array1<f64>, null_value: f64) -> Result<Self> {
        if alpha.iter().any(|a| !a.is_finite()) || !null_value.is_finite() {
            return Err(invalid("restriction entries must be finite"));
        }
        let norm = libm::sqrt(alpha.dot(&alpha));
        if norm == 0.0 {
            return Err(invalid("restriction direction is zero"));
        }
        let coordinates: Vec<usize> = alpha.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(i, _)| i).collect();
        if coordinates.len() >= alpha.len() {
            return Err(invalid(format!(
                "restriction touches all {} coefficients; at most p − 1 are allowed",
                alpha.len()
            )));
        }
        Ok(Self { alpha: alpha / norm, null_value: null_value / norm, coordinates })
    }

    /// H₀: β_c = v_c for every listed coordinate, encoded as the single
    /// direction with equal weights 1/√h.
    pub fn equal_weight(p: usize, coordinates: &[usize], values: &[f64]) -> Result<Self> {
        check_len(coordinates.len(), values.len())?;
        let mut alpha = Array1::zeros(p);
        for &c in coordinates {
            if c >= p {
                return Err(invalid(format!("restriction coordinate {} exceeds p = {p}", c + 1)));
            }
            if alpha[c] != 0.0 {
                return Err(invalid(format!("restriction coordinate {} repeated", c + 1)));
            }
            alpha[c] = 1.0;
        }
        Self::new(alpha, values.iter().sum())
    }

    /// H₀: β_j = value.
    pub fn coordinate(p: usize, j: usize, value: f64) -> Result<Self> {
        Self::equal_weight(p, &[j], &[value])
    }

    pub fn alpha(&self) -> ArrayView1<'_, f64> {
        self.alpha.view()
    }

    pub fn null_value(&self) -> f64 {
        self.null_value
    }

    /// Support of α.
    pub fn coordinates(&self) -> &[usize] {
        &self.coordinates
    }

    /// The same restriction with α and c negated.
    pub fn negated(&self) -> Self {
        Self { alpha: -&self.alpha, null_value: -self.null_value, coordinates: self.coordinates.clone() }
    }
}

/// Debiased coefficients b̂_j for the rows available in Θ̂.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedEstimate {
    coefficients: BTreeMap<usize, f64>,
}

impl DebiasedEstimate {
    /// An estimate from (coordinate, value) pairs computed elsewhere.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        Self { coefficients: pairs.into_iter().collect() }
    }

    pub fn get(&self, j: usize) -> Result<f64> {
        self.coefficients.get(&j).copied().ok_or(Error::MissingRow(j))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coefficients.iter().map(|(&j, &b)| (j, b))
    }

    /// α'b̂ over the restriction's support.
    pub fn project(&self, restriction: &RestrictionSpec) -> Result<f64> {
        restriction
            .coordinates
            .iter()
            .map(|&j| Ok(restriction.alpha[j] * self.get(j)?))
            .sum()
    }
}

/// b̂_j = β̂_j − Θ̂_j'∇R_n(β̂) for every row of Θ̂.
pub fn debias(
    beta_hat: ArrayView1<f64>,
    theta: &PrecisionEstimate,
    data: &Dataset,
    kind: LossKind,
) -> Result<DebiasedEstimate> {
    check_len(theta.p(), beta_hat.len())?;
    let grad = risk_gradient(kind, data, beta_hat)?;
    let coefficients = theta
        .rows()
        .map(|row| (row.row, beta_hat[row.row] - row.theta.dot(&grad)))
        .collect();
    Ok(DebiasedEstimate { coefficients })
}

/// V̂_α = √(α'Θ̂ Â Θ̂'α) with Â = (1/n)Σ X_i X_i' ρ̇(y_i, X_i'β̂)², using only
/// the rows of Θ̂ on the support of α.
pub fn variance_alpha(
    restriction: &RestrictionSpec,
    theta: &PrecisionEstimate,
    data: &Dataset,
    kind: LossKind,
    beta_hat: ArrayView1<f64>,
) -> Result<f64> {
    check_len(theta.p(), restriction.alpha.len())?;
    let mut direction = Array1::zeros(theta.p());
    for &j in &restriction.coordinates {
        direction.scaled_add(restriction.alpha[j], &theta.row(j)?.theta);
    }
    let eta = data.linear_predictor(beta_hat)?;
    let s = scores(kind, data.y(), eta.view());
    let projected = data.x().dot(&direction);
    let v2 = projected.iter().zip(s.iter()).map(|(u, s)| (u * s) * (u * s)).sum::<f64>() / data.n() as f64;
    if !(v2 >= VARIANCE_FLOOR) {
        return Err(Error::DegenerateVariance(v2));
    }
    Ok(libm::sqrt(v2))
}

/// σ̂_j = V̂_{e_j}.
pub fn coordinate_sigma(
    j: usize,
    theta: &PrecisionEstimate,
    data: &Dataset,
    kind: LossKind,
    beta_hat: ArrayView1<f64>,
) -> Result<f64> {
    variance_alpha(&RestrictionSpec::coordinate(theta.p(), j, 0.0)?, theta, data, kind, beta_hat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldTest {
    pub z: f64,
    pub p_value: f64,
}

impl WaldTest {
    /// Two-sided rejection at level δ, decided on |z| against z_{1−δ/2}.
    pub fn rejects(&self, delta: f64) -> bool {
        libm::fabs(self.z) > normal::quantile(1.0 - delta / 2.0)
    }
}

/// z = √n (α'b̂ − c)/V̂_α with p = 2(1 − Φ(|z|)).
pub fn wald_test(restriction: &RestrictionSpec, b_hat: &DebiasedEstimate, v_alpha: f64, n: usize) -> Result<WaldTest> {
    if !(v_alpha * v_alpha >= VARIANCE_FLOOR) {
        return Err(Error::DegenerateVariance(v_alpha * v_alpha));
    }
    let z = libm::sqrt(n as f64) * (b_hat.project(restriction)? - restriction.null_value) / v_alpha;
    Ok(WaldTest { z, p_value: normal::two_sided_p_value(z) })
}

/// b̂_j ± z_{1−δ/2} σ̂_j/√n.
pub fn confidence_interval(b_j: f64, sigma_j: f64, n: usize, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(sigma_j >= 0.0 && sigma_j.is_finite()) {
        return Err(invalid("sigma must be finite and non-negative"));
    }
    let half = normal::quantile(1.0 - delta / 2.0) * sigma_j / libm::sqrt(n as f64);
    Ok((b_j - half, b_j + half))
}

/// Whether `value` lies in the closed interval.
pub fn covers(interval: (f64, f64), value: f64) -> bool {
    interval.0 <= value && value <= interval.1
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateInterval {
    pub coordinate: usize,
    pub b_hat: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub restriction: RestrictionSpec,
    /// α'b̂.
    pub estimate: f64,
    pub v_alpha: f64,
    pub z: f64,
    pub p_value: f64,
    pub delta: f64,
    pub reject: bool,
    pub intervals: Vec<CoordinateInterval>,
}

/// Test of one restriction plus level-(1 − δ) intervals for every row of Θ̂.
pub fn infer(
    restriction: &RestrictionSpec,
    beta_hat: ArrayView1<f64>,
    theta: &PrecisionEstimate,
    data: &Dataset,
    kind: LossKind,
    delta: f64,
) -> Result<InferenceReport> {
    let b = debias(beta_hat, theta, data, kind)?;
    let v_alpha = variance_alpha(restriction, theta, data, kind, beta_hat)?;
    let test = wald_test(restriction, &b, v_alpha, data.n())?;
    let intervals = b
        .iter()
        .map(|(j, b_j)| {
            let sigma = coordinate_sigma(j, theta, data, kind, beta_hat)?;
            let (lower, upper) = confidence_interval(b_j, sigma, data.n(), delta)?;
            Ok(CoordinateInterval { coordinate: j, b_hat: b_j, sigma, lower, upper })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InferenceReport {
        restriction: restriction.clone(),
        estimate: b.project(restriction)?,
        v_alpha,
        z: test.z,
        p_value: test.p_value,
        delta,
        reject: test.rejects(delta),
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use ndarray::array;

    fn estimate(pairs: &[(usize, f64)]) -> DebiasedEstimate {
        DebiasedEstimate { coefficients: pairs.iter().copied().collect() }
    }

    #[test]
    fn restriction_is_normalized() {
        let r = RestrictionSpec::new(array![0.0, 3.0, 4.0, 0.0], 5.0).unwrap();
        assert!((r.alpha().dot(&r.alpha()) - 1.0).abs() < 1e-15);
        assert_eq!(r.null_value(), 1.0);
        assert_eq!(r.coordinates(), &[1, 2]);
        let eq = RestrictionSpec::equal_weight(5, &[1, 2], &[0.5, 0.5]).unwrap();
        assert!((eq.null_value() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(RestrictionSpec::new(array![1.0, 1.0], 0.0).is_err());
        assert!(RestrictionSpec::new(array![0.0, 0.0, 0.0], 0.0).is_err());
        assert!(RestrictionSpec::equal_weight(3, &[1, 1], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_statistic_at_the_null() {
        let r = RestrictionSpec::coordinate(3, 1, 0.25).unwrap();
        let t = wald_test(&r, &estimate(&[(1, 0.25)]), 1.0, 100).unwrap();
        assert_eq!(t.z, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert!(!t.rejects(0.05));
    }

    #[test]
    fn degenerate_variance_is_typed() {
        let r = RestrictionSpec::coordinate(3, 1, 0.0).unwrap();
        assert!(matches!(wald_test(&r, &estimate(&[(1, 1.0)]), 0.0, 10), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn missing_row_in_projection() {
        let r = RestrictionSpec::equal_weight(4, &[1, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(estimate(&[(1, 0.0)]).project(&r), Err(Error::MissingRow(2)));
    }

    #[test]
    fn interval_half_width() {
        let (lo, hi) = confidence_interval(0.0, 1.0, 100, 0.05).unwrap();
        assert!((hi - 0.195_996).abs() < 1e-5 && (lo + 0.195_996).abs() < 1e-5);
        let (lo, hi) = confidence_interval(2.0, 1.0, 100, 1.0 - 1e-15).unwrap();
        assert!((hi - lo).abs() < 1e-12 && (lo - 2.0).abs() < 1e-12);
        assert!(confidence_interval(0.0, 1.0, 100, 0.0).is_err());
        assert!(confidence_interval(0.0, 1.0, 100, 1.0).is_err());
    }

    #[test]
    fn negation_flips_z() {
        let r = RestrictionSpec::equal_weight(4, &[0, 3], &[0.1, -0.2]).unwrap();
        let b = estimate(&[(0, 0.7), (3, 0.4)]);
        let t = wald_test(&r, &b, 0.8, 50).unwrap();
        let u = wald_test(&r.negated(), &b, 0.8, 50).unwrap();
        assert_eq!(t.z, -u.z);
        assert_eq!(t.p_value, u.p_value);
    }
}
