mod common;

use common::{data_for, normal_vec, ols, rng};
use ndarray::{Array1, Axis};
use rand::Rng;
use structinf_core::glm::{empirical_risk, hessian_weights, risk_gradient, score_variance_matrix};
use structinf_core::nodewise::weighted_design;
use structinf_core::{Dataset, LossKind};

/// Central differences of the empirical risk, step 1e−5.
fn finite_difference_gradient(kind: LossKind, data: &Dataset, beta: &Array1<f64>) -> Array1<f64> {
    let h = 1e-5;
    (0..beta.len())
        .map(|j| {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            (empirical_risk(kind, data, up.view()).unwrap() - empirical_risk(kind, data, down.view()).unwrap())
                / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let diff = (a - b).mapv(|d| d * d).sum().sqrt();
    diff / b.mapv(|d| d * d).sum().sqrt().max(1e-8)
}

#[test]
fn gradient_matches_finite_differences() {
    for kind in [LossKind::Logistic, LossKind::Gaussian] {
        let mut rng = rng(21);
        for _ in 0..50 {
            let data = data_for(kind, &mut rng, 20, 5);
            let beta = normal_vec(&mut rng, 5) * 0.5;
            let g = risk_gradient(kind, &data, beta.view()).unwrap();
            let fd = finite_difference_gradient(kind, &data, &beta);
            assert!(relative_error(&g, &fd) <= 1e-6, "{kind:?}: {g} vs {fd}");
        }
    }
}

#[test]
fn weighted_gram_identity() {
    let mut rng = rng(22);
    for kind in [LossKind::Logistic, LossKind::Gaussian] {
        let data = data_for(kind, &mut rng, 30, 6);
        let beta = normal_vec(&mut rng, 6) * 0.3;
        let xw = weighted_design(&data, kind, beta.view()).unwrap();
        let gram = xw.gram();
        let eta = data.x().dot(&beta);
        let curv = eta.mapv(|a| structinf_core::glm::loss_derivatives(kind, 0.0, a).unwrap().rho_ddot);
        let direct = data.x().t().dot(&(&data.x() * &curv.insert_axis(Axis(1)))) / 30.0;
        assert!((&gram - &direct).iter().all(|d| d.abs() <= 1e-12));
    }
}

#[test]
fn weighted_design_special_cases() {
    let mut rng = rng(23);
    let data = data_for(LossKind::Gaussian, &mut rng, 10, 3);
    let beta = normal_vec(&mut rng, 3);
    assert_eq!(weighted_design(&data, LossKind::Gaussian, beta.view()).unwrap().matrix(), data.x());
    let data = data_for(LossKind::Logistic, &mut rng, 10, 3);
    let xw = weighted_design(&data, LossKind::Logistic, Array1::zeros(3).view()).unwrap();
    assert_eq!(xw.matrix(), data.x().mapv(|v| 0.5 * v));
}

#[test]
fn logistic_weights_bounded() {
    let mut rng = rng(24);
    for _ in 0..50 {
        let data = data_for(LossKind::Logistic, &mut rng, 25, 4);
        let beta = normal_vec(&mut rng, 4) * rng.random_range(0.1..50.0);
        let w = hessian_weights(LossKind::Logistic, &data, beta.view()).unwrap();
        assert!(w.iter().all(|&w| w > 0.0 && w <= 0.5 || w == 0.0));
        assert!(w.iter().all(|w| w.is_finite()));
    }
}

#[test]
fn score_variance_is_symmetric_psd() {
    let mut rng = rng(25);
    for kind in [LossKind::Logistic, LossKind::Gaussian] {
        for _ in 0..20 {
            let data = data_for(kind, &mut rng, 15, 6);
            let beta = normal_vec(&mut rng, 6);
            let a = score_variance_matrix(kind, &data, beta.view()).unwrap();
            assert_eq!(a, a.t());
            let eig = common::to_dmatrix(a.view()).symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= -1e-10));
        }
    }
}

#[test]
fn score_variance_at_least_squares_uses_residuals() {
    let mut rng = rng(26);
    let data = data_for(LossKind::Gaussian, &mut rng, 40, 3);
    let beta = ols(data.x(), data.y());
    let resid = &data.y() - &data.x().dot(&beta);
    let a = score_variance_matrix(LossKind::Gaussian, &data, beta.view()).unwrap();
    let mut direct = ndarray::Array2::<f64>::zeros((3, 3));
    for i in 0..40 {
        let xi = data.x().row(i).to_owned();
        for r in 0..3 {
            for c in 0..3 {
                direct[[r, c]] += xi[r] * xi[c] * resid[i] * resid[i] / 40.0;
            }
        }
    }
    assert!((&a - &direct).iter().all(|d| d.abs() <= 1e-12));
}
