mod common;

use common::{inverse, normal_matrix, normal_vec, ols, rng};
use ndarray::Array1;
use rand::Rng;
use structinf_core::inference::{
    confidence_interval, coordinate_sigma, covers, debias, infer, variance_alpha, wald_test, RestrictionSpec,
};
use structinf_core::nodewise::{estimate_precision, weighted_design, LambdaRule, NodewiseConfig, PrecisionEstimate};
use structinf_core::solver::{fit, FitOptions};
use structinf_core::{Dataset, LossKind, Norm};

fn gaussian(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = rng(seed);
    let x = normal_matrix(&mut rng, n, p);
    let mut beta = Array1::zeros(p);
    beta[0] = 1.0;
    beta[2] = -0.5;
    let y = x.dot(&beta) + normal_vec(&mut rng, n);
    Dataset::new(y, x).unwrap()
}

fn exact_theta(data: &Dataset) -> PrecisionEstimate {
    let gram = data.x().t().dot(&data.x()) / data.n() as f64;
    let inv = inverse(gram.view());
    PrecisionEstimate::from_dense(inv.view(), &(0..data.p()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn exact_inverse_debiasing_is_least_squares_from_any_start() {
    let data = gaussian(51, 40, 6);
    let theta = exact_theta(&data);
    let oracle = ols(data.x(), data.y());
    let mut rng = rng(52);
    let mut first: Option<Vec<f64>> = None;
    for _ in 0..10 {
        let start = normal_vec(&mut rng, 6) * 3.0;
        let b = debias(start.view(), &theta, &data, LossKind::Gaussian).unwrap();
        let values: Vec<f64> = b.iter().map(|(_, v)| v).collect();
        for (j, v) in b.iter() {
            assert!((v - oracle[j]).abs() <= 1e-10);
        }
        if let Some(prev) = &first {
            for (a, b) in prev.iter().zip(&values) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
        first = Some(values);
    }
}

#[test]
fn zero_score_leaves_the_estimate_unchanged() {
    let data = gaussian(53, 30, 4);
    let beta = ols(data.x(), data.y());
    let b = debias(beta.view(), &exact_theta(&data), &data, LossKind::Gaussian).unwrap();
    for (j, v) in b.iter() {
        assert!((v - beta[j]).abs() <= 1e-12);
    }
}

#[test]
fn logistic_debiasing_matches_the_explicit_formula() {
    let mut rng = rng(54);
    let data = common::logistic_data(&mut rng, 60, 5, true);
    let res = fit(&data, LossKind::Logistic, &Norm::L1 { p: 5 }, 0.02, &FitOptions::default()).unwrap();
    let xw = weighted_design(&data, LossKind::Logistic, res.beta_hat.view()).unwrap();
    let mut cfg = NodewiseConfig::new(vec![1, 2]);
    cfg.lambda_rule = LambdaRule::Fixed(0.01);
    let theta = estimate_precision(&xw, &Norm::L1 { p: 6 }, &cfg).unwrap();
    let b = debias(res.beta_hat.view(), &theta, &data, LossKind::Logistic).unwrap();
    let eta = data.x().dot(&res.beta_hat);
    let mut score = Array1::<f64>::zeros(6);
    for i in 0..60 {
        let prob = eta[i].exp() / (1.0 + eta[i].exp());
        score = score + &(data.x().row(i).to_owned() * (-data.y()[i] + prob));
    }
    score /= 60.0;
    for j in [1, 2] {
        let direct = res.beta_hat[j] - theta.row(j).unwrap().theta.dot(&score);
        assert!((b.get(j).unwrap() - direct).abs() <= 1e-12);
    }
}

#[test]
fn sigma_is_near_one_for_unit_noise() {
    let mut total = 0.0;
    let reps = 200;
    for rep in 0..reps {
        let data = gaussian(1000 + rep, 500, 5);
        let res = fit(&data, LossKind::Gaussian, &Norm::L1 { p: 5 }, 0.01, &FitOptions::default()).unwrap();
        let xw = weighted_design(&data, LossKind::Gaussian, res.beta_hat.view()).unwrap();
        let mut cfg = NodewiseConfig::new(vec![1]);
        cfg.seed = rep;
        let theta = estimate_precision(&xw, &Norm::L1 { p: 5 }, &cfg).unwrap();
        let sigma = coordinate_sigma(1, &theta, &data, LossKind::Gaussian, res.beta_hat.view()).unwrap();
        total += sigma;
    }
    let mean = total / reps as f64;
    assert!((mean - 1.0).abs() <= 0.15, "mean sigma {mean}");
}

#[test]
fn extra_rows_leave_the_variance_bit_identical() {
    let data = gaussian(55, 80, 6);
    let res = fit(&data, LossKind::Gaussian, &Norm::L1 { p: 6 }, 0.05, &FitOptions::default()).unwrap();
    let xw = weighted_design(&data, LossKind::Gaussian, res.beta_hat.view()).unwrap();
    let mut small = NodewiseConfig::new(vec![1, 2]);
    small.lambda_rule = LambdaRule::Fixed(0.02);
    let mut large = small.clone();
    large.target_rows = vec![0, 1, 2, 4, 5];
    let a = estimate_precision(&xw, &Norm::L1 { p: 6 }, &small).unwrap();
    let b = estimate_precision(&xw, &Norm::L1 { p: 6 }, &large).unwrap();
    let alpha = ndarray::array![0.0, 0.6, -0.8, 0.0, 0.0, 0.0];
    let r = RestrictionSpec::new(alpha, 0.0).unwrap();
    let va = variance_alpha(&r, &a, &data, LossKind::Gaussian, res.beta_hat.view()).unwrap();
    let vb = variance_alpha(&r, &b, &data, LossKind::Gaussian, res.beta_hat.view()).unwrap();
    assert_eq!(va.to_bits(), vb.to_bits());
    // a coordinate with no row is an error
    let r = RestrictionSpec::coordinate(6, 3, 0.0).unwrap();
    assert!(variance_alpha(&r, &a, &data, LossKind::Gaussian, res.beta_hat.view()).is_err());
}

#[test]
fn interval_and_test_agree() {
    let mut rng = rng(56);
    let data = gaussian(57, 100, 5);
    let res = fit(&data, LossKind::Gaussian, &Norm::L1 { p: 5 }, 0.05, &FitOptions::default()).unwrap();
    let xw = weighted_design(&data, LossKind::Gaussian, res.beta_hat.view()).unwrap();
    let theta = estimate_precision(&xw, &Norm::L1 { p: 5 }, &NodewiseConfig::new(vec![0, 1, 2])).unwrap();
    let b = debias(res.beta_hat.view(), &theta, &data, LossKind::Gaussian).unwrap();
    for _ in 0..2000 {
        let j = rng.random_range(0..3);
        let delta = rng.random_range(0.001..0.5);
        let null = b.get(j).unwrap() + rng.random_range(-0.5..0.5);
        let r = RestrictionSpec::coordinate(5, j, null).unwrap();
        let sigma = coordinate_sigma(j, &theta, &data, LossKind::Gaussian, res.beta_hat.view()).unwrap();
        let test = wald_test(&r, &b, sigma, data.n()).unwrap();
        let ci = confidence_interval(b.get(j).unwrap(), sigma, data.n(), delta).unwrap();
        assert_eq!(covers(ci, null), !test.rejects(delta));
        assert_eq!(covers(ci, null), test.p_value > delta);

        let neg = wald_test(&r.negated(), &b, sigma, data.n()).unwrap();
        assert_eq!(neg.z, -test.z);
        assert_eq!(neg.p_value, test.p_value);
    }
}

#[test]
fn full_report() {
    let data = gaussian(58, 120, 6);
    let res = fit(&data, LossKind::Gaussian, &Norm::L1 { p: 6 }, 0.05, &FitOptions::default()).unwrap();
    let xw = weighted_design(&data, LossKind::Gaussian, res.beta_hat.view()).unwrap();
    let theta = estimate_precision(&xw, &Norm::L1 { p: 6 }, &NodewiseConfig::new(vec![1, 3])).unwrap();
    let r = RestrictionSpec::equal_weight(6, &[1, 3], &[0.0, 0.0]).unwrap();
    let report = infer(&r, res.beta_hat.view(), &theta, &data, LossKind::Gaussian, 0.05).unwrap();
    assert!((0.0..=1.0).contains(&report.p_value));
    assert_eq!(report.intervals.len(), 2);
    assert!(report.intervals.iter().all(|ci| ci.lower <= ci.upper));
}
