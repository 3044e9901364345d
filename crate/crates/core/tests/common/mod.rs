#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use structinf_core::{Dataset, GroupPartition, LossKind, Norm};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut StdRng, p: usize) -> Array1<f64> {
    (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn normal_matrix(rng: &mut StdRng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal))
}

/// A random partition of 0..p into groups of size 1..=max_size, shuffled.
pub fn random_partition(rng: &mut StdRng, p: usize, max_size: usize) -> GroupPartition {
    let mut order: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut groups = Vec::new();
    let mut start = 0;
    while start < p {
        let len = rng.random_range(1..=max_size).min(p - start);
        groups.push(order[start..start + len].to_vec());
        start += len;
    }
    GroupPartition::new(groups, p).unwrap()
}

pub fn random_norm(rng: &mut StdRng, p: usize) -> Norm {
    if rng.random_bool(0.5) {
        Norm::L1 { p }
    } else {
        Norm::WeightedGroupLasso(random_partition(rng, p, 3))
    }
}

/// Logistic responses from a sparse truth.
pub fn logistic_data(rng: &mut StdRng, n: usize, p: usize, intercept: bool) -> Dataset {
    let x = normal_matrix(rng, n, p);
    let mut beta = Array1::zeros(p);
    for j in 0..p.min(3) {
        beta[j] = 1.0 - 0.5 * j as f64;
    }
    let eta = x.dot(&beta);
    let y = eta.mapv(|a| if rng.random::<f64>() < 1.0 / (1.0 + (-a).exp()) { 1.0 } else { 0.0 });
    if intercept {
        Dataset::with_intercept(y, x.view()).unwrap()
    } else {
        Dataset::new(y, x).unwrap()
    }
}

pub fn gaussian_data(rng: &mut StdRng, n: usize, p: usize) -> Dataset {
    let x = normal_matrix(rng, n, p);
    let mut beta = Array1::zeros(p);
    for j in 0..p.min(3) {
        beta[j] = 1.0 + j as f64;
    }
    let y = x.dot(&beta) + normal_vec(rng, n);
    Dataset::new(y, x).unwrap()
}

pub fn data_for(kind: LossKind, rng: &mut StdRng, n: usize, p: usize) -> Dataset {
    match kind {
        LossKind::Logistic => logistic_data(rng, n, p, false),
        LossKind::Gaussian => gaussian_data(rng, n, p),
    }
}

pub fn to_dmatrix(a: ndarray::ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_dvector(a: ndarray::ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

/// Least squares through the normal equations and an LU solve.
pub fn ols(x: ndarray::ArrayView2<f64>, y: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let xm = to_dmatrix(x);
    let gram = xm.transpose() * &xm;
    let rhs = xm.transpose() * to_dvector(y);
    let sol = gram.lu().solve(&rhs).expect("full rank design");
    sol.iter().copied().collect()
}

/// Dense inverse of a square matrix.
pub fn inverse(a: ndarray::ArrayView2<f64>) -> Array2<f64> {
    let inv = to_dmatrix(a).try_inverse().expect("invertible");
    Array2::from_shape_fn((inv.nrows(), inv.ncols()), |(i, j)| inv[(i, j)])
}

pub fn max_abs_diff(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
