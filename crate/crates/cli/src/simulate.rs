//! Monte Carlo harness for debiased weighted-group-lasso logistic
//! regression: size and power of a two-coordinate Wald test and coverage of
//! one zero and one nonzero coefficient.
//!
//! Each iteration draws its own dataset from a counter-based stream keyed by
//! (seed, iteration), so serial and parallel runs agree bit for bit.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use structinf_core::glm::sigmoid;
use structinf_core::inference::{
    confidence_interval, coordinate_sigma, covers, debias, variance_alpha, wald_test, RestrictionSpec,
};
use structinf_core::nodewise::{
    assemble_theta, fit_row, weighted_design, LambdaRule, NodewiseConfig, NodewiseGrid, PrecisionEstimate,
};
use structinf_core::solver::{fit, FitOptions, FitResult};
pub use structinf_core::tuning::{geometric_grid, select_lambda_split, split_grid, SplitSelection};
use structinf_core::{Dataset, GroupPartition, LossKind, Norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setup {
    /// Five groups, one active block of ones.
    FiveGroups,
    /// Ten groups, active blocks of ones, twos and halves.
    TenGroups,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub setup: Setup,
    pub n: usize,
    /// Regressors, intercept excluded.
    pub p: usize,
    pub rho: f64,
    pub iterations: usize,
    pub seed: u64,
    pub grid_base: f64,
    pub grid_len: usize,
    pub nominal_level: f64,
    pub nodewise_folds: usize,
    pub nodewise_grid_len: usize,
    pub nodewise_grid_ratio: f64,
    /// Worker threads; 0 uses every available core.
    #[serde(skip)]
    pub workers: usize,
}

impl SimConfig {
    pub fn new(setup: Setup, n: usize, p: usize, rho: f64) -> Self {
        Self {
            setup,
            n,
            p,
            rho,
            iterations: 100,
            seed: 0,
            grid_base: 0.3,
            grid_len: 25,
            nominal_level: 0.05,
            nodewise_folds: 5,
            nodewise_grid_len: 20,
            nodewise_grid_ratio: 1e-3,
            workers: 0,
        }
    }

    /// Every problem with the configuration, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.setup {
            Setup::FiveGroups if self.p % 5 != 0 || self.p / 5 < 13 => {
                out.push(format!("simulate.p: five-groups needs p divisible by 5 with p/5 ≥ 13, got {}", self.p))
            }
            // the fifth block has 2p/10 − 12 entries and must be non-empty
            Setup::TenGroups if self.p % 10 != 0 || 2 * (self.p / 10) <= 12 => {
                out.push(format!("simulate.p: ten-groups needs p divisible by 10 with 2p/10 > 12, got {}", self.p))
            }
            _ => {}
        }
        if self.n < 2 * self.nodewise_folds.max(2) {
            out.push(format!("simulate.n: {} is too small for the sample split and folds", self.n));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            out.push(format!("simulate.rho: must lie in (0, 1), got {}", self.rho));
        }
        if self.iterations == 0 {
            out.push("simulate.iterations: must be at least 1".into());
        }
        if !(self.grid_base > 0.0 && self.grid_base < 1.0) {
            out.push(format!("simulate.grid_base: must lie in (0, 1), got {}", self.grid_base));
        }
        if self.grid_len == 0 {
            out.push("simulate.grid_len: must be at least 1".into());
        }
        if !(self.nominal_level > 0.0 && self.nominal_level < 1.0) {
            out.push(format!("simulate.level: must lie in (0, 1), got {}", self.nominal_level));
        }
        if self.nodewise_folds < 2 {
            out.push("simulate.folds: must be at least 2".into());
        }
        if self.nodewise_grid_len == 0 {
            out.push("simulate.nodewise_grid_len: must be at least 1".into());
        }
        if !(self.nodewise_grid_ratio > 0.0 && self.nodewise_grid_ratio <= 1.0) {
            out.push("simulate.nodewise_grid_ratio: must lie in (0, 1]".into());
        }
        out
    }

    fn validated(&self) -> Result<(), SimError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(problems))
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("no iteration succeeded ({0} failures)")]
    NoSuccess(usize),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// β₀ over the intercept and p regressors, with the regressor groups.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub beta: Array1<f64>,
    pub partition: GroupPartition,
    /// Intercept first, then each group.
    pub block_lengths: Vec<usize>,
    /// 0-based coefficient (intercept = 0) whose interval should cover 1.
    pub nonzero_coordinate: usize,
}

/// Tested coefficients β₂, β₃ (the first group), as 0-based indices.
pub const TEST_COORDINATES: [usize; 2] = [1, 2];
/// The zero coefficient whose interval coverage is tracked.
pub const ZERO_COORDINATE: usize = 1;
/// Value of β₂ and β₃ under the power alternative.
pub const POWER_NULL: f64 = 0.5;

pub fn true_beta(setup: Setup, p: usize) -> Result<TrueModel, SimError> {
    let mut probe = SimConfig::new(setup, 1000, p, 0.5);
    probe.iterations = 1;
    probe.validated()?;
    let (blocks, values, nonzero_coordinate): (Vec<usize>, Vec<f64>, usize) = match setup {
        Setup::FiveGroups => {
            let q = p / 5;
            (vec![2, q + 10, q, q, 2 * q - 12], vec![0.0, 0.0, 1.0, 0.0, 0.0], q + 15)
        }
        Setup::TenGroups => {
            let q = p / 10;
            (
                vec![2, q + 10, q, q, 2 * q - 12, q, q, q, q, q],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.5, 0.0],
                q + 16,
            )
        }
    };
    let mut beta = Vec::with_capacity(p + 1);
    beta.push(0.0);
    for (&len, &v) in blocks.iter().zip(&values) {
        beta.extend(std::iter::repeat_n(v, len));
    }
    let partition = GroupPartition::contiguous(&blocks).expect("block sizes are positive");
    let mut block_lengths = vec![1];
    block_lengths.extend(&blocks);
    Ok(TrueModel { beta: Array1::from(beta), partition, block_lengths, nonzero_coordinate })
}

fn iteration_rng(seed: u64, iteration: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

/// Draws independent AR(1)-correlated group blocks (Toeplitz ρ^|k−j| within
/// each group), prepends the intercept and draws y_i ~ Bernoulli(σ(X_i'β₀)).
pub fn generate_dataset(config: &SimConfig, iteration: usize) -> Result<Dataset, SimError> {
    let model = true_beta(config.setup, config.p)?;
    let mut rng = iteration_rng(config.seed, iteration);
    Ok(draw(config, &model, &mut rng))
}

fn draw(config: &SimConfig, model: &TrueModel, rng: &mut ChaCha20Rng) -> Dataset {
    let (n, p, rho) = (config.n, config.p, config.rho);
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        for group in model.partition.groups() {
            let mut prev = 0.0;
            for (k, &col) in group.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                prev = if k == 0 { z } else { rho * prev + innovation * z };
                x[[i, col]] = prev;
            }
        }
    }
    let eta = x.dot(&model.beta.slice(s![1..])) + model.beta[0];
    let y = eta.mapv(|a| if rng.random::<f64>() < sigmoid(a) { 1.0 } else { 0.0 });
    Dataset::with_intercept(y, x.view()).expect("simulated data are finite")
}

/// One iteration's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub reject_size: bool,
    pub reject_power: bool,
    pub cover_zero: bool,
    pub cover_nonzero: bool,
    pub z_size: f64,
    pub z_power: f64,
    pub lambda: f64,
    /// Σ_j √|G_j|·‖β̂_{G_j} − β₀_{G_j}‖₂.
    pub estimation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationFailure {
    pub iteration: usize,
    pub reason: String,
}

/// Steps up to the full-sample penalized fit.
pub struct PenalizedFit {
    pub data: Dataset,
    pub model: TrueModel,
    pub norm: Norm,
    pub selection: SplitSelection,
    pub fit: FitResult,
    /// Seed for the nodewise folds, drawn after the data.
    pub fold_seed: u64,
}

pub fn penalized_fit(config: &SimConfig, iteration: usize) -> Result<PenalizedFit, String> {
    let model = true_beta(config.setup, config.p).map_err(|e| e.to_string())?;
    let mut rng = iteration_rng(config.seed, iteration);
    let data = draw(config, &model, &mut rng);
    let fold_seed = rng.random();
    let norm = Norm::WeightedGroupLasso(model.partition.clone());
    let opts = FitOptions::default();
    let grid = split_grid(&data, LossKind::Logistic, &norm, config.grid_base, config.grid_len)
        .map_err(|e| format!("lambda grid: {e}"))?;
    let selection =
        select_lambda_split(&data, LossKind::Logistic, &norm, &grid, &opts).map_err(|e| format!("lambda selection: {e}"))?;
    let fit = fit(&data, LossKind::Logistic, &norm, selection.lambda, &opts).map_err(|e| format!("full fit: {e}"))?;
    if !fit.converged {
        return Err(format!("full-sample fit did not converge (kkt residual {:e})", fit.kkt_residual));
    }
    Ok(PenalizedFit { data, model, norm, selection, fit, fold_seed })
}

impl PenalizedFit {
    pub fn estimation_error(&self) -> f64 {
        let diff = &self.fit.beta_hat - &self.model.beta;
        self.norm.value(diff.slice(s![1..])).expect("dimensions match")
    }
}

fn nodewise_rows(config: &SimConfig, pf: &PenalizedFit) -> Result<PrecisionEstimate, String> {
    let xw = weighted_design(&pf.data, LossKind::Logistic, pf.fit.beta_hat.view()).map_err(|e| e.to_string())?;
    let mut rows = vec![TEST_COORDINATES[0], TEST_COORDINATES[1], pf.model.nonzero_coordinate];
    rows.push(ZERO_COORDINATE);
    rows.sort_unstable();
    rows.dedup();
    let mut cfg = NodewiseConfig::new(rows.clone());
    cfg.seed = pf.fold_seed;
    cfg.lambda_rule = LambdaRule::CrossValidated {
        folds: config.nodewise_folds,
        grid: NodewiseGrid::LogSpaced { len: config.nodewise_grid_len, ratio: config.nodewise_grid_ratio },
    };
    let weak = Norm::L1 { p: xw.p() };
    let fitted = rows
        .iter()
        .map(|&j| fit_row(&xw, j, &weak, &cfg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("nodewise: {e}"))?;
    if let Some(row) = fitted.iter().find(|r| !r.converged) {
        return Err(format!("nodewise row {} did not converge", row.row + 1));
    }
    assemble_theta(fitted).map_err(|e| format!("nodewise: {e}"))
}

/// Selection, full fit, nodewise Θ̂ rows, debiasing and the four indicators.
pub fn run_iteration(config: &SimConfig, iteration: usize) -> Result<IterationRecord, IterationFailure> {
    let fail = |reason: String| IterationFailure { iteration, reason };
    let pf = penalized_fit(config, iteration).map_err(fail)?;
    let theta = nodewise_rows(config, &pf).map_err(fail)?;
    let (data, beta_hat) = (&pf.data, pf.fit.beta_hat.view());
    let kind = LossKind::Logistic;
    let p_full = data.p();
    let level = config.nominal_level;
    let err = |e: structinf_core::Error| fail(e.to_string());

    let b = debias(beta_hat, &theta, data, kind).map_err(err)?;
    let size = RestrictionSpec::equal_weight(p_full, &TEST_COORDINATES, &[0.0, 0.0]).map_err(err)?;
    let power = RestrictionSpec::equal_weight(p_full, &TEST_COORDINATES, &[POWER_NULL, POWER_NULL]).map_err(err)?;
    let v = variance_alpha(&size, &theta, data, kind, beta_hat).map_err(err)?;
    let size_test = wald_test(&size, &b, v, data.n()).map_err(err)?;
    let power_test = wald_test(&power, &b, v, data.n()).map_err(err)?;

    let interval = |j: usize| -> Result<(f64, f64), IterationFailure> {
        let sigma = coordinate_sigma(j, &theta, data, kind, beta_hat).map_err(err)?;
        confidence_interval(b.get(j).map_err(err)?, sigma, data.n(), level).map_err(err)
    };
    let zero_ci = interval(ZERO_COORDINATE)?;
    let nonzero = pf.model.nonzero_coordinate;
    let nonzero_ci = interval(nonzero)?;

    if !(size_test.z.is_finite() && power_test.z.is_finite()) {
        return Err(fail("non-finite test statistic".into()));
    }
    Ok(IterationRecord {
        iteration,
        reject_size: size_test.rejects(level),
        reject_power: power_test.rejects(level),
        cover_zero: covers(zero_ci, pf.model.beta[ZERO_COORDINATE]),
        cover_nonzero: covers(nonzero_ci, pf.model.beta[nonzero]),
        z_size: size_test.z,
        z_power: power_test.z,
        lambda: pf.fit.lambda,
        estimation_error: pf.estimation_error(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub successes: usize,
    pub size_pct: f64,
    pub power_pct: f64,
    pub cov_zero_pct: f64,
    pub cov_nonzero_pct: f64,
    pub per_iteration: Vec<IterationRecord>,
    pub failures: Vec<IterationFailure>,
    /// Wall-clock seconds; kept out of the serialized report so reruns are
    /// byte-identical.
    #[serde(skip)]
    pub runtime: f64,
}

fn pct(records: &[IterationRecord], f: impl Fn(&IterationRecord) -> bool) -> f64 {
    100.0 * records.iter().filter(|r| f(r)).count() as f64 / records.len() as f64
}

/// Percentages over the successful iterations, records sorted by iteration.
pub fn aggregate(
    config: &SimConfig,
    outcomes: Vec<Result<IterationRecord, IterationFailure>>,
) -> Result<SimReport, SimError> {
    let (mut records, mut failures) = (Vec::new(), Vec::new());
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    if records.is_empty() {
        return Err(SimError::NoSuccess(failures.len()));
    }
    records.sort_by_key(|r| r.iteration);
    failures.sort_by_key(|f| f.iteration);
    Ok(SimReport {
        config: config.clone(),
        successes: records.len(),
        size_pct: pct(&records, |r| r.reject_size),
        power_pct: pct(&records, |r| r.reject_power),
        cov_zero_pct: pct(&records, |r| r.cover_zero),
        cov_nonzero_pct: pct(&records, |r| r.cover_nonzero),
        per_iteration: records,
        failures,
        runtime: 0.0,
    })
}

/// Maps `job` over `0..count` on `workers` threads (0 = all cores), in order.
pub fn parallel_map<T: Send>(
    workers: usize,
    count: usize,
    job: impl Fn(usize) -> T + Sync + Send,
) -> Result<Vec<T>, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(job).collect()))
}

/// Runs every iteration and aggregates.
pub fn run(config: &SimConfig) -> Result<SimReport, SimError> {
    config.validated()?;
    let start = Instant::now();
    let outcomes = parallel_map(config.workers, config.iterations, |i| run_iteration(config, i))?;
    let mut report = aggregate(config, outcomes)?;
    report.runtime = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Table rows keyed by (n, p) with one Size/Power/Cov. Zero/Cov. Nonzero
/// block per ρ, in the order given.
pub fn format_table(reports: &[SimReport]) -> String {
    let mut rhos: Vec<f64> = Vec::new();
    let mut sizes: Vec<(usize, usize)> = Vec::new();
    for r in reports {
        if !rhos.contains(&r.config.rho) {
            rhos.push(r.config.rho);
        }
        if !sizes.contains(&(r.config.n, r.config.p)) {
            sizes.push((r.config.n, r.config.p));
        }
    }
    let title = match reports.first().map(|r| r.config.setup) {
        Some(Setup::TenGroups) => "Ten groups",
        _ => "Five groups",
    };
    let mut out = String::new();
    let _ = writeln!(out, "{title} (all numbers in percentages)");
    let _ = write!(out, "{:<16}", "");
    for rho in &rhos {
        let _ = write!(out, "| {:<38}", format!("rho={rho}"));
    }
    out.push('\n');
    let _ = write!(out, "{:<16}", "");
    for _ in &rhos {
        let _ = write!(out, "| {:>6} {:>6} {:>10} {:>13} ", "Size", "Power", "Cov.Zero", "Cov.Nonzero");
    }
    out.push('\n');
    for (n, p) in sizes {
        let _ = write!(out, "{:<16}", format!("n={n}, p={p}"));
        for rho in &rhos {
            match reports.iter().find(|r| r.config.rho == *rho && r.config.n == n && r.config.p == p) {
                Some(r) => {
                    let _ = write!(
                        out,
                        "| {:>6.0} {:>6.0} {:>10.0} {:>13.0} ",
                        r.size_pct, r.power_pct, r.cov_zero_pct, r.cov_nonzero_pct
                    );
                }
                None => {
                    let _ = write!(out, "| {:>38} ", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
