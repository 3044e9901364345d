//! The four commands and their serialized outputs.

use std::path::PathBuf;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use structinf_core::inference::{confidence_interval, coordinate_sigma, debias, infer, RestrictionSpec};
use structinf_core::nodewise::{assemble_theta, fit_row, weighted_design, PrecisionEstimate};
use structinf_core::solver::{fit, FitResult};
use structinf_core::tuning::{select_lambda_split, split_grid};
use structinf_core::{Dataset, Error as CoreError, LossKind, Norm};

use crate::config::{design_norms, Command, ConfigError, RunConfig};
use crate::io::{ingest_csv, to_json, write_all_or_nothing, DataError, LoadedData};
use crate::simulate::{self, format_table, parallel_map, SimError, SimReport};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Data(_) | CommandError::Output(_) => 3,
            CommandError::Numeric(_) => 4,
        }
    }
}

impl From<CoreError> for CommandError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Numeric(_) | CoreError::DegenerateVariance(_) | CoreError::Certificate { .. } => {
                CommandError::Numeric(e.to_string())
            }
            other => CommandError::Config(ConfigError::Invalid(vec![other.to_string()])),
        }
    }
}

impl From<SimError> for CommandError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(v) => CommandError::Config(ConfigError::Invalid(v)),
            other => CommandError::Numeric(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    /// Candidate λ values in decreasing order.
    pub grid: Vec<f64>,
    /// Held-out unpenalized risk per candidate; null where the fit failed.
    pub held_out_risk: Vec<Option<f64>>,
}

/// A penalized fit as written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub loss: String,
    pub n: usize,
    /// Design column names, `(intercept)` first when present.
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub selection: Option<LambdaSelection>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasedCoordinate {
    /// 1-based predictor column.
    pub coordinate: usize,
    pub name: String,
    pub beta_hat: f64,
    pub b_hat: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    pub nodewise_lambda: f64,
    pub tau_sq: f64,
    pub inverse_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasOutput {
    pub fit: FitOutput,
    pub delta: f64,
    pub coordinates: Vec<DebiasedCoordinate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutput {
    pub fit: FitOutput,
    pub coordinates: Vec<usize>,
    pub names: Vec<String>,
    /// Normalized weights α on `coordinates`.
    pub weights: Vec<f64>,
    pub null_value: f64,
    pub estimate: f64,
    pub v_alpha: f64,
    pub z: f64,
    pub p_value: f64,
    pub delta: f64,
    pub reject: bool,
    pub intervals: Vec<DebiasedCoordinate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub reports: Vec<SimReport>,
}

/// Files written by a successful command.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

pub fn run_command(command: Command, config: &RunConfig) -> Result<Artifacts, CommandError> {
    config.validate(command)?;
    if command != Command::Simulate {
        let path = config.data.path.as_ref().expect("validated");
        if !path.is_file() {
            return Err(ConfigError::Invalid(vec![format!("data.path: {} does not exist", path.display())]).into());
        }
    }
    let out = config.out_dir();
    let (files, contents): (Vec<PathBuf>, Vec<String>) = match command {
        Command::Fit => {
            let (_, _, output) = fitted(config)?;
            (vec![out.join("fit.json")], vec![json(&output)?])
        }
        Command::Debias => {
            let output = run_debias(config)?;
            (vec![out.join("debias.json")], vec![json(&output)?])
        }
        Command::Test => {
            let output = run_test(config)?;
            (vec![out.join("test.json")], vec![json(&output)?])
        }
        Command::Simulate => {
            let mut reports = Vec::new();
            for case in config.sim_configs() {
                let report = simulate::run(&case)?;
                eprintln!(
                    "simulate n={} p={} rho={}: {} ok, {} failed, {:.1}s",
                    case.n,
                    case.p,
                    case.rho,
                    report.successes,
                    report.failures.len(),
                    report.runtime
                );
                reports.push(report);
            }
            let table = format_table(&reports);
            let output = SimulateOutput { reports };
            (vec![out.join("simulate.json"), out.join("simulate_table.txt")], vec![json(&output)?, table])
        }
    };
    std::fs::create_dir_all(&out)?;
    let pairs: Vec<_> = files.iter().map(|f| f.as_path()).zip(contents.iter().map(String::as_str)).collect();
    write_all_or_nothing(&pairs)?;
    Ok(Artifacts { files })
}

fn json<T: Serialize>(value: &T) -> Result<String, CommandError> {
    to_json(value).map_err(|e| CommandError::Output(e.into()))
}

struct Prepared {
    loaded: LoadedData,
    kind: LossKind,
    norm: Norm,
    weak: Norm,
}

fn prepare(config: &RunConfig) -> Result<Prepared, CommandError> {
    let path = config.data.path.as_ref().expect("validated");
    let loaded = ingest_csv(path, config.response(), config.intercept())?;
    let kind = config.loss();
    loaded.dataset.validate_for(kind).map_err(|e| DataError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let spec = config.norm_spec(loaded.dataset.penalized_p())?;
    let (norm, weak) = design_norms(&spec, loaded.dataset.has_intercept());
    Ok(Prepared { loaded, kind, norm, weak })
}

fn names(data: &LoadedData) -> Vec<String> {
    let mut names = Vec::with_capacity(data.dataset.p());
    if data.dataset.has_intercept() {
        names.push("(intercept)".to_owned());
    }
    names.extend(data.predictors.iter().cloned());
    names
}

fn fitted(config: &RunConfig) -> Result<(Prepared, FitResult, FitOutput), CommandError> {
    let prep = prepare(config)?;
    let data = &prep.loaded.dataset;
    let opts = config.fit_options();
    let (lambda, selection) = match config.lambda.value {
        Some(l) => (l, None),
        None => {
            let grid = split_grid(
                data,
                prep.kind,
                &prep.norm,
                config.lambda.grid_base.unwrap_or(0.3),
                config.lambda.grid_len.unwrap_or(25),
            )?;
            let sel = select_lambda_split(data, prep.kind, &prep.norm, &grid, &opts)?;
            (sel.lambda, Some(LambdaSelection { grid: sel.grid, held_out_risk: sel.held_out_risk }))
        }
    };
    let res = fit(data, prep.kind, &prep.norm, lambda, &opts)?;
    if !res.converged {
        return Err(CommandError::Numeric(format!(
            "penalized fit did not converge in {} iterations (kkt residual {:e})",
            res.iterations, res.kkt_residual
        )));
    }
    let output = FitOutput {
        loss: match prep.kind {
            LossKind::Logistic => "logistic".into(),
            LossKind::Gaussian => "gaussian".into(),
        },
        n: data.n(),
        names: names(&prep.loaded),
        beta: res.beta_hat.to_vec(),
        lambda: res.lambda,
        selection,
        iterations: res.iterations,
        kkt_residual: res.kkt_residual,
        objective: res.objective,
        converged: res.converged,
    };
    Ok((prep, res, output))
}

/// Maps 1-based predictor columns to design indices.
fn design_index(data: &Dataset, coordinate: usize, field: &str) -> Result<usize, CommandError> {
    let p = data.penalized_p();
    if coordinate == 0 || coordinate > p {
        return Err(ConfigError::Invalid(vec![format!("{field}: index {coordinate} outside 1..={p}")]).into());
    }
    Ok(coordinate - 1 + data.offset())
}

fn precision(
    config: &RunConfig,
    prep: &Prepared,
    beta_hat: &Array1<f64>,
    rows: Vec<usize>,
) -> Result<PrecisionEstimate, CommandError> {
    let data = &prep.loaded.dataset;
    let xw = weighted_design(data, prep.kind, beta_hat.view())?;
    let cfg = config.nodewise_config(rows.clone());
    cfg.validate(xw.p())?;
    let fitted = parallel_map(config.workers(), rows.len(), |i| fit_row(&xw, rows[i], &prep.weak, &cfg))?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(row) = fitted.iter().find(|r| !r.converged) {
        return Err(CommandError::Numeric(format!("nodewise regression for column {} did not converge", row.row + 1)));
    }
    Ok(assemble_theta(fitted)?)
}

fn coordinate_rows(
    config: &RunConfig,
    prep: &Prepared,
    beta_hat: &Array1<f64>,
    theta: &PrecisionEstimate,
) -> Result<Vec<DebiasedCoordinate>, CommandError> {
    let data = &prep.loaded.dataset;
    let names = names(&prep.loaded);
    let b = debias(beta_hat.view(), theta, data, prep.kind)?;
    let mut out = Vec::new();
    for (j, b_j) in b.iter() {
        let sigma = coordinate_sigma(j, theta, data, prep.kind, beta_hat.view())?;
        let (lower, upper) = confidence_interval(b_j, sigma, data.n(), config.delta())?;
        let row = theta.row(j)?;
        out.push(DebiasedCoordinate {
            coordinate: j + 1 - data.offset(),
            name: names[j].clone(),
            beta_hat: beta_hat[j],
            b_hat: b_j,
            sigma,
            lower,
            upper,
            nodewise_lambda: row.lambda,
            tau_sq: row.tau_sq,
            inverse_residual: row.inverse_residual,
        });
    }
    Ok(out)
}

fn run_debias(config: &RunConfig) -> Result<DebiasOutput, CommandError> {
    let (prep, res, fit) = fitted(config)?;
    let data = &prep.loaded.dataset;
    let rows = match &config.nodewise.rows {
        Some(r) => r.iter().map(|&c| design_index(data, c, "nodewise.rows")).collect::<Result<Vec<_>, _>>()?,
        None => (data.offset()..data.p()).collect(),
    };
    let theta = precision(config, &prep, &res.beta_hat, dedup(rows))?;
    let coordinates = coordinate_rows(config, &prep, &res.beta_hat, &theta)?;
    Ok(DebiasOutput { fit, delta: config.delta(), coordinates })
}

fn dedup(mut rows: Vec<usize>) -> Vec<usize> {
    rows.sort_unstable();
    rows.dedup();
    rows
}

fn run_test(config: &RunConfig) -> Result<TestOutput, CommandError> {
    let (prep, res, fit) = fitted(config)?;
    let data = &prep.loaded.dataset;
    let t = &config.test;
    let user: &Vec<usize> = t.coordinates.as_ref().expect("validated");
    let coords = user.iter().map(|&c| design_index(data, c, "test.coordinates")).collect::<Result<Vec<_>, _>>()?;
    let restriction = match &t.weights {
        Some(w) => {
            let mut alpha = Array1::zeros(data.p());
            for (&j, &a) in coords.iter().zip(w) {
                alpha[j] = a;
            }
            RestrictionSpec::new(alpha, t.null.unwrap_or(0.0))?
        }
        None => {
            let values = t.values.clone().unwrap_or_else(|| vec![0.0; coords.len()]);
            RestrictionSpec::equal_weight(data.p(), &coords, &values)?
        }
    };
    let mut rows = coords.clone();
    if let Some(extra) = &config.nodewise.rows {
        for &c in extra {
            rows.push(design_index(data, c, "nodewise.rows")?);
        }
    }
    let theta = precision(config, &prep, &res.beta_hat, dedup(rows))?;
    let report = infer(&restriction, res.beta_hat.view(), &theta, data, prep.kind, config.delta())?;
    let intervals = coordinate_rows(config, &prep, &res.beta_hat, &theta)?;
    let all_names = names(&prep.loaded);
    Ok(TestOutput {
        fit,
        coordinates: user.clone(),
        names: coords.iter().map(|&j| all_names[j].clone()).collect(),
        weights: coords.iter().map(|&j| restriction.alpha()[j]).collect(),
        null_value: restriction.null_value(),
        estimate: report.estimate,
        v_alpha: report.v_alpha,
        z: report.z,
        p_value: report.p_value,
        delta: report.delta,
        reject: report.reject,
        intervals,
    })
}
