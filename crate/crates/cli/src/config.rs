//! The TOML run configuration.
//!
//! Every field is optional in the file; missing fields take documented
//! defaults, while present but out-of-range values are always reported.
//! Validation collects every problem before giving up.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use structinf_core::nodewise::{LambdaRule, NodewiseConfig, NodewiseGrid};
use structinf_core::solver::FitOptions;
use structinf_core::{GroupPartition, LossKind, Norm, NormSpec, WeakNorm};

use crate::simulate::{SimConfig, Setup};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub lambda: LambdaSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub nodewise: NodewiseSection,
    #[serde(default)]
    pub inference: InferenceSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub response: Option<String>,
    pub intercept: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    Logistic,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyName {
    GroupLasso,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeakName {
    L1,
    Penalty,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub loss: Option<LossName>,
    pub penalty: Option<PenaltyName>,
    /// 1-based predictor columns, intercept excluded.
    pub groups: Option<Vec<Vec<usize>>>,
    pub weak_norm: Option<WeakName>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSection {
    /// A fixed λ; without it λ is chosen by sample splitting.
    pub value: Option<f64>,
    pub grid_base: Option<f64>,
    pub grid_len: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodewiseSection {
    /// 1-based predictor columns to debias.
    pub rows: Option<Vec<usize>>,
    pub folds: Option<usize>,
    pub grid_len: Option<usize>,
    pub grid_ratio: Option<f64>,
    /// A fixed nodewise λ instead of cross-validation.
    pub lambda: Option<f64>,
    pub tau_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    /// Test level δ; intervals have coverage 1 − δ.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    /// 1-based predictor columns in the restriction.
    pub coordinates: Option<Vec<usize>>,
    /// Hypothesized values for an equal-weight joint restriction.
    pub values: Option<Vec<f64>>,
    /// Explicit weights α; the restriction is α'β = null.
    pub weights: Option<Vec<f64>>,
    pub null: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub setup: Option<Setup>,
    /// Paired with `p`: the i-th n goes with the i-th p.
    pub n: Option<OneOrMany<usize>>,
    pub p: Option<OneOrMany<usize>>,
    pub rho: Option<OneOrMany<f64>>,
    pub iterations: Option<usize>,
    pub grid_base: Option<f64>,
    pub grid_len: Option<usize>,
    pub level: Option<f64>,
    pub folds: Option<usize>,
    pub nodewise_grid_len: Option<usize>,
    pub nodewise_grid_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub response: Option<String>,
    pub intercept: Option<bool>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_owned(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: shown.clone(), source })?;
        Self::parse(&text, &shown)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.data {
            self.data.path = Some(v.clone());
        }
        if let Some(v) = &o.response {
            self.data.response = Some(v.clone());
        }
        if let Some(v) = o.intercept {
            self.data.intercept = Some(v);
        }
        if let Some(v) = o.seed {
            self.seed = Some(v);
        }
        if let Some(v) = o.workers {
            self.workers = Some(v);
        }
        if let Some(v) = &o.out {
            self.output.dir = Some(v.clone());
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn response(&self) -> &str {
        self.data.response.as_deref().unwrap_or("y")
    }

    pub fn intercept(&self) -> bool {
        self.data.intercept.unwrap_or(true)
    }

    pub fn loss(&self) -> LossKind {
        match self.model.loss.unwrap_or(LossName::Logistic) {
            LossName::Logistic => LossKind::Logistic,
            LossName::Gaussian => LossKind::Gaussian,
        }
    }

    pub fn delta(&self) -> f64 {
        self.inference.delta.unwrap_or(0.05)
    }

    pub fn fit_options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions { max_iter: self.solver.max_iter.unwrap_or(d.max_iter), tol: self.solver.tol.unwrap_or(d.tol), ..d }
    }

    /// Penalty over the `p` predictor columns.
    pub fn norm_spec(&self, p: usize) -> Result<NormSpec, ConfigError> {
        let spec = match self.model.penalty.unwrap_or(PenaltyName::GroupLasso) {
            PenaltyName::L1 => NormSpec::l1(p),
            PenaltyName::GroupLasso => {
                let groups = self.model.groups.as_ref().ok_or_else(|| one("model.groups: required for group-lasso"))?;
                let part = GroupPartition::from_one_based(groups, p).map_err(|e| one(format!("model.groups: {e}")))?;
                NormSpec::group_lasso(part)
            }
        };
        Ok(match self.model.weak_norm.unwrap_or(WeakName::L1) {
            WeakName::L1 => spec.with_weak(WeakNorm::L1),
            WeakName::Penalty => spec.with_weak(WeakNorm::SameAsPenalty),
        })
    }

    /// Nodewise settings for 0-based design rows.
    pub fn nodewise_config(&self, rows: Vec<usize>) -> NodewiseConfig {
        let mut cfg = NodewiseConfig::new(rows);
        cfg.seed = self.seed();
        if let Some(f) = self.nodewise.tau_floor {
            cfg.tau_floor = f;
        }
        cfg.lambda_rule = match self.nodewise.lambda {
            Some(l) => LambdaRule::Fixed(l),
            None => LambdaRule::CrossValidated {
                folds: self.nodewise.folds.unwrap_or(5),
                grid: NodewiseGrid::LogSpaced {
                    len: self.nodewise.grid_len.unwrap_or(20),
                    ratio: self.nodewise.grid_ratio.unwrap_or(1e-3),
                },
            },
        };
        cfg
    }

    /// Every simulation case, one per (n, p, ρ).
    pub fn sim_configs(&self) -> Vec<SimConfig> {
        let s = &self.simulate;
        let ns = s.n.as_ref().map_or(vec![150], OneOrMany::to_vec);
        let ps = s.p.as_ref().map_or(vec![100], OneOrMany::to_vec);
        let rhos = s.rho.as_ref().map_or(vec![0.5], OneOrMany::to_vec);
        let mut out = Vec::new();
        for (&n, &p) in ns.iter().zip(&ps) {
            for &rho in &rhos {
                let mut c = SimConfig::new(s.setup.unwrap_or(Setup::FiveGroups), n, p, rho);
                c.seed = self.seed();
                c.workers = self.workers();
                macro_rules! take {
                    ($($field:ident <- $src:ident),*) => { $(if let Some(v) = s.$src { c.$field = v; })* };
                }
                take!(iterations <- iterations, grid_base <- grid_base, grid_len <- grid_len,
                      nominal_level <- level, nodewise_folds <- folds,
                      nodewise_grid_len <- nodewise_grid_len, nodewise_grid_ratio <- nodewise_grid_ratio);
                out.push(c);
            }
        }
        out
    }

    /// Checks that need no data. Every problem is listed.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    bad.push(format!("{name}: must be positive and finite, got {v}"));
                }
            }
        };
        positive("lambda.value", self.lambda.value);
        positive("solver.tol", self.solver.tol);
        positive("nodewise.lambda", self.nodewise.lambda);
        positive("nodewise.tau_floor", self.nodewise.tau_floor);
        let mut unit = |name: &str, v: Option<f64>, closed: bool| {
            if let Some(v) = v {
                if !(v > 0.0 && (v < 1.0 || closed && v == 1.0)) {
                    bad.push(format!("{name}: must lie in (0, 1{}, got {v}", if closed { "]" } else { ")" }));
                }
            }
        };
        unit("lambda.grid_base", self.lambda.grid_base, false);
        unit("nodewise.grid_ratio", self.nodewise.grid_ratio, true);
        unit("inference.delta", self.inference.delta, false);
        let mut at_least = |name: &str, v: Option<usize>, min: usize| {
            if let Some(v) = v {
                if v < min {
                    bad.push(format!("{name}: must be at least {min}, got {v}"));
                }
            }
        };
        at_least("lambda.grid_len", self.lambda.grid_len, 1);
        at_least("solver.max_iter", self.solver.max_iter, 1);
        at_least("nodewise.folds", self.nodewise.folds, 2);
        at_least("nodewise.grid_len", self.nodewise.grid_len, 1);

        if let Some(groups) = &self.model.groups {
            if self.model.penalty == Some(PenaltyName::L1) {
                bad.push("model.groups: only meaningful with penalty = \"group-lasso\"".into());
            }
            for (g, members) in groups.iter().enumerate() {
                if members.is_empty() {
                    bad.push(format!("model.groups[{g}]: empty group"));
                }
                if members.contains(&0) {
                    bad.push(format!("model.groups[{g}]: indices are 1-based, found 0"));
                }
            }
        }
        if let Some(rows) = &self.nodewise.rows {
            if rows.is_empty() {
                bad.push("nodewise.rows: must not be empty".into());
            }
            if rows.contains(&0) {
                bad.push("nodewise.rows: indices are 1-based, found 0".into());
            }
        }

        match command {
            Command::Simulate => self.validate_simulate(&mut bad),
            _ => {
                if self.data.path.is_none() {
                    bad.push("data.path: required (or pass --data)".into());
                }
                if self.model.penalty != Some(PenaltyName::L1) && self.model.groups.is_none() {
                    bad.push("model.groups: required for group-lasso (or set model.penalty = \"l1\")".into());
                }
            }
        }
        if command == Command::Test {
            self.validate_test(&mut bad);
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    fn validate_test(&self, bad: &mut Vec<String>) {
        let t = &self.test;
        let Some(coords) = &t.coordinates else {
            bad.push("test.coordinates: required".into());
            return;
        };
        if coords.is_empty() {
            bad.push("test.coordinates: must not be empty".into());
        }
        if coords.contains(&0) {
            bad.push("test.coordinates: indices are 1-based, found 0".into());
        }
        let mut sorted = coords.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != coords.len() {
            bad.push("test.coordinates: duplicate index".into());
        }
        match (&t.values, &t.weights) {
            (Some(_), Some(_)) => bad.push("test: give either values or weights with null, not both".into()),
            (Some(v), None) if v.len() != coords.len() => {
                bad.push(format!("test.values: {} values for {} coordinates", v.len(), coords.len()))
            }
            (None, Some(w)) if w.len() != coords.len() => {
                bad.push(format!("test.weights: {} weights for {} coordinates", w.len(), coords.len()))
            }
            (None, Some(w)) if w.iter().all(|&x| x == 0.0) => bad.push("test.weights: all zero".into()),
            _ => {}
        }
        if t.null.is_some() && t.weights.is_none() {
            bad.push("test.null: only used together with test.weights".into());
        }
        for (name, vals) in [("test.values", &t.values), ("test.weights", &t.weights)] {
            if vals.as_ref().is_some_and(|v| v.iter().any(|x| !x.is_finite())) {
                bad.push(format!("{name}: entries must be finite"));
            }
        }
        if t.null.is_some_and(|x| !x.is_finite()) {
            bad.push("test.null: must be finite".into());
        }
    }

    fn validate_simulate(&self, bad: &mut Vec<String>) {
        let s = &self.simulate;
        let ns = s.n.as_ref().map_or(vec![150], OneOrMany::to_vec);
        let ps = s.p.as_ref().map_or(vec![100], OneOrMany::to_vec);
        if ns.len() != ps.len() {
            bad.push(format!("simulate.n / simulate.p: {} sample sizes for {} dimensions", ns.len(), ps.len()));
        }
        if ns.is_empty() || s.rho.as_ref().is_some_and(|r| r.to_vec().is_empty()) {
            bad.push("simulate: n, p and rho must not be empty lists".into());
        }
        let mut seen = Vec::new();
        for c in self.sim_configs() {
            for problem in c.problems() {
                if !seen.contains(&problem) {
                    seen.push(problem);
                }
            }
        }
        bad.extend(seen);
    }
}

fn one(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(vec![msg.into()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Debias,
    Test,
    Simulate,
}

/// The penalty norm and the weak norm used by nodewise regression, both
/// over the full design including any intercept column.
pub fn design_norms(spec: &NormSpec, intercept: bool) -> (Norm, Norm) {
    let lead = usize::from(intercept);
    (spec.norm.clone(), spec.weak_norm().with_leading(lead))
}
