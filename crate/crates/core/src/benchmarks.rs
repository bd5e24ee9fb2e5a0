//! Benchmark functions, validation metrics and convergence sweeps.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::{count_weights, Activation, BasisMode, LayerSpec, NetworkState};
use crate::sampling::{generate, monte_carlo_points, MarginalSpec, Strategy};
use crate::trainer::{train_lm, ApcExpansion, TrainingConfig};

pub const ISHIGAMI_A: f64 = 7.0;
pub const ISHIGAMI_B: f64 = 0.1;

pub fn ishigami(w: &[f64]) -> f64 {
    w[0].sin() + ISHIGAMI_A * w[1].sin().powi(2) + ISHIGAMI_B * w[2].powi(4) * w[0].sin()
}

/// Variance of the Ishigami function under U(−π, π)³.
pub fn ishigami_variance() -> f64 {
    let (a, b) = (ISHIGAMI_A, ISHIGAMI_B);
    a * a / 8.0 + b * PI.powi(4) / 5.0 + b * b * PI.powi(8) / 18.0 + 0.5
}

/// First-order Sobol indices of the Ishigami function under U(−π, π)³.
pub fn ishigami_first_order() -> [f64; 3] {
    let (a, b) = (ISHIGAMI_A, ISHIGAMI_B);
    let v = ishigami_variance();
    let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
    let v2 = a * a / 8.0;
    [v1 / v, v2 / v, 0.0]
}

pub fn on10(w: &[f64]) -> f64 {
    let head = (w[0] * w[0] + w[1] - 1.0).powi(2) + w[0] * w[0] + 0.1 * w[0] * w[1].exp() + 1.0;
    let tail: f64 = (2..10).map(|i| w[i].powi(3) / (i + 1) as f64).sum();
    head + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Ishigami,
    On10,
}

impl Problem {
    pub fn n_inputs(self) -> usize {
        match self {
            Problem::Ishigami => 3,
            Problem::On10 => 10,
        }
    }

    pub fn marginals(self) -> Vec<MarginalSpec> {
        let (a, b) = match self {
            Problem::Ishigami => (-PI, PI),
            Problem::On10 => (-5.0, 5.0),
        };
        vec![MarginalSpec::Uniform { a, b }; self.n_inputs()]
    }

    pub fn eval(self, w: &[f64]) -> f64 {
        match self {
            Problem::Ishigami => ishigami(w),
            Problem::On10 => on10(w),
        }
    }

    pub fn dataset(self, inputs: DMatrix<f64>) -> Result<Dataset> {
        Dataset::from_function(inputs, |w| self.eval(w))
    }

    /// Training sizes of the published comparison.
    pub fn default_sizes(self) -> Vec<usize> {
        match self {
            Problem::Ishigami => vec![10, 100, 1000],
            Problem::On10 => vec![100, 500, 1000],
        }
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ishigami" => Ok(Problem::Ishigami),
            "on10" | "on-10" => Ok(Problem::On10),
            other => Err(Error::InvalidConfig(format!("unknown benchmark '{other}'"))),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Ishigami => "ishigami",
            Problem::On10 => "on10",
        })
    }
}

/// Validation metrics. Relative errors are `None` when the reference mean
/// (or standard deviation) is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub rel_mean_err: Option<f64>,
    pub rel_std_err: Option<f64>,
}

/// Space-averaged metrics of vector-valued outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorMetricReport {
    pub averaged_mse: f64,
    pub averaged_mean_err: f64,
    pub averaged_std_err: f64,
}

fn mean_and_sample_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn compute_metrics(predictions: &[f64], references: &[f64]) -> Result<MetricReport> {
    if predictions.len() != references.len() {
        return Err(Error::DimensionMismatch {
            expected: references.len(),
            got: predictions.len(),
        });
    }
    if references.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    let mse = predictions
        .iter()
        .zip(references)
        .map(|(p, r)| (p - r).powi(2))
        .sum::<f64>()
        / references.len() as f64;
    let (mp, sp) = mean_and_sample_std(predictions);
    let (mr, sr) = mean_and_sample_std(references);
    let rel = |a: f64, b: f64| if b == 0.0 { None } else { Some((a - b) / b) };
    Ok(MetricReport {
        mse,
        rel_mean_err: rel(mp, mr),
        rel_std_err: rel(sp, sr),
    })
}

/// Column `k` holds output component `k`; rows are validation points.
pub fn compute_metrics_vector(predictions: &DMatrix<f64>, references: &DMatrix<f64>) -> Result<VectorMetricReport> {
    if predictions.shape() != references.shape() {
        return Err(Error::DimensionMismatch {
            expected: references.len(),
            got: predictions.len(),
        });
    }
    let (v_n, m) = references.shape();
    if m == 0 || v_n < 2 {
        return Err(Error::EmptyDataset);
    }
    let mut sq = 0.0;
    let mut dmean = 0.0;
    let mut dstd = 0.0;
    for k in 0..m {
        let p: Vec<f64> = predictions.column(k).iter().copied().collect();
        let r: Vec<f64> = references.column(k).iter().copied().collect();
        sq += p.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let (mp, sp) = mean_and_sample_std(&p);
        let (mr, sr) = mean_and_sample_std(&r);
        dmean += (mp - mr).powi(2);
        dstd += (sp - sr).powi(2);
    }
    let m = m as f64;
    Ok(VectorMetricReport {
        averaged_mse: sq / (m * v_n as f64),
        averaged_mean_err: dmean.sqrt() / m,
        averaged_std_err: dstd.sqrt() / m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Apc,
    Dann,
    Dapcnn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Apc, Method::Dann, Method::Dapcnn];
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "apc" => Ok(Method::Apc),
            "dann" => Ok(Method::Dann),
            "dapcnn" | "dapc-nn" | "dapc" => Ok(Method::Dapcnn),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Apc => "apc",
            Method::Dann => "dann",
            Method::Dapcnn => "dapcnn",
        })
    }
}

/// What gets trained for one (size, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Architecture {
    /// Plain aPC of the given total degree, fitted by least squares.
    Apc { degree: usize },
    /// Layered network trained by Levenberg–Marquardt.
    Network { layers: Vec<LayerSpec>, mode: BasisMode },
}

impl Architecture {
    pub fn n_weights(&self, n_inputs: usize) -> Result<usize> {
        match self {
            Architecture::Apc { degree } => count_weights(n_inputs, &[LayerSpec::new(1, *degree, Activation::Identity)]),
            Architecture::Network { layers, .. } => count_weights(n_inputs, layers),
        }
    }
}

fn dann(nodes: &[usize]) -> Architecture {
    Architecture::Network {
        layers: nodes.iter().map(|&n| LayerSpec::new(n, 1, Activation::Tanh)).collect(),
        mode: BasisMode::FixedGaussianMonomial,
    }
}

fn dapc(nodes: &[usize], degrees: &[usize]) -> Architecture {
    Architecture::Network {
        layers: nodes
            .iter()
            .zip(degrees)
            .map(|(&n, &d)| LayerSpec::new(n, d, Activation::Normalized))
            .collect(),
        mode: BasisMode::Adaptive,
    }
}

/// Architectures per (training size, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureTable {
    pub rows: Vec<(usize, Method, Architecture)>,
}

impl ArchitectureTable {
    /// Architectures used for the Ishigami comparison.
    pub fn ishigami() -> Self {
        Self {
            rows: vec![
                (10, Method::Apc, Architecture::Apc { degree: 2 }),
                (100, Method::Apc, Architecture::Apc { degree: 4 }),
                (1000, Method::Apc, Architecture::Apc { degree: 6 }),
                (10, Method::Dann, dann(&[6, 6, 1])),
                (100, Method::Dann, dann(&[9, 6, 3, 1])),
                (1000, Method::Dann, dann(&[10, 8, 6, 1])),
                (10, Method::Dapcnn, dapc(&[3, 1], &[2, 2])),
                (100, Method::Dapcnn, dapc(&[3, 3, 1], &[2, 2, 2])),
                (1000, Method::Dapcnn, dapc(&[3, 3, 1], &[3, 3, 2])),
            ],
        }
    }

    /// Architectures used for the ON-10 comparison.
    pub fn on10() -> Self {
        Self {
            rows: vec![
                (100, Method::Apc, Architecture::Apc { degree: 2 }),
                (500, Method::Apc, Architecture::Apc { degree: 3 }),
                (1000, Method::Apc, Architecture::Apc { degree: 4 }),
                (100, Method::Dann, dann(&[9, 6, 3, 1])),
                (500, Method::Dann, dann(&[15, 10, 5, 1])),
                (1000, Method::Dann, dann(&[15, 10, 5, 1])),
                (100, Method::Dapcnn, dapc(&[5, 1], &[2, 3])),
                (500, Method::Dapcnn, dapc(&[10, 1], &[2, 3])),
                (1000, Method::Dapcnn, dapc(&[10, 1], &[2, 3])),
            ],
        }
    }

    pub fn for_problem(problem: Problem) -> Self {
        match problem {
            Problem::Ishigami => Self::ishigami(),
            Problem::On10 => Self::on10(),
        }
    }

    pub fn get(&self, size: usize, method: Method) -> Option<&Architecture> {
        self.rows
            .iter()
            .find(|(s, m, _)| *s == size && *m == method)
            .map(|(_, _, a)| a)
    }

    /// Architecture for `size`: the exact row if present, otherwise the row
    /// of the largest listed size not above `size` (or the smallest row).
    pub fn nearest(&self, size: usize, method: Method) -> Option<&Architecture> {
        if let Some(a) = self.get(size, method) {
            return Some(a);
        }
        let mut candidates: Vec<&(usize, Method, Architecture)> =
            self.rows.iter().filter(|(_, m, _)| *m == method).collect();
        candidates.sort_by_key(|(s, _, _)| *s);
        candidates
            .iter()
            .rev()
            .find(|(s, _, _)| *s <= size)
            .or(candidates.first())
            .map(|(_, _, a)| a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub problem: Problem,
    pub strategy: Strategy,
    pub sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub validation_size: usize,
    pub seed: u64,
    pub training: TrainingConfig,
}

impl SweepConfig {
    pub fn new(problem: Problem, seed: u64) -> Self {
        Self {
            problem,
            strategy: Strategy::Sobol,
            sizes: problem.default_sizes(),
            methods: Method::ALL.to_vec(),
            validation_size: 1000,
            seed,
            training: TrainingConfig {
                seed,
                ..TrainingConfig::default()
            },
        }
    }
}

/// One (size, method) result. `error` carries the error code and message
/// when that cell failed; the sweep itself carries on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub method: Method,
    pub n_train: usize,
    pub n_weights: usize,
    pub metrics: Option<MetricReport>,
    pub train_loss: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

/// Seed of the shared validation set, decorrelated from the training seed.
fn validation_seed(seed: u64) -> u64 {
    seed ^ 0x5bd1_e995_9e37_79b9
}

/// Shared Monte Carlo validation set of a sweep.
pub fn validation_set(problem: Problem, size: usize, seed: u64) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::EmptyDataset);
    }
    let x = monte_carlo_points(size, validation_seed(seed), &problem.marginals())?;
    problem.dataset(x)
}

/// Trains one architecture and reports validation metrics.
pub fn run_cell(
    arch: &Architecture,
    train: &Dataset,
    validation: &Dataset,
    training: &TrainingConfig,
) -> Result<(MetricReport, Option<f64>, usize)> {
    let reference = validation.response(0);
    match arch {
        Architecture::Apc { degree } => {
            let apc = ApcExpansion::fit(train, *degree, None)?;
            let pred = apc.predict_batch(validation.inputs())?;
            Ok((compute_metrics(&pred, &reference)?, None, 0))
        }
        Architecture::Network { layers, mode } => {
            let net = NetworkState::build(train.n_inputs(), layers, *mode, training.seed)?;
            let (trained, history) = train_lm(&net, train, training)?;
            let pred = trained.predict_batch(validation.inputs())?;
            let accepted = history.accepted_losses().len();
            Ok((compute_metrics(&pred, &reference)?, Some(history.final_loss()), accepted))
        }
    }
}

/// Trains every requested (size, method) cell on data from `cfg.strategy`
/// and evaluates it on one shared validation set. Rows come back ordered
/// by size, then method; identical inputs give identical rows.
pub fn convergence_sweep(cfg: &SweepConfig, table: &ArchitectureTable) -> Result<Vec<SweepRow>> {
    cfg.training.validate()?;
    if cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("sweep sizes must be strictly ascending".into()));
    }
    let validation = validation_set(cfg.problem, cfg.validation_size, cfg.seed)?;
    let marginals = cfg.problem.marginals();
    let mut cells = Vec::new();
    for &size in &cfg.sizes {
        for &method in &cfg.methods {
            cells.push((size, method));
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(size, method)| {
            let mut row = SweepRow {
                size,
                method,
                n_train: 0,
                n_weights: 0,
                metrics: None,
                train_loss: None,
                iterations: 0,
                error: None,
            };
            let outcome = (|| {
                let arch = table.nearest(size, method).ok_or_else(|| {
                    Error::InvalidConfig(format!("no architecture for {method} at size {size}"))
                })?;
                row.n_weights = arch.n_weights(cfg.problem.n_inputs())?;
                let x = generate(cfg.strategy, size, cfg.seed, &marginals)?;
                let train = cfg.problem.dataset(x)?;
                row.n_train = train.n_points();
                run_cell(arch, &train, &validation, &cfg.training)
            })();
            match outcome {
                Ok((metrics, loss, iterations)) => {
                    row.metrics = Some(metrics);
                    row.train_loss = loss;
                    row.iterations = iterations;
                }
                Err(e) => row.error = Some(format!("{}: {e}", e.code())),
            }
            row
        })
        .collect();
    Ok(rows)
}

/// CSV body of a sweep: one row per cell, relative errors `undefined`
/// when the reference statistic is zero.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
    let mut out = String::from("size,method,n_train,n_weights,mse,rel_mean_err,rel_std_err,train_loss,iterations,error\n");
    for r in rows {
        let (mse, em, es) = match &r.metrics {
            Some(m) => (m.mse.to_string(), opt(m.rel_mean_err), opt(m.rel_std_err)),
            None => (String::new(), String::new(), String::new()),
        };
        let err = r.error.as_deref().unwrap_or("").replace(['"', ','], ";");
        let loss = r.train_loss.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{mse},{em},{es},{loss},{},{err}\n",
            r.size, r.method, r.n_train, r.n_weights, r.iterations
        ));
    }
    out
}
