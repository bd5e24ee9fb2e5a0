//! Weight fitting: Levenberg–Marquardt on the regularized loss
//!
//! ```text
//! loss(w) = (1/T) Σ_t (R(ω_t) − R_t)²  +  (1/N_w) Σ_i w_i²
//! ```
//!
//! for multi-layer networks, and a pseudoinverse least-squares solver for
//! single-layer expansions.
//!
//! The regularization enters Levenberg–Marquardt as `N_w` extra residuals
//! `√(1/N_w)·w_i`, so the normal equations are
//! `(A + λ·diag(A)) δ = −g` with `A = JᵀJ/T + I/N_w` and
//! `g = Jᵀr/T + w/N_w`. Bases are rebuilt from the training inputs for every
//! trial weight vector, so the accepted losses are losses of complete,
//! consistent network states.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::apc::OrthonormalBasis1D;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gradients::jacobian_and_responses;
use crate::multiindex::{enumerate_total_degree, eval_multivariate, MultiIndexSet};
use crate::network::NetworkState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub max_iterations: usize,
    pub damping_init: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Stop when the ∞-norm of the loss gradient drops below this.
    pub grad_tol: f64,
    /// Stop when the relative loss decrease over 5 iterations drops below this.
    pub loss_tol: f64,
    /// Include node biases in the weight penalty.
    pub regularization_on_bias: bool,
    /// Multiplier of the mean-square-weights term (1 reproduces the plain loss).
    pub msw_weight: f64,
    /// Damping escalations tried per iteration before giving up.
    pub max_escalations: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            damping_init: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            grad_tol: 1e-10,
            loss_tol: 1e-12,
            regularization_on_bias: true,
            msw_weight: 1.0,
            max_escalations: 20,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !positive(self.damping_init) || !positive(self.grad_tol) || !positive(self.loss_tol) {
            return Err(Error::InvalidConfig("damping and tolerances must be positive".into()));
        }
        if !(self.damping_up > 1.0 && self.damping_down > 0.0 && self.damping_down < 1.0) {
            return Err(Error::InvalidConfig(
                "damping factors must satisfy damping_up > 1 > damping_down > 0".into(),
            ));
        }
        if !(self.msw_weight >= 0.0 && self.msw_weight.is_finite()) {
            return Err(Error::InvalidConfig("msw_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub msw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub loss: f64,
    pub mse: f64,
    pub msw: f64,
    pub damping: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxIterations,
    GradientTolerance,
    LossTolerance,
    DampingExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub initial: LossParts,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Signals whose basis had to be truncated at the final state.
    pub warnings: Vec<String>,
}

impl TrainingHistory {
    pub fn final_loss(&self) -> f64 {
        self.records
            .iter()
            .rev()
            .find(|r| r.accepted)
            .map(|r| r.loss)
            .unwrap_or(self.initial.total)
    }

    pub fn accepted_losses(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.accepted).map(|r| r.loss).collect()
    }
}

fn msw_term(weights: &[f64], bias: &[bool], cfg: &TrainingConfig) -> f64 {
    let n_w = weights.len() as f64;
    let sum: f64 = weights
        .iter()
        .zip(bias)
        .filter(|(_, &b)| cfg.regularization_on_bias || !b)
        .map(|(w, _)| w * w)
        .sum();
    cfg.msw_weight * sum / n_w
}

fn bias_mask(state: &NetworkState) -> Vec<bool> {
    let mut mask = vec![false; state.n_weights()];
    for p in state.bias_positions() {
        mask[p] = true;
    }
    mask
}

/// Loss of a refreshed state on the first response column of `data`.
pub fn loss(state: &NetworkState, data: &Dataset, cfg: &TrainingConfig) -> Result<LossParts> {
    if data.n_points() == 0 {
        return Err(Error::EmptyDataset);
    }
    let predictions = state.predict_batch(data.inputs())?;
    let y = data.responses().column(0);
    let mse = predictions
        .iter()
        .zip(y.iter())
        .map(|(p, r)| (p - r).powi(2))
        .sum::<f64>()
        / data.n_points() as f64;
    let msw = msw_term(&state.flat_weights(), &bias_mask(state), cfg);
    Ok(LossParts {
        total: mse + msw,
        mse,
        msw,
    })
}

fn refresh(state: &NetworkState, data: &Dataset) -> Result<(NetworkState, Vec<String>)> {
    let (s, report) = state.refresh_bases_tolerant(data.inputs())?;
    let warnings = report
        .truncated
        .iter()
        .map(|(loc, d)| format!("{loc}: basis reduced to degree {d}"))
        .collect();
    Ok((s, warnings))
}

/// Levenberg–Marquardt (Marquardt scaling) with bases rebuilt at every trial.
///
/// Returns the best state seen. Fails with `lm-stall` only when the damped
/// normal equations could not be solved at any damping level.
pub fn train_lm(state: &NetworkState, data: &Dataset, cfg: &TrainingConfig) -> Result<(NetworkState, TrainingHistory)> {
    cfg.validate()?;
    if data.n_points() == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.distinct_inputs() < 2 {
        return Err(Error::InvalidConfig("training needs at least two distinct input points".into()));
    }
    if data.n_inputs() != state.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: state.n_inputs(),
            got: data.n_inputs(),
        });
    }

    let t_n = data.n_points() as f64;
    let y = DVector::from_iterator(data.n_points(), data.responses().column(0).iter().copied());
    let bias = bias_mask(state);
    let n_w = state.n_weights();
    let reg: Vec<f64> = bias
        .iter()
        .map(|&b| if cfg.regularization_on_bias || !b { cfg.msw_weight / n_w as f64 } else { 0.0 })
        .collect();

    let (mut current, mut warnings) = refresh(state, data)?;
    let mut current_loss = loss(&current, data, cfg)?;
    let initial = current_loss;
    let mut records = Vec::new();
    let mut loss_trace = vec![current_loss.total];
    let mut damping = cfg.damping_init;
    let mut termination = Termination::MaxIterations;

    for _ in 0..cfg.max_iterations {
        let (jac, preds) = jacobian_and_responses(&current, data.inputs())?;
        let w = DVector::from_vec(current.flat_weights());
        let r = DVector::from_vec(preds) - &y;
        // explicit transpose: the plain product goes through the blocked GEMM
        let jt = jac.matrix.transpose();
        let mut a = &jt * &jac.matrix / t_n;
        let mut g = &jt * &r / t_n;
        for k in 0..n_w {
            a[(k, k)] += reg[k];
            g[k] += reg[k] * w[k];
        }
        if g.amax() < cfg.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let diag_floor = 1e-12 * a.diagonal().amax().max(f64::MIN_POSITIVE);
        let diag: Vec<f64> = (0..n_w).map(|k| a[(k, k)].max(diag_floor)).collect();

        let mut accepted = false;
        let mut any_solved = false;
        for _ in 0..=cfg.max_escalations {
            let mut m = a.clone();
            for k in 0..n_w {
                m[(k, k)] += damping * diag[k];
            }
            let step = Cholesky::new(m).map(|c| c.solve(&(-&g)));
            let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
                damping = (damping * cfg.damping_up).min(1e20);
                continue;
            };
            any_solved = true;
            let trial_w = &w + &step;
            let evaluated = current
                .with_flat_weights(trial_w.as_slice())
                .and_then(|s| refresh(&s, data))
                .and_then(|(s, warn)| loss(&s, data, cfg).map(|l| (s, warn, l)));
            match evaluated {
                Ok((trial, warn, trial_loss)) if trial_loss.total.is_finite() && trial_loss.total < current_loss.total => {
                    records.push(IterationRecord {
                        loss: trial_loss.total,
                        mse: trial_loss.mse,
                        msw: trial_loss.msw,
                        damping,
                        accepted: true,
                    });
                    current = trial;
                    current_loss = trial_loss;
                    warnings = warn;
                    damping = (damping * cfg.damping_down).max(1e-15);
                    accepted = true;
                    break;
                }
                Ok((_, _, trial_loss)) => {
                    records.push(IterationRecord {
                        loss: trial_loss.total,
                        mse: trial_loss.mse,
                        msw: trial_loss.msw,
                        damping,
                        accepted: false,
                    });
                }
                Err(_) => {
                    records.push(IterationRecord {
                        loss: f64::INFINITY,
                        mse: f64::INFINITY,
                        msw: f64::INFINITY,
                        damping,
                        accepted: false,
                    });
                }
            }
            damping = (damping * cfg.damping_up).min(1e20);
        }
        if !accepted {
            if !any_solved {
                return Err(Error::LmStall {
                    reason: "damped normal equations are not solvable".into(),
                    best: Box::new(current),
                });
            }
            termination = Termination::DampingExhausted;
            break;
        }
        loss_trace.push(current_loss.total);
        if loss_trace.len() > 5 {
            let old = loss_trace[loss_trace.len() - 6];
            let rel = (old - current_loss.total) / old.abs().max(f64::MIN_POSITIVE);
            if rel < cfg.loss_tol {
                termination = Termination::LossTolerance;
                break;
            }
        }
    }

    Ok((
        current,
        TrainingHistory {
            initial,
            records,
            termination,
            warnings,
        },
    ))
}

/// Minimum-norm solution of `(DᵀD + ridge·I) w = Dᵀy` through the SVD of
/// `D`, discarding singular values below `1e-12·σ_max`.
pub fn fit_least_squares(design: &DMatrix<f64>, responses: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if design.nrows() != responses.len() {
        return Err(Error::DimensionMismatch {
            expected: design.nrows(),
            got: responses.len(),
        });
    }
    if design.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidConfig(format!("ridge must be non-negative, got {ridge}")));
    }
    let svd = SVD::new(design.clone(), true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let sigma_max = svd.singular_values.max();
    let cutoff = 1e-12 * sigma_max;
    let y = DVector::from_column_slice(responses);
    let uty = u.tr_mul(&y);
    let mut coeff = DVector::zeros(svd.singular_values.len());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            coeff[k] = s / (s * s + ridge) * uty[k];
        }
    }
    Ok(v_t.tr_mul(&coeff).iter().copied().collect())
}

/// Default ridge `T_N / N_w`, which makes the least-squares problem the
/// regularized loss scaled by `T_N`.
pub fn default_ridge(n_points: usize, n_weights: usize) -> f64 {
    n_points as f64 / n_weights as f64
}

/// Refreshes a single-layer network and fits its weights by least squares.
pub fn fit_single_layer(state: &NetworkState, data: &Dataset, ridge: Option<f64>) -> Result<NetworkState> {
    if state.layers().len() != 1 {
        return Err(Error::InvalidArchitecture(
            "least-squares fitting needs a single-layer network".into(),
        ));
    }
    let refreshed = state.refresh_bases(data.inputs())?;
    let (design, _) = jacobian_and_responses(&refreshed, data.inputs())?;
    let ridge = ridge.unwrap_or_else(|| default_ridge(data.n_points(), refreshed.n_weights()));
    let w = fit_least_squares(&design.matrix, &data.response(0), ridge)?;
    refreshed.with_flat_weights(&w)
}

/// Plain aPC expansion: per-input data-driven bases, total-degree product
/// basis and least-squares coefficients.
#[derive(Debug, Clone)]
pub struct ApcExpansion {
    bases: Vec<OrthonormalBasis1D>,
    index: MultiIndexSet,
    weights: Vec<f64>,
}

impl ApcExpansion {
    /// Fits on the first response column; ridge defaults to `T_N / N_w`.
    /// The bases come from the sample moments of each input column.
    pub fn fit(data: &Dataset, degree: usize, ridge: Option<f64>) -> Result<Self> {
        let bases = (0..data.n_inputs())
            .map(|j| {
                let col: Vec<f64> = data.inputs().column(j).iter().copied().collect();
                OrthonormalBasis1D::from_samples(&col, degree)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::fit_with_bases(data, bases, ridge)
    }

    /// Like [`fit`](Self::fit) with given per-input bases, e.g. built from the
    /// known input distribution. The degree is the lowest basis degree.
    pub fn fit_with_bases(data: &Dataset, bases: Vec<OrthonormalBasis1D>, ridge: Option<f64>) -> Result<Self> {
        if bases.len() != data.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: data.n_inputs(),
                got: bases.len(),
            });
        }
        let degree = bases.iter().map(|b| b.degree()).min().unwrap_or(0);
        let index = enumerate_total_degree(bases.len(), degree)?;
        let mut expansion = Self {
            bases,
            index,
            weights: Vec::new(),
        };
        let design = expansion.design_matrix(data.inputs())?;
        let ridge = ridge.unwrap_or_else(|| default_ridge(data.n_points(), expansion.index.len()));
        expansion.weights = fit_least_squares(&design, &data.response(0), ridge)?;
        Ok(expansion)
    }

    pub fn design_matrix(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut design = DMatrix::zeros(inputs.nrows(), self.index.len());
        for t in 0..inputs.nrows() {
            let x: Vec<f64> = inputs.row(t).iter().copied().collect();
            let psi = eval_multivariate(&self.bases, &self.index, &x)?;
            for (k, v) in psi.into_iter().enumerate() {
                design[(t, k)] = v;
            }
        }
        Ok(design)
    }

    pub fn predict(&self, point: &[f64]) -> Result<f64> {
        let psi = eval_multivariate(&self.bases, &self.index, point)?;
        Ok(psi.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }

    pub fn predict_batch(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        (0..inputs.nrows())
            .map(|t| {
                let x: Vec<f64> = inputs.row(t).iter().copied().collect();
                self.predict(&x)
            })
            .collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index(&self) -> &MultiIndexSet {
        &self.index
    }

    pub fn bases(&self) -> &[OrthonormalBasis1D] {
        &self.bases
    }
}
