//! Deep arbitrary polynomial chaos networks.
//!
//! Each layer expands its incoming signals in a multivariate orthonormal
//! basis (total degree `d`) and every node returns a weighted sum of the
//! basis terms, weight 0 being the bias. Layer 1 receives the raw inputs;
//! layer `L ≥ 2` receives the previous layer's node responses passed through
//! its activation. In adaptive mode the per-signal univariate bases are
//! rebuilt from the training batch by [`NetworkState::refresh_bases`]; in
//! fixed mode every basis is `{1, x}`, which turns a degree-1 network into a
//! conventional post-activation neural net.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apc::OrthonormalBasis1D;
use crate::error::{Error, Result, SignalLocation};
use crate::multiindex::{enumerate_total_degree, term_count, MultiIndexSet, DEFAULT_TERM_CAP};

/// Signals whose batch standard deviation falls below this are dead.
pub const DEAD_SIGNAL_STD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
    Normalized,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" | "linear" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "normalized" | "normalised" => Ok(Activation::Normalized),
            other => Err(Error::Parse(format!("unknown activation '{other}'"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Normalized => "normalized",
        };
        f.write_str(s)
    }
}

/// Batch mean and standard deviation used by the normalized activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

fn require_stats(stats: Option<NormStats>) -> Result<NormStats> {
    match stats {
        Some(s) if s.std > 0.0 && s.std.is_finite() => Ok(s),
        _ => Err(Error::MissingNormalizationStats),
    }
}

pub fn apply_activation(kind: Activation, x: f64, stats: Option<NormStats>) -> Result<f64> {
    Ok(match kind {
        Activation::Identity => x,
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Tanh => x.tanh(),
        Activation::Relu => x.max(0.0),
        Activation::Normalized => {
            let s = require_stats(stats)?;
            (x - s.mean) / s.std
        }
    })
}

/// Derivative of the activation with respect to its argument.
///
/// relu uses the subgradient 0 at the kink.
pub fn activation_derivative(kind: Activation, x: f64, stats: Option<NormStats>) -> Result<f64> {
    Ok(match kind {
        Activation::Identity => 1.0,
        Activation::Sigmoid => {
            let s = 1.0 / (1.0 + (-x).exp());
            s * (1.0 - s)
        }
        Activation::Tanh => {
            let t = x.tanh();
            1.0 - t * t
        }
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Normalized => 1.0 / require_stats(stats)?.std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub n_nodes: usize,
    pub degree: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(n_nodes: usize, degree: usize, activation: Activation) -> Self {
        Self {
            n_nodes,
            degree,
            activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisMode {
    Adaptive,
    FixedGaussianMonomial,
}

/// One layer: its term set, node weights, and per-signal bases.
#[derive(Debug, Clone)]
pub struct Layer {
    spec: LayerSpec,
    n_in: usize,
    index: MultiIndexSet,
    terms: Vec<Vec<(usize, u32)>>,
    weights: Vec<Vec<f64>>,
    bases: Option<Vec<OrthonormalBasis1D>>,
    norm_stats: Option<Vec<NormStats>>,
}

impl Layer {
    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn index(&self) -> &MultiIndexSet {
        &self.index
    }

    pub fn n_terms(&self) -> usize {
        self.index.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bases(&self) -> Option<&[OrthonormalBasis1D]> {
        self.bases.as_deref()
    }

    pub fn norm_stats(&self) -> Option<&[NormStats]> {
        self.norm_stats.as_deref()
    }

    pub(crate) fn terms(&self) -> &[Vec<(usize, u32)>] {
        &self.terms
    }
}

/// Complete network: architecture, weights, and per-layer bases.
#[derive(Debug, Clone)]
pub struct NetworkState {
    n_inputs: usize,
    basis_mode: BasisMode,
    layers: Vec<Layer>,
}

/// Forward-pass result for one input point.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub response: f64,
    /// Node responses (before any activation) per layer.
    pub layer_responses: Vec<Vec<f64>>,
}

/// Per-layer intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    /// Incoming values before activation (raw inputs for layer 1).
    pub raw_inputs: Vec<f64>,
    /// φ_j^(k) at the activated signals.
    pub phi: Vec<Vec<f64>>,
    /// dφ_j^(k)/ds_j, filled only when derivatives were requested.
    pub dphi: Vec<Vec<f64>>,
    /// Multivariate basis values Ψ_i.
    pub psi: Vec<f64>,
    pub outputs: Vec<f64>,
}

/// Signals whose basis had to be cut back during a tolerant refresh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefreshReport {
    pub truncated: Vec<(SignalLocation, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DegeneracyPolicy {
    Strict,
    Truncate,
}

/// Number of weights of one node: `(n_in + d)! / (n_in! d!)`.
pub fn terms_per_node(n_in: usize, degree: usize) -> Result<usize> {
    match term_count(n_in, degree) {
        Some(c) if c <= DEFAULT_TERM_CAP => Ok(c),
        Some(c) => Err(Error::BasisTooLarge {
            requested: c.to_string(),
            cap: DEFAULT_TERM_CAP,
        }),
        None => Err(Error::BasisTooLarge {
            requested: format!("C({}, {degree})", n_in + degree),
            cap: DEFAULT_TERM_CAP,
        }),
    }
}

/// Total weight count `N_w` of an architecture without building it.
pub fn count_weights(n_inputs: usize, specs: &[LayerSpec]) -> Result<usize> {
    let mut n_in = n_inputs;
    let mut total = 0usize;
    for s in specs {
        total += s.n_nodes * terms_per_node(n_in, s.degree)?;
        n_in = s.n_nodes;
    }
    Ok(total)
}

fn validate_specs(n_inputs: usize, specs: &[LayerSpec], mode: BasisMode) -> Result<()> {
    if n_inputs == 0 {
        return Err(Error::InvalidArchitecture("network needs at least one input".into()));
    }
    let last = specs
        .last()
        .ok_or_else(|| Error::InvalidArchitecture("network needs at least one layer".into()))?;
    if last.n_nodes != 1 {
        return Err(Error::InvalidArchitecture(format!(
            "last layer must have a single node, got {}",
            last.n_nodes
        )));
    }
    for (l, s) in specs.iter().enumerate() {
        if s.n_nodes == 0 || s.degree == 0 {
            return Err(Error::InvalidArchitecture(format!(
                "layer {} needs n_nodes ≥ 1 and degree ≥ 1",
                l + 1
            )));
        }
        if mode == BasisMode::FixedGaussianMonomial && s.degree != 1 {
            return Err(Error::InvalidArchitecture(format!(
                "fixed {{1, x}} bases need degree 1, layer {} has {}",
                l + 1,
                s.degree
            )));
        }
    }
    Ok(())
}

impl NetworkState {
    /// Builds a network with Gaussian weights of std `1/√M` and zero biases.
    pub fn build(n_inputs: usize, specs: &[LayerSpec], mode: BasisMode, seed: u64) -> Result<Self> {
        validate_specs(n_inputs, specs, mode)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut n_in = n_inputs;
        for spec in specs {
            terms_per_node(n_in, spec.degree)?;
            let index = enumerate_total_degree(n_in, spec.degree)?;
            let m = index.len();
            let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt()).expect("positive std");
            let weights = (0..spec.n_nodes)
                .map(|_| {
                    let mut w: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng)).collect();
                    w[0] = 0.0;
                    w
                })
                .collect();
            let bases = match mode {
                BasisMode::Adaptive => None,
                BasisMode::FixedGaussianMonomial => {
                    Some(vec![OrthonormalBasis1D::gaussian_monomial(); n_in])
                }
            };
            layers.push(Layer {
                spec: *spec,
                n_in,
                terms: index.sparse_terms(),
                index,
                weights,
                bases,
                norm_stats: None,
            });
            n_in = spec.n_nodes;
        }
        Ok(Self {
            n_inputs,
            basis_mode: mode,
            layers,
        })
    }

    /// Reassembles a network from stored parts, checking every invariant.
    pub fn from_parts(
        n_inputs: usize,
        specs: &[LayerSpec],
        mode: BasisMode,
        weights: Vec<Vec<Vec<f64>>>,
        bases: Vec<Option<Vec<OrthonormalBasis1D>>>,
        norm_stats: Vec<Option<Vec<NormStats>>>,
    ) -> Result<Self> {
        validate_specs(n_inputs, specs, mode)?;
        if weights.len() != specs.len() || bases.len() != specs.len() || norm_stats.len() != specs.len() {
            return Err(Error::InvalidArchitecture(
                "per-layer weights, bases and statistics must match the layer count".into(),
            ));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut n_in = n_inputs;
        for (l, ((spec, w), (b, ns))) in specs
            .iter()
            .zip(weights)
            .zip(bases.into_iter().zip(norm_stats))
            .enumerate()
        {
            let index = enumerate_total_degree(n_in, spec.degree)?;
            if w.len() != spec.n_nodes {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {} has {} weight vectors for {} nodes",
                    l + 1,
                    w.len(),
                    spec.n_nodes
                )));
            }
            for (node, wn) in w.iter().enumerate() {
                if wn.len() != index.len() {
                    return Err(Error::WeightCountMismatch {
                        layer: l + 1,
                        node,
                        expected: index.len(),
                        found: wn.len(),
                    });
                }
                if wn.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteInput(format!("weights of layer {} node {node}", l + 1)));
                }
            }
            if let Some(b) = &b {
                if b.len() != n_in {
                    return Err(Error::DimensionMismatch {
                        expected: n_in,
                        got: b.len(),
                    });
                }
                if b.iter().any(|basis| basis.degree() > spec.degree) {
                    return Err(Error::InvalidArchitecture(format!(
                        "layer {} basis degree exceeds the layer degree",
                        l + 1
                    )));
                }
            }
            if let Some(ns) = &ns {
                if ns.len() != n_in {
                    return Err(Error::DimensionMismatch {
                        expected: n_in,
                        got: ns.len(),
                    });
                }
                if ns.iter().any(|s| !(s.std > 0.0) || !s.mean.is_finite()) {
                    return Err(Error::MissingNormalizationStats);
                }
            }
            layers.push(Layer {
                spec: *spec,
                n_in,
                terms: index.sparse_terms(),
                index,
                weights: w,
                bases: b,
                norm_stats: ns,
            });
            n_in = spec.n_nodes;
        }
        Ok(Self {
            n_inputs,
            basis_mode: mode,
            layers,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn basis_mode(&self) -> BasisMode {
        self.basis_mode
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Total weight count `N_w`, biases included.
    pub fn n_weights(&self) -> usize {
        self.layers.iter().map(|l| l.spec.n_nodes * l.n_terms()).sum()
    }

    /// Weights flattened layer-major, node-major, term index last.
    pub fn flat_weights(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().flatten().copied())
            .collect()
    }

    /// Flat positions of every node bias.
    pub fn bias_positions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut offset = 0;
        for l in &self.layers {
            for _ in 0..l.spec.n_nodes {
                out.push(offset);
                offset += l.n_terms();
            }
        }
        out
    }

    pub fn set_flat_weights(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_weights() {
            return Err(Error::DimensionMismatch {
                expected: self.n_weights(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in &mut l.weights {
                for x in w.iter_mut() {
                    *x = it.next().expect("length checked");
                }
            }
        }
        Ok(())
    }

    pub fn with_flat_weights(&self, flat: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_flat_weights(flat)?;
        Ok(out)
    }

    /// Mutable access to one node's weights.
    pub fn node_weights_mut(&mut self, layer: usize, node: usize) -> &mut [f64] {
        &mut self.layers[layer].weights[node]
    }

    pub fn is_refreshed(&self) -> bool {
        self.layers.iter().enumerate().all(|(l, layer)| {
            layer.bases.is_some()
                && (l == 0
                    || layer.spec.activation != Activation::Normalized
                    || layer.norm_stats.is_some())
        })
    }

    /// Rebuilds every layer's bases from the training inputs, forward
    /// through the layers.
    ///
    /// A hidden signal whose activated batch std is below
    /// [`DEAD_SIGNAL_STD`] gets a degree-0 basis. Any other degeneracy is an
    /// error naming the layer and signal.
    pub fn refresh_bases(&self, inputs: &DMatrix<f64>) -> Result<NetworkState> {
        self.refresh_with(inputs, DegeneracyPolicy::Strict).map(|(s, _)| s)
    }

    /// Like [`refresh_bases`](Self::refresh_bases) but cuts a degenerate
    /// signal's basis back to its largest feasible degree instead of
    /// failing. A constant input column is still an error.
    pub fn refresh_bases_tolerant(&self, inputs: &DMatrix<f64>) -> Result<(NetworkState, RefreshReport)> {
        self.refresh_with(inputs, DegeneracyPolicy::Truncate)
    }

    fn refresh_with(&self, inputs: &DMatrix<f64>, policy: DegeneracyPolicy) -> Result<(NetworkState, RefreshReport)> {
        if inputs.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if inputs.ncols() != self.n_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs,
                got: inputs.ncols(),
            });
        }
        if inputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("training inputs".into()));
        }
        let mut out = self.clone();
        let mut report = RefreshReport::default();
        let n_points = inputs.nrows();
        // signals[j][t]: value of incoming signal j at point t, before activation
        let mut signals: Vec<Vec<f64>> = (0..self.n_inputs)
            .map(|j| inputs.column(j).iter().copied().collect())
            .collect();

        for l in 0..out.layers.len() {
            let layer_no = l + 1;
            let activation = out.layers[l].spec.activation;
            let degree = out.layers[l].spec.degree;

            let mut stats_vec = None;
            let activated: Vec<Vec<f64>> = if l == 0 {
                signals.clone()
            } else {
                let mut stats = Vec::with_capacity(signals.len());
                let mut act = Vec::with_capacity(signals.len());
                for sig in &signals {
                    let (mean, std) = mean_std(sig);
                    let s = NormStats {
                        mean,
                        std: if std < DEAD_SIGNAL_STD { 1.0 } else { std },
                    };
                    stats.push(s);
                    let a: Vec<f64> = sig
                        .iter()
                        .map(|&x| apply_activation(activation, x, Some(s)))
                        .collect::<Result<_>>()?;
                    act.push(a);
                }
                if activation == Activation::Normalized {
                    stats_vec = Some(stats);
                }
                act
            };
            out.layers[l].norm_stats = stats_vec;

            if self.basis_mode == BasisMode::Adaptive {
                let mut bases = Vec::with_capacity(activated.len());
                for (j, sig) in activated.iter().enumerate() {
                    let location = SignalLocation {
                        layer: layer_no,
                        signal: j,
                    };
                    let (_, std) = mean_std(sig);
                    if l > 0 && std < DEAD_SIGNAL_STD {
                        bases.push(OrthonormalBasis1D::from_samples(sig, 0)?);
                        report.truncated.push((location, 0));
                        continue;
                    }
                    match OrthonormalBasis1D::from_samples(sig, degree) {
                        Ok(b) => bases.push(b),
                        Err(Error::MomentDegeneracy {
                            max_feasible_degree, ..
                        }) => {
                            let recoverable = policy == DegeneracyPolicy::Truncate
                                && (l > 0 || max_feasible_degree > 0);
                            if !recoverable {
                                return Err(Error::MomentDegeneracy {
                                    max_feasible_degree,
                                    location: Some(location),
                                });
                            }
                            let b = build_feasible(sig, max_feasible_degree).map_err(|e| match e {
                                Error::MomentDegeneracy {
                                    max_feasible_degree, ..
                                } => Error::MomentDegeneracy {
                                    max_feasible_degree,
                                    location: Some(location),
                                },
                                other => other,
                            })?;
                            report.truncated.push((location, b.degree()));
                            bases.push(b);
                        }
                        Err(e) => return Err(e),
                    }
                }
                out.layers[l].bases = Some(bases);
            }

            if l + 1 < out.layers.len() {
                let layer = &out.layers[l];
                let mut next: Vec<Vec<f64>> = vec![vec![0.0; n_points]; layer.spec.n_nodes];
                let rows: Vec<Vec<f64>> = (0..n_points)
                    .into_par_iter()
                    .map(|t| {
                        let s: Vec<f64> = activated.iter().map(|a| a[t]).collect();
                        let phi = eval_tables(layer, &s);
                        let psi = eval_psi(layer, &phi);
                        node_outputs(layer, &psi)
                    })
                    .collect();
                for (t, row) in rows.into_iter().enumerate() {
                    for (node, v) in row.into_iter().enumerate() {
                        next[node][t] = v;
                    }
                }
                signals = next;
            }
        }
        Ok((out, report))
    }

    pub(crate) fn forward_cached(&self, input: &[f64], derivatives: bool) -> Result<Vec<LayerCache>> {
        if input.len() != self.n_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs,
                got: input.len(),
            });
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("network input".into()));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut raw = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let bases = layer.bases.as_ref().ok_or(Error::BasesNotRefreshed)?;
            let signals: Vec<f64> = if l == 0 {
                raw.clone()
            } else {
                let act = layer.spec.activation;
                raw.iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        let stats = layer.norm_stats.as_ref().map(|s| s[j]);
                        if act == Activation::Normalized && stats.is_none() {
                            return Err(Error::BasesNotRefreshed);
                        }
                        apply_activation(act, x, stats)
                    })
                    .collect::<Result<_>>()?
            };
            let (phi, dphi) = if derivatives {
                let mut phi = Vec::with_capacity(bases.len());
                let mut dphi = Vec::with_capacity(bases.len());
                for (b, &s) in bases.iter().zip(&signals) {
                    let mut v = vec![0.0; b.degree() + 1];
                    let mut dv = vec![0.0; b.degree() + 1];
                    b.eval_all_with_derivative(s, &mut v, &mut dv);
                    phi.push(v);
                    dphi.push(dv);
                }
                (phi, dphi)
            } else {
                (eval_tables(layer, &signals), Vec::new())
            };
            let psi = eval_psi(layer, &phi);
            let outputs = node_outputs(layer, &psi);
            caches.push(LayerCache {
                raw_inputs: raw,
                phi,
                dphi,
                psi,
                outputs: outputs.clone(),
            });
            raw = outputs;
        }
        Ok(caches)
    }

    /// Evaluates the network at one input point.
    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        let caches = self.forward_cached(input, false)?;
        let layer_responses: Vec<Vec<f64>> = caches.into_iter().map(|c| c.outputs).collect();
        let response = layer_responses.last().expect("at least one layer")[0];
        Ok(ForwardTrace {
            response,
            layer_responses,
        })
    }

    pub fn predict(&self, input: &[f64]) -> Result<f64> {
        self.forward(input).map(|t| t.response)
    }

    /// Responses at every row of `inputs`, evaluated in parallel.
    pub fn predict_batch(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        if inputs.ncols() != self.n_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs,
                got: inputs.ncols(),
            });
        }
        (0..inputs.nrows())
            .into_par_iter()
            .map(|t| {
                let x: Vec<f64> = inputs.row(t).iter().copied().collect();
                self.predict(&x)
            })
            .collect()
    }

    /// Per-layer node responses at every row of `inputs`:
    /// `out[layer][node][t]`.
    pub fn layer_responses_batch(&self, inputs: &DMatrix<f64>) -> Result<Vec<Vec<Vec<f64>>>> {
        let traces: Vec<ForwardTrace> = (0..inputs.nrows())
            .into_par_iter()
            .map(|t| {
                let x: Vec<f64> = inputs.row(t).iter().copied().collect();
                self.forward(&x)
            })
            .collect::<Result<_>>()?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                (0..layer.spec.n_nodes)
                    .map(|node| traces.iter().map(|tr| tr.layer_responses[l][node]).collect())
                    .collect()
            })
            .collect())
    }
}

fn build_feasible(sig: &[f64], mut degree: usize) -> Result<OrthonormalBasis1D> {
    loop {
        match OrthonormalBasis1D::from_samples(sig, degree) {
            Ok(b) => return Ok(b),
            Err(Error::MomentDegeneracy {
                max_feasible_degree, ..
            }) if max_feasible_degree < degree => degree = max_feasible_degree,
            Err(Error::MomentDegeneracy { .. }) if degree > 0 => degree -= 1,
            Err(e) => return Err(e),
        }
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn eval_tables(layer: &Layer, signals: &[f64]) -> Vec<Vec<f64>> {
    let bases = layer.bases.as_ref().expect("bases checked by caller");
    bases
        .iter()
        .zip(signals)
        .map(|(b, &s)| {
            let mut v = vec![0.0; b.degree() + 1];
            b.eval_all(s, &mut v);
            v
        })
        .collect()
}

fn eval_psi(layer: &Layer, phi: &[Vec<f64>]) -> Vec<f64> {
    layer
        .terms
        .iter()
        .map(|term| {
            term.iter()
                .map(|&(j, a)| phi[j].get(a as usize).copied().unwrap_or(0.0))
                .product()
        })
        .collect()
}

fn node_outputs(layer: &Layer, psi: &[f64]) -> Vec<f64> {
    layer
        .weights
        .iter()
        .map(|w| w.iter().zip(psi).map(|(a, b)| a * b).sum())
        .collect()
}

/// Analytic mean `w_0` and variance `Σ_{i≥1} w_i²` of a node response.
pub fn node_statistics(weights: &[f64]) -> (f64, f64) {
    let mean = weights.first().copied().unwrap_or(0.0);
    let var = weights.iter().skip(1).map(|w| w * w).sum();
    (mean, var)
}

/// Variance shares of one node's terms, optionally aggregated per input.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndices {
    /// `(α, S_α)` for every non-constant term, in multi-index order.
    pub terms: Vec<(Vec<u32>, f64)>,
    /// Share of terms depending on input `j` only.
    pub first_order: Vec<f64>,
    /// Share of all terms involving input `j`.
    pub total: Vec<f64>,
}

pub fn sobol_indices(weights: &[f64], idx: &MultiIndexSet) -> Result<SobolIndices> {
    if weights.len() != idx.len() {
        return Err(Error::DimensionMismatch {
            expected: idx.len(),
            got: weights.len(),
        });
    }
    let (_, var) = node_statistics(weights);
    if !(var > 0.0) {
        return Err(Error::DegenerateNode);
    }
    let n = idx.n_inputs();
    let mut first_order = vec![0.0; n];
    let mut total = vec![0.0; n];
    let mut terms = Vec::with_capacity(idx.len().saturating_sub(1));
    for (alpha, w) in idx.indices().iter().zip(weights).skip(1) {
        let s = w * w / var;
        let active: Vec<usize> = alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(j, _)| j)
            .collect();
        if active.len() == 1 {
            first_order[active[0]] += s;
        }
        for &j in &active {
            total[j] += s;
        }
        terms.push((alpha.clone(), s));
    }
    Ok(SobolIndices {
        terms,
        first_order,
        total,
    })
}
