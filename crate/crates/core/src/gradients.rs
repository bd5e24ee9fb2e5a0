//! Derivatives of the network response with respect to its weights.
//!
//! Bases and normalization statistics are held fixed while differentiating:
//! only the signal values flowing through the layers depend on the weights.
//! For a weight of the same layer the derivative is the basis term itself,
//! `∂R/∂w_k = Ψ_k`; earlier layers are reached by the chain rule through
//! `∂Ψ/∂s` and the activation derivative.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{activation_derivative, NetworkState};

/// `∂R(ω_t)/∂w` for a batch of points; columns follow
/// [`NetworkState::flat_weights`] order.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
}

impl Jacobian {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Response and weight gradient at one input point (single backward sweep).
pub fn point_gradient(state: &NetworkState, input: &[f64]) -> Result<(f64, Vec<f64>)> {
    let caches = state.forward_cached(input, true)?;
    let layers = state.layers();
    let mut grad = vec![0.0; state.n_weights()];

    let mut offsets = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for l in layers {
        offsets.push(acc);
        acc += l.spec().n_nodes * l.n_terms();
    }

    let response = caches.last().expect("at least one layer").outputs[0];
    let mut delta = vec![1.0];
    for (l, layer) in layers.iter().enumerate().rev() {
        let cache = &caches[l];
        let m = layer.n_terms();
        for (node, &d) in delta.iter().enumerate() {
            let base = offsets[l] + node * m;
            for (g, &p) in grad[base..base + m].iter_mut().zip(&cache.psi) {
                *g = d * p;
            }
        }
        if l == 0 {
            break;
        }
        // c_i = Σ_N δ_N w_Ni
        let mut c = vec![0.0; m];
        for (w, &d) in layer.weights().iter().zip(&delta) {
            if d != 0.0 {
                for (ci, wi) in c.iter_mut().zip(w) {
                    *ci += d * wi;
                }
            }
        }
        let mut ds = vec![0.0; layer.n_in()];
        for (term, &ci) in layer.terms().iter().zip(&c) {
            if ci == 0.0 {
                continue;
            }
            for (pos, &(j, a)) in term.iter().enumerate() {
                let dphi = cache.dphi[j].get(a as usize).copied().unwrap_or(0.0);
                if dphi == 0.0 {
                    continue;
                }
                let mut partial = dphi;
                for (q, &(jj, aa)) in term.iter().enumerate() {
                    if q != pos {
                        partial *= cache.phi[jj].get(aa as usize).copied().unwrap_or(0.0);
                    }
                }
                ds[j] += ci * partial;
            }
        }
        let act = layer.spec().activation;
        let stats = layer.norm_stats();
        let mut prev = Vec::with_capacity(ds.len());
        for (j, (&dsj, &raw)) in ds.iter().zip(&cache.raw_inputs).enumerate() {
            let s = stats.map(|s| s[j]);
            prev.push(dsj * activation_derivative(act, raw, s)?);
        }
        delta = prev;
    }
    Ok((response, grad))
}

/// Responses and Jacobian over all rows of `inputs`, rows computed in parallel.
pub fn jacobian_and_responses(state: &NetworkState, inputs: &DMatrix<f64>) -> Result<(Jacobian, Vec<f64>)> {
    if !state.is_refreshed() {
        return Err(Error::BasesNotRefreshed);
    }
    if inputs.ncols() != state.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: state.n_inputs(),
            got: inputs.ncols(),
        });
    }
    let rows: Vec<(f64, Vec<f64>)> = (0..inputs.nrows())
        .into_par_iter()
        .map(|t| {
            let x: Vec<f64> = inputs.row(t).iter().copied().collect();
            point_gradient(state, &x)
        })
        .collect::<Result<_>>()?;
    let n_w = state.n_weights();
    let mut matrix = DMatrix::zeros(rows.len(), n_w);
    let mut responses = Vec::with_capacity(rows.len());
    for (t, (r, g)) in rows.into_iter().enumerate() {
        responses.push(r);
        for (k, v) in g.into_iter().enumerate() {
            matrix[(t, k)] = v;
        }
    }
    Ok((Jacobian { matrix }, responses))
}

pub fn weight_jacobian(state: &NetworkState, inputs: &DMatrix<f64>) -> Result<Jacobian> {
    jacobian_and_responses(state, inputs).map(|(j, _)| j)
}

/// Central differences with bases frozen; weight `k` moves by
/// `step · max(1, |w_k|)`.
pub fn finite_difference_jacobian(state: &NetworkState, inputs: &DMatrix<f64>, step: f64) -> Result<Jacobian> {
    let base = state.flat_weights();
    let cols: Vec<Vec<f64>> = (0..base.len())
        .into_par_iter()
        .map(|k| {
            let h = step * base[k].abs().max(1.0);
            let mut w = base.clone();
            w[k] = base[k] + h;
            let plus = state.with_flat_weights(&w)?.predict_batch(inputs)?;
            w[k] = base[k] - h;
            let minus = state.with_flat_weights(&w)?.predict_batch(inputs)?;
            Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect())
        })
        .collect::<Result<_>>()?;
    let matrix = DMatrix::from_fn(inputs.nrows(), base.len(), |t, k| cols[k][t]);
    Ok(Jacobian { matrix })
}

/// Largest entrywise relative difference. Entries are compared relative to
/// `max(|a|, |b|, 1e-3 · max(1, row max))`, so near-zero derivatives are
/// judged against the magnitude of their row.
pub fn max_relative_error(a: &Jacobian, b: &Jacobian) -> f64 {
    assert_eq!(a.matrix.shape(), b.matrix.shape());
    let mut worst = 0.0f64;
    for t in 0..a.rows() {
        let row_max = a.matrix.row(t).amax().max(b.matrix.row(t).amax()).max(1.0);
        let floor = 1e-3 * row_max;
        for k in 0..a.cols() {
            let (x, y) = (a.matrix[(t, k)], b.matrix[(t, k)]);
            let err = (x - y).abs() / x.abs().max(y.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, BasisMode, LayerSpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inputs(n: usize, dims: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, dims, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_fd(specs: &[LayerSpec], mode: BasisMode, dims: usize) -> f64 {
        let x = inputs(60, dims, 3);
        let net = NetworkState::build(dims, specs, mode, 21).unwrap().refresh_bases(&x).unwrap();
        let probe = inputs(20, dims, 4);
        let analytic = weight_jacobian(&net, &probe).unwrap();
        let numeric = finite_difference_jacobian(&net, &probe, 1e-6).unwrap();
        max_relative_error(&analytic, &numeric)
    }

    #[test]
    fn last_layer_columns_are_basis_terms() {
        let specs = [LayerSpec::new(3, 2, Activation::Normalized), LayerSpec::new(1, 2, Activation::Normalized)];
        let x = inputs(80, 3, 1);
        let net = NetworkState::build(3, &specs, BasisMode::Adaptive, 5).unwrap().refresh_bases(&x).unwrap();
        let point = [0.3, -0.2, 0.9];
        let caches = net.forward_cached(&point, false).unwrap();
        let (r, g) = point_gradient(&net, &point).unwrap();
        assert_eq!(r, net.predict(&point).unwrap());
        let offset = 30;
        for (i, psi) in caches[1].psi.iter().enumerate() {
            assert_eq!(g[offset + i], *psi);
        }
    }

    #[test]
    fn linear_model_gradient_is_weight_free() {
        let x = inputs(50, 2, 8);
        let specs = [LayerSpec::new(1, 1, Activation::Identity)];
        let net = NetworkState::build(2, &specs, BasisMode::Adaptive, 1).unwrap().refresh_bases(&x).unwrap();
        let other = net.with_flat_weights(&[4.0, -2.0, 7.0]).unwrap();
        let p = [0.4, -0.6];
        let (_, g1) = point_gradient(&net, &p).unwrap();
        let (_, g2) = point_gradient(&other, &p).unwrap();
        assert_eq!(g1, g2);
        let phi = net.layers()[0].bases().unwrap()[0].eval(1, 0.4).unwrap();
        assert_abs_diff_eq!(g1[1], phi, epsilon = 1e-15);
    }

    #[test]
    fn finite_differences_agree_for_each_activation() {
        for act in [Activation::Normalized, Activation::Tanh, Activation::Sigmoid, Activation::Identity] {
            let specs = [LayerSpec::new(3, 2, act), LayerSpec::new(1, 2, act)];
            let err = check_fd(&specs, BasisMode::Adaptive, 3);
            assert!(err < 1e-5, "{act}: {err}");
        }
        let specs = [
            LayerSpec::new(4, 1, Activation::Tanh),
            LayerSpec::new(3, 1, Activation::Tanh),
            LayerSpec::new(1, 1, Activation::Tanh),
        ];
        let err = check_fd(&specs, BasisMode::FixedGaussianMonomial, 3);
        assert!(err < 1e-5, "dann: {err}");
    }

    #[test]
    fn relu_gradients_stay_finite() {
        let specs = [LayerSpec::new(3, 2, Activation::Relu), LayerSpec::new(1, 2, Activation::Relu)];
        let x = inputs(100, 2, 6);
        let mut net = NetworkState::build(2, &specs, BasisMode::Adaptive, 2).unwrap();
        net.set_flat_weights(&vec![0.0; net.n_weights()]).unwrap();
        let net = net.refresh_bases(&x).unwrap();
        let j = weight_jacobian(&net, &x).unwrap();
        assert!(j.matrix.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_weight_network_columns() {
        // identity activation, zero weights: hidden outputs are 0 and dead,
        // so the output layer is constant and only its bias column is live.
        let specs = [LayerSpec::new(2, 1, Activation::Identity), LayerSpec::new(1, 1, Activation::Identity)];
        let x = inputs(30, 2, 2);
        let mut net = NetworkState::build(2, &specs, BasisMode::Adaptive, 2).unwrap();
        net.set_flat_weights(&vec![0.0; net.n_weights()]).unwrap();
        let net = net.refresh_bases(&x).unwrap();
        let j = weight_jacobian(&net, &x).unwrap();
        for t in 0..x.nrows() {
            for k in 0..6 {
                assert_eq!(j.matrix[(t, k)], 0.0);
            }
            assert_eq!(j.matrix[(t, 6)], 1.0);
            assert_eq!(j.matrix[(t, 7)], 0.0);
            assert_eq!(j.matrix[(t, 8)], 0.0);
        }
    }

    #[test]
    fn unrefreshed_state_is_rejected() {
        let specs = [LayerSpec::new(1, 1, Activation::Identity)];
        let net = NetworkState::build(2, &specs, BasisMode::Adaptive, 1).unwrap();
        assert_eq!(weight_jacobian(&net, &inputs(3, 2, 0)).unwrap_err().code(), "bases-not-refreshed");
    }
}
