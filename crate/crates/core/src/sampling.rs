//! Training and validation inputs: Sobol sequences, seeded Monte Carlo,
//! marginal mapping and full-tensor Gauss grids.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apc::{univariate_basis, MomentSet, OrthonormalBasis1D};
use crate::error::{Error, Result};

/// Joe–Kuo direction numbers (new-joe-kuo-6.21201) for dimensions 2..=20:
/// `(s, a, m_1..m_s)`. Dimension 1 is the van der Corput sequence.
const DIRECTIONS: [(u32, u32, &[u32]); 19] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
];

pub const MAX_SOBOL_DIMS: usize = DIRECTIONS.len() + 1;
const BITS: usize = 32;

fn direction_vectors(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = DIRECTIONS[dim - 1];
    let s = s as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for i in 1..s {
            if (a >> (s - 1 - i)) & 1 == 1 {
                x ^= v[k - i];
            }
        }
        v[k] = x;
    }
    v
}

/// First `count` points of the unscrambled Sobol sequence in Gray-code
/// order, after dropping the first `skip` points (the origin for `skip = 1`).
pub fn sobol_points(n_dims: usize, count: usize, skip: usize) -> Result<DMatrix<f64>> {
    if n_dims == 0 || n_dims > MAX_SOBOL_DIMS {
        return Err(Error::DimensionUnsupported(n_dims));
    }
    let total = skip
        .checked_add(count)
        .filter(|&t| (t as u64) <= 1u64 << BITS)
        .ok_or_else(|| Error::InvalidConfig("sobol index exceeds 2^32".into()))?;
    let dirs: Vec<[u32; BITS]> = (0..n_dims).map(direction_vectors).collect();
    let mut state = vec![0u32; n_dims];
    let mut out = DMatrix::zeros(count, n_dims);
    let norm = 1.0 / (1u64 << BITS) as f64;
    for i in 0..total {
        if i >= skip {
            for (j, &x) in state.iter().enumerate() {
                out[(i - skip, j)] = x as f64 * norm;
            }
        }
        let c = (!i).trailing_zeros() as usize;
        if c < BITS {
            for (x, d) in state.iter_mut().zip(&dirs) {
                *x ^= d[c];
            }
        }
    }
    Ok(out)
}

/// Marginal distribution of one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarginalSpec {
    Uniform { a: f64, b: f64 },
    /// Quantiles of a stored sample (sorted on construction).
    Empirical { sample: Vec<f64> },
}

impl MarginalSpec {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidConfig(format!("uniform bounds need a < b, got ({a}, {b})")));
        }
        Ok(Self::Uniform { a, b })
    }

    pub fn empirical(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if sample.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("empirical marginal sample".into()));
        }
        sample.sort_by(|a, b| a.total_cmp(b));
        Ok(Self::Empirical { sample })
    }

    /// Inverse CDF at `u ∈ [0, 1]`; empirical marginals use linear
    /// interpolation between order statistics (type 7).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Uniform { a, b } => a + (b - a) * u,
            Self::Empirical { sample } => {
                let h = (sample.len() - 1) as f64 * u.clamp(0.0, 1.0);
                let lo = h.floor() as usize;
                let hi = (lo + 1).min(sample.len() - 1);
                sample[lo] + (h - lo as f64) * (sample[hi] - sample[lo])
            }
        }
    }

    /// Raw moments `μ_0..μ_order`; exact for uniform, sample moments otherwise.
    pub fn moments(&self, order: usize) -> Result<MomentSet> {
        match self {
            Self::Uniform { a, b } => MomentSet::new(uniform_moments(*a, *b, order)),
            Self::Empirical { sample } => crate::apc::raw_moments(sample, order),
        }
    }
}

/// `μ_k = (b^{k+1} − a^{k+1}) / ((k+1)(b − a))`.
pub fn uniform_moments(a: f64, b: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    for k in 0..=order {
        if k == 0 {
            out.push(1.0);
            continue;
        }
        // Σ_{i=0..k} a^i b^{k-i} / (k+1) avoids cancellation when a ≈ −b
        let mut acc = 0.0;
        for i in 0..=k {
            acc += a.powi(i as i32) * b.powi((k - i) as i32);
        }
        out.push(acc / (k + 1) as f64);
    }
    out
}

pub fn map_to_marginals(unit: &DMatrix<f64>, spec: &[MarginalSpec]) -> Result<DMatrix<f64>> {
    if unit.ncols() != spec.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.len(),
            got: unit.ncols(),
        });
    }
    Ok(DMatrix::from_fn(unit.nrows(), unit.ncols(), |t, j| spec[j].quantile(unit[(t, j)])))
}

pub fn monte_carlo_points(count: usize, seed: u64, spec: &[MarginalSpec]) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // row-major draw order so a longer run extends a shorter one
    let mut unit = DMatrix::zeros(count, spec.len());
    for t in 0..count {
        for j in 0..spec.len() {
            unit[(t, j)] = rng.random::<f64>();
        }
    }
    map_to_marginals(&unit, spec)
}

/// Cartesian product of the Gauss nodes of each basis; the last input
/// varies fastest.
pub fn gaussian_tensor_grid(bases: &[OrthonormalBasis1D]) -> Result<DMatrix<f64>> {
    let nodes = bases
        .iter()
        .map(|b| b.quadrature_nodes())
        .collect::<Result<Vec<_>>>()?;
    Ok(tensor_product(&nodes))
}

/// Grid together with product quadrature weights.
pub fn gaussian_tensor_rule(bases: &[OrthonormalBasis1D]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let rules = bases
        .iter()
        .map(|b| b.quadrature_rule())
        .collect::<Result<Vec<_>>>()?;
    let nodes: Vec<Vec<f64>> = rules.iter().map(|(n, _)| n.clone()).collect();
    let weights: Vec<Vec<f64>> = rules.into_iter().map(|(_, w)| w).collect();
    let grid = tensor_product(&nodes);
    let w = tensor_product(&weights);
    let w = (0..w.nrows()).map(|t| w.row(t).iter().product()).collect();
    Ok((grid, w))
}

fn tensor_product(axes: &[Vec<f64>]) -> DMatrix<f64> {
    let rows: usize = axes.iter().map(Vec::len).product();
    let mut out = DMatrix::zeros(rows, axes.len());
    for t in 0..rows {
        let mut rem = t;
        for j in (0..axes.len()).rev() {
            let n = axes[j].len();
            out[(t, j)] = axes[j][rem % n];
            rem /= n;
        }
    }
    out
}

/// Bases of degree `nodes_per_axis` built from the exact or sample moments
/// of each marginal, whose roots give `nodes_per_axis` Gauss nodes. Also
/// the natural aPC bases for data drawn from `spec`.
pub fn grid_bases(spec: &[MarginalSpec], nodes_per_axis: usize) -> Result<Vec<OrthonormalBasis1D>> {
    spec.iter()
        .map(|m| univariate_basis(&m.moments(2 * nodes_per_axis)?, nodes_per_axis))
        .collect()
}

/// Training inputs for a strategy name used by sweeps and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Sobol,
    GaussianGrid,
    MonteCarlo,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sobol" => Ok(Self::Sobol),
            "gaussian-grid" => Ok(Self::GaussianGrid),
            "monte-carlo" => Ok(Self::MonteCarlo),
            other => Err(Error::InvalidConfig(format!("unknown strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sobol => "sobol",
            Self::GaussianGrid => "gaussian-grid",
            Self::MonteCarlo => "monte-carlo",
        })
    }
}

/// `count` inputs by `strategy`. For the Gaussian grid `count` is rounded
/// down to the nearest full tensor `k^n` (at least 1 node per axis).
pub fn generate(strategy: Strategy, count: usize, seed: u64, spec: &[MarginalSpec]) -> Result<DMatrix<f64>> {
    match strategy {
        Strategy::Sobol => map_to_marginals(&sobol_points(spec.len(), count, 1)?, spec),
        Strategy::MonteCarlo => monte_carlo_points(count, seed, spec),
        Strategy::GaussianGrid => {
            let k = nodes_for_budget(count, spec.len());
            gaussian_tensor_grid(&grid_bases(spec, k)?)
        }
    }
}

/// Largest `k ≥ 1` with `k^n ≤ count`.
pub fn nodes_for_budget(count: usize, n: usize) -> usize {
    let mut k = 1usize;
    while (k + 1).checked_pow(n as u32).is_some_and(|p| p <= count) {
        k += 1;
    }
    k
}

/// L∞ star discrepancy by brute force over boxes anchored at the origin
/// with corners on the point coordinates (and 1). O(N^{n+1}); small sets only.
pub fn star_discrepancy(points: &DMatrix<f64>) -> f64 {
    let n = points.nrows();
    let d = points.ncols();
    let mut axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut v: Vec<f64> = points.column(j).iter().copied().collect();
            v.push(1.0);
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup();
            v
        })
        .collect();
    let corners = tensor_product(&std::mem::take(&mut axes));
    let mut worst = 0.0f64;
    for c in 0..corners.nrows() {
        let corner = corners.row(c);
        let volume: f64 = corner.iter().product();
        let (mut open, mut closed) = (0usize, 0usize);
        for t in 0..n {
            let p = points.row(t);
            if p.iter().zip(corner.iter()).all(|(x, y)| x < y) {
                open += 1;
            }
            if p.iter().zip(corner.iter()).all(|(x, y)| x <= y) {
                closed += 1;
            }
        }
        worst = worst
            .max(volume - open as f64 / n as f64)
            .max(closed as f64 / n as f64 - volume);
    }
    worst
}
