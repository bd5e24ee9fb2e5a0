//! Total-degree multi-indices and tensor-product basis evaluation.

use serde::{Deserialize, Serialize};

use crate::apc::OrthonormalBasis1D;
use crate::error::{Error, Result};

/// Default upper bound on the number of terms of one basis.
pub const DEFAULT_TERM_CAP: usize = 1_000_000;

/// `(n + d)! / (n! d!)`, or `None` on overflow.
pub fn term_count(n: usize, d: usize) -> Option<usize> {
    let mut acc: u128 = 1;
    for i in 1..=d as u128 {
        acc = acc.checked_mul(n as u128 + i)? / i;
    }
    usize::try_from(acc).ok()
}

/// Multi-indices `α ∈ ℕⁿ` with `Σ α_j ≤ d`, in graded-lexicographic order.
///
/// Within one total degree the tuples are sorted in descending lexicographic
/// order, so the first-order block reads `(1,0,…), (0,1,…), …`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    n_inputs: usize,
    degree: usize,
    indices: Vec<Vec<u32>>,
}

impl MultiIndexSet {
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.indices[i]
    }

    /// Non-zero entries `(input, power)` of every index.
    pub fn sparse_terms(&self) -> Vec<Vec<(usize, u32)>> {
        self.indices
            .iter()
            .map(|alpha| {
                alpha
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a > 0)
                    .map(|(j, &a)| (j, a))
                    .collect()
            })
            .collect()
    }
}

/// Enumerates the total-degree set with the default term cap.
pub fn enumerate_total_degree(n: usize, d: usize) -> Result<MultiIndexSet> {
    enumerate_total_degree_capped(n, d, DEFAULT_TERM_CAP)
}

pub fn enumerate_total_degree_capped(n: usize, d: usize, cap: usize) -> Result<MultiIndexSet> {
    if n == 0 {
        return Err(Error::InvalidArchitecture("multi-index needs n ≥ 1".into()));
    }
    match term_count(n, d) {
        Some(c) if c <= cap => {}
        Some(c) => {
            return Err(Error::BasisTooLarge {
                requested: c.to_string(),
                cap,
            })
        }
        None => {
            return Err(Error::BasisTooLarge {
                requested: format!("C({}, {d})", n + d),
                cap,
            })
        }
    }
    let mut indices = Vec::new();
    let mut current = vec![0u32; n];
    for total in 0..=d {
        fill(&mut indices, &mut current, 0, total as u32);
    }
    Ok(MultiIndexSet {
        n_inputs: n,
        degree: d,
        indices,
    })
}

fn fill(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    for a in (0..=remaining).rev() {
        current[pos] = a;
        fill(out, current, pos + 1, remaining - a);
    }
    current[pos] = 0;
}

/// Evaluates `Ψ_α(x) = Π_j φ_j^(α_j)(x_j)` for every index of `idx`.
///
/// A factor whose power exceeds the degree of its basis evaluates to zero;
/// this is how truncated (degenerate) signals drop out of a layer.
pub fn eval_multivariate(
    bases: &[OrthonormalBasis1D],
    idx: &MultiIndexSet,
    point: &[f64],
) -> Result<Vec<f64>> {
    if bases.len() != idx.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: idx.n_inputs(),
            got: bases.len(),
        });
    }
    if point.len() != idx.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: idx.n_inputs(),
            got: point.len(),
        });
    }
    let tables: Vec<Vec<f64>> = bases
        .iter()
        .zip(point)
        .map(|(b, &x)| {
            let mut v = vec![0.0; b.degree() + 1];
            b.eval_all(x, &mut v);
            v
        })
        .collect();
    Ok(idx
        .indices()
        .iter()
        .map(|alpha| {
            alpha
                .iter()
                .zip(&tables)
                .map(|(&a, t)| t.get(a as usize).copied().unwrap_or(0.0))
                .product()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apc::{univariate_basis, MomentSet};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn legendre() -> OrthonormalBasis1D {
        let m = (0..=6)
            .map(|k| if k % 2 == 1 { 0.0 } else { 1.0 / (k as f64 + 1.0) })
            .collect();
        univariate_basis(&MomentSet::new(m).unwrap(), 3).unwrap()
    }

    fn hermite() -> OrthonormalBasis1D {
        let m = vec![1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0];
        univariate_basis(&MomentSet::new(m).unwrap(), 3).unwrap()
    }

    #[test]
    fn table_counts() {
        assert_eq!(enumerate_total_degree(3, 2).unwrap().len(), 10);
        assert_eq!(enumerate_total_degree(10, 4).unwrap().len(), 1001);
        let one = enumerate_total_degree(1, 0).unwrap();
        assert_eq!(one.indices(), &[vec![0]]);
    }

    #[test]
    fn graded_lex_order() {
        let s = enumerate_total_degree(2, 2).unwrap();
        let expected: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(s.indices(), expected.as_slice());
    }

    #[test]
    fn cap_is_enforced() {
        let err = enumerate_total_degree_capped(10, 4, 1000).unwrap_err();
        assert_eq!(err.code(), "basis-too-large");
        assert!(enumerate_total_degree(200, 8).is_err());
    }

    #[test]
    fn multivariate_examples() {
        let idx = enumerate_total_degree(2, 2).unwrap();
        let bases = vec![legendre(), legendre()];
        let v = eval_multivariate(&bases, &idx, &[1.0, 1.0]).unwrap();
        assert_eq!(v[0], 1.0);
        // α = (1,1) sits at position 4
        assert_abs_diff_eq!(v[4], 3.0, epsilon = 1e-12);

        let bases = vec![hermite(), hermite()];
        let v = eval_multivariate(&bases, &idx, &[0.0, 0.83]).unwrap();
        assert_abs_diff_eq!(v[3], -1.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn multivariate_dimension_mismatch() {
        let idx = enumerate_total_degree(2, 1).unwrap();
        let err = eval_multivariate(&[legendre()], &idx, &[0.0, 0.0]).unwrap_err();
        assert_eq!(err.code(), "dimension-mismatch");
        let err = eval_multivariate(&[legendre(), legendre()], &idx, &[0.0]).unwrap_err();
        assert_eq!(err.code(), "dimension-mismatch");
    }

    proptest! {
        #[test]
        fn cardinality_and_ordering(n in 1usize..6, d in 0usize..6) {
            let s = enumerate_total_degree(n, d).unwrap();
            prop_assert_eq!(s.len(), term_count(n, d).unwrap());
            prop_assert!(s.get(0).iter().all(|&a| a == 0));
            for w in s.indices().windows(2) {
                let (ta, tb) = (w[0].iter().sum::<u32>(), w[1].iter().sum::<u32>());
                prop_assert!(ta < tb || (ta == tb && w[0] > w[1]));
            }
            for a in s.indices() {
                prop_assert!(a.iter().sum::<u32>() as usize <= d);
            }
        }
    }
}
