//! Data-driven univariate orthonormal polynomials.
//!
//! A basis is built from the raw moments `μ_0..μ_2d` of a scalar signal by
//! solving the Hankel system `H m = e_k` for every degree `k ≤ d`, where
//! `H_ij = μ_{i+j}`. The solve is carried out on the standardized signal
//! `z = (x - mean) / std`; the basis keeps the shift and scale and evaluates
//! polynomials in `z`. [`OrthonormalBasis1D::monomial_coeffs`] expands them
//! back into powers of `x`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot tolerance of the Hankel Cholesky factorisation.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Imaginary parts of companion eigenvalues above this are treated as genuine.
pub const IMAG_TOLERANCE: f64 = 1e-8;

/// Raw moments `μ_0..μ_order` of one scalar signal.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    moments: Vec<f64>,
}

impl MomentSet {
    /// Wraps precomputed raw moments. `moments[0]` must be exactly 1.
    pub fn new(moments: Vec<f64>) -> Result<Self> {
        if moments.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(bad) = moments.iter().find(|m| !m.is_finite()) {
            return Err(Error::NonFiniteInput(format!("moment {bad}")));
        }
        if moments[0] != 1.0 {
            return Err(Error::InvalidConfig(format!(
                "zeroth moment must be 1, got {}",
                moments[0]
            )));
        }
        Ok(Self { moments })
    }

    pub fn order(&self) -> usize {
        self.moments.len() - 1
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn get(&self, k: usize) -> f64 {
        self.moments[k]
    }

    pub fn mean(&self) -> f64 {
        self.moments.get(1).copied().unwrap_or(0.0)
    }

    /// Moments of `(x - shift) / scale` via the binomial expansion.
    fn standardized(&self, shift: f64, scale: f64) -> Vec<f64> {
        let order = self.order();
        let mut out = vec![0.0; order + 1];
        let mut binom = vec![1.0f64; order + 1];
        for (k, slot) in out.iter_mut().enumerate() {
            // binom holds C(k, i) for i = 0..=k
            if k > 0 {
                for i in (1..k).rev() {
                    binom[i] += binom[i - 1];
                }
                binom[k] = 1.0;
            }
            let mut acc = 0.0;
            let mut neg_shift_pow = 1.0;
            for i in (0..=k).rev() {
                acc += binom[i] * self.moments[i] * neg_shift_pow;
                neg_shift_pow *= -shift;
            }
            *slot = acc / scale.powi(k as i32);
        }
        out[0] = 1.0;
        out
    }
}

/// Empirical raw moments `μ_k = (1/N) Σ x_i^k` for `k = 0..=order`.
pub fn raw_moments(samples: &[f64], order: usize) -> Result<MomentSet> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let mut sums = vec![0.0; order + 1];
    for &x in samples {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            *s += p;
            p *= x;
        }
    }
    let mut moments: Vec<f64> = sums.into_iter().map(|s| s / n).collect();
    moments[0] = 1.0;
    Ok(MomentSet { moments })
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some((i, x)) = samples.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(Error::NonFiniteInput(format!("sample {i} = {x}")));
    }
    Ok(())
}

/// Orthonormal polynomials `φ⁽⁰⁾..φ⁽ᵈ⁾` of one signal.
///
/// Row `k` of `coeffs` holds the coefficients of `φ⁽ᵏ⁾` in the standardized
/// variable `z = (x - shift) / scale`, constant term first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalBasis1D {
    shift: f64,
    scale: f64,
    coeffs: Vec<Vec<f64>>,
}

impl OrthonormalBasis1D {
    /// Rebuilds a basis from stored parts, validating the triangle shape.
    pub fn from_parts(shift: f64, scale: f64, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidConfig("basis needs at least φ⁽⁰⁾".into()));
        }
        if !(scale.is_finite() && scale > 0.0 && shift.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "basis standardization must be finite with positive scale (shift {shift}, scale {scale})"
            )));
        }
        for (k, row) in coeffs.iter().enumerate() {
            if row.len() != k + 1 {
                return Err(Error::InvalidConfig(format!(
                    "basis row {k} has {} coefficients, expected {}",
                    row.len(),
                    k + 1
                )));
            }
            if row.iter().any(|c| !c.is_finite()) || row[k] == 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "basis row {k} has a zero or non-finite leading coefficient"
                )));
            }
        }
        Ok(Self { shift, scale, coeffs })
    }

    /// The fixed `{1, x}` basis a conventional DANN node implicitly uses.
    pub fn gaussian_monomial() -> Self {
        Self {
            shift: 0.0,
            scale: 1.0,
            coeffs: vec![vec![1.0], vec![0.0, 1.0]],
        }
    }

    /// Builds the basis directly from a sample, standardizing it first.
    ///
    /// This is numerically preferable to [`univariate_basis`] on raw moments
    /// because the mean is removed before powers are taken.
    pub fn from_samples(samples: &[f64], degree: usize) -> Result<Self> {
        check_samples(samples)?;
        if degree == 0 {
            return Ok(Self::constant());
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > f64::MIN_POSITIVE) || std <= 1e-14 * mean.abs() {
            return Err(Error::MomentDegeneracy {
                max_feasible_degree: 0,
                location: None,
            });
        }
        let z: Vec<f64> = samples.iter().map(|x| (x - mean) / std).collect();
        let moments = raw_moments(&z, 2 * degree)?;
        let coeffs = hankel_orthonormal(moments.moments(), degree)?;
        Ok(Self {
            shift: mean,
            scale: std,
            coeffs,
        })
    }

    fn constant() -> Self {
        Self {
            shift: 0.0,
            scale: 1.0,
            coeffs: vec![vec![1.0]],
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Coefficient triangle in the standardized variable.
    pub fn standardized_coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// Same basis cut down to degree `degree` (no-op when already lower).
    pub fn truncated(&self, degree: usize) -> Self {
        let mut out = self.clone();
        out.coeffs.truncate(degree + 1);
        out
    }

    /// Monomial coefficients of every `φ⁽ᵏ⁾` in powers of the original `x`.
    pub fn monomial_coeffs(&self) -> Vec<Vec<f64>> {
        let (a, s) = (self.shift, self.scale);
        self.coeffs
            .iter()
            .map(|row| {
                let k = row.len() - 1;
                let mut out = vec![0.0; k + 1];
                // Σ_i c_i s^-i (x - a)^i
                let mut binom = vec![1.0f64; k + 1];
                for (i, &c) in row.iter().enumerate() {
                    if i > 0 {
                        for j in (1..i).rev() {
                            binom[j] += binom[j - 1];
                        }
                        binom[i] = 1.0;
                    }
                    let ci = c / s.powi(i as i32);
                    let mut neg_a_pow = 1.0;
                    for j in (0..=i).rev() {
                        out[j] += ci * binom[j] * neg_a_pow;
                        neg_a_pow *= -a;
                    }
                }
                out
            })
            .collect()
    }

    fn standardize(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    /// Evaluates `φ⁽ᵏ⁾(x)` by Horner's scheme.
    pub fn eval(&self, k: usize, x: f64) -> Result<f64> {
        let row = self.coeffs.get(k).ok_or(Error::DegreeOutOfRange {
            requested: k,
            available: self.degree(),
        })?;
        Ok(horner(row, self.standardize(x)))
    }

    /// Writes `φ⁽⁰⁾(x)..φ⁽ᵈ⁾(x)` into `values` (length `degree + 1`).
    pub fn eval_all(&self, x: f64, values: &mut [f64]) {
        let z = self.standardize(x);
        for (v, row) in values.iter_mut().zip(&self.coeffs) {
            *v = horner(row, z);
        }
    }

    /// Values and first derivatives with respect to `x`.
    pub fn eval_all_with_derivative(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) {
        let z = self.standardize(x);
        for ((v, dv), row) in values.iter_mut().zip(derivs.iter_mut()).zip(&self.coeffs) {
            let (p, dp) = horner_with_derivative(row, z);
            *v = p;
            *dv = dp / self.scale;
        }
    }

    /// Roots of the highest-degree polynomial, ascending.
    ///
    /// For a basis built through degree `d + 1` these are the `d + 1` Gauss
    /// nodes of the underlying measure. Computed as eigenvalues of the
    /// balanced companion matrix, then polished by Newton steps.
    pub fn quadrature_nodes(&self) -> Result<Vec<f64>> {
        let top = self.coeffs.last().expect("basis has at least one row");
        let n = top.len() - 1;
        if n == 0 {
            return Ok(Vec::new());
        }
        let lead = top[n];
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -top[i] / lead;
        }
        balance(&mut companion);
        let eig = companion.complex_eigenvalues();
        let mut roots = Vec::with_capacity(n);
        for ev in eig.iter() {
            if ev.im.abs() > IMAG_TOLERANCE * (1.0 + ev.re.abs()) {
                return Err(Error::NonRealRoots { imag: ev.im });
            }
            roots.push(polish_root(top, ev.re));
        }
        let mut nodes: Vec<f64> = roots
            .into_iter()
            .map(|z| self.shift + self.scale * z)
            .collect();
        nodes.sort_by(|a, b| a.total_cmp(b));
        Ok(nodes)
    }

    /// Gauss nodes with Christoffel weights `1 / Σ_{k<n} φ⁽ᵏ⁾(x)²`.
    pub fn quadrature_rule(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let nodes = self.quadrature_nodes()?;
        let n = nodes.len();
        let mut buf = vec![0.0; self.degree() + 1];
        let weights = nodes
            .iter()
            .map(|&x| {
                self.eval_all(x, &mut buf);
                1.0 / buf[..n].iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        Ok((nodes, weights))
    }
}

/// Builds the orthonormal basis of degree `degree` from raw moments.
///
/// Requires `moments.order() >= 2 * degree`. The moments are shifted and
/// scaled to zero mean and unit variance before the Hankel solve.
pub fn univariate_basis(moments: &MomentSet, degree: usize) -> Result<OrthonormalBasis1D> {
    if moments.order() < 2 * degree {
        return Err(Error::InvalidConfig(format!(
            "degree {degree} needs moments up to order {}, got {}",
            2 * degree,
            moments.order()
        )));
    }
    if degree == 0 {
        return Ok(OrthonormalBasis1D::constant());
    }
    let mean = moments.mean();
    let second = moments.get(2);
    let var = second - mean * mean;
    if !(var > PIVOT_TOLERANCE * second.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::MomentDegeneracy {
            max_feasible_degree: 0,
            location: None,
        });
    }
    let scale = var.sqrt();
    let standardized = moments.standardized(mean, scale);
    let coeffs = hankel_orthonormal(&standardized[..=2 * degree], degree)?;
    Ok(OrthonormalBasis1D {
        shift: mean,
        scale,
        coeffs,
    })
}

/// Solves `H_k m = e_k` for `k = 0..=degree` through one Cholesky factor of
/// the full Hankel matrix, then rescales each `m` to unit second moment.
fn hankel_orthonormal(moments: &[f64], degree: usize) -> Result<Vec<Vec<f64>>> {
    let size = degree + 1;
    let h = |i: usize, j: usize| moments[i + j];

    let mut l = vec![vec![0.0; size]; size];
    for k in 0..size {
        for j in 0..k {
            let mut acc = h(k, j);
            for p in 0..j {
                acc -= l[k][p] * l[j][p];
            }
            l[k][j] = acc / l[j][j];
        }
        let mut pivot = h(k, k);
        for p in 0..k {
            pivot -= l[k][p] * l[k][p];
        }
        if !(pivot > PIVOT_TOLERANCE * h(k, k).abs()) {
            return Err(Error::MomentDegeneracy {
                max_feasible_degree: k.saturating_sub(1),
                location: None,
            });
        }
        l[k][k] = pivot.sqrt();
    }

    let mut rows = Vec::with_capacity(size);
    for k in 0..size {
        // L y = e_k gives y = e_k / L_kk on the leading block; back-substitute Lᵀ m = y.
        let mut m = vec![0.0; k + 1];
        m[k] = 1.0 / (l[k][k] * l[k][k]);
        for i in (0..k).rev() {
            let mut acc = 0.0;
            for j in (i + 1)..=k {
                acc += l[j][i] * m[j];
            }
            m[i] = -acc / l[i][i];
        }
        let mut second_moment = 0.0;
        for i in 0..=k {
            for j in 0..=k {
                second_moment += m[i] * m[j] * h(i, j);
            }
        }
        if !(second_moment > 0.0 && second_moment.is_finite()) {
            return Err(Error::MomentDegeneracy {
                max_feasible_degree: k.saturating_sub(1),
                location: None,
            });
        }
        let norm = second_moment.sqrt();
        m.iter_mut().for_each(|c| *c /= norm);
        rows.push(m);
    }
    rows[0] = vec![1.0];
    Ok(rows)
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

fn horner_with_derivative(coeffs: &[f64], z: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn polish_root(coeffs: &[f64], mut z: f64) -> f64 {
    let (mut p, _) = horner_with_derivative(coeffs, z);
    for _ in 0..4 {
        let (pz, dpz) = horner_with_derivative(coeffs, z);
        if dpz == 0.0 || pz == 0.0 {
            break;
        }
        let candidate = z - pz / dpz;
        let (pc, _) = horner_with_derivative(coeffs, candidate);
        if pc.abs() >= p.abs() {
            break;
        }
        z = candidate;
        p = pc;
    }
    z
}

/// Parlett–Reinsch balancing with radix-2 scaling.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / 2.0;
            while c < g {
                f *= 2.0;
                c *= 4.0;
            }
            g = r * 2.0;
            while c > g {
                f /= 2.0;
                c /= 4.0;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform_moments(order: usize) -> MomentSet {
        let m = (0..=order)
            .map(|k| if k % 2 == 1 { 0.0 } else { 1.0 / (k as f64 + 1.0) })
            .collect();
        MomentSet::new(m).unwrap()
    }

    fn gaussian_moments(order: usize) -> MomentSet {
        let mut m = vec![0.0; order + 1];
        m[0] = 1.0;
        for k in (2..=order).step_by(2) {
            m[k] = m[k - 2] * (k as f64 - 1.0);
        }
        MomentSet::new(m).unwrap()
    }

    #[test]
    fn constant_sample_moments() {
        let m = raw_moments(&[2.5, 2.5, 2.5], 2).unwrap();
        assert_eq!(m.moments(), &[1.0, 2.5, 6.25]);
    }

    #[test]
    fn moments_reject_bad_samples() {
        assert!(matches!(raw_moments(&[], 3), Err(Error::EmptySample)));
        let err = raw_moments(&[1.0, f64::NAN], 3).unwrap_err();
        assert_eq!(err.code(), "non-finite-input");
    }

    #[test]
    fn hermite_from_gaussian_moments() {
        let b = univariate_basis(&gaussian_moments(6), 2).unwrap();
        let c = b.monomial_coeffs();
        assert_eq!(c[0], vec![1.0]);
        assert_abs_diff_eq!(c[1][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1][1], 1.0, epsilon = 1e-12);
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(c[2][0], -r, epsilon = 1e-12);
        assert_abs_diff_eq!(c[2][1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[2][2], r, epsilon = 1e-12);
        assert_abs_diff_eq!(b.eval(2, 0.0).unwrap(), -r, epsilon = 1e-12);
    }

    #[test]
    fn legendre_from_uniform_moments() {
        let b = univariate_basis(&uniform_moments(4), 2).unwrap();
        let c = b.monomial_coeffs();
        assert_abs_diff_eq!(c[1][1], 3f64.sqrt(), epsilon = 1e-12);
        let s5 = 5f64.sqrt() / 2.0;
        assert_abs_diff_eq!(c[2][0], -s5, epsilon = 1e-12);
        assert_abs_diff_eq!(c[2][2], 3.0 * s5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.eval(1, 1.0).unwrap(), 3f64.sqrt(), epsilon = 1e-12);
        assert_eq!(b.eval(0, 7.3).unwrap(), 1.0);
    }

    #[test]
    fn degree_zero_is_constant() {
        let b = univariate_basis(&MomentSet::new(vec![1.0, 4.0, 17.0]).unwrap(), 0).unwrap();
        assert_eq!(b.degree(), 0);
        assert_eq!(b.eval(0, -3.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_out_of_range() {
        let b = univariate_basis(&uniform_moments(4), 2).unwrap();
        assert_eq!(b.eval(3, 0.0).unwrap_err().code(), "degree-out-of-range");
    }

    #[test]
    fn two_point_sample_is_degenerate_at_degree_two() {
        let samples = [-1.0, 1.0, -1.0, 1.0];
        let err = OrthonormalBasis1D::from_samples(&samples, 2).unwrap_err();
        match err {
            Error::MomentDegeneracy {
                max_feasible_degree, ..
            } => assert_eq!(max_feasible_degree, 1),
            other => panic!("unexpected {other:?}"),
        }
        let m = raw_moments(&samples, 4).unwrap();
        assert_eq!(univariate_basis(&m, 2).unwrap_err().code(), "moment-degeneracy");
        assert!(univariate_basis(&m, 1).is_ok());
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let err = OrthonormalBasis1D::from_samples(&[3.0; 10], 1).unwrap_err();
        assert_eq!(err.code(), "moment-degeneracy");
        let m = raw_moments(&[3.0; 10], 2).unwrap();
        assert_eq!(univariate_basis(&m, 1).unwrap_err().code(), "moment-degeneracy");
    }

    #[test]
    fn gauss_legendre_and_hermite_nodes() {
        let b = univariate_basis(&uniform_moments(4), 2).unwrap();
        let nodes = b.quadrature_nodes().unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(nodes[0], -r, epsilon = 1e-14);
        assert_abs_diff_eq!(nodes[1], r, epsilon = 1e-14);

        let b = univariate_basis(&gaussian_moments(4), 2).unwrap();
        let nodes = b.quadrature_nodes().unwrap();
        assert_abs_diff_eq!(nodes[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(nodes[1], 1.0, epsilon = 1e-14);

        let b = univariate_basis(&uniform_moments(6), 3).unwrap();
        let nodes = b.quadrature_nodes().unwrap();
        let r = (3.0f64 / 5.0).sqrt();
        assert_abs_diff_eq!(nodes[0], -r, epsilon = 1e-14);
        assert_abs_diff_eq!(nodes[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(nodes[2], r, epsilon = 1e-14);
    }

    #[test]
    fn derivative_matches_monomial_form() {
        let samples: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 10.0 + 2.0).collect();
        let b = OrthonormalBasis1D::from_samples(&samples, 4).unwrap();
        let mono = b.monomial_coeffs();
        let mut v = vec![0.0; 5];
        let mut dv = vec![0.0; 5];
        let x = 4.7;
        b.eval_all_with_derivative(x, &mut v, &mut dv);
        for k in 0..=4 {
            let direct: f64 = mono[k].iter().enumerate().map(|(i, c)| c * x.powi(i as i32)).sum();
            let deriv: f64 = mono[k]
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c * x.powi(i as i32 - 1))
                .sum();
            assert_abs_diff_eq!(v[k], direct, epsilon = 1e-8 * direct.abs().max(1.0));
            assert_abs_diff_eq!(dv[k], deriv, epsilon = 1e-8 * deriv.abs().max(1.0));
        }
    }

    #[test]
    fn from_parts_validates_shape() {
        assert!(OrthonormalBasis1D::from_parts(0.0, 1.0, vec![vec![1.0], vec![0.0]]).is_err());
        assert!(OrthonormalBasis1D::from_parts(0.0, 1.0, vec![vec![1.0], vec![0.0, 1.0, 2.0]]).is_err());
        assert!(OrthonormalBasis1D::from_parts(0.0, 0.0, vec![vec![1.0]]).is_err());
        let b = OrthonormalBasis1D::from_parts(0.0, 1.0, vec![vec![1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(b, OrthonormalBasis1D::gaussian_monomial());
    }
}
