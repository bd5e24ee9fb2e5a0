use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Paired inputs (`N × n`) and responses (`N × m`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    responses: DMatrix<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, responses: DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if inputs.nrows() != responses.nrows() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                got: responses.nrows(),
            });
        }
        if inputs.ncols() == 0 || responses.ncols() == 0 {
            return Err(Error::InvalidConfig("dataset needs at least one input and one response column".into()));
        }
        if let Some(pos) = inputs.iter().position(|x| !x.is_finite()) {
            let (r, c) = (pos % inputs.nrows(), pos / inputs.nrows());
            return Err(Error::NonFiniteInput(format!("input row {r} column {c}")));
        }
        if let Some(pos) = responses.iter().position(|x| !x.is_finite()) {
            let (r, c) = (pos % responses.nrows(), pos / responses.nrows());
            return Err(Error::NonFiniteInput(format!("response row {r} column {c}")));
        }
        Ok(Self { inputs, responses })
    }

    pub fn from_scalar(inputs: DMatrix<f64>, responses: Vec<f64>) -> Result<Self> {
        let n = responses.len();
        Self::new(inputs, DMatrix::from_vec(n, 1, responses))
    }

    /// Evaluates `f` on every row of `inputs`.
    pub fn from_function(inputs: DMatrix<f64>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let responses = (0..inputs.nrows())
            .map(|t| {
                let x: Vec<f64> = inputs.row(t).iter().copied().collect();
                f(&x)
            })
            .collect();
        Self::from_scalar(inputs, responses)
    }

    pub fn n_points(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.responses.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn responses(&self) -> &DMatrix<f64> {
        &self.responses
    }

    pub fn response(&self, k: usize) -> Vec<f64> {
        self.responses.column(k).iter().copied().collect()
    }

    /// Same inputs, only response column `k`.
    pub fn select_output(&self, k: usize) -> Dataset {
        Dataset {
            inputs: self.inputs.clone(),
            responses: self.responses.columns(k, 1).into_owned(),
        }
    }

    pub fn input_row(&self, t: usize) -> Vec<f64> {
        self.inputs.row(t).iter().copied().collect()
    }

    /// Number of distinct input rows (exact comparison).
    pub fn distinct_inputs(&self) -> usize {
        let mut rows: Vec<Vec<u64>> = (0..self.n_points())
            .map(|t| self.inputs.row(t).iter().map(|x| x.to_bits()).collect())
            .collect();
        rows.sort();
        rows.dedup();
        rows.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(Dataset::from_scalar(x.clone(), vec![1.0]).is_err());
        assert_eq!(
            Dataset::from_scalar(x.clone(), vec![1.0, f64::NAN]).unwrap_err().code(),
            "non-finite-input"
        );
        assert_eq!(
            Dataset::from_scalar(DMatrix::zeros(0, 1), vec![]).unwrap_err().code(),
            "empty-dataset"
        );
        let d = Dataset::from_scalar(x, vec![3.0, 4.0]).unwrap();
        assert_eq!(d.response(0), vec![3.0, 4.0]);
        assert_eq!(d.distinct_inputs(), 2);
    }
}
