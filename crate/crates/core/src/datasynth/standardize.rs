use serde::{Deserialize, Serialize};

use crate::gradcore::Matrix;
use crate::{Error, Result};

/// Per-feature z-scoring fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get a unit scale so they map to zero.
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (n, m) = x.shape();
        if n == 0 {
            return Err(Error::Data("cannot fit standardization on zero rows".into()));
        }
        let mut mean = vec![0.0; m];
        for i in 0..n {
            for (mu, v) in mean.iter_mut().zip(x.row(i)) {
                *mu += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut var = vec![0.0; m];
        for i in 0..n {
            for ((s, v), mu) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - mu).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            mean: vec![0.0; m],
            std: vec![1.0; m],
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::dim(
                "Standardizer::transform",
                format!("{} columns, fitted on {}", x.cols(), self.mean.len()),
            ));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, mu), sd) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_unit_variance() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x).unwrap();
        let z = s.transform(&x).unwrap();
        assert!((z.col(0).iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(z.col(1), vec![0.0; 3]);
        let var: f64 = z.col(0).iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-12);
    }
}
