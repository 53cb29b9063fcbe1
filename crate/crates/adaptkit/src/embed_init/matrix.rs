use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A dense rows × cols matrix of embedding (or LM-head) weights. One
/// row per token id; kept in f64 in memory, stored as 32-bit floats on
/// disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub data: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>) -> Self {
        EmbeddingMatrix { data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        EmbeddingMatrix {
            data: Array2::zeros((rows, cols)),
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Column mean over a set of row indices.
    pub fn mean_rows(&self, indices: &[usize]) -> Result<Array1<f64>> {
        if indices.is_empty() {
            return Err(Error::model("mean over an empty row set"));
        }
        let mut acc = Array1::<f64>::zeros(self.cols());
        for &i in indices {
            acc += &self.data.row(i);
        }
        Ok(acc / indices.len() as f64)
    }

    pub fn validate_finite(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::model("embedding matrix contains non-finite entries"));
        }
        Ok(())
    }
}
