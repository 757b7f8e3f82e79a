//! Dense containers for embeddings, class centers and gradient reports.

use crate::error::{Error, Result};
use crate::geometry;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero width
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.iter_rows().map(geometry::norm).collect()
    }
}

/// `N` embedding vectors `x_i ∈ R^d` with integer labels in `[0, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    features: Matrix,
    labels: Vec<usize>,
}

impl EmbeddingBatch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        Ok(EmbeddingBatch { features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        self.features.row_mut(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut Matrix {
        &mut self.features
    }

    /// Sub-batch made of the given row indices, in order.
    pub fn select(&self, indices: &[usize]) -> EmbeddingBatch {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingBatch {
            features: Matrix {
                rows: indices.len(),
                cols: d,
                data,
            },
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Class centers `W_j ∈ R^d`, `j < C`. Column `j` of the last-layer weight is
/// stored as row `j` of the inner matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterMatrix {
    columns: Matrix,
}

impl CenterMatrix {
    /// Build from a `C × d` matrix whose rows are the center vectors.
    pub fn from_columns(columns: Matrix) -> Self {
        CenterMatrix { columns }
    }

    pub fn from_vecs(columns: &[Vec<f64>]) -> Result<Self> {
        Ok(CenterMatrix {
            columns: Matrix::from_rows(columns)?,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.columns.rows()
    }

    pub fn dim(&self) -> usize {
        self.columns.cols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.columns.row(j)
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        self.columns.row_mut(j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.columns
    }

    pub fn as_matrix_mut(&mut self) -> &mut Matrix {
        &mut self.columns
    }
}

/// Checks shared by every batch loss: equal dimensions, labels in range, at
/// least one class.
pub(crate) fn validate_pair(batch: &EmbeddingBatch, centers: &CenterMatrix) -> Result<()> {
    if batch.dim() != centers.dim() {
        return Err(Error::DimensionMismatch {
            expected: centers.dim(),
            found: batch.dim(),
        });
    }
    let c = centers.num_classes();
    if c == 0 {
        return Err(Error::spec("at least one class center is required"));
    }
    if batch.is_empty() {
        return Err(Error::spec("empty batch"));
    }
    if let Some(&label) = batch.labels().iter().find(|&&l| l >= c) {
        return Err(Error::InvalidLabel { label, num_classes: c });
    }
    Ok(())
}

/// Unit directions and norms for every row of `m`.
pub(crate) fn unit_rows(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut units = Matrix::zeros(m.rows(), m.cols());
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = geometry::checked_norm(m.row(i))?;
        for (u, v) in units.row_mut(i).iter_mut().zip(m.row(i)) {
            *u = v / n;
        }
        norms.push(n);
    }
    Ok((units, norms))
}

/// Loss value with gradients for every embedding and every center.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradReport {
    pub loss: f64,
    /// `N × d`, row `i` is `∂L/∂x_i`.
    pub grad_x: Matrix,
    /// `C × d`, row `j` is `∂L/∂W_j`.
    pub grad_w: Matrix,
    /// Radians, `θ(x_i, W_{y_i})`.
    pub intra_angles: Vec<f64>,
    /// Radians, mean of `θ(x_i, W_j)` over all samples and non-target classes.
    pub mean_inter_angle: f64,
    /// Norm of the target-class part of `∂L/∂x_i`.
    pub intra_grad_norms: Vec<f64>,
    /// Norm of the summed non-target part of `∂L/∂x_i`.
    pub inter_grad_norms: Vec<f64>,
}
