//! Sigmoid-constrained hypersphere loss.
//!
//! Per sample:
//!
//! ```text
//! L_i = -[r_intra(θ_{y_i})]_b cos θ_{y_i} + Σ_{j≠y_i} [r_inter(θ_j)]_b cos θ_j
//! ```
//!
//! `[·]_b` blocks the gradient: the re-scale coefficients are evaluated once
//! at the current angles and enter the backward pass as constants. The batch
//! loss is the mean over samples.

use crate::batch::{unit_rows, validate_pair, CenterMatrix, EmbeddingBatch, LossGradReport, Matrix};
use crate::error::Result;
use crate::geometry::{self, tangent_into, AnglePair};
use crate::rescale::RescaleSpec;

/// Per-(sample, class) coefficients `c_ij` of `cos θ_ij` with the re-scale
/// values pinned: `c_{i,y_i} = -r_intra(θ_{i,y_i})`, `c_ij = r_inter(θ_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenRescale {
    coeffs: Matrix,
}

impl FrozenRescale {
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.coeffs.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.coeffs
    }
}

/// Normalized geometry of a batch against a set of centers.
pub(crate) struct PairTable {
    pub x_units: Matrix,
    pub x_norms: Vec<f64>,
    pub w_units: Matrix,
    pub w_norms: Vec<f64>,
    /// `N × C` raw cosines (unclamped).
    pub raw_cos: Matrix,
}

impl PairTable {
    #[allow(clippy::needless_range_loop)]
    pub fn build(batch: &EmbeddingBatch, centers: &CenterMatrix) -> Result<Self> {
        validate_pair(batch, centers)?;
        let (x_units, x_norms) = unit_rows(batch.features())?;
        let (w_units, w_norms) = unit_rows(centers.as_matrix())?;
        let (n, c) = (batch.len(), centers.num_classes());
        let mut raw_cos = Matrix::zeros(n, c);
        for i in 0..n {
            let xi = batch.row(i);
            for j in 0..c {
                let v = geometry::dot(xi, centers.column(j)) / (x_norms[i] * w_norms[j]);
                raw_cos.set(i, j, v);
            }
        }
        Ok(PairTable {
            x_units,
            x_norms,
            w_units,
            w_norms,
            raw_cos,
        })
    }

    #[inline]
    pub fn angle(&self, i: usize, j: usize) -> AnglePair {
        AnglePair::from_cosine(self.raw_cos.get(i, j))
    }

    /// Accumulate `Σ_j coeff(i, j) · ∂cos θ_ij` into `grad_x`/`grad_w`,
    /// sample-major. Returns the per-sample norms of the target and summed
    /// non-target parts of `∂/∂x_i`.
    #[allow(clippy::needless_range_loop)]
    pub fn backprop(
        &self,
        labels: &[usize],
        coeff: impl Fn(usize, usize) -> f64,
        grad_x: &mut Matrix,
        grad_w: &mut Matrix,
    ) -> (Vec<f64>, Vec<f64>) {
        let (n, c) = (self.raw_cos.rows(), self.raw_cos.cols());
        let d = self.x_units.cols();
        let mut intra_norms = Vec::with_capacity(n);
        let mut inter_norms = Vec::with_capacity(n);
        let mut intra_part = vec![0.0; d];
        let mut inter_part = vec![0.0; d];
        for i in 0..n {
            intra_part.iter_mut().for_each(|v| *v = 0.0);
            inter_part.iter_mut().for_each(|v| *v = 0.0);
            let xu = self.x_units.row(i);
            for j in 0..c {
                let k = coeff(i, j);
                if k == 0.0 {
                    continue;
                }
                let cos = self.raw_cos.get(i, j);
                let wu = self.w_units.row(j);
                let part = if j == labels[i] {
                    &mut intra_part
                } else {
                    &mut inter_part
                };
                tangent_into(part, wu, xu, cos, self.x_norms[i], k);
                tangent_into(grad_w.row_mut(j), xu, wu, cos, self.w_norms[j], k);
            }
            intra_norms.push(geometry::norm(&intra_part));
            inter_norms.push(geometry::norm(&inter_part));
            for ((g, a), b) in grad_x.row_mut(i).iter_mut().zip(&intra_part).zip(&inter_part) {
                *g += a + b;
            }
        }
        (intra_norms, inter_norms)
    }

    pub fn intra_angles(&self, labels: &[usize]) -> Vec<f64> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| self.angle(i, y).theta)
            .collect()
    }

    pub fn mean_inter_angle(&self, labels: &[usize]) -> f64 {
        let (n, c) = (self.raw_cos.rows(), self.raw_cos.cols());
        if c < 2 {
            return f64::NAN;
        }
        let mut sum = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            for j in (0..c).filter(|&j| j != y) {
                sum += self.angle(i, j).theta;
            }
        }
        sum / (n * (c - 1)) as f64
    }
}

fn coefficients(table: &PairTable, labels: &[usize], spec: &RescaleSpec) -> FrozenRescale {
    let (n, c) = (table.raw_cos.rows(), table.raw_cos.cols());
    let mut coeffs = Matrix::zeros(n, c);
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..c {
            let theta = table.angle(i, j).theta;
            let v = if j == y {
                -spec.r_intra(theta)
            } else {
                spec.r_inter(theta)
            };
            coeffs.set(i, j, v);
        }
    }
    FrozenRescale { coeffs }
}

/// Evaluate the re-scale coefficients at the current angles.
pub fn freeze_rescale(batch: &EmbeddingBatch, centers: &CenterMatrix, spec: &RescaleSpec) -> Result<FrozenRescale> {
    spec.validate()?;
    let table = PairTable::build(batch, centers)?;
    Ok(coefficients(&table, batch.labels(), spec))
}

fn frozen_value(table: &PairTable, frozen: &FrozenRescale) -> f64 {
    let (n, c) = (table.raw_cos.rows(), table.raw_cos.cols());
    let mut total = 0.0;
    for i in 0..n {
        let mut li = 0.0;
        for j in 0..c {
            li += frozen.coeffs.get(i, j) * table.angle(i, j).cosine;
        }
        total += li;
    }
    total / n as f64
}

/// Mean loss with externally pinned coefficients; the angles are taken from
/// the given inputs. Its exact gradient is what [`sface_backward`] returns.
pub fn sface_forward_frozen(batch: &EmbeddingBatch, centers: &CenterMatrix, frozen: &FrozenRescale) -> Result<f64> {
    let table = PairTable::build(batch, centers)?;
    if frozen.coeffs.rows() != batch.len() || frozen.coeffs.cols() != centers.num_classes() {
        return Err(crate::Error::DimensionMismatch {
            expected: batch.len() * centers.num_classes(),
            found: frozen.coeffs.rows() * frozen.coeffs.cols(),
        });
    }
    Ok(frozen_value(&table, frozen))
}

pub fn sface_forward(batch: &EmbeddingBatch, centers: &CenterMatrix, spec: &RescaleSpec) -> Result<f64> {
    spec.validate()?;
    let table = PairTable::build(batch, centers)?;
    let frozen = coefficients(&table, batch.labels(), spec);
    Ok(frozen_value(&table, &frozen))
}

pub fn sface_backward(batch: &EmbeddingBatch, centers: &CenterMatrix, spec: &RescaleSpec) -> Result<LossGradReport> {
    spec.validate()?;
    let table = PairTable::build(batch, centers)?;
    let labels = batch.labels();
    let frozen = coefficients(&table, labels, spec);
    let loss = frozen_value(&table, &frozen);

    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let mut grad_x = Matrix::zeros(n, batch.dim());
    let mut grad_w = Matrix::zeros(centers.num_classes(), centers.dim());
    let (mut intra_grad_norms, mut inter_grad_norms) =
        table.backprop(labels, |i, j| frozen.coeffs.get(i, j) * inv_n, &mut grad_x, &mut grad_w);
    // report per-sample (unreduced) magnitudes
    intra_grad_norms.iter_mut().for_each(|v| *v *= n as f64);
    inter_grad_norms.iter_mut().for_each(|v| *v *= n as f64);

    Ok(LossGradReport {
        loss,
        grad_x,
        grad_w,
        intra_angles: table.intra_angles(labels),
        mean_inter_angle: table.mean_inter_angle(labels),
        intra_grad_norms,
        inter_grad_norms,
    })
}
