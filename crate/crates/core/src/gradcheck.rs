//! Central finite-difference oracle for scalar losses over
//! `(EmbeddingBatch, CenterMatrix)`.
//!
//! Every raw coordinate of every embedding and center is perturbed by `±h`
//! and the loss re-evaluated; no re-normalization is applied, so the oracle
//! differentiates exactly the function the analytic code differentiates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::batch::{CenterMatrix, EmbeddingBatch, Matrix};
use crate::error::{Error, Result};
use crate::margin::{margin_backward, margin_forward, MarginSpec};
use crate::rescale::RescaleSpec;
use crate::sface::{freeze_rescale, sface_backward, sface_forward, sface_forward_frozen};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const MIN_STEP: f64 = 1e-9;
pub const MAX_STEP: f64 = 1e-3;

/// Entries smaller than this fraction of the largest entry are compared
/// against the floor instead of their own magnitude.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdMode {
    /// Differentiate the loss as given.
    Full,
    /// The loss function pins its re-scale coefficients at the evaluation
    /// point (block-gradient semantics).
    FrozenRescale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub step: f64,
    pub mode: FdMode,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            step: DEFAULT_STEP,
            mode: FdMode::Full,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_STEP..=MAX_STEP).contains(&self.step) {
            return Err(Error::spec(format!(
                "finite-difference step must lie in [{MIN_STEP:e}, {MAX_STEP:e}], got {}",
                self.step
            )));
        }
        Ok(())
    }
}

fn probe<F>(loss_fn: &F, batch: &EmbeddingBatch, centers: &CenterMatrix) -> Result<f64>
where
    F: Fn(&EmbeddingBatch, &CenterMatrix) -> Result<f64>,
{
    let v = loss_fn(batch, centers)?;
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss(v));
    }
    Ok(v)
}

/// Central-difference gradients `(∂L/∂x, ∂L/∂W)` shaped like the inputs
/// (`N × d` and `C × d`).
pub fn fd_grad<F>(
    loss_fn: F,
    batch: &EmbeddingBatch,
    centers: &CenterMatrix,
    cfg: &FdConfig,
) -> Result<(Matrix, Matrix)>
where
    F: Fn(&EmbeddingBatch, &CenterMatrix) -> Result<f64>,
{
    cfg.validate()?;
    let h = cfg.step;
    let mut xb = batch.clone();
    let mut wc = centers.clone();
    let mut grad_x = Matrix::zeros(batch.len(), batch.dim());
    let mut grad_w = Matrix::zeros(centers.num_classes(), centers.dim());

    for k in 0..xb.features().as_slice().len() {
        let orig = xb.features().as_slice()[k];
        xb.features_mut().as_mut_slice()[k] = orig + h;
        let fp = probe(&loss_fn, &xb, &wc)?;
        xb.features_mut().as_mut_slice()[k] = orig - h;
        let fm = probe(&loss_fn, &xb, &wc)?;
        xb.features_mut().as_mut_slice()[k] = orig;
        grad_x.as_mut_slice()[k] = (fp - fm) / (2.0 * h);
    }
    for k in 0..wc.as_matrix().as_slice().len() {
        let orig = wc.as_matrix().as_slice()[k];
        wc.as_matrix_mut().as_mut_slice()[k] = orig + h;
        let fp = probe(&loss_fn, &xb, &wc)?;
        wc.as_matrix_mut().as_mut_slice()[k] = orig - h;
        let fm = probe(&loss_fn, &xb, &wc)?;
        wc.as_matrix_mut().as_mut_slice()[k] = orig;
        grad_w.as_mut_slice()[k] = (fp - fm) / (2.0 * h);
    }
    Ok((grad_x, grad_w))
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)` with
/// `floor = RELATIVE_FLOOR · max(max|a|, max|b|)`.
///
/// Returns 0 when both matrices are identically zero.
pub fn max_relative_deviation(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.as_slice().len(), b.as_slice().len(), "shape mismatch");
    let floor = RELATIVE_FLOOR * a.max_abs().max(b.max_abs());
    if floor == 0.0 {
        return 0.0;
    }
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Seeded test instance: Gaussian rows, each rescaled by a factor drawn
/// uniformly from [0.5, 2], and uniform labels.
pub fn random_instance(n: usize, c: usize, d: usize, seed: u64) -> Result<(EmbeddingBatch, CenterMatrix)> {
    if n == 0 || c == 0 || d == 0 {
        return Err(Error::spec("instance sizes must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let scale = rng.random_range(0.5..2.0);
                (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect()
    };
    let xs = rows(n, &mut rng);
    let ws = rows(c, &mut rng);
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    Ok((EmbeddingBatch::from_rows(&xs, labels)?, CenterMatrix::from_vecs(&ws)?))
}

/// Analytic vs. finite-difference deviations for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub grad_x: f64,
    pub grad_w: f64,
}

impl GradCheck {
    pub fn max(&self) -> f64 {
        self.grad_x.max(self.grad_w)
    }
}

/// Compare [`sface_backward`] against finite differences of the loss with
/// re-scale coefficients pinned at the evaluation point.
pub fn check_sface(batch: &EmbeddingBatch, centers: &CenterMatrix, spec: &RescaleSpec, step: f64) -> Result<GradCheck> {
    let report = sface_backward(batch, centers, spec)?;
    let frozen = freeze_rescale(batch, centers, spec)?;
    let cfg = FdConfig {
        step,
        mode: FdMode::FrozenRescale,
    };
    let (fx, fw) = fd_grad(|b, c| sface_forward_frozen(b, c, &frozen), batch, centers, &cfg)?;
    Ok(GradCheck {
        grad_x: max_relative_deviation(&report.grad_x, &fx),
        grad_w: max_relative_deviation(&report.grad_w, &fw),
    })
}

/// Same comparison against the loss with coefficients re-evaluated at every
/// probe (no block gradient). The analytic SFace gradient is not expected to
/// match this where the coefficients vary.
pub fn check_sface_unfrozen(
    batch: &EmbeddingBatch,
    centers: &CenterMatrix,
    spec: &RescaleSpec,
    step: f64,
) -> Result<GradCheck> {
    let report = sface_backward(batch, centers, spec)?;
    let cfg = FdConfig {
        step,
        mode: FdMode::Full,
    };
    let (fx, fw) = fd_grad(|b, c| sface_forward(b, c, spec), batch, centers, &cfg)?;
    Ok(GradCheck {
        grad_x: max_relative_deviation(&report.grad_x, &fx),
        grad_w: max_relative_deviation(&report.grad_w, &fw),
    })
}

/// Compare [`margin_backward`] against finite differences of the full loss.
pub fn check_margin(batch: &EmbeddingBatch, centers: &CenterMatrix, spec: &MarginSpec, step: f64) -> Result<GradCheck> {
    let report = margin_backward(batch, centers, spec)?;
    let cfg = FdConfig {
        step,
        mode: FdMode::Full,
    };
    let (fx, fw) = fd_grad(|b, c| margin_forward(b, c, spec), batch, centers, &cfg)?;
    Ok(GradCheck {
        grad_x: max_relative_deviation(&report.grad_x, &fx),
        grad_w: max_relative_deviation(&report.grad_w, &fw),
    })
}
