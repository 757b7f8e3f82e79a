//! Softmax-based losses with an additive/angular margin on the target logit,
//! and their equivalent re-scaled metric form.
//!
//! Per sample, with `f` the target-logit function:
//!
//! ```text
//! L = -log( e^{s f(θ_y)} / (e^{s f(θ_y)} + Σ_{j≠y} e^{s cos θ_j}) )
//! ∂L/∂cos θ_y = s (P_y - 1) ∂f/∂cos θ_y
//! ∂L/∂cos θ_j = s P_j
//! ```
//!
//! | variant   | `f(θ)`                 | `∂f/∂cos θ`                     |
//! |-----------|------------------------|---------------------------------|
//! | nsoftmax  | `cos θ`                | 1                               |
//! | cosface   | `cos θ - m`            | 1                               |
//! | arcface   | `cos(θ + m)`           | `sin(θ + m) / sin θ`            |
//! | combined  | `cos(m1 θ + m2) - m3`  | `m1 sin(m1 θ + m2) / sin θ`     |
//!
//! The plain `softmax` variant uses unnormalized logits `W_j^T x` and has no
//! cosine form; the cosine-level operations reject it.
//!
//! The same gradients are produced by the metric-learning loss
//! `-[r_intra]_b cos θ_y + Σ [r_inter,j]_b cos θ_j` with
//!
//! ```text
//! r_intra = s Σ_j e^{s cos θ_j} / (e^{s f(θ_y)} + Σ_j e^{s cos θ_j}) · ∂f/∂cos θ_y
//! r_inter,j = s e^{s cos θ_j} / (e^{s f(θ_y)} + Σ_k e^{s cos θ_k})
//! ```
//!
//! [`equivalence_report`] assembles full gradients both ways and measures the
//! deviation.

use std::f64::consts::PI;

use crate::batch::{CenterMatrix, EmbeddingBatch, LossGradReport, Matrix};
use crate::error::{Error, Result};
use crate::gradcheck::max_relative_deviation;
use crate::rescale::{theta_grid, CurvePoint};
use crate::sface::PairTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "cli", derive(serde::Deserialize, serde::Serialize))]
#[cfg_attr(feature = "cli", serde(rename_all = "lowercase"))]
pub enum MarginVariant {
    Softmax,
    NSoftmax,
    CosFace,
    ArcFace,
    Combined,
}

impl MarginVariant {
    pub fn name(self) -> &'static str {
        match self {
            MarginVariant::Softmax => "softmax",
            MarginVariant::NSoftmax => "nsoftmax",
            MarginVariant::CosFace => "cosface",
            MarginVariant::ArcFace => "arcface",
            MarginVariant::Combined => "combined",
        }
    }
}

impl std::str::FromStr for MarginVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(MarginVariant::Softmax),
            "nsoftmax" => Ok(MarginVariant::NSoftmax),
            "cosface" => Ok(MarginVariant::CosFace),
            "arcface" => Ok(MarginVariant::ArcFace),
            "combined" => Ok(MarginVariant::Combined),
            other => Err(Error::spec(format!("unknown margin variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSpec {
    pub variant: MarginVariant,
    pub s: f64,
    pub m: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl MarginSpec {
    fn with(variant: MarginVariant, s: f64, m: f64) -> Self {
        MarginSpec {
            variant,
            s,
            m,
            m1: 1.0,
            m2: 0.0,
            m3: 0.0,
        }
    }

    pub fn softmax() -> Self {
        Self::with(MarginVariant::Softmax, 1.0, 0.0)
    }

    pub fn nsoftmax(s: f64) -> Self {
        Self::with(MarginVariant::NSoftmax, s, 0.0)
    }

    pub fn cosface(s: f64, m: f64) -> Self {
        Self::with(MarginVariant::CosFace, s, m)
    }

    pub fn arcface(s: f64, m: f64) -> Self {
        Self::with(MarginVariant::ArcFace, s, m)
    }

    pub fn combined(s: f64, m1: f64, m2: f64, m3: f64) -> Self {
        MarginSpec {
            variant: MarginVariant::Combined,
            s,
            m: 0.0,
            m1,
            m2,
            m3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant != MarginVariant::Softmax && !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::spec(format!("scale s must be positive, got {}", self.s)));
        }
        match self.variant {
            MarginVariant::CosFace | MarginVariant::ArcFace if self.m.is_nan() || self.m < 0.0 => {
                Err(Error::spec(format!("margin m must be non-negative, got {}", self.m)))
            }
            MarginVariant::Combined if !(self.m1.is_finite() && self.m2.is_finite() && self.m3.is_finite()) => {
                Err(Error::spec("combined margins must be finite"))
            }
            _ => Ok(()),
        }
    }

    fn require_cosine_form(&self) -> Result<()> {
        if self.variant == MarginVariant::Softmax {
            return Err(Error::spec(
                "plain softmax uses raw logits and has no cosine-level gradient form",
            ));
        }
        Ok(())
    }

    /// Angle fed to the outer cosine of the target logit, for the domain check.
    fn check_domain(&self, theta_y: f64) -> Result<()> {
        let (arg, margin) = match self.variant {
            MarginVariant::ArcFace => (theta_y + self.m, self.m),
            MarginVariant::Combined => (self.m1 * theta_y + self.m2, self.m2),
            _ => return Ok(()),
        };
        if arg > PI {
            return Err(Error::MarginDomain { theta: theta_y, margin });
        }
        Ok(())
    }

    /// Target logit before scaling, `f(θ_y)`.
    pub fn target_logit(&self, theta_y: f64) -> Result<f64> {
        self.check_domain(theta_y)?;
        Ok(match self.variant {
            MarginVariant::Softmax | MarginVariant::NSoftmax => theta_y.cos(),
            MarginVariant::CosFace => theta_y.cos() - self.m,
            MarginVariant::ArcFace => (theta_y + self.m).cos(),
            MarginVariant::Combined => (self.m1 * theta_y + self.m2).cos() - self.m3,
        })
    }

    /// `∂f/∂cos θ_y`.
    pub fn target_slope(&self, theta_y: f64) -> Result<f64> {
        self.check_domain(theta_y)?;
        match self.variant {
            MarginVariant::Softmax | MarginVariant::NSoftmax | MarginVariant::CosFace => Ok(1.0),
            MarginVariant::ArcFace | MarginVariant::Combined => {
                let sin = theta_y.sin();
                if theta_y <= 0.0 || sin == 0.0 {
                    return Err(Error::SingularAngle);
                }
                Ok(self.target_speed(theta_y) / sin)
            }
        }
    }

    /// `∂f/∂cos θ · sin θ`, finite everywhere (removes the `1/sin θ`).
    pub fn target_speed(&self, theta_y: f64) -> f64 {
        match self.variant {
            MarginVariant::Softmax | MarginVariant::NSoftmax | MarginVariant::CosFace => theta_y.sin(),
            MarginVariant::ArcFace => (theta_y + self.m).sin(),
            MarginVariant::Combined => self.m1 * (self.m1 * theta_y + self.m2).sin(),
        }
    }
}

/// `log P_y` for logits `z_y` against `others`.
///
/// When the target dominates, `log P_y = -ln(1 + Σ e^{z_j - z_y})`, which
/// keeps `P_y - 1 = expm1(log P_y)` accurate as `P_y → 1`.
fn log_prob_target(z_y: f64, others: &[f64]) -> f64 {
    let max_other = others.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if z_y >= max_other {
        let tail: f64 = others.iter().map(|&z| (z - z_y).exp()).sum();
        -tail.ln_1p()
    } else {
        let sum: f64 = std::iter::once(z_y)
            .chain(others.iter().copied())
            .map(|z| (z - max_other).exp())
            .sum();
        z_y - (max_other + sum.ln())
    }
}

fn check_angles(theta_y: f64, thetas_other: &[f64]) -> Result<()> {
    let ok = |t: f64| (0.0..=PI).contains(&t);
    if !ok(theta_y) || !thetas_other.iter().all(|&t| ok(t)) {
        return Err(Error::spec("angles must lie in [0, pi]"));
    }
    Ok(())
}

fn scaled_logits(theta_y: f64, thetas_other: &[f64], spec: &MarginSpec) -> Result<(f64, Vec<f64>)> {
    let z_y = spec.s * spec.target_logit(theta_y)?;
    let others = thetas_other.iter().map(|t| spec.s * t.cos()).collect();
    Ok((z_y, others))
}

/// Partials of the per-sample loss with respect to the cosines.
#[derive(Debug, Clone, PartialEq)]
pub struct CosGradients {
    /// `∂L/∂cos θ_y`.
    pub target: f64,
    /// `∂L/∂cos θ_j` for each non-target class, in input order.
    pub others: Vec<f64>,
}

/// Analytic `∂L/∂cos` via the `s (P_y - 1) f'` and `s P_j` forms.
pub fn margin_grad_cos(theta_y: f64, thetas_other: &[f64], spec: &MarginSpec) -> Result<CosGradients> {
    spec.validate()?;
    spec.require_cosine_form()?;
    check_angles(theta_y, thetas_other)?;
    let slope = spec.target_slope(theta_y)?;
    let (z_y, others) = scaled_logits(theta_y, thetas_other, spec)?;
    let log_py = log_prob_target(z_y, &others);
    let lse = z_y - log_py;
    Ok(CosGradients {
        target: spec.s * log_py.exp_m1() * slope,
        others: others.iter().map(|z| spec.s * (z - lse).exp()).collect(),
    })
}

/// Coefficients of the equivalent metric-learning form.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentRescale {
    pub intra: f64,
    pub inter: Vec<f64>,
}

/// Explicit-ratio re-scale coefficients; `intra = -∂L/∂cos θ_y` and
/// `inter[j] = ∂L/∂cos θ_j`.
pub fn equivalent_rescale(theta_y: f64, thetas_other: &[f64], spec: &MarginSpec) -> Result<EquivalentRescale> {
    spec.validate()?;
    spec.require_cosine_form()?;
    check_angles(theta_y, thetas_other)?;
    let slope = spec.target_slope(theta_y)?;
    let (z_y, others) = scaled_logits(theta_y, thetas_other, spec)?;
    let (intra_ratio, inter) = ratio_terms(z_y, &others);
    Ok(EquivalentRescale {
        intra: spec.s * intra_ratio * slope,
        inter: inter.into_iter().map(|r| spec.s * r).collect(),
    })
}

/// `Σ e^{z_j} / (e^{z_y} + Σ e^{z_j})` and each `e^{z_j} / (e^{z_y} + Σ e^{z_k})`,
/// shifted by the largest logit.
fn ratio_terms(z_y: f64, others: &[f64]) -> (f64, Vec<f64>) {
    let shift = others.iter().copied().fold(z_y, f64::max);
    let e_y = (z_y - shift).exp();
    let e_others: Vec<f64> = others.iter().map(|z| (z - shift).exp()).collect();
    let sum_others: f64 = e_others.iter().sum();
    let denom = e_y + sum_others;
    (sum_others / denom, e_others.iter().map(|e| e / denom).collect())
}

/// Class probabilities, target first then non-target classes in input order.
pub fn probabilities(theta_y: f64, thetas_other: &[f64], spec: &MarginSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    spec.require_cosine_form()?;
    check_angles(theta_y, thetas_other)?;
    let (z_y, others) = scaled_logits(theta_y, thetas_other, spec)?;
    let lse = z_y - log_prob_target(z_y, &others);
    Ok(std::iter::once(z_y).chain(others).map(|z| (z - lse).exp()).collect())
}

fn non_target<T: Copy>(row: impl Iterator<Item = T>, y: usize) -> Vec<T> {
    row.enumerate().filter(|&(j, _)| j != y).map(|(_, v)| v).collect()
}

/// Mean loss over the batch.
pub fn margin_forward(batch: &EmbeddingBatch, centers: &CenterMatrix, spec: &MarginSpec) -> Result<f64> {
    spec.validate()?;
    if spec.variant == MarginVariant::Softmax {
        return Ok(raw_softmax(batch, centers, false)?.loss);
    }
    let table = PairTable::build(batch, centers)?;
    let c = centers.num_classes();
    let mut total = 0.0;
    for (i, &y) in batch.labels().iter().enumerate() {
        let theta_y = table.angle(i, y).theta;
        let z_y = spec.s * spec.target_logit(theta_y)?;
        let others = non_target((0..c).map(|j| spec.s * table.angle(i, j).cosine), y);
        total -= log_prob_target(z_y, &others);
    }
    Ok(total / batch.len() as f64)
}

/// Loss and full gradients through the cosine chain rule.
pub fn margin_backward(batch: &EmbeddingBatch, centers: &CenterMatrix, spec: &MarginSpec) -> Result<LossGradReport> {
    spec.validate()?;
    if spec.variant == MarginVariant::Softmax {
        return raw_softmax(batch, centers, true);
    }
    backward_with(batch, centers, spec, |theta_y, others| {
        let g = margin_grad_cos(theta_y, others, spec)?;
        Ok((g.target, g.others))
    })
}

/// Full gradients assembled from the metric form with equivalent coefficients.
pub fn metric_form_backward(
    batch: &EmbeddingBatch,
    centers: &CenterMatrix,
    spec: &MarginSpec,
) -> Result<LossGradReport> {
    spec.validate()?;
    spec.require_cosine_form()?;
    backward_with(batch, centers, spec, |theta_y, others| {
        let r = equivalent_rescale(theta_y, others, spec)?;
        Ok((-r.intra, r.inter))
    })
}

fn backward_with(
    batch: &EmbeddingBatch,
    centers: &CenterMatrix,
    spec: &MarginSpec,
    cos_grads: impl Fn(f64, &[f64]) -> Result<(f64, Vec<f64>)>,
) -> Result<LossGradReport> {
    let table = PairTable::build(batch, centers)?;
    let labels = batch.labels();
    let (n, c) = (batch.len(), centers.num_classes());
    let inv_n = 1.0 / n as f64;

    let mut coeffs = Matrix::zeros(n, c);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let theta_y = table.angle(i, y).theta;
        let others = non_target((0..c).map(|j| table.angle(i, j).theta), y);
        let (target, rest) = cos_grads(theta_y, &others)?;
        coeffs.set(i, y, target);
        for (j, g) in (0..c).filter(|&j| j != y).zip(rest) {
            coeffs.set(i, j, g);
        }
        let z_y = spec.s * spec.target_logit(theta_y)?;
        let z_others = non_target((0..c).map(|j| spec.s * table.angle(i, j).cosine), y);
        total -= log_prob_target(z_y, &z_others);
    }

    let mut grad_x = Matrix::zeros(n, batch.dim());
    let mut grad_w = Matrix::zeros(c, centers.dim());
    let (mut intra_grad_norms, mut inter_grad_norms) =
        table.backprop(labels, |i, j| coeffs.get(i, j) * inv_n, &mut grad_x, &mut grad_w);
    intra_grad_norms.iter_mut().for_each(|v| *v *= n as f64);
    inter_grad_norms.iter_mut().for_each(|v| *v *= n as f64);

    Ok(LossGradReport {
        loss: total * inv_n,
        grad_x,
        grad_w,
        intra_angles: table.intra_angles(labels),
        mean_inter_angle: table.mean_inter_angle(labels),
        intra_grad_norms,
        inter_grad_norms,
    })
}

/// Unnormalized softmax over `W_j^T x_i`, no bias.
#[allow(clippy::needless_range_loop)]
fn raw_softmax(batch: &EmbeddingBatch, centers: &CenterMatrix, with_grad: bool) -> Result<LossGradReport> {
    crate::batch::validate_pair(batch, centers)?;
    let labels = batch.labels();
    let (n, c, d) = (batch.len(), centers.num_classes(), batch.dim());
    let inv_n = 1.0 / n as f64;
    let mut grad_x = Matrix::zeros(n, d);
    let mut grad_w = Matrix::zeros(c, d);
    let mut intra_grad_norms = vec![0.0; n];
    let mut inter_grad_norms = vec![0.0; n];
    let mut total = 0.0;
    let mut logits = vec![0.0; c];
    for (i, &y) in labels.iter().enumerate() {
        let x = batch.row(i);
        for (j, z) in logits.iter_mut().enumerate() {
            *z = crate::geometry::dot(x, centers.column(j));
        }
        let others = non_target(logits.iter().copied(), y);
        let log_py = log_prob_target(logits[y], &others);
        total -= log_py;
        if !with_grad {
            continue;
        }
        let lse = logits[y] - log_py;
        let mut inter_part = vec![0.0; d];
        for j in 0..c {
            let dz = if j == y {
                log_py.exp_m1()
            } else {
                (logits[j] - lse).exp()
            };
            let w = centers.column(j);
            for (g, &wv) in grad_x.row_mut(i).iter_mut().zip(w) {
                *g += inv_n * dz * wv;
            }
            for (g, &xv) in grad_w.row_mut(j).iter_mut().zip(x) {
                *g += inv_n * dz * xv;
            }
            if j == y {
                intra_grad_norms[i] = dz.abs() * crate::geometry::norm(w);
            } else {
                for (p, &wv) in inter_part.iter_mut().zip(w) {
                    *p += dz * wv;
                }
            }
        }
        inter_grad_norms[i] = crate::geometry::norm(&inter_part);
    }
    let (intra_angles, mean_inter_angle) = match PairTable::build(batch, centers) {
        Ok(t) => (t.intra_angles(labels), t.mean_inter_angle(labels)),
        Err(_) => (vec![f64::NAN; n], f64::NAN),
    };
    Ok(LossGradReport {
        loss: total * inv_n,
        grad_x,
        grad_w,
        intra_angles,
        mean_inter_angle,
        intra_grad_norms,
        inter_grad_norms,
    })
}

/// Maximum elementwise relative deviation between the chain-rule gradients
/// and the metric-form gradients (see [`max_relative_deviation`]).
pub fn equivalence_report(batch: &EmbeddingBatch, centers: &CenterMatrix, spec: &MarginSpec) -> Result<f64> {
    let chain = margin_backward(batch, centers, spec)?;
    let metric = metric_form_backward(batch, centers, spec)?;
    Ok(
        max_relative_deviation(&chain.grad_x, &metric.grad_x)
            .max(max_relative_deviation(&chain.grad_w, &metric.grad_w)),
    )
}

/// One-line summary of an equivalence run.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRecord {
    pub variant: MarginVariant,
    pub n: usize,
    pub c: usize,
    pub d: usize,
    pub seed: u64,
    pub max_relative_deviation: f64,
}

/// Tangent-speed curves of the metric form under the idealization that all
/// non-target angles are equal.
///
/// Row `θ` holds `v_intra = r_intra(θ, θ_ref, …) sin θ` (target angle `θ`,
/// every non-target angle at `reference_angle`) and
/// `v_inter = r_inter(θ_ref, θ, …) sin θ` (target angle at `reference_angle`,
/// every non-target angle `θ`).
pub fn margin_v_curves(
    spec: &MarginSpec,
    num_classes: usize,
    reference_angle: f64,
    num_points: usize,
) -> Result<Vec<CurvePoint>> {
    spec.validate()?;
    spec.require_cosine_form()?;
    if num_classes < 2 {
        return Err(Error::spec("speed curves need at least two classes"));
    }
    check_angles(reference_angle, &[])?;
    let k = num_classes - 1;
    theta_grid(num_points)?
        .into_iter()
        .map(|theta| {
            spec.check_domain(theta)?;
            let z_y = spec.s * spec.target_logit(theta)?;
            let (intra_ratio, _) = ratio_terms(z_y, &vec![spec.s * reference_angle.cos(); k]);
            let v_intra = spec.s * intra_ratio * spec.target_speed(theta);

            let z_ref = spec.s * spec.target_logit(reference_angle)?;
            let (_, inter) = ratio_terms(z_ref, &vec![spec.s * theta.cos(); k]);
            let v_inter = spec.s * inter[0] * theta.sin();
            Ok(CurvePoint {
                theta,
                v_intra,
                v_inter,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn symmetric_nsoftmax_loss() {
        let batch = EmbeddingBatch::from_rows(&[vec![0.0, 0.0, 1.0]], vec![0]).unwrap();
        let centers = CenterMatrix::from_vecs(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let loss = margin_forward(&batch, &centers, &MarginSpec::nsoftmax(64.0)).unwrap();
        // the logits pass through acos and cos, so allow a few ulps of s
        assert!((loss - 2f64.ln()).abs() < 1e-13, "{loss}");
        let cos = margin_forward(&batch, &centers, &MarginSpec::cosface(64.0, 0.35)).unwrap();
        // log(1 + e^{22.4})
        let expected = 22.4 + (-22.4f64).exp().ln_1p();
        assert!((cos - expected).abs() < 1e-12, "{cos}");
    }

    #[test]
    fn single_class_has_zero_loss() {
        let batch = EmbeddingBatch::from_rows(&[vec![0.3, 0.4]], vec![0]).unwrap();
        let centers = CenterMatrix::from_vecs(&[vec![1.0, 0.0]]).unwrap();
        for spec in [
            MarginSpec::softmax(),
            MarginSpec::nsoftmax(64.0),
            MarginSpec::cosface(64.0, 0.35),
            MarginSpec::arcface(64.0, 0.5),
        ] {
            assert_eq!(margin_forward(&batch, &centers, &spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn symmetric_cos_gradients() {
        let g = margin_grad_cos(FRAC_PI_2, &[FRAC_PI_2], &MarginSpec::nsoftmax(64.0)).unwrap();
        assert!((g.target + 32.0).abs() < 1e-12);
        assert!((g.others[0] - 32.0).abs() < 1e-12);
        let r = equivalent_rescale(FRAC_PI_2, &[FRAC_PI_2], &MarginSpec::nsoftmax(64.0)).unwrap();
        assert!((r.intra - 32.0).abs() < 1e-12);
        assert!((r.inter[0] - 32.0).abs() < 1e-12);
    }

    #[test]
    fn arcface_slope_and_errors() {
        let spec = MarginSpec::arcface(64.0, 0.5);
        assert!((spec.target_slope(FRAC_PI_2).unwrap() - 0.5f64.cos()).abs() < 1e-15);
        assert!((spec.target_slope(FRAC_PI_2).unwrap() - 0.877583).abs() < 1e-6);
        assert!(matches!(spec.target_slope(0.0), Err(Error::SingularAngle)));
        assert!(matches!(
            margin_grad_cos(PI - 0.4, &[1.0], &spec),
            Err(Error::MarginDomain { .. })
        ));
        assert!(margin_grad_cos(1.0, &[1.0], &MarginSpec::softmax()).is_err());
    }

    #[test]
    fn near_zero_target_angle_intra_coefficient() {
        // r_intra → s (C-1) / (e^s + C-1) for nsoftmax with all others at π/2
        let spec = MarginSpec::nsoftmax(64.0);
        let others = vec![FRAC_PI_2; 9];
        let r = equivalent_rescale(0.0, &others, &spec).unwrap();
        let oracle = 64.0 * 9.0 * (-64.0f64).exp() / (1.0 + 9.0 * (-64.0f64).exp());
        assert!(r.intra < 1e-24);
        assert!((r.intra - oracle).abs() <= 1e-13 * oracle);
        let g = margin_grad_cos(0.0, &others, &spec).unwrap();
        assert!((g.target + oracle).abs() <= 1e-13 * oracle);
    }

    #[test]
    fn ratio_and_probability_forms_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for spec in [
            MarginSpec::nsoftmax(64.0),
            MarginSpec::cosface(64.0, 0.35),
            MarginSpec::arcface(64.0, 0.5),
            MarginSpec::combined(64.0, 1.0, 0.3, 0.2),
        ] {
            for _ in 0..200 {
                let theta_y = rng.random_range(0.05..(PI - 0.6));
                let others: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..PI)).collect();
                let g = margin_grad_cos(theta_y, &others, &spec).unwrap();
                let r = equivalent_rescale(theta_y, &others, &spec).unwrap();
                assert!((g.target + r.intra).abs() <= 1e-12 * r.intra.abs(), "{spec:?}");
                for (a, b) in g.others.iter().zip(&r.inter) {
                    assert!((a - b).abs() <= 1e-12 * b.abs());
                }
                let p = probabilities(theta_y, &others, &spec).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                // sign structure
                assert!(r.intra >= 0.0);
                assert!(g.others.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn unit_slope_identity() {
        let spec = MarginSpec::cosface(64.0, 0.35);
        let g = margin_grad_cos(1.1, &[1.3, 1.5, 1.6], &spec).unwrap();
        let sum: f64 = g.target + g.others.iter().sum::<f64>();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn cosface_loss_nondecreasing_in_margin() {
        let batch = EmbeddingBatch::from_rows(&[vec![0.6, 0.8, 0.0], vec![0.1, 0.2, 0.9]], vec![0, 2]).unwrap();
        let centers =
            CenterMatrix::from_vecs(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.3, 1.0]]).unwrap();
        let mut last = f64::NEG_INFINITY;
        for k in 0..20 {
            let m = k as f64 * 0.05;
            let l = margin_forward(&batch, &centers, &MarginSpec::cosface(64.0, m)).unwrap();
            assert!(l >= last);
            last = l;
        }
    }

    #[test]
    fn speed_curves_under_equal_inter_angles() {
        let pts = margin_v_curves(&MarginSpec::nsoftmax(64.0), 2, FRAC_PI_2, 3).unwrap();
        // θ = π/2 on both axes is the symmetric case
        assert!((pts[2].v_intra - 32.0).abs() < 1e-12);
        assert!((pts[2].v_inter - 32.0).abs() < 1e-12);
        assert_eq!(pts[0].v_intra, 0.0);
        let arc = margin_v_curves(&MarginSpec::arcface(64.0, 0.5), 10, FRAC_PI_2, 101).unwrap();
        assert!(arc.iter().all(|p| p.v_intra.is_finite() && p.v_intra >= 0.0));
    }
}
