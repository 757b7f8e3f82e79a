//! Mini-batch SGD over the class centers and the embedding parameters.
//!
//! Two backbones are supported: free embeddings (each `x_i` is itself a
//! parameter, initialized to the generated feature) and a linear map
//! `x_i = M u_i` applied to the raw inputs. Updates are plain
//! `p ← p - λ ∂L/∂p` with no momentum, weight decay or re-normalization, and
//! the learning rate is multiplied by `lr_decay_factor` at each decay step.
//!
//! Because every gradient of an angle-only loss is tangent to its parameter,
//! a directly updated vector obeys `|p'|² = |p|² + λ² |g|²`. The trainer
//! accumulates `Σ λ² |g|² / (2 |p_0|²)` per parameter, which bounds its
//! relative norm drift, and records both in each snapshot.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{angle_stats, AngleStats};
use crate::batch::{CenterMatrix, EmbeddingBatch, LossGradReport, Matrix};
use crate::error::{Error, Result};
use crate::geometry;
use crate::margin::{margin_backward, margin_forward, MarginSpec};
use crate::rescale::RescaleSpec;
use crate::sface::{sface_backward, sface_forward};
use crate::synthetic::{random_direction, NoisyDataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossConfig {
    SFace(RescaleSpec),
    Margin(MarginSpec),
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossConfig::SFace(s) => s.validate(),
            LossConfig::Margin(m) => m.validate(),
        }
    }

    pub fn forward(&self, batch: &EmbeddingBatch, centers: &CenterMatrix) -> Result<f64> {
        match self {
            LossConfig::SFace(s) => sface_forward(batch, centers, s),
            LossConfig::Margin(m) => margin_forward(batch, centers, m),
        }
    }

    pub fn backward(&self, batch: &EmbeddingBatch, centers: &CenterMatrix) -> Result<LossGradReport> {
        match self {
            LossConfig::SFace(s) => sface_backward(batch, centers, s),
            LossConfig::Margin(m) => margin_backward(batch, centers, m),
        }
    }

    /// Short name used in report tables, e.g. `sface-sigmoid` or `cosface`.
    pub fn label(&self) -> String {
        match self {
            LossConfig::SFace(s) => format!("sface-{}", s.family.name()),
            LossConfig::Margin(m) => m.variant.name().to_string(),
        }
    }

    pub fn rescale(&self) -> Option<&RescaleSpec> {
        match self {
            LossConfig::SFace(s) => Some(s),
            LossConfig::Margin(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "cli", derive(serde::Deserialize, serde::Serialize))]
#[cfg_attr(feature = "cli", serde(rename_all = "kebab-case"))]
pub enum Backbone {
    FreeEmbedding,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub backbone: Backbone,
    pub batch_size: usize,
    pub total_steps: usize,
    pub lr: f64,
    /// Strictly increasing iteration indices (1-based) at which the rate decays.
    pub lr_decay_steps: Vec<usize>,
    pub lr_decay_factor: f64,
    pub seed: u64,
    /// Snapshot period in steps; 0 means once per epoch.
    pub snapshot_every: usize,
}

impl TrainConfig {
    /// Defaults: free embeddings, batch 64, `lr = 0.1` decayed by 10 at 50%
    /// and 75% of the budget.
    pub fn new(loss: LossConfig, total_steps: usize) -> Self {
        TrainConfig {
            loss,
            backbone: Backbone::FreeEmbedding,
            batch_size: 64,
            total_steps,
            lr: 0.1,
            lr_decay_steps: default_decay_steps(total_steps),
            lr_decay_factor: 0.1,
            seed: 1,
            snapshot_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::spec("batch_size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::spec("learning rate must be finite and non-negative"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::spec("lr_decay_factor must be positive"));
        }
        if self.lr_decay_steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::spec("lr_decay_steps must be strictly increasing"));
        }
        if self.lr_decay_steps.last().is_some_and(|&s| s > self.total_steps) {
            return Err(Error::spec("lr_decay_steps must not exceed total_steps"));
        }
        Ok(())
    }

    /// Learning rate used at 1-based iteration `step`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        let decays = self.lr_decay_steps.iter().filter(|&&s| s <= step).count();
        self.lr * self.lr_decay_factor.powi(decays as i32)
    }
}

/// Decay at 50% and 75% of the step budget (deduplicated, non-zero).
pub fn default_decay_steps(total_steps: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = [total_steps / 2, total_steps * 3 / 4]
        .into_iter()
        .filter(|&s| s > 0)
        .collect();
    steps.dedup();
    steps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    /// Mean loss over the whole dataset (given labels).
    pub loss: f64,
    pub clean_intra_deg: f64,
    pub noisy_intra_deg: Option<f64>,
    /// Mean pairwise angle between centers.
    pub inter_deg: f64,
    /// Largest `| |p| / |p_0| - 1 |` over embeddings and centers.
    pub max_norm_drift: f64,
    /// Largest accumulated per-parameter drift bound.
    pub max_drift_bound: f64,
    /// Largest `drift_p - bound_p` over directly updated parameters.
    pub max_bound_excess: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub centers: CenterMatrix,
    /// Final embeddings with the given labels.
    pub embeddings: EmbeddingBatch,
    pub trace: TrainTrace,
    /// `d × d_in` map for the linear backbone.
    pub linear_map: Option<Matrix>,
}

impl TrainOutcome {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.trace
            .snapshots
            .last()
            .expect("trace always holds the initial snapshot")
    }
}

/// Norm tracking for one family of vectors.
struct DriftTracker {
    initial: Vec<f64>,
    bound: Option<Vec<f64>>,
}

impl DriftTracker {
    fn new(m: &Matrix, bounded: bool) -> Self {
        let initial = m.row_norms();
        let bound = bounded.then(|| vec![0.0; initial.len()]);
        DriftTracker { initial, bound }
    }

    fn record_step(&mut self, idx: usize, lr: f64, grad: &[f64]) {
        if let Some(b) = self.bound.as_mut() {
            let g2 = geometry::dot(grad, grad);
            b[idx] += lr * lr * g2 / (2.0 * self.initial[idx] * self.initial[idx]);
        }
    }

    /// `(max drift, max bound, max excess)`.
    fn measure(&self, current: &Matrix) -> (f64, f64, f64) {
        let mut drift = 0.0f64;
        let mut bound_max = 0.0f64;
        let mut excess = f64::NEG_INFINITY;
        for (i, row) in current.iter_rows().enumerate() {
            let d = (geometry::norm(row) / self.initial[i] - 1.0).abs();
            drift = drift.max(d);
            if let Some(b) = &self.bound {
                bound_max = bound_max.max(b[i]);
                excess = excess.max(d - b[i]);
            }
        }
        (drift, bound_max, excess)
    }
}

fn linear_embed(map: &Matrix, inputs: &EmbeddingBatch, rows: &[usize]) -> EmbeddingBatch {
    let d = map.rows();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &i in rows {
        let u = inputs.row(i);
        data.extend((0..d).map(|r| geometry::dot(map.row(r), u)));
    }
    let labels = rows.iter().map(|&i| inputs.label(i)).collect();
    EmbeddingBatch::new(Matrix::from_vec(rows.len(), d, data).expect("sized"), labels).expect("sized")
}

fn initial_linear_map(d_in: usize) -> Matrix {
    let mut m = Matrix::zeros(d_in, d_in);
    for i in 0..d_in {
        m.set(i, i, 1.0);
    }
    m
}

struct State<'a> {
    data: &'a NoisyDataset,
    cfg: &'a TrainConfig,
    centers: CenterMatrix,
    free: Option<EmbeddingBatch>,
    map: Option<Matrix>,
    center_drift: DriftTracker,
    embed_drift: DriftTracker,
}

impl State<'_> {
    fn all_rows(&self) -> Vec<usize> {
        (0..self.data.len()).collect()
    }

    fn embeddings(&self) -> EmbeddingBatch {
        match (&self.free, &self.map) {
            (Some(x), _) => x.clone(),
            (None, Some(m)) => linear_embed(m, &self.data.inputs, &self.all_rows()),
            (None, None) => unreachable!("one backbone is always present"),
        }
    }

    fn batch(&self, rows: &[usize]) -> EmbeddingBatch {
        match (&self.free, &self.map) {
            (Some(x), _) => x.select(rows),
            (None, Some(m)) => linear_embed(m, &self.data.inputs, rows),
            (None, None) => unreachable!("one backbone is always present"),
        }
    }

    fn snapshot(&self, step: usize) -> Result<Snapshot> {
        let emb = self.embeddings();
        let loss = self.cfg.loss.forward(&emb, &self.centers)?;
        if !loss.is_finite() {
            return Err(Error::DivergedLoss { step, loss });
        }
        let stats: AngleStats = angle_stats(&emb, &self.centers, &self.data.noise_mask)?;
        let (cd, cb, ce) = self.center_drift.measure(self.centers.as_matrix());
        let (ed, eb, ee) = self.embed_drift.measure(emb.features());
        Ok(Snapshot {
            step,
            loss,
            clean_intra_deg: stats.clean_intra_mean,
            noisy_intra_deg: stats.noise_intra_mean,
            inter_deg: stats.inter_mean,
            max_norm_drift: cd.max(ed),
            max_drift_bound: cb.max(eb),
            max_bound_excess: ce.max(ee),
        })
    }

    fn step(&mut self, step: usize, rows: &[usize]) -> Result<()> {
        let lr = self.cfg.learning_rate(step);
        let batch = self.batch(rows);
        let report = self.cfg.loss.backward(&batch, &self.centers)?;
        if !report.loss.is_finite() {
            return Err(Error::DivergedLoss {
                step,
                loss: report.loss,
            });
        }
        if let Some(x) = self.free.as_mut() {
            for (k, &i) in rows.iter().enumerate() {
                let g = report.grad_x.row(k);
                self.embed_drift.record_step(i, lr, g);
                for (p, gv) in x.row_mut(i).iter_mut().zip(g) {
                    *p -= lr * gv;
                }
            }
        }
        if let Some(m) = self.map.as_mut() {
            // ∂L/∂M = Σ_k g_k u_k^T
            let d_in = m.cols();
            let mut grad = Matrix::zeros(m.rows(), d_in);
            for (k, &i) in rows.iter().enumerate() {
                let g = report.grad_x.row(k);
                let u = self.data.inputs.row(i);
                for (r, &gr) in g.iter().enumerate() {
                    for (gm, &uv) in grad.row_mut(r).iter_mut().zip(u) {
                        *gm += gr * uv;
                    }
                }
            }
            for (p, gv) in m.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                *p -= lr * gv;
            }
        }
        for j in 0..self.centers.num_classes() {
            let g = report.grad_w.row(j);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            self.center_drift.record_step(j, lr, g);
            for (p, gv) in self.centers.column_mut(j).iter_mut().zip(g) {
                *p -= lr * gv;
            }
        }
        Ok(())
    }
}

/// ChaCha8 stream for center initialization. The dataset generator uses
/// the low stream ids, so the trainer counts down from the top to keep the
/// initial centers independent of the class directions under a shared seed.
pub const CENTER_STREAM: u64 = u64::MAX;
/// ChaCha8 stream for the per-epoch batch permutations.
pub const SHUFFLE_STREAM: u64 = u64::MAX - 1;

/// Random unit center for each class, from [`CENTER_STREAM`] of `seed`.
pub fn init_centers(num_classes: usize, dim: usize, seed: u64) -> CenterMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CENTER_STREAM);
    let rows: Vec<Vec<f64>> = (0..num_classes).map(|_| random_direction(&mut rng, dim)).collect();
    CenterMatrix::from_vecs(&rows).expect("equal widths")
}

pub fn train(data: &NoisyDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::spec("empty dataset"));
    }
    if data.noise_mask.len() != data.len() || data.true_labels.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: data.noise_mask.len(),
        });
    }
    let d = data.inputs.dim();
    let centers = init_centers(data.num_classes, d, cfg.seed);
    let (free, map) = match cfg.backbone {
        Backbone::FreeEmbedding => (Some(data.inputs.clone()), None),
        Backbone::Linear => (None, Some(initial_linear_map(d))),
    };
    let bounded_embeddings = cfg.backbone == Backbone::FreeEmbedding;
    let initial_embeddings = match (&free, &map) {
        (Some(x), _) => x.features().clone(),
        (None, Some(m)) => linear_embed(m, &data.inputs, &(0..data.len()).collect::<Vec<_>>())
            .features()
            .clone(),
        (None, None) => unreachable!(),
    };
    let mut state = State {
        data,
        cfg,
        center_drift: DriftTracker::new(centers.as_matrix(), true),
        embed_drift: DriftTracker::new(&initial_embeddings, bounded_embeddings),
        centers,
        free,
        map,
    };

    let n = data.len();
    let batch_size = cfg.batch_size.min(n);
    let snapshot_every = if cfg.snapshot_every == 0 {
        n.div_ceil(batch_size)
    } else {
        cfg.snapshot_every
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    let mut trace = TrainTrace::default();
    trace.snapshots.push(state.snapshot(0)?);
    for step in 1..=cfg.total_steps {
        if cursor >= n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + batch_size).min(n);
        let rows = order[cursor..end].to_vec();
        cursor = end;
        state.step(step, &rows)?;
        if step % snapshot_every == 0 || step == cfg.total_steps {
            trace.snapshots.push(state.snapshot(step)?);
        }
    }

    let embeddings = state.embeddings();
    Ok(TrainOutcome {
        centers: state.centers,
        embeddings,
        trace,
        linear_map: state.map,
    })
}

/// Largest relative norm drift over all snapshots (0 for an empty trace).
pub fn norm_drift(trace: &TrainTrace) -> f64 {
    trace.snapshots.iter().map(|s| s.max_norm_drift).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, DatasetSpec};

    fn small_data() -> NoisyDataset {
        generate(&DatasetSpec {
            num_classes: 4,
            per_class: 10,
            dim: 6,
            flip_rate: 0.1,
            seed: 3,
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    fn sface_cfg(steps: usize) -> TrainConfig {
        TrainConfig::new(LossConfig::SFace(RescaleSpec::sigmoid(64.0, 80.0, 0.8, 1.28)), steps)
    }

    #[test]
    fn schedule() {
        let cfg = TrainConfig {
            lr_decay_steps: vec![1000, 1500],
            ..sface_cfg(2000)
        };
        assert_eq!(cfg.learning_rate(1), 0.1);
        assert_eq!(cfg.learning_rate(999), 0.1);
        assert_eq!(cfg.learning_rate(1000), 0.1 * 0.1);
        assert_eq!(cfg.learning_rate(1500), 0.1 * 0.1 * 0.1);
        assert_eq!(default_decay_steps(2000), vec![1000, 1500]);
        assert_eq!(default_decay_steps(1), Vec::<usize>::new());
    }

    #[test]
    fn invalid_schedules() {
        let cfg = TrainConfig {
            lr_decay_steps: vec![10, 5],
            ..sface_cfg(20)
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            lr_decay_steps: vec![30],
            ..sface_cfg(20)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = small_data();
        let cfg = TrainConfig {
            lr: 0.0,
            ..sface_cfg(30)
        };
        let out = train(&data, &cfg).unwrap();
        assert_eq!(out.embeddings, data.inputs);
        assert_eq!(out.centers, init_centers(4, 6, cfg.seed));
        assert_eq!(norm_drift(&out.trace), 0.0);
    }

    #[test]
    fn single_tangent_step_obeys_pythagoras() {
        let data = small_data();
        let one = NoisyDataset {
            inputs: data.inputs.select(&[0]),
            true_labels: vec![data.true_labels[0]],
            noise_mask: vec![false],
            num_classes: 4,
        };
        let cfg = TrainConfig {
            batch_size: 1,
            lr_decay_steps: vec![],
            ..sface_cfg(1)
        };
        let centers = init_centers(4, 6, cfg.seed);
        let g = cfg.loss.backward(&one.inputs, &centers).unwrap();
        let before = geometry::dot(one.inputs.row(0), one.inputs.row(0));
        let out = train(&one, &cfg).unwrap();
        let after = geometry::dot(out.embeddings.row(0), out.embeddings.row(0));
        let g2 = geometry::dot(g.grad_x.row(0), g.grad_x.row(0));
        assert!((after - (before + 0.01 * g2)).abs() <= 1e-12);
        let t2 = 0.01 * g2 / before;
        let drift = out.embeddings.features().row_norms()[0] / before.sqrt() - 1.0;
        assert!((drift - ((1.0 + t2).sqrt() - 1.0)).abs() < 1e-12);
        assert!(drift <= t2 / 2.0);
    }

    #[test]
    fn deterministic_and_bounded() {
        let data = small_data();
        for backbone in [Backbone::FreeEmbedding, Backbone::Linear] {
            let cfg = TrainConfig {
                backbone,
                ..sface_cfg(60)
            };
            let a = train(&data, &cfg).unwrap();
            let b = train(&data, &cfg).unwrap();
            assert_eq!(a, b);
            assert!(a.trace.snapshots.windows(2).all(|w| w[1].step > w[0].step));
            for s in &a.trace.snapshots {
                assert!(s.max_bound_excess <= 1e-9, "{s:?}");
            }
        }
    }

    #[test]
    fn margin_loss_trains() {
        let data = small_data();
        let cfg = TrainConfig::new(LossConfig::Margin(MarginSpec::cosface(64.0, 0.35)), 40);
        let out = train(&data, &cfg).unwrap();
        let first = out.trace.snapshots.first().unwrap().loss;
        assert!(out.final_snapshot().loss < first);
    }
}
