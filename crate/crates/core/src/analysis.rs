//! Angle statistics of trained embeddings and hyperparameter sweeps.
//!
//! Intra angles are `θ(x_i, W_{y_i})`, split by the noise mask; inter
//! statistics run over all unordered pairs of centers. Everything is reported
//! in degrees.

use crate::batch::{validate_pair, CenterMatrix, EmbeddingBatch};
use crate::error::{Error, Result};
use crate::geometry::cosine_angle;
use crate::synthetic::{generate, DatasetSpec};
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleStats {
    pub clean_intra_mean: f64,
    /// Absent when no sample is marked as noise.
    pub noise_intra_mean: Option<f64>,
    /// `noise_intra_mean - clean_intra_mean`.
    pub delta_intra: Option<f64>,
    pub inter_mean: f64,
    /// Population standard deviation over center pairs.
    pub inter_std: f64,
}

/// Mean and population standard deviation (degrees) of the angles between
/// all pairs of distinct centers.
pub fn center_pair_angles(centers: &CenterMatrix) -> Result<(f64, f64)> {
    let c = centers.num_classes();
    if c < 2 {
        return Err(Error::spec("inter-center statistics need at least two centers"));
    }
    let mut angles = Vec::with_capacity(c * (c - 1) / 2);
    for j in 0..c {
        for k in j + 1..c {
            angles.push(cosine_angle(centers.column(j), centers.column(k))?.theta.to_degrees());
        }
    }
    let mean = angles.iter().sum::<f64>() / angles.len() as f64;
    let var = angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / angles.len() as f64;
    Ok((mean, var.sqrt()))
}

pub fn angle_stats(embeddings: &EmbeddingBatch, centers: &CenterMatrix, noise_mask: &[bool]) -> Result<AngleStats> {
    validate_pair(embeddings, centers)?;
    if noise_mask.len() != embeddings.len() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.len(),
            found: noise_mask.len(),
        });
    }
    let (mut clean_sum, mut clean_n, mut noise_sum, mut noise_n) = (0.0, 0usize, 0.0, 0usize);
    for (i, &noisy) in noise_mask.iter().enumerate() {
        let theta = cosine_angle(embeddings.row(i), centers.column(embeddings.label(i)))?
            .theta
            .to_degrees();
        if noisy {
            noise_sum += theta;
            noise_n += 1;
        } else {
            clean_sum += theta;
            clean_n += 1;
        }
    }
    if clean_n == 0 {
        return Err(Error::spec("angle statistics need at least one clean sample"));
    }
    let clean_intra_mean = clean_sum / clean_n as f64;
    let noise_intra_mean = (noise_n > 0).then(|| noise_sum / noise_n as f64);
    let (inter_mean, inter_std) = center_pair_angles(centers)?;
    Ok(AngleStats {
        clean_intra_mean,
        noise_intra_mean,
        delta_intra: noise_intra_mean.map(|m| m - clean_intra_mean),
        inter_mean,
        inter_std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub noise_rate: f64,
    pub loss: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub stats: AngleStats,
    pub final_loss: f64,
}

/// Train every entry and tabulate final-checkpoint statistics, in input order.
pub fn noise_sweep(entries: &[SweepEntry]) -> Result<Vec<SweepRow>> {
    if entries.is_empty() {
        return Err(Error::spec("sweep needs at least one configuration"));
    }
    let workers = std::thread::available_parallelism().map_or(1, usize::from);
    let mut rows = Vec::with_capacity(entries.len());
    for chunk in entries.chunks(workers) {
        let done: Vec<Result<SweepRow>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk.iter().map(|e| scope.spawn(move || run_entry(e))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });
        for row in done {
            rows.push(row?);
        }
    }
    Ok(rows)
}

/// One sweep row: generate, train, measure.
pub fn run_entry(entry: &SweepEntry) -> Result<SweepRow> {
    let data = generate(&entry.dataset)?;
    let out = train(&data, &entry.train)?;
    let stats = angle_stats(&out.embeddings, &out.centers, &data.noise_mask)?;
    let rescale = entry.train.loss.rescale();
    Ok(SweepRow {
        noise_rate: entry.dataset.noise_rate(),
        loss: entry.train.loss.label(),
        a: rescale.map(|r| r.a),
        b: rescale.map(|r| r.b),
        stats,
        final_loss: out.final_snapshot().loss,
    })
}

/// For each noise level (in first-appearance order), the cutoff `a` of the
/// re-scaled row with the largest `delta_intra` among rows whose clean intra
/// angle stays at or below `clean_ceiling_deg`.
///
/// A missing delta (noise-free data) scores 0; ties go to the row with the
/// smaller clean intra angle. `None` when no row at that level is feasible.
pub fn best_tradeoff(rows: &[SweepRow], clean_ceiling_deg: f64) -> Vec<(f64, Option<f64>)> {
    let mut levels: Vec<f64> = Vec::new();
    for r in rows {
        if !levels.contains(&r.noise_rate) {
            levels.push(r.noise_rate);
        }
    }
    levels
        .into_iter()
        .map(|level| {
            let best = rows
                .iter()
                .filter(|r| r.noise_rate == level && r.a.is_some())
                .filter(|r| r.stats.clean_intra_mean <= clean_ceiling_deg)
                .min_by(|p, q| {
                    let sp = p.stats.delta_intra.unwrap_or(0.0);
                    let sq = q.stats.delta_intra.unwrap_or(0.0);
                    sq.total_cmp(&sp)
                        .then(p.stats.clean_intra_mean.total_cmp(&q.stats.clean_intra_mean))
                });
            (level, best.and_then(|r| r.a))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::Matrix;

    fn orthonormal(c: usize) -> CenterMatrix {
        let mut m = Matrix::zeros(c, c);
        for i in 0..c {
            m.set(i, i, 1.0);
        }
        CenterMatrix::from_columns(m)
    }

    #[test]
    fn aligned_embeddings_and_orthogonal_centers() {
        let centers = orthonormal(3);
        let batch = EmbeddingBatch::from_rows(
            &[vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 5.0]],
            vec![0, 1, 2],
        )
        .unwrap();
        let s = angle_stats(&batch, &centers, &[false; 3]).unwrap();
        assert_eq!(s.clean_intra_mean, 0.0);
        assert_eq!(s.noise_intra_mean, None);
        assert_eq!(s.delta_intra, None);
        assert_eq!(s.inter_mean, 90.0);
        assert_eq!(s.inter_std, 0.0);
    }

    #[test]
    fn delta_is_exact_difference() {
        let centers = orthonormal(2);
        let batch =
            EmbeddingBatch::from_rows(&[vec![1.0, 0.2], vec![1.0, 1.0], vec![0.3, 1.0]], vec![0, 0, 1]).unwrap();
        let s = angle_stats(&batch, &centers, &[false, true, false]).unwrap();
        assert_eq!(s.delta_intra.unwrap(), s.noise_intra_mean.unwrap() - s.clean_intra_mean);
        assert!((s.noise_intra_mean.unwrap() - 45.0).abs() < 1e-12);
    }

    #[test]
    fn requires_clean_samples_and_matching_mask() {
        let centers = orthonormal(2);
        let batch = EmbeddingBatch::from_rows(&[vec![1.0, 0.0]], vec![0]).unwrap();
        assert!(angle_stats(&batch, &centers, &[true]).is_err());
        assert!(matches!(
            angle_stats(&batch, &centers, &[false, false]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn row(noise: f64, a: f64, clean: f64, delta: Option<f64>) -> SweepRow {
        SweepRow {
            noise_rate: noise,
            loss: "sface-sigmoid".into(),
            a: Some(a),
            b: Some(1.28),
            stats: AngleStats {
                clean_intra_mean: clean,
                noise_intra_mean: delta.map(|d| clean + d),
                delta_intra: delta,
                inter_mean: 90.0,
                inter_std: 1.0,
            },
            final_loss: 0.0,
        }
    }

    #[test]
    fn tradeoff_selection() {
        let rows = vec![
            row(0.0, 0.80, 30.0, None),
            row(0.0, 0.82, 31.0, None),
            row(0.1, 0.80, 30.0, Some(5.0)),
            row(0.1, 0.82, 31.0, Some(6.0)),
            row(0.1, 0.84, 80.0, Some(9.0)),
        ];
        let best = best_tradeoff(&rows, 60.0);
        assert_eq!(best, vec![(0.0, Some(0.80)), (0.1, Some(0.82))]);
        assert_eq!(best_tradeoff(&rows, 10.0), vec![(0.0, None), (0.1, None)]);
    }
}
