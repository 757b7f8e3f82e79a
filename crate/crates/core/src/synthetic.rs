//! Seeded labeled clusters on the unit sphere with controlled label noise.
//!
//! Randomness comes from `ChaCha8` with one independent stream per role:
//! stream 0 draws class directions, stream `1 + c` draws the members of
//! class `c`, and stream `1 + C` draws the noise assignment. Gaussian
//! variates use `rand_distr::StandardNormal`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::batch::{EmbeddingBatch, Matrix};
use crate::error::{Error, Result};
use crate::geometry;

/// Class directions are redrawn while any pairwise cosine exceeds this.
pub const MAX_CLASS_COSINE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "cli", derive(serde::Deserialize, serde::Serialize))]
#[cfg_attr(feature = "cli", serde(deny_unknown_fields, default))]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Within-class spread control; members are `dir + N(0, I / concentration)`.
    pub concentration: f64,
    pub flip_rate: f64,
    pub outlier_rate: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            num_classes: 10,
            per_class: 100,
            dim: 16,
            concentration: 40.0,
            flip_rate: 0.0,
            outlier_rate: 0.0,
            seed: 1,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::spec("at least two classes are required"));
        }
        if self.dim < 2 {
            return Err(Error::spec("dimension must be at least 2"));
        }
        if self.per_class == 0 {
            return Err(Error::spec("per_class must be positive"));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::spec("concentration must be positive and finite"));
        }
        let rate_ok = |r: f64| (0.0..1.0).contains(&r);
        if !rate_ok(self.flip_rate) || !rate_ok(self.outlier_rate) || self.flip_rate + self.outlier_rate >= 1.0 {
            return Err(Error::spec(
                "noise rates must be in [0, 1) with flip_rate + outlier_rate < 1",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.num_classes * self.per_class
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn noise_rate(&self) -> f64 {
        self.flip_rate + self.outlier_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    /// Features with the *given* (possibly corrupted) labels.
    pub inputs: EmbeddingBatch,
    pub true_labels: Vec<usize>,
    /// `true` for flipped samples and outliers.
    pub noise_mask: Vec<bool>,
    pub num_classes: usize,
}

impl NoisyDataset {
    pub fn given_labels(&self) -> &[usize] {
        self.inputs.labels()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn noise_count(&self) -> usize {
        self.noise_mask.iter().filter(|&&m| m).count()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = geometry::norm(v);
    v.iter_mut().for_each(|c| *c /= n);
}

/// Uniformly distributed unit vector.
pub fn random_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian(rng, d);
        if geometry::norm(&v) > 1e-6 {
            normalize(&mut v);
            return v;
        }
    }
}

fn class_directions(spec: &DatasetSpec) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream(spec.seed, 0);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
    let mut attempts = 0usize;
    while dirs.len() < spec.num_classes {
        attempts += 1;
        if attempts > 10_000 * spec.num_classes {
            return Err(Error::spec("could not place well-separated class directions"));
        }
        let cand = random_direction(&mut rng, spec.dim);
        if dirs.iter().all(|d| geometry::dot(d, &cand) <= MAX_CLASS_COSINE) {
            dirs.push(cand);
        }
    }
    Ok(dirs)
}

pub fn generate(spec: &DatasetSpec) -> Result<NoisyDataset> {
    spec.validate()?;
    let (c, d, n) = (spec.num_classes, spec.dim, spec.len());
    let dirs = class_directions(spec)?;
    let sigma = 1.0 / spec.concentration.sqrt();

    let mut features = Matrix::zeros(n, d);
    let mut true_labels = Vec::with_capacity(n);
    for (class, dir) in dirs.iter().enumerate() {
        let mut rng = stream(spec.seed, 1 + class as u64);
        for k in 0..spec.per_class {
            let row = features.row_mut(class * spec.per_class + k);
            loop {
                for (r, &u) in row.iter_mut().zip(dir) {
                    *r = u + sigma * rng.sample::<f64, _>(StandardNormal);
                }
                if geometry::norm(row) > 1e-9 {
                    break;
                }
            }
            normalize(row);
            true_labels.push(class);
        }
    }

    let mut given = true_labels.clone();
    let mut noise_mask = vec![false; n];
    let mut rng = stream(spec.seed, 1 + c as u64);
    let n_flip = (spec.flip_rate * n as f64).round() as usize;
    let n_outlier = (spec.outlier_rate * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in &order[..n_flip] {
        // uniform over the other C - 1 classes
        let shift = rng.random_range(1..c);
        given[i] = (true_labels[i] + shift) % c;
        noise_mask[i] = true;
    }
    for &i in &order[n_flip..n_flip + n_outlier] {
        let v = random_direction(&mut rng, d);
        features.row_mut(i).copy_from_slice(&v);
        noise_mask[i] = true;
    }

    Ok(NoisyDataset {
        inputs: EmbeddingBatch::new(features, given)?,
        true_labels,
        noise_mask,
        num_classes: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_dataset_has_no_noise() {
        let ds = generate(&DatasetSpec::default()).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.given_labels(), ds.true_labels.as_slice());
        assert!(ds.noise_mask.iter().all(|&m| !m));
    }

    #[test]
    fn noise_counts_and_flip_semantics() {
        let spec = DatasetSpec {
            flip_rate: 0.1,
            outlier_rate: 0.1,
            seed: 99,
            ..DatasetSpec::default()
        };
        let ds = generate(&spec).unwrap();
        assert!((ds.noise_count() as i64 - 200).abs() <= 1);
        let mut flips = 0;
        for i in 0..ds.len() {
            if ds.given_labels()[i] != ds.true_labels[i] {
                flips += 1;
                assert!(ds.noise_mask[i]);
            }
        }
        assert_eq!(flips, 100);
        for row in ds.inputs.features().iter_rows() {
            assert!((geometry::norm(row) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = DatasetSpec {
            flip_rate: 0.2,
            seed: 5,
            ..DatasetSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = DatasetSpec { seed: 6, ..spec };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn high_concentration_is_tight() {
        let spec = DatasetSpec {
            concentration: 1e8,
            ..DatasetSpec::default()
        };
        let ds = generate(&spec).unwrap();
        let dirs = class_directions(&spec).unwrap();
        let mean: f64 = (0..ds.len())
            .map(|i| {
                geometry::cosine_angle(ds.inputs.row(i), &dirs[ds.true_labels[i]])
                    .unwrap()
                    .theta
            })
            .sum::<f64>()
            / ds.len() as f64;
        assert!(mean.to_degrees() < 1.0);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            DatasetSpec {
                num_classes: 1,
                ..DatasetSpec::default()
            },
            DatasetSpec {
                dim: 1,
                ..DatasetSpec::default()
            },
            DatasetSpec {
                flip_rate: 0.6,
                outlier_rate: 0.4,
                ..DatasetSpec::default()
            },
            DatasetSpec {
                concentration: 0.0,
                ..DatasetSpec::default()
            },
        ];
        for spec in bad {
            assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))));
        }
    }
}
