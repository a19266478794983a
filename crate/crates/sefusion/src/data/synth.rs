//! Seeded synthetic datasets: Gaussian class-conditional clusters in the
//! concatenated feature space with a controllable margin.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Record, Split, TaskId, TaskSpec};
use crate::error::{Error, Result};

/// Per-coordinate standard deviation within a class cluster.
pub const WITHIN_STD: f64 = 0.5;
/// Minimum pairwise mean distance at separability 1, in units of WITHIN_STD.
const SEPARATION_SIGMAS: f64 = 6.5;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub task: TaskId,
    /// 0 gives identical class-conditional distributions; 1 gives cluster
    /// means at least 6 within-class standard deviations apart.
    pub separability: f64,
    /// Per-class share of each split; uniform when absent.
    pub proportions: Option<Vec<f64>>,
    pub text_dim: usize,
    pub image_dim: usize,
}

impl SynthConfig {
    fn validate(&self) -> Result<&'static TaskSpec> {
        let spec = TaskSpec::for_task(self.task);
        if !(0.0..=1.0).contains(&self.separability) {
            return Err(Error::usage(format!(
                "separability must be in [0, 1], got {}",
                self.separability
            )));
        }
        if self.text_dim == 0 || self.image_dim == 0 {
            return Err(Error::usage("feature dimensions must be positive"));
        }
        for (split, n) in [
            (Split::Train, self.n_train),
            (Split::Validation, self.n_validation),
            (Split::Test, self.n_test),
        ] {
            if n < spec.class_count {
                return Err(Error::usage(format!(
                    "{split} split of {n} samples cannot cover {} classes",
                    spec.class_count
                )));
            }
        }
        if let Some(p) = &self.proportions {
            if p.len() != spec.class_count {
                return Err(Error::usage(format!(
                    "got {} proportions for {} classes",
                    p.len(),
                    spec.class_count
                )));
            }
            if p.iter().any(|&v| !(0.0..=1.0).contains(&v) || !v.is_finite()) {
                return Err(Error::usage("proportions must lie in [0, 1]"));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::usage(format!(
                    "proportions sum to {sum}, expected 1"
                )));
            }
        }
        Ok(spec)
    }
}

/// Class means used by the generator: random unit directions rescaled so the
/// minimum pairwise distance is `separability · 6.5 · WITHIN_STD`.
/// Separability 0 collapses every mean to the origin.
pub(crate) fn class_means(
    classes: usize,
    dim: usize,
    separability: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let mut min_dist = f64::INFINITY;
    for i in 0..classes {
        for j in (i + 1)..classes {
            let d: f64 = means[i]
                .iter()
                .zip(&means[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(d);
        }
    }
    let target = separability * SEPARATION_SIGMAS * WITHIN_STD;
    let scale = if min_dist.is_finite() && min_dist > 1e-9 {
        target / min_dist
    } else {
        0.0
    };
    for mean in &mut means {
        for v in mean.iter_mut() {
            *v *= scale;
        }
    }
    means
}

/// Largest-remainder apportionment of `n` samples over the class shares;
/// ties break toward lower class indices.
fn apportion(n: usize, proportions: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = proportions
        .iter()
        .map(|p| (p * n as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = proportions
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p * n as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..n.saturating_sub(assigned) {
        counts[remainders[k % remainders.len()].0] += 1;
    }
    counts
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    let spec = cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.text_dim + cfg.image_dim;
    let means = class_means(spec.class_count, dim, cfg.separability, &mut rng);
    let uniform = vec![1.0 / spec.class_count as f64; spec.class_count];
    let proportions = cfg.proportions.as_deref().unwrap_or(&uniform);

    let mut records = Vec::new();
    for (split, n) in [
        (Split::Train, cfg.n_train),
        (Split::Validation, cfg.n_validation),
        (Split::Test, cfg.n_test),
    ] {
        let counts = apportion(n, proportions);
        let mut labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(class, &count)| std::iter::repeat_n(class, count))
            .collect();
        labels.shuffle(&mut rng);
        for (i, &label) in labels.iter().enumerate() {
            let mean = &means[label];
            let features: Vec<f64> = (0..dim)
                .map(|d| mean[d] + WITHIN_STD * rng.sample::<f64, _>(StandardNormal))
                .collect();
            records.push(Record {
                id: format!("{split}-{i:05}"),
                split,
                labels: BTreeMap::from([(cfg.task, label)]),
                text_features: features[..cfg.text_dim].to_vec(),
                image_features: features[cfg.text_dim..].to_vec(),
            });
        }
    }
    Dataset::new(cfg.text_dim, cfg.image_dim, records)
}
