use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Isotropic Gaussian clusters, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    /// Radius of the sphere the class means are drawn on.
    pub separation: f64,
    /// Per-coordinate standard deviation around each mean.
    #[serde(default = "unit")]
    pub noise: f64,
}

fn unit() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("dataset needs at least two classes".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Config(format!(
                "samples_per_class must be at least 2 to split, got {}",
                self.samples_per_class
            )));
        }
        if !(self.separation.is_finite() && self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config("separation and noise must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    /// Row-major `len × dim`.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.dim..(n + 1) * self.dim]
    }

    /// Copies the listed samples into a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            inputs: idx
                .iter()
                .flat_map(|&n| self.sample(n).iter().copied())
                .collect(),
            labels: idx.iter().map(|&n| self.labels[n]).collect(),
        }
    }
}

/// Draws the clusters and splits each class 90/10 into train and validation.
pub fn make_synthetic_dataset(spec: &DatasetSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xDA7A));
    let dim = spec.input_dim;

    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = v
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / len * spec.separation).collect()
        })
        .collect();

    let n_val = (spec.samples_per_class / 10).max(1);
    let n_train = spec.samples_per_class - n_val;
    let mut train = Dataset {
        dim,
        inputs: Vec::new(),
        labels: Vec::new(),
    };
    let mut val = train.clone();
    for (class, mean) in means.iter().enumerate() {
        for s in 0..spec.samples_per_class {
            let target = if s < n_train { &mut train } else { &mut val };
            target.inputs.extend(mean.iter().map(|m| {
                let e: f64 = StandardNormal.sample(&mut rng);
                m + spec.noise * e
            }));
            target.labels.push(class);
        }
    }

    // interleave classes so that any prefix is mixed
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    Ok((train.subset(&order), val))
}
