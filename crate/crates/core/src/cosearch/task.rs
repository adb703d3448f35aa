//! Seeded synthetic image classification used as the search task.
//!
//! Each class is a sinusoidal grating at its own orientation. Phase is drawn
//! uniformly per sample, so class means are zero and a linear readout of the
//! pixels cannot separate the classes; the candidate ops have to supply the
//! nonlinearity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const IMAGE_SIDE: usize = 16;
pub const CHANNELS: usize = 3;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE * CHANNELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTaskConfig {
    pub classes: usize,
    /// Samples per class used to train task weights.
    pub train_per_class: usize,
    /// Held-out samples per class used for architecture steps.
    pub search_per_class: usize,
    pub val_per_class: usize,
    /// Pixel noise standard deviation; grating amplitude is ~1.
    pub noise: f64,
    /// Width of the fixed random projection of the pixels.
    pub features: usize,
    pub seed: u64,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            train_per_class: 1000,
            search_per_class: 500,
            val_per_class: 500,
            noise: 0.5,
            features: 32,
            seed: 0,
        }
    }
}

impl ToyTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidArgument("toy task needs at least 2 classes".into()));
        }
        if self.train_per_class == 0 || self.search_per_class == 0 || self.val_per_class == 0 {
            return Err(Error::InvalidArgument("every toy-task split needs samples".into()));
        }
        if self.features == 0 {
            return Err(Error::InvalidArgument("feature width must be positive".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::InvalidArgument(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// One labelled split: `rows x features` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Samples {
        Samples {
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut c = vec![0; classes];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub config: ToyTaskConfig,
    pub train: Samples,
    pub search: Samples,
    pub val: Samples,
}

fn grating<R: Rng + ?Sized>(rng: &mut R, class: usize, classes: usize, noise: f64) -> Vec<f64> {
    let theta = std::f64::consts::PI * class as f64 / classes as f64 + rng.random_range(-0.1..0.1);
    let freq = 2.0 * std::f64::consts::PI * rng.random_range(2.5..3.5) / IMAGE_SIDE as f64;
    let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    let amp: [f64; CHANNELS] = std::array::from_fn(|_| rng.random_range(0.5..1.0));
    let (s, c) = theta.sin_cos();
    let mut img = Vec::with_capacity(PIXELS);
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let v = (freq * (x as f64 * c + y as f64 * s) + phase).sin();
            for a in amp {
                let n: f64 = rng.sample(StandardNormal);
                img.push(a * v + noise * n);
            }
        }
    }
    img
}

fn make_split(rng: &mut ChaCha8Rng, cfg: &ToyTaskConfig, per_class: usize, proj: &Matrix) -> Samples {
    let mut labels: Vec<usize> = (0..cfg.classes).flat_map(|c| std::iter::repeat_n(c, per_class)).collect();
    labels.shuffle(rng);
    let mut pixels = Matrix::zeros((labels.len(), PIXELS));
    for (i, &c) in labels.iter().enumerate() {
        let img = grating(rng, c, cfg.classes, cfg.noise);
        pixels.row_mut(i).assign(&ndarray::Array1::from(img));
    }
    Samples {
        x: pixels.dot(proj),
        y: labels,
    }
}

impl ToyTask {
    pub fn generate(cfg: &ToyTaskConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let scale = 1.0 / (PIXELS as f64).sqrt();
        let proj = Matrix::from_shape_fn((PIXELS, cfg.features), |_| rng.sample::<f64, _>(StandardNormal) * scale);
        let mut train = make_split(&mut rng, cfg, cfg.train_per_class, &proj);
        let mut search = make_split(&mut rng, cfg, cfg.search_per_class, &proj);
        let mut val = make_split(&mut rng, cfg, cfg.val_per_class, &proj);

        // Standardize every split with the training statistics.
        let mean = train.x.mean_axis(ndarray::Axis(0)).expect("non-empty");
        let std = train.x.std_axis(ndarray::Axis(0), 0.0).mapv(|s| s.max(1e-8));
        for s in [&mut train, &mut search, &mut val] {
            s.x -= &mean;
            s.x /= &std;
        }
        Ok(Self {
            config: cfg.clone(),
            train,
            search,
            val,
        })
    }

    pub fn features(&self) -> usize {
        self.config.features
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyTaskConfig {
        ToyTaskConfig {
            train_per_class: 20,
            search_per_class: 10,
            val_per_class: 10,
            ..ToyTaskConfig::default()
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let a = ToyTask::generate(&small()).unwrap();
        let b = ToyTask::generate(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.class_counts(4), vec![20; 4]);
        assert_eq!(a.search.class_counts(4), vec![10; 4]);
        assert_eq!(a.val.x.dim(), (40, 32));
        let c = ToyTask::generate(&ToyTaskConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.train.x, c.train.x);
    }

    #[test]
    fn rejects_empty_split() {
        let cfg = ToyTaskConfig {
            val_per_class: 0,
            ..small()
        };
        assert!(ToyTask::generate(&cfg).is_err());
    }
}
