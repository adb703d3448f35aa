//! SGD and Adam, plus learning-rate schedules.

use serde::{Deserialize, Serialize};

use super::tape::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        momentum: f64,
        weight_decay: f64,
        nesterov: bool,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimizerConfig::Sgd {
            lr,
            momentum,
            weight_decay: 0.0,
            nesterov: false,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => *lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
        }
        Ok(())
    }
}

/// Optimizer with per-parameter state buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn set_lr(&mut self, new_lr: f64) {
        match &mut self.config {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => *lr = new_lr,
        }
    }

    fn ensure_state(&mut self, params: &[Matrix]) {
        if self.first.len() != params.len() {
            self.first = params.iter().map(|p| Matrix::zeros(p.dim())).collect();
            self.second = params.iter().map(|p| Matrix::zeros(p.dim())).collect();
        }
    }

    /// Applies one update in place. Refuses to produce non-finite parameters.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.dim() != g.dim() {
                return Err(Error::Shape(format!(
                    "parameter {i} has shape {:?}, gradient {:?}",
                    p.dim(),
                    g.dim()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {i}")));
            }
        }
        self.ensure_state(params);
        self.step += 1;
        let mut updated: Vec<Matrix> = Vec::with_capacity(params.len());
        match self.config {
            OptimizerConfig::Sgd {
                lr,
                momentum,
                weight_decay,
                nesterov,
            } => {
                for ((p, g), v) in params.iter().zip(grads).zip(self.first.iter_mut()) {
                    let mut d = g.clone();
                    if weight_decay != 0.0 {
                        d.scaled_add(weight_decay, p);
                    }
                    if momentum != 0.0 {
                        *v *= momentum;
                        *v += &d;
                        if nesterov {
                            d.scaled_add(momentum, v);
                        } else {
                            d.assign(v);
                        }
                    }
                    updated.push(p - &(d * lr));
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter()
                    .zip(grads)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    *m *= beta1;
                    m.scaled_add(1.0 - beta1, g);
                    *v *= beta2;
                    v.scaled_add(1.0 - beta2, &g.mapv(|x| x * x));
                    let mut new = p.clone();
                    ndarray::Zip::from(&mut new).and(&*m).and(&*v).for_each(|w, &mi, &vi| {
                        *w -= lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                    });
                    updated.push(new);
                }
            }
        }
        if updated.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("optimizer step produced non-finite parameters".into()));
        }
        for (p, u) in params.iter_mut().zip(updated) {
            *p = u;
        }
        Ok(())
    }
}

/// Learning-rate schedules indexed by epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { lr: f64 },
    StepDecay { lr0: f64, gamma: f64, every: usize },
    Cosine { lr0: f64, total_epochs: usize },
}

impl LrSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::StepDecay { lr0, gamma, every } => {
                lr0 * gamma.powi((epoch / every.max(1)) as i32)
            }
            LrSchedule::Cosine { lr0, total_epochs } => {
                let frac = epoch as f64 / total_epochs.max(1) as f64;
                0.5 * lr0 * (1.0 + (std::f64::consts::PI * frac.min(1.0)).cos())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn step_decay_boundary() {
        let s = LrSchedule::StepDecay {
            lr0: 0.001,
            gamma: 0.1,
            every: 50,
        };
        assert_eq!(s.lr(49), 0.001);
        assert!((s.lr(50) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn cosine_endpoints() {
        let s = LrSchedule::Cosine {
            lr0: 0.025,
            total_epochs: 120,
        };
        assert_eq!(s.lr(0), 0.025);
        assert!(s.lr(120).abs() < 1e-15);
        assert!((s.lr(60) - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn sgd_with_zero_lr_is_a_no_op() {
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.0, 0.9)).unwrap();
        let mut p = vec![array![[1.0, -2.0]]];
        opt.step(&mut p, &[array![[5.0, 7.0]]]).unwrap();
        assert_eq!(p[0], array![[1.0, -2.0]]);
    }

    #[test]
    fn adam_with_zero_grads_keeps_params() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1)).unwrap();
        let mut p = vec![array![[1.0, -2.0]]];
        opt.step(&mut p, &[Matrix::zeros((1, 2))]).unwrap();
        assert_eq!(p[0], array![[1.0, -2.0]]);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn plain_sgd_update() {
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.5, 0.0)).unwrap();
        let mut p = vec![array![[1.0]]];
        opt.step(&mut p, &[array![[2.0]]]).unwrap();
        assert_eq!(p[0], array![[0.0]]);
    }

    #[test]
    fn non_finite_gradient_is_refused() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1)).unwrap();
        let mut p = vec![array![[1.0]]];
        assert!(opt.step(&mut p, &[array![[f64::NAN]]]).is_err());
        assert_eq!(p[0], array![[1.0]]);
        let mut sgd = Optimizer::new(OptimizerConfig::sgd(1e308, 0.0)).unwrap();
        assert!(sgd.step(&mut p, &[array![[1e308]]]).is_err());
    }
}
