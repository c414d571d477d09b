//! First-order optimizers over a flat list of parameter tensors.

use serde::{Deserialize, Serialize};

use crate::error::AutodiffError;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

/// Moments live in `f64` regardless of the parameter type.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step_count: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new<T: Scalar>(config: OptimizerConfig, params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        let (first, second) = match config {
            OptimizerConfig::Sgd { .. } => (Vec::new(), Vec::new()),
            OptimizerConfig::Adam { .. } => (zeros(), zeros()),
        };
        Self {
            config,
            step_count: 0,
            first,
            second,
        }
    }

    /// One update. A `None` gradient leaves that parameter untouched (its
    /// moments still decay under Adam).
    pub fn step<T: Scalar>(&mut self, params: &mut [Tensor<T>], grads: &[Option<&Tensor<T>>]) -> Result<(), AutodiffError> {
        if grads.len() != params.len() {
            return Err(AutodiffError::OptimizerShape { index: params.len().min(grads.len()) });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if g.is_some_and(|g| g.shape() != p.shape()) {
                return Err(AutodiffError::OptimizerShape { index: i });
            }
        }
        self.step_count += 1;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    let Some(g) = g else { continue };
                    for (v, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *v = T::of_f64(v.as_f64() - lr * d.as_f64());
                    }
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                if self.first.len() != params.len() {
                    return Err(AutodiffError::OptimizerShape { index: self.first.len() });
                }
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m, s) = (&mut self.first[i], &mut self.second[i]);
                    if m.len() != p.len() {
                        return Err(AutodiffError::OptimizerShape { index: i });
                    }
                    let Some(g) = g else {
                        m.iter_mut().for_each(|v| *v *= beta1);
                        s.iter_mut().for_each(|v| *v *= beta2);
                        continue;
                    };
                    for (((v, &d), m), s) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(s.iter_mut()) {
                        let d = d.as_f64();
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *s = beta2 * *s + (1.0 - beta2) * d * d;
                        let upd = lr * (*m / c1) / ((*s / c2).sqrt() + eps);
                        *v = T::of_f64(v.as_f64() - upd);
                    }
                }
            }
        }
        Ok(())
    }
}
