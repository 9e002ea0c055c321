use serde::{Deserialize, Serialize};

use super::mlp::{Gradient, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, flattened in parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(net: &ParamSet, config: AdamConfig) -> Self {
        let n = net.num_params();
        AdamState {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Fresh moments, same hyperparameters.
    pub fn reset(&mut self) {
        self.step = 0;
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
    }

    /// One bias-corrected Adam descent step. A non-finite gradient leaves
    /// parameters and moments untouched.
    pub fn apply(&mut self, net: &mut ParamSet, grad: &Gradient) -> Result<()> {
        if !grad.matches(net) || self.m.len() != net.num_params() {
            return Err(Error::Contract(
                "optimizer state does not match network".into(),
            ));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in net
            .values_mut()
            .zip(grad.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::mlp::{Activation, Layer};

    fn scalar_net(w: f64) -> ParamSet {
        ParamSet {
            layers: vec![Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![w],
                bias: vec![0.0],
                activation: Activation::Linear,
            }],
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(1.0);
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(1e-3));
        let grad = Gradient {
            weights: vec![vec![0.37]],
            bias: vec![vec![-2.0]],
        };
        adam.apply(&mut net, &grad).unwrap();
        let expect_w = 1.0 - 1e-3 * 0.37 / (0.37 + 1e-8);
        let expect_b = 1e-3 * 2.0 / (2.0 + 1e-8);
        assert!((net.layers[0].weights[0] - expect_w).abs() < 1e-15);
        assert!((net.layers[0].bias[0] - expect_b).abs() < 1e-15);
    }

    #[test]
    fn first_step_pairs_each_parameter_with_its_own_gradient() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut net = ParamSet::new(&[3, 4, 2], Activation::Linear, &mut rng).unwrap();
        let before = net.clone();
        let mut grad = Gradient::zeros_like(&net);
        for (i, w) in grad.weights.iter_mut().enumerate() {
            w.iter_mut()
                .enumerate()
                .for_each(|(j, g)| *g = (i * 100 + j + 1) as f64);
        }
        for (i, b) in grad.bias.iter_mut().enumerate() {
            b.iter_mut()
                .enumerate()
                .for_each(|(j, g)| *g = -((i * 100 + j + 1) as f64));
        }
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(0.01));
        adam.apply(&mut net, &grad).unwrap();
        for (l, (after, prev)) in net.layers.iter().zip(&before.layers).enumerate() {
            for (j, (a, p)) in after.weights.iter().zip(&prev.weights).enumerate() {
                let g = grad.weights[l][j];
                assert!((a - (p - 0.01 * g / (g.abs() + 1e-8))).abs() < 1e-15);
            }
            for (j, (a, p)) in after.bias.iter().zip(&prev.bias).enumerate() {
                let g = grad.bias[l][j];
                assert!((a - (p - 0.01 * g / (g.abs() + 1e-8))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut net = scalar_net(1.0);
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(1e-3));
        let before = (net.clone(), adam.clone());
        let grad = Gradient {
            weights: vec![vec![f64::NAN]],
            bias: vec![vec![0.0]],
        };
        assert!(matches!(
            adam.apply(&mut net, &grad),
            Err(Error::NonFinite(_))
        ));
        assert_eq!((net, adam), before);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut net = scalar_net(3.0);
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(0.05));
        for _ in 0..2000 {
            let w = net.layers[0].weights[0];
            let b = net.layers[0].bias[0];
            let grad = Gradient {
                weights: vec![vec![2.0 * (w - 0.5)]],
                bias: vec![vec![2.0 * (b + 1.0)]],
            };
            adam.apply(&mut net, &grad).unwrap();
        }
        assert!((net.layers[0].weights[0] - 0.5).abs() < 1e-3);
        assert!((net.layers[0].bias[0] + 1.0).abs() < 1e-3);
    }
}
