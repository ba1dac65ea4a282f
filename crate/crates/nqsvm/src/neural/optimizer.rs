//! Gradient descent with momentum and L2 weight decay:
//! `v <- momentum * v + g + weight_decay * theta`, then
//! `theta <- theta - learning_rate * v`.

use serde::{Deserialize, Serialize};

use super::FeatureModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::config("learning rate must be finite and nonnegative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::config("weight decay must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Velocity buffers mirroring the flat parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    velocity: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            velocity: vec![0.0; num_params],
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }
}

/// One optimizer step over the model's parameters.
pub fn apply_update<M: FeatureModel>(
    net: &mut M,
    state: &mut OptimizerState,
    gradients: &[f64],
) -> Result<()> {
    if gradients.len() != net.num_params() || state.velocity.len() != net.num_params() {
        return Err(Error::input(format!(
            "gradient/velocity lengths ({}, {}) do not match the {} parameters",
            gradients.len(),
            state.velocity.len(),
            net.num_params()
        )));
    }
    if gradients.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("non-finite gradient".to_string()));
    }
    let cfg = state.config;
    let params = net.params_mut();
    for i in 0..params.len() {
        state.velocity[i] =
            cfg.momentum * state.velocity[i] + gradients[i] + cfg.weight_decay * params[i];
        params[i] -= cfg.learning_rate * state.velocity[i];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::DenseNet;

    fn small_net() -> DenseNet {
        DenseNet::init(2, 2, 77).unwrap()
    }

    #[test]
    fn plain_sgd_step() {
        let mut net = small_net();
        let before = net.params().to_vec();
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        let mut state = OptimizerState::new(cfg, net.num_params()).unwrap();
        let grads: Vec<f64> = (0..net.num_params()).map(|i| i as f64).collect();
        apply_update(&mut net, &mut state, &grads).unwrap();
        for ((p, b), g) in net.params().iter().zip(&before).zip(&grads) {
            assert!((p - (b - 0.1 * g)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op_without_decay() {
        let mut net = small_net();
        let before = net.params().to_vec();
        let mut state =
            OptimizerState::new(OptimizerConfig::default(), net.num_params()).unwrap();
        let grads = vec![0.0; net.num_params()];
        apply_update(&mut net, &mut state, &grads).unwrap();
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        let mut net = small_net();
        let before = net.params().to_vec();
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.5,
        };
        let mut state = OptimizerState::new(cfg, net.num_params()).unwrap();
        let grads = vec![0.0; net.num_params()];
        apply_update(&mut net, &mut state, &grads).unwrap();
        for (p, b) in net.params().iter().zip(&before) {
            assert!((p - b * (1.0 - 0.1 * 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn momentum_accumulates() {
        let mut net = small_net();
        let before = net.params().to_vec();
        let cfg = OptimizerConfig {
            learning_rate: 1.0,
            momentum: 0.5,
            weight_decay: 0.0,
        };
        let mut state = OptimizerState::new(cfg, net.num_params()).unwrap();
        let grads = vec![1.0; net.num_params()];
        apply_update(&mut net, &mut state, &grads).unwrap();
        apply_update(&mut net, &mut state, &grads).unwrap();
        // Steps of 1 then 1.5.
        for (p, b) in net.params().iter().zip(&before) {
            assert!((p - (b - 2.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut net = small_net();
        let mut state =
            OptimizerState::new(OptimizerConfig::default(), net.num_params()).unwrap();
        let mut grads = vec![0.0; net.num_params()];
        grads[0] = f64::NAN;
        assert!(apply_update(&mut net, &mut state, &grads).is_err());
    }
}
