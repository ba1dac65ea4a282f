//! Trainable feature networks mapping raw inputs into the kernel's feature
//! space, with hand-differentiated backward passes so gradient estimates
//! from the kernel side can be chained through to the parameters.

mod conv;
mod dense;
mod head;
mod optimizer;
mod passthrough;
mod tensor;

pub use conv::{ConvNet, ConvNetConfig};
pub use dense::DenseNet;
pub use optimizer::{apply_update, OptimizerConfig, OptimizerState};
pub use passthrough::PassthroughNet;
pub use tensor::Tensor;

use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Whether stochastic layers (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A differentiable feature map with a flat parameter vector.
///
/// `forward` returns the features plus a cache tied to that single call;
/// `backward` turns an upstream gradient with respect to the features into a
/// gradient over the flat parameters. A cache should be consumed by at most
/// one backward call.
pub trait FeatureModel {
    type Cache;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn mode(&self) -> Mode;
    fn set_mode(&mut self, mode: Mode);
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn forward(&self, input: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Self::Cache)>;
    fn backward(&self, cache: &Self::Cache, upstream: &[f64]) -> Result<Vec<f64>>;
}

pub(crate) fn uniform_fan_in(bound: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::Rng;
    (0..count).map(|_| rng.random_range(-bound..bound)).collect()
}
