//! The identity feature map. Useful when the raw inputs already live in the
//! kernel's feature space; training algorithms then reduce to plain
//! kernelized Pegasos because there are no parameters to update.

use rand_chacha::ChaCha8Rng;

use super::{FeatureModel, Mode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PassthroughNet {
    dim: usize,
    mode: Mode,
}

impl PassthroughNet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("feature dimension must be positive"));
        }
        Ok(PassthroughNet {
            dim,
            mode: Mode::Train,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl FeatureModel for PassthroughNet {
    type Cache = ();

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn mode(&self) -> Mode {
        self.mode
    }

    fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn params(&self) -> &[f64] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }

    fn forward(&self, input: &[f64], _rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, ())> {
        if input.len() != self.dim {
            return Err(Error::input(format!(
                "expected input dimension {}, got {}",
                self.dim,
                input.len()
            )));
        }
        Ok((input.to_vec(), ()))
    }

    fn backward(&self, _cache: &(), upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.dim {
            return Err(Error::input(format!(
                "upstream gradient has dimension {}, expected {}",
                upstream.len(),
                self.dim
            )));
        }
        Ok(Vec::new())
    }
}
