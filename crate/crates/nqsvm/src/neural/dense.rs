//! A single dense layer with the bounded output head. Small enough for toy
//! problems where the convolutional network would be overkill, while still
//! exercising the full estimate-then-backpropagate training path.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::head::{head_backward, head_forward, HeadCache};
use super::{uniform_fan_in, FeatureModel, Mode};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseNet {
    params: Vec<f64>, // [weights out*in | biases out]
    in_dim: usize,
    out_dim: usize,
    eps_norm: f64,
    pre_tanh_scale: f64,
    post_tanh_scale: f64,
    mode: Mode,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
    head: HeadCache,
}

impl DenseNet {
    pub fn init(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config("dense dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut params = uniform_fan_in(bound, out_dim * in_dim, &mut rng);
        params.extend(std::iter::repeat(0.0).take(out_dim));
        Ok(DenseNet {
            params,
            in_dim,
            out_dim,
            eps_norm: 1e-8,
            pre_tanh_scale: 2.0,
            post_tanh_scale: std::f64::consts::FRAC_PI_4,
            mode: Mode::Train,
        })
    }

    pub fn from_params(in_dim: usize, out_dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != out_dim * in_dim + out_dim {
            return Err(Error::input(format!(
                "expected {} parameters for a {in_dim}->{out_dim} dense net, got {}",
                out_dim * in_dim + out_dim,
                params.len()
            )));
        }
        let mut net = DenseNet::init(in_dim, out_dim, 0)?;
        net.params = params;
        Ok(net)
    }

    fn weights(&self) -> &[f64] {
        &self.params[..self.out_dim * self.in_dim]
    }

    fn biases(&self) -> &[f64] {
        &self.params[self.out_dim * self.in_dim..]
    }
}

impl FeatureModel for DenseNet {
    type Cache = DenseCache;

    fn input_dim(&self) -> usize {
        self.in_dim
    }

    fn output_dim(&self) -> usize {
        self.out_dim
    }

    fn mode(&self) -> Mode {
        self.mode
    }

    fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, input: &[f64], _rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, DenseCache)> {
        if input.len() != self.in_dim {
            return Err(Error::input(format!(
                "expected input dimension {}, got {}",
                self.in_dim,
                input.len()
            )));
        }
        let mut u = vec![0.0; self.out_dim];
        for o in 0..self.out_dim {
            let row = &self.weights()[o * self.in_dim..(o + 1) * self.in_dim];
            u[o] = self.biases()[o]
                + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
        let (out, head) =
            head_forward(u, self.eps_norm, self.pre_tanh_scale, self.post_tanh_scale);
        Ok((
            out,
            DenseCache {
                input: input.to_vec(),
                head,
            },
        ))
    }

    fn backward(&self, cache: &DenseCache, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.out_dim {
            return Err(Error::input(format!(
                "upstream gradient has dimension {}, expected {}",
                upstream.len(),
                self.out_dim
            )));
        }
        let d_u = head_backward(
            &cache.head,
            upstream,
            self.eps_norm,
            self.pre_tanh_scale,
            self.post_tanh_scale,
        );
        let mut grads = vec![0.0; self.params.len()];
        let wlen = self.out_dim * self.in_dim;
        for o in 0..self.out_dim {
            let g = d_u[o];
            grads[wlen + o] = g;
            let grow = &mut grads[o * self.in_dim..(o + 1) * self.in_dim];
            for (gi, x) in grow.iter_mut().zip(&cache.input) {
                *gi = g * x;
            }
        }
        Ok(grads)
    }
}
