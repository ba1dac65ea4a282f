//! The convolutional feature network for 28x28 grayscale images: a 10x10
//! convolution with 4 output channels, channel-wise dropout, 2x2 max
//! pooling, ReLU, a dense layer down to 4 features, and the bounded output
//! head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::head::{head_backward, head_forward, HeadCache};
use super::{uniform_fan_in, FeatureModel, Mode};
use crate::error::{Error, Result};

pub(crate) const INPUT_SIDE: usize = 28;
pub(crate) const KERNEL_SIDE: usize = 10;
pub(crate) const CHANNELS: usize = 4;
pub(crate) const CONV_SIDE: usize = INPUT_SIDE - KERNEL_SIDE + 1; // 19
pub(crate) const POOL_SIDE: usize = CONV_SIDE / 2; // 9, last row/col dropped
pub(crate) const DENSE_IN: usize = CHANNELS * POOL_SIDE * POOL_SIDE; // 324
pub(crate) const FEATURES: usize = 4;

const CONV_KERNEL_LEN: usize = CHANNELS * KERNEL_SIDE * KERNEL_SIDE;
const DENSE_W_LEN: usize = FEATURES * DENSE_IN;
const NUM_PARAMS: usize = CONV_KERNEL_LEN + CHANNELS + DENSE_W_LEN + FEATURES;

// Flat parameter layout.
const CONV_KERNEL: usize = 0;
const CONV_BIAS: usize = CONV_KERNEL + CONV_KERNEL_LEN;
const DENSE_W: usize = CONV_BIAS + CHANNELS;
const DENSE_B: usize = DENSE_W + DENSE_W_LEN;

/// Scalar hyperparameters of the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvNetConfig {
    pub dropout_p: f64,
    pub eps_norm: f64,
    pub pre_tanh_scale: f64,
    pub post_tanh_scale: f64,
}

impl Default for ConvNetConfig {
    fn default() -> Self {
        ConvNetConfig {
            dropout_p: 0.2,
            eps_norm: 1e-8,
            pre_tanh_scale: 2.0,
            post_tanh_scale: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl ConvNetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout probability must lie in [0, 1)"));
        }
        if !(self.eps_norm > 0.0) {
            return Err(Error::config("normalization epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConvNet {
    params: Vec<f64>,
    config: ConvNetConfig,
    mode: Mode,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    image: Vec<f64>,
    /// Per-channel dropout factors: 0 or 1/(1-p) in train mode, 1 in eval.
    mask: [f64; CHANNELS],
    /// Pre-ReLU pooled activations.
    pool_pre: Vec<f64>,
    /// Flat index into the 19x19 grid of each pooling winner.
    argmax: Vec<usize>,
    /// Post-ReLU dense input.
    flat: Vec<f64>,
    head: HeadCache,
}

impl ConvNet {
    /// Deterministic uniform fan-in initialization: weights drawn from
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    pub fn init(seed: u64, config: ConvNetConfig) -> Result<Self> {
        config.validate()?;
        // The shape chain 28x28 -> 4x19x19 -> 4x9x9 -> 324 -> 4 is fixed by
        // the architecture; make its arithmetic explicit.
        assert_eq!(CONV_SIDE, 19);
        assert_eq!(POOL_SIDE, 9);
        assert_eq!(DENSE_IN, 324);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; NUM_PARAMS];
        let conv_bound = 1.0 / ((KERNEL_SIDE * KERNEL_SIDE) as f64).sqrt();
        params[CONV_KERNEL..CONV_KERNEL + CONV_KERNEL_LEN]
            .copy_from_slice(&uniform_fan_in(conv_bound, CONV_KERNEL_LEN, &mut rng));
        let dense_bound = 1.0 / (DENSE_IN as f64).sqrt();
        params[DENSE_W..DENSE_W + DENSE_W_LEN]
            .copy_from_slice(&uniform_fan_in(dense_bound, DENSE_W_LEN, &mut rng));
        Ok(ConvNet {
            params,
            config,
            mode: Mode::Train,
        })
    }

    pub fn from_params(params: Vec<f64>, config: ConvNetConfig) -> Result<Self> {
        config.validate()?;
        if params.len() != NUM_PARAMS {
            return Err(Error::input(format!(
                "expected {NUM_PARAMS} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::input("parameters contain non-finite values".to_string()));
        }
        Ok(ConvNet {
            params,
            config,
            mode: Mode::Train,
        })
    }

    pub fn config(&self) -> &ConvNetConfig {
        &self.config
    }

    fn kernel(&self) -> &[f64] {
        &self.params[CONV_KERNEL..CONV_KERNEL + CONV_KERNEL_LEN]
    }

    fn conv_bias(&self) -> &[f64] {
        &self.params[CONV_BIAS..CONV_BIAS + CHANNELS]
    }

    fn dense_w(&self) -> &[f64] {
        &self.params[DENSE_W..DENSE_W + DENSE_W_LEN]
    }

    fn dense_b(&self) -> &[f64] {
        &self.params[DENSE_B..DENSE_B + FEATURES]
    }
}

impl FeatureModel for ConvNet {
    type Cache = ConvCache;

    fn input_dim(&self) -> usize {
        INPUT_SIDE * INPUT_SIDE
    }

    fn output_dim(&self) -> usize {
        FEATURES
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

    fn forward(&self, input: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, ConvCache)> {
        if input.len() != INPUT_SIDE * INPUT_SIDE {
            return Err(Error::input(format!(
                "expected a {INPUT_SIDE}x{INPUT_SIDE} image ({} values), got {}",
                INPUT_SIDE * INPUT_SIDE,
                input.len()
            )));
        }

        // Valid convolution, stride 1.
        let mut conv = vec![0.0; CHANNELS * CONV_SIDE * CONV_SIDE];
        for c in 0..CHANNELS {
            let kbase = c * KERNEL_SIDE * KERNEL_SIDE;
            let bias = self.conv_bias()[c];
            for i in 0..CONV_SIDE {
                for j in 0..CONV_SIDE {
                    let mut acc = bias;
                    for di in 0..KERNEL_SIDE {
                        let row = &input[(i + di) * INPUT_SIDE + j..];
                        let krow = &self.kernel()[kbase + di * KERNEL_SIDE..];
                        for dj in 0..KERNEL_SIDE {
                            acc += krow[dj] * row[dj];
                        }
                    }
                    conv[(c * CONV_SIDE + i) * CONV_SIDE + j] = acc;
                }
            }
        }

        // Channel-wise dropout with inverted scaling.
        let mut mask = [1.0; CHANNELS];
        if self.mode == Mode::Train && self.config.dropout_p > 0.0 {
            let keep = 1.0 - self.config.dropout_p;
            for m in &mut mask {
                *m = if rng.random::<f64>() < self.config.dropout_p {
                    0.0
                } else {
                    1.0 / keep
                };
            }
        }

        // 2x2 max pooling (stride 2, last row/col dropped), then ReLU.
        let mut pool_pre = vec![0.0; DENSE_IN];
        let mut argmax = vec![0usize; DENSE_IN];
        let mut flat = vec![0.0; DENSE_IN];
        for c in 0..CHANNELS {
            let m = mask[c];
            for pi in 0..POOL_SIDE {
                for pj in 0..POOL_SIDE {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for wi in 0..2 {
                        for wj in 0..2 {
                            let i = pi * 2 + wi;
                            let j = pj * 2 + wj;
                            let idx = (c * CONV_SIDE + i) * CONV_SIDE + j;
                            let v = conv[idx] * m;
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    let out_idx = (c * POOL_SIDE + pi) * POOL_SIDE + pj;
                    pool_pre[out_idx] = best;
                    argmax[out_idx] = best_idx;
                    flat[out_idx] = best.max(0.0);
                }
            }
        }

        // Dense layer into feature space.
        let mut u = vec![0.0; FEATURES];
        for o in 0..FEATURES {
            let row = &self.dense_w()[o * DENSE_IN..(o + 1) * DENSE_IN];
            let mut acc = self.dense_b()[o];
            for (w, x) in row.iter().zip(&flat) {
                acc += w * x;
            }
            u[o] = acc;
        }

        let cfg = &self.config;
        let (out, head) = head_forward(u, cfg.eps_norm, cfg.pre_tanh_scale, cfg.post_tanh_scale);
        Ok((
            out,
            ConvCache {
                image: input.to_vec(),
                mask,
                pool_pre,
                argmax,
                flat,
                head,
            },
        ))
    }

    fn backward(&self, cache: &ConvCache, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != FEATURES {
            return Err(Error::input(format!(
                "upstream gradient has dimension {}, expected {FEATURES}",
                upstream.len()
            )));
        }
        let cfg = &self.config;
        let d_u = head_backward(
            &cache.head,
            upstream,
            cfg.eps_norm,
            cfg.pre_tanh_scale,
            cfg.post_tanh_scale,
        );

        let mut grads = vec![0.0; NUM_PARAMS];

        // Dense layer.
        let mut d_flat = vec![0.0; DENSE_IN];
        for o in 0..FEATURES {
            let g = d_u[o];
            grads[DENSE_B + o] = g;
            let wrow = &self.dense_w()[o * DENSE_IN..(o + 1) * DENSE_IN];
            let grow = &mut grads[DENSE_W + o * DENSE_IN..DENSE_W + (o + 1) * DENSE_IN];
            for i in 0..DENSE_IN {
                grow[i] = g * cache.flat[i];
                d_flat[i] += g * wrow[i];
            }
        }

        // ReLU, pooling routing, dropout scaling, then the convolution.
        for c in 0..CHANNELS {
            let m = cache.mask[c];
            if m == 0.0 {
                continue;
            }
            let kgrad_base = c * KERNEL_SIDE * KERNEL_SIDE;
            for pi in 0..POOL_SIDE {
                for pj in 0..POOL_SIDE {
                    let out_idx = (c * POOL_SIDE + pi) * POOL_SIDE + pj;
                    if cache.pool_pre[out_idx] <= 0.0 {
                        continue;
                    }
                    let g = d_flat[out_idx] * m;
                    if g == 0.0 {
                        continue;
                    }
                    let win = cache.argmax[out_idx];
                    let i = (win / CONV_SIDE) % CONV_SIDE;
                    let j = win % CONV_SIDE;
                    grads[CONV_BIAS + c] += g;
                    for di in 0..KERNEL_SIDE {
                        let irow = &cache.image[(i + di) * INPUT_SIDE + j..];
                        let grow = &mut grads[CONV_KERNEL + kgrad_base + di * KERNEL_SIDE..];
                        for dj in 0..KERNEL_SIDE {
                            grow[dj] += g * irow[dj];
                        }
                    }
                }
            }
        }

        Ok(grads)
    }
}
