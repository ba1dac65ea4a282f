//! The four joint training algorithms, the standalone kernelized Pegasos
//! fitter, and classifier construction from their outputs.

mod algorithms;
mod classifier;

pub use algorithms::{
    algorithm1, algorithm1_with_sampler, algorithm2, algorithm2_with_sampler, algorithm3,
    algorithm3_with_sampler, algorithm4, algorithm4_with_sampler, pegasos_fit,
    pegasos_fit_with_sampler, squared_loss, PegasosOutput,
};
pub use classifier::{primal_objective, Classifier, Evaluation};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, SpsaConfig};
use crate::neural::{OptimizerConfig, Tensor};

// Independent random substreams of a run seed, so index draws are not
// disturbed by dropout, perturbation, or shot sampling.
pub(crate) const STREAM_INDEX: u64 = 1;
pub(crate) const STREAM_SPSA: u64 = 2;
pub(crate) const STREAM_DROPOUT: u64 = 3;
pub(crate) const STREAM_KERNEL: u64 = 4;
pub(crate) const STREAM_EVAL: u64 = 5;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One labeled sample: an input tensor and a class in {-1, +1}.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Tensor,
    pub label: i8,
}

/// A labeled dataset. Construction checks label values and consistent input
/// shapes; training additionally requires both classes to be present.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples.first().map(|s| s.input.len()).unwrap_or(0);
        for (i, s) in samples.iter().enumerate() {
            if s.label != 1 && s.label != -1 {
                return Err(Error::input(format!(
                    "sample {i} has label {}, expected -1 or +1",
                    s.label
                )));
            }
            if s.input.len() != dim {
                return Err(Error::input(format!(
                    "sample {i} has {} values but sample 0 has {dim}",
                    s.input.len()
                )));
            }
        }
        Ok(Dataset { samples })
    }

    /// Requires at least two samples and at least one point in each class.
    pub fn validate_for_training(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::input(
                "training requires at least two samples".to_string(),
            ));
        }
        let pos = self.samples.iter().any(|s| s.label == 1);
        let neg = self.samples.iter().any(|s| s.label == -1);
        if !pos || !neg {
            return Err(Error::input(
                "training requires both classes to be present".to_string(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.samples[i].input.values()
    }

    pub fn label(&self, i: usize) -> i8 {
        self.samples[i].label
    }

    pub fn input_dim(&self) -> usize {
        self.samples.first().map(|s| s.input.len()).unwrap_or(0)
    }
}

/// Hyperparameters shared by the training algorithms.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Number of steps T (part 1 steps for algorithm 4, where 0 skips the
    /// alignment phase entirely).
    pub steps: usize,
    pub lambda: f64,
    /// Weight of the coefficient-alignment term in algorithm 3.
    pub mu: f64,
    /// Batch size k for algorithms 3 and 4.
    pub batch_size: usize,
    pub spsa: SpsaConfig,
    pub kernel: KernelConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl TrainConfig {
    fn validate_common(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("lambda must be positive"));
        }
        if !self.mu.is_finite() {
            return Err(Error::config("mu must be finite"));
        }
        self.spsa.validate()?;
        self.kernel.validate()?;
        self.optimizer.validate()
    }

    /// For algorithms 1-3, whose loops start at t = 2.
    pub(crate) fn validate_sequential(&self) -> Result<()> {
        self.validate_common()?;
        if self.steps < 2 {
            return Err(Error::config("steps must be at least 2"));
        }
        Ok(())
    }

    pub(crate) fn validate_batched(&self, m: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.batch_size > m {
            return Err(Error::config(format!(
                "batch size {} exceeds the dataset size {m}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Hyperparameters of the standalone SVM fit (algorithm 4 part 2).
#[derive(Debug, Clone, Copy)]
pub struct SvmFitConfig {
    pub lambda: f64,
    pub steps: usize,
}

impl SvmFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("svm lambda must be positive"));
        }
        if self.steps < 2 {
            return Err(Error::config("svm steps must be at least 2"));
        }
        Ok(())
    }
}

/// Per-step metric record emitted by every training loop.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// Sampled index (algorithms 1-2, Pegasos) or batch (algorithms 3-4).
    pub indices: Vec<usize>,
    /// Margin values y * g for each sampled index, when margins are checked.
    pub margins: Vec<f64>,
    /// Whether the corresponding coefficient was increased.
    pub alpha_updates: Vec<bool>,
    /// Objective components (alignment terms, losses, update objective).
    pub objective: BTreeMap<String, f64>,
    /// Cumulative kernel pair evaluations after this step.
    pub kernel_evals: u64,
}

/// Receives step records as they are produced.
pub trait MetricsSink {
    fn record(&mut self, record: &StepRecord);
}

/// Discards all records.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _record: &StepRecord) {}
}

/// Source of sample indices and batches. The default implementation draws
/// uniformly (with replacement across steps, without replacement within a
/// batch) from a dedicated seeded stream.
pub trait IndexSampler {
    fn draw_index(&mut self, m: usize) -> usize;
    fn draw_batch(&mut self, m: usize, k: usize) -> Vec<usize>;
}

pub struct SeededSampler {
    rng: ChaCha8Rng,
}

impl SeededSampler {
    pub fn new(seed: u64) -> Self {
        SeededSampler {
            rng: stream_rng(seed, STREAM_INDEX),
        }
    }
}

impl IndexSampler for SeededSampler {
    fn draw_index(&mut self, m: usize) -> usize {
        self.rng.random_range(0..m)
    }

    fn draw_batch(&mut self, m: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.rng, m, k).into_vec()
    }
}

/// Everything an algorithm produces: coefficients, the labels they weight,
/// the stored feature evaluations, the final network, and the step log.
///
/// For algorithm 1 the vectors are indexed by step; for algorithms 2-4 they
/// are indexed by dataset entry. `t_eff` and `lambda` fix the decision-value
/// scale `1 / (lambda * t_eff)`.
#[derive(Debug)]
pub struct TrainOutput<M> {
    pub alpha: Vec<f64>,
    pub labels: Vec<i8>,
    pub features: Vec<Vec<f64>>,
    pub net: M,
    pub lambda: f64,
    pub t_eff: usize,
    pub step_log: Vec<StepRecord>,
    pub kernel_evals: u64,
}
