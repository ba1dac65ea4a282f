//! The frozen decision function produced by a training run:
//! `g(x) = 1/(lambda * T) * sum_s alpha_s y_s K(z_s, F(x))`, thresholded at
//! zero with ties mapping to +1.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Dataset, TrainOutput};
use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, KernelEvaluator, PreparedPoint};
use crate::neural::{FeatureModel, Mode};

#[derive(Debug)]
pub struct Classifier<M> {
    alpha: Vec<f64>,
    labels: Vec<i8>,
    features: Vec<Vec<f64>>,
    net: M,
    lambda: f64,
    t_eff: usize,
    kernel: KernelConfig,
    /// Prepared support points with their signed weights alpha_s * y_s;
    /// zero-coefficient entries are dropped up front.
    support: Vec<(f64, PreparedPoint)>,
}

/// Accuracy and confusion counts over a dataset.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    pub total: usize,
    pub kernel_evals: u64,
}

impl<M: FeatureModel> Classifier<M> {
    pub fn new(
        alpha: Vec<f64>,
        labels: Vec<i8>,
        features: Vec<Vec<f64>>,
        mut net: M,
        lambda: f64,
        t_eff: usize,
        kernel: KernelConfig,
    ) -> Result<Self> {
        if alpha.len() != labels.len() || alpha.len() != features.len() {
            return Err(Error::input(format!(
                "inconsistent classifier data: {} coefficients, {} labels, {} features",
                alpha.len(),
                labels.len(),
                features.len()
            )));
        }
        if !(lambda > 0.0) || t_eff == 0 {
            return Err(Error::config(
                "classifier needs lambda > 0 and a positive step count".to_string(),
            ));
        }
        kernel.validate()?;
        net.set_mode(Mode::Eval);
        let evaluator = KernelEvaluator::new(&kernel);
        let mut support = Vec::new();
        for ((&a, &y), z) in alpha.iter().zip(&labels).zip(&features) {
            if a != 0.0 {
                support.push((a * f64::from(y), evaluator.prepare(z)?));
            }
        }
        Ok(Classifier {
            alpha,
            labels,
            features,
            net,
            lambda,
            t_eff,
            kernel,
            support,
        })
    }

    pub fn from_output(output: TrainOutput<M>, kernel: KernelConfig) -> Result<Self> {
        Classifier::new(
            output.alpha,
            output.labels,
            output.features,
            output.net,
            output.lambda,
            output.t_eff,
            kernel,
        )
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn net(&self) -> &M {
        &self.net
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn t_eff(&self) -> usize {
        self.t_eff
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn support_count(&self) -> usize {
        self.support.len()
    }

    /// g(x). Deterministic whenever the kernel runs in exact mode.
    pub fn decision_value(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        let evaluator = KernelEvaluator::new(&self.kernel);
        self.decision_with(&evaluator, x, rng)
    }

    fn decision_with(
        &self,
        evaluator: &KernelEvaluator,
        x: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let (z, _) = self.net.forward(x, rng)?;
        let px = evaluator.prepare(&z)?;
        let mut acc = 0.0;
        for (coef, ps) in &self.support {
            acc += coef * evaluator.eval_prepared(ps, &px, rng)?;
        }
        Ok(acc / (self.lambda * self.t_eff as f64))
    }

    /// Sign of g(x), with g = 0 mapping to +1.
    pub fn predict(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<i8> {
        Ok(if self.decision_value(x, rng)? >= 0.0 { 1 } else { -1 })
    }
}

impl<M: FeatureModel + Sync> Classifier<M> {
    /// Accuracy and confusion counts. Samples are scored in parallel with
    /// per-sample random substreams, so the result does not depend on
    /// scheduling.
    pub fn evaluate(&self, data: &Dataset, seed: u64) -> Result<Evaluation> {
        if data.is_empty() {
            return Err(Error::input("cannot evaluate on an empty dataset".to_string()));
        }
        let evaluator = KernelEvaluator::new(&self.kernel);
        let outcomes: Vec<Result<(i8, i8)>> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let mut rng = super::stream_rng(seed, super::STREAM_EVAL);
                rng.set_stream((1u64 << 32) | i as u64);
                let g = self.decision_with(&evaluator, data.input(i), &mut rng)?;
                let predicted = if g >= 0.0 { 1 } else { -1 };
                Ok((predicted, data.label(i)))
            })
            .collect();
        let mut tp = 0;
        let mut fp = 0;
        let mut tn = 0;
        let mut fals_n = 0;
        for outcome in outcomes {
            match outcome? {
                (1, 1) => tp += 1,
                (1, -1) => fp += 1,
                (-1, -1) => tn += 1,
                (-1, 1) => fals_n += 1,
                _ => unreachable!("predictions are signs"),
            }
        }
        Ok(Evaluation {
            accuracy: (tp + tn) as f64 / data.len() as f64,
            true_positive: tp,
            false_positive: fp,
            true_negative: tn,
            false_negative: fals_n,
            total: data.len(),
            kernel_evals: evaluator.count(),
        })
    }
}

/// The primal objective `lambda/2 * ||f||^2 + 1/m * sum_i hinge(y_i f(z_i))`
/// of the kernel expansion `f = decision_scale * sum_j alpha_j y_j K(z_j, .)`
/// evaluated on its own training points via the precomputed Gram matrix.
pub fn primal_objective(
    gram: &DMatrix<f64>,
    labels: &[i8],
    alpha: &[f64],
    lambda: f64,
    decision_scale: f64,
) -> Result<f64> {
    let m = labels.len();
    if gram.nrows() != m || gram.ncols() != m || alpha.len() != m {
        return Err(Error::input(
            "gram, labels and alpha must agree in size".to_string(),
        ));
    }
    let mut norm2 = 0.0;
    for i in 0..m {
        for j in 0..m {
            norm2 += alpha[i]
                * alpha[j]
                * f64::from(labels[i])
                * f64::from(labels[j])
                * gram[(i, j)];
        }
    }
    norm2 *= decision_scale * decision_scale;
    let mut hinge = 0.0;
    for i in 0..m {
        let mut f_i = 0.0;
        for j in 0..m {
            f_i += alpha[j] * f64::from(labels[j]) * gram[(i, j)];
        }
        f_i *= decision_scale;
        hinge += (1.0 - f64::from(labels[i]) * f_i).max(0.0);
    }
    Ok(lambda / 2.0 * norm2 + hinge / m as f64)
}
