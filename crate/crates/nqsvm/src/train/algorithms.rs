//! The four joint training loops and the standalone kernelized Pegasos
//! fitter.
//!
//! All loops share the same randomness discipline: index draws, SPSA sign
//! draws, dropout masks, and shot sampling each consume an independent
//! substream of the run seed, so freezing one mechanism never perturbs the
//! others.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use super::{
    stream_rng, Dataset, IndexSampler, MetricsSink, SeededSampler, StepRecord, SvmFitConfig,
    TrainConfig, TrainOutput, STREAM_DROPOUT, STREAM_KERNEL, STREAM_SPSA,
};
use crate::error::{Error, Result};
use crate::kernel::{
    alignment, weighted_alignment, KernelConfig, KernelEvaluator, PreparedPoint, SpsaConfig,
};
use crate::neural::{apply_update, FeatureModel, Mode, OptimizerState};

/// The default alignment loss of algorithm 4: L(beta, gamma) = (beta - gamma)^2.
pub fn squared_loss(beta: f64, gamma: f64) -> f64 {
    (beta - gamma) * (beta - gamma)
}

fn check_net<M: FeatureModel>(net: &M, data: &Dataset, kernel: &KernelConfig) -> Result<()> {
    if net.input_dim() != data.input_dim() {
        return Err(Error::config(format!(
            "network expects input dimension {} but the data has {}",
            net.input_dim(),
            data.input_dim()
        )));
    }
    if let Some(dim) = kernel.feature_dim() {
        if net.output_dim() != dim {
            return Err(Error::config(format!(
                "network produces {} features but the kernel expects {dim}",
                net.output_dim()
            )));
        }
    }
    Ok(())
}

/// A stored feature evaluation of one dataset entry under the current
/// parameters, with enough context to evaluate kernels and backpropagate.
struct SupportEntry<C> {
    z: Vec<f64>,
    prepared: PreparedPoint,
    cache: C,
}

/// Forward-evaluates any missing entries, in ascending index order so the
/// dropout stream is consumed deterministically. Entries stay valid until
/// the parameters change.
fn ensure_features<M: FeatureModel>(
    net: &M,
    data: &Dataset,
    evaluator: &KernelEvaluator,
    needed: impl IntoIterator<Item = usize>,
    store: &mut BTreeMap<usize, SupportEntry<M::Cache>>,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut missing: Vec<usize> = needed
        .into_iter()
        .filter(|j| !store.contains_key(j))
        .collect();
    missing.sort_unstable();
    missing.dedup();
    for j in missing {
        let (z, cache) = net.forward(data.input(j), dropout_rng)?;
        let prepared = evaluator.prepare(&z)?;
        store.insert(j, SupportEntry { z, prepared, cache });
    }
    Ok(())
}

/// One SPSA-estimated descent step over the concatenation of the feature
/// vectors in `parts`. The estimated input gradient is split back into
/// per-part slices and chained through each part's backward pass; the summed
/// parameter gradient drives one optimizer update.
fn spsa_update_over_parts<M, F>(
    net: &mut M,
    opt: &mut OptimizerState,
    spsa_cfg: &SpsaConfig,
    parts: &[(&Vec<f64>, &M::Cache)],
    mut objective: F,
    spsa_rng: &mut ChaCha8Rng,
) -> Result<()>
where
    M: FeatureModel,
    F: FnMut(&[&[f64]]) -> Result<f64>,
{
    let n = net.output_dim();
    let mut center = Vec::with_capacity(parts.len() * n);
    for (z, _) in parts {
        center.extend_from_slice(z);
    }
    let h = |flat: &[f64]| -> Result<f64> {
        let slices: Vec<&[f64]> = flat.chunks(n).collect();
        objective(&slices)
    };
    let input_grad = crate::kernel::spsa_gradient(h, &center, spsa_cfg, spsa_rng)?;

    let mut total = vec![0.0; net.num_params()];
    for (p, (_, cache)) in parts.iter().enumerate() {
        let slice = &input_grad[p * n..(p + 1) * n];
        let grads = net.backward(cache, slice)?;
        for (t, g) in total.iter_mut().zip(&grads) {
            *t += g;
        }
    }
    apply_update(net, opt, &total)
}

fn record_step(
    sink: &mut dyn MetricsSink,
    log: &mut Vec<StepRecord>,
    record: StepRecord,
) {
    sink.record(&record);
    log.push(record);
}

/// Algorithm 1: per-step coefficients over the visited samples. Features are
/// evaluated once when a sample is visited and stay frozen in the expansion.
pub fn algorithm1<M: FeatureModel>(
    data: &Dataset,
    cfg: &TrainConfig,
    net: M,
    sink: &mut dyn MetricsSink,
) -> Result<TrainOutput<M>> {
    let mut sampler = SeededSampler::new(cfg.seed);
    algorithm1_with_sampler(data, cfg, net, &mut sampler, sink)
}

pub fn algorithm1_with_sampler<M: FeatureModel>(
    data: &Dataset,
    cfg: &TrainConfig,
    mut net: M,
    sampler: &mut dyn IndexSampler,
    sink: &mut dyn MetricsSink,
) -> Result<TrainOutput<M>> {
    data.validate_for_training()?;
    cfg.validate_sequential()?;
    check_net(&net, data, &cfg.kernel)?;

    net.set_mode(Mode::Train);
    let evaluator = KernelEvaluator::new(&cfg.kernel);
    let mut opt = OptimizerState::new(cfg.optimizer, net.num_params())?;
    let mut spsa_rng = stream_rng(cfg.seed, STREAM_SPSA);
    let mut dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT);
    let mut kernel_rng = stream_rng(cfg.seed, STREAM_KERNEL);

    let m = data.len();
    let t_total = cfg.steps;
    let mut alpha: Vec<f64> = Vec::with_capacity(t_total);
    let mut labels: Vec<i8> = Vec::with_capacity(t_total);
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(t_total);
    let mut prepared: Vec<PreparedPoint> = Vec::with_capacity(t_total);
    let mut supports: Vec<usize> = Vec::new();
    let mut step_log = Vec::new();

    // t = 1: unconditional first coefficient, no parameter step.
    let i1 = sampler.draw_index(m);
    let (z1, _cache) = net.forward(data.input(i1), &mut dropout_rng)?;
    alpha.push(1.0);
    labels.push(data.label(i1));
    prepared.push(evaluator.prepare(&z1)?);
    features.push(z1);
    supports.push(0);
    record_step(
        sink,
        &mut step_log,
        StepRecord {
            step: 1,
            indices: vec![i1],
            margins: Vec::new(),
            alpha_updates: vec![true],
            objective: BTreeMap::new(),
            kernel_evals: evaluator.count(),
        },
    );

    for t in 2..=t_total {
        let it = sampler.draw_index(m);
        let (zt, cache_t) = net.forward(data.input(it), &mut dropout_rng)?;
        let pt = evaluator.prepare(&zt)?;
        let scale = 1.0 / (cfg.lambda * (t - 1) as f64);
        let mut acc = 0.0;
        for &s in &supports {
            acc += f64::from(labels[s]) * evaluator.eval_prepared(&prepared[s], &pt, &mut kernel_rng)?;
        }
        let y_t = f64::from(data.label(it));
        let margin = y_t * scale * acc;
        let violated = margin < 1.0;

        let mut objective = BTreeMap::new();
        if violated {
            objective.insert("update_objective".to_string(), -margin);
            if net.num_params() > 0 {
                let h = |z: &[f64]| -> Result<f64> {
                    let pz = evaluator.prepare(z)?;
                    let mut sum = 0.0;
                    for &s in &supports {
                        sum += f64::from(labels[s])
                            * evaluator.eval_prepared(&prepared[s], &pz, &mut kernel_rng)?;
                    }
                    Ok(-y_t * scale * sum)
                };
                let input_grad = crate::kernel::spsa_gradient(h, &zt, &cfg.spsa, &mut spsa_rng)?;
                let param_grads = net.backward(&cache_t, &input_grad)?;
                apply_update(&mut net, &mut opt, &param_grads)?;
            }
            alpha.push(1.0);
            supports.push(t - 1);
        } else {
            alpha.push(0.0);
        }
        labels.push(data.label(it));
        prepared.push(pt);
        features.push(zt);

        record_step(
            sink,
            &mut step_log,
            StepRecord {
                step: t,
                indices: vec![it],
                margins: vec![margin],
                alpha_updates: vec![violated],
                objective,
                kernel_evals: evaluator.count(),
            },
        );
    }

    Ok(TrainOutput {
        alpha,
        labels,
        features,
        net,
        lambda: cfg.lambda,
        t_eff: t_total,
        step_log,
        kernel_evals: evaluator.count(),
    })
}

/// Algorithm 2: per-sample coefficients; support features are re-evaluated
/// under the current parameters (cached until the parameters change), and
/// the stored evaluations are recomputed under the final parameters.
pub fn algorithm2<M: FeatureModel>(
    data: &Dataset,
    cfg: &TrainConfig,
    net: M,
    sink: &mut dyn MetricsSink,
) -> Result<TrainOutput<M>> {
    let mut sampler = SeededSampler::new(cfg.seed);
    algorithm2_with_sampler(data, cfg, net, &mut sampler, sink)
}

pub fn algorithm2_with_sampler<M: FeatureModel>(
    data: &Dataset,
    cfg: &TrainConfig,
    mut net: M,
    sampler: &mut dyn IndexSampler,
    sink: &mut dyn MetricsSink,
) -> Result<TrainOutput<M>> {
    data.validate_for_training()?;
    cfg.validate_sequential()?;
    check_net(&net, data, &cfg.kernel)?;

    net.set_mode(Mode::Train);
    let evaluator = KernelEvaluator::new(&cfg.kernel);
    let mut opt = OptimizerState::new(cfg.optimizer, net.num_params())?;
    let mut spsa_rng = stream_rng(cfg.seed, STREAM_SPSA);
    let mut dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT);
    let mut kernel_rng = stream_rng(cfg.seed, STREAM_KERNEL);

    let m = data.len();
    let mut alpha = vec![0.0; m];
    let mut store: BTreeMap<usize, SupportEntry<M::Cache>> = BTreeMap::new();
    let mut step_log = Vec::new();

    let i1 = sampler.draw_index(m);
    alpha[i1] = 1.0;
    record_step(
        sink,
        &mut step_log,
        StepRecord {
            step: 1,
            indices: vec![i1],
            margins: Vec::new(),
            alpha_updates: vec![true],
            objective: BTreeMap::new(),
            kernel_evals: evaluator.count(),
        },
    );

    for t in 2..=cfg.steps {
        let it = sampler.draw_index(m);
        let supports: Vec<usize> = (0..m).filter(|&j| alpha[j] > 0.0).collect();
        ensure_features(
            &net,
            data,
            &evaluator,
            supports.iter().copied().chain(std::iter::once(it)),
            &mut store,
            &mut dropout_rng,
        )?;
        let scale = 1.0 / (cfg.lambda * (t - 1) as f64);
        let target = &store[&it].prepared;
        let mut acc = 0.0;
        for &j in &supports {
            acc += alpha[j]
                * f64::from(data.label(j))
                * evaluator.eval_prepared(&store[&j].prepared, target, &mut kernel_rng)?;
        }
        let y_t = f64::from(data.label(it));
        let margin = y_t * scale * acc;
        let violated = margin < 1.0;

        let mut objective = BTreeMap::new();
        if violated {
            alpha[it] += 1.0;
            objective.insert("update_objective".to_string(), -margin);
            if net.num_params() > 0 {
                // Both kernel arguments depend on the parameters: perturb the
                // concatenated features of all distinct samples involved.
                let mut involved = supports.clone();
                if !involved.contains(&it) {
                    involved.push(it);
                    involved.sort_unstable();
                }
                let pos_of_it = involved.binary_search(&it).expect("it present");
                let coeffs: Vec<f64> = involved
                    .iter()
                    .map(|&j| alpha[j] - if j == it { 1.0 } else { 0.0 })
                    .collect();
                let y: Vec<f64> = involved.iter().map(|&j| f64::from(data.label(j))).collect();
                let parts: Vec<(&Vec<f64>, &M::Cache)> = involved
                    .iter()
                    .map(|j| {
                        let e = &store[j];
                        (&e.z, &e.cache)
                    })
                    .collect();
                let objective_fn = |slices: &[&[f64]]| -> Result<f64> {
                    let prepared: Vec<PreparedPoint> = slices
                        .iter()
                        .map(|z| evaluator.prepare(z))
                        .collect::<Result<_>>()?;
                    let mut sum = 0.0;
                    for (p, &c) in coeffs.iter().enumerate() {
                        if c > 0.0 {
                            sum += c
                                * y[p]
                                * evaluator.eval_prepared(
                                    &prepared[p],
                                    &prepared[pos_of_it],
                                    &mut kernel_rng,
                                )?;
                        }
                    }
                    Ok(-y_t * scale * sum)
                };
                spsa_update_over_parts(
                    &mut net,
                    &mut opt,
                    &cfg.spsa,
                    &parts,
                    objective_fn,
                    &mut spsa_rng,
                )?;
            }
            // The parameters changed; cached features are stale.
            store.clear();
        }

        record_step(
            sink,
            &mut step_log,
            StepRecord {
                step: t,
                indices: vec![it],
                margins: vec![margin],
                alpha_updates: vec![violated],
                objective,
                kernel_evals: evaluator.count(),
            },
        );
    }

    let features = final_features(&mut net, data, &mut dropout_rng)?;
    let labels: Vec<i8> = (0..m).map(|j| data.label(j)).collect();
    Ok(TrainOutput {
        alpha,
        labels,
        features,
        net,
        lambda: cfg.lambda,
        t_eff: cfg.steps,
        step_log,
        kernel_evals: evaluator.count(),
    })
}

/// Algorithm 3: mini-batched margins with 1/k coefficient increments and an
/// alignment-regularized parameter objective applied every step.
pub fn algorithm3<M: FeatureModel>(
    data: &Dataset,
    cfg: &TrainConfig,
    net: M,
    sink: &mut dyn MetricsSink,
) -> Result<TrainOutput<M>> {
    let mut sampler = SeededSampler::new(cfg.seed);
    algorithm3_with_sampler(data, cfg, net, &mut sampler, sink)
}

pub fn algorithm3_with_sampler<M: FeatureModel>(
    data: &Dataset,
    cfg: &TrainConfig,
    mut net: M,
    sampler: &mut dyn IndexSampler,
    sink: &mut dyn MetricsSink,
) -> Result<TrainOutput<M>> {
    data.validate_for_training()?;
    cfg.validate_sequential()?;
    cfg.validate_batched(data.len())?;
    check_net(&net, data, &cfg.kernel)?;

    net.set_mode(Mode::Train);
    let evaluator = KernelEvaluator::new(&cfg.kernel);
    let mut opt = OptimizerState::new(cfg.optimizer, net.num_params())?;
    let mut spsa_rng = stream_rng(cfg.seed, STREAM_SPSA);
    let mut dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT);
    let mut kernel_rng = stream_rng(cfg.seed, STREAM_KERNEL);

    let m = data.len();
    let k = cfg.batch_size;
    let frac = 1.0 / k as f64;
    let mut alpha = vec![0.0; m];
    let mut store: BTreeMap<usize, SupportEntry<M::Cache>> = BTreeMap::new();
    let mut step_log = Vec::new();

    let a1 = sampler.draw_batch(m, k);
    for &j in &a1 {
        alpha[j] = frac;
    }
    record_step(
        sink,
        &mut step_log,
        StepRecord {
            step: 1,
            indices: a1,
            margins: Vec::new(),
            alpha_updates: vec![true; k],
            objective: BTreeMap::new(),
            kernel_evals: evaluator.count(),
        },
    );

    for t in 2..=cfg.steps {
        let batch = sampler.draw_batch(m, k);
        let supports: Vec<usize> = (0..m).filter(|&j| alpha[j] > 0.0).collect();
        ensure_features(
            &net,
            data,
            &evaluator,
            supports.iter().copied().chain(batch.iter().copied()),
            &mut store,
            &mut dropout_rng,
        )?;

        // Margins under the coefficients of step t.
        let scale = 1.0 / (cfg.lambda * (t - 1) as f64);
        let mut margins = Vec::with_capacity(k);
        for &i in &batch {
            let target = &store[&i].prepared;
            let mut acc = 0.0;
            for &j in &supports {
                acc += alpha[j]
                    * f64::from(data.label(j))
                    * evaluator.eval_prepared(&store[&j].prepared, target, &mut kernel_rng)?;
            }
            margins.push(f64::from(data.label(i)) * scale * acc);
        }
        let updates: Vec<bool> = margins.iter().map(|&g| g < 1.0).collect();
        for (pos, &i) in batch.iter().enumerate() {
            if updates[pos] {
                alpha[i] += frac;
            }
        }

        // Parameter step on mu * weighted alignment - alignment, computed
        // over the batch with the just-updated coefficients.
        let batch_labels: Vec<i8> = batch.iter().map(|&i| data.label(i)).collect();
        let batch_alpha: Vec<f64> = batch.iter().map(|&i| alpha[i]).collect();
        let mut objective = BTreeMap::new();
        {
            let gram_seed = kernel_rng.random::<u64>();
            let batch_prepared: Vec<PreparedPoint> = batch
                .iter()
                .map(|i| store[i].prepared.clone())
                .collect();
            let center_gram = evaluator.gram_prepared(&batch_prepared, gram_seed)?;
            let center_wa = weighted_alignment(&center_gram, &batch_labels, &batch_alpha)?;
            let center_a = alignment(&center_gram, &batch_labels)?;
            objective.insert("weighted_alignment".to_string(), center_wa);
            objective.insert("alignment".to_string(), center_a);
            objective.insert(
                "update_objective".to_string(),
                cfg.mu * center_wa - center_a,
            );
        }
        if net.num_params() > 0 {
            let parts: Vec<(&Vec<f64>, &M::Cache)> = batch
                .iter()
                .map(|i| {
                    let e = &store[i];
                    (&e.z, &e.cache)
                })
                .collect();
            let mu = cfg.mu;
            let objective_fn = |slices: &[&[f64]]| -> Result<f64> {
                let gram_seed = kernel_rng.random::<u64>();
                let prepared: Vec<PreparedPoint> = slices
                    .iter()
                    .map(|z| evaluator.prepare(z))
                    .collect::<Result<_>>()?;
                let gram = evaluator.gram_prepared(&prepared, gram_seed)?;
                let wa = weighted_alignment(&gram, &batch_labels, &batch_alpha)?;
                let a = alignment(&gram, &batch_labels)?;
                Ok(mu * wa - a)
            };
            spsa_update_over_parts(
                &mut net,
                &mut opt,
                &cfg.spsa,
                &parts,
                objective_fn,
                &mut spsa_rng,
            )?;
        }
        store.clear();

        record_step(
            sink,
            &mut step_log,
            StepRecord {
                step: t,
                indices: batch,
                margins,
                alpha_updates: updates,
                objective,
                kernel_evals: evaluator.count(),
            },
        );
    }

    let features = final_features(&mut net, data, &mut dropout_rng)?;
    let labels: Vec<i8> = (0..m).map(|j| data.label(j)).collect();
    Ok(TrainOutput {
        alpha,
        labels,
        features,
        net,
        lambda: cfg.lambda,
        t_eff: cfg.steps,
        step_log,
        kernel_evals: evaluator.count(),
    })
}

/// Algorithm 4: kernel alignment training followed by a plain SVM fit on the
/// frozen features. `cfg.steps` counts the alignment steps (0 skips straight
/// to the fit); the fit itself is governed by `svm`.
pub fn algorithm4<M, L>(
    data: &Dataset,
    cfg: &TrainConfig,
    net: M,
    loss: L,
    svm: &SvmFitConfig,
    sink: &mut dyn MetricsSink,
) -> Result<TrainOutput<M>>
where
    M: FeatureModel,
    L: Fn(f64, f64) -> f64,
{
    let mut sampler = SeededSampler::new(cfg.seed);
    algorithm4_with_sampler(data, cfg, net, loss, svm, &mut sampler, sink)
}

pub fn algorithm4_with_sampler<M, L>(
    data: &Dataset,
    cfg: &TrainConfig,
    mut net: M,
    loss: L,
    svm: &SvmFitConfig,
    sampler: &mut dyn IndexSampler,
    sink: &mut dyn MetricsSink,
) -> Result<TrainOutput<M>>
where
    M: FeatureModel,
    L: Fn(f64, f64) -> f64,
{
    data.validate_for_training()?;
    cfg.validate_common()?;
    cfg.validate_batched(data.len())?;
    svm.validate()?;
    check_net(&net, data, &cfg.kernel)?;

    net.set_mode(Mode::Train);
    let evaluator = KernelEvaluator::new(&cfg.kernel);
    let mut opt = OptimizerState::new(cfg.optimizer, net.num_params())?;
    let mut spsa_rng = stream_rng(cfg.seed, STREAM_SPSA);
    let mut dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT);
    let mut kernel_rng = stream_rng(cfg.seed, STREAM_KERNEL);

    let m = data.len();
    let k = cfg.batch_size;
    let mut store: BTreeMap<usize, SupportEntry<M::Cache>> = BTreeMap::new();
    let mut step_log = Vec::new();

    // Part 1: align the kernel to the labels.
    for t in 1..=cfg.steps {
        let batch = sampler.draw_batch(m, k);
        ensure_features(
            &net,
            data,
            &evaluator,
            batch.iter().copied(),
            &mut store,
            &mut dropout_rng,
        )?;
        let batch_labels: Vec<i8> = batch.iter().map(|&i| data.label(i)).collect();

        let mut objective = BTreeMap::new();
        {
            let gram_seed = kernel_rng.random::<u64>();
            let batch_prepared: Vec<PreparedPoint> = batch
                .iter()
                .map(|i| store[i].prepared.clone())
                .collect();
            let gram = evaluator.gram_prepared(&batch_prepared, gram_seed)?;
            let a = alignment(&gram, &batch_labels)?;
            objective.insert("alignment".to_string(), a);
            objective.insert("loss".to_string(), loss(1.0, a));
        }
        if net.num_params() > 0 {
            let parts: Vec<(&Vec<f64>, &M::Cache)> = batch
                .iter()
                .map(|i| {
                    let e = &store[i];
                    (&e.z, &e.cache)
                })
                .collect();
            let objective_fn = |slices: &[&[f64]]| -> Result<f64> {
                let gram_seed = kernel_rng.random::<u64>();
                let prepared: Vec<PreparedPoint> = slices
                    .iter()
                    .map(|z| evaluator.prepare(z))
                    .collect::<Result<_>>()?;
                let gram = evaluator.gram_prepared(&prepared, gram_seed)?;
                let a = alignment(&gram, &batch_labels)?;
                Ok(loss(1.0, a))
            };
            spsa_update_over_parts(
                &mut net,
                &mut opt,
                &cfg.spsa,
                &parts,
                objective_fn,
                &mut spsa_rng,
            )?;
        }
        store.clear();

        record_step(
            sink,
            &mut step_log,
            StepRecord {
                step: t,
                indices: batch,
                margins: Vec::new(),
                alpha_updates: Vec::new(),
                objective,
                kernel_evals: evaluator.count(),
            },
        );
    }

    // Part 2: freeze the features and fit the SVM.
    let features = final_features(&mut net, data, &mut dropout_rng)?;
    let labels: Vec<i8> = (0..m).map(|j| data.label(j)).collect();
    let part1_steps = cfg.steps;
    let fit = pegasos_core(
        &evaluator,
        &features,
        &labels,
        svm,
        sampler,
        &mut kernel_rng,
        sink,
        &mut step_log,
        part1_steps,
    )?;

    Ok(TrainOutput {
        alpha: fit,
        labels,
        features,
        net,
        lambda: svm.lambda,
        t_eff: svm.steps,
        step_log,
        kernel_evals: evaluator.count(),
    })
}

/// Standalone kernelized Pegasos on fixed feature points.
pub struct PegasosOutput {
    pub alpha: Vec<f64>,
    pub steps: usize,
    pub step_log: Vec<StepRecord>,
    pub kernel_evals: u64,
}

pub fn pegasos_fit(
    kernel: &KernelConfig,
    features: &[Vec<f64>],
    labels: &[i8],
    fit: &SvmFitConfig,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<PegasosOutput> {
    let mut sampler = SeededSampler::new(seed);
    pegasos_fit_with_sampler(kernel, features, labels, fit, &mut sampler, seed, sink)
}

pub fn pegasos_fit_with_sampler(
    kernel: &KernelConfig,
    features: &[Vec<f64>],
    labels: &[i8],
    fit: &SvmFitConfig,
    sampler: &mut dyn IndexSampler,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<PegasosOutput> {
    fit.validate()?;
    kernel.validate()?;
    if features.len() != labels.len() {
        return Err(Error::input(format!(
            "{} feature points but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.len() < 2 {
        return Err(Error::input("fitting requires at least two points".to_string()));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::input(
            "fitting requires both classes to be present".to_string(),
        ));
    }
    let evaluator = KernelEvaluator::new(kernel);
    let mut kernel_rng = stream_rng(seed, STREAM_KERNEL);
    let mut step_log = Vec::new();
    let alpha = pegasos_core(
        &evaluator,
        features,
        labels,
        fit,
        sampler,
        &mut kernel_rng,
        sink,
        &mut step_log,
        0,
    )?;
    Ok(PegasosOutput {
        alpha,
        steps: fit.steps,
        step_log,
        kernel_evals: evaluator.count(),
    })
}

/// The Pegasos loop itself, shared between `pegasos_fit` and algorithm 4.
/// `step_offset` shifts the recorded step numbers so a preceding alignment
/// phase keeps the log monotone.
#[allow(clippy::too_many_arguments)]
fn pegasos_core(
    evaluator: &KernelEvaluator,
    features: &[Vec<f64>],
    labels: &[i8],
    fit: &SvmFitConfig,
    sampler: &mut dyn IndexSampler,
    kernel_rng: &mut ChaCha8Rng,
    sink: &mut dyn MetricsSink,
    step_log: &mut Vec<StepRecord>,
    step_offset: usize,
) -> Result<Vec<f64>> {
    let m = features.len();
    let prepared: Vec<PreparedPoint> = features
        .iter()
        .map(|z| evaluator.prepare(z))
        .collect::<Result<_>>()?;
    let mut alpha = vec![0.0; m];

    let i1 = sampler.draw_index(m);
    alpha[i1] = 1.0;
    record_step(
        sink,
        step_log,
        StepRecord {
            step: step_offset + 1,
            indices: vec![i1],
            margins: Vec::new(),
            alpha_updates: vec![true],
            objective: BTreeMap::new(),
            kernel_evals: evaluator.count(),
        },
    );

    for t in 2..=fit.steps {
        let it = sampler.draw_index(m);
        let scale = 1.0 / (fit.lambda * (t - 1) as f64);
        let mut acc = 0.0;
        for j in 0..m {
            if alpha[j] > 0.0 {
                acc += alpha[j]
                    * f64::from(labels[j])
                    * evaluator.eval_prepared(&prepared[j], &prepared[it], kernel_rng)?;
            }
        }
        let margin = f64::from(labels[it]) * scale * acc;
        let violated = margin < 1.0;
        if violated {
            alpha[it] += 1.0;
        }
        record_step(
            sink,
            step_log,
            StepRecord {
                step: step_offset + t,
                indices: vec![it],
                margins: vec![margin],
                alpha_updates: vec![violated],
                objective: BTreeMap::new(),
                kernel_evals: evaluator.count(),
            },
        );
    }
    Ok(alpha)
}

/// Final stored evaluations z_j = F(x_j) for every dataset entry, computed
/// in eval mode since they feed the frozen classifier.
fn final_features<M: FeatureModel>(
    net: &mut M,
    data: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    net.set_mode(Mode::Eval);
    let mut features = Vec::with_capacity(data.len());
    for j in 0..data.len() {
        let (z, _) = net.forward(data.input(j), rng)?;
        features.push(z);
    }
    Ok(features)
}
