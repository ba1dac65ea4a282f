//! The kernel as an evaluatable object: exact and shot-sampled fidelity
//! kernels, classical reference kernels behind the same surface, Gram
//! matrices, the SPSA input-gradient estimator, and kernel-target alignment.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::qsim::{fidelity_from_states, sample_probability, FeatureMapCircuit, Statevector};

/// Kernel family. The quantum kernel is the fidelity |<psi(a), psi(b)>|^2;
/// the classical kernels exist so the training algorithms can be tested
/// against closed forms independent of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    Quantum(FeatureMapCircuit),
    Linear,
    Rbf { gamma: f64 },
    Constant(f64),
}

/// Whether kernel values are exact probabilities or shot-sampled estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Exact,
    Sampled { shots: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub mode: KernelMode,
}

impl KernelConfig {
    pub fn exact(kind: KernelKind) -> Self {
        KernelConfig {
            kind,
            mode: KernelMode::Exact,
        }
    }

    pub fn sampled(kind: KernelKind, shots: u64) -> Self {
        KernelConfig {
            kind,
            mode: KernelMode::Sampled { shots },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let KernelMode::Sampled { shots } = self.mode {
            if shots == 0 {
                return Err(Error::config("sampled mode requires shots >= 1"));
            }
        }
        if let KernelKind::Rbf { gamma } = self.kind {
            if !gamma.is_finite() || gamma < 0.0 {
                return Err(Error::config("rbf gamma must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Required input dimension, when the kernel fixes one.
    pub fn feature_dim(&self) -> Option<usize> {
        match &self.kind {
            KernelKind::Quantum(circuit) => Some(circuit.feature_dim()),
            _ => None,
        }
    }

    fn check_dims(&self, a: &[f64], b: &[f64]) -> Result<()> {
        if a.len() != b.len() {
            return Err(Error::input(format!(
                "kernel arguments have dimensions {} and {}",
                a.len(),
                b.len()
            )));
        }
        if let Some(dim) = self.feature_dim() {
            if a.len() != dim {
                return Err(Error::input(format!(
                    "kernel arguments have dimension {} but the circuit expects {dim}",
                    a.len()
                )));
            }
        }
        Ok(())
    }
}

/// A kernel input preprocessed for repeated evaluation. For quantum kernels
/// this is the prepared statevector, so a stored point is evolved once and
/// reused across every pairing.
#[derive(Debug, Clone)]
pub enum PreparedPoint {
    State(Statevector),
    Raw(Vec<f64>),
}

/// Evaluates kernel entries against a configuration while counting every
/// pair evaluation, so training runs can report an auditable budget.
pub struct KernelEvaluator<'a> {
    cfg: &'a KernelConfig,
    evals: AtomicU64,
}

impl<'a> KernelEvaluator<'a> {
    pub fn new(cfg: &'a KernelConfig) -> Self {
        KernelEvaluator {
            cfg,
            evals: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &KernelConfig {
        self.cfg
    }

    /// Number of kernel entries evaluated so far.
    pub fn count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn prepare(&self, z: &[f64]) -> Result<PreparedPoint> {
        match &self.cfg.kind {
            KernelKind::Quantum(circuit) => Ok(PreparedPoint::State(circuit.evolve(z)?)),
            _ => Ok(PreparedPoint::Raw(z.to_vec())),
        }
    }

    /// Kernel value between two prepared points. In sampled mode the exact
    /// value becomes the success probability of a single binomial draw.
    pub fn eval_prepared(
        &self,
        a: &PreparedPoint,
        b: &PreparedPoint,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        let exact = match (&self.cfg.kind, a, b) {
            (KernelKind::Quantum(_), PreparedPoint::State(sa), PreparedPoint::State(sb)) => {
                fidelity_from_states(sa, sb)
            }
            (KernelKind::Linear, PreparedPoint::Raw(va), PreparedPoint::Raw(vb)) => {
                dot(va, vb)
            }
            (KernelKind::Rbf { gamma }, PreparedPoint::Raw(va), PreparedPoint::Raw(vb)) => {
                let d2: f64 = va
                    .iter()
                    .zip(vb)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                (-gamma * d2).exp()
            }
            (KernelKind::Constant(c), _, _) => *c,
            _ => {
                return Err(Error::input(
                    "prepared point does not match the kernel kind".to_string(),
                ))
            }
        };
        match self.cfg.mode {
            KernelMode::Exact => Ok(exact),
            KernelMode::Sampled { shots } => {
                sample_probability(exact.clamp(0.0, 1.0), shots, rng)
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        self.cfg.check_dims(a, b)?;
        let pa = self.prepare(a)?;
        let pb = self.prepare(b)?;
        self.eval_prepared(&pa, &pb, rng)
    }

    /// Symmetric Gram matrix over prepared points. Only entries with i <= j
    /// are evaluated; the lower triangle is mirrored. Sampled entries use
    /// per-entry substreams derived from `seed` and the index pair, so the
    /// result is independent of evaluation order.
    pub fn gram_prepared(&self, points: &[PreparedPoint], seed: u64) -> Result<DMatrix<f64>> {
        let m = points.len();
        let entries: Vec<((usize, usize), Result<f64>)> = (0..m)
            .flat_map(|i| (i..m).map(move |j| (i, j)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(i, j)| {
                let mut rng = entry_rng(seed, i, j);
                ((i, j), self.eval_prepared(&points[i], &points[j], &mut rng))
            })
            .collect();
        let mut gram = DMatrix::zeros(m, m);
        for ((i, j), value) in entries {
            let v = value?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
        Ok(gram)
    }

    pub fn gram(&self, points: &[Vec<f64>], seed: u64) -> Result<DMatrix<f64>> {
        if let Some(first) = points.first() {
            for p in points {
                self.cfg.check_dims(first, p)?;
            }
        }
        let prepared: Vec<PreparedPoint> = points
            .iter()
            .map(|p| self.prepare(p))
            .collect::<Result<_>>()?;
        self.gram_prepared(&prepared, seed)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic per-entry random stream for Gram sampling.
fn entry_rng(seed: u64, i: usize, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((i as u64) << 32) ^ (j as u64) ^ 0x9e37_79b9_7f4a_7c15);
    rng
}

/// Evaluates K(a, b) under `cfg` with an explicit random source.
pub fn kernel_eval(cfg: &KernelConfig, a: &[f64], b: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
    KernelEvaluator::new(cfg).eval(a, b, rng)
}

/// Gram matrix of a point set under `cfg`. An empty point set yields an
/// empty matrix.
pub fn gram_matrix(
    cfg: &KernelConfig,
    points: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    use rand::Rng;
    let seed = rng.random::<u64>();
    KernelEvaluator::new(cfg).gram(points, seed)
}

/// SPSA estimator settings: perturbation magnitude `c` (same units as the
/// feature space) and how many two-point estimates to average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaConfig {
    pub perturbation: f64,
    pub resamples: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig {
            perturbation: 0.1,
            resamples: 1,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.perturbation > 0.0) || !self.perturbation.is_finite() {
            return Err(Error::config("spsa perturbation must be positive"));
        }
        if self.resamples == 0 {
            return Err(Error::config("spsa resamples must be at least 1"));
        }
        Ok(())
    }
}

/// Two-point SPSA gradient estimate of `h` at `z`.
///
/// Each resample draws a fair sign vector `delta`, evaluates `h` at
/// `z + c*delta` and `z - c*delta`, and contributes
/// `(h_plus - h_minus) / (2c) * delta` elementwise (delta entries are their
/// own inverses). Exactly `2 * resamples` evaluations of `h` are made. Sign
/// components are drawn in index order, one resample after another.
pub fn spsa_gradient<F>(
    mut h: F,
    z: &[f64],
    cfg: &SpsaConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    use rand::Rng;
    cfg.validate()?;
    let n = z.len();
    let c = cfg.perturbation;
    let mut estimate = vec![0.0; n];
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut delta = vec![0.0; n];
    for _ in 0..cfg.resamples {
        for k in 0..n {
            delta[k] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            plus[k] = z[k] + c * delta[k];
            minus[k] = z[k] - c * delta[k];
        }
        let h_plus = h(&plus)?;
        let h_minus = h(&minus)?;
        if !h_plus.is_finite() || !h_minus.is_finite() {
            return Err(Error::numerical(format!(
                "spsa objective is not finite ({h_plus}, {h_minus})"
            )));
        }
        let slope = (h_plus - h_minus) / (2.0 * c);
        for k in 0..n {
            estimate[k] += slope * delta[k];
        }
    }
    let scale = 1.0 / cfg.resamples as f64;
    for g in &mut estimate {
        *g *= scale;
    }
    Ok(estimate)
}

/// Kernel-target alignment of a batch Gram matrix:
/// `sum_ij y_i y_j K_ij / (k * sqrt(sum_ij K_ij^2))`.
pub fn alignment(k_batch: &DMatrix<f64>, labels: &[i8]) -> Result<f64> {
    let k = check_batch(k_batch, labels)?;
    let (num, frob2) = alignment_sums(k_batch, labels);
    if frob2 == 0.0 {
        return Err(Error::numerical(
            "alignment undefined for an all-zero kernel batch".to_string(),
        ));
    }
    Ok(num / (k as f64 * frob2.sqrt()))
}

/// Coefficient-weighted alignment:
/// `sum_ij a_i a_j y_i y_j K_ij / (sqrt(sum_ij (a_i a_j)^2) * sqrt(sum_ij K_ij^2))`.
/// When every coefficient is zero the value is defined to be 0.
pub fn weighted_alignment(
    k_batch: &DMatrix<f64>,
    labels: &[i8],
    alpha: &[f64],
) -> Result<f64> {
    let k = check_batch(k_batch, labels)?;
    if alpha.len() != k {
        return Err(Error::input(format!(
            "alpha has length {} but the batch has {k} rows",
            alpha.len()
        )));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Ok(0.0);
    }
    let mut num = 0.0;
    let mut alpha_frob2 = 0.0;
    let mut k_frob2 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let aa = alpha[i] * alpha[j];
            let kij = k_batch[(i, j)];
            num += aa * f64::from(labels[i]) * f64::from(labels[j]) * kij;
            alpha_frob2 += aa * aa;
            k_frob2 += kij * kij;
        }
    }
    if k_frob2 == 0.0 {
        return Err(Error::numerical(
            "weighted alignment undefined for an all-zero kernel batch".to_string(),
        ));
    }
    Ok(num / (alpha_frob2.sqrt() * k_frob2.sqrt()))
}

fn check_batch(k_batch: &DMatrix<f64>, labels: &[i8]) -> Result<usize> {
    if !k_batch.is_square() {
        return Err(Error::input("kernel batch must be square".to_string()));
    }
    let k = k_batch.nrows();
    if k == 0 {
        return Err(Error::input("kernel batch is empty".to_string()));
    }
    if labels.len() != k {
        return Err(Error::input(format!(
            "labels have length {} but the batch has {k} rows",
            labels.len()
        )));
    }
    Ok(k)
}

fn alignment_sums(k_batch: &DMatrix<f64>, labels: &[i8]) -> (f64, f64) {
    let k = k_batch.nrows();
    let mut num = 0.0;
    let mut frob2 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let kij = k_batch[(i, j)];
            num += f64::from(labels[i]) * f64::from(labels[j]) * kij;
            frob2 += kij * kij;
        }
    }
    (num, frob2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{build_zz_feature_map, Entanglement};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn quantum_exact(n: usize) -> KernelConfig {
        KernelConfig::exact(KernelKind::Quantum(
            build_zz_feature_map(n, 1, Entanglement::Full).unwrap(),
        ))
    }

    #[test]
    fn kernel_eval_matches_analytic_single_qubit() {
        let cfg = quantum_exact(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = kernel_eval(&cfg, &[0.0], &[PI / 3.0], &mut rng).unwrap();
        assert!((k - 0.25).abs() < 1e-12);
        let k = kernel_eval(&cfg, &[0.7], &[0.7], &mut rng).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_eval_rejects_mismatched_dims() {
        let cfg = quantum_exact(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kernel_eval(&cfg, &[0.0], &[0.1, 0.2], &mut rng).is_err());
        assert!(kernel_eval(&cfg, &[0.0, 0.1, 0.2], &[0.0, 0.1, 0.2], &mut rng).is_err());
    }

    #[test]
    fn sampled_kernel_lives_on_grid_and_is_unbiased() {
        let cfg = KernelConfig::sampled(
            KernelKind::Quantum(build_zz_feature_map(1, 1, Entanglement::Full).unwrap()),
            450,
        );
        // p = cos^2(pi/3) = 0.25.
        let mut sum = 0.0;
        let seeds = 400;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = kernel_eval(&cfg, &[0.0], &[PI / 3.0], &mut rng).unwrap();
            let scaled = v * 450.0;
            assert!((scaled - scaled.round()).abs() < 1e-9);
            sum += v;
        }
        let mean = sum / seeds as f64;
        let se = (0.25 * 0.75 / (450.0 * seeds as f64)).sqrt();
        assert!((mean - 0.25).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn gram_trivial_cases() {
        let cfg = quantum_exact(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = gram_matrix(&cfg, &[vec![0.3]], &mut rng).unwrap();
        assert_eq!(g.nrows(), 1);
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12);

        let g = gram_matrix(&cfg, &[vec![0.0], vec![PI / 2.0]], &mut rng).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((g[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(g[(0, 1)].abs() < 1e-12);
        assert!(g[(1, 0)].abs() < 1e-12);

        let g = gram_matrix(&cfg, &[], &mut rng).unwrap();
        assert_eq!(g.nrows(), 0);
    }

    #[test]
    fn gram_is_psd_for_random_points() {
        let cfg = quantum_exact(4);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let points: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let g = gram_matrix(&cfg, &points, &mut rng).unwrap();
        assert!((&g - g.transpose()).abs().max() < 1e-12);
        let eig = g.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-9, "min eigenvalue {min}");
    }

    #[test]
    fn sampled_gram_is_symmetric_and_order_independent() {
        let cfg = KernelConfig::sampled(
            KernelKind::Quantum(build_zz_feature_map(2, 1, Entanglement::Full).unwrap()),
            100,
        );
        let points: Vec<Vec<f64>> = vec![vec![0.1, 0.4], vec![1.0, -0.3], vec![0.5, 0.9]];
        let ev = KernelEvaluator::new(&cfg);
        let g1 = ev.gram(&points, 99).unwrap();
        let g2 = ev.gram(&points, 99).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(g1, g1.transpose());
    }

    #[test]
    fn evaluator_counts_pair_evaluations() {
        let cfg = quantum_exact(2);
        let ev = KernelEvaluator::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let points: Vec<Vec<f64>> = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]];
        ev.gram(&points, 1).unwrap();
        // Upper triangle including the diagonal: 3 * 4 / 2.
        assert_eq!(ev.count(), 6);
        ev.eval(&[0.0, 0.0], &[1.0, 1.0], &mut rng).unwrap();
        assert_eq!(ev.count(), 7);
    }

    #[test]
    fn classical_kernels_behave() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = KernelConfig::exact(KernelKind::Linear);
        assert_eq!(
            kernel_eval(&lin, &[1.0, 2.0], &[3.0, -1.0], &mut rng).unwrap(),
            1.0
        );
        let rbf = KernelConfig::exact(KernelKind::Rbf { gamma: 0.5 });
        let v = kernel_eval(&rbf, &[0.0, 0.0], &[1.0, 1.0], &mut rng).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        let one = KernelConfig::exact(KernelKind::Constant(1.0));
        assert_eq!(kernel_eval(&one, &[5.0], &[-2.0], &mut rng).unwrap(), 1.0);
    }

    /// Replicates the estimator's documented sign-draw order to predict the
    /// perturbation, then checks the single-resample identity
    /// `estimate = (w . delta) * delta` for a linear objective.
    #[test]
    fn spsa_single_resample_identity_for_linear_h() {
        let w = [1.0, 0.0, -2.0];
        let h = |z: &[f64]| Ok(z.iter().zip(&w).map(|(a, b)| a * b).sum());
        let cfg = SpsaConfig {
            perturbation: 0.1,
            resamples: 1,
        };
        for seed in 0..20 {
            use rand::Rng;
            let mut probe = ChaCha8Rng::seed_from_u64(seed);
            let delta: Vec<f64> = (0..3)
                .map(|_| if probe.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let expected: Vec<f64> = {
                let wd: f64 = w.iter().zip(&delta).map(|(a, b)| a * b).sum();
                delta.iter().map(|d| wd * d).collect()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let est = spsa_gradient(h, &[0.4, -0.2, 1.0], &cfg, &mut rng).unwrap();
            for (e, x) in est.iter().zip(&expected) {
                assert!((e - x).abs() < 1e-10, "seed {seed}: {est:?} vs {expected:?}");
            }
        }
    }

    #[test]
    fn spsa_constant_function_gives_zero() {
        let cfg = SpsaConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let est = spsa_gradient(|_| Ok(3.25), &[0.1, 0.2, 0.3, 0.4], &cfg, &mut rng).unwrap();
        assert!(est.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn spsa_expectation_is_exact_gradient_for_quadratics() {
        // h(z) = z' A z + b' z with expectation of the estimator equal to
        // grad h = (A + A') z + b.
        let a = [[1.5, -0.3, 0.2, 0.0], [0.4, 2.0, 0.1, -0.5], [0.0, 0.7, 0.9, 0.3], [
            -0.2, 0.1, 0.6, 1.1,
        ]];
        let b = [0.5, -1.0, 0.25, 2.0];
        let z = [0.3, -0.7, 1.2, 0.4];
        let h = |v: &[f64]| {
            let mut q = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    q += v[i] * a[i][j] * v[j];
                }
            }
            Ok(q + v.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>())
        };
        let mut grad = [0.0; 4];
        for i in 0..4 {
            grad[i] = b[i];
            for j in 0..4 {
                grad[i] += (a[i][j] + a[j][i]) * z[j];
            }
        }
        let cfg = SpsaConfig {
            perturbation: 0.1,
            resamples: 10_000,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let est = spsa_gradient(h, &z, &cfg, &mut rng).unwrap();
        // Per-resample variance of component i is bounded by sum_j!=i grad_j^2.
        let var_bound: f64 = grad.iter().map(|g| g * g).sum();
        let se = (var_bound / cfg.resamples as f64).sqrt();
        for i in 0..4 {
            assert!(
                (est[i] - grad[i]).abs() < 5.0 * se,
                "component {i}: {} vs {}",
                est[i],
                grad[i]
            );
        }
    }

    /// The estimator's bias on smooth non-quadratic objectives is O(c^2):
    /// the exact expectation (enumerating all sign patterns) approaches the
    /// true gradient at rate c^2, so halving c cuts the bias by about 4.
    #[test]
    fn spsa_bias_shrinks_quadratically_in_c() {
        let h = |z: &[f64]| -> Result<f64> { Ok(z[0].sin() + z[1].powi(3) + z[0] * z[1]) };
        let z = [0.6, 0.8];
        let grad = [z[0].cos() + z[1], 3.0 * z[1] * z[1] + z[0]];
        let exact_expectation = |c: f64| -> [f64; 2] {
            let signs = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
            let mut mean = [0.0, 0.0];
            for delta in &signs {
                let plus = [z[0] + c * delta[0], z[1] + c * delta[1]];
                let minus = [z[0] - c * delta[0], z[1] - c * delta[1]];
                let slope = (h(&plus).unwrap() - h(&minus).unwrap()) / (2.0 * c);
                mean[0] += slope * delta[0] / 4.0;
                mean[1] += slope * delta[1] / 4.0;
            }
            mean
        };
        let bias = |c: f64| -> f64 {
            let m = exact_expectation(c);
            ((m[0] - grad[0]).powi(2) + (m[1] - grad[1]).powi(2)).sqrt()
        };
        let ratio = bias(0.2) / bias(0.1);
        assert!((3.7..=4.3).contains(&ratio), "bias ratio {ratio}");
    }

    #[test]
    fn alignment_reference_values() {
        // All-ones kernel, all labels equal: perfectly aligned.
        let k = DMatrix::from_element(4, 4, 1.0);
        let a = alignment(&k, &[1, 1, 1, 1]).unwrap();
        assert!((a - 1.0).abs() < 1e-12);

        // Mixed labels cancel the numerator.
        let a = alignment(&k, &[1, 1, -1, -1]).unwrap();
        assert!(a.abs() < 1e-12);

        // Identity kernel, opposite labels.
        let k = DMatrix::identity(2, 2);
        let a = alignment(&k, &[1, -1]).unwrap();
        assert!((a - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn alignment_is_scale_invariant_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let k = 5;
            let raw = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0f64));
            let sym = (&raw + raw.transpose()) * 0.5;
            let labels: Vec<i8> = (0..k)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect();
            let a = alignment(&sym, &labels).unwrap();
            assert!(a.abs() <= 1.0 + 1e-12);
            let scaled = &sym * 3.7;
            let a2 = alignment(&scaled, &labels).unwrap();
            assert!((a - a2).abs() < 1e-12);

            let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0)).collect();
            let w = weighted_alignment(&sym, &labels, &alpha).unwrap();
            let w2 = weighted_alignment(&scaled, &labels, &alpha).unwrap();
            assert!((w - w2).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_alignment_reference_values() {
        let k = DMatrix::identity(2, 2);
        // Zero coefficients: defined to be zero.
        assert_eq!(weighted_alignment(&k, &[1, -1], &[0.0, 0.0]).unwrap(), 0.0);

        // All-ones coefficients on the identity reduce to plain alignment.
        let w = weighted_alignment(&k, &[1, -1], &[1.0, 1.0]).unwrap();
        assert!((w - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);

        // Single support: K_11 / sqrt(sum K^2).
        let k = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.1, 0.2, 0.1, 1.0]);
        let w = weighted_alignment(&k, &[1, -1, 1], &[1.0, 0.0, 0.0]).unwrap();
        let frob: f64 = k.iter().map(|v| v * v).sum::<f64>();
        assert!((w - 1.0 / frob.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn alignment_rejects_degenerate_inputs() {
        let zero = DMatrix::zeros(2, 2);
        assert!(alignment(&zero, &[1, -1]).is_err());
        assert!(weighted_alignment(&zero, &[1, -1], &[1.0, 0.0]).is_err());
        // But an all-zero alpha takes the defined-zero branch first.
        assert_eq!(weighted_alignment(&zero, &[1, -1], &[0.0, 0.0]).unwrap(), 0.0);

        let k = DMatrix::identity(2, 2);
        assert!(alignment(&k, &[1, -1, 1]).is_err());
        assert!(weighted_alignment(&k, &[1, -1], &[1.0]).is_err());
    }
}
