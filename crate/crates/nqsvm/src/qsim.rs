//! Dense statevector simulation of data-parametrized feature-map circuits.
//!
//! The gate set is deliberately small: Hadamard, phase, and CNOT are all the
//! ZZ feature map needs. Qubit 0 is the least significant bit of the
//! basis-state index.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use std::f64::consts::PI;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Angle of a phase gate as a function of the feature vector, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleExpr {
    /// `value` — a fixed angle.
    Constant(f64),
    /// `scale * x[index]`
    Scaled { index: usize, scale: f64 },
    /// `scale * (pi - x[i]) * (pi - x[j])` — the ZZ interaction angle.
    ZzProduct { i: usize, j: usize, scale: f64 },
}

impl AngleExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            AngleExpr::Constant(v) => v,
            AngleExpr::Scaled { index, scale } => scale * x[index],
            AngleExpr::ZzProduct { i, j, scale } => scale * (PI - x[i]) * (PI - x[j]),
        }
    }

    /// Largest feature index referenced, if any.
    fn max_feature_index(&self) -> Option<usize> {
        match *self {
            AngleExpr::Constant(_) => None,
            AngleExpr::Scaled { index, .. } => Some(index),
            AngleExpr::ZzProduct { i, j, .. } => Some(i.max(j)),
        }
    }
}

/// One gate of a feature-map circuit.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Hadamard { target: usize },
    Phase { target: usize, angle: AngleExpr },
    ControlledNot { control: usize, target: usize },
}

/// Entanglement structure of the pairwise layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entanglement {
    /// All pairs (i, j) with i < j.
    Full,
}

impl FromStr for Entanglement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Entanglement::Full),
            other => Err(Error::config(format!(
                "unsupported entanglement '{other}' (expected 'full')"
            ))),
        }
    }
}

/// A data-parametrized unitary as an ordered gate list. Binding the gates at
/// any feature vector yields a unitary circuit by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapCircuit {
    num_qubits: usize,
    feature_dim: usize,
    repetitions: usize,
    gates: Vec<Gate>,
}

impl FeatureMapCircuit {
    /// Builds a circuit from an explicit gate list, validating qubit and
    /// feature indices.
    pub fn new(
        num_qubits: usize,
        feature_dim: usize,
        repetitions: usize,
        gates: Vec<Gate>,
    ) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::config("num_qubits must be at least 1"));
        }
        if repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        let check_qubit = |q: usize| -> Result<()> {
            if q >= num_qubits {
                return Err(Error::config(format!(
                    "qubit index {q} out of range for {num_qubits} qubits"
                )));
            }
            Ok(())
        };
        for gate in &gates {
            match gate {
                Gate::Hadamard { target } => check_qubit(*target)?,
                Gate::Phase { target, angle } => {
                    check_qubit(*target)?;
                    if let Some(idx) = angle.max_feature_index() {
                        if idx >= feature_dim {
                            return Err(Error::config(format!(
                                "angle references feature {idx} but feature_dim is {feature_dim}"
                            )));
                        }
                    }
                }
                Gate::ControlledNot { control, target } => {
                    check_qubit(*control)?;
                    check_qubit(*target)?;
                    if control == target {
                        return Err(Error::config("control and target must differ"));
                    }
                }
            }
        }
        Ok(FeatureMapCircuit {
            num_qubits,
            feature_dim,
            repetitions,
            gates,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Applies the circuit bound at `x` to |0...0> and returns the resulting
    /// state.
    pub fn evolve(&self, x: &[f64]) -> Result<Statevector> {
        if x.len() != self.feature_dim {
            return Err(Error::input(format!(
                "feature vector has dimension {} but circuit expects {}",
                x.len(),
                self.feature_dim
            )));
        }
        let mut state = Statevector::zero(self.num_qubits);
        for gate in &self.gates {
            match gate {
                Gate::Hadamard { target } => state.apply_hadamard(*target),
                Gate::Phase { target, angle } => state.apply_phase(*target, angle.eval(x)),
                Gate::ControlledNot { control, target } => state.apply_cnot(*control, *target),
            }
        }
        Ok(state)
    }
}

/// Builds the ZZ feature map: per repetition, a Hadamard layer, a
/// single-qubit phase `2*x_i` on each qubit, and for every pair i < j the
/// phase `2*(pi - x_i)(pi - x_j)` on j conjugated by CNOT(i, j). The feature
/// dimension equals the qubit count.
pub fn build_zz_feature_map(
    num_qubits: usize,
    repetitions: usize,
    entanglement: Entanglement,
) -> Result<FeatureMapCircuit> {
    if num_qubits == 0 {
        return Err(Error::config("num_qubits must be at least 1"));
    }
    if repetitions == 0 {
        return Err(Error::config("repetitions must be at least 1"));
    }
    let Entanglement::Full = entanglement;
    let mut gates = Vec::new();
    for _ in 0..repetitions {
        for q in 0..num_qubits {
            gates.push(Gate::Hadamard { target: q });
        }
        for q in 0..num_qubits {
            gates.push(Gate::Phase {
                target: q,
                angle: AngleExpr::Scaled {
                    index: q,
                    scale: 2.0,
                },
            });
        }
        for i in 0..num_qubits {
            for j in (i + 1)..num_qubits {
                gates.push(Gate::ControlledNot {
                    control: i,
                    target: j,
                });
                gates.push(Gate::Phase {
                    target: j,
                    angle: AngleExpr::ZzProduct { i, j, scale: 2.0 },
                });
                gates.push(Gate::ControlledNot {
                    control: i,
                    target: j,
                });
            }
        }
    }
    FeatureMapCircuit::new(num_qubits, num_qubits, repetitions, gates)
}

/// Complex amplitude vector of dimension 2^N. Gate application preserves the
/// unit norm up to round-off.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    amplitudes: Vec<Complex64>,
    num_qubits: usize,
}

impl Statevector {
    /// The all-zeros basis state |0...0>.
    pub fn zero(num_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::ZERO; 1 << num_qubits];
        amplitudes[0] = Complex64::ONE;
        Statevector {
            amplitudes,
            num_qubits,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Inner product <self|other>.
    pub fn inner(&self, other: &Statevector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn apply_hadamard(&mut self, target: usize) {
        let mask = 1usize << target;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for base in 0..self.amplitudes.len() {
            if base & mask == 0 {
                let pair = base | mask;
                let lo = self.amplitudes[base];
                let hi = self.amplitudes[pair];
                self.amplitudes[base] = (lo + hi) * inv_sqrt2;
                self.amplitudes[pair] = (lo - hi) * inv_sqrt2;
            }
        }
    }

    fn apply_phase(&mut self, target: usize, angle: f64) {
        let mask = 1usize << target;
        let phase = Complex64::from_polar(1.0, angle);
        for (index, amp) in self.amplitudes.iter_mut().enumerate() {
            if index & mask != 0 {
                *amp *= phase;
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for base in 0..self.amplitudes.len() {
            if base & cmask != 0 && base & tmask == 0 {
                self.amplitudes.swap(base, base | tmask);
            }
        }
    }
}

/// |<psi(a), psi(b)>|^2 from two prepared states, clamped to [0, 1] against
/// round-off.
pub fn fidelity_from_states(a: &Statevector, b: &Statevector) -> f64 {
    a.inner(b).norm_sqr().clamp(0.0, 1.0)
}

/// Exact fidelity probability |<0|U†(a)U(b)|0>|^2.
pub fn fidelity_exact(circuit: &FeatureMapCircuit, a: &[f64], b: &[f64]) -> Result<f64> {
    let sa = circuit.evolve(a)?;
    let sb = circuit.evolve(b)?;
    Ok(fidelity_from_states(&sa, &sb))
}

/// Shot-sampled fidelity estimate: the fraction of all-zero outcomes when
/// measuring the compute-uncompute circuit `shots` times, simulated as a
/// single binomial draw from the exact probability.
pub fn fidelity_sampled(
    circuit: &FeatureMapCircuit,
    a: &[f64],
    b: &[f64],
    shots: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let p = fidelity_exact(circuit, a, b)?;
    sample_probability(p, shots, rng)
}

/// Binomial(shots, p) / shots for a success probability already in [0, 1].
pub(crate) fn sample_probability(p: f64, shots: u64, rng: &mut ChaCha8Rng) -> Result<f64> {
    if shots == 0 {
        return Err(Error::config("shots must be at least 1"));
    }
    let dist = Binomial::new(shots, p)
        .map_err(|e| Error::numerical(format!("invalid success probability {p}: {e}")))?;
    Ok(dist.sample(rng) as f64 / shots as f64)
}
