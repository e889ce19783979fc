//! Gate-level realization of the map: Hadamard and controlled-phase gates for
//! the QFT, single-qubit and controlled-phase gates for the free rotation.
//!
//! Qubits are 1-based with qubit 1 the most significant bit of the basis index.
//! The kick stays an exact diagonal in the phase representation and is tallied
//! as one diagonal-oracle entry.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qstate::{dimension, MapParams, QuantumState, Representation};
use crate::rotator::kick_factor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    /// Hadamards, single-qubit phase gates and Z gates.
    pub single_qubit: u64,
    pub controlled_phase: u64,
    pub swap: u64,
    pub diagonal_oracle: u64,
    pub total: u64,
}

impl GateCounts {
    fn tally(gates: &[Gate]) -> Self {
        let mut counts = GateCounts::default();
        for g in gates {
            match g {
                Gate::Hadamard(_) | Gate::Phase(..) | Gate::Z(_) => counts.single_qubit += 1,
                Gate::ControlledPhase(..) => counts.controlled_phase += 1,
                Gate::Swap(..) => counts.swap += 1,
            }
        }
        counts.total = counts.single_qubit + counts.controlled_phase + counts.swap;
        counts
    }

    fn oracle() -> Self {
        GateCounts {
            diagonal_oracle: 1,
            total: 1,
            ..Default::default()
        }
    }
}

impl Add for GateCounts {
    type Output = GateCounts;

    fn add(self, rhs: GateCounts) -> GateCounts {
        GateCounts {
            single_qubit: self.single_qubit + rhs.single_qubit,
            controlled_phase: self.controlled_phase + rhs.controlled_phase,
            swap: self.swap + rhs.swap,
            diagonal_oracle: self.diagonal_oracle + rhs.diagonal_oracle,
            total: self.total + rhs.total,
        }
    }
}

impl AddAssign for GateCounts {
    fn add_assign(&mut self, rhs: GateCounts) {
        *self = *self + rhs;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Hadamard(u32),
    /// `diag(1, e^{i phi})` on one qubit.
    Phase(u32, f64),
    Z(u32),
    /// `e^{i phi}` on states where both qubits are 1.
    ControlledPhase(u32, u32, f64),
    Swap(u32, u32),
}

impl Gate {
    fn inverse(self) -> Gate {
        match self {
            Gate::Phase(q, phi) => Gate::Phase(q, -phi),
            Gate::ControlledPhase(a, b, phi) => Gate::ControlledPhase(a, b, -phi),
            other => other,
        }
    }
}

fn bit_mask(qubit: u32, n_qubits: u32) -> usize {
    debug_assert!(qubit >= 1 && qubit <= n_qubits);
    1usize << (n_qubits - qubit)
}

pub fn apply_gate(amplitudes: &mut [Complex64], n_qubits: u32, gate: Gate) {
    match gate {
        Gate::Hadamard(q) => {
            let mask = bit_mask(q, n_qubits);
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for j in 0..amplitudes.len() {
                if j & mask == 0 {
                    let (a, b) = (amplitudes[j], amplitudes[j | mask]);
                    amplitudes[j] = (a + b) * s;
                    amplitudes[j | mask] = (a - b) * s;
                }
            }
        }
        Gate::Phase(q, phi) => {
            let mask = bit_mask(q, n_qubits);
            let f = Complex64::from_polar(1.0, phi);
            for (j, a) in amplitudes.iter_mut().enumerate() {
                if j & mask != 0 {
                    *a *= f;
                }
            }
        }
        Gate::Z(q) => {
            let mask = bit_mask(q, n_qubits);
            for (j, a) in amplitudes.iter_mut().enumerate() {
                if j & mask != 0 {
                    *a = -*a;
                }
            }
        }
        Gate::ControlledPhase(c, t, phi) => {
            let mask = bit_mask(c, n_qubits) | bit_mask(t, n_qubits);
            let f = Complex64::from_polar(1.0, phi);
            for (j, a) in amplitudes.iter_mut().enumerate() {
                if j & mask == mask {
                    *a *= f;
                }
            }
        }
        Gate::Swap(p, q) => {
            let (mp, mq) = (bit_mask(p, n_qubits), bit_mask(q, n_qubits));
            for j in 0..amplitudes.len() {
                if j & mp != 0 && j & mq == 0 {
                    amplitudes.swap(j, (j & !mp) | mq);
                }
            }
        }
    }
}

fn apply_gates(amplitudes: &mut [Complex64], n_qubits: u32, gates: &[Gate]) {
    for &g in gates {
        apply_gate(amplitudes, n_qubits, g);
    }
}

/// Textbook QFT sequence `|x> -> N^{-1/2} sum_y e^{2 pi i x y / N} |y>`, or its inverse.
pub fn qft_gates(n_qubits: u32, inverse: bool) -> Vec<Gate> {
    let mut gates = Vec::new();
    for i in 1..=n_qubits {
        gates.push(Gate::Hadamard(i));
        for j in (i + 1)..=n_qubits {
            let s = j - i + 1;
            gates.push(Gate::ControlledPhase(j, i, 2.0 * PI / (1u64 << s) as f64));
        }
    }
    for i in 1..=n_qubits / 2 {
        gates.push(Gate::Swap(i, n_qubits + 1 - i));
    }
    if inverse {
        gates.reverse();
        gates.iter_mut().for_each(|g| *g = g.inverse());
    }
    gates
}

/// Gate sequence and global phase realizing `exp(-i T n^2 / 2)`.
///
/// With `n = -N/2 + sum_m a_m w_m`, `w_m = 2^{n_q - m}` and `a_m^2 = a_m`:
///
/// ```text
/// n^2 = N^2/4 + sum_m a_m (w_m^2 - N w_m) + 2 sum_{m<m'} a_m a_m' w_m w_m'
/// ```
pub fn rotation_gates(n_qubits: u32, period: f64) -> (Vec<Gate>, f64) {
    let dim = dimension(n_qubits) as f64;
    let weight = |m: u32| (1u64 << (n_qubits - m)) as f64;
    let mut gates = Vec::new();
    for m in 1..=n_qubits {
        let w = weight(m);
        gates.push(Gate::Phase(m, -period * (w * w - dim * w) / 2.0));
    }
    for m in 1..=n_qubits {
        for mm in (m + 1)..=n_qubits {
            gates.push(Gate::ControlledPhase(
                m,
                mm,
                -period * weight(m) * weight(mm),
            ));
        }
    }
    let global = -period * dim * dim / 8.0;
    (gates, global)
}

/// Bare QFT (or inverse) as a gate circuit. Acts on raw amplitudes; the
/// representation tag is left untouched.
pub fn qft_gate_circuit(mut state: QuantumState, inverse: bool) -> (QuantumState, GateCounts) {
    let n_qubits = state.n_qubits();
    let gates = qft_gates(n_qubits, inverse);
    apply_gates(state.amplitudes_mut(), n_qubits, &gates);
    (state, GateCounts::tally(&gates))
}

pub fn rotation_gate_circuit(
    mut state: QuantumState,
    period: f64,
) -> Result<(QuantumState, GateCounts)> {
    state.require(Representation::Momentum)?;
    let n_qubits = state.n_qubits();
    let (gates, global) = rotation_gates(n_qubits, period);
    let amps = state.amplitudes_mut();
    apply_gates(amps, n_qubits, &gates);
    let g = Complex64::from_polar(1.0, global);
    amps.iter_mut().for_each(|a| *a *= g);
    Ok((state, GateCounts::tally(&gates)))
}

/// Momentum to phase representation: QFT followed by `Z` on the least
/// significant qubit, which supplies the `(-1)^j` twiddle.
pub fn to_phase_via_gates(state: QuantumState) -> Result<(QuantumState, GateCounts)> {
    state.require(Representation::Momentum)?;
    let n_qubits = state.n_qubits();
    let (mut state, mut counts) = qft_gate_circuit(state, false);
    let z = [Gate::Z(n_qubits)];
    apply_gates(state.amplitudes_mut(), n_qubits, &z);
    counts += GateCounts::tally(&z);
    state.set_representation(Representation::Phase);
    Ok((state, counts))
}

pub fn to_momentum_via_gates(mut state: QuantumState) -> Result<(QuantumState, GateCounts)> {
    state.require(Representation::Phase)?;
    let n_qubits = state.n_qubits();
    let z = [Gate::Z(n_qubits)];
    apply_gates(state.amplitudes_mut(), n_qubits, &z);
    let (mut state, counts) = qft_gate_circuit(state, true);
    state.set_representation(Representation::Momentum);
    Ok((state, counts + GateCounts::tally(&z)))
}

fn kick_oracle(mut state: QuantumState, k: f64) -> Result<(QuantumState, GateCounts)> {
    state.require(Representation::Phase)?;
    let dim = state.dimension();
    for (j, a) in state.amplitudes_mut().iter_mut().enumerate() {
        *a *= kick_factor(j, dim, k);
    }
    Ok((state, GateCounts::oracle()))
}

/// One map iteration through the gate circuit.
pub fn circuit_step(state: QuantumState, params: &MapParams) -> Result<(QuantumState, GateCounts)> {
    let (state, c1) = rotation_gate_circuit(state, params.period)?;
    let (state, c2) = to_phase_via_gates(state)?;
    let (state, c3) = kick_oracle(state, params.k)?;
    let (state, c4) = to_momentum_via_gates(state)?;
    Ok((state, c1 + c2 + c3 + c4))
}

/// Gate tally of one map iteration, without simulating it.
pub fn step_gate_counts(n_qubits: u32) -> GateCounts {
    let rotation = GateCounts::tally(&rotation_gates(n_qubits, 0.0).0);
    let qft = GateCounts::tally(&qft_gates(n_qubits, false));
    let z = GateCounts::tally(&[Gate::Z(n_qubits)]);
    rotation + qft + z + GateCounts::oracle() + z + qft
}
