//! One iteration of the kicked-rotator map `U = U_k U_T`, with
//! `U_T = exp(-i T n^2 / 2)` diagonal in momentum and `U_k = exp(-i k cos theta)`
//! diagonal in phase.
//!
//! The phase grid is `theta_j = 2 pi j / N`. Because momenta are shifted by
//! `-N/2`, the phase-representation amplitude picks up a `(-1)^j` twiddle on
//! top of a plain unitary DFT:
//!
//! ```text
//! phi_j = (-1)^j / sqrt(N) * sum_j' psi_j' exp(+2 pi i j j' / N)
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::circuit;
use crate::error::Result;
use crate::qstate::{dimension, index_to_momentum, MapParams, QuantumState, Representation};

/// Which kernel realizes one map iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvolutionBackend {
    #[default]
    DirectDft,
    GateCircuit,
}

/// Sign convention of a bare unitary DFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DftSign {
    /// `exp(+2 pi i j j' / N)`, the textbook QFT.
    Positive,
    /// `exp(-2 pi i j j' / N)`.
    Negative,
}

/// Free-rotation factor `exp(-i T n^2 / 2)`.
pub fn rotation_factor(n: i64, period: f64) -> Complex64 {
    let n = n as f64;
    Complex64::from_polar(1.0, -period * n * n / 2.0)
}

/// Kick factor `exp(-i k cos theta_j)` on the grid point `theta_j = 2 pi j / N`.
pub fn kick_factor(j: usize, dim: usize, k: f64) -> Complex64 {
    let theta = 2.0 * PI * j as f64 / dim as f64;
    Complex64::from_polar(1.0, -k * theta.cos())
}

/// Bare unitary DFT with `1/sqrt(N)` normalization, in place.
pub fn unitary_dft(amplitudes: &mut [Complex64], sign: DftSign) {
    let dim = amplitudes.len();
    let direction = match sign {
        DftSign::Positive => FftDirection::Inverse,
        DftSign::Negative => FftDirection::Forward,
    };
    FftPlanner::new()
        .plan_fft(dim, direction)
        .process(amplitudes);
    let scale = 1.0 / (dim as f64).sqrt();
    amplitudes.iter_mut().for_each(|a| *a *= scale);
}

fn alternate_signs(amplitudes: &mut [Complex64]) {
    amplitudes
        .iter_mut()
        .skip(1)
        .step_by(2)
        .for_each(|a| *a = -*a);
}

pub fn apply_rotation(mut state: QuantumState, period: f64) -> Result<QuantumState> {
    state.require(Representation::Momentum)?;
    let n_qubits = state.n_qubits();
    for (j, a) in state.amplitudes_mut().iter_mut().enumerate() {
        *a *= rotation_factor(index_to_momentum(j, n_qubits)?, period);
    }
    Ok(state)
}

pub fn to_phase_representation(mut state: QuantumState) -> Result<QuantumState> {
    state.require(Representation::Momentum)?;
    let amps = state.amplitudes_mut();
    unitary_dft(amps, DftSign::Positive);
    alternate_signs(amps);
    state.set_representation(Representation::Phase);
    Ok(state)
}

pub fn to_momentum_representation(mut state: QuantumState) -> Result<QuantumState> {
    state.require(Representation::Phase)?;
    let amps = state.amplitudes_mut();
    alternate_signs(amps);
    unitary_dft(amps, DftSign::Negative);
    state.set_representation(Representation::Momentum);
    Ok(state)
}

pub fn apply_kick(mut state: QuantumState, k: f64) -> Result<QuantumState> {
    state.require(Representation::Phase)?;
    let dim = state.dimension();
    for (j, a) in state.amplitudes_mut().iter_mut().enumerate() {
        *a *= kick_factor(j, dim, k);
    }
    Ok(state)
}

/// One map iteration on a momentum-representation state.
pub fn step(
    state: QuantumState,
    params: &MapParams,
    backend: EvolutionBackend,
) -> Result<QuantumState> {
    state.require(Representation::Momentum)?;
    check_size(&state, params)?;
    match backend {
        EvolutionBackend::DirectDft => Propagator::new(params).step(state),
        EvolutionBackend::GateCircuit => circuit::circuit_step(state, params).map(|(s, _)| s),
    }
}

fn check_size(state: &QuantumState, params: &MapParams) -> Result<()> {
    if state.n_qubits() != params.n_qubits {
        return Err(crate::Error::Domain(format!(
            "state has {} qubits but the map expects {}",
            state.n_qubits(),
            params.n_qubits
        )));
    }
    Ok(())
}

/// Precomputed direct-DFT map iteration for fixed parameters.
///
/// The two `(-1)^j` twiddles around the kick cancel, and both `1/sqrt(N)`
/// normalizations are folded into the kick table, so a step is
/// two diagonal multiplies and two FFTs.
#[derive(Clone)]
pub struct Propagator {
    params: MapParams,
    rotation: Vec<Complex64>,
    kick: Vec<Complex64>,
    to_phase: Arc<dyn Fft<f64>>,
    to_momentum: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("params", &self.params)
            .finish()
    }
}

impl Propagator {
    pub fn new(params: &MapParams) -> Self {
        let dim = dimension(params.n_qubits);
        let half = (dim / 2) as i64;
        let rotation = (0..dim)
            .map(|j| rotation_factor(j as i64 - half, params.period))
            .collect();
        let scale = 1.0 / dim as f64;
        let kick = (0..dim)
            .map(|j| kick_factor(j, dim, params.k) * scale)
            .collect();
        let mut planner = FftPlanner::new();
        Self {
            params: *params,
            rotation,
            kick,
            to_phase: planner.plan_fft_inverse(dim),
            to_momentum: planner.plan_fft_forward(dim),
        }
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn scratch_len(&self) -> usize {
        self.to_phase
            .get_inplace_scratch_len()
            .max(self.to_momentum.get_inplace_scratch_len())
    }

    pub fn make_scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len()]
    }

    /// Advances raw momentum amplitudes by one iteration.
    pub fn step_in_place(&self, amplitudes: &mut [Complex64], scratch: &mut [Complex64]) {
        debug_assert_eq!(amplitudes.len(), self.rotation.len());
        for (a, r) in amplitudes.iter_mut().zip(&self.rotation) {
            *a *= r;
        }
        self.to_phase.process_with_scratch(amplitudes, scratch);
        for (a, q) in amplitudes.iter_mut().zip(&self.kick) {
            *a *= q;
        }
        self.to_momentum.process_with_scratch(amplitudes, scratch);
    }

    pub fn step(&self, mut state: QuantumState) -> Result<QuantumState> {
        state.require(Representation::Momentum)?;
        check_size(&state, &self.params)?;
        let mut scratch = self.make_scratch();
        self.step_in_place(state.amplitudes_mut(), &mut scratch);
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::random_state;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn rotation_examples() {
        let s = random_state(5, 1);
        let same = apply_rotation(s.clone(), 0.0).unwrap();
        assert!(s.distance(&same) < 1e-15);

        let rotated = apply_rotation(s.clone(), 1.7).unwrap();
        let zero = 16; // n = 0
        assert_eq!(rotated.amplitudes()[zero], s.amplitudes()[zero]);

        let two = 18; // n = 2
        let expected = s.amplitudes()[two] * Complex64::from_polar(1.0, -4.0);
        assert!(close(
            apply_rotation(s, 2.0).unwrap().amplitudes()[two],
            expected,
            1e-15
        ));
    }

    #[test]
    fn representation_errors() {
        let s = QuantumState::initial(4, 0).unwrap();
        assert!(apply_kick(s.clone(), 1.0).is_err());
        assert!(to_momentum_representation(s.clone()).is_err());
        let phase = to_phase_representation(s).unwrap();
        assert!(apply_rotation(phase.clone(), 1.0).is_err());
        assert!(to_phase_representation(phase.clone()).is_err());
        assert!(step(
            phase,
            &MapParams::new(1.0, 1.0, 4).unwrap(),
            EvolutionBackend::DirectDft
        )
        .is_err());
    }

    #[test]
    fn delta_transforms_to_flat_phase_profile() {
        for n0 in [-8, -3, 0, 5] {
            let s = QuantumState::initial(4, n0).unwrap();
            let phase = to_phase_representation(s).unwrap();
            assert_eq!(phase.representation(), Representation::Phase);
            for a in phase.amplitudes() {
                assert!((a.norm() - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_phase_state_is_a_momentum_delta() {
        let amps = vec![Complex64::new(0.25, 0.0); 16];
        let s = QuantumState::from_amplitudes(4, amps, Representation::Phase).unwrap();
        let m = to_momentum_representation(s).unwrap();
        // theta-independent profile is the n = 0 eigenstate (index N/2).
        for (j, a) in m.amplitudes().iter().enumerate() {
            let expected = if j == 8 { 1.0 } else { 0.0 };
            assert!((a.norm() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn phase_amplitude_matches_fourier_sum() {
        let s = random_state(4, 9);
        let phase = to_phase_representation(s.clone()).unwrap();
        let dim = 16;
        for j in 0..dim {
            let theta = 2.0 * PI * j as f64 / dim as f64;
            let direct: Complex64 = s
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(jj, a)| {
                    let n = jj as f64 - 8.0;
                    a * Complex64::from_polar(1.0, n * theta)
                })
                .sum::<Complex64>()
                / 4.0;
            assert!(close(phase.amplitudes()[j], direct, 1e-13));
        }
    }

    #[test]
    fn transforms_round_trip() {
        for n_qubits in 2..=10 {
            let s = random_state(n_qubits, 40 + n_qubits as u64);
            let back =
                to_momentum_representation(to_phase_representation(s.clone()).unwrap()).unwrap();
            assert!(s.distance(&back) < 1e-12);
        }
    }

    #[test]
    fn zero_kick_is_identity() {
        let s = to_phase_representation(random_state(6, 3)).unwrap();
        let kicked = apply_kick(s.clone(), 0.0).unwrap();
        assert!(s.distance(&kicked) < 1e-15);
        let kicked = apply_kick(s, 3.3).unwrap();
        assert!((kicked.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn propagator_matches_composed_operations() {
        let params = MapParams::new(2.5, 1.3, 8).unwrap();
        let s = random_state(8, 77);
        let composed = to_momentum_representation(
            apply_kick(
                to_phase_representation(apply_rotation(s.clone(), 1.3).unwrap()).unwrap(),
                2.5,
            )
            .unwrap(),
        )
        .unwrap();
        let fast = Propagator::new(&params).step(s).unwrap();
        assert!(composed.distance(&fast) < 1e-12);
    }

    #[test]
    fn zero_kick_keeps_momentum_distribution() {
        let params = MapParams::new(0.0, 2.0, 6).unwrap();
        let mut s = QuantumState::initial(6, 3).unwrap();
        let p0 = s.probabilities();
        for _ in 0..10 {
            s = step(s, &params, EvolutionBackend::DirectDft).unwrap();
            for (a, b) in s.probabilities().iter().zip(&p0) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn step_preserves_norm() {
        let params = MapParams::new(5.0, 2.0, 10).unwrap();
        let prop = Propagator::new(&params);
        let mut s = QuantumState::initial(10, 0).unwrap();
        for _ in 0..200 {
            s = prop.step(s).unwrap();
            assert!((s.norm_squared() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parity_symmetry_without_measurement() {
        let params = MapParams::new(2.0, 2.0, 8).unwrap();
        let prop = Propagator::new(&params);
        let mut s = QuantumState::initial(8, 0).unwrap();
        for _ in 0..100 {
            s = prop.step(s).unwrap();
            let p = s.probabilities();
            for n in 1..127usize {
                assert!((p[128 + n] - p[128 - n]).abs() < 1e-12);
            }
        }
    }
}
