//! Projective measurement of a single qubit after each map iteration.
//!
//! `P_a(m)` keeps the basis states whose qubit `m` equals `a`. Each subspace is
//! `N/2` states made of `2^{m-1}` cells of `L = 2^{n_q - m}` consecutive
//! momenta. Three realizations are provided: sampled quantum trajectories,
//! random relative phases between the two subspaces, and (in
//! [`crate::density`]) the exact density-matrix channel.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{
    dimension, qubit_position, MapParams, ProjectedState, QuantumState, Representation,
    BRANCH_THRESHOLD,
};
use crate::rotator::Propagator;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementBackend {
    #[default]
    Trajectories,
    RandomPhase,
    DensityMatrix,
    NoMeasurement,
}

impl MeasurementBackend {
    pub fn name(self) -> &'static str {
        match self {
            MeasurementBackend::Trajectories => "trajectories",
            MeasurementBackend::RandomPhase => "random-phase",
            MeasurementBackend::DensityMatrix => "density-matrix",
            MeasurementBackend::NoMeasurement => "none",
        }
    }
}

impl fmt::Display for MeasurementBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasurementBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "trajectories" => Ok(MeasurementBackend::Trajectories),
            "random-phase" => Ok(MeasurementBackend::RandomPhase),
            "density-matrix" => Ok(MeasurementBackend::DensityMatrix),
            "none" => Ok(MeasurementBackend::NoMeasurement),
            other => Err(Error::Config(format!("unknown backend '{other}'"))),
        }
    }
}

/// Which qubit is measured every iteration, and how.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub qubit: Option<u32>,
    pub backend: MeasurementBackend,
}

impl MeasurementSpec {
    pub fn none() -> Self {
        Self {
            qubit: None,
            backend: MeasurementBackend::NoMeasurement,
        }
    }

    pub fn new(qubit: u32, backend: MeasurementBackend) -> Self {
        if backend == MeasurementBackend::NoMeasurement {
            return Self::none();
        }
        Self {
            qubit: Some(qubit),
            backend,
        }
    }

    /// A density-matrix run without measurement is allowed (`qubit = None`).
    pub fn validate(&self, n_qubits: u32) -> Result<()> {
        match (self.backend, self.qubit) {
            (MeasurementBackend::NoMeasurement, Some(_)) => Err(Error::Config(
                "a measured qubit was given with the 'none' backend".into(),
            )),
            (MeasurementBackend::NoMeasurement | MeasurementBackend::DensityMatrix, None) => Ok(()),
            (_, None) => Err(Error::Config(format!(
                "backend '{}' needs a measured qubit",
                self.backend
            ))),
            (_, Some(m)) => qubit_position(m, n_qubits).map(|_| ()),
        }
    }

    /// Cell length `L = 2^{n_q - m}`.
    pub fn cell_length(&self, n_qubits: u32) -> Option<usize> {
        self.qubit.map(|m| 1usize << (n_qubits - m))
    }

    /// Number of cells `2^{m-1}` making up each projector subspace.
    pub fn cell_count(&self) -> Option<usize> {
        self.qubit.map(|m| 1usize << (m - 1))
    }

    pub fn subspace_dimension(n_qubits: u32) -> usize {
        dimension(n_qubits) / 2
    }
}

fn qubit_mask(m: u32, n_qubits: u32) -> Result<usize> {
    Ok(1usize << qubit_position(m, n_qubits)?)
}

/// Index ranges spanned by the subspace `a_m = outcome`, in increasing order.
pub fn subspace_cells(n_qubits: u32, m: u32, outcome: u8) -> Result<Vec<Range<usize>>> {
    let mask = qubit_mask(m, n_qubits)?;
    let len = mask;
    let first = if outcome == 0 { 0 } else { len };
    Ok((0..1usize << (m - 1))
        .map(|c| {
            let start = c * 2 * len + first;
            start..start + len
        })
        .collect())
}

/// `P_outcome(m) psi` with its weight.
pub fn project(state: &QuantumState, m: u32, outcome: u8) -> Result<ProjectedState> {
    state.require(Representation::Momentum)?;
    let mask = qubit_mask(m, state.n_qubits())?;
    let want = if outcome == 0 { 0 } else { mask };
    let amplitudes = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            if j & mask == want {
                a
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    ProjectedState::new(state.n_qubits(), amplitudes)
}

/// Weight `||P_0(m) psi||^2` and `||P_1(m) psi||^2` of raw amplitudes.
pub(crate) fn branch_weights(amplitudes: &[Complex64], mask: usize) -> (f64, f64) {
    let mut w = [0.0f64; 2];
    for (j, a) in amplitudes.iter().enumerate() {
        w[(j & mask != 0) as usize] += a.norm_sqr();
    }
    (w[0], w[1])
}

/// Born-rule collapse of raw amplitudes onto one branch, renormalized.
pub(crate) fn collapse_in_place<R: Rng + ?Sized>(
    amplitudes: &mut [Complex64],
    mask: usize,
    rng: &mut R,
) -> Result<u8> {
    let (p0, p1) = branch_weights(amplitudes, mask);
    let total = p0 + p1;
    if !(p0 > BRANCH_THRESHOLD || p1 > BRANCH_THRESHOLD) || !total.is_finite() {
        return Err(Error::NumericalCorruption(format!(
            "both measurement branches vanish (p0 = {p0:e}, p1 = {p1:e})"
        )));
    }
    let u: f64 = rng.gen();
    let outcome = if u * total < p0 { 0u8 } else { 1u8 };
    let weight = if outcome == 0 { p0 } else { p1 };
    let scale = 1.0 / weight.sqrt();
    let keep = if outcome == 0 { 0 } else { mask };
    for (j, a) in amplitudes.iter_mut().enumerate() {
        if j & mask == keep {
            *a *= scale;
        } else {
            *a = Complex64::new(0.0, 0.0);
        }
    }
    Ok(outcome)
}

/// Independent uniform phases on the two subspaces.
pub(crate) fn random_phase_in_place<R: Rng + ?Sized>(
    amplitudes: &mut [Complex64],
    mask: usize,
    rng: &mut R,
) {
    let beta0 = 2.0 * PI * rng.gen::<f64>();
    let beta1 = 2.0 * PI * rng.gen::<f64>();
    let f0 = Complex64::from_polar(1.0, beta0);
    let f1 = Complex64::from_polar(1.0, beta1);
    for (j, a) in amplitudes.iter_mut().enumerate() {
        *a *= if j & mask == 0 { f0 } else { f1 };
    }
}

/// Samples an outcome of qubit `m` and returns the collapsed, renormalized state.
pub fn measure_trajectory<R: Rng + ?Sized>(
    mut state: QuantumState,
    m: u32,
    rng: &mut R,
) -> Result<(u8, QuantumState)> {
    state.require(Representation::Momentum)?;
    let mask = qubit_mask(m, state.n_qubits())?;
    let outcome = collapse_in_place(state.amplitudes_mut(), mask, rng)?;
    Ok((outcome, state))
}

/// Replaces `psi` by `e^{i b0} P_0(m) psi + e^{i b1} P_1(m) psi`.
pub fn apply_random_phase<R: Rng + ?Sized>(
    mut state: QuantumState,
    m: u32,
    rng: &mut R,
) -> Result<QuantumState> {
    state.require(Representation::Momentum)?;
    let mask = qubit_mask(m, state.n_qubits())?;
    random_phase_in_place(state.amplitudes_mut(), mask, rng);
    Ok(state)
}

/// Applies the per-iteration measurement action of `spec` to raw amplitudes.
/// Returns the sampled outcome for trajectory runs.
pub(crate) fn measure_in_place<R: Rng + ?Sized>(
    amplitudes: &mut [Complex64],
    n_qubits: u32,
    spec: &MeasurementSpec,
    rng: &mut R,
) -> Result<Option<u8>> {
    match (spec.backend, spec.qubit) {
        (MeasurementBackend::NoMeasurement, _) => Ok(None),
        (MeasurementBackend::Trajectories, Some(m)) => {
            collapse_in_place(amplitudes, qubit_mask(m, n_qubits)?, rng).map(Some)
        }
        (MeasurementBackend::RandomPhase, Some(m)) => {
            random_phase_in_place(amplitudes, qubit_mask(m, n_qubits)?, rng);
            Ok(None)
        }
        (MeasurementBackend::DensityMatrix, _) => Err(Error::Domain(
            "the density-matrix backend does not act on pure states".into(),
        )),
        (_, None) => Err(Error::Config("measured qubit missing".into())),
    }
}

/// One map iteration followed by the measurement action of `spec`.
pub fn measured_step<R: Rng + ?Sized>(
    state: QuantumState,
    params: &MapParams,
    spec: &MeasurementSpec,
    rng: &mut R,
) -> Result<QuantumState> {
    measured_step_with(&Propagator::new(params), state, spec, rng)
}

pub fn measured_step_with<R: Rng + ?Sized>(
    propagator: &Propagator,
    state: QuantumState,
    spec: &MeasurementSpec,
    rng: &mut R,
) -> Result<QuantumState> {
    spec.validate(state.n_qubits())?;
    let mut state = propagator.step(state)?;
    let n_qubits = state.n_qubits();
    measure_in_place(state.amplitudes_mut(), n_qubits, spec, rng)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{index_to_momentum, qubit_bit};
    use crate::rng::RngStream;
    use crate::test_support::random_state;

    fn basis_superposition(n_qubits: u32, js: &[usize]) -> QuantumState {
        let mut amps = vec![Complex64::new(0.0, 0.0); dimension(n_qubits)];
        let c = 1.0 / (js.len() as f64).sqrt();
        for &j in js {
            amps[j] = Complex64::new(c, 0.0);
        }
        QuantumState::from_amplitudes(n_qubits, amps, Representation::Momentum).unwrap()
    }

    #[test]
    fn most_significant_qubit_splits_negative_momenta() {
        let s = random_state(10, 5);
        let p = project(&s, 1, 0).unwrap();
        for (j, a) in p.amplitudes().iter().enumerate() {
            let n = index_to_momentum(j, 10).unwrap();
            if n < 0 {
                assert_eq!(*a, s.amplitudes()[j]);
            } else {
                assert_eq!(a.norm(), 0.0);
            }
        }
    }

    #[test]
    fn least_significant_qubit_splits_even_and_odd() {
        let s = random_state(6, 6);
        let p = project(&s, 6, 0).unwrap();
        for (j, a) in p.amplitudes().iter().enumerate() {
            if j % 2 == 1 {
                assert_eq!(a.norm(), 0.0);
            } else {
                assert_eq!(*a, s.amplitudes()[j]);
            }
        }
    }

    #[test]
    fn empty_branch_has_zero_weight() {
        let s = basis_superposition(4, &[0, 1, 2]); // all have a_1 = 0
        assert_eq!(project(&s, 1, 1).unwrap().weight(), 0.0);
    }

    #[test]
    fn completeness_and_orthogonality() {
        for n_qubits in 2..=8 {
            let s = random_state(n_qubits, 30 + n_qubits as u64);
            for m in 1..=n_qubits {
                let p0 = project(&s, m, 0).unwrap();
                let p1 = project(&s, m, 1).unwrap();
                assert!((p0.weight() + p1.weight() - 1.0).abs() < 1e-12);
                let p0_state = QuantumState::from_parts_unchecked(
                    n_qubits,
                    p0.amplitudes().to_vec(),
                    Representation::Momentum,
                );
                assert_eq!(project(&p0_state, m, 1).unwrap().weight(), 0.0);
                let r = p0.renormalize().unwrap();
                assert!((r.norm_squared() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cell_structure_matches_bit_definition() {
        for n_qubits in 2..=12u32 {
            for m in 1..=n_qubits {
                let spec = MeasurementSpec::new(m, MeasurementBackend::Trajectories);
                for outcome in [0u8, 1] {
                    let cells = subspace_cells(n_qubits, m, outcome).unwrap();
                    assert_eq!(cells.len(), spec.cell_count().unwrap());
                    let mut members = vec![false; dimension(n_qubits)];
                    for c in &cells {
                        assert_eq!(c.len(), spec.cell_length(n_qubits).unwrap());
                        for j in c.clone() {
                            members[j] = true;
                        }
                    }
                    let size = members.iter().filter(|&&b| b).count();
                    assert_eq!(size, MeasurementSpec::subspace_dimension(n_qubits));
                    for (j, &inside) in members.iter().enumerate() {
                        assert_eq!(inside, qubit_bit(j, m, n_qubits).unwrap() == outcome);
                    }
                }
            }
        }
    }

    #[test]
    fn certain_outcome_leaves_state_unchanged() {
        let s = basis_superposition(4, &[1, 3]); // a_4 = 1 for both
        for step in 0..20 {
            let mut rng = RngStream::new(3, 0).at_step(step);
            let (outcome, after) = measure_trajectory(s.clone(), 4, &mut rng).unwrap();
            assert_eq!(outcome, 1);
            assert!(after.distance(&s) < 1e-15);
        }
    }

    #[test]
    fn equal_superposition_gives_fair_coin() {
        let s = basis_superposition(4, &[2, 3]);
        let draws = 20_000u64;
        let zeros = (0..draws)
            .filter(|&i| {
                let mut rng = RngStream::new(11, i).at_step(0);
                measure_trajectory(s.clone(), 4, &mut rng).unwrap().0 == 0
            })
            .count() as f64;
        let sigma = (0.25 / draws as f64).sqrt();
        assert!((zeros / draws as f64 - 0.5).abs() < 4.0 * sigma);
    }

    #[test]
    fn random_phase_keeps_probabilities() {
        let s = random_state(7, 12);
        for m in 1..=7 {
            let mut rng = RngStream::new(1, m as u64).at_step(0);
            let after = apply_random_phase(s.clone(), m, &mut rng).unwrap();
            assert_eq!(after.probabilities().len(), s.probabilities().len());
            for (a, b) in after.probabilities().iter().zip(s.probabilities()) {
                assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.max(1e-300));
            }
        }
    }

    #[test]
    fn random_phase_on_one_subspace_is_global_phase() {
        let s = basis_superposition(5, &[0, 4, 8]); // a_5 = 0 everywhere
        let mut rng = RngStream::new(2, 0).at_step(0);
        let after = apply_random_phase(s.clone(), 5, &mut rng).unwrap();
        assert!((after.overlap(&s) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_phase_average_kills_cross_blocks() {
        let s = random_state(4, 21);
        let m = 2;
        let mask = 1usize << (4 - m);
        let draws = 10_000u64;
        let mut sum = vec![Complex64::new(0.0, 0.0); 16 * 16];
        for i in 0..draws {
            let mut rng = RngStream::new(5, 0).at_step(i);
            let a = apply_random_phase(s.clone(), m, &mut rng).unwrap();
            let amps = a.amplitudes();
            for r in 0..16 {
                for c in 0..16 {
                    sum[r * 16 + c] += amps[r] * amps[c].conj();
                }
            }
        }
        let bound = 3.0 / (draws as f64).sqrt();
        for r in 0..16 {
            for c in 0..16 {
                let mean = sum[r * 16 + c] / draws as f64;
                let same_block = (r & mask == 0) == (c & mask == 0);
                if same_block {
                    let exact = s.amplitudes()[r] * s.amplitudes()[c].conj();
                    assert!((mean - exact).norm() < 1e-12);
                } else {
                    assert!(mean.norm() < bound, "entry ({r},{c}) = {mean}");
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(MeasurementSpec::new(0, MeasurementBackend::Trajectories)
            .validate(4)
            .is_err());
        assert!(MeasurementSpec::new(5, MeasurementBackend::RandomPhase)
            .validate(4)
            .is_err());
        assert!(MeasurementSpec::new(4, MeasurementBackend::RandomPhase)
            .validate(4)
            .is_ok());
        assert!(MeasurementSpec::none().validate(4).is_ok());
        let spec = MeasurementSpec::new(3, MeasurementBackend::Trajectories);
        assert_eq!(spec.cell_length(10), Some(128));
        assert_eq!(spec.cell_count(), Some(4));
        assert_eq!(
            "random-phase".parse::<MeasurementBackend>().unwrap(),
            MeasurementBackend::RandomPhase
        );
        assert!("bogus".parse::<MeasurementBackend>().is_err());
    }

    #[test]
    fn no_measurement_reduces_to_plain_step() {
        let params = MapParams::new(2.0, 2.0, 8).unwrap();
        let s = random_state(8, 4);
        let mut rng = RngStream::new(0, 0).at_step(0);
        let a = measured_step(s.clone(), &params, &MeasurementSpec::none(), &mut rng).unwrap();
        let b = Propagator::new(&params).step(s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_state_is_reported() {
        let mut amps = vec![Complex64::new(0.0, 0.0); 4];
        let mut rng = RngStream::new(0, 0).at_step(0);
        assert!(matches!(
            collapse_in_place(&mut amps, 1, &mut rng),
            Err(Error::NumericalCorruption(_))
        ));
    }
}
