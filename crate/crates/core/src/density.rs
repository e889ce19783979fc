//! Exact density-matrix evolution of the measured map,
//! `rho -> sum_a P_a U rho U^dagger P_a`, for small registers.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qstate::{dimension, qubit_position, MapParams, QuantumState, Representation};
use crate::rotator::Propagator;

/// Largest register the dense oracle accepts.
pub const MAX_ORACLE_QUBITS: u32 = 8;

/// Dense `N x N` density matrix in the momentum basis, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: u32,
    rho: Vec<Complex64>,
}

fn check_capacity(n_qubits: u32) -> Result<()> {
    if n_qubits > MAX_ORACLE_QUBITS {
        return Err(Error::Capacity(format!(
            "density-matrix oracle supports at most {MAX_ORACLE_QUBITS} qubits, got {n_qubits}"
        )));
    }
    Ok(())
}

impl DensityMatrix {
    pub fn from_pure(state: &QuantumState) -> Result<Self> {
        state.require(Representation::Momentum)?;
        check_capacity(state.n_qubits())?;
        let amps = state.amplitudes();
        let dim = amps.len();
        let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                rho[r * dim + c] = amps[r] * amps[c].conj();
            }
        }
        Ok(Self {
            n_qubits: state.n_qubits(),
            rho,
        })
    }

    pub fn from_entries(n_qubits: u32, rho: Vec<Complex64>) -> Result<Self> {
        check_capacity(n_qubits)?;
        let dim = dimension(n_qubits);
        if rho.len() != dim * dim {
            return Err(Error::Domain(format!(
                "expected {} entries, got {}",
                dim * dim,
                rho.len()
            )));
        }
        Ok(Self { n_qubits, rho })
    }

    pub fn n_qubits(&self) -> u32 {
        self.n_qubits
    }

    pub fn dimension(&self) -> usize {
        dimension(self.n_qubits)
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.rho[r * self.dimension() + c]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.rho
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dimension()).map(|i| self.get(i, i)).sum()
    }

    /// Populations `rho_nn` in index order.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dimension()).map(|i| self.get(i, i).re).collect()
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        let dim = self.dimension();
        let mut err = 0.0f64;
        for r in 0..dim {
            for c in r..dim {
                err = err.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        err
    }

    /// True when every eigenvalue is at least `-tol`: Cholesky of `rho + tol I`
    /// succeeds.
    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        let dim = self.dimension();
        let mut l = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                if i == j {
                    sum += tol;
                }
                for k in 0..j {
                    sum -= l[i * dim + k] * l[j * dim + k].conj();
                }
                if i == j {
                    if sum.re.is_nan() || sum.re <= 0.0 {
                        return false;
                    }
                    l[i * dim + i] = Complex64::new(sum.re.sqrt(), 0.0);
                } else {
                    l[i * dim + j] = sum / l[j * dim + j].re;
                }
            }
        }
        true
    }

    /// `U rho U^dagger` using the direct-DFT propagator on columns.
    fn conjugate_by_map(&mut self, propagator: &Propagator) {
        let dim = self.dimension();
        let mut scratch = propagator.make_scratch();
        let mut column = vec![Complex64::new(0.0, 0.0); dim];
        let mut half = vec![Complex64::new(0.0, 0.0); dim * dim];
        // half = U rho, column by column.
        for c in 0..dim {
            for (r, x) in column.iter_mut().enumerate() {
                *x = self.rho[r * dim + c];
            }
            propagator.step_in_place(&mut column, &mut scratch);
            for r in 0..dim {
                half[r * dim + c] = column[r];
            }
        }
        // (U rho)^dagger = rho U^dagger, so U (U rho)^dagger = U rho U^dagger.
        for c in 0..dim {
            for (r, x) in column.iter_mut().enumerate() {
                *x = half[c * dim + r].conj();
            }
            propagator.step_in_place(&mut column, &mut scratch);
            for (r, x) in column.iter().enumerate() {
                self.rho[r * dim + c] = *x;
            }
        }
    }

    /// `P_0 rho P_0 + P_1 rho P_1`: drops coherences between the two subspaces.
    fn dephase(&mut self, m: u32) -> Result<()> {
        let dim = self.dimension();
        let mask = 1usize << qubit_position(m, self.n_qubits)?;
        for r in 0..dim {
            for c in 0..dim {
                if (r ^ c) & mask != 0 {
                    self.rho[r * dim + c] = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(())
    }
}

/// One measured map iteration of the density matrix. `m = None` is plain
/// unitary evolution.
pub fn evolve_density_matrix(
    rho: DensityMatrix,
    params: &MapParams,
    m: Option<u32>,
) -> Result<DensityMatrix> {
    evolve_density_matrix_with(&Propagator::new(params), rho, m)
}

pub fn evolve_density_matrix_with(
    propagator: &Propagator,
    mut rho: DensityMatrix,
    m: Option<u32>,
) -> Result<DensityMatrix> {
    check_capacity(propagator.params().n_qubits)?;
    if rho.n_qubits != propagator.params().n_qubits {
        return Err(Error::Domain(
            "density matrix and map disagree on the qubit count".into(),
        ));
    }
    if let Some(m) = m {
        qubit_position(m, rho.n_qubits)?;
    }
    rho.conjugate_by_map(propagator);
    if let Some(m) = m {
        rho.dephase(m)?;
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::random_state;

    fn check_invariants(rho: &DensityMatrix) {
        assert!(rho.max_hermiticity_error() < 1e-12);
        assert!((rho.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        assert!(rho.is_positive_semidefinite(1e-10));
    }

    #[test]
    fn capacity_is_enforced() {
        let s = QuantumState::initial(9, 0).unwrap();
        assert!(matches!(
            DensityMatrix::from_pure(&s),
            Err(Error::Capacity(_))
        ));
        let params = MapParams::new(1.0, 1.0, 9).unwrap();
        let rho = DensityMatrix::from_pure(&QuantumState::initial(4, 0).unwrap()).unwrap();
        assert!(matches!(
            evolve_density_matrix(rho, &params, Some(1)),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn pure_state_unitary_evolution_matches_state_vector() {
        let params = MapParams::new(2.0, 2.0, 5).unwrap();
        let prop = Propagator::new(&params);
        let mut s = random_state(5, 8);
        let mut rho = DensityMatrix::from_pure(&s).unwrap();
        for _ in 0..5 {
            s = prop.step(s).unwrap();
            rho = evolve_density_matrix_with(&prop, rho, None).unwrap();
        }
        let expected = DensityMatrix::from_pure(&s).unwrap();
        let err = rho
            .entries()
            .iter()
            .zip(expected.entries())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn measured_evolution_keeps_invariants() {
        let params = MapParams::new(2.0, 2.0, 4).unwrap();
        for m in 1..=4 {
            let mut rho = DensityMatrix::from_pure(&QuantumState::initial(4, 0).unwrap()).unwrap();
            for _ in 0..30 {
                let before = rho.trace();
                rho = evolve_density_matrix(rho, &params, Some(m)).unwrap();
                assert!((rho.trace() - before).norm() < 1e-10);
                check_invariants(&rho);
            }
        }
    }

    #[test]
    fn zero_kick_keeps_populations() {
        for m in 1..=4 {
            let params = MapParams::new(0.0, 1.3, 4).unwrap();
            let s = random_state(4, 60 + m as u64);
            let rho = DensityMatrix::from_pure(&s).unwrap();
            let before = rho.diagonal();
            let after = evolve_density_matrix(rho, &params, Some(m)).unwrap();
            for (a, b) in after.diagonal().iter().zip(&before) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_diagonal_state_is_fixed_without_kick() {
        // With k = 0 the map is diagonal, so populations never move; at T = 4 pi
        // the rotation phases 2 pi n^2 are trivial and the whole block-diagonal
        // matrix, coherences included, is a fixed point.
        let m = 2;
        let mut rho = DensityMatrix::from_pure(&random_state(4, 3)).unwrap();
        rho.dephase(m).unwrap();
        let params = MapParams::new(0.0, 4.0 * std::f64::consts::PI, 4).unwrap();
        let after = evolve_density_matrix(rho.clone(), &params, Some(m)).unwrap();
        let err = rho
            .entries()
            .iter()
            .zip(after.entries())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err = {err}");

        let params = MapParams::new(0.0, 2.0, 4).unwrap();
        let after = evolve_density_matrix(rho.clone(), &params, Some(m)).unwrap();
        for (a, b) in after.diagonal().iter().zip(rho.diagonal()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(after.max_hermiticity_error() < 1e-12);
    }

    #[test]
    fn detects_negative_eigenvalue() {
        let mut entries = vec![Complex64::new(0.0, 0.0); 16];
        entries[0] = Complex64::new(1.2, 0.0);
        entries[5] = Complex64::new(-0.2, 0.0);
        let rho = DensityMatrix::from_entries(2, entries).unwrap();
        assert!(!rho.is_positive_semidefinite(1e-10));
    }
}
