//! Wavefunction over the `2^n_q` computational basis of the qubit register.
//!
//! Basis index `j` encodes the rotator momentum as `n = -N/2 + j`. The binary
//! digits of `j` are the qubit values `a_1 .. a_{n_q}`, with `a_1` the most
//! significant bit.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_QUBITS: u32 = 2;
pub const MAX_QUBITS: u32 = 24;

/// Squared branch weight below which a projected branch is treated as impossible.
pub const BRANCH_THRESHOLD: f64 = 1e-30;

/// Tolerance on the unit-norm invariant of an exposed [`QuantumState`].
pub const NORM_TOLERANCE: f64 = 1e-10;

const SNAPSHOT_MAGIC: &[u8; 4] = b"KLST";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    Momentum,
    Phase,
}

impl Representation {
    fn code(self) -> u32 {
        match self {
            Representation::Momentum => 0,
            Representation::Phase => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Representation::Momentum),
            1 => Ok(Representation::Phase),
            other => Err(Error::Format(format!(
                "unknown representation code {other}"
            ))),
        }
    }
}

/// Number of basis states for `n_qubits` qubits.
pub fn dimension(n_qubits: u32) -> usize {
    1usize << n_qubits
}

pub fn check_qubit_count(n_qubits: u32) -> Result<()> {
    if !(MIN_QUBITS..=MAX_QUBITS).contains(&n_qubits) {
        return Err(Error::Domain(format!(
            "qubit count {n_qubits} outside [{MIN_QUBITS}, {MAX_QUBITS}]"
        )));
    }
    Ok(())
}

/// Signed momentum `n = -N/2 + j` of basis index `j`.
pub fn index_to_momentum(j: usize, n_qubits: u32) -> Result<i64> {
    let dim = dimension(n_qubits);
    if j >= dim {
        return Err(Error::Domain(format!("basis index {j} outside [0, {dim})")));
    }
    Ok(j as i64 - (dim / 2) as i64)
}

/// Basis index of signed momentum `n`; inverse of [`index_to_momentum`].
pub fn momentum_to_index(n: i64, n_qubits: u32) -> Result<usize> {
    let half = (dimension(n_qubits) / 2) as i64;
    if n < -half || n >= half {
        return Err(Error::Domain(format!(
            "momentum {n} outside [{}, {}]",
            -half,
            half - 1
        )));
    }
    Ok((n + half) as usize)
}

/// Bit position (counted from the least significant bit) that stores qubit `m`.
pub fn qubit_position(m: u32, n_qubits: u32) -> Result<u32> {
    if m < 1 || m > n_qubits {
        return Err(Error::Domain(format!(
            "qubit index {m} outside [1, {n_qubits}]"
        )));
    }
    Ok(n_qubits - m)
}

/// Value `a_m` of qubit `m` in basis index `j`; `m = 1` is the most significant.
pub fn qubit_bit(j: usize, m: u32, n_qubits: u32) -> Result<u8> {
    let dim = dimension(n_qubits);
    if j >= dim {
        return Err(Error::Domain(format!("basis index {j} outside [0, {dim})")));
    }
    let pos = qubit_position(m, n_qubits)?;
    Ok(((j >> pos) & 1) as u8)
}

/// Kicked-rotator parameters: kick strength `k`, rotation parameter `T`
/// (stored as `period`) and the register size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub k: f64,
    pub period: f64,
    pub n_qubits: u32,
}

impl MapParams {
    pub fn new(k: f64, period: f64, n_qubits: u32) -> Result<Self> {
        if !k.is_finite() || k < 0.0 {
            return Err(Error::Domain(format!(
                "kick strength must be finite and >= 0, got {k}"
            )));
        }
        if !period.is_finite() {
            return Err(Error::Domain(format!(
                "rotation parameter must be finite, got {period}"
            )));
        }
        check_qubit_count(n_qubits)?;
        Ok(Self {
            k,
            period,
            n_qubits,
        })
    }

    pub fn dimension(&self) -> usize {
        dimension(self.n_qubits)
    }

    /// Classical chaos parameter `K = kT`.
    pub fn chaos_parameter(&self) -> f64 {
        self.k * self.period
    }

    /// Localization length estimate `l = k^2 / 2`.
    pub fn localization_length_estimate(&self) -> f64 {
        self.k * self.k / 2.0
    }
}

/// Normalized wavefunction tagged with the representation its amplitudes live in.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
    representation: Representation,
    n_qubits: u32,
}

impl QuantumState {
    /// Wraps `amplitudes`, checking the length and the unit-norm invariant.
    pub fn from_amplitudes(
        n_qubits: u32,
        amplitudes: Vec<Complex64>,
        representation: Representation,
    ) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let dim = dimension(n_qubits);
        if amplitudes.len() != dim {
            return Err(Error::Domain(format!(
                "expected {dim} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        let norm = norm_squared_of(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Domain(format!(
                "state is not normalized: |psi|^2 = {norm}"
            )));
        }
        Ok(Self {
            amplitudes,
            representation,
            n_qubits,
        })
    }

    /// Used by kernels that preserve the norm by construction.
    pub(crate) fn from_parts_unchecked(
        n_qubits: u32,
        amplitudes: Vec<Complex64>,
        representation: Representation,
    ) -> Self {
        debug_assert_eq!(amplitudes.len(), dimension(n_qubits));
        Self {
            amplitudes,
            representation,
            n_qubits,
        }
    }

    /// Momentum eigenstate at `n0`.
    pub fn initial(n_qubits: u32, n0: i64) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let j = momentum_to_index(n0, n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dimension(n_qubits)];
        amplitudes[j] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            representation: Representation::Momentum,
            n_qubits,
        })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub(crate) fn set_representation(&mut self, representation: Representation) {
        self.representation = representation;
    }

    pub fn n_qubits(&self) -> u32 {
        self.n_qubits
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_squared(&self) -> f64 {
        norm_squared_of(&self.amplitudes)
    }

    /// `|psi_j|^2` in index order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn require(&self, expected: Representation) -> Result<()> {
        if self.representation != expected {
            return Err(Error::Representation {
                expected,
                found: self.representation,
            });
        }
        Ok(())
    }

    /// `|<self|other>|`.
    pub fn overlap(&self, other: &QuantumState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm()
    }

    /// Euclidean distance between the amplitude vectors.
    pub fn distance(&self, other: &QuantumState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Writes the `KLST` snapshot: 16-byte header followed by `N` little-endian
    /// `(re, im)` pairs.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&self.n_qubits.to_le_bytes())?;
        w.write_all(&self.representation.code().to_le_bytes())?;
        write_amplitudes(&mut w, &self.amplitudes)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if &header[0..4] != SNAPSHOT_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n_qubits = u32::from_le_bytes(header[8..12].try_into().unwrap());
        check_qubit_count(n_qubits).map_err(|e| Error::Format(e.to_string()))?;
        let representation =
            Representation::from_code(u32::from_le_bytes(header[12..16].try_into().unwrap()))?;
        let amplitudes = read_amplitudes(&mut r, dimension(n_qubits))
            .map_err(|e| Error::Format(format!("truncated amplitudes: {e}")))?;
        Self::from_amplitudes(n_qubits, amplitudes, representation)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

pub(crate) fn norm_squared_of(amplitudes: &[Complex64]) -> f64 {
    amplitudes.iter().map(|a| a.norm_sqr()).sum()
}

pub(crate) fn write_amplitudes<W: Write>(
    w: &mut W,
    amplitudes: &[Complex64],
) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(amplitudes.len() * 16);
    for a in amplitudes {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn read_amplitudes<R: Read>(r: &mut R, len: usize) -> std::io::Result<Vec<Complex64>> {
    let mut buf = vec![0u8; len * 16];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect())
}

/// Unnormalized branch `P_a(m) psi` together with its squared norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedState {
    amplitudes: Vec<Complex64>,
    weight: f64,
    n_qubits: u32,
}

impl ProjectedState {
    pub fn new(n_qubits: u32, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        if amplitudes.len() != dimension(n_qubits) {
            return Err(Error::Domain(format!(
                "expected {} amplitudes, got {}",
                dimension(n_qubits),
                amplitudes.len()
            )));
        }
        let weight = norm_squared_of(&amplitudes);
        Ok(Self {
            amplitudes,
            weight,
            n_qubits,
        })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn n_qubits(&self) -> u32 {
        self.n_qubits
    }

    /// Scales the branch to unit norm. The result is in the momentum representation.
    pub fn renormalize(self) -> Result<QuantumState> {
        if self.weight.is_nan() || self.weight <= BRANCH_THRESHOLD {
            return Err(Error::DegenerateBranch(self.weight));
        }
        let scale = 1.0 / self.weight.sqrt();
        let amplitudes = self.amplitudes.into_iter().map(|a| a * scale).collect();
        Ok(QuantumState::from_parts_unchecked(
            self.n_qubits,
            amplitudes,
            Representation::Momentum,
        ))
    }
}

pub fn renormalize(projected: ProjectedState) -> Result<QuantumState> {
    projected.renormalize()
}
