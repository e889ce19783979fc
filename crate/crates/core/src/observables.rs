//! Diagnostics of the momentum distribution: `rho_nn`, the second moment
//! `<n^2>`, the inverse participation ratio `xi`, window averages and
//! log-log power-law fits.

use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::MeasurementSpec;
use crate::qstate::{dimension, MapParams, QuantumState, Representation};

/// Tolerance on the unit sum of an accumulated distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-8;

/// Ensemble-averaged momentum distribution, indexed like the basis (`n = -N/2 + j`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityDistribution {
    n_qubits: u32,
    p: Vec<f64>,
}

impl ProbabilityDistribution {
    pub fn new(n_qubits: u32, p: Vec<f64>) -> Result<Self> {
        if p.len() != dimension(n_qubits) {
            return Err(Error::Domain(format!(
                "expected {} probabilities, got {}",
                dimension(n_qubits),
                p.len()
            )));
        }
        if p.iter().any(|&x| x.is_nan() || x < 0.0) {
            return Err(Error::Domain("negative or NaN probability".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        Ok(Self { n_qubits, p })
    }

    pub fn from_state(state: &QuantumState) -> Result<Self> {
        state.require(Representation::Momentum)?;
        Self::new(state.n_qubits(), state.probabilities())
    }

    pub fn n_qubits(&self) -> u32 {
        self.n_qubits
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// `(n, p_n)` pairs in increasing momentum.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let half = (self.p.len() / 2) as i64;
        self.p
            .iter()
            .enumerate()
            .map(move |(j, &p)| (j as i64 - half, p))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,p")?;
        for (n, p) in self.iter() {
            writeln!(w, "{n},{p:e}")?;
        }
        Ok(())
    }
}

/// `p_n = (1/M) sum_i |psi_n^(i)|^2`, summed in trajectory order.
pub fn accumulate_distribution(states: &[QuantumState]) -> Result<ProbabilityDistribution> {
    let first = states
        .first()
        .ok_or_else(|| Error::Domain("no trajectories to accumulate".into()))?;
    let n_qubits = first.n_qubits();
    let mut p = vec![0.0; first.dimension()];
    for s in states {
        s.require(Representation::Momentum)?;
        if s.n_qubits() != n_qubits {
            return Err(Error::Domain(
                "trajectories disagree on the qubit count".into(),
            ));
        }
        for (acc, a) in p.iter_mut().zip(s.amplitudes()) {
            *acc += a.norm_sqr();
        }
    }
    let inv = 1.0 / states.len() as f64;
    p.iter_mut().for_each(|x| *x *= inv);
    ProbabilityDistribution::new(n_qubits, p)
}

/// `sum_n n^2 p_n`, about `n = 0`.
pub fn second_moment(dist: &ProbabilityDistribution) -> f64 {
    second_moment_of(dist.probabilities())
}

pub(crate) fn second_moment_of(p: &[f64]) -> f64 {
    let half = (p.len() / 2) as f64;
    p.iter()
        .enumerate()
        .map(|(j, &x)| {
            let n = j as f64 - half;
            n * n * x
        })
        .sum()
}

/// Inverse participation ratio `1 / sum_n p_n^2`.
pub fn ipr(dist: &ProbabilityDistribution) -> f64 {
    ipr_of(dist.probabilities())
}

pub(crate) fn ipr_of(p: &[f64]) -> f64 {
    1.0 / p.iter().map(|x| x * x).sum::<f64>()
}

/// Parameters identifying the run a series came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetadata {
    pub params: MapParams,
    pub spec: MeasurementSpec,
    pub trajectories: usize,
    pub master_seed: u64,
}

/// Time-indexed observables of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<u64>,
    pub second_moment: Vec<f64>,
    /// Standard error of `<n^2>` from the spread across trajectories.
    pub second_moment_stderr: Vec<f64>,
    pub ipr: Vec<f64>,
    /// Largest `| ||psi||^2 - 1 |` over trajectories (or `|Tr rho - 1|`).
    pub norm_check: Vec<f64>,
    pub metadata: SeriesMetadata,
}

impl ObservableSeries {
    pub fn new(metadata: SeriesMetadata) -> Self {
        Self {
            times: Vec::new(),
            second_moment: Vec::new(),
            second_moment_stderr: Vec::new(),
            ipr: Vec::new(),
            norm_check: Vec::new(),
            metadata,
        }
    }

    pub fn push(&mut self, t: u64, second_moment: f64, stderr: f64, ipr: f64, norm_check: f64) {
        self.times.push(t);
        self.second_moment.push(second_moment);
        self.second_moment_stderr.push(stderr);
        self.ipr.push(ipr);
        self.norm_check.push(norm_check);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value of the series at (or last before) time `t`.
    pub fn index_at(&self, t: u64) -> Option<usize> {
        match self.times.binary_search(&t) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,n2_mean,n2_stderr,ipr,norm_check")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e}",
                self.times[i],
                self.second_moment[i],
                self.second_moment_stderr[i],
                self.ipr[i],
                self.norm_check[i]
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// The samples taken at any of `times`.
    pub fn subsample(&self, times: &[u64]) -> ObservableSeries {
        let mut out = ObservableSeries::new(self.metadata.clone());
        for i in 0..self.len() {
            if times.binary_search(&self.times[i]).is_ok() {
                out.push(
                    self.times[i],
                    self.second_moment[i],
                    self.second_moment_stderr[i],
                    self.ipr[i],
                    self.norm_check[i],
                );
            }
        }
        out
    }

    pub fn fit_second_moment(&self, range: RangeInclusive<u64>) -> Result<PowerLawFit> {
        fit_power_law(&self.times, &self.second_moment, range)
    }

    pub fn fit_ipr(&self, range: RangeInclusive<u64>) -> Result<PowerLawFit> {
        fit_power_law(&self.times, &self.ipr, range)
    }
}

/// Mean of `xi(t)` over the samples whose time lies in `window`.
pub fn time_averaged_ipr(series: &ObservableSeries, window: RangeInclusive<u64>) -> Result<f64> {
    let values: Vec<f64> = series
        .times
        .iter()
        .zip(&series.ipr)
        .filter(|(t, _)| window.contains(t))
        .map(|(_, &x)| x)
        .collect();
    if values.is_empty() {
        return Err(Error::Domain(format!(
            "no samples in window [{}, {}]",
            window.start(),
            window.end()
        )));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub stderr: f64,
    pub prefactor: f64,
    pub samples: usize,
}

/// Unweighted least squares of `ln y` against `ln t` over `range`.
pub fn fit_power_law(
    times: &[u64],
    values: &[f64],
    range: RangeInclusive<u64>,
) -> Result<PowerLawFit> {
    if times.len() != values.len() {
        return Err(Error::Fit("times and values differ in length".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &y) in times.iter().zip(values) {
        if !range.contains(&t) {
            continue;
        }
        if t == 0 || y.is_nan() || y <= 0.0 {
            return Err(Error::Fit(format!("non-positive sample at t = {t}: {y}")));
        }
        xs.push((t as f64).ln());
        ys.push(y.ln());
    }
    let n = xs.len();
    if n < 10 {
        return Err(Error::Fit(format!(
            "need at least 10 samples in range, have {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::Fit("all samples at one time".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(PowerLawFit {
        exponent: slope,
        stderr,
        prefactor: intercept.exp(),
        samples: n,
    })
}
