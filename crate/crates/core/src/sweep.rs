//! Parameter sweeps, the delocalization-transition scan, the
//! trajectory/random-phase comparison, and the density-matrix cross-check.

use std::path::PathBuf;

use serde::Serialize;

use crate::config::{averaging_window, EnsembleConfig, SampleSchedule};
use crate::density::MAX_ORACLE_QUBITS;
use crate::error::{Error, Result};
use crate::experiment::{run_ensemble, RunOptions, RunOutput};
use crate::measurement::{MeasurementBackend, MeasurementSpec};
use crate::observables::{time_averaged_ipr, ObservableSeries};
use crate::qstate::MapParams;
use crate::rng::derive_seed;

/// Relative spread of `<xi>` across register sizes above which a scan point
/// counts as delocalized.
pub const SPREAD_THRESHOLD: f64 = 0.3;

/// Fraction of compared sample times that must agree for two methods to be
/// called consistent.
pub const AGREEMENT_FRACTION: f64 = 0.9;

/// Salt mixed into the master seed for the random-phase twin of a comparison.
const TWIN_SALT: u64 = 0x7477_696e;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SweepAxis {
    K(Vec<f64>),
    /// Measured qubit `m`.
    Qubit(Vec<u32>),
    /// Register size; a measured qubit keeps its offset `n_q - m`.
    NQubits(Vec<u32>),
}

impl SweepAxis {
    fn len(&self) -> usize {
        match self {
            SweepAxis::K(v) => v.len(),
            SweepAxis::Qubit(v) => v.len(),
            SweepAxis::NQubits(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub base: EnsembleConfig,
    pub axis: SweepAxis,
    pub outdir: Option<PathBuf>,
}

fn distinct<T: PartialEq>(values: &[T]) -> bool {
    values
        .iter()
        .enumerate()
        .all(|(i, a)| values[..i].iter().all(|b| a != b))
}

impl SweepConfig {
    pub fn new(base: EnsembleConfig, axis: SweepAxis) -> Result<Self> {
        let sweep = Self {
            base,
            axis,
            outdir: None,
        };
        sweep.points()?;
        Ok(sweep)
    }

    /// One config per sweep point, in axis order.
    pub fn points(&self) -> Result<Vec<EnsembleConfig>> {
        if self.axis.len() == 0 {
            return Err(Error::Config("sweep has no points".into()));
        }
        let ok = match &self.axis {
            SweepAxis::K(v) => v.iter().all(|k| k.is_finite()) && distinct(v),
            SweepAxis::Qubit(v) => distinct(v),
            SweepAxis::NQubits(v) => distinct(v),
        };
        if !ok {
            return Err(Error::Config(
                "sweep points must be distinct and finite".into(),
            ));
        }
        let base = &self.base;
        let build = |params: MapParams, qubit: Option<u32>| -> Result<EnsembleConfig> {
            let mut config = base.clone();
            config.params = MapParams::new(params.k, params.period, params.n_qubits)?;
            config.spec.qubit = qubit;
            config.validate()?;
            Ok(config)
        };
        match &self.axis {
            SweepAxis::K(v) => v
                .iter()
                .map(|&k| build(MapParams { k, ..base.params }, base.spec.qubit))
                .collect(),
            SweepAxis::Qubit(v) => v.iter().map(|&m| build(base.params, Some(m))).collect(),
            SweepAxis::NQubits(v) => {
                let offset = base
                    .spec
                    .qubit
                    .map(|m| base.params.n_qubits as i64 - m as i64);
                v.iter()
                    .map(|&n| {
                        let qubit = match offset {
                            Some(off) if n as i64 - off >= 1 => Some((n as i64 - off) as u32),
                            Some(off) => {
                                return Err(Error::Config(format!(
                                    "n_q = {n} is too small for measured-qubit offset {off}"
                                )))
                            }
                            None => None,
                        };
                        build(
                            MapParams {
                                n_qubits: n,
                                ..base.params
                            },
                            qubit,
                        )
                    })
                    .collect()
            }
        }
    }
}

/// Runs every point of `sweep` in order.
pub fn run_sweep(sweep: &SweepConfig, options: &RunOptions) -> Result<Vec<RunOutput>> {
    sweep
        .points()?
        .iter()
        .map(|c| run_ensemble(c, options))
        .collect()
}

/// Inputs of a transition scan: `k` values crossed with register sizes, with
/// the measured qubit at `m = n_q - qubit_offset`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KScanConfig {
    pub k_values: Vec<f64>,
    pub n_qubit_values: Vec<u32>,
    pub qubit_offset: u32,
    pub period: f64,
    pub backend: MeasurementBackend,
    pub trajectories: usize,
    pub t_max: u64,
    pub master_seed: u64,
    pub schedule: SampleSchedule,
}

impl KScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.n_qubit_values.is_empty() {
            return Err(Error::Config(
                "scan needs at least one k and one n_q".into(),
            ));
        }
        if !self.k_values.iter().all(|k| k.is_finite())
            || !distinct(&self.k_values)
            || !distinct(&self.n_qubit_values)
        {
            return Err(Error::Config(
                "sweep points must be distinct and finite".into(),
            ));
        }
        for &n in &self.n_qubit_values {
            self.point(self.k_values[0], n)?;
        }
        Ok(())
    }

    fn point(&self, k: f64, n_qubits: u32) -> Result<EnsembleConfig> {
        if self.qubit_offset >= n_qubits {
            return Err(Error::Config(format!(
                "n_q = {n_qubits} is too small for m = n_q - {}",
                self.qubit_offset
            )));
        }
        Ok(EnsembleConfig::new(
            MapParams::new(k, self.period, n_qubits)?,
            MeasurementSpec::new(n_qubits - self.qubit_offset, self.backend),
            self.trajectories,
            self.t_max,
            self.master_seed,
        )?
        .with_schedule(self.schedule))
    }

    fn baseline(&self, k: f64, n_qubits: u32) -> Result<EnsembleConfig> {
        Ok(EnsembleConfig::new(
            MapParams::new(k, self.period, n_qubits)?,
            MeasurementSpec::none(),
            1,
            self.t_max,
            self.master_seed,
        )?
        .with_schedule(self.schedule))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub k: f64,
    pub n_qubits: u32,
    pub m: u32,
    /// `xi` averaged over the last tenth of the run.
    pub xi: f64,
    /// Same average without measurement.
    pub xi0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionReport {
    pub config: KScanConfig,
    pub points: Vec<ScanPoint>,
    /// Per `k`: baseline `xi0` averaged over register sizes.
    pub baseline: Vec<(f64, f64)>,
    /// Per `k`: `(max - min) / mean` of `<xi>` across register sizes.
    pub spread: Vec<(f64, f64)>,
    /// Smallest `k` whose spread exceeds [`SPREAD_THRESHOLD`].
    pub k_c: Option<f64>,
    /// Cell length `L = 2^(n_q - m)`.
    pub cell_length: usize,
    /// `xi0(k_c) / L`.
    pub xi0_over_l: Option<f64>,
}

impl TransitionReport {
    pub fn xi(&self, k: f64, n_qubits: u32) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.k == k && p.n_qubits == n_qubits)
            .map(|p| p.xi)
    }

    pub fn xi0(&self, k: f64) -> Option<f64> {
        self.baseline
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|&(_, x)| x)
    }

    pub fn spread_at(&self, k: f64) -> Option<f64> {
        self.spread.iter().find(|(kk, _)| *kk == k).map(|&(_, s)| s)
    }

    /// `<xi>` at `k` ordered by increasing register size.
    pub fn xi_by_size(&self, k: f64) -> Vec<(u32, f64)> {
        let mut v: Vec<(u32, f64)> = self
            .points
            .iter()
            .filter(|p| p.k == k)
            .map(|p| (p.n_qubits, p.xi))
            .collect();
        v.sort_by_key(|&(n, _)| n);
        v
    }

    /// Whether `xi0(k_c) / L` lies in `[0.1, 0.4]`.
    pub fn transition_consistent(&self) -> bool {
        self.xi0_over_l.is_some_and(|r| (0.1..=0.4).contains(&r))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("k,n_q,m,xi,xi0\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:e},{},{},{:e},{:e}\n",
                p.k, p.n_qubits, p.m, p.xi, p.xi0
            ));
        }
        out
    }
}

/// Relative spread `(max - min) / mean`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (max - min) / mean
}

/// Scans `k` at fixed measured-qubit offset over several register sizes and
/// locates the delocalization transition.
pub fn run_k_scan(scan: &KScanConfig, options: &RunOptions) -> Result<TransitionReport> {
    scan.validate()?;
    let window = averaging_window(scan.t_max);
    let mut points = Vec::new();
    let mut baseline = Vec::new();
    let mut spread = Vec::new();
    for &k in &scan.k_values {
        let mut xis = Vec::new();
        let mut xi0s = Vec::new();
        for &n in &scan.n_qubit_values {
            let measured = run_ensemble(&scan.point(k, n)?, options)?;
            let free = run_ensemble(&scan.baseline(k, n)?, options)?;
            let xi = time_averaged_ipr(&measured.series, window.clone())?;
            let xi0 = time_averaged_ipr(&free.series, window.clone())?;
            points.push(ScanPoint {
                k,
                n_qubits: n,
                m: n - scan.qubit_offset,
                xi,
                xi0,
            });
            xis.push(xi);
            xi0s.push(xi0);
        }
        baseline.push((k, xi0s.iter().sum::<f64>() / xi0s.len() as f64));
        spread.push((k, relative_spread(&xis)));
    }
    let mut sorted = spread.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k_c = sorted
        .iter()
        .find(|(_, s)| *s > SPREAD_THRESHOLD)
        .map(|&(k, _)| k);
    let cell_length = 1usize << scan.qubit_offset;
    let xi0_over_l = k_c
        .and_then(|k| baseline.iter().find(|(kk, _)| *kk == k))
        .map(|&(_, x)| x / cell_length as f64);
    Ok(TransitionReport {
        config: scan.clone(),
        points,
        baseline,
        spread,
        k_c,
        cell_length,
        xi0_over_l,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodComparison {
    pub trajectories: RunOutput,
    pub random_phase: RunOutput,
    /// `(t, <n^2>_trajectories / <n^2>_random_phase)` for `t >= 1`.
    pub ratio: Vec<(u64, f64)>,
    /// Fraction of sample times `t >= 1` with
    /// `|a - b| <= 3 sqrt(se_a^2 + se_b^2)`.
    pub agreement: f64,
    pub consistent: bool,
}

/// Fraction of shared sample times `t >= 1` where the two `<n^2>` series
/// agree within three combined standard errors.
pub fn agreement_fraction(a: &ObservableSeries, b: &ObservableSeries) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::Domain(
            "series are sampled at different times".into(),
        ));
    }
    let mut compared = 0usize;
    let mut agreeing = 0usize;
    for i in 0..a.len() {
        if a.times[i] == 0 {
            continue;
        }
        compared += 1;
        let diff = (a.second_moment[i] - b.second_moment[i]).abs();
        let sigma = a.second_moment_stderr[i].hypot(b.second_moment_stderr[i]);
        let scale = a.second_moment[i]
            .abs()
            .max(b.second_moment[i].abs())
            .max(1.0);
        if diff <= 3.0 * sigma || diff <= 1e-12 * scale {
            agreeing += 1;
        }
    }
    if compared == 0 {
        return Err(Error::Domain("no sample times with t >= 1".into()));
    }
    Ok(agreeing as f64 / compared as f64)
}

/// Runs `config` with trajectories and a random-phase twin seeded independently.
pub fn run_method_comparison(
    config: &EnsembleConfig,
    options: &RunOptions,
) -> Result<MethodComparison> {
    if config.spec.backend != MeasurementBackend::Trajectories {
        return Err(Error::Config(
            "method comparison needs the trajectories backend".into(),
        ));
    }
    let mut twin = config.clone();
    twin.spec.backend = MeasurementBackend::RandomPhase;
    twin.master_seed = derive_seed(config.master_seed, TWIN_SALT);
    let trajectories = run_ensemble(config, options)?;
    let random_phase = run_ensemble(&twin, options)?;
    let a = &trajectories.series;
    let b = &random_phase.series;
    let agreement = agreement_fraction(a, b)?;
    let ratio = (0..a.len())
        .filter(|&i| a.times[i] > 0)
        .map(|i| (a.times[i], a.second_moment[i] / b.second_moment[i]))
        .collect();
    Ok(MethodComparison {
        trajectories,
        random_phase,
        ratio,
        agreement,
        consistent: agreement >= AGREEMENT_FRACTION,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub params: MapParams,
    pub m: u32,
    pub steps: u64,
    pub trajectories: usize,
    pub master_seed: u64,
    /// `rho_nn` from exact density-matrix evolution.
    pub oracle: Vec<f64>,
    /// `<|psi_n|^2>` over the trajectory ensemble.
    pub estimate: Vec<f64>,
    /// `max_n |rho_nn - p_n|`.
    pub max_abs_diff: f64,
    /// `max_n |rho_nn - p_n| / sigma_n` over entries with `sigma_n > 0`,
    /// where `sigma_n = sqrt(rho_nn (1 - rho_nn) / M)`.
    pub max_sigma: f64,
    /// Largest difference where `sigma_n = 0`.
    pub max_exact_diff: f64,
    pub within_tolerance: bool,
}

/// Tolerance on entries whose binomial error vanishes.
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// Compares exact density-matrix evolution with a trajectory ensemble after
/// `steps` measured iterations. Agreement means every entry is within
/// `3 sigma_n`, or within [`EXACT_TOLERANCE`] where `sigma_n = 0`.
pub fn verify_oracle(
    params: MapParams,
    m: u32,
    steps: u64,
    trajectories: usize,
    master_seed: u64,
    options: &RunOptions,
) -> Result<OracleReport> {
    if params.n_qubits > MAX_ORACLE_QUBITS {
        return Err(Error::Capacity(format!(
            "density-matrix oracle supports at most {MAX_ORACLE_QUBITS} qubits, got {}",
            params.n_qubits
        )));
    }
    if steps == 0 {
        return Err(Error::Config("oracle check needs at least one step".into()));
    }
    let schedule = SampleSchedule::Linear { stride: steps };
    let exact = EnsembleConfig::new(
        params,
        MeasurementSpec::new(m, MeasurementBackend::DensityMatrix),
        1,
        steps,
        master_seed,
    )?
    .with_schedule(schedule);
    let sampled = EnsembleConfig::new(
        params,
        MeasurementSpec::new(m, MeasurementBackend::Trajectories),
        trajectories,
        steps,
        master_seed,
    )?
    .with_schedule(schedule);
    let oracle = run_ensemble(&exact, options)?
        .final_distribution
        .probabilities()
        .to_vec();
    let estimate = run_ensemble(&sampled, options)?
        .final_distribution
        .probabilities()
        .to_vec();
    let mf = trajectories as f64;
    let mut max_abs_diff = 0.0f64;
    let mut max_sigma = 0.0f64;
    let mut max_exact_diff = 0.0f64;
    for (&p, &q) in oracle.iter().zip(&estimate) {
        let diff = (p - q).abs();
        max_abs_diff = max_abs_diff.max(diff);
        let sigma = (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / mf).sqrt();
        if sigma > EXACT_TOLERANCE {
            max_sigma = max_sigma.max(diff / sigma);
        } else {
            max_exact_diff = max_exact_diff.max(diff);
        }
    }
    Ok(OracleReport {
        params,
        m,
        steps,
        trajectories,
        master_seed,
        oracle,
        estimate,
        max_abs_diff,
        max_sigma,
        max_exact_diff,
        within_tolerance: max_sigma <= 3.0 && max_exact_diff <= EXACT_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> EnsembleConfig {
        EnsembleConfig::new(
            MapParams::new(2.0, 2.0, 5).unwrap(),
            MeasurementSpec::new(3, MeasurementBackend::Trajectories),
            4,
            50,
            3,
        )
        .unwrap()
    }

    #[test]
    fn sweep_points_follow_axis() {
        let sweep = SweepConfig::new(base(), SweepAxis::NQubits(vec![4, 6])).unwrap();
        let points = sweep.points().unwrap();
        assert_eq!(points[0].spec.qubit, Some(2));
        assert_eq!(points[1].spec.qubit, Some(4));
        assert_eq!(points[1].params.n_qubits, 6);
        let sweep = SweepConfig::new(base(), SweepAxis::K(vec![1.0, 3.0])).unwrap();
        assert_eq!(sweep.points().unwrap()[1].params.k, 3.0);
    }

    #[test]
    fn sweep_rejects_duplicates_and_non_finite() {
        assert!(SweepConfig::new(base(), SweepAxis::K(vec![1.0, 1.0])).is_err());
        assert!(SweepConfig::new(base(), SweepAxis::K(vec![f64::NAN])).is_err());
        assert!(SweepConfig::new(base(), SweepAxis::Qubit(vec![])).is_err());
        assert!(SweepConfig::new(base(), SweepAxis::Qubit(vec![6])).is_err());
    }

    #[test]
    fn spread_is_relative_to_mean() {
        assert_eq!(relative_spread(&[2.0, 2.0, 2.0]), 0.0);
        assert!((relative_spread(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_scan_produces_report() {
        let scan = KScanConfig {
            k_values: vec![0.5, 3.0],
            n_qubit_values: vec![5, 6],
            qubit_offset: 2,
            period: 2.0,
            backend: MeasurementBackend::RandomPhase,
            trajectories: 3,
            t_max: 200,
            master_seed: 5,
            schedule: SampleSchedule::default(),
        };
        let report = run_k_scan(&scan, &RunOptions::default()).unwrap();
        assert_eq!(report.points.len(), 4);
        assert_eq!(report.cell_length, 4);
        assert!(report.xi(0.5, 5).unwrap() >= 1.0);
        assert_eq!(report.xi_by_size(3.0).len(), 2);
        assert!(report.to_csv_string().starts_with("k,n_q,m,xi,xi0\n"));
    }

    #[test]
    fn identical_series_agree() {
        let out = run_ensemble(&base(), &RunOptions::default()).unwrap();
        assert_eq!(agreement_fraction(&out.series, &out.series).unwrap(), 1.0);
    }

    #[test]
    fn comparison_requires_trajectories() {
        let mut c = base();
        c.spec.backend = MeasurementBackend::RandomPhase;
        assert!(run_method_comparison(&c, &RunOptions::default()).is_err());
    }

    #[test]
    fn oracle_capacity_and_zero_kick() {
        let big = MapParams::new(2.0, 2.0, 12).unwrap();
        assert!(matches!(
            verify_oracle(big, 1, 5, 10, 1, &RunOptions::default()),
            Err(Error::Capacity(_))
        ));
        let frozen = MapParams::new(0.0, 2.0, 4).unwrap();
        let report = verify_oracle(frozen, 4, 20, 50, 1, &RunOptions::default()).unwrap();
        assert!(report.max_abs_diff <= 1e-12);
        assert!(report.within_tolerance);
    }

    #[test]
    fn oracle_agrees_for_small_ensemble() {
        let params = MapParams::new(2.0, 2.0, 3).unwrap();
        let report = verify_oracle(params, 2, 10, 4000, 11, &RunOptions::default()).unwrap();
        assert!(report.within_tolerance, "{report:?}");
    }
}
