//! Run configuration and its flat `key = value` text form.
//!
//! Recognized keys: `n_q`, `k`, `T`, `m`, `backend`, `M`, `t_max`, `seed`,
//! `schedule`, `checkpoint_every`, `outdir`. Blank lines and `#` comments are
//! ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measurement::{MeasurementBackend, MeasurementSpec};
use crate::qstate::{MapParams, QuantumState};

pub const KNOWN_KEYS: &[&str] = &[
    "n_q",
    "k",
    "T",
    "m",
    "backend",
    "M",
    "t_max",
    "seed",
    "schedule",
    "checkpoint_every",
    "outdir",
];

pub const DEFAULT_TRAJECTORIES: usize = 50;
pub const DEFAULT_T_MAX: u64 = 20_000;
pub const DEFAULT_SEED: u64 = 1;

/// Fraction of the run, counted back from `t_max`, over which `xi` is averaged.
pub const AVERAGING_WINDOW_FRACTION: f64 = 0.1;

/// `[t_max - t_max/10, t_max]`.
pub fn averaging_window(t_max: u64) -> RangeInclusive<u64> {
    let width = (t_max as f64 * AVERAGING_WINDOW_FRACTION).round() as u64;
    t_max.saturating_sub(width)..=t_max
}

/// Times at which observables are recorded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleSchedule {
    /// Log-spaced times plus `window_points` evenly spaced samples in the
    /// averaging window.
    Geometric { per_decade: u32, window_points: u32 },
    /// Every `stride` iterations.
    Linear { stride: u64 },
}

impl Default for SampleSchedule {
    fn default() -> Self {
        SampleSchedule::Geometric {
            per_decade: 30,
            window_points: 100,
        }
    }
}

impl SampleSchedule {
    /// Sorted, distinct sample times in `[0, t_max]`, always including both ends.
    pub fn times(&self, t_max: u64) -> Vec<u64> {
        let mut times = vec![0u64];
        match *self {
            SampleSchedule::Geometric {
                per_decade,
                window_points,
            } => {
                let mut i = 0u32;
                loop {
                    let t = 10f64.powf(i as f64 / per_decade as f64).round() as u64;
                    if t > t_max {
                        break;
                    }
                    times.push(t);
                    i += 1;
                }
                let window = averaging_window(t_max);
                let (lo, hi) = (*window.start(), *window.end());
                if window_points >= 2 && hi > lo {
                    for p in 0..window_points {
                        let t =
                            lo as f64 + (hi - lo) as f64 * p as f64 / (window_points - 1) as f64;
                        times.push(t.round() as u64);
                    }
                }
            }
            SampleSchedule::Linear { stride } => {
                let mut t = stride;
                while t <= t_max {
                    times.push(t);
                    t += stride;
                }
            }
        }
        times.push(t_max);
        times.sort_unstable();
        times.dedup();
        times
    }

    /// Sample times used for power-law fits: the log-spaced grid without the
    /// dense averaging-window points, which would otherwise dominate a fit.
    pub fn fit_times(&self, t_max: u64) -> Vec<u64> {
        match *self {
            SampleSchedule::Geometric { per_decade, .. } => SampleSchedule::Geometric {
                per_decade,
                window_points: 0,
            }
            .times(t_max),
            SampleSchedule::Linear { .. } => self.times(t_max),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SampleSchedule::Geometric { per_decade: 0, .. } => Err(Error::Config(
                "geometric schedule needs per_decade >= 1".into(),
            )),
            SampleSchedule::Linear { stride: 0 } => {
                Err(Error::Config("linear stride must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SampleSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSchedule::Geometric {
                per_decade,
                window_points,
            } => write!(f, "geometric:{per_decade}:{window_points}"),
            SampleSchedule::Linear { stride } => write!(f, "linear:{stride}"),
        }
    }
}

impl FromStr for SampleSchedule {
    type Err = Error;

    /// `geometric:<per_decade>[:<window_points>]` or `linear:<stride>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid schedule '{s}'"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let schedule = match parts.as_slice() {
            ["geometric", d] => SampleSchedule::Geometric {
                per_decade: d.parse().map_err(|_| bad())?,
                window_points: 0,
            },
            ["geometric", d, w] => SampleSchedule::Geometric {
                per_decade: d.parse().map_err(|_| bad())?,
                window_points: w.parse().map_err(|_| bad())?,
            },
            ["linear", s] => SampleSchedule::Linear {
                stride: s.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Everything that determines the output of one ensemble run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub params: MapParams,
    pub spec: MeasurementSpec,
    pub trajectories: usize,
    pub t_max: u64,
    pub master_seed: u64,
    pub schedule: SampleSchedule,
    /// Not part of the config hash.
    pub checkpoint_every: Option<u64>,
    /// Not part of the config hash.
    pub outdir: Option<PathBuf>,
}

impl EnsembleConfig {
    pub fn new(
        params: MapParams,
        spec: MeasurementSpec,
        trajectories: usize,
        t_max: u64,
        master_seed: u64,
    ) -> Result<Self> {
        let config = Self {
            params,
            spec,
            trajectories,
            t_max,
            master_seed,
            schedule: SampleSchedule::default(),
            checkpoint_every: None,
            outdir: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_schedule(mut self, schedule: SampleSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        MapParams::new(self.params.k, self.params.period, self.params.n_qubits)?;
        self.spec.validate(self.params.n_qubits)?;
        self.schedule.validate()?;
        if self.trajectories == 0 {
            return Err(Error::Config("trajectory count M must be >= 1".into()));
        }
        if matches!(
            self.spec.backend,
            MeasurementBackend::DensityMatrix | MeasurementBackend::NoMeasurement
        ) && self.trajectories != 1
        {
            return Err(Error::Config(format!(
                "backend '{}' is deterministic and needs M = 1",
                self.spec.backend
            )));
        }
        if self.spec.backend == MeasurementBackend::DensityMatrix {
            crate::density::DensityMatrix::from_pure(&QuantumState::initial(
                self.params.n_qubits,
                0,
            )?)?;
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Canonical text of every field that influences results.
    pub fn canonical_text(&self) -> String {
        let m = match self.spec.qubit {
            Some(m) => m.to_string(),
            None => "none".into(),
        };
        format!(
            "n_q = {}\nk = {:?}\nT = {:?}\nm = {}\nbackend = {}\nM = {}\nt_max = {}\nseed = {}\nschedule = {}\n",
            self.params.n_qubits,
            self.params.k,
            self.params.period,
            m,
            self.spec.backend,
            self.trajectories,
            self.t_max,
            self.master_seed,
            self.schedule
        )
    }

    /// SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_text().as_bytes()).into()
    }

    /// Full key-value form, including output settings.
    pub fn to_kv_string(&self) -> String {
        let mut text = self.canonical_text();
        if let Some(every) = self.checkpoint_every {
            text.push_str(&format!("checkpoint_every = {every}\n"));
        }
        if let Some(dir) = &self.outdir {
            text.push_str(&format!("outdir = {}\n", dir.display()));
        }
        text
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        ConfigEntries::parse(text)?.build()
    }
}

/// Raw `key = value` pairs, before defaults are applied.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigEntries {
    entries: BTreeMap<String, String>,
}

impl ConfigEntries {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key '{key}'",
                    lineno + 1
                )));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KNOWN_KEYS.contains(&key));
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("invalid value '{v}' for key '{key}'")))
            })
            .transpose()
    }

    /// Applies defaults and validates. Deterministic backends default to `M = 1`.
    pub fn build(&self) -> Result<EnsembleConfig> {
        let n_qubits: u32 = self
            .parsed("n_q")?
            .ok_or_else(|| Error::Config("missing key 'n_q'".into()))?;
        let k: f64 = self
            .parsed("k")?
            .ok_or_else(|| Error::Config("missing key 'k'".into()))?;
        let period: f64 = self.parsed("T")?.unwrap_or(2.0);
        let backend: MeasurementBackend = self.parsed("backend")?.unwrap_or_default();
        let qubit: Option<u32> = match self.get("m") {
            None | Some("none") => None,
            Some(_) => self.parsed("m")?,
        };
        let spec = match (backend, qubit) {
            (MeasurementBackend::NoMeasurement, None) => MeasurementSpec::none(),
            (MeasurementBackend::NoMeasurement, Some(_)) => {
                return Err(Error::Config(
                    "'m' cannot be combined with backend 'none'".into(),
                ))
            }
            (b, q) => MeasurementSpec {
                qubit: q,
                backend: b,
            },
        };
        let deterministic = matches!(
            backend,
            MeasurementBackend::NoMeasurement | MeasurementBackend::DensityMatrix
        );
        let trajectories = self.parsed("M")?.unwrap_or(if deterministic {
            1
        } else {
            DEFAULT_TRAJECTORIES
        });
        let config = EnsembleConfig {
            params: MapParams::new(k, period, n_qubits)?,
            spec,
            trajectories,
            t_max: self.parsed("t_max")?.unwrap_or(DEFAULT_T_MAX),
            master_seed: self.parsed("seed")?.unwrap_or(DEFAULT_SEED),
            schedule: self.parsed("schedule")?.unwrap_or_default(),
            checkpoint_every: self.parsed("checkpoint_every")?,
            outdir: self.get("outdir").map(PathBuf::from),
        };
        config.validate()?;
        Ok(config)
    }
}
