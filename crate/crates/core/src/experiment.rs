//! Ensemble runner: evolves `M` trajectories (or one density matrix) in
//! lockstep between sample times, records observables, and checkpoints.
//!
//! Trajectories run in parallel; every reduction over trajectories is done
//! sequentially in trajectory order, so outputs do not depend on the number
//! of workers.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::{CheckpointData, EnsembleSnapshot, TrajectoryRecord};
use crate::circuit::{step_gate_counts, GateCounts};
use crate::config::EnsembleConfig;
use crate::density::{evolve_density_matrix_with, DensityMatrix};
use crate::error::{Error, Result};
use crate::measurement::{measure_in_place, MeasurementBackend};
use crate::observables::{
    ipr_of, second_moment_of, ObservableSeries, ProbabilityDistribution, SeriesMetadata,
};
use crate::qstate::{norm_squared_of, QuantumState};
use crate::rng::RngStream;
use crate::rotator::Propagator;

/// Execution settings that do not affect results.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    /// Where periodic checkpoints go (requires `checkpoint_every` in the config).
    pub checkpoint_path: Option<PathBuf>,
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Config("worker count must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Clone, Debug)]
struct Trajectory {
    stream: RngStream,
    ones: u64,
    amplitudes: Vec<Complex64>,
}

#[derive(Clone, Debug)]
enum EnsembleState {
    Pure(Vec<Trajectory>),
    Mixed(DensityMatrix),
}

/// Result of a completed run.
#[derive(Clone, Debug, Serialize)]
pub struct RunOutput {
    pub config: EnsembleConfig,
    pub series: ObservableSeries,
    /// Ensemble-averaged distribution at `t_max`.
    pub final_distribution: ProbabilityDistribution,
    /// `|psi_n|^2` of trajectory 0 at `t_max` (pure-state runs only).
    pub single_trajectory: Option<ProbabilityDistribution>,
    /// Fraction of measurements that returned 1, over all trajectories.
    pub outcome_one_fraction: Option<f64>,
    pub gate_counts_per_step: GateCounts,
    pub wall_time_s: f64,
}

/// Live ensemble. Use [`run_ensemble`] for the common case.
pub struct Ensemble {
    config: EnsembleConfig,
    propagator: Propagator,
    t: u64,
    state: EnsembleState,
    series: ObservableSeries,
    sample_times: Vec<u64>,
    next_sample: usize,
    elapsed: f64,
}

impl Ensemble {
    pub fn new(config: EnsembleConfig) -> Result<Self> {
        config.validate()?;
        let initial = QuantumState::initial(config.params.n_qubits, 0)?;
        let state = match config.spec.backend {
            MeasurementBackend::DensityMatrix => {
                EnsembleState::Mixed(DensityMatrix::from_pure(&initial)?)
            }
            _ => EnsembleState::Pure(
                (0..config.trajectories as u64)
                    .map(|id| Trajectory {
                        stream: RngStream::new(config.master_seed, id),
                        ones: 0,
                        amplitudes: initial.amplitudes().to_vec(),
                    })
                    .collect(),
            ),
        };
        let mut ensemble = Self {
            propagator: Propagator::new(&config.params),
            series: ObservableSeries::new(metadata(&config)),
            sample_times: config.schedule.times(config.t_max),
            t: 0,
            state,
            next_sample: 0,
            elapsed: 0.0,
            config,
        };
        ensemble.record_due_samples();
        Ok(ensemble)
    }

    /// Restores an ensemble from a checkpoint, optionally checking that it was
    /// written for `expected`.
    pub fn resume(path: &Path, expected: Option<&EnsembleConfig>) -> Result<Self> {
        let data = CheckpointData::read_file(path, expected)?;
        let config = data.config;
        let dim = config.params.dimension();
        let state = match data.state {
            EnsembleSnapshot::Pure(records) => EnsembleState::Pure(
                records
                    .into_iter()
                    .map(|r| {
                        if r.amplitudes.len() != dim {
                            return Err(Error::Checkpoint(
                                "trajectory has the wrong dimension".into(),
                            ));
                        }
                        Ok(Trajectory {
                            stream: RngStream::new(config.master_seed, r.stream_id),
                            ones: r.ones,
                            amplitudes: r.amplitudes,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            EnsembleSnapshot::Mixed(rho) => {
                EnsembleState::Mixed(DensityMatrix::from_entries(config.params.n_qubits, rho)?)
            }
        };
        let sample_times = config.schedule.times(config.t_max);
        let next_sample = data.next_sample as usize;
        if next_sample > sample_times.len() || data.t > config.t_max {
            return Err(Error::Checkpoint(
                "checkpoint position lies outside the run".into(),
            ));
        }
        Ok(Self {
            propagator: Propagator::new(&config.params),
            series: data.series,
            sample_times,
            t: data.t,
            state,
            next_sample,
            elapsed: 0.0,
            config,
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn series(&self) -> &ObservableSeries {
        &self.series
    }

    /// Changes the checkpoint interval; it is not part of the config hash.
    pub fn set_checkpoint_every(&mut self, every: Option<u64>) -> Result<()> {
        if every == Some(0) {
            return Err(Error::Config("checkpoint_every must be >= 1".into()));
        }
        self.config.checkpoint_every = every;
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.config.t_max
    }

    fn snapshot(&self) -> CheckpointData {
        let state = match &self.state {
            EnsembleState::Pure(trajectories) => EnsembleSnapshot::Pure(
                trajectories
                    .iter()
                    .map(|tr| TrajectoryRecord {
                        stream_id: tr.stream.stream_id,
                        ones: tr.ones,
                        amplitudes: tr.amplitudes.clone(),
                    })
                    .collect(),
            ),
            EnsembleState::Mixed(rho) => EnsembleSnapshot::Mixed(rho.entries().to_vec()),
        };
        CheckpointData {
            config: self.config.clone(),
            t: self.t,
            next_sample: self.next_sample as u64,
            series: self.series.clone(),
            state,
        }
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        self.snapshot().write_file(path)
    }

    /// Evolves every member from the current time to `target`.
    fn advance_to(&mut self, target: u64) -> Result<()> {
        if target <= self.t {
            return Ok(());
        }
        let from = self.t;
        let propagator = &self.propagator;
        let spec = self.config.spec;
        let n_qubits = self.config.params.n_qubits;
        match &mut self.state {
            EnsembleState::Pure(trajectories) => {
                trajectories
                    .par_iter_mut()
                    .try_for_each(|tr| -> Result<()> {
                        let mut scratch = propagator.make_scratch();
                        for step in from + 1..=target {
                            propagator.step_in_place(&mut tr.amplitudes, &mut scratch);
                            if spec.backend != MeasurementBackend::NoMeasurement {
                                let mut rng = tr.stream.at_step(step);
                                if measure_in_place(&mut tr.amplitudes, n_qubits, &spec, &mut rng)?
                                    == Some(1)
                                {
                                    tr.ones += 1;
                                }
                            }
                        }
                        Ok(())
                    })?;
            }
            EnsembleState::Mixed(rho) => {
                let mut current = rho.clone();
                for _ in from + 1..=target {
                    current = evolve_density_matrix_with(propagator, current, spec.qubit)?;
                }
                *rho = current;
            }
        }
        self.t = target;
        Ok(())
    }

    fn record_due_samples(&mut self) {
        while self.next_sample < self.sample_times.len()
            && self.sample_times[self.next_sample] <= self.t
        {
            if self.sample_times[self.next_sample] == self.t {
                self.record();
            }
            self.next_sample += 1;
        }
    }

    fn record(&mut self) {
        match &self.state {
            EnsembleState::Pure(trajectories) => {
                let per_trajectory: Vec<(Vec<f64>, f64)> = trajectories
                    .par_iter()
                    .map(|tr| {
                        let p: Vec<f64> = tr.amplitudes.iter().map(|a| a.norm_sqr()).collect();
                        let norm = norm_squared_of(&tr.amplitudes);
                        (p, norm)
                    })
                    .collect();
                let m = per_trajectory.len() as f64;
                let dim = self.config.params.dimension();
                let mut p = vec![0.0; dim];
                let mut moments = Vec::with_capacity(per_trajectory.len());
                let mut norm_check = 0.0f64;
                for (pi, norm) in &per_trajectory {
                    for (acc, x) in p.iter_mut().zip(pi) {
                        *acc += x;
                    }
                    moments.push(second_moment_of(pi));
                    norm_check = norm_check.max((norm - 1.0).abs());
                }
                p.iter_mut().for_each(|x| *x /= m);
                let stderr = if moments.len() > 1 {
                    let mean = moments.iter().sum::<f64>() / m;
                    let var =
                        moments.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
                    (var / m).sqrt()
                } else {
                    0.0
                };
                self.series
                    .push(self.t, second_moment_of(&p), stderr, ipr_of(&p), norm_check);
            }
            EnsembleState::Mixed(rho) => {
                let p = rho.diagonal();
                let norm_check = (rho.trace().re - 1.0).abs();
                self.series
                    .push(self.t, second_moment_of(&p), 0.0, ipr_of(&p), norm_check);
            }
        }
    }

    /// Runs until `stop` (clamped to `t_max`), recording samples and writing
    /// checkpoints every `checkpoint_every` iterations when `checkpoint` is set.
    /// A checkpoint is also written at `stop` if it is before `t_max`.
    pub fn run_until(&mut self, stop: u64, checkpoint: Option<&Path>) -> Result<()> {
        let started = Instant::now();
        let stop = stop.min(self.config.t_max);
        let every = self
            .config
            .checkpoint_every
            .filter(|_| checkpoint.is_some());
        while self.t < stop {
            let mut target = stop;
            if let Some(&next) = self.sample_times.get(self.next_sample) {
                target = target.min(next);
            }
            if let Some(every) = every {
                target = target.min((self.t / every + 1) * every);
            }
            self.advance_to(target)?;
            self.record_due_samples();
            if let (Some(every), Some(path)) = (every, checkpoint) {
                if self.t.is_multiple_of(every) {
                    self.write_checkpoint(path)?;
                }
            }
        }
        if let Some(path) = checkpoint {
            if self.t < self.config.t_max {
                self.write_checkpoint(path)?;
            }
        }
        self.elapsed += started.elapsed().as_secs_f64();
        Ok(())
    }

    pub fn distribution(&self) -> Result<ProbabilityDistribution> {
        let n_qubits = self.config.params.n_qubits;
        match &self.state {
            EnsembleState::Pure(trajectories) => {
                let mut p = vec![0.0; self.config.params.dimension()];
                for tr in trajectories {
                    for (acc, a) in p.iter_mut().zip(&tr.amplitudes) {
                        *acc += a.norm_sqr();
                    }
                }
                let m = trajectories.len() as f64;
                p.iter_mut().for_each(|x| *x /= m);
                ProbabilityDistribution::new(n_qubits, p)
            }
            EnsembleState::Mixed(rho) => ProbabilityDistribution::new(n_qubits, rho.diagonal()),
        }
    }

    pub fn trajectory_distribution(&self, index: usize) -> Option<ProbabilityDistribution> {
        match &self.state {
            EnsembleState::Pure(trajectories) => trajectories.get(index).and_then(|tr| {
                ProbabilityDistribution::new(
                    self.config.params.n_qubits,
                    tr.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
                )
                .ok()
            }),
            EnsembleState::Mixed(_) => None,
        }
    }

    pub fn finish(self) -> Result<RunOutput> {
        if !self.is_finished() {
            return Err(Error::Domain(format!(
                "run stopped at t = {} before t_max = {}",
                self.t, self.config.t_max
            )));
        }
        let outcome_one_fraction = match (&self.state, self.config.spec.backend) {
            (EnsembleState::Pure(trajectories), MeasurementBackend::Trajectories) if self.t > 0 => {
                let ones: u64 = trajectories.iter().map(|tr| tr.ones).sum();
                Some(ones as f64 / (self.t * trajectories.len() as u64) as f64)
            }
            _ => None,
        };
        Ok(RunOutput {
            final_distribution: self.distribution()?,
            single_trajectory: self.trajectory_distribution(0),
            outcome_one_fraction,
            gate_counts_per_step: step_gate_counts(self.config.params.n_qubits),
            wall_time_s: self.elapsed,
            series: self.series,
            config: self.config,
        })
    }
}

fn metadata(config: &EnsembleConfig) -> SeriesMetadata {
    SeriesMetadata {
        params: config.params,
        spec: config.spec,
        trajectories: config.trajectories,
        master_seed: config.master_seed,
    }
}

/// Runs `config` to completion.
pub fn run_ensemble(config: &EnsembleConfig, options: &RunOptions) -> Result<RunOutput> {
    let config = config.clone();
    let checkpoint = options.checkpoint_path.clone();
    with_workers(options.workers, move || {
        let mut ensemble = Ensemble::new(config)?;
        let t_max = ensemble.config().t_max;
        ensemble.run_until(t_max, checkpoint.as_deref())?;
        ensemble.finish()
    })?
}

/// Continues a checkpointed run to completion.
pub fn resume_ensemble(
    path: &Path,
    expected: Option<&EnsembleConfig>,
    options: &RunOptions,
) -> Result<RunOutput> {
    let path = path.to_path_buf();
    let expected = expected.cloned();
    let checkpoint = options.checkpoint_path.clone();
    with_workers(options.workers, move || {
        let mut ensemble = Ensemble::resume(&path, expected.as_ref())?;
        let t_max = ensemble.config().t_max;
        ensemble.run_until(t_max, checkpoint.as_deref())?;
        ensemble.finish()
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SampleSchedule;
    use crate::measurement::MeasurementSpec;
    use crate::qstate::MapParams;

    fn small(backend: MeasurementBackend, m: u32, trajectories: usize) -> EnsembleConfig {
        EnsembleConfig::new(
            MapParams::new(2.0, 2.0, 6).unwrap(),
            MeasurementSpec::new(m, backend),
            trajectories,
            300,
            17,
        )
        .unwrap()
        .with_schedule(SampleSchedule::Geometric {
            per_decade: 10,
            window_points: 10,
        })
    }

    #[test]
    fn series_starts_at_delta() {
        let out = run_ensemble(
            &small(MeasurementBackend::Trajectories, 6, 4),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.series.times[0], 0);
        assert_eq!(out.series.second_moment[0], 0.0);
        assert_eq!(out.series.ipr[0], 1.0);
        assert_eq!(*out.series.times.last().unwrap(), 300);
        assert!(out.series.norm_check.iter().all(|&x| x < 1e-12));
        assert!(out.series.ipr.iter().all(|&x| (1.0..=64.0).contains(&x)));
        assert!(out.outcome_one_fraction.is_some());
    }

    #[test]
    fn no_measurement_matches_direct_evolution() {
        let config = small(MeasurementBackend::NoMeasurement, 1, 1);
        let out = run_ensemble(&config, &RunOptions::default()).unwrap();
        let prop = Propagator::new(&config.params);
        let mut s = QuantumState::initial(6, 0).unwrap();
        for _ in 0..300 {
            s = prop.step(s).unwrap();
        }
        assert_eq!(
            out.final_distribution.probabilities(),
            &s.probabilities()[..]
        );
    }

    #[test]
    fn worker_count_does_not_change_results() {
        for backend in [
            MeasurementBackend::Trajectories,
            MeasurementBackend::RandomPhase,
        ] {
            let config = small(backend, 6, 6);
            let one = run_ensemble(
                &config,
                &RunOptions {
                    workers: Some(1),
                    ..Default::default()
                },
            )
            .unwrap();
            let four = run_ensemble(
                &config,
                &RunOptions {
                    workers: Some(4),
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(one.series, four.series);
            assert_eq!(one.final_distribution, four.final_distribution);
        }
    }

    #[test]
    fn density_matrix_backend_runs() {
        let mut config = small(MeasurementBackend::DensityMatrix, 4, 1);
        config.params.n_qubits = 4;
        config.spec = MeasurementSpec::new(4, MeasurementBackend::DensityMatrix);
        let out = run_ensemble(&config, &RunOptions::default()).unwrap();
        assert!(out.series.norm_check.iter().all(|&x| x < 1e-10));
        assert!(out.series.second_moment_stderr.iter().all(|&x| x == 0.0));
        assert!(out.single_trajectory.is_none());
    }

    #[test]
    fn unfinished_run_cannot_finish() {
        let mut e = Ensemble::new(small(MeasurementBackend::Trajectories, 3, 2)).unwrap();
        e.run_until(10, None).unwrap();
        assert_eq!(e.time(), 10);
        assert!(e.finish().is_err());
    }
}
