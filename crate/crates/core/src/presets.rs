//! Figure presets: parameter sets and curve layouts for the four published
//! figures, at desk scale (default) or the original scale.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::config::{averaging_window, EnsembleConfig, SampleSchedule, DEFAULT_TRAJECTORIES};
use crate::error::{Error, Result};
use crate::experiment::{run_ensemble, RunOptions, RunOutput};
use crate::measurement::{MeasurementBackend, MeasurementSpec};
use crate::observables::{time_averaged_ipr, PowerLawFit};
use crate::output::{write_run, OutputDir};
use crate::qstate::MapParams;
use crate::sweep::{run_k_scan, run_method_comparison, KScanConfig};

pub const PERIOD: f64 = 2.0;
/// Measured-qubit offset `n_q - m` of the "most significant qubit" curves.
pub const LOCALIZING_OFFSET: u32 = 8;
/// Fits start here, after the initial transient.
pub const FIT_START: u64 = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        };
        f.write_str(name)
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            other => Err(Error::Config(format!(
                "unknown figure '{other}' (expected fig1, fig2, fig3 or fig4)"
            ))),
        }
    }
}

/// Scale-dependent settings shared by all presets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PresetScale {
    pub n_qubit_values: Vec<u32>,
    pub t_max: u64,
    pub scan_t_max: u64,
    pub trajectories: usize,
    pub seed: u64,
}

impl PresetScale {
    pub fn desk() -> Self {
        Self {
            n_qubit_values: vec![9, 10, 11],
            t_max: 20_000,
            scan_t_max: 50_000,
            trajectories: DEFAULT_TRAJECTORIES,
            seed: 1,
        }
    }

    pub fn paper() -> Self {
        Self {
            n_qubit_values: vec![9, 10, 11, 12],
            t_max: 500_000,
            scan_t_max: 500_000,
            trajectories: DEFAULT_TRAJECTORIES,
            seed: 1,
        }
    }
}

/// One curve of a figure: a legend label and the run behind it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curve {
    pub label: String,
    pub config: EnsembleConfig,
}

fn config(
    k: f64,
    n_qubits: u32,
    m: Option<u32>,
    backend: MeasurementBackend,
    scale: &PresetScale,
    t_max: u64,
) -> Result<EnsembleConfig> {
    let params = MapParams::new(k, PERIOD, n_qubits)?;
    let (spec, trajectories) = match m {
        Some(m) => (MeasurementSpec::new(m, backend), scale.trajectories),
        None => (MeasurementSpec::none(), 1),
    };
    EnsembleConfig::new(params, spec, trajectories, t_max, scale.seed)
}

/// Curves of the time-series figures (1, 2 and 4). Figure 4 lists only the
/// trajectory runs; each gets a random-phase twin.
pub fn figure_curves(figure: Figure, scale: &PresetScale) -> Result<Vec<Curve>> {
    let traj = MeasurementBackend::Trajectories;
    let mut curves = Vec::new();
    match figure {
        Figure::Fig1 => {
            for &n in &scale.n_qubit_values {
                curves.push(Curve {
                    label: format!("nq{n}_m=nq"),
                    config: config(2.0, n, Some(n), traj, scale, scale.t_max)?,
                });
            }
            for &n in &scale.n_qubit_values {
                curves.push(Curve {
                    label: format!("nq{n}_m=nq-8"),
                    config: config(
                        2.0,
                        n,
                        Some(n - LOCALIZING_OFFSET),
                        traj,
                        scale,
                        scale.t_max,
                    )?,
                });
            }
            curves.push(Curve {
                label: "nq10_no_measurement".into(),
                config: config(2.0, 10, None, traj, scale, scale.t_max)?,
            });
        }
        Figure::Fig2 => {
            curves.push(Curve {
                label: "nq10_m=nq-8".into(),
                config: config(
                    2.0,
                    10,
                    Some(10 - LOCALIZING_OFFSET),
                    traj,
                    scale,
                    scale.t_max,
                )?,
            });
            curves.push(Curve {
                label: "nq10_m=nq".into(),
                config: config(2.0, 10, Some(10), traj, scale, scale.t_max)?,
            });
            curves.push(Curve {
                label: "nq10_no_measurement".into(),
                config: config(2.0, 10, None, traj, scale, scale.t_max)?,
            });
        }
        Figure::Fig4 => {
            for (panel, m) in [("a", 10), ("b", 2)] {
                for k in [2.0, 6.0] {
                    curves.push(Curve {
                        label: format!("{panel}_k{k}_m{m}"),
                        config: config(k, 10, Some(m), traj, scale, scale.t_max)?,
                    });
                }
            }
        }
        Figure::Fig3 => {
            return Err(Error::Config(
                "fig3 is a k scan, not a set of time series".into(),
            ))
        }
    }
    Ok(curves)
}

/// Scan behind figure 3.
pub fn figure3_scan(scale: &PresetScale) -> KScanConfig {
    KScanConfig {
        k_values: (2..=10).map(f64::from).collect(),
        n_qubit_values: scale.n_qubit_values.clone(),
        qubit_offset: LOCALIZING_OFFSET,
        period: PERIOD,
        backend: MeasurementBackend::Trajectories,
        trajectories: scale.trajectories,
        t_max: scale.scan_t_max,
        master_seed: scale.seed,
        schedule: SampleSchedule::default(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSummary {
    pub label: String,
    pub backend: String,
    pub n2_final: f64,
    pub xi_averaged: f64,
    pub n2_fit: Option<PowerLawFit>,
    pub xi_fit: Option<PowerLawFit>,
}

fn summarize(label: &str, output: &RunOutput) -> Result<CurveSummary> {
    let t_max = output.config.t_max;
    let range = FIT_START..=t_max;
    let grid = output
        .series
        .subsample(&output.config.schedule.fit_times(t_max));
    Ok(CurveSummary {
        label: label.to_string(),
        backend: output.config.spec.backend.name().to_string(),
        n2_final: *output.series.second_moment.last().unwrap_or(&0.0),
        xi_averaged: time_averaged_ipr(&output.series, averaging_window(t_max))?,
        n2_fit: grid.fit_second_moment(range.clone()).ok(),
        xi_fit: grid.fit_ipr(range).ok(),
    })
}

fn summary_csv(summaries: &[CurveSummary]) -> String {
    let mut out = String::from("curve,backend,n2_final,xi_averaged,n2_exponent,n2_exponent_stderr,xi_exponent,xi_exponent_stderr\n");
    let fmt_fit = |f: &Option<PowerLawFit>| match f {
        Some(f) => format!("{:e},{:e}", f.exponent, f.stderr),
        None => ",".to_string(),
    };
    for s in summaries {
        out.push_str(&format!(
            "{},{},{:e},{:e},{},{}\n",
            s.label,
            s.backend,
            s.n2_final,
            s.xi_averaged,
            fmt_fit(&s.n2_fit),
            fmt_fit(&s.xi_fit)
        ));
    }
    out
}

/// Runs a figure preset and writes its curves under `outdir`. Returns the
/// fit summary (empty for figure 3, whose report is written as CSV/JSON).
pub fn reproduce_figure(
    figure: Figure,
    scale: &PresetScale,
    outdir: &Path,
    options: &RunOptions,
) -> Result<Vec<CurveSummary>> {
    let mut out = OutputDir::create(outdir)?;
    out.write_json(
        "preset.json",
        &serde_json::json!({ "figure": figure.to_string(), "scale": scale }),
    )?;
    let mut summaries = Vec::new();
    match figure {
        Figure::Fig1 | Figure::Fig2 => {
            for curve in figure_curves(figure, scale)? {
                let output = run_ensemble(&curve.config, options)?;
                write_run(&mut out, &format!("{}_", curve.label), &output)?;
                summaries.push(summarize(&curve.label, &output)?);
            }
        }
        Figure::Fig4 => {
            for curve in figure_curves(figure, scale)? {
                let cmp = run_method_comparison(&curve.config, options)?;
                write_run(
                    &mut out,
                    &format!("{}_trajectories_", curve.label),
                    &cmp.trajectories,
                )?;
                write_run(
                    &mut out,
                    &format!("{}_random_phase_", curve.label),
                    &cmp.random_phase,
                )?;
                summaries.push(summarize(
                    &format!("{}_trajectories", curve.label),
                    &cmp.trajectories,
                )?);
                summaries.push(summarize(
                    &format!("{}_random_phase", curve.label),
                    &cmp.random_phase,
                )?);
                out.write_json(
                    &format!("{}_comparison.json", curve.label),
                    &serde_json::json!({ "agreement": cmp.agreement, "consistent": cmp.consistent }),
                )?;
            }
        }
        Figure::Fig3 => {
            let report = run_k_scan(&figure3_scan(scale), options)?;
            out.write("xi_vs_k.csv", report.to_csv_string())?;
            let mut inset = String::from("k,xi0\n");
            for (k, x) in &report.baseline {
                inset.push_str(&format!("{k:e},{x:e}\n"));
            }
            out.write("xi0_vs_k_no_measurement.csv", inset)?;
            out.write_json("transition_report.json", &report)?;
        }
    }
    if !summaries.is_empty() {
        out.write("fit_summary.csv", summary_csv(&summaries))?;
        out.write_json("fit_summary.json", &summaries)?;
    }
    out.finish()?;
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_names() {
        assert_eq!("fig3".parse::<Figure>().unwrap(), Figure::Fig3);
        assert!(matches!("fig9".parse::<Figure>(), Err(Error::Config(_))));
        assert_eq!(Figure::Fig4.to_string(), "fig4");
    }

    #[test]
    fn presets_match_figure_parameters() {
        let desk = PresetScale::desk();
        let fig1 = figure_curves(Figure::Fig1, &desk).unwrap();
        assert_eq!(fig1.len(), 7);
        assert!(fig1
            .iter()
            .all(|c| c.config.params.k == 2.0 && c.config.params.period == 2.0));
        assert_eq!(fig1[3].config.spec.qubit, Some(1));
        assert_eq!(
            fig1[6].config.spec.backend,
            MeasurementBackend::NoMeasurement
        );
        let fig4 = figure_curves(Figure::Fig4, &desk).unwrap();
        assert_eq!(fig4.len(), 4);
        assert!(fig4.iter().all(|c| c.config.params.n_qubits == 10));
        let scan = figure3_scan(&PresetScale::paper());
        assert_eq!(scan.n_qubit_values, vec![9, 10, 11, 12]);
        assert_eq!(scan.k_values.len(), 9);
    }

    #[test]
    fn tiny_fig2_writes_curves() {
        let dir = tempfile::tempdir().unwrap();
        let scale = PresetScale {
            n_qubit_values: vec![10],
            t_max: 60,
            scan_t_max: 60,
            trajectories: 2,
            seed: 4,
        };
        reproduce_figure(Figure::Fig2, &scale, dir.path(), &RunOptions::default()).unwrap();
        assert!(dir.path().join("nq10_m=nq_series.csv").exists());
        assert!(dir
            .path()
            .join("nq10_m=nq-8_trajectory_distribution.csv")
            .exists());
        assert!(dir.path().join("fit_summary.csv").exists());
        assert!(dir.path().join("manifest.json").exists());
    }
}
