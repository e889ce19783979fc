//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{averaging_window, ConfigEntries, EnsembleConfig, SampleSchedule};
use crate::error::{Error, Result};
use crate::experiment::{with_workers, Ensemble, RunOptions, RunOutput};
use crate::measurement::MeasurementBackend;
use crate::observables::time_averaged_ipr;
use crate::output::{write_run, OutputDir};
use crate::presets::{reproduce_figure, Figure, PresetScale};
use crate::qstate::MapParams;
use crate::sweep::{run_k_scan, run_method_comparison, verify_oracle, KScanConfig};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Default name of the checkpoint file inside the output directory.
pub const CHECKPOINT_FILE: &str = "checkpoint.klck";
const DEFAULT_OUTDIR: &str = "qkr-out";

#[derive(Debug, Parser)]
#[command(
    name = "qkr",
    version,
    about = "Quantum kicked rotator under repeated qubit measurement"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one ensemble and write its series, distributions and metadata.
    Run(RunArgs),
    /// Scan k over several register sizes and locate the delocalization transition.
    ScanK(ScanArgs),
    /// Run trajectories and a random-phase twin and compare <n^2>(t).
    CompareMethods(RunArgs),
    /// Check the trajectory ensemble against exact density-matrix evolution.
    VerifyOracle(OracleArgs),
    /// Run a figure preset (fig1, fig2, fig3, fig4).
    ReproduceFigure(FigureArgs),
    /// Continue a checkpointed run.
    Resume(ResumeArgs),
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "QKR_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Key-value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "nq")]
    pub n_qubits: Option<u32>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long = "T")]
    pub period: Option<f64>,
    /// Measured qubit, 1-based (1 = most significant), or "none".
    #[arg(long)]
    pub m: Option<String>,
    /// trajectories, random-phase, density-matrix or none.
    #[arg(long)]
    pub backend: Option<MeasurementBackend>,
    /// Number of trajectories.
    #[arg(long = "M")]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub tmax: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// geometric:<per_decade>[:<window_points>] or linear:<stride>.
    #[arg(long)]
    pub schedule: Option<SampleSchedule>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Stop at this iteration and leave a checkpoint for `resume`.
    #[arg(long)]
    pub halt_at: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0])]
    pub k_values: Vec<f64>,
    /// Comma-separated register sizes.
    #[arg(long, value_delimiter = ',', default_values_t = vec![9, 10, 11])]
    pub nq_values: Vec<u32>,
    /// Measured qubit is m = n_q - offset.
    #[arg(long, default_value_t = 8)]
    pub offset: u32,
    #[arg(long = "T", default_value_t = 2.0)]
    pub period: f64,
    #[arg(long, default_value_t = MeasurementBackend::Trajectories)]
    pub backend: MeasurementBackend,
    #[arg(long = "M", default_value_t = 50)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 50_000)]
    pub tmax: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub schedule: Option<SampleSchedule>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long = "nq", default_value_t = 4)]
    pub n_qubits: u32,
    #[arg(long, default_value_t = 2.0)]
    pub k: f64,
    #[arg(long = "T", default_value_t = 2.0)]
    pub period: f64,
    #[arg(long)]
    pub m: u32,
    /// Number of measured iterations.
    #[arg(long, default_value_t = 50)]
    pub steps: u64,
    #[arg(long = "M", default_value_t = 100_000)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    /// fig1, fig2, fig3 or fig4.
    pub name: String,
    /// Use the original run lengths and register sizes (hours to days).
    #[arg(long)]
    pub paper_scale: bool,
    /// Override the run length of the preset.
    #[arg(long)]
    pub tmax: Option<u64>,
    #[arg(long = "M")]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct ResumeArgs {
    /// Checkpoint file.
    pub checkpoint: PathBuf,
    /// Refuse to resume unless the checkpoint matches this config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub halt_at: Option<u64>,
    /// Output directory (default: the checkpoint's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

impl RunArgs {
    /// Config file entries overridden by flags.
    pub fn entries(&self) -> Result<ConfigEntries> {
        let mut entries = match &self.config {
            Some(path) => ConfigEntries::parse(&read_config(path)?)?,
            None => ConfigEntries::default(),
        };
        if let Some(v) = self.n_qubits {
            entries.set("n_q", v);
        }
        if let Some(v) = self.k {
            entries.set("k", format!("{v:?}"));
        }
        if let Some(v) = self.period {
            entries.set("T", format!("{v:?}"));
        }
        if let Some(v) = &self.m {
            entries.set("m", v);
        }
        if let Some(v) = self.backend {
            entries.set("backend", v);
        }
        if let Some(v) = self.trajectories {
            entries.set("M", v);
        }
        if let Some(v) = self.tmax {
            entries.set("t_max", v);
        }
        if let Some(v) = self.seed {
            entries.set("seed", v);
        }
        if let Some(v) = self.schedule {
            entries.set("schedule", v);
        }
        if let Some(v) = self.checkpoint_every {
            entries.set("checkpoint_every", v);
        }
        if let Some(v) = &self.out {
            entries.set("outdir", v.display());
        }
        Ok(entries)
    }

    pub fn build(&self) -> Result<EnsembleConfig> {
        self.entries()?.build()
    }
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))
}

fn outdir_of(config: &EnsembleConfig) -> PathBuf {
    config
        .outdir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTDIR))
}

fn options(exec: &ExecArgs, checkpoint: Option<PathBuf>) -> RunOptions {
    RunOptions {
        workers: exec.workers,
        checkpoint_path: checkpoint,
    }
}

fn print_run_summary(output: &RunOutput) {
    let s = &output.series;
    let last = s.len() - 1;
    println!(
        "t = {}  <n^2> = {:.6e} +- {:.2e}  xi = {:.6e}  max norm error = {:.2e}",
        s.times[last],
        s.second_moment[last],
        s.second_moment_stderr[last],
        s.ipr[last],
        s.norm_check.iter().copied().fold(0.0, f64::max)
    );
    if let Ok(xi) = time_averaged_ipr(s, averaging_window(output.config.t_max)) {
        println!("time-averaged xi over the last 10%: {xi:.6e}");
    }
}

fn write_single_run(outdir: &Path, output: &RunOutput) -> Result<()> {
    let mut out = OutputDir::create(outdir)?;
    write_run(&mut out, "", output)?;
    out.finish()?;
    Ok(())
}

/// Runs an ensemble from `ensemble`'s current time, honoring `halt_at`.
fn drive(ensemble: Ensemble, halt_at: Option<u64>, outdir: &Path, exec: &ExecArgs) -> Result<()> {
    let checkpoint = outdir.join(CHECKPOINT_FILE);
    let wants_checkpoint = halt_at.is_some() || ensemble.config().checkpoint_every.is_some();
    fs::create_dir_all(outdir)?;
    let result = with_workers(exec.workers, move || -> Result<Option<RunOutput>> {
        let mut ensemble = ensemble;
        let stop = halt_at.unwrap_or(ensemble.config().t_max);
        ensemble.run_until(stop, wants_checkpoint.then_some(checkpoint.as_path()))?;
        if ensemble.is_finished() {
            Ok(Some(ensemble.finish()?))
        } else {
            println!(
                "halted at t = {}; checkpoint written to {}",
                ensemble.time(),
                checkpoint.display()
            );
            Ok(None)
        }
    })??;
    if let Some(output) = result {
        write_single_run(outdir, &output)?;
        print_run_summary(&output);
        println!("wrote {}", outdir.display());
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = args.build()?;
    let outdir = outdir_of(&config);
    if let Some(halt) = args.halt_at {
        if halt == 0 {
            return Err(Error::Config("--halt-at must be >= 1".into()));
        }
    }
    let ensemble = Ensemble::new(config)?;
    drive(ensemble, args.halt_at, &outdir, &args.exec)
}

fn cmd_resume(args: &ResumeArgs) -> Result<()> {
    let expected = match &args.config {
        Some(path) => Some(EnsembleConfig::from_kv_str(&read_config(path)?)?),
        None => None,
    };
    let mut ensemble = Ensemble::resume(&args.checkpoint, expected.as_ref())?;
    if let Some(every) = args.checkpoint_every {
        ensemble.set_checkpoint_every(Some(every))?;
    }
    let outdir = match &args.out {
        Some(dir) => dir.clone(),
        None => args
            .checkpoint
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    drive(ensemble, args.halt_at, &outdir, &args.exec)
}

fn cmd_scan(args: &ScanArgs) -> Result<()> {
    let scan = KScanConfig {
        k_values: args.k_values.clone(),
        n_qubit_values: args.nq_values.clone(),
        qubit_offset: args.offset,
        period: args.period,
        backend: args.backend,
        trajectories: args.trajectories,
        t_max: args.tmax,
        master_seed: args.seed,
        schedule: args.schedule.unwrap_or_default(),
    };
    scan.validate()?;
    let report = run_k_scan(&scan, &options(&args.exec, None))?;
    let outdir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTDIR));
    let mut out = OutputDir::create(&outdir)?;
    out.write("scan.csv", report.to_csv_string())?;
    out.write_json("transition_report.json", &report)?;
    out.finish()?;
    for &k in &scan.k_values {
        let xis: Vec<String> = report
            .xi_by_size(k)
            .iter()
            .map(|(n, x)| format!("n_q={n}: {x:.3}"))
            .collect();
        println!(
            "k = {k}: xi0 = {:.3}  spread = {:.3}  {}",
            report.xi0(k).unwrap_or(f64::NAN),
            report.spread_at(k).unwrap_or(f64::NAN),
            xis.join("  ")
        );
    }
    match report.k_c {
        Some(k_c) => println!(
            "k_c = {k_c}  L = {}  xi0(k_c)/L = {:.3}",
            report.cell_length,
            report.xi0_over_l.unwrap_or(f64::NAN)
        ),
        None => println!(
            "no transition found in the scanned range (L = {})",
            report.cell_length
        ),
    }
    println!("wrote {}", outdir.display());
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Result<()> {
    let mut entries = args.entries()?;
    if entries.get("backend").is_none() {
        entries.set("backend", MeasurementBackend::Trajectories);
    }
    let config = entries.build()?;
    let cmp = run_method_comparison(&config, &options(&args.exec, None))?;
    let outdir = outdir_of(&config);
    let mut out = OutputDir::create(&outdir)?;
    write_run(&mut out, "trajectories_", &cmp.trajectories)?;
    write_run(&mut out, "random_phase_", &cmp.random_phase)?;
    let mut ratio = String::from("t,ratio\n");
    for (t, r) in &cmp.ratio {
        ratio.push_str(&format!("{t},{r:e}\n"));
    }
    out.write("ratio.csv", ratio)?;
    out.write_json(
        "comparison.json",
        &serde_json::json!({ "agreement": cmp.agreement, "consistent": cmp.consistent }),
    )?;
    out.finish()?;
    println!(
        "agreement within 3 sigma on {:.1}% of sample times: {}",
        100.0 * cmp.agreement,
        if cmp.consistent {
            "consistent"
        } else {
            "inconsistent"
        }
    );
    println!("wrote {}", outdir.display());
    Ok(())
}

/// Returns whether the oracle check passed.
fn cmd_verify(args: &OracleArgs) -> Result<bool> {
    let params = MapParams::new(args.k, args.period, args.n_qubits)?;
    let report = verify_oracle(
        params,
        args.m,
        args.steps,
        args.trajectories,
        args.seed,
        &options(&args.exec, None),
    )?;
    println!(
        "max |rho_nn - p_n| = {:.3e}  max deviation = {:.3} sigma  (M = {}, t = {})",
        report.max_abs_diff, report.max_sigma, report.trajectories, report.steps
    );
    println!(
        "{}",
        if report.within_tolerance {
            "PASS"
        } else {
            "FAIL"
        }
    );
    if let Some(dir) = &args.out {
        let mut out = OutputDir::create(dir)?;
        out.write_json("oracle_report.json", &report)?;
        out.finish()?;
    }
    Ok(report.within_tolerance)
}

fn cmd_figure(args: &FigureArgs) -> Result<()> {
    let figure: Figure = args.name.parse()?;
    let mut scale = if args.paper_scale {
        PresetScale::paper()
    } else {
        PresetScale::desk()
    };
    if let Some(t) = args.tmax {
        scale.t_max = t;
        scale.scan_t_max = t;
    }
    if let Some(m) = args.trajectories {
        scale.trajectories = m;
    }
    if let Some(seed) = args.seed {
        scale.seed = seed;
    }
    let outdir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{DEFAULT_OUTDIR}/{figure}")));
    let summaries = reproduce_figure(figure, &scale, &outdir, &options(&args.exec, None))?;
    for s in &summaries {
        let fit = |f: &Option<crate::observables::PowerLawFit>| {
            f.map(|f| format!("{:.3} +- {:.3}", f.exponent, f.stderr))
                .unwrap_or_else(|| "-".into())
        };
        println!(
            "{:<32} <n^2>(t_max) = {:.4e}  <xi> = {:.4e}  n2 exponent {}  xi exponent {}",
            s.label,
            s.n2_final,
            s.xi_averaged,
            fit(&s.n2_fit),
            fit(&s.xi_fit)
        );
    }
    println!("wrote {}", outdir.display());
    Ok(())
}

fn exit_code(result: Result<()>) -> i32 {
    match result {
        Ok(()) => EXIT_SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

pub fn execute(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Run(args) => exit_code(cmd_run(args)),
        Command::ScanK(args) => exit_code(cmd_scan(args)),
        Command::CompareMethods(args) => exit_code(cmd_compare(args)),
        Command::VerifyOracle(args) => match cmd_verify(args) {
            Ok(true) => EXIT_SUCCESS,
            Ok(false) => EXIT_FAILURE,
            Err(e) => exit_code(Err(e)),
        },
        Command::ReproduceFigure(args) => exit_code(cmd_figure(args)),
        Command::Resume(args) => exit_code(cmd_resume(args)),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_SUCCESS
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("qkr").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "n_q = 6\nk = 1.5\nm = 3\nM = 7\n").unwrap();
        let cli = parse(&[
            "run",
            "--config",
            path.to_str().unwrap(),
            "--k",
            "2.5",
            "--tmax",
            "100",
        ]);
        let Command::Run(args) = &cli.command else {
            panic!()
        };
        let config = args.build().unwrap();
        assert_eq!(config.params.k, 2.5);
        assert_eq!(config.params.n_qubits, 6);
        assert_eq!(config.trajectories, 7);
        assert_eq!(config.t_max, 100);
    }

    #[test]
    fn zero_qubit_index_is_a_usage_error() {
        let cli = parse(&["run", "--nq", "6", "--k", "2", "--m", "0", "--tmax", "5"]);
        assert_eq!(execute(&cli), EXIT_USAGE);
    }

    #[test]
    fn bad_flags_exit_with_usage() {
        for args in [&["qkr", "run", "--nq", "x"][..], &["qkr", "frobnicate"]] {
            let err = Cli::try_parse_from(args).unwrap_err();
            assert!(err.use_stderr());
        }
        assert_eq!(execute(&parse(&["reproduce-figure", "fig9"])), EXIT_USAGE);
        assert_eq!(
            execute(&parse(&[
                "verify-oracle",
                "--nq",
                "12",
                "--m",
                "1",
                "--M",
                "10"
            ])),
            EXIT_USAGE
        );
    }

    #[test]
    fn worker_flag_parses() {
        let cli = parse(&["run", "--nq", "4", "--k", "1", "--workers", "3"]);
        let Command::Run(args) = &cli.command else {
            panic!()
        };
        assert_eq!(args.exec.workers, Some(3));
    }
}
