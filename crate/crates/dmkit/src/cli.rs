//! The `dmkit` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dmkit_core::peakfit::{MultiPeakFit, PeakModel};
use dmkit_core::physicality::{project_physical, ProjectionReport, Strategy};
use dmkit_core::pipeline::{
    fit_trace, noise_sigma, run_pipeline, simulate_trace, PipelineConfig, TraceSetting,
};
use dmkit_core::protocols::{
    dm_povm_full, dm_process_full, dm_state_full, DmEstimate, ShotBudget, Variant,
};
use dmkit_core::pulselab::{synth_pulse_train, DEFAULT_DT_PS, DEFAULT_PERIOD_PS, DEFAULT_WIDTH_PS};
use dmkit_core::qmodel::{DensityOperator, PovmElement, CHI_FLATTENING};
use dmkit_core::sampler::{sample_estimator, variance_predicted, ShotPlan};
use serde::Serialize;

use crate::io::{
    read_json, read_matrix, read_waveform, to_json_string, write_waveform, ChannelJson, MatrixJson,
    StateJson,
};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "dmkit",
    version,
    about = "Direct measurement of quantum states, POVMs and processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generalized-Hadamard-test protocols
    #[command(subcommand)]
    Dm(DmCommand),
    /// Optical pulse-train emulation and waveform fitting
    #[command(subcommand)]
    Pulse(PulseCommand),
}

#[derive(Debug, Subcommand)]
pub enum DmCommand {
    /// Measure every element of a density matrix
    State(ProtocolArgs),
    /// Measure every element of a POVM element
    Povm(ProtocolArgs),
    /// Measure the process tensor of a Kraus channel
    Process(ProtocolArgs),
    /// Compare predicted and empirical estimator variance over a grid
    VarianceSweep(SweepArgs),
    /// Project a raw estimate onto the density operators
    Project(ProjectArgs),
}

#[derive(Debug, Subcommand)]
pub enum PulseCommand {
    /// Write one detected trace as CSV
    Simulate(SimulateArgs),
    /// Fit a multi-peak model to a trace
    Fit(FitArgs),
    /// Full reconstruction of a pulse-train state from nine traces
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Shift,
    Mub,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Shift => Variant::Shift,
            VariantArg::Mub => Variant::Mub,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    PaperFaithful,
    Hermitize,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::PaperFaithful => Strategy::PaperFaithful,
            StrategyArg::Hermitize => Strategy::Hermitize,
        }
    }
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Input JSON: a matrix, or a channel for `process`
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "shift")]
    pub variant: VariantArg,
    /// Shots per element; sampled mode
    #[arg(long, value_name = "N", conflicts_with = "exact")]
    pub shots: Option<u64>,
    /// Element `n` is sampled with seed `SEED ^ n`
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exact expectation values (the default without --shots)
    #[arg(long)]
    pub exact: bool,
    /// Output JSON; stdout if omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated values of A
    #[arg(long = "a", value_delimiter = ',', default_value = "0,0.3,0.6,0.9", value_parser = parse_number)]
    pub a_values: Vec<f64>,
    /// Comma-separated values of k; fractions like 1/3 are accepted
    #[arg(long = "k", value_delimiter = ',', default_value = "1,1/2,1/3", value_parser = parse_number)]
    pub k_values: Vec<f64>,
    /// Shots per run
    #[arg(long, default_value_t = 10_000)]
    pub shots: u64,
    /// Runs per grid point
    #[arg(long, default_value_t = 200)]
    pub seeds: u64,
    /// Run `s` of grid point `g` uses seed `SEED ^ (g << 32 | s)`
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; stdout if omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Raw matrix JSON
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "hermitize")]
    pub strategy: StrategyArg,
    /// Output matrix JSON, with `<stem>.report.json` beside it; stdout if omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Pulse-train state JSON
    #[arg(long, value_name = "FILE")]
    pub state: PathBuf,
    /// Interferometer delay in ps, a whole number of periods; 0 for the direct trace
    #[arg(long, default_value_t = 0.0)]
    pub delay: f64,
    /// Interferometer phase in degrees
    #[arg(long, default_value = "0", value_parser = ["0", "90", "180", "270"])]
    pub phase: String,
    /// Noise standard deviation as a fraction of the direct-trace peak
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample step in ps
    #[arg(long, default_value_t = DEFAULT_DT_PS)]
    pub dt: f64,
    /// Output CSV; stdout if omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Waveform CSV
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Number of peaks, placed at 0, T, 2T, ...
    #[arg(long)]
    pub peaks: usize,
    /// Pulse period T in ps
    #[arg(long, default_value_t = DEFAULT_PERIOD_PS)]
    pub period: f64,
    /// Pulse field FWHM in ps
    #[arg(long, default_value_t = DEFAULT_WIDTH_PS)]
    pub width: f64,
    /// Output JSON; stdout if omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pulse-train state JSON
    #[arg(long, value_name = "FILE")]
    pub state: PathBuf,
    /// Noise standard deviation as a fraction of the direct-trace peak
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Trace `n` is detected with seed `SEED ^ n`
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "paper-faithful")]
    pub strategy: StrategyArg,
    /// Sample step in ps
    #[arg(long, default_value_t = DEFAULT_DT_PS)]
    pub dt: f64,
    /// Output JSON; stdout if omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn parse_number(s: &str) -> Result<f64, String> {
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once('/') {
        Some((num, den)) => Ok(parse(num)? / parse(den)?),
        None => parse(s),
    }
}

#[derive(Serialize)]
struct EstimateJson {
    kind: &'static str,
    variant: &'static str,
    mode: &'static str,
    shots_per_element: u64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    chi_flattening: Option<&'static str>,
    matrix: MatrixJson,
    /// `re` and `im` hold the standard errors of the two quadratures.
    stderr: MatrixJson,
}

#[derive(Serialize)]
struct ClippedJson {
    re: f64,
    im: f64,
    clipped: f64,
}

#[derive(Serialize)]
struct ReportJson {
    strategy: &'static str,
    normalization: f64,
    clipped_eigenvalues: Vec<ClippedJson>,
    input: MatrixJson,
}

impl ReportJson {
    fn new(r: &ProjectionReport) -> Self {
        Self {
            strategy: r.strategy.name(),
            normalization: r.normalization,
            clipped_eigenvalues: r
                .clipped_eigenvalues
                .iter()
                .map(|(z, c)| ClippedJson {
                    re: z.re,
                    im: z.im,
                    clipped: *c,
                })
                .collect(),
            input: MatrixJson::from_matrix(&r.input),
        }
    }
}

#[derive(Serialize)]
struct PeakJson {
    x0: f64,
    sigma: f64,
    tau1: f64,
    tau2: f64,
    amplitude: f64,
    ratio: f64,
}

impl From<&PeakModel> for PeakJson {
    fn from(p: &PeakModel) -> Self {
        Self {
            x0: p.x0,
            sigma: p.sigma,
            tau1: p.tau1,
            tau2: p.tau2,
            amplitude: p.amplitude,
            ratio: p.ratio,
        }
    }
}

#[derive(Serialize)]
struct FitJson {
    peaks: Vec<PeakJson>,
    residual_norm: f64,
    gradient_norm: f64,
    converged: bool,
    stop: String,
    iterations: usize,
}

impl From<&MultiPeakFit> for FitJson {
    fn from(f: &MultiPeakFit) -> Self {
        Self {
            peaks: f.peaks.iter().map(PeakJson::from).collect(),
            residual_norm: f.residual_norm,
            gradient_norm: f.gradient_norm,
            converged: f.converged,
            stop: format!("{:?}", f.stop),
            iterations: f.iterations,
        }
    }
}

#[derive(Serialize)]
struct DelayedJson {
    delay_slots: usize,
    /// In the order 0°, 90°, 180°, 270°.
    phases: Vec<FitJson>,
}

#[derive(Serialize)]
struct InterferenceJson {
    row: usize,
    col: usize,
    amplitudes: [f64; 4],
}

#[derive(Serialize)]
struct PipelineJson {
    fidelity: f64,
    strategy: &'static str,
    noise: f64,
    noise_sigma: f64,
    seed: u64,
    rho: MatrixJson,
    raw: MatrixJson,
    diagonal: Vec<f64>,
    normalization: f64,
    interference: Vec<InterferenceJson>,
    clipped_eigenvalues: Vec<ClippedJson>,
    direct_fit: FitJson,
    delayed_fits: Vec<DelayedJson>,
}

/// Writes `text` to `out` (plus a manifest) or to stdout.
fn emit(
    out: Option<&Path>,
    text: &str,
    mut manifest: RunManifest,
    extra: &[(PathBuf, String)],
) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            manifest.artifact(path);
            for (p, body) in extra {
                std::fs::write(p, body).with_context(|| format!("writing {}", p.display()))?;
                manifest.artifact(p);
            }
            manifest.write_beside(path)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn estimate_json(kind: &'static str, est: &DmEstimate, seed: u64) -> EstimateJson {
    EstimateJson {
        kind,
        variant: est.variant.name(),
        mode: if est.shots_per_element == 0 {
            "exact"
        } else {
            "sampled"
        },
        shots_per_element: est.shots_per_element,
        seed,
        chi_flattening: (kind == "process").then_some(CHI_FLATTENING),
        matrix: MatrixJson::from_matrix(&est.matrix),
        stderr: MatrixJson::from_matrix(&est.stderr),
    }
}

fn run_protocol(kind: &'static str, args: &ProtocolArgs) -> Result<()> {
    let variant = Variant::from(args.variant);
    let budget = args.shots.map(|n| ShotBudget {
        shots_per_element: n,
        seed: args.seed,
    });
    let est = match kind {
        "state" => dm_state_full(
            &DensityOperator::new(read_matrix(&args.input)?)?,
            variant,
            budget.as_ref(),
        )?,
        "povm" => dm_povm_full(
            &PovmElement::new(read_matrix(&args.input)?)?,
            variant,
            budget.as_ref(),
        )?,
        _ => {
            let ch = read_json::<ChannelJson>(&args.input)?.to_channel()?;
            dm_process_full(&ch, variant, budget.as_ref())?
        }
    };
    let manifest = RunManifest::new(&format!("dm {kind}"), args.seed)
        .param("in", args.input.display())
        .param("variant", variant.name())
        .param(
            "shots",
            args.shots.map_or("exact".to_owned(), |n| n.to_string()),
        );
    emit(
        args.out.as_deref(),
        &to_json_string(&estimate_json(kind, &est, args.seed))?,
        manifest,
        &[],
    )
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    ensure!(
        args.seeds >= 2,
        "--seeds must be at least 2 to form a variance"
    );
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["A", "k", "n", "predicted", "empirical", "n_seeds"])?;
    let mut point = 0u64;
    for &k in &args.k_values {
        for &a in &args.a_values {
            // |A| > k has no Bernoulli model; those grid points are skipped
            if a.abs() > k {
                continue;
            }
            let predicted = variance_predicted(a, k, args.shots)?;
            let plan = ShotPlan::new(args.shots, 0, k)?;
            let estimates = (0..args.seeds)
                .map(|s| {
                    Ok(
                        sample_estimator(a, &plan.with_seed(args.seed ^ (point << 32 | s)))?
                            .estimate,
                    )
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
            let empirical = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
                / (estimates.len() - 1) as f64;
            csv.write_record([
                a.to_string(),
                k.to_string(),
                args.shots.to_string(),
                predicted.to_string(),
                empirical.to_string(),
                args.seeds.to_string(),
            ])?;
            point += 1;
        }
    }
    let text = String::from_utf8(csv.into_inner()?)?;
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let manifest = RunManifest::new("dm variance-sweep", args.seed)
        .param("a", join(&args.a_values))
        .param("k", join(&args.k_values))
        .param("shots", args.shots)
        .param("seeds", args.seeds);
    emit(args.out.as_deref(), &text, manifest, &[])
}

fn run_project(args: &ProjectArgs) -> Result<()> {
    let raw = read_matrix(&args.input)?;
    let strategy = Strategy::from(args.strategy);
    let report = project_physical(&raw, strategy)?;
    let text = to_json_string(&MatrixJson::from_matrix(report.output.matrix()))?;
    let extra = match &args.out {
        Some(path) => {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            vec![(
                path.with_file_name(format!("{stem}.report.json")),
                to_json_string(&ReportJson::new(&report))?,
            )]
        }
        None => Vec::new(),
    };
    let manifest = RunManifest::new("dm project", 0)
        .param("in", args.input.display())
        .param("strategy", strategy.name());
    emit(args.out.as_deref(), &text, manifest, &extra)
}

fn trace_setting(delay_ps: f64, phase: &str, period_ps: f64) -> Result<TraceSetting> {
    let slots = delay_ps / period_ps;
    ensure!(
        delay_ps >= 0.0 && (slots - slots.round()).abs() < 1e-9,
        "--delay {delay_ps} is not a whole number of {period_ps} ps periods"
    );
    let phase_deg: f64 = phase.parse()?;
    Ok(match slots.round() as usize {
        0 => TraceSetting::Direct,
        delay_slots => TraceSetting::Amzi {
            delay_slots,
            phase_deg,
        },
    })
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let state = read_json::<StateJson>(&args.state)?.to_state()?;
    let setting = trace_setting(args.delay, &args.phase, state.period_ps())?;
    if let TraceSetting::Amzi { delay_slots, .. } = setting {
        ensure!(
            delay_slots < state.dim(),
            "--delay of {delay_slots} periods leaves no overlapping pulses"
        );
    }
    let field = synth_pulse_train(&state, args.dt)?;
    let sigma = noise_sigma(&state, args.dt, args.noise)?;
    let trace = simulate_trace(&field, setting, sigma, args.seed, state.period_ps())?;
    let mut buf = Vec::new();
    write_waveform(&mut buf, &trace)?;
    let manifest = RunManifest::new("pulse simulate", args.seed)
        .param("state", args.state.display())
        .param("delay_ps", args.delay)
        .param("phase_deg", &args.phase)
        .param("noise", args.noise)
        .param("dt_ps", args.dt);
    emit(args.out.as_deref(), &String::from_utf8(buf)?, manifest, &[])
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let file = std::fs::File::open(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))?;
    let w = read_waveform(file).with_context(|| format!("in {}", args.input.display()))?;
    ensure!(args.peaks >= 1, "--peaks must be at least 1");
    let fit = fit_trace(&w, args.peaks, args.period, args.width)?;
    let manifest = RunManifest::new("pulse fit", 0)
        .param("in", args.input.display())
        .param("peaks", args.peaks)
        .param("period_ps", args.period)
        .param("width_ps", args.width);
    emit(
        args.out.as_deref(),
        &to_json_string(&FitJson::from(&fit))?,
        manifest,
        &[],
    )
}

fn run_pulse_pipeline(args: &PipelineArgs) -> Result<()> {
    let state = read_json::<StateJson>(&args.state)?.to_state()?;
    let cfg = PipelineConfig {
        dt: args.dt,
        noise: args.noise,
        seed: args.seed,
        strategy: args.strategy.into(),
    };
    let out = run_pipeline(&state, &cfg)?;
    let d = state.dim();
    let json = PipelineJson {
        fidelity: out.fidelity,
        strategy: cfg.strategy.name(),
        noise: args.noise,
        noise_sigma: out.noise_sigma,
        seed: args.seed,
        rho: MatrixJson::from_matrix(out.projection.output.matrix()),
        raw: MatrixJson::from_matrix(&out.extraction.rho.matrix),
        diagonal: out.extraction.diagonal.clone(),
        normalization: out.extraction.normalization,
        interference: out
            .extraction
            .interference
            .iter()
            .map(|p| InterferenceJson {
                row: p.row,
                col: p.row + p.delay_slots,
                amplitudes: p.amplitudes,
            })
            .collect(),
        clipped_eigenvalues: ReportJson::new(&out.projection).clipped_eigenvalues,
        direct_fit: FitJson::from(&out.direct),
        delayed_fits: out
            .delayed
            .iter()
            .map(|s| DelayedJson {
                delay_slots: s.delay_slots,
                phases: s.fits.iter().map(FitJson::from).collect(),
            })
            .collect(),
    };
    debug_assert_eq!(json.diagonal.len(), d);
    let manifest = RunManifest::new("pulse pipeline", args.seed)
        .param("state", args.state.display())
        .param("noise", args.noise)
        .param("strategy", cfg.strategy.name())
        .param("dt_ps", args.dt);
    emit(args.out.as_deref(), &to_json_string(&json)?, manifest, &[])
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Dm(DmCommand::State(a)) => run_protocol("state", a),
        Command::Dm(DmCommand::Povm(a)) => run_protocol("povm", a),
        Command::Dm(DmCommand::Process(a)) => run_protocol("process", a),
        Command::Dm(DmCommand::VarianceSweep(a)) => run_sweep(a),
        Command::Dm(DmCommand::Project(a)) => run_project(a),
        Command::Pulse(PulseCommand::Simulate(a)) => run_simulate(a),
        Command::Pulse(PulseCommand::Fit(a)) => run_fit(a),
        Command::Pulse(PulseCommand::Pipeline(a)) => run_pulse_pipeline(a),
    }
}

/// Process exit code for a validation or runtime failure.
pub const EXIT_ERROR: i32 = 2;

/// Parses `argv`, runs the command and returns the exit code. Errors are
/// reported on stderr as a single `error: ...` line.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            EXIT_ERROR
        }
    }
}
