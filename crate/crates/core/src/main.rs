use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sira::harness::{
    calibrate, run_reconstruction, support_from_signal, xcheck, Metrics, PathKind, RunConfig,
    ToneSource,
};
use sira::hw::LogLut;
use sira::io::{read_signal, write_detection, write_lut, write_signal, write_spectrum, write_table, write_trace};
use sira::signal::sum_sq_amplitudes;
use sira::{synthesize, AmpMode, Error, ReconStatus, ThresholdConfig, ThresholdVariant};

const EXIT_CONFIG: u8 = 2;
const EXIT_EMPTY_SUPPORT: u8 = 3;
const EXIT_LINALG: u8 = 4;

#[derive(Parser)]
#[command(name = "sira", version, about = "Single-iteration sparse spectral reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a multitone signal as `index,re,im` CSV.
    Gen(GenArgs),
    /// Subsample a signal file at random positions and reconstruct it.
    Recon(ReconArgs),
    /// Monte-Carlo check of the missing-sample variance model and threshold coverage.
    Calibrate(SweepArgs),
    /// Compare the fixed-point threshold path against the reference.
    Xcheck(SweepArgs),
    /// Write the log2 mantissa table as `index,value` CSV.
    DumpLut(DumpArgs),
}

#[derive(Args)]
struct SignalArgs {
    /// Signal length N.
    #[arg(long)]
    n: usize,
    /// Tones as `A@k[,A@k...]` or `random:K:lo:hi`.
    #[arg(long)]
    tones: Option<ToneSource>,
    /// Shorthand for `--tones random:K:1:1`.
    #[arg(long)]
    k: Option<usize>,
}

impl SignalArgs {
    fn tone_source(&self) -> sira::Result<ToneSource> {
        match (&self.tones, self.k) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(k)) => Ok(ToneSource::Random { k, lo: 1.0, hi: 1.0 }),
            (None, None) => Err(Error::InvalidArgument("one of --tones or --k is required".into())),
        }
    }
}

#[derive(Args)]
struct ThresholdArgs {
    /// Probability that every noise bin stays below the threshold.
    #[arg(long, default_value_t = 0.99)]
    p: f64,
    /// Threshold formula: `paper` or `ref10`.
    #[arg(long, default_value = "ref10")]
    variant: ThresholdVariant,
    /// Source of the amplitude power: `oracle` or `estimate`.
    #[arg(long = "amp-mode", default_value = "oracle")]
    amp_mode: AmpMode,
}

impl ThresholdArgs {
    fn config(&self) -> sira::Result<ThresholdConfig> {
        ThresholdConfig::new(self.p, self.variant, self.amp_mode)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    signal: SignalArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconArgs {
    /// Input signal CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of available samples N_a.
    #[arg(long)]
    na: usize,
    /// Seed of the sampling pattern.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth tones; derived from the input's spectrum when omitted.
    #[arg(long)]
    tones: Option<ToneSource>,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// `reference` or `hardware`.
    #[arg(long, default_value = "reference")]
    path: PathKind,
    /// Directory for spectrum.csv, detection.csv, metrics.csv (and trace.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    signal: SignalArgs,
    #[arg(long)]
    na: usize,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Master seed; trial seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Per-trial CSV; the summary goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn run_config(&self) -> sira::Result<RunConfig> {
        let cfg = RunConfig {
            n: self.signal.n,
            n_a: self.na,
            tones: self.signal.tone_source()?,
            threshold: self.threshold.config()?,
            seed: self.seed,
            path: PathKind::Reference,
            trials: self.trials,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::EmptySupport => EXIT_EMPTY_SUPPORT,
            Error::Underdetermined { .. } | Error::Singular { .. } => EXIT_LINALG,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> sira::Result<()>) -> sira::Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn cmd_gen(args: &GenArgs) -> CmdResult {
    let spec = args.signal.tone_source()?.spec(args.signal.n, args.seed)?;
    let x = synthesize(&spec);
    with_output(args.out.as_deref(), |w| write_signal(w, x.samples()))?;
    Ok(())
}

fn cmd_recon(args: &ReconArgs) -> CmdResult {
    let truth = read_signal(File::open(&args.input).map_err(Error::from)?)?;
    let n = truth.len();
    let cfg = args.threshold.config()?;
    if args.na == 0 || args.na > n {
        return Err(Error::InvalidArgument(format!("--na {} must lie in [1, {n}]", args.na)).into());
    }
    let (support, sum_sq) = match &args.tones {
        Some(tones) => {
            let spec = tones.spec(n, args.seed)?;
            (spec.support(), sum_sq_amplitudes(&spec))
        }
        None => support_from_signal(&truth),
    };
    let run = run_reconstruction(&truth, &support, sum_sq, args.na, args.seed, &cfg, args.path)?;

    let metrics_rows = vec![run.metrics.row()];
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        with_output(Some(&dir.join("spectrum.csv")), |w| write_spectrum(w, &run.result.spectrum))?;
        with_output(Some(&dir.join("detection.csv")), |w| write_detection(w, &run.result.detection))?;
        with_output(Some(&dir.join("metrics.csv")), |w| write_table(w, &Metrics::HEADER, &metrics_rows))?;
        if let Some(trace) = &run.trace {
            with_output(Some(&dir.join("trace.csv")), |w| write_trace(w, trace))?;
        }
    }
    with_output(None, |w| write_table(w, &Metrics::HEADER, &metrics_rows))?;

    if run.result.status == ReconStatus::EmptySupport {
        return Err(Error::EmptySupport.into());
    }
    Ok(())
}

fn cmd_calibrate(args: &SweepArgs) -> CmdResult {
    if args.trials < 100 {
        return Err(Error::InvalidArgument(format!("--trials {} must be at least 100", args.trials)).into());
    }
    let report = calibrate(&args.run_config()?)?;
    if let Some(out) = &args.out {
        with_output(Some(out), |w| {
            write_table(w, &sira::harness::CalibrationReport::TRIAL_HEADER, &report.trial_rows())
        })?;
    }
    with_output(None, |w| {
        write_table(w, &sira::harness::CalibrationReport::SUMMARY_HEADER, &[report.summary_row()])
    })?;
    Ok(())
}

fn cmd_xcheck(args: &SweepArgs) -> CmdResult {
    let report = xcheck(&args.run_config()?)?;
    if let Some(out) = &args.out {
        with_output(Some(out), |w| {
            write_table(w, &sira::harness::XcheckReport::TRIAL_HEADER, &report.trial_rows())
        })?;
    }
    with_output(None, |w| {
        write_table(w, &sira::harness::XcheckReport::SUMMARY_HEADER, &[report.summary_row()])
    })?;
    Ok(())
}

fn cmd_dump_lut(args: &DumpArgs) -> CmdResult {
    with_output(args.out.as_deref(), |w| write_lut(w, LogLut::shared()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Recon(a) => cmd_recon(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Xcheck(a) => cmd_xcheck(a),
        Command::DumpLut(a) => cmd_dump_lut(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
