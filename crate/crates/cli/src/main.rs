use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aeromodal::config::{CompressedConfig, PipelineConfig};
use aeromodal::cs::{make_measurement, MeasurementKind};
use aeromodal::ingest::{load_channels_path, save_channels_path};
use aeromodal::pipeline::{run_full, run_with_measurement, sweep_delay_for, Diagnostics, PipelineOutput};
use aeromodal::report::{compare_reports, emit_comparison, emit_report, load_report_path, ReportFormat};
use aeromodal::synth::{generate, truth_table, BenchmarkSpec};
use aeromodal::ModalError;
use clap::{Args, Parser, Subcommand};

const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "aeromodal",
    version,
    about = "Output-only modal identification for flutter test data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify modes of one test point.
    Run(RunArgs),
    /// Write a synthetic test point and its modal truth table.
    Synth(SynthArgs),
    /// Reconstruction error against the delay order.
    SweepD(SweepArgs),
    /// Match the modes of two reports.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Compress the valid channels before identification.
    #[arg(long)]
    limited: bool,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON benchmark description; missing fields take the standard values.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// `csv` or `bin`.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,300,400")]
    candidates: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Relative frequency window for matching.
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Synth(args) => synth(args),
        Command::SweepD(args) => sweep(args),
        Command::Compare(args) => compare(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, ModalError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            PipelineConfig::from_text(&text)
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> ModalError {
    ModalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ModalError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), ModalError> {
    let mut sink = create(path)?;
    f(&mut sink).and_then(|_| sink.flush()).map_err(|e| io_error(path, e))
}

fn write_diagnostics(dir: &Path, diag: &Diagnostics) -> Result<(), ModalError> {
    write_with(&dir.join("diagnostics.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, diag).map_err(std::io::Error::other)
    })?;
    write_with(&dir.join("singular_values.csv"), |w| {
        writeln!(w, "index,sigma")?;
        for (i, s) in diag.singular_values.iter().enumerate() {
            writeln!(w, "{},{s}", i + 1)?;
        }
        Ok(())
    })?;
    if let Some(rec) = &diag.reconstruction {
        write_with(&dir.join("reconstruction_history.csv"), |w| {
            writeln!(w, "iteration,rel_rms")?;
            for (i, e) in rec.history.iter().enumerate() {
                writeln!(w, "{},{e}", i + 1)?;
            }
            Ok(())
        })?;
    }
    if let Some(sweep) = &diag.sweep {
        write_with(&dir.join("gamma_sweep.csv"), |w| {
            writeln!(w, "gamma,cardinality,performance_loss,converged")?;
            for i in 0..sweep.gammas.len() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    sweep.gammas[i], sweep.cardinality[i], sweep.performance_loss[i], sweep.converged[i]
                )?;
            }
            Ok(())
        })?;
    }
    if let Some(ds) = &diag.delay_sweep {
        write_with(&dir.join("delay_sweep.csv"), |w| write_delay_curve(w, &ds.points))?;
    }
    write_with(&dir.join("timings.csv"), |w| {
        writeln!(w, "stage,seconds")?;
        for t in &diag.timings {
            writeln!(w, "{},{}", t.stage, t.seconds)?;
        }
        Ok(())
    })
}

fn write_delay_curve(w: &mut impl Write, points: &[(usize, f64)]) -> std::io::Result<()> {
    writeln!(w, "d,rel_rms")?;
    for (d, e) in points {
        writeln!(w, "{d},{e}")?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<u8, ModalError> {
    let format: ReportFormat = args.format.parse()?;
    let mut cfg = load_config(args.config.as_deref())?;
    let dataset = load_channels_path(&args.input)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;

    let outcome = if args.limited || cfg.compressed.is_some() {
        let base = cfg.compressed;
        let kind = match (&args.kind, base) {
            (Some(k), _) => k.parse::<MeasurementKind>()?,
            (None, Some(c)) => c.kind,
            (None, None) => MeasurementKind::GaussianRandom,
        };
        let p = args
            .p
            .or(base.map(|c| c.p))
            .ok_or_else(|| ModalError::Config("limited run needs --p or compressed.p".into()))?;
        let seed = args.seed.or(base.map(|c| c.seed)).unwrap_or(cfg.seed);
        cfg.compressed = Some(CompressedConfig { kind, p, seed });
        let c = make_measurement(kind, p, dataset.valid_count(), seed)?;
        write_with(&args.out.join("measurement.csv"), |w| c.write_csv(w))?;
        run_with_measurement(&dataset, &cfg, &c)
    } else {
        run_full(&dataset, &cfg)
    };

    match outcome {
        Ok(PipelineOutput {
            report, diagnostics, ..
        }) => {
            let path = args.out.join(format!("report.{}", format.extension()));
            write_with(&path, |w| emit_report(&report, format, w))?;
            write_diagnostics(&args.out, &diagnostics)?;
            write_with(&args.out.join("timing.json"), |w| {
                let timing = serde_json::json!({
                    "runtime_seconds": report.provenance.runtime_seconds,
                    "stages": report.provenance.stage_timings,
                });
                serde_json::to_writer_pretty(&mut *w, &timing).map_err(std::io::Error::other)
            })?;
            if format == ReportFormat::Table {
                emit_report(&report, ReportFormat::Table, std::io::stdout()).map_err(|e| io_error(&path, e))?;
            }
            if report.provenance.converged == Some(false) {
                eprintln!("warning: run did not converge; report written to {}", path.display());
                return Ok(EXIT_NOT_CONVERGED);
            }
            Ok(0)
        }
        Err(failure) => {
            write_diagnostics(&args.out, &failure.diagnostics)?;
            Err(failure.error)
        }
    }
}

fn synth(args: SynthArgs) -> Result<u8, ModalError> {
    let mut spec = match &args.spec {
        None => BenchmarkSpec::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            serde_json::from_str(&text).map_err(|e| ModalError::Parse {
                line: e.line(),
                message: e.to_string(),
            })?
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let ext = match args.format.as_str() {
        "csv" | "bin" => args.format.as_str(),
        other => return Err(ModalError::Config(format!("unknown channel format `{other}`"))),
    };
    let out = generate(&spec)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    save_channels_path(&out.dataset, &args.out.join(format!("channels.{ext}")))?;
    write_with(&args.out.join("truth.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &truth_table(&out.truth)).map_err(std::io::Error::other)
    })?;
    Ok(0)
}

fn sweep(args: SweepArgs) -> Result<u8, ModalError> {
    let cfg = load_config(args.config.as_deref())?;
    let dataset = load_channels_path(&args.input)?;
    let result = sweep_delay_for(&dataset, &cfg, &args.candidates)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    write_delay_curve(&mut lock, &result.points).map_err(|e| io_error(Path::new("<stdout>"), e))?;
    writeln!(lock, "# recommended d = {}", result.recommended).map_err(|e| io_error(Path::new("<stdout>"), e))?;
    if let Some(path) = &args.out {
        write_with(path, |w| write_delay_curve(w, &result.points))?;
    }
    Ok(0)
}

fn compare(args: CompareArgs) -> Result<u8, ModalError> {
    let a = load_report_path(&args.a)?;
    let b = load_report_path(&args.b)?;
    let cmp = compare_reports(&a, &b, args.tol);
    emit_comparison(&cmp, std::io::stdout()).map_err(|e| io_error(Path::new("<stdout>"), e))?;
    Ok(0)
}
