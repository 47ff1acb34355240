use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use upq_core::eval::{evaluate_manifest_path, Aggregation, Baseline, EvalConfig, Metric, PredictionSource};
use upq_core::io::{self, Encoding};
use upq_core::oracle::selfcheck;
use upq_core::synth::{write_dataset, ConfidenceMode, SceneSpec};
use upq_core::{derive_difficulty, Binarization, ErrorCategory, EvalError};

const EXIT_DIFFERENT: u8 = 1;
const EXIT_INPUT: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "upq", version, about = "Panoptic and uncertainty-aware panoptic quality evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a dataset manifest and write a metric report.
    Evaluate(EvaluateArgs),
    /// Derive difficulty maps from two annotation stages.
    DeriveDifficulty(DeriveArgs),
    /// Write seeded synthetic scenes and their manifest.
    Synth(SynthArgs),
    /// Compare the fast matchers with the brute-force oracle.
    Selfcheck(SelfcheckArgs),
    /// Compare two report files; exit code 1 when they differ.
    ReportDiff(ReportDiffArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Pq,
    Upq,
    Aupq,
    Miou,
}

#[derive(Clone, Copy, ValueEnum)]
enum BinarizationArg {
    /// confident when score >= threshold
    Ge,
    /// confident when score > threshold
    Gt,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Dataset,
    PerImageMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Prediction,
    H1,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Rgb,
    Class1000,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Encoding {
        match e {
            EncodingArg::Rgb => Encoding::Rgb,
            EncodingArg::Class1000 => Encoding::Class1000,
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset manifest (JSON).
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "pq")]
    metric: MetricArg,
    #[arg(long, default_value_t = 16)]
    grid_size: usize,
    #[arg(long, value_enum, default_value = "ge")]
    binarization: BinarizationArg,
    #[arg(long, value_enum, default_value = "dataset")]
    aggregation: AggregationArg,
    /// Worker threads [default: number of CPUs]
    #[arg(long, env = "UPQ_WORKERS")]
    workers: Option<usize>,
    /// Keep only samples with this condition tag (repeatable).
    #[arg(long = "condition")]
    conditions: Vec<String>,
    /// none, constant:<v>, marginal or oracle.
    #[arg(long, default_value = "none")]
    baseline: String,
    #[arg(long, value_enum, default_value = "prediction")]
    source: SourceArg,
    /// Class-confidence threshold for `upq`.
    #[arg(long, default_value_t = 0.5)]
    class_threshold: f64,
    /// Instance-confidence threshold for `upq`.
    #[arg(long, default_value_t = 0.5)]
    inst_threshold: f64,
    /// Report path; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl EvaluateArgs {
    fn config(&self) -> Result<EvalConfig, EvalError> {
        Ok(EvalConfig {
            metric: match self.metric {
                MetricArg::Pq => Metric::Pq,
                MetricArg::Upq => Metric::Upq,
                MetricArg::Aupq => Metric::Aupq,
                MetricArg::Miou => Metric::Miou,
            },
            grid_size: self.grid_size,
            binarization: match self.binarization {
                BinarizationArg::Ge => Binarization::AtLeast,
                BinarizationArg::Gt => Binarization::Above,
            },
            aggregation: match self.aggregation {
                AggregationArg::Dataset => Aggregation::Dataset,
                AggregationArg::PerImageMean => Aggregation::PerImageMean,
            },
            workers: self.workers.unwrap_or_else(default_workers),
            conditions: self.conditions.clone(),
            baseline: self.baseline.parse::<Baseline>()?,
            source: match self.source {
                SourceArg::Prediction => PredictionSource::Prediction,
                SourceArg::H1 => PredictionSource::H1,
            },
            thresholds: (self.class_threshold, self.inst_threshold),
        })
    }
}

#[derive(Args)]
struct DeriveArgs {
    /// Directory with first-stage annotations.
    h1: PathBuf,
    /// Directory with final annotations; files are paired by name.
    h2: PathBuf,
    /// Output directory for difficulty maps.
    out: PathBuf,
    #[arg(long, value_enum, default_value = "rgb")]
    encoding: EncodingArg,
}

#[derive(Args)]
struct SynthArgs {
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    #[arg(long, default_value_t = 0.5)]
    difficulty_rate: f64,
    /// aligned, random or constant:<v>.
    #[arg(long, default_value = "aligned")]
    confidence: String,
    #[arg(long, value_enum, default_value = "rgb")]
    encoding: EncodingArg,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 100)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenes also checked against the 256-pass sweep.
    #[arg(long, default_value_t = 3)]
    sweep_scenes: usize,
}

#[derive(Args)]
struct ReportDiffArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
}

fn parse_confidence(s: &str) -> Result<ConfidenceMode, EvalError> {
    match s {
        "aligned" => Ok(ConfidenceMode::Aligned),
        "random" => Ok(ConfidenceMode::Random),
        _ => s
            .strip_prefix("constant:")
            .and_then(|v| v.parse().ok())
            .map(ConfidenceMode::Constant)
            .ok_or_else(|| EvalError::InvalidArgument(format!("unknown confidence mode '{s}'"))),
    }
}

fn evaluate(args: &EvaluateArgs) -> Result<u8, EvalError> {
    let report = evaluate_manifest_path(&args.manifest, &args.config()?)?;
    match &args.output {
        Some(path) => io::save_report(&report, path)?,
        None => print!("{}", io::report_to_string(&report)?),
    }
    Ok(0)
}

fn list_pngs(dir: &Path) -> Result<Vec<String>, EvalError> {
    let entries = std::fs::read_dir(dir).map_err(|e| EvalError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

fn derive(args: &DeriveArgs) -> Result<u8, EvalError> {
    let encoding = Encoding::from(args.encoding);
    std::fs::create_dir_all(&args.out).map_err(|e| EvalError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let names = list_pngs(&args.h1)?;
    for name in &names {
        let h1 = io::load_panoptic(&args.h1.join(name), encoding).map_err(|e| e.in_sample(name))?;
        let h2 = io::load_panoptic(&args.h2.join(name), encoding).map_err(|e| e.in_sample(name))?;
        let d = derive_difficulty(&h1, &h2).map_err(|e| e.in_sample(name))?;
        io::save_difficulty(&d, &args.out.join(name))?;
    }
    eprintln!("wrote {} difficulty maps to {}", names.len(), args.out.display());
    Ok(0)
}

fn synth(args: &SynthArgs) -> Result<u8, EvalError> {
    let spec = SceneSpec {
        seed: args.seed,
        width: args.width,
        height: args.height,
        difficulty_rate: args.difficulty_rate,
        confidence: parse_confidence(&args.confidence)?,
        ..SceneSpec::default()
    };
    spec.validate()?;
    write_dataset(&args.out, &spec, args.count, args.encoding.into())?;
    eprintln!("wrote {} scenes to {}", args.count, args.out.display());
    Ok(0)
}

fn run_selfcheck(args: &SelfcheckArgs) -> Result<u8, EvalError> {
    let results = selfcheck(args.scenes, args.seed, args.sweep_scenes)?;
    let mut total = 0;
    for r in &results {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({} checked, {} diffs)", r.property, r.checked, r.diffs);
        total += r.diffs;
    }
    println!("{} diffs={total}", if total == 0 { "PASS" } else { "FAIL" });
    Ok(if total == 0 { 0 } else { EXIT_VALIDATION })
}

fn report_diff(args: &ReportDiffArgs) -> Result<u8, EvalError> {
    let load = |p: &Path| -> Result<serde_json::Value, EvalError> {
        let report = io::load_report(p)?;
        Ok(serde_json::to_value(report).expect("report serializes"))
    };
    let diffs = io::diff_values(&load(&args.a)?, &load(&args.b)?, args.tolerance);
    for d in &diffs {
        println!("{d}");
    }
    Ok(if diffs.is_empty() { 0 } else { EXIT_DIFFERENT })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::DeriveDifficulty(a) => derive(a),
        Command::Synth(a) => synth(a),
        Command::Selfcheck(a) => run_selfcheck(a),
        Command::ReportDiff(a) => report_diff(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind_name());
            ExitCode::from(match e.category() {
                ErrorCategory::Input => EXIT_INPUT,
                ErrorCategory::Validation => EXIT_VALIDATION,
            })
        }
    }
}
