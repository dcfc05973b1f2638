use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quantex::analyze::{dataset_stats, AmbiguityTokens};
use quantex::bench::{bench, BenchConfig};
use quantex::corpus::{load_jsonl, load_spans, write_jsonl, ProductRecord};
use quantex::model_qe::QuantityExtractor;
use quantex::model_uom::UomClassifier;
use quantex::pipeline::{baseline_row, ErrorRow, Pipeline, PredictionRow};
use quantex::rules::{BaselineConfig, UnitLexicon};
use quantex::synthgen::{generate_with, split_examples, Locale, SynthConfig};
use quantex::tagger::tag_dataset;
use quantex::train::{evaluate, evaluate_extraction, train_qe, train_uom, EvalMode, EvalReport, Phase, TrainConfig};

#[derive(Parser)]
#[command(name = "quantex", version, about = "Quantity extraction from product text")]
struct Cli {
    /// Worker threads for parallel stages (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Uom,
    Extraction,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic catalog.
    Synth {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict to these locales (us, eu5, in), equally weighted.
        #[arg(long, value_delimiter = ',')]
        locale: Vec<Locale>,
        #[arg(long)]
        ambiguity_share: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Gold-span sidecar from the generator.
        #[arg(long)]
        spans_out: Option<PathBuf>,
    },
    /// Weakly label records with qualified spans.
    Tag {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ambiguity and span statistics.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        spans: Option<PathBuf>,
    },
    /// Train the UoM classifier.
    TrainUom {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the quantity extractor against a frozen classifier.
    TrainQe {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        uom_checkpoint: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        spans: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score trained models on labelled records.
    Eval {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        uom_checkpoint: PathBuf,
        #[arg(long)]
        qe_checkpoint: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// JSON report path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Predict type, spans and total per record.
    Predict {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        uom_checkpoint: PathBuf,
        #[arg(long)]
        qe_checkpoint: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        /// Classify from the title only.
        #[arg(long)]
        short_text: bool,
    },
    /// Rule-based predictions in the same format as `predict`.
    Baseline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report path when every record carries gold labels.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Single-record latency across worker counts.
    Bench {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        uom_checkpoint: PathBuf,
        #[arg(long)]
        qe_checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long)]
        short_text: bool,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Checkpoint(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Checkpoint(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Checkpoint(m) => m,
        }
    }
}

impl From<quantex::Error> for Failure {
    fn from(e: quantex::Error) -> Self {
        match e {
            quantex::Error::Checkpoint(_) => Failure::Checkpoint(e.to_string()),
            quantex::Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn load_uom(path: &Path) -> Outcome<UomClassifier> {
    UomClassifier::load(path).map_err(|e| Failure::Checkpoint(format!("{}: {}", path.display(), e)))
}

fn load_qe(path: &Path) -> Outcome<QuantityExtractor> {
    QuantityExtractor::load(path).map_err(|e| Failure::Checkpoint(format!("{}: {}", path.display(), e)))
}

fn load_config(path: Option<&Path>) -> Outcome<TrainConfig> {
    match path {
        Some(p) => Ok(TrainConfig::load(p)?),
        None => Ok(TrainConfig::default()),
    }
}

fn sink(path: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Data(format!("{}: {}", p.display(), e)))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Outcome {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Runs `f` over every input line, writing one row per line. Unparseable
/// lines become error rows; returns whether any occurred.
fn map_lines(input: &Path, out: Option<&Path>, mut f: impl FnMut(&ProductRecord) -> Outcome<PredictionRow>) -> Outcome<(bool, Vec<PredictionRow>)> {
    let file = File::open(input).map_err(|e| Failure::Data(format!("{}: {}", input.display(), e)))?;
    let mut w = sink(out)?;
    let mut failed = false;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<ProductRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|_| r));
        let row = match parsed {
            Ok(r) => f(&r).map_err(|e| e.message().to_string()),
            Err(e) => Err(e),
        };
        match row {
            Ok(row) => {
                serde_json::to_writer(&mut w, &row)?;
                rows.push(row);
            }
            Err(error) => {
                failed = true;
                serde_json::to_writer(&mut w, &ErrorRow { line: i + 1, error })?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok((failed, rows))
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Synth {
            n,
            seed,
            locale,
            ambiguity_share,
            out,
            spans_out,
        } => {
            let mut config = SynthConfig {
                n,
                seed,
                ..SynthConfig::default()
            };
            if !locale.is_empty() {
                let w = 1.0 / locale.len() as f64;
                config.locales = locale.into_iter().map(|l| (l, w)).collect();
            }
            if let Some(share) = ambiguity_share {
                config.ambiguity_share = share;
            }
            let (records, spans) = split_examples(&generate_with(&config).map_err(|e| Failure::Usage(e.to_string()))?);
            write_jsonl(&records, &out)?;
            if let Some(p) = spans_out {
                write_jsonl(&spans, &p)?;
            }
            log::info!("wrote {} records", records.len());
        }
        Command::Tag { input, out } => {
            let records = load_jsonl(&input)?;
            let (spans, summary) = tag_dataset(&records, &UnitLexicon::default());
            write_jsonl(&spans, &out)?;
            emit_json(&summary, None)?;
        }
        Command::Analyze { input, spans } => {
            let records = load_jsonl(&input)?;
            let spans = spans.map(load_spans).transpose()?;
            emit_json(&dataset_stats(&records, spans.as_deref(), &AmbiguityTokens::default()), None)?;
        }
        Command::TrainUom { config, input, out, seed } => {
            let mut config = load_config(config.as_deref())?;
            config.phase = Phase::Uom;
            if let Some(s) = seed {
                config.seed = s;
            }
            let records = load_jsonl(&input)?;
            let outcome = train_uom(&config, &records)?;
            outcome.model.save(&out)?;
            emit_json(&outcome.log, None)?;
        }
        Command::TrainQe {
            config,
            uom_checkpoint,
            input,
            spans,
            out,
            seed,
        } => {
            let mut config = load_config(config.as_deref())?;
            config.phase = Phase::Qe;
            if uom_checkpoint.is_some() {
                config.uom_checkpoint = uom_checkpoint;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            config.validate()?;
            let classifier = load_uom(config.uom_checkpoint.as_deref().expect("validated"))?;
            let records = load_jsonl(&input)?;
            let spans = load_spans(&spans)?;
            let outcome = train_qe(&config, &records, &spans, &classifier)?;
            outcome.model.save(&out)?;
            emit_json(
                &serde_json::json!({
                    "log": outcome.log,
                    "dataset": outcome.dataset,
                    "frozen_hash_before": outcome.frozen_hash_before,
                    "frozen_hash_after": outcome.frozen_hash_after,
                }),
                None,
            )?;
        }
        Command::Eval {
            mode,
            input,
            uom_checkpoint,
            qe_checkpoint,
            threshold,
            out,
            csv,
        } => {
            let classifier = load_uom(&uom_checkpoint)?;
            let (mode, extractor) = match mode {
                Mode::Uom => (EvalMode::Uom, None),
                Mode::Extraction => {
                    let p = qe_checkpoint.ok_or_else(|| Failure::Usage("--mode extraction needs --qe-checkpoint".into()))?;
                    (EvalMode::Extraction, Some(load_qe(&p)?))
                }
            };
            let records = load_jsonl(&input)?;
            let mut decode = TrainConfig::default().decode;
            decode.threshold = threshold.or(extractor.as_ref().map(|e| e.config.threshold)).unwrap_or(decode.threshold);
            let report = evaluate(&classifier, extractor.as_ref(), &records, mode, &decode)?;
            write_reports(&report, out.as_deref(), csv.as_deref())?;
        }
        Command::Predict {
            input,
            out,
            uom_checkpoint,
            qe_checkpoint,
            threshold,
            short_text,
        } => {
            let mut pipeline = Pipeline::new(load_uom(&uom_checkpoint)?, load_qe(&qe_checkpoint)?);
            if let Some(t) = threshold {
                if !(t > 0.0 && t < 1.0) {
                    return Err(Failure::Usage(format!("threshold {} outside (0, 1)", t)));
                }
                pipeline.decode.threshold = t;
            }
            pipeline.classifier.config.short_text |= short_text;
            let (failed, _) = map_lines(&input, out.as_deref(), |r| Ok(pipeline.predict(r)?))?;
            if failed {
                return Err(Failure::Data("some input lines could not be processed".into()));
            }
        }
        Command::Baseline { input, out, report } => {
            let lexicon = UnitLexicon::default();
            let config = BaselineConfig::default();
            let (failed, rows) = map_lines(&input, out.as_deref(), |r| Ok(baseline_row(r, &lexicon, &config)))?;
            if failed {
                return Err(Failure::Data("some input lines could not be processed".into()));
            }
            let records = load_jsonl(&input)?;
            let labelled = !records.is_empty() && records.iter().all(|r| r.gold_uom.is_some() && r.gold_total.is_some());
            if labelled && (report.is_some() || out.is_some()) {
                let outcomes: Vec<_> = rows.iter().map(PredictionRow::outcome).collect();
                emit_json(&evaluate_extraction(&outcomes, &records, &lexicon)?, report.as_deref())?;
            }
        }
        Command::Bench {
            input,
            uom_checkpoint,
            qe_checkpoint,
            threads,
            iters,
            warmup,
            batch,
            short_text,
        } => {
            let mut pipeline = Pipeline::new(load_uom(&uom_checkpoint)?, load_qe(&qe_checkpoint)?);
            pipeline.classifier.config.short_text |= short_text;
            let records = load_jsonl(&input)?;
            let config = BenchConfig {
                threads,
                iterations: iters,
                warmup,
                batch,
            };
            emit_json(&bench(&pipeline, &records, &config)?, None)?;
        }
    }
    Ok(())
}

fn write_reports(report: &EvalReport, json: Option<&Path>, csv: Option<&Path>) -> Outcome {
    emit_json(report, json)?;
    if let Some(p) = csv {
        let mut w = sink(Some(p))?;
        writeln!(w, "{}\n{}", EvalReport::csv_header(), report.csv_row())?;
        w.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {}", e);
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
