//! The `oodshift` command line.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O or environment
//! failure. Every subcommand writes only inside `--out`, which is created if
//! needed and always receives a `manifest.json`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use oodshift_core::records::{evaluate_records, Payload, Split, TextDetector};
use oodshift_core::runner::{SweepConfig, SweepKind};
use oodshift_core::textshift::{append_filler, oracle_detect, partition_by_class, BowConfig};
use serde::Serialize;
use serde_json::json;

use crate::corpusio::{corpus_to_jsonl, load_corpus};
use crate::error::{Error, Result};
use crate::exec::run_sweep;
use crate::manifest::OutputDir;
use crate::output::{report_line, sweep_csv, sweep_summary_json};
use crate::scoreio::load_records;

#[derive(Debug, Parser)]
#[command(
    name = "oodshift",
    version,
    about = "Semantic vs background shift simulation and OOD evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the semantic-overlap or background-displacement simulation sweep.
    Sim(SimArgs),
    /// Score a JSONL file of model outputs and report AUROC / FAR95.
    Eval(EvalArgs),
    /// Build controlled text shifts from a corpus.
    #[command(subcommand)]
    Textshift(TextshiftCommand),
    /// Train and evaluate the bag-of-words logistic-regression oracle.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepArg {
    Semantic,
    Background,
}

impl From<SweepArg> for SweepKind {
    fn from(s: SweepArg) -> Self {
        match s {
            SweepArg::Semantic => SweepKind::Semantic,
            SweepArg::Background => SweepKind::Background,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, value_enum)]
    pub sweep: SweepArg,
    /// Sweep configuration JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: one per core). Output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DetectorArg {
    Msp,
    Ppl,
    Logpx,
}

impl From<DetectorArg> for TextDetector {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::Msp => TextDetector::Msp,
            DetectorArg::Ppl => TextDetector::Ppl,
            DetectorArg::Logpx => TextDetector::Logpx,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum)]
    pub detector: DetectorArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TextshiftCommand {
    /// Append seeded runs of filler words to every example, one output per length.
    AppendFiller {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        filler: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a labeled corpus into ID classes and the rest.
    Partition {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        id_classes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// ID corpus (JSONL).
    #[arg(long)]
    pub id: PathBuf,
    /// OOD corpus (JSONL).
    #[arg(long)]
    pub ood: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = BowConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = BowConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = BowConfig::default().l2)]
    pub l2: f64,
    #[arg(long, default_value_t = BowConfig::default().min_token_count)]
    pub min_token_count: usize,
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Sim(args) => cmd_sim(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Textshift(cmd) => cmd_textshift(cmd),
        Command::Oracle(args) => cmd_oracle(&args),
    }
}

pub fn read_config(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("value serializes")
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(v).expect("value serializes");
    text.push('\n');
    text.into_bytes()
}

pub fn cmd_sim(args: &SimArgs) -> Result<()> {
    let kind = SweepKind::from(args.sweep);
    let config = match &args.config {
        Some(path) => read_config(path)?,
        None => SweepConfig::default(),
    };
    config.validate(kind)?;
    let result = run_sweep(kind, &config, args.threads)?;
    let mut out = OutputDir::create(&args.out)?;
    out.write(&format!("{}.csv", kind.name()), sweep_csv(&result).as_bytes())?;
    out.write(
        &format!("{}_summary.json", kind.name()),
        sweep_summary_json(&result).as_bytes(),
    )?;
    for cell in &result.cells {
        eprintln!("{}", oodshift_core::runner::cell_label(cell));
    }
    out.finish(
        &format!("sim {}", kind.name()),
        Some(result.config.master_seed),
        to_value(&result.config),
    )
}

#[derive(Debug, Serialize)]
struct Perplexities {
    id: f64,
    ood: f64,
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: oodshift_core::metrics::EvalReport,
    /// Mean conventional perplexity (reciprocal of the PPL score) per split.
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_perplexity: Option<Perplexities>,
}

fn mean_perplexity(records: &[oodshift_core::records::ScoreRecord]) -> Result<Perplexities> {
    let mut sums = [(0.0, 0usize); 2];
    for r in records {
        if let Payload::TokenLogprobs(t) = r.payload() {
            let slot = &mut sums[(r.split() == Split::Ood) as usize];
            slot.0 += 1.0 / oodshift_core::detectors::ppl_score(t);
            slot.1 += 1;
        }
    }
    Ok(Perplexities {
        id: sums[0].0 / sums[0].1 as f64,
        ood: sums[1].0 / sums[1].1 as f64,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let detector = TextDetector::from(args.detector);
    let records = load_records(&args.scores, detector.payload_kind())?;
    let report = evaluate_records(&records, detector)?;
    let output = EvalOutput {
        mean_perplexity: match detector {
            TextDetector::Ppl => Some(mean_perplexity(&records)?),
            _ => None,
        },
        report,
    };
    let mut out = OutputDir::create(&args.out)?;
    out.write("report.json", &pretty(&output))?;
    println!("{}", report_line(&output.report));
    out.finish(
        "eval",
        None,
        json!({
            "scores": args.scores.display().to_string(),
            "detector": detector.name(),
        }),
    )
}

pub fn cmd_textshift(cmd: TextshiftCommand) -> Result<()> {
    match cmd {
        TextshiftCommand::AppendFiller {
            corpus,
            filler,
            lengths,
            seed,
            out,
        } => {
            let base = load_corpus(&corpus)?;
            let filler_corpus = load_corpus(&filler)?;
            let shifted = lengths
                .iter()
                .map(|&len| Ok((len, append_filler(&base, &filler_corpus, len, seed)?)))
                .collect::<Result<Vec<_>>>()?;
            let mut dir = OutputDir::create(&out)?;
            for (len, corpus) in &shifted {
                dir.write(&format!("filler_{len}.jsonl"), corpus_to_jsonl(corpus).as_bytes())?;
            }
            dir.finish(
                "textshift append-filler",
                Some(seed),
                json!({
                    "corpus": corpus.display().to_string(),
                    "filler": filler.display().to_string(),
                    "lengths": lengths,
                    "seed": seed,
                }),
            )
        }
        TextshiftCommand::Partition {
            corpus,
            id_classes,
            out,
        } => {
            let base = load_corpus(&corpus)?;
            let (id, ood) = partition_by_class(&base, &id_classes)?;
            if ood.is_empty() {
                eprintln!("warning: every class is listed as ID; the OOD partition is empty");
            }
            let mut dir = OutputDir::create(&out)?;
            dir.write("id.jsonl", corpus_to_jsonl(&id).as_bytes())?;
            dir.write("ood.jsonl", corpus_to_jsonl(&ood).as_bytes())?;
            dir.finish(
                "textshift partition",
                None,
                json!({
                    "corpus": corpus.display().to_string(),
                    "id_classes": id_classes,
                }),
            )
        }
    }
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let config = BowConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        l2: args.l2,
        min_token_count: args.min_token_count,
    };
    let id = load_corpus(&args.id)?;
    let ood = load_corpus(&args.ood)?;
    let outcome = oracle_detect(&id.texts(), &ood.texts(), args.train_fraction, args.seed, &config)?;
    let report = json!({
        "report": outcome.report,
        "train_fraction": outcome.train_fraction,
        "seed": outcome.seed,
        "n_train_id": outcome.n_train_id,
        "n_train_ood": outcome.n_train_ood,
        "training": config,
        "final_training_loss": outcome.model.loss_trace.last(),
    });
    let mut model = outcome.model;
    model.loss_trace.clear();
    let mut out = OutputDir::create(&args.out)?;
    out.write("report.json", &pretty(&report))?;
    out.write("model.json", &pretty(&model))?;
    println!("{}", report_line(&outcome.report));
    out.finish(
        "oracle",
        Some(args.seed),
        json!({
            "id": args.id.display().to_string(),
            "ood": args.ood.display().to_string(),
            "train_fraction": args.train_fraction,
            "seed": args.seed,
            "training": config,
        }),
    )
}
