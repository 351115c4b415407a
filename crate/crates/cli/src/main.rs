mod commands;
mod gradcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use codesum_core::{FusionOrder, Language};

#[derive(Parser)]
#[command(name = "codesum", version, about = "Extractive-and-abstractive code summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base values: desk (small, default) or full (E=H=512).
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the seed from the config file and EACS_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum BucketKind {
    Code,
    Comment,
}

#[derive(Subcommand)]
enum Command {
    /// Split a snippet into statements, one per line.
    Segment {
        /// Source file; standard input when omitted or "-".
        file: Option<PathBuf>,
        #[arg(long, default_value = "java")]
        lang: Language,
    },
    /// Oracle-label every pair of a corpus (JSON lines out).
    Label {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "java")]
        lang: Language,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the important-statement extractor.
    TrainExtractor {
        #[arg(long)]
        corpus: PathBuf,
        /// Validation corpus used for model selection.
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        lang: Option<Language>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the statements the extractor selects.
    Extract {
        #[arg(long)]
        ckpt: PathBuf,
        /// Source file; standard input when omitted or "-".
        #[arg(long)]
        code: Option<PathBuf>,
        /// Also print each statement's probability.
        #[arg(long)]
        verbose: bool,
    },
    /// Train the abstracter on top of a frozen extractor.
    TrainAbstracter {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        extractor: PathBuf,
        #[arg(long)]
        fusion: Option<FusionOrder>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a summary for one snippet.
    Summarize {
        #[arg(long)]
        extractor: PathBuf,
        #[arg(long)]
        abstracter: PathBuf,
        /// Source file; standard input when omitted or "-".
        #[arg(long)]
        code: Option<PathBuf>,
        /// Defaults to the abstracter's max_summary_len.
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long, default_value_t = 1)]
        beam: usize,
    },
    /// Score hypotheses against references, one tokenized sentence per line.
    Evaluate {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        /// Baseline hypotheses for rank-sum tests.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        buckets: Option<BucketKind>,
        /// Corpus aligned with the references; needed for code-length buckets.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// JSON record path; defaults to HYPS.report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row label in the table; defaults to the hypothesis file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Finite-difference gradient checks of the LSTM cell and both model losses.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Segment { .. } => "segment",
            Command::Label { .. } => "label",
            Command::TrainExtractor { .. } => "train-extractor",
            Command::Extract { .. } => "extract",
            Command::TrainAbstracter { .. } => "train-abstracter",
            Command::Summarize { .. } => "summarize",
            Command::Evaluate { .. } => "evaluate",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Segment { file, lang } => commands::segment(file.as_deref(), lang),
        Command::Label { corpus, lang, out } => commands::label(&corpus, lang, out.as_deref()),
        Command::TrainExtractor {
            corpus,
            valid,
            lang,
            config,
            out,
        } => commands::train_extractor(&corpus, valid.as_deref(), lang, &config, &out),
        Command::Extract { ckpt, code, verbose } => commands::extract(&ckpt, code.as_deref(), verbose),
        Command::TrainAbstracter {
            corpus,
            valid,
            extractor,
            fusion,
            config,
            out,
        } => commands::train_abstracter(&corpus, valid.as_deref(), &extractor, fusion, &config, &out),
        Command::Summarize {
            extractor,
            abstracter,
            code,
            max_len,
            beam,
        } => commands::summarize(&extractor, &abstracter, code.as_deref(), max_len, beam),
        Command::Evaluate {
            refs,
            hyps,
            compare,
            buckets,
            corpus,
            out,
            name,
        } => commands::evaluate(commands::EvaluateArgs {
            refs,
            hyps,
            compare,
            buckets,
            corpus,
            out,
            name,
        }),
        Command::Gradcheck { tol } => gradcheck::run(tol),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let stage = cli.command.stage();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{stage}]: {message}");
            ExitCode::FAILURE
        }
    }
}
