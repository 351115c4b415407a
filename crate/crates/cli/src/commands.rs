use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use codesum_core::abstracter::train_abstracter as fit_abstracter;
use codesum_core::corpus::{build_vocabulary, load_corpus, RawPair};
use codesum_core::emit::{compare_reports, emit_report};
use codesum_core::extractor::{predict_important, train_extractor as fit_extractor};
use codesum_core::metrics::{evaluate_corpus, Bucketing};
use codesum_core::oracle::label_statements;
use codesum_core::segmenter::segment as split;
use codesum_core::train::EpochRecord;
use codesum_core::{
    Checkpoint, ExtractorModel, FusionOrder, Language, ModelKind, RunConfig, Summarizer, TokenSequence,
};
use serde_json::json;

use crate::{BucketKind, ConfigArgs};

fn read_source(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        _ => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text).context("reading standard input")?;
            Ok(text)
        }
    }
}

fn load_pairs(path: &Path) -> Result<Vec<RawPair>> {
    let corpus = load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))?;
    if corpus.skipped > 0 {
        eprintln!("{}: skipped {} unusable records", path.display(), corpus.skipped);
    }
    Ok(corpus.pairs)
}

/// Preset, then config file, then EACS_SEED, then explicit flags.
fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut text = match &args.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
        None => String::new(),
    };
    if let Some(preset) = &args.preset {
        text.push_str(&format!("\npreset = {preset}\n"));
    }
    let mut config = RunConfig::parse(&text).context("parsing configuration")?;
    config.apply_env()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    Ok(config)
}

fn progress(model: &'static str, total: usize) -> impl FnMut(&EpochRecord) {
    let every = (total / 10).max(1);
    move |r: &EpochRecord| {
        if r.epoch == 1 || r.epoch.is_multiple_of(every) || r.epoch == total {
            eprintln!(
                "{model} epoch {:>4}/{total}  train {:.5}  valid {:.5}{}",
                r.epoch,
                r.train_loss,
                r.valid_loss,
                if r.improved { "  *" } else { "" }
            );
        }
    }
}

fn load_kind(path: &Path, kind: ModelKind) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    ckpt.expect_kind(kind).with_context(|| path.display().to_string())?;
    Ok(ckpt)
}

pub fn segment(file: Option<&Path>, lang: Language) -> Result<()> {
    let code = read_source(file)?;
    let snippet = split(&code, lang)?;
    let mut out = io::stdout().lock();
    for s in &snippet.statements {
        writeln!(out, "{}", s.text)?;
    }
    Ok(())
}

pub fn label(corpus: &Path, lang: Language, out: Option<&Path>) -> Result<()> {
    let pairs = load_pairs(corpus)?;
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut skipped = 0;
    for pair in &pairs {
        let comment = codesum_core::corpus::tokenize_comment(&pair.comment);
        let (Ok(snippet), Ok(comment)) = (split(&pair.code, lang), comment) else {
            skipped += 1;
            continue;
        };
        let labeled = label_statements(&snippet, &comment);
        let record = json!({
            "id": pair.id,
            "statements": snippet.statements.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            "labels": labeled.labels,
            "trace": labeled.trace,
            "fallback": labeled.fallback,
        });
        writeln!(sink, "{record}")?;
    }
    sink.flush()?;
    if skipped > 0 {
        eprintln!("skipped {skipped} pairs without statements or comment tokens");
    }
    Ok(())
}

pub fn train_extractor(
    corpus: &Path,
    valid: Option<&Path>,
    lang: Option<Language>,
    args: &ConfigArgs,
    out: &Path,
) -> Result<()> {
    let mut config = resolve_config(args)?;
    if let Some(lang) = lang {
        config.language = lang;
    }
    config.validate()?;
    let train = load_pairs(corpus)?;
    let valid = valid.map(load_pairs).transpose()?.unwrap_or_default();
    let vocab = build_vocabulary(&train, config.min_freq, config.vocab_size)?;
    eprintln!("vocabulary: {} tokens, {} training pairs", vocab.len(), train.len());
    let (model, report) = fit_extractor(
        &train,
        &valid,
        &vocab,
        &config.extractor(),
        &config.train(),
        progress("extractor", config.epochs),
    )?;
    model
        .to_checkpoint(&vocab)?
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "best epoch {} (valid loss {:.5}), saved {}",
        report.best_epoch,
        report.best_valid_loss,
        out.display()
    );
    Ok(())
}

pub fn extract(ckpt: &Path, code: Option<&Path>, verbose: bool) -> Result<()> {
    let ckpt = load_kind(ckpt, ModelKind::Extractor)?;
    let model = ExtractorModel::<f32>::from_checkpoint(&ckpt)?;
    let snippet = split(&read_source(code)?, model.config.language)?;
    let selection = predict_important(&snippet, &model, &ckpt.vocabulary)?;
    let mut out = io::stdout().lock();
    for &i in &selection.selected {
        if verbose {
            writeln!(out, "{:.4}\t{}", selection.probabilities[i], snippet.statements[i].text)?;
        } else {
            writeln!(out, "{}", snippet.statements[i].text)?;
        }
    }
    if selection.fallback {
        eprintln!("no statement above 0.5; kept the most probable one");
    }
    if selection.truncated {
        eprintln!("snippet truncated to {} statements", model.config.max_statements);
    }
    Ok(())
}

pub fn train_abstracter(
    corpus: &Path,
    valid: Option<&Path>,
    extractor: &Path,
    fusion: Option<FusionOrder>,
    args: &ConfigArgs,
    out: &Path,
) -> Result<()> {
    let mut config = resolve_config(args)?;
    if let Some(fusion) = fusion {
        config.fusion = fusion;
    }
    config.validate()?;
    let ext = load_kind(extractor, ModelKind::Extractor)?;
    let train = load_pairs(corpus)?;
    let valid = valid.map(load_pairs).transpose()?.unwrap_or_default();
    let (model, report) = fit_abstracter(
        &train,
        &valid,
        &ext,
        &config.abstracter(),
        &config.train(),
        progress("abstracter", config.epochs),
    )?;
    model
        .to_checkpoint(&ext.vocabulary)?
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "fusion {}, best epoch {} (valid loss {:.5}), saved {}",
        config.fusion,
        report.best_epoch,
        report.best_valid_loss,
        out.display()
    );
    Ok(())
}

pub fn summarize(extractor: &Path, abstracter: &Path, code: Option<&Path>, max_len: Option<usize>, beam: usize) -> Result<()> {
    if beam == 0 {
        bail!("--beam must be at least 1");
    }
    let ext = load_kind(extractor, ModelKind::Extractor)?;
    let abs = load_kind(abstracter, ModelKind::Abstracter)?;
    let summarizer = Summarizer::from_checkpoints(&ext, &abs)?;
    let max_len = max_len.unwrap_or(summarizer.abstracter.config.max_summary_len);
    let summary = summarizer.summarize(&read_source(code)?, max_len, beam)?;
    println!("{}", summary.result.tokens.join());
    Ok(())
}

pub struct EvaluateArgs {
    pub refs: PathBuf,
    pub hyps: PathBuf,
    pub compare: Option<PathBuf>,
    pub buckets: Option<BucketKind>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub name: Option<String>,
}

fn read_sentences(path: &Path) -> Result<Vec<TokenSequence>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(TokenSequence::from_whitespace).collect())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let refs = read_sentences(&args.refs)?;
    let hyps = read_sentences(&args.hyps)?;
    let bucketing = match args.buckets {
        None => None,
        Some(BucketKind::Comment) => Some(Bucketing::comment_default()),
        Some(BucketKind::Code) => {
            let Some(corpus) = &args.corpus else {
                bail!("--buckets code needs --corpus with the code of each reference");
            };
            let pairs = load_corpus(corpus).with_context(|| format!("loading corpus {}", corpus.display()))?;
            if pairs.skipped > 0 {
                bail!("{} has {} unusable records; it must align line-by-line with the references", corpus.display(), pairs.skipped);
            }
            Some(Bucketing::code_default(pairs.pairs.iter().map(|p| p.code.lines().count()).collect()))
        }
    };
    let report = evaluate_corpus(&refs, &hyps, bucketing.as_ref())?;
    let comparison = match &args.compare {
        Some(path) => {
            let base = evaluate_corpus(&refs, &read_sentences(path)?, None)?;
            Some(compare_reports(&report, &base, &stem(path))?)
        }
        None => None,
    };
    let out = args.out.unwrap_or_else(|| {
        let mut p = args.hyps.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    let name = args.name.unwrap_or_else(|| stem(&args.hyps));
    let table = emit_report(&report, &name, comparison.as_ref(), &out)?;
    print!("{table}");
    eprintln!("record written to {}", out.display());
    Ok(())
}
