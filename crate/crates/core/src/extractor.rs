//! Statement-level important-statement classifier.
//!
//! Each statement is read token by token by an LSTM whose final hidden state
//! is the statement vector. A bidirectional LSTM then runs over the statement
//! vectors of one snippet, and a linear layer with softmax scores every
//! contextualized statement as unimportant/important.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{ExtractorConfig, TrainConfig};
use crate::corpus::{pad_ids, tokenize_comment, RawPair, Side, Vocabulary};
use crate::encoder::{encode_final, run_dense};
use crate::error::{Error, Result};
use crate::numcore::{bce_value, Init, LstmParams, ParamId, ParamSet, Scalar, Tape, Tensor, Var};
use crate::oracle::label_statements;
use crate::segmenter::{segment, SegmentedSnippet};
use crate::train::{fit, EpochRecord, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layers {
    embed: ParamId,
    token_rnn: LstmParams,
    forward: LstmParams,
    backward: LstmParams,
    w_out: ParamId,
    b_out: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorModel<F> {
    pub config: ExtractorConfig,
    pub vocab_size: usize,
    pub params: ParamSet<F>,
    layers: Layers,
}

/// One snippet ready for the model: token ids per statement and, for
/// training, the oracle labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractorExample {
    pub statements: Vec<Vec<usize>>,
    pub labels: Vec<u8>,
    /// Statements beyond the configured maximum were dropped.
    pub truncated: bool,
}

impl ExtractorExample {
    pub fn from_snippet(snippet: &SegmentedSnippet, labels: Vec<u8>, vocab: &Vocabulary, max_statements: usize) -> Self {
        let keep = snippet.statements.len().min(max_statements);
        Self {
            statements: snippet.statements[..keep].iter().map(|s| vocab.encode(&s.tokens)).collect(),
            labels: labels.into_iter().take(keep).collect(),
            truncated: keep < snippet.statements.len(),
        }
    }
}

impl<F: Scalar> ExtractorModel<F> {
    pub fn new(config: ExtractorConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size < 4 {
            return Err(Error::Config("vocabulary must hold the reserved tokens".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let layers = Layers {
            embed: params.declare("embed", &[vocab_size, e], Init::XavierUniform, &mut rng)?,
            token_rnn: LstmParams::declare(&mut params, "token_lstm", e, h, &mut rng)?,
            forward: LstmParams::declare(&mut params, "context_fwd", h, h / 2, &mut rng)?,
            backward: LstmParams::declare(&mut params, "context_bwd", h, h / 2, &mut rng)?,
            w_out: params.declare("classifier.w", &[h, 2], Init::XavierUniform, &mut rng)?,
            b_out: params.declare("classifier.b", &[2], Init::Zeros, &mut rng)?,
        };
        Ok(Self {
            config,
            vocab_size,
            params,
            layers,
        })
    }

    pub fn cast<G: Scalar>(&self) -> ExtractorModel<G> {
        ExtractorModel {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            params: self.params.cast(),
            layers: self.layers,
        }
    }

    /// Token-level statement vectors for all statements of all examples,
    /// stacked in order (S x H).
    fn statement_vectors(&self, tape: &mut Tape<F>, params: &ParamSet<F>, examples: &[&[Vec<usize>]]) -> Result<Var> {
        let seqs: Vec<Vec<usize>> = examples.iter().flat_map(|e| e.iter().cloned()).collect();
        let longest = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let batch = pad_ids(&seqs, Side::Code, (longest + 1).min(self.config.max_statement_tokens));
        let embed = tape.param(params, self.layers.embed);
        encode_final(tape, params, &self.layers.token_rnn, embed, &batch, self.config.dropout)
    }

    /// Bidirectional pass over each snippet's statement vectors (S x H in,
    /// S x H out, forward half first).
    fn contextualize(&self, tape: &mut Tape<F>, params: &ParamSet<F>, vectors: Var, counts: &[usize]) -> Result<Var> {
        let b = counts.len();
        let longest = counts.iter().copied().max().unwrap_or(0);
        let offsets: Vec<usize> = counts
            .iter()
            .scan(0, |acc, &n| {
                let o = *acc;
                *acc += n;
                Some(o)
            })
            .collect();
        let live: Vec<Vec<bool>> = (0..longest).map(|t| counts.iter().map(|&n| t < n).collect()).collect();

        let mut fwd_in = Vec::with_capacity(longest);
        let mut bwd_in = Vec::with_capacity(longest);
        for t in 0..longest {
            let f: Vec<Option<usize>> = (0..b).map(|k| (t < counts[k]).then(|| offsets[k] + t)).collect();
            let r: Vec<Option<usize>> =
                (0..b).map(|k| (t < counts[k]).then(|| offsets[k] + counts[k] - 1 - t)).collect();
            fwd_in.push(tape.gather_rows(vectors, &f)?);
            bwd_in.push(tape.gather_rows(vectors, &r)?);
        }
        let fwd = run_dense(tape, params, &self.layers.forward, &fwd_in, &live, b)?;
        let bwd = run_dense(tape, params, &self.layers.backward, &bwd_in, &live, b)?;
        let fwd = tape.concat_rows(&fwd)?;
        let bwd = tape.concat_rows(&bwd)?;

        let mut f_idx = Vec::new();
        let mut b_idx = Vec::new();
        for (k, &n) in counts.iter().enumerate() {
            for i in 0..n {
                f_idx.push(Some(i * b + k));
                b_idx.push(Some((n - 1 - i) * b + k));
            }
        }
        let f = tape.gather_rows(fwd, &f_idx)?;
        let r = tape.gather_rows(bwd, &b_idx)?;
        tape.concat(&[f, r])
    }

    fn encode(&self, tape: &mut Tape<F>, params: &ParamSet<F>, examples: &[&[Vec<usize>]]) -> Result<Var> {
        if examples.iter().any(|e| e.is_empty()) {
            return Err(Error::EmptySnippet);
        }
        let vectors = self.statement_vectors(tape, params, examples)?;
        let counts: Vec<usize> = examples.iter().map(|e| e.len()).collect();
        self.contextualize(tape, params, vectors, &counts)
    }

    /// P(important) per contextualized statement row (S x 1).
    fn classify(&self, tape: &mut Tape<F>, params: &ParamSet<F>, context: Var) -> Result<Var> {
        let context = tape.dropout(context, self.config.dropout)?;
        let w = tape.param(params, self.layers.w_out);
        let b = tape.param(params, self.layers.b_out);
        let logits = tape.matmul(context, w)?;
        let logits = tape.add_row(logits, b)?;
        let probs = tape.softmax(logits);
        tape.slice_cols(probs, 1, 2)
    }

    /// Mean binary cross-entropy over every statement in the batch.
    pub fn batch_loss(&self, tape: &mut Tape<F>, params: &ParamSet<F>, examples: &[&ExtractorExample]) -> Result<Var> {
        let inputs: Vec<&[Vec<usize>]> = examples.iter().map(|e| e.statements.as_slice()).collect();
        for e in examples {
            if e.labels.len() != e.statements.len() {
                return Err(Error::shape(format!(
                    "{} labels for {} statements",
                    e.labels.len(),
                    e.statements.len()
                )));
            }
        }
        let context = self.encode(tape, params, &inputs)?;
        let p = self.classify(tape, params, context)?;
        let targets: Vec<F> = examples
            .iter()
            .flat_map(|e| e.labels.iter().map(|&l| F::of(l as f64)))
            .collect();
        tape.bce(p, &targets)
    }

    pub fn probabilities(&self, statements: &[Vec<usize>]) -> Result<Vec<F>> {
        let mut tape = Tape::inference();
        let context = self.encode(&mut tape, &self.params, &[statements])?;
        let p = self.classify(&mut tape, &self.params, context)?;
        Ok(tape.value(p).data().to_vec())
    }

    pub fn to_checkpoint(&self, vocab: &Vocabulary) -> Result<Checkpoint> {
        if vocab.len() != self.vocab_size {
            return Err(Error::VocabMismatch);
        }
        Checkpoint::from_params(ModelKind::Extractor, &self.config, vocab.clone(), &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(ModelKind::Extractor)?;
        let config: ExtractorConfig = ckpt.hyperparameters()?;
        let mut model = Self::new(config, ckpt.vocabulary.len(), 0)?;
        model.params.load_values(&ckpt.values())?;
        Ok(model)
    }
}

/// Contextualized statement vectors of a snippet (n x H, n capped at the
/// configured maximum).
#[derive(Debug, Clone, PartialEq)]
pub struct StatementEncoding<F> {
    pub vectors: Tensor<F>,
    pub truncated: bool,
}

pub fn encode_statements<F: Scalar>(
    snippet: &SegmentedSnippet,
    model: &ExtractorModel<F>,
    vocab: &Vocabulary,
) -> Result<StatementEncoding<F>> {
    let example = ExtractorExample::from_snippet(snippet, Vec::new(), vocab, model.config.max_statements);
    let mut tape = Tape::inference();
    let context = model.encode(&mut tape, &model.params, &[&example.statements])?;
    Ok(StatementEncoding {
        vectors: tape.value(context).clone(),
        truncated: example.truncated,
    })
}

/// P(important) for each row of an encoding.
pub fn classify_statements<F: Scalar>(encoding: &StatementEncoding<F>, model: &ExtractorModel<F>) -> Result<Vec<F>> {
    if encoding.vectors.cols() != model.config.hidden_dim {
        return Err(Error::shape(format!(
            "statement vectors have width {}, model expects {}",
            encoding.vectors.cols(),
            model.config.hidden_dim
        )));
    }
    let mut tape = Tape::inference();
    let context = tape.constant(encoding.vectors.clone());
    let p = model.classify(&mut tape, &model.params, context)?;
    Ok(tape.value(p).data().to_vec())
}

/// Mean binary cross-entropy of predicted probabilities against 0/1 labels.
pub fn extractor_loss<F: Scalar>(probabilities: &[F], labels: &[u8]) -> Result<F> {
    if probabilities.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} probabilities for {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    let targets: Vec<F> = labels.iter().map(|&l| F::of(l as f64)).collect();
    Ok(bce_value(probabilities, &targets))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Indices of the statements predicted important, ascending.
    pub selected: Vec<usize>,
    pub probabilities: Vec<f64>,
    /// No statement cleared 0.5, so the most probable one was taken.
    pub fallback: bool,
    pub truncated: bool,
}

/// A statement is important when P(important) > P(unimportant); if none is,
/// the most probable statement (earliest on ties) is selected alone.
pub fn select_from_probabilities(probabilities: &[f64]) -> (Vec<usize>, bool) {
    let selected: Vec<usize> = probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.5)
        .map(|(i, _)| i)
        .collect();
    if !selected.is_empty() || probabilities.is_empty() {
        return (selected, false);
    }
    let mut best = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > probabilities[best] {
            best = i;
        }
    }
    (vec![best], true)
}

pub fn predict_important<F: Scalar>(
    snippet: &SegmentedSnippet,
    model: &ExtractorModel<F>,
    vocab: &Vocabulary,
) -> Result<Selection> {
    let encoding = encode_statements(snippet, model, vocab)?;
    let probabilities: Vec<f64> = classify_statements(&encoding, model)?
        .into_iter()
        .map(Scalar::as_f64)
        .collect();
    let (selected, fallback) = select_from_probabilities(&probabilities);
    Ok(Selection {
        selected,
        probabilities,
        fallback,
        truncated: encoding.truncated,
    })
}

/// Segments and oracle-labels `pairs`. Pairs whose code has no statements
/// or whose comment is empty are skipped; the count is returned.
pub fn prepare_extractor_examples(
    pairs: &[RawPair],
    vocab: &Vocabulary,
    config: &ExtractorConfig,
) -> (Vec<ExtractorExample>, usize) {
    let mut out = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for pair in pairs {
        let (Ok(snippet), Ok(comment)) = (segment(&pair.code, config.language), tokenize_comment(&pair.comment)) else {
            skipped += 1;
            continue;
        };
        let labeled = label_statements(&snippet, &comment);
        out.push(ExtractorExample::from_snippet(&snippet, labeled.labels, vocab, config.max_statements));
    }
    (out, skipped)
}

pub fn train_extractor(
    train: &[RawPair],
    valid: &[RawPair],
    vocab: &Vocabulary,
    config: &ExtractorConfig,
    train_config: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ExtractorModel<f32>, TrainReport)> {
    let (train_examples, _) = prepare_extractor_examples(train, vocab, config);
    let (valid_examples, _) = prepare_extractor_examples(valid, vocab, config);
    if train_examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = ExtractorModel::<f32>::new(config.clone(), vocab.len(), train_config.seed)?;
    let mut params = model.params.clone();
    let report = fit(
        &mut params,
        &train_examples,
        &valid_examples,
        train_config,
        |tape, p, batch| model.batch_loss(tape, p, batch),
        on_epoch,
    )?;
    model.params = params;
    Ok((model, report))
}
