//! Summary generator conditioned on the important statements and the whole
//! snippet.
//!
//! Two LSTM encoders read the important-statement tokens and the full code
//! tokens. Their final states are concatenated, projected to the decoder
//! width through tanh, and used both as the decoder's initial hidden state
//! and as an extra input at every decoding step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{AbstracterConfig, FusionOrder, TrainConfig};
use crate::corpus::{pad_ids, tokenize_comment, RawPair, Side, TokenSequence, Vocabulary, BOS, EOS};
use crate::encoder::encode_final;
use crate::error::{Error, Result};
use crate::extractor::{predict_important, ExtractorModel, Selection};
use crate::numcore::{Init, LstmParams, ParamId, ParamSet, Scalar, Tape, Tensor, Var};
use crate::segmenter::{segment, SegmentedSnippet, Statement};
use crate::train::{fit, EpochRecord, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layers {
    embed: ParamId,
    ex_embed: Option<ParamId>,
    ex_encoder: LstmParams,
    ab_encoder: LstmParams,
    fuse_w: ParamId,
    fuse_b: ParamId,
    decoder: LstmParams,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstracterModel<F> {
    pub config: AbstracterConfig,
    pub vocab_size: usize,
    pub params: ParamSet<F>,
    layers: Layers,
}

/// Token ids for one training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstracterExample {
    /// Tokens of the selected statements, in source order.
    pub important: Vec<usize>,
    pub code: Vec<usize>,
    pub comment: Vec<usize>,
}

/// Recurrent decoder state for a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<F> {
    pub h: Tensor<F>,
    pub c: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Generated tokens without the end marker.
    pub tokens: TokenSequence,
    /// Generated ids, including the end marker when one was produced.
    pub ids: Vec<usize>,
    /// Natural-log probability of each id in `ids`.
    pub log_probs: Vec<f64>,
    pub total: f64,
    /// An end marker was produced before the length limit.
    pub finished: bool,
}

impl<F: Scalar> AbstracterModel<F> {
    pub fn new(config: AbstracterConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size < 4 {
            return Err(Error::Config("vocabulary must hold the reserved tokens".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let embed = params.declare("embed", &[vocab_size, e], Init::XavierUniform, &mut rng)?;
        let ex_embed = if config.share_embeddings {
            None
        } else {
            Some(params.declare("ex_embed", &[vocab_size, e], Init::XavierUniform, &mut rng)?)
        };
        let layers = Layers {
            embed,
            ex_embed,
            ex_encoder: LstmParams::declare(&mut params, "ex_encoder", e, h, &mut rng)?,
            ab_encoder: LstmParams::declare(&mut params, "ab_encoder", e, h, &mut rng)?,
            fuse_w: params.declare("fusion.w", &[2 * h, h], Init::XavierUniform, &mut rng)?,
            fuse_b: params.declare("fusion.b", &[h], Init::Zeros, &mut rng)?,
            decoder: LstmParams::declare(&mut params, "decoder", e + h, h, &mut rng)?,
            out_w: params.declare("output.w", &[h, vocab_size], Init::XavierUniform, &mut rng)?,
            out_b: params.declare("output.b", &[vocab_size], Init::Zeros, &mut rng)?,
        };
        Ok(Self {
            config,
            vocab_size,
            params,
            layers,
        })
    }

    pub fn cast<G: Scalar>(&self) -> AbstracterModel<G> {
        AbstracterModel {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            params: self.params.cast(),
            layers: self.layers,
        }
    }

    fn encode_with(
        &self,
        tape: &mut Tape<F>,
        params: &ParamSet<F>,
        lstm: &LstmParams,
        table: ParamId,
        seqs: &[Vec<usize>],
    ) -> Result<Var> {
        let longest = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let batch = pad_ids(seqs, Side::Code, (longest + 1).min(self.config.max_code_tokens));
        let table = tape.param(params, table);
        encode_final(tape, params, lstm, table, &batch, self.config.dropout)
    }

    fn encode_ex(&self, tape: &mut Tape<F>, params: &ParamSet<F>, seqs: &[Vec<usize>]) -> Result<Var> {
        let table = self.layers.ex_embed.unwrap_or(self.layers.embed);
        self.encode_with(tape, params, &self.layers.ex_encoder, table, seqs)
    }

    fn encode_ab(&self, tape: &mut Tape<F>, params: &ParamSet<F>, seqs: &[Vec<usize>]) -> Result<Var> {
        self.encode_with(tape, params, &self.layers.ab_encoder, self.layers.embed, seqs)
    }

    fn fuse_vars(&self, tape: &mut Tape<F>, e_ex: Var, e_ab: Var) -> Result<Var> {
        match self.config.fusion {
            FusionOrder::ExAb => tape.concat(&[e_ex, e_ab]),
            FusionOrder::AbEx => tape.concat(&[e_ab, e_ex]),
        }
    }

    /// tanh(e_fu · W + b): decoder width summary of the fused encoding.
    fn context(&self, tape: &mut Tape<F>, params: &ParamSet<F>, fused: Var) -> Result<Var> {
        let w = tape.param(params, self.layers.fuse_w);
        let b = tape.param(params, self.layers.fuse_b);
        let z = tape.matmul(fused, w)?;
        let z = tape.add_row(z, b)?;
        Ok(tape.tanh(z))
    }

    /// One decoder step for every row: returns the new state and the
    /// next-token distribution (rows x V).
    fn step(
        &self,
        tape: &mut Tape<F>,
        params: &ParamSet<F>,
        prev: &[usize],
        h: Var,
        c: Var,
        ctx: Var,
    ) -> Result<(Var, Var, Var)> {
        let table = tape.param(params, self.layers.embed);
        let x = tape.embedding(table, prev)?;
        let x = tape.dropout(x, self.config.dropout)?;
        let input = tape.concat(&[x, ctx])?;
        let (h, c) = self.layers.decoder.step(tape, params, input, h, c)?;
        let hd = tape.dropout(h, self.config.dropout)?;
        let w = tape.param(params, self.layers.out_w);
        let b = tape.param(params, self.layers.out_b);
        let logits = tape.matmul(hd, w)?;
        let logits = tape.add_row(logits, b)?;
        Ok((h, c, tape.softmax(logits)))
    }

    /// Teacher-forced negative log-likelihood: each sequence contributes the
    /// mean over its target tokens (end marker included), averaged over the
    /// batch.
    pub fn batch_loss(&self, tape: &mut Tape<F>, params: &ParamSet<F>, examples: &[&AbstracterExample]) -> Result<Var> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let important: Vec<Vec<usize>> = examples.iter().map(|e| e.important.clone()).collect();
        let code: Vec<Vec<usize>> = examples.iter().map(|e| e.code.clone()).collect();
        let comments: Vec<Vec<usize>> = examples.iter().map(|e| e.comment.clone()).collect();
        let e_ex = self.encode_ex(tape, params, &important)?;
        let e_ab = self.encode_ab(tape, params, &code)?;
        let fused = self.fuse_vars(tape, e_ex, e_ab)?;
        let ctx = self.context(tape, params, fused)?;

        let longest = comments.iter().map(Vec::len).max().unwrap_or(0);
        let target = pad_ids(&comments, Side::Comment, (longest + 2).min(self.config.max_summary_len));
        let rows = examples.len();
        let mut h = ctx;
        let mut c = tape.constant(Tensor::zeros(&[rows, self.config.hidden_dim]));
        let mut total: Option<Var> = None;
        for t in 0..target.max_len - 1 {
            let live = target.live(t + 1);
            if !live.iter().any(|&l| l) {
                break;
            }
            let (h2, c2, probs) = self.step(tape, params, &target.column(t), h, c, ctx)?;
            h = h2;
            c = c2;
            let weights: Vec<F> = live
                .iter()
                .zip(&target.lengths)
                .map(|(&l, &len)| if l { F::of(1.0 / ((len - 1) as f64 * rows as f64)) } else { F::zero() })
                .collect();
            let targets = target.column(t + 1);
            let term = tape.nll(probs, &targets, &weights)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        total.ok_or(Error::EmptyInput("summary targets"))
    }

    pub fn to_checkpoint(&self, vocab: &Vocabulary) -> Result<Checkpoint> {
        if vocab.len() != self.vocab_size {
            return Err(Error::VocabMismatch);
        }
        Checkpoint::from_params(ModelKind::Abstracter, &self.config, vocab.clone(), &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(ModelKind::Abstracter)?;
        let config: AbstracterConfig = ckpt.hyperparameters()?;
        let mut model = Self::new(config, ckpt.vocabulary.len(), 0)?;
        model.params.load_values(&ckpt.values())?;
        Ok(model)
    }
}

fn statement_ids(statements: &[&Statement], vocab: &Vocabulary) -> Vec<usize> {
    statements.iter().flat_map(|s| vocab.encode(&s.tokens)).collect()
}

/// Final ExEncoder state (1 x H) over the concatenated tokens of `statements`.
pub fn encode_extractive<F: Scalar>(
    statements: &[Statement],
    model: &AbstracterModel<F>,
    vocab: &Vocabulary,
) -> Result<Tensor<F>> {
    if statements.is_empty() {
        return Err(Error::EmptyInput("important statements"));
    }
    let refs: Vec<&Statement> = statements.iter().collect();
    let mut tape = Tape::inference();
    let e = model.encode_ex(&mut tape, &model.params, &[statement_ids(&refs, vocab)])?;
    Ok(tape.value(e).clone())
}

/// Final AbEncoder state (1 x H) over the snippet's full token sequence.
pub fn encode_abstractive<F: Scalar>(
    snippet: &SegmentedSnippet,
    model: &AbstracterModel<F>,
    vocab: &Vocabulary,
) -> Result<Tensor<F>> {
    let mut tape = Tape::inference();
    let e = model.encode_ab(&mut tape, &model.params, &[vocab.encode(&snippet.full_tokens)])?;
    Ok(tape.value(e).clone())
}

/// Row-wise concatenation of the two encodings in the given order.
pub fn fuse<F: Scalar>(e_ex: &Tensor<F>, e_ab: &Tensor<F>, order: FusionOrder) -> Result<Tensor<F>> {
    let mut tape = Tape::inference();
    let a = tape.constant(e_ex.clone());
    let b = tape.constant(e_ab.clone());
    let out = match order {
        FusionOrder::ExAb => tape.concat(&[a, b])?,
        FusionOrder::AbEx => tape.concat(&[b, a])?,
    };
    Ok(tape.value(out).clone())
}

fn check_fused<F: Scalar>(e_fu: &Tensor<F>, model: &AbstracterModel<F>) -> Result<()> {
    if e_fu.cols() != 2 * model.config.hidden_dim {
        return Err(Error::shape(format!(
            "fused encoding has width {}, expected {}",
            e_fu.cols(),
            2 * model.config.hidden_dim
        )));
    }
    Ok(())
}

/// Decoder state before the first step: h is the projected fused encoding,
/// c is zero.
pub fn initial_state<F: Scalar>(e_fu: &Tensor<F>, model: &AbstracterModel<F>) -> Result<DecoderState<F>> {
    check_fused(e_fu, model)?;
    let mut tape = Tape::inference();
    let fused = tape.constant(e_fu.clone());
    let ctx = model.context(&mut tape, &model.params, fused)?;
    Ok(DecoderState {
        h: tape.value(ctx).clone(),
        c: Tensor::zeros(&[e_fu.rows(), model.config.hidden_dim]),
    })
}

/// Feeds `y_prev` (one id per row) and returns the next state and the
/// next-token distribution (rows x V).
pub fn decode_step<F: Scalar>(
    y_prev: &[usize],
    state: &DecoderState<F>,
    e_fu: &Tensor<F>,
    model: &AbstracterModel<F>,
) -> Result<(DecoderState<F>, Tensor<F>)> {
    check_fused(e_fu, model)?;
    let mut tape = Tape::inference();
    let fused = tape.constant(e_fu.clone());
    let ctx = model.context(&mut tape, &model.params, fused)?;
    let h = tape.constant(state.h.clone());
    let c = tape.constant(state.c.clone());
    let (h, c, probs) = model.step(&mut tape, &model.params, y_prev, h, c, ctx)?;
    Ok((
        DecoderState {
            h: tape.value(h).clone(),
            c: tape.value(c).clone(),
        },
        tape.value(probs).clone(),
    ))
}

/// Mean teacher-forced NLL of `examples` with dropout off.
pub fn abstracter_loss<F: Scalar>(examples: &[AbstracterExample], model: &AbstracterModel<F>) -> Result<F> {
    let refs: Vec<&AbstracterExample> = examples.iter().collect();
    let mut tape = Tape::inference();
    let loss = model.batch_loss(&mut tape, &model.params, &refs)?;
    Ok(tape.value(loss).data()[0])
}

#[derive(Clone)]
struct Hypothesis {
    ids: Vec<usize>,
    log_probs: Vec<f64>,
    total: f64,
    h: Var,
    c: Var,
}

impl Hypothesis {
    fn into_result(self, vocab: &Vocabulary) -> DecodeResult {
        let finished = self.ids.last() == Some(&EOS);
        let body = if finished { &self.ids[..self.ids.len() - 1] } else { &self.ids[..] };
        DecodeResult {
            tokens: vocab.decode(body),
            ids: self.ids,
            log_probs: self.log_probs,
            total: self.total,
            finished,
        }
    }
}

/// Decodes from a fused encoding (1 x 2H). `beam_width` 1 is greedy search;
/// wider beams return whichever of the beam and greedy results has the
/// higher total log-probability.
pub fn decode<F: Scalar>(
    e_fu: &Tensor<F>,
    model: &AbstracterModel<F>,
    vocab: &Vocabulary,
    max_len: usize,
    beam_width: usize,
) -> Result<DecodeResult> {
    check_fused(e_fu, model)?;
    if e_fu.rows() != 1 {
        return Err(Error::shape("decoding expects a single fused row"));
    }
    if beam_width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let mut tape = Tape::inference();
    let fused = tape.constant(e_fu.clone());
    let ctx = model.context(&mut tape, &model.params, fused)?;
    let c0 = tape.constant(Tensor::zeros(&[1, model.config.hidden_dim]));
    let start = Hypothesis {
        ids: Vec::new(),
        log_probs: Vec::new(),
        total: 0.0,
        h: ctx,
        c: c0,
    };
    let greedy = beam(&mut tape, model, ctx, start.clone(), max_len, 1)?;
    if beam_width == 1 {
        return Ok(greedy.into_result(vocab));
    }
    let wide = beam(&mut tape, model, ctx, start, max_len, beam_width)?;
    Ok(if greedy.total > wide.total { greedy } else { wide }.into_result(vocab))
}

fn beam<F: Scalar>(
    tape: &mut Tape<F>,
    model: &AbstracterModel<F>,
    ctx: Var,
    start: Hypothesis,
    max_len: usize,
    width: usize,
) -> Result<Hypothesis> {
    let mut alive = vec![start];
    let mut done: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let mut candidates: Vec<(f64, usize, usize, f64)> = Vec::new();
        let mut states = Vec::with_capacity(alive.len());
        for (b, hyp) in alive.iter().enumerate() {
            let prev = hyp.ids.last().copied().unwrap_or(BOS);
            let (h, c, probs) = model.step(tape, &model.params, &[prev], hyp.h, hyp.c, ctx)?;
            states.push((h, c));
            let probs = tape.value(probs).data();
            let mut local: Vec<(f64, usize, usize, f64)> = probs
                .iter()
                .enumerate()
                .map(|(v, &p)| {
                    let lp = p.as_f64().max(f64::MIN_POSITIVE).ln();
                    (hyp.total + lp, b, v, lp)
                })
                .collect();
            local.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.2.cmp(&y.2)));
            local.truncate(width);
            candidates.extend(local);
        }
        candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        candidates.truncate(width);
        let mut next = Vec::with_capacity(width);
        for (total, b, v, lp) in candidates {
            let mut hyp = alive[b].clone();
            hyp.ids.push(v);
            hyp.log_probs.push(lp);
            hyp.total = total;
            (hyp.h, hyp.c) = states[b];
            if v == EOS {
                done.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        alive = next;
        let best_done = done.iter().map(|h| h.total).fold(f64::NEG_INFINITY, f64::max);
        let best_alive = alive.iter().map(|h| h.total).fold(f64::NEG_INFINITY, f64::max);
        if alive.is_empty() || (done.len() >= width && best_done >= best_alive) {
            break;
        }
    }
    done.extend(alive);
    let mut best = 0;
    for (i, h) in done.iter().enumerate() {
        if h.total > done[best].total {
            best = i;
        }
    }
    Ok(done.swap_remove(best))
}

/// A loaded extractor/abstracter pair sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Summarizer {
    pub extractor: ExtractorModel<f32>,
    pub abstracter: AbstracterModel<f32>,
    pub vocab: Vocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub selection: Selection,
    pub result: DecodeResult,
}

impl Summarizer {
    pub fn from_checkpoints(extractor: &Checkpoint, abstracter: &Checkpoint) -> Result<Self> {
        if extractor.vocabulary != abstracter.vocabulary {
            return Err(Error::VocabMismatch);
        }
        Ok(Self {
            extractor: ExtractorModel::from_checkpoint(extractor)?,
            abstracter: AbstracterModel::from_checkpoint(abstracter)?,
            vocab: abstracter.vocabulary.clone(),
        })
    }

    pub fn summarize(&self, code: &str, max_len: usize, beam_width: usize) -> Result<Summary> {
        let snippet = segment(code, self.extractor.config.language)?;
        let selection = predict_important(&snippet, &self.extractor, &self.vocab)?;
        let important: Vec<Statement> = selection.selected.iter().map(|&i| snippet.statements[i].clone()).collect();
        let e_ex = encode_extractive(&important, &self.abstracter, &self.vocab)?;
        let e_ab = encode_abstractive(&snippet, &self.abstracter, &self.vocab)?;
        let e_fu = fuse(&e_ex, &e_ab, self.abstracter.config.fusion)?;
        let result = decode(&e_fu, &self.abstracter, &self.vocab, max_len, beam_width)?;
        Ok(Summary { selection, result })
    }
}

pub fn generate_summary(
    code: &str,
    extractor: &Checkpoint,
    abstracter: &Checkpoint,
    max_len: usize,
    beam_width: usize,
) -> Result<DecodeResult> {
    Ok(Summarizer::from_checkpoints(extractor, abstracter)?
        .summarize(code, max_len, beam_width)?
        .result)
}

/// Builds training examples, running the frozen extractor to choose the
/// important statements. Unusable pairs are skipped and counted.
pub fn prepare_abstracter_examples<F: Scalar>(
    pairs: &[RawPair],
    extractor: &ExtractorModel<F>,
    vocab: &Vocabulary,
) -> Result<(Vec<AbstracterExample>, usize)> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for pair in pairs {
        let (Ok(snippet), Ok(comment)) = (segment(&pair.code, extractor.config.language), tokenize_comment(&pair.comment))
        else {
            skipped += 1;
            continue;
        };
        let selection = predict_important(&snippet, extractor, vocab)?;
        let chosen: Vec<&Statement> = selection.selected.iter().map(|&i| &snippet.statements[i]).collect();
        out.push(AbstracterExample {
            important: statement_ids(&chosen, vocab),
            code: vocab.encode(&snippet.full_tokens),
            comment: vocab.encode(&comment),
        });
    }
    Ok((out, skipped))
}

pub fn train_abstracter(
    train: &[RawPair],
    valid: &[RawPair],
    extractor: &Checkpoint,
    config: &AbstracterConfig,
    train_config: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(AbstracterModel<f32>, TrainReport)> {
    let vocab = &extractor.vocabulary;
    let ext = ExtractorModel::<f32>::from_checkpoint(extractor)?;
    let (train_examples, _) = prepare_abstracter_examples(train, &ext, vocab)?;
    let (valid_examples, _) = prepare_abstracter_examples(valid, &ext, vocab)?;
    if train_examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = AbstracterModel::<f32>::new(config.clone(), vocab.len(), train_config.seed)?;
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
