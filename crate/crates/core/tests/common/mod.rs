//! Independent reference implementations and check suites shared by the
//! integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::HashMap;

use codesum_core::abstracter::{AbstracterExample, AbstracterModel};
use codesum_core::config::{AbstracterConfig, ExtractorConfig, FusionOrder};
use codesum_core::extractor::{ExtractorExample, ExtractorModel};
use codesum_core::metrics::{bleu4, lcs_length, meteor_default, ngram_counts, rouge_l};
use codesum_core::numcore::{
    finite_difference_check, lstm_cell, GradCheckReport, Init, ParamSet, Tape, Tensor, Var,
};
use codesum_core::oracle::label_statements;
use codesum_core::segmenter::{segment, Language, SegmentedSnippet};
use codesum_core::{Result, TokenSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- metrics

/// LCS by enumerating every subsequence of the shorter side.
pub fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<u8> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| short[i]).collect();
        let mut it = long.iter();
        if sub.iter().all(|x| it.any(|y| y == x)) {
            best = k;
        }
    }
    best
}

/// Clipped n-gram matches and generated n-gram total by exhaustive counting.
pub fn brute_ngrams(r: &[u8], g: &[u8], n: usize) -> (usize, usize) {
    let grams = |s: &[u8]| -> Vec<Vec<u8>> {
        if s.len() < n {
            Vec::new()
        } else {
            (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
        }
    };
    let gg = grams(g);
    let rg = grams(r);
    let mut seen: Vec<&Vec<u8>> = Vec::new();
    let mut matched = 0;
    for x in &gg {
        if seen.contains(&x) {
            continue;
        }
        seen.push(x);
        let in_g = gg.iter().filter(|y| *y == x).count();
        let in_r = rg.iter().filter(|y| *y == x).count();
        matched += in_g.min(in_r);
    }
    (matched, gg.len())
}

pub fn brute_bleu4(r: &[u8], g: &[u8]) -> f64 {
    let mut product = 1.0f64;
    for n in 1..=4 {
        let (m, t) = brute_ngrams(r, g, n);
        let p = if n == 1 { m as f64 / t as f64 } else { (m as f64 + 1.0) / (t as f64 + 1.0) };
        if p == 0.0 {
            return 0.0;
        }
        product *= p;
    }
    let bp = if g.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / g.len() as f64).exp() };
    bp * product.powf(0.25)
}

pub fn brute_rouge_l(r: &[u8], g: &[u8]) -> f64 {
    let l = brute_lcs(r, g) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (rec, prec) = (l / r.len() as f64, l / g.len() as f64);
    let b2 = 1.2f64 * 1.2;
    (1.0 + b2) * rec * prec / (rec + b2 * prec)
}

/// Enumerates every one-to-one exact matching, keeps those with the most
/// matches, and returns (matches, fewest chunks).
pub fn brute_alignment(r: &[u8], g: &[u8]) -> (usize, usize) {
    fn walk(r: &[u8], g: &[u8], i: usize, used: &mut Vec<bool>, pairs: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
        if pairs.len() + (g.len() - i) < best.0 {
            return;
        }
        if i == g.len() {
            let mut chunks = 0;
            for k in 0..pairs.len() {
                if k == 0 || !(pairs[k].0 == pairs[k - 1].0 + 1 && pairs[k].1 == pairs[k - 1].1 + 1) {
                    chunks += 1;
                }
            }
            let m = pairs.len();
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        walk(r, g, i + 1, used, pairs, best);
        for j in 0..r.len() {
            if !used[j] && r[j] == g[i] {
                used[j] = true;
                pairs.push((i, j));
                walk(r, g, i + 1, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, usize::MAX);
    walk(r, g, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
    if best.0 == 0 {
        (0, 0)
    } else {
        best
    }
}

pub fn brute_meteor(r: &[u8], g: &[u8]) -> f64 {
    let (m, chunks) = brute_alignment(r, g);
    if m == 0 {
        return 0.0;
    }
    let (p, rec) = (m as f64 / g.len() as f64, m as f64 / r.len() as f64);
    let fmean = 10.0 * p * rec / (rec + 9.0 * p);
    fmean * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}

pub fn random_pairs(seed: u64, count: usize, max_len: usize, vocab: u8) -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<u8> {
        let n = rng.gen_range(1..=max_len);
        (0..n).map(|_| rng.gen_range(0..vocab)).collect()
    };
    (0..count).map(|_| (draw(&mut rng), draw(&mut rng))).collect()
}

/// Compares every metric with its brute-force counterpart; returns the
/// number of pairs checked or the first disagreement.
pub fn check_metric_oracles(seed: u64, count: usize) -> std::result::Result<usize, String> {
    for (k, (r, g)) in random_pairs(seed, count, 15, 10).iter().enumerate() {
        let ctx = || format!("pair {k}: r={r:?} g={g:?}");
        if lcs_length(r, g) != brute_lcs(r, g) {
            return Err(format!("lcs differs on {}", ctx()));
        }
        for n in 1..=4 {
            let c = ngram_counts(r, g, n);
            if (c.matched, c.total) != brute_ngrams(r, g, n) {
                return Err(format!("{n}-gram counts differ on {}", ctx()));
            }
        }
        let pairs = [
            ("bleu4", bleu4(r, g).unwrap(), brute_bleu4(r, g)),
            ("rouge_l", rouge_l(r, g, 1.2).unwrap(), brute_rouge_l(r, g)),
            ("meteor", meteor_default(r, g).unwrap(), brute_meteor(r, g)),
        ];
        for (name, got, want) in pairs {
            if (got - want).abs() > 1e-9 {
                return Err(format!("{name} {got} vs {want} on {}", ctx()));
            }
        }
    }
    Ok(count)
}

// ----------------------------------------------------------------- oracle

/// Top-down memoized LCS over string tokens.
pub fn memo_lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

fn recall_of(snippet: &SegmentedSnippet, comment: &TokenSequence, set: &[usize]) -> f64 {
    let mut ordered = set.to_vec();
    ordered.sort_unstable();
    let joined: Vec<String> = ordered
        .iter()
        .flat_map(|&i| snippet.statements[i].tokens.tokens().to_vec())
        .collect();
    memo_lcs(comment.tokens(), &joined) as f64 / comment.len() as f64
}

pub struct GreedyTrace {
    pub labels: Vec<u8>,
    pub trace: Vec<(usize, f64)>,
    pub fallback: bool,
}

/// Straight reading of the greedy rule, using floating-point recall.
pub fn reference_greedy(snippet: &SegmentedSnippet, comment: &TokenSequence) -> GreedyTrace {
    let n = snippet.statements.len();
    let scores: Vec<f64> = (0..n).map(|i| recall_of(snippet, comment, &[i])).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the earlier statement first among equal scores
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut chosen = Vec::new();
    let mut best = 0.0;
    let mut trace = Vec::new();
    for &i in &order {
        let mut trial = chosen.clone();
        trial.push(i);
        let s = recall_of(snippet, comment, &trial);
        if s > best + 1e-12 {
            best = s;
            chosen = trial;
            trace.push((i, s));
        }
    }
    let fallback = chosen.is_empty();
    if fallback {
        chosen.push(order[0]);
        trace.push((order[0], 0.0));
    }
    let mut labels = vec![0; n];
    for i in chosen {
        labels[i] = 1;
    }
    GreedyTrace { labels, trace, fallback }
}

pub fn best_subset_recall(snippet: &SegmentedSnippet, comment: &TokenSequence) -> f64 {
    let n = snippet.statements.len();
    (1u32..(1 << n))
        .map(|mask| {
            let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            recall_of(snippet, comment, &set)
        })
        .fold(0.0, f64::max)
}

const WORDS: [&str; 10] = ["get", "set", "value", "name", "list", "item", "size", "add", "remove", "index"];
const FOREIGN: [&str; 4] = ["quux", "zork", "plugh", "xyzzy"];

/// Random snippet of 1..=8 lines plus a comment. With `disjoint`, the
/// comment shares no token with the code.
pub fn random_case(rng: &mut ChaCha8Rng, disjoint: bool) -> (SegmentedSnippet, TokenSequence) {
    let lines = rng.gen_range(1..=8);
    let code: Vec<String> = (0..lines)
        .map(|_| {
            let k = rng.gen_range(1..=5);
            (0..k).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect();
    let snippet = segment(&code.join("\n"), Language::Generic).unwrap();
    let k = rng.gen_range(1..=8);
    let pool: &[&str] = if disjoint { &FOREIGN } else { &WORDS };
    let comment: TokenSequence = (0..k).map(|_| pool[rng.gen_range(0..pool.len())].to_owned()).collect();
    (snippet, comment)
}

/// Runs the labeling checks on `count` random cases (every fourth one with
/// a disjoint comment). Returns the number of fallback cases seen.
pub fn check_oracle(seed: u64, count: usize) -> std::result::Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fallbacks = 0;
    for case in 0..count {
        let disjoint = case % 4 == 3;
        let (snippet, comment) = random_case(&mut rng, disjoint);
        let got = label_statements(&snippet, &comment);
        let want = reference_greedy(&snippet, &comment);
        if got.labels != want.labels || got.fallback != want.fallback {
            return Err(format!("case {case}: labels {:?} vs {:?}", got.labels, want.labels));
        }
        let trace: Vec<(usize, f64)> = got.trace.iter().map(|s| (s.statement, s.informativity)).collect();
        if trace.len() != want.trace.len()
            || trace.iter().zip(&want.trace).any(|(a, b)| a.0 != b.0 || (a.1 - b.1).abs() > 1e-12)
        {
            return Err(format!("case {case}: trace {trace:?} vs {:?}", want.trace));
        }
        if !got.fallback {
            let mut prev = 0.0;
            for step in &got.trace {
                if step.informativity <= prev {
                    return Err(format!("case {case}: acceptance did not increase informativity"));
                }
                prev = step.informativity;
            }
        }
        if disjoint {
            if !got.fallback || got.selected() != vec![0] {
                return Err(format!("case {case}: disjoint comment should force statement 0"));
            }
            fallbacks += 1;
        }
        let final_score = trace.last().map_or(0.0, |s| s.1);
        if final_score > best_subset_recall(&snippet, &comment) + 1e-12 {
            return Err(format!("case {case}: greedy beat the exhaustive optimum"));
        }
    }
    Ok(fallbacks)
}

// -------------------------------------------------------------- gradients

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Weighted sum of `v` with fixed random weights, so every output entry
/// gets a distinct upstream gradient.
fn project(tape: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(v).shape().to_vec();
    let w = tape.constant(random_tensor(&mut rng(seed), &shape, 1.0));
    let m = tape.mul(v, w)?;
    Ok(tape.sum(m))
}

type OpLoss = Box<dyn Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>>;

fn op_case(name: &str, shapes: &[&[usize]], seed: u64, f: OpLoss) -> (String, ParamSet<f64>, OpLoss) {
    let mut r = rng(seed);
    let mut set = ParamSet::new();
    for (k, s) in shapes.iter().enumerate() {
        set.insert(&format!("p{k}"), random_tensor(&mut r, s, 1.0)).unwrap();
    }
    (name.to_owned(), set, f)
}

fn p(tape: &mut Tape<f64>, set: &ParamSet<f64>, k: usize) -> Var {
    let id = set.id(&format!("p{k}")).unwrap();
    tape.param(set, id)
}

/// One finite-difference report per differentiable tape op.
pub fn op_gradchecks() -> Vec<(String, GradCheckReport)> {
    let cases: Vec<(String, ParamSet<f64>, OpLoss)> = vec![
        op_case("add", &[&[2, 3], &[2, 3]], 1, Box::new(|t, s| {
            let (a, b) = (p(t, s, 0), p(t, s, 1));
            let v = t.add(a, b)?;
            project(t, v, 11)
        })),
        op_case("sub", &[&[2, 3], &[2, 3]], 2, Box::new(|t, s| {
            let (a, b) = (p(t, s, 0), p(t, s, 1));
            let v = t.sub(a, b)?;
            project(t, v, 12)
        })),
        op_case("mul", &[&[2, 3], &[2, 3]], 3, Box::new(|t, s| {
            let (a, b) = (p(t, s, 0), p(t, s, 1));
            let v = t.mul(a, b)?;
            project(t, v, 13)
        })),
        op_case("scale", &[&[3, 2]], 4, Box::new(|t, s| {
            let a = p(t, s, 0);
            let v = t.scale(a, -1.7);
            project(t, v, 14)
        })),
        op_case("matmul", &[&[2, 3], &[3, 4]], 5, Box::new(|t, s| {
            let (a, b) = (p(t, s, 0), p(t, s, 1));
            let v = t.matmul(a, b)?;
            project(t, v, 15)
        })),
        op_case("add_row", &[&[3, 4], &[4]], 6, Box::new(|t, s| {
            let (a, b) = (p(t, s, 0), p(t, s, 1));
            let v = t.add_row(a, b)?;
            project(t, v, 16)
        })),
        op_case("concat", &[&[2, 3], &[2, 2]], 7, Box::new(|t, s| {
            let (a, b) = (p(t, s, 0), p(t, s, 1));
            let v = t.concat(&[a, b])?;
            project(t, v, 17)
        })),
        op_case("concat_rows", &[&[2, 3], &[1, 3]], 8, Box::new(|t, s| {
            let (a, b) = (p(t, s, 0), p(t, s, 1));
            let v = t.concat_rows(&[a, b])?;
            project(t, v, 18)
        })),
        op_case("slice_cols", &[&[3, 5]], 9, Box::new(|t, s| {
            let a = p(t, s, 0);
            let v = t.slice_cols(a, 1, 4)?;
            project(t, v, 19)
        })),
        op_case("tanh", &[&[2, 4]], 10, Box::new(|t, s| {
            let a = p(t, s, 0);
            let v = t.tanh(a);
            project(t, v, 20)
        })),
        op_case("sigmoid", &[&[2, 4]], 11, Box::new(|t, s| {
            let a = p(t, s, 0);
            let v = t.sigmoid(a);
            project(t, v, 21)
        })),
        op_case("embedding", &[&[5, 3]], 12, Box::new(|t, s| {
            let a = p(t, s, 0);
            let v = t.embedding(a, &[4, 0, 4, 2])?;
            project(t, v, 22)
        })),
        op_case("gather_rows", &[&[4, 3]], 13, Box::new(|t, s| {
            let a = p(t, s, 0);
            let v = t.gather_rows(a, &[Some(3), None, Some(1), Some(3)])?;
            project(t, v, 23)
        })),
        op_case("select_rows", &[&[3, 2], &[3, 2]], 14, Box::new(|t, s| {
            let (a, b) = (p(t, s, 0), p(t, s, 1));
            let v = t.select_rows(a, b, &[true, false, true])?;
            project(t, v, 24)
        })),
        op_case("softmax", &[&[3, 4]], 15, Box::new(|t, s| {
            let a = p(t, s, 0);
            let v = t.softmax(a);
            project(t, v, 25)
        })),
        op_case("sum", &[&[2, 3]], 16, Box::new(|t, s| {
            let a = p(t, s, 0);
            let sq = t.mul(a, a)?;
            Ok(t.sum(sq))
        })),
        op_case("mean", &[&[2, 3]], 17, Box::new(|t, s| {
            let a = p(t, s, 0);
            let sq = t.mul(a, a)?;
            Ok(t.mean(sq))
        })),
        op_case("bce", &[&[4, 1]], 18, Box::new(|t, s| {
            let a = p(t, s, 0);
            let prob = t.sigmoid(a);
            t.bce(prob, &[1.0, 0.0, 0.0, 1.0])
        })),
        op_case("nll", &[&[3, 5]], 19, Box::new(|t, s| {
            let a = p(t, s, 0);
            let prob = t.softmax(a);
            t.nll(prob, &[4, 0, 2], &[0.5, 0.0, 0.25])
        })),
        op_case("dropout(eval)", &[&[2, 3]], 20, Box::new(|t, s| {
            let a = p(t, s, 0);
            let v = t.dropout(a, 0.3)?;
            project(t, v, 26)
        })),
    ];
    cases
        .into_iter()
        .map(|(name, mut set, f)| {
            let report = finite_difference_check(&mut set, |t, s| f(t, s), GRAD_EPS, 64).unwrap();
            (name, report)
        })
        .collect()
}

/// Training-mode dropout with a fixed mask, checked by hand since the
/// generic checker evaluates in inference mode.
pub fn dropout_training_gradcheck() -> f64 {
    let x = random_tensor(&mut rng(30), &[3, 4], 1.0);
    let eval = |x: &Tensor<f64>| -> (f64, Vec<f64>) {
        let mut tape = Tape::new(true, 99);
        let v = tape.constant(x.clone());
        let d = tape.dropout(v, 0.4).unwrap();
        let loss = project(&mut tape, d, 31).unwrap();
        let grads = tape.backward(loss).unwrap();
        (tape.value(loss).data()[0], grads.get(v).unwrap().to_vec())
    };
    let (_, analytic) = eval(&x);
    let mut worst: f64 = 0.0;
    for (j, &a) in analytic.iter().enumerate() {
        let mut plus = x.clone();
        plus.data_mut()[j] += GRAD_EPS;
        let mut minus = x.clone();
        minus.data_mut()[j] -= GRAD_EPS;
        let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * GRAD_EPS);
        worst = worst.max(codesum_core::numcore::relative_error(a, numeric));
    }
    worst
}

pub fn lstm_gradcheck() -> GradCheckReport {
    let mut r = rng(40);
    let mut set = ParamSet::new();
    let (i, h) = (3, 4);
    set.insert("x", random_tensor(&mut r, &[2, i], 1.0)).unwrap();
    set.insert("h", random_tensor(&mut r, &[2, h], 1.0)).unwrap();
    set.insert("c", random_tensor(&mut r, &[2, h], 1.0)).unwrap();
    set.declare("w_input", &[i, 4 * h], Init::XavierUniform, &mut r).unwrap();
    set.declare("w_hidden", &[h, 4 * h], Init::XavierUniform, &mut r).unwrap();
    set.insert("bias", random_tensor(&mut r, &[4 * h], 0.5)).unwrap();
    finite_difference_check(
        &mut set,
        |t, s| {
            let v = |t: &mut Tape<f64>, n: &str| t.param(s, s.id(n).unwrap());
            let (x, h0, c0) = (v(t, "x"), v(t, "h"), v(t, "c"));
            let (wi, wh, b) = (v(t, "w_input"), v(t, "w_hidden"), v(t, "bias"));
            let (h1, c1) = lstm_cell(t, x, h0, c0, wi, wh, b)?;
            let (h2, c2) = lstm_cell(t, x, h1, c1, wi, wh, b)?;
            let both = t.concat(&[h2, c2])?;
            project(t, both, 41)
        },
        GRAD_EPS,
        64,
    )
    .unwrap()
}

pub fn tiny_extractor() -> (ExtractorModel<f64>, Vec<ExtractorExample>) {
    let config = ExtractorConfig {
        embed_dim: 4,
        hidden_dim: 4,
        dropout: 0.0,
        max_statement_tokens: 6,
        max_statements: 8,
        language: Language::Java,
    };
    let model = ExtractorModel::<f64>::new(config, 10, 5).unwrap();
    let examples = vec![
        ExtractorExample {
            statements: vec![vec![4, 5, 6], vec![7], vec![8, 9, 4, 5]],
            labels: vec![1, 0, 1],
            truncated: false,
        },
        ExtractorExample {
            statements: vec![vec![6, 6], vec![9, 8]],
            labels: vec![0, 1],
            truncated: false,
        },
    ];
    (model, examples)
}

pub fn extractor_gradcheck() -> GradCheckReport {
    let (model, examples) = tiny_extractor();
    let refs: Vec<&ExtractorExample> = examples.iter().collect();
    let mut params = model.params.clone();
    finite_difference_check(&mut params, |t, s| model.batch_loss(t, s, &refs), GRAD_EPS, 24).unwrap()
}

pub fn tiny_abstracter(fusion: FusionOrder, share: bool) -> (AbstracterModel<f64>, Vec<AbstracterExample>) {
    let config = AbstracterConfig {
        embed_dim: 4,
        hidden_dim: 4,
        dropout: 0.0,
        max_code_tokens: 10,
        max_summary_len: 8,
        fusion,
        share_embeddings: share,
    };
    let model = AbstracterModel::<f64>::new(config, 8, 6).unwrap();
    let examples = vec![
        AbstracterExample {
            important: vec![4, 5],
            code: vec![4, 5, 6, 7],
            comment: vec![6, 7, 4],
        },
        AbstracterExample {
            important: vec![7],
            code: vec![7, 7, 5],
            comment: vec![5],
        },
    ];
    (model, examples)
}

pub fn abstracter_gradcheck(fusion: FusionOrder, share: bool) -> GradCheckReport {
    let (model, examples) = tiny_abstracter(fusion, share);
    let refs: Vec<&AbstracterExample> = examples.iter().collect();
    let mut params = model.params.clone();
    finite_difference_check(&mut params, |t, s| model.batch_loss(t, s, &refs), GRAD_EPS, 24).unwrap()
}
