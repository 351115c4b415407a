//! Sentence-level BLEU-4, METEOR and ROUGE-L, plus corpus reports and the
//! rank-sum significance test.
//!
//! All scores are in `[0, 1]`. `r` is always the reference and `g` the
//! generated sentence.

mod report;
mod significance;

use std::collections::HashMap;
use std::hash::Hash;

pub use report::{evaluate_corpus, Bucketing, BucketReport, MetricReport, MetricTriple, Percentiles};
pub use significance::{mann_whitney_exact, mann_whitney_normal, mann_whitney_u_test, Band, SignificanceResult, TestMethod};

use crate::error::{Error, Result};

pub const ROUGE_BETA: f64 = 1.2;
pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Length of a longest common subsequence.
pub fn lcs_length<T: PartialEq>(r: &[T], g: &[T]) -> usize {
    if r.is_empty() || g.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; g.len() + 1];
    let mut cur = vec![0usize; g.len() + 1];
    for a in r {
        for (j, b) in g.iter().enumerate() {
            cur[j + 1] = if a == b {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[g.len()]
}

/// LCS recall against the reference: `LCS(r, g) / |r|`.
pub fn rouge_l_recall<T: PartialEq>(r: &[T], g: &[T]) -> Result<f64> {
    if r.is_empty() {
        return Err(Error::EmptyInput("rouge_l_recall reference"));
    }
    Ok(lcs_length(r, g) as f64 / r.len() as f64)
}

/// LCS-based F-measure weighted by `beta` toward recall.
pub fn rouge_l<T: PartialEq>(r: &[T], g: &[T], beta: f64) -> Result<f64> {
    if r.is_empty() || g.is_empty() {
        return Err(Error::EmptyInput("rouge_l"));
    }
    let lcs = lcs_length(r, g);
    if lcs == 0 {
        return Ok(0.0);
    }
    let recall = lcs as f64 / r.len() as f64;
    let precision = lcs as f64 / g.len() as f64;
    let b2 = beta * beta;
    Ok((1.0 + b2) * recall * precision / (recall + b2 * precision))
}

/// Clipped n-gram matches and the number of n-grams in `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramCounts {
    pub matched: usize,
    pub total: usize,
}

pub fn ngram_counts<T: Eq + Hash>(r: &[T], g: &[T], n: usize) -> NgramCounts {
    assert!(n >= 1, "n-gram order starts at 1");
    if g.len() < n {
        return NgramCounts { matched: 0, total: 0 };
    }
    let mut reference: HashMap<&[T], usize> = HashMap::new();
    if r.len() >= n {
        for w in r.windows(n) {
            *reference.entry(w).or_default() += 1;
        }
    }
    let mut generated: HashMap<&[T], usize> = HashMap::new();
    for w in g.windows(n) {
        *generated.entry(w).or_default() += 1;
    }
    let matched = generated
        .iter()
        .map(|(w, &c)| c.min(reference.get(w).copied().unwrap_or(0)))
        .sum();
    NgramCounts {
        matched,
        total: g.len() - n + 1,
    }
}

pub fn brevity_penalty(ref_len: usize, gen_len: usize) -> f64 {
    if gen_len > ref_len {
        1.0
    } else if gen_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / gen_len as f64).exp()
    }
}

/// Sentence BLEU-4 with uniform weights. Orders 2..4 use add-one smoothing;
/// zero unigram precision gives 0.
pub fn bleu4<T: Eq + Hash>(r: &[T], g: &[T]) -> Result<f64> {
    if r.is_empty() || g.is_empty() {
        return Err(Error::EmptyInput("bleu4"));
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let c = ngram_counts(r, g, n);
        let p = if n == 1 {
            if c.matched == 0 {
                return Ok(0.0);
            }
            c.matched as f64 / c.total as f64
        } else {
            (c.matched + 1) as f64 / (c.total + 1) as f64
        };
        log_sum += 0.25 * p.ln();
    }
    Ok(brevity_penalty(r.len(), g.len()) * log_sum.exp())
}

/// Matched unigram count and chunk count of a METEOR alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

// Memo entries allowed before falling back to greedy alignment.
const ALIGN_STATE_BUDGET: usize = 200_000;

/// Exact-match alignment with the maximum number of matches and, among
/// those, the fewest chunks. A chunk is a run of matches adjacent in both
/// sentences.
pub fn meteor_alignment<T: Eq + Hash>(r: &[T], g: &[T]) -> Alignment {
    let (r_ids, g_ids, types) = intern(r, g);
    let mut need = vec![0usize; types];
    let mut r_count = vec![0usize; types];
    let mut g_count = vec![0usize; types];
    r_ids.iter().for_each(|&t| r_count[t] += 1);
    g_ids.iter().for_each(|&t| g_count[t] += 1);
    for t in 0..types {
        need[t] = r_count[t].min(g_count[t]);
    }
    let matches: usize = need.iter().sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    if r.len() <= 128 {
        let mut search = ChunkSearch {
            r: &r_ids,
            g: &g_ids,
            need: &need,
            g_suffix: suffix_counts(&g_ids, types),
            memo: HashMap::new(),
        };
        if let Some(chunks) = search.best(0, 0, None) {
            return Alignment { matches, chunks };
        }
    }
    Alignment {
        matches,
        chunks: greedy_chunks(&r_ids, &g_ids, &need),
    }
}

fn intern<T: Eq + Hash>(r: &[T], g: &[T]) -> (Vec<usize>, Vec<usize>, usize) {
    let mut table: HashMap<&T, usize> = HashMap::new();
    let mut r_ids = Vec::with_capacity(r.len());
    let mut g_ids = Vec::with_capacity(g.len());
    for (src, dst) in [(r, &mut r_ids), (g, &mut g_ids)] {
        for t in src {
            let next = table.len();
            dst.push(*table.entry(t).or_insert(next));
        }
    }
    (r_ids, g_ids, table.len())
}

// suffix[i][t] = occurrences of type t in g[i..]
fn suffix_counts(g: &[usize], types: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0usize; types]; g.len() + 1];
    for i in (0..g.len()).rev() {
        out[i] = out[i + 1].clone();
        out[i][g[i]] += 1;
    }
    out
}

struct ChunkSearch<'a> {
    r: &'a [usize],
    g: &'a [usize],
    need: &'a [usize],
    g_suffix: Vec<Vec<usize>>,
    memo: HashMap<(usize, u128, u8), usize>,
}

impl ChunkSearch<'_> {
    /// Minimum chunks for g[i..] given the used reference positions and the
    /// reference position matched by g[i-1]. `None` means the budget ran out.
    fn best(&mut self, i: usize, used: u128, prev: Option<usize>) -> Option<usize> {
        if i == self.g.len() {
            return Some(0);
        }
        let key = (i, used, prev.map_or(0, |p| p as u8 + 1));
        if let Some(&v) = self.memo.get(&key) {
            return Some(v);
        }
        if self.memo.len() >= ALIGN_STATE_BUDGET {
            return None;
        }
        let t = self.g[i];
        let matched = (0..self.r.len())
            .filter(|&j| used & (1u128 << j) != 0 && self.r[j] == t)
            .count();
        let still_needed = self.need[t] - matched;

        let mut best = usize::MAX;
        if self.g_suffix[i][t] > still_needed {
            best = self.best(i + 1, used, None)?;
        }
        if still_needed > 0 {
            for j in 0..self.r.len() {
                if self.r[j] != t || used & (1u128 << j) != 0 {
                    continue;
                }
                let extends = prev.is_some_and(|p| p + 1 == j);
                let rest = self.best(i + 1, used | (1u128 << j), Some(j))?;
                best = best.min(rest + usize::from(!extends));
            }
        }
        self.memo.insert(key, best);
        Some(best)
    }
}

fn greedy_chunks(r: &[usize], g: &[usize], need: &[usize]) -> usize {
    let mut used = vec![false; r.len()];
    let mut matched = vec![0usize; need.len()];
    let mut prev: Option<usize> = None;
    let mut chunks = 0;
    for &t in g {
        if matched[t] == need[t] {
            prev = None;
            continue;
        }
        let cont = prev.map(|p| p + 1).filter(|&j| j < r.len() && !used[j] && r[j] == t);
        let j = cont.or_else(|| (0..r.len()).find(|&j| !used[j] && r[j] == t));
        match j {
            Some(j) => {
                if cont.is_none() {
                    chunks += 1;
                }
                used[j] = true;
                matched[t] += 1;
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    chunks
}

/// METEOR from an alignment: harmonic mean weighted by `alpha`, times the
/// fragmentation penalty `1 - gamma * (chunks/m)^beta`.
pub fn meteor_score(alignment: Alignment, ref_len: usize, gen_len: usize, alpha: f64, beta: f64, gamma: f64) -> f64 {
    if alignment.matches == 0 {
        return 0.0;
    }
    let m = alignment.matches as f64;
    let precision = m / gen_len as f64;
    let recall = m / ref_len as f64;
    let fmean = precision * recall / (alpha * precision + (1.0 - alpha) * recall);
    let frag = alignment.chunks as f64 / m;
    (1.0 - gamma * frag.powf(beta)) * fmean
}

pub fn meteor<T: Eq + Hash>(r: &[T], g: &[T], alpha: f64, beta: f64, gamma: f64) -> Result<f64> {
    if r.is_empty() || g.is_empty() {
        return Err(Error::EmptyInput("meteor"));
    }
    Ok(meteor_score(meteor_alignment(r, g), r.len(), g.len(), alpha, beta, gamma))
}

/// METEOR with the default parameters (0.9, 3.0, 0.5).
pub fn meteor_default<T: Eq + Hash>(r: &[T], g: &[T]) -> Result<f64> {
    meteor(r, g, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA)
}
