use serde::{Deserialize, Serialize};

use super::{bleu4, meteor_default, rouge_l, ROUGE_BETA};
use crate::corpus::TokenSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTriple {
    pub bleu: f64,
    pub meteor: f64,
    pub rouge_l: f64,
}

impl MetricTriple {
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "bleu" => Some(self.bleu),
            "meteor" => Some(self.meteor),
            "rouge_l" => Some(self.rouge_l),
            _ => None,
        }
    }
}

/// 5/25/50/75/95th percentiles (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| -> f64 {
            if sorted.is_empty() {
                return 0.0;
            }
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Self {
            p5: at(0.05),
            p25: at(0.25),
            p50: at(0.50),
            p75: at(0.75),
            p95: at(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: Vec<MetricTriple>,
    pub mean: MetricTriple,
    pub bleu_percentiles: Percentiles,
    pub meteor_percentiles: Percentiles,
    pub rouge_l_percentiles: Percentiles,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buckets: Vec<BucketReport>,
}

impl MetricReport {
    fn from_samples(samples: Vec<MetricTriple>) -> Self {
        let n = samples.len().max(1) as f64;
        let column = |f: fn(&MetricTriple) -> f64| samples.iter().map(f).collect::<Vec<_>>();
        let (b, m, r) = (column(|s| s.bleu), column(|s| s.meteor), column(|s| s.rouge_l));
        Self {
            mean: MetricTriple {
                bleu: b.iter().sum::<f64>() / n,
                meteor: m.iter().sum::<f64>() / n,
                rouge_l: r.iter().sum::<f64>() / n,
            },
            bleu_percentiles: Percentiles::of(&b),
            meteor_percentiles: Percentiles::of(&m),
            rouge_l_percentiles: Percentiles::of(&r),
            samples,
            buckets: Vec::new(),
        }
    }

    pub fn column(&self, metric: &str) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.get(metric)).collect()
    }
}

/// Sub-report for samples whose length falls in `[lo, hi)` (`hi = None` is open).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub key: String,
    pub lo: usize,
    pub hi: Option<usize>,
    pub count: usize,
    pub report: MetricReport,
}

impl BucketReport {
    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("{}[{}, {})", self.key, self.lo, hi),
            None => format!("{}[{}, inf)", self.key, self.lo),
        }
    }
}

/// How to split samples for length-robustness reporting. `edges` are the
/// ascending lower bounds of each bucket.
#[derive(Debug, Clone, PartialEq)]
pub enum Bucketing {
    /// Reference comment length in tokens.
    CommentTokens { edges: Vec<usize> },
    /// Code length in lines, one count per sample.
    CodeLines { edges: Vec<usize>, line_counts: Vec<usize> },
}

impl Bucketing {
    pub fn comment_default() -> Self {
        Bucketing::CommentTokens {
            edges: vec![0, 5, 10, 15, 20],
        }
    }

    pub fn code_default(line_counts: Vec<usize>) -> Self {
        Bucketing::CodeLines {
            edges: vec![0, 10, 20, 30, 40],
            line_counts,
        }
    }
}

fn score_pair(r: &TokenSequence, g: &TokenSequence) -> MetricTriple {
    if r.is_empty() || g.is_empty() {
        return MetricTriple::default();
    }
    let (r, g) = (r.tokens(), g.tokens());
    MetricTriple {
        bleu: bleu4(r, g).unwrap_or(0.0),
        meteor: meteor_default(r, g).unwrap_or(0.0),
        rouge_l: rouge_l(r, g, ROUGE_BETA).unwrap_or(0.0),
    }
}

/// Scores every (reference, hypothesis) pair and aggregates. An empty
/// hypothesis scores 0 on every metric.
pub fn evaluate_corpus(
    refs: &[TokenSequence],
    hyps: &[TokenSequence],
    buckets: Option<&Bucketing>,
) -> Result<MetricReport> {
    if refs.len() != hyps.len() {
        return Err(Error::shape(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    if refs.is_empty() {
        return Err(Error::EmptyInput("evaluate_corpus"));
    }
    let samples: Vec<MetricTriple> = refs.iter().zip(hyps).map(|(r, g)| score_pair(r, g)).collect();
    let mut report = MetricReport::from_samples(samples);

    if let Some(spec) = buckets {
        let (key, edges, lengths): (&str, &[usize], Vec<usize>) = match spec {
            Bucketing::CommentTokens { edges } => ("comment", edges, refs.iter().map(TokenSequence::len).collect()),
            Bucketing::CodeLines { edges, line_counts } => {
                if line_counts.len() != refs.len() {
                    return Err(Error::shape(format!(
                        "{} code lengths for {} samples",
                        line_counts.len(),
                        refs.len()
                    )));
                }
                ("code", edges, line_counts.clone())
            }
        };
        for (k, &lo) in edges.iter().enumerate() {
            let hi = edges.get(k + 1).copied();
            let members: Vec<MetricTriple> = lengths
                .iter()
                .zip(&report.samples)
                .filter(|(&len, _)| len >= lo && hi.is_none_or(|h| len < h))
                .map(|(_, s)| *s)
                .collect();
            if members.is_empty() {
                continue;
            }
            report.buckets.push(BucketReport {
                key: key.to_owned(),
                lo,
                hi,
                count: members.len(),
                report: MetricReport::from_samples(members),
            });
        }
    }
    Ok(report)
}
