use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest combined sample size for which the exact null distribution is
/// enumerated.
const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

/// Significance stars: ns (p >= 0.05), * (0.01 < p < 0.05), ** (0.001 < p <= 0.01),
/// *** (0.0001 <= p <= 0.001), **** (p < 0.0001).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "ns")]
    NotSignificant,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
    #[serde(rename = "****")]
    Four,
}

impl Band {
    pub fn from_p(p: f64) -> Band {
        if p >= 0.05 {
            Band::NotSignificant
        } else if p > 0.01 {
            Band::One
        } else if p > 0.001 {
            Band::Two
        } else if p >= 0.0001 {
            Band::Three
        } else {
            Band::Four
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::NotSignificant => "ns",
            Band::One => "*",
            Band::Two => "**",
            Band::Three => "***",
            Band::Four => "****",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    /// U statistic of the first sample.
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub band: Band,
}

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn rank_pooled(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = xs
        .iter()
        .chain(ys)
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        for item in &pooled[i..j] {
            ranks[item.1] = midrank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of ways to choose `n` of the ranks 1..=n+m for each value of U.
fn u_distribution(n: usize, m: usize) -> Vec<f64> {
    // counts[k][u]: subsets of size k from the ranks seen so far with U = u,
    // where U counts pairs (x, y) with y below x.
    let total = n + m;
    let max_u = n * m;
    let mut counts = vec![vec![0f64; max_u + 1]; n + 1];
    counts[0][0] = 1.0;
    for rank in 0..total {
        for k in (1..=n.min(rank + 1)).rev() {
            // Placing the k-th x at this rank puts (rank - (k-1)) y's below it.
            let below = rank + 1 - k;
            if below > m {
                continue;
            }
            for u in (below..=max_u).rev() {
                let add = counts[k - 1][u - below];
                if add != 0.0 {
                    counts[k][u] += add;
                }
            }
        }
    }
    counts.swap_remove(n)
}

fn u_statistic(xs: &[f64], ys: &[f64]) -> Result<(f64, Vec<usize>)> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput("significance samples"));
    }
    let n = xs.len();
    let (ranks, ties) = rank_pooled(xs, ys);
    let rank_sum: f64 = ranks[..n].iter().sum();
    Ok((rank_sum - (n * (n + 1)) as f64 / 2.0, ties))
}

fn result(u: f64, p: f64, method: TestMethod) -> SignificanceResult {
    SignificanceResult {
        u_statistic: u,
        p_value: p,
        method,
        band: Band::from_p(p),
    }
}

/// Two-tailed p from the enumerated null distribution of U. Needs tie-free
/// samples.
pub fn mann_whitney_exact(xs: &[f64], ys: &[f64]) -> Result<SignificanceResult> {
    let (u, ties) = u_statistic(xs, ys)?;
    if !ties.is_empty() {
        return Err(Error::Config("exact Mann-Whitney test needs tie-free samples".into()));
    }
    let dist = u_distribution(xs.len(), ys.len());
    let total: f64 = dist.iter().sum();
    let u_int = u.round() as usize;
    let lower: f64 = dist[..=u_int].iter().sum::<f64>() / total;
    let upper: f64 = dist[u_int..].iter().sum::<f64>() / total;
    Ok(result(u, (2.0 * lower.min(upper)).min(1.0), TestMethod::Exact))
}

/// Two-tailed p from the normal approximation with tie and continuity
/// corrections.
pub fn mann_whitney_normal(xs: &[f64], ys: &[f64]) -> Result<SignificanceResult> {
    let (u, ties) = u_statistic(xs, ys)?;
    let nf = xs.len() as f64;
    let mf = ys.len() as f64;
    let big_n = nf + mf;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (big_n * (big_n - 1.0)).max(1.0);
    let variance = nf * mf / 12.0 * ((big_n + 1.0) - tie_term);
    let p = if variance <= 0.0 {
        1.0
    } else {
        let z = ((u - nf * mf / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
        (2.0 * Normal::standard().sf(z)).min(1.0)
    };
    Ok(result(u, p, TestMethod::NormalApprox))
}

/// Unpaired two-tailed Wilcoxon-Mann-Whitney test. Exact when the samples
/// are small and tie-free, otherwise the normal approximation.
pub fn mann_whitney_u_test(xs: &[f64], ys: &[f64]) -> Result<SignificanceResult> {
    let (_, ties) = u_statistic(xs, ys)?;
    if xs.len() + ys.len() <= EXACT_MAX_N && ties.is_empty() {
        mann_whitney_exact(xs, ys)
    } else {
        mann_whitney_normal(xs, ys)
    }
}
