//! Ground-truth important-statement labels from a code/comment pair.
//!
//! Statements are ranked by their own ROUGE-L recall against the comment and
//! scanned in that order; a statement joins the selection only if it strictly
//! raises the recall of the selection's source-ordered concatenation.

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSequence;
use crate::metrics::lcs_length;
use crate::segmenter::SegmentedSnippet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub statement: usize,
    pub informativity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSnippet {
    pub snippet: SegmentedSnippet,
    pub labels: Vec<u8>,
    pub trace: Vec<TraceStep>,
    /// True when no statement had positive informativity and the top-ranked
    /// one was labeled by default.
    pub fallback: bool,
}

impl LabeledSnippet {
    pub fn selected(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 1)
            .map(|(i, _)| i)
            .collect()
    }
}

fn concat_tokens<'a>(snippet: &'a SegmentedSnippet, selected: &[usize]) -> Vec<&'a str> {
    let mut ordered = selected.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    ordered
        .iter()
        .flat_map(|&i| snippet.statements[i].tokens.tokens().iter().map(String::as_str))
        .collect()
}

fn joint_lcs(selected: &[usize], snippet: &SegmentedSnippet, comment: &[&str]) -> usize {
    lcs_length(comment, &concat_tokens(snippet, selected))
}

/// ROUGE-L recall of the selected statements (joined in source order)
/// against the comment. Empty selections and empty comments score 0.
pub fn informativity(selected: &[usize], snippet: &SegmentedSnippet, comment: &TokenSequence) -> f64 {
    if comment.is_empty() {
        return 0.0;
    }
    let comment: Vec<&str> = comment.tokens().iter().map(String::as_str).collect();
    joint_lcs(selected, snippet, &comment) as f64 / comment.len() as f64
}

pub fn label_statements(snippet: &SegmentedSnippet, comment: &TokenSequence) -> LabeledSnippet {
    let n = snippet.statements.len();
    let comment_tokens: Vec<&str> = comment.tokens().iter().map(String::as_str).collect();
    let denom = comment_tokens.len().max(1) as f64;

    // Recall shares the comment length as denominator, so LCS lengths compare exactly.
    let individual: Vec<usize> = (0..n).map(|i| joint_lcs(&[i], snippet, &comment_tokens)).collect();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| individual[b].cmp(&individual[a]).then(a.cmp(&b)));

    let mut selected: Vec<usize> = Vec::new();
    let mut current = 0usize;
    let mut trace = Vec::new();
    for &candidate in &ranked {
        selected.push(candidate);
        let score = joint_lcs(&selected, snippet, &comment_tokens);
        if score > current {
            current = score;
            trace.push(TraceStep {
                statement: candidate,
                informativity: score as f64 / denom,
            });
        } else {
            selected.pop();
        }
    }

    let fallback = selected.is_empty();
    if fallback {
        if let Some(&top) = ranked.first() {
            selected.push(top);
            trace.push(TraceStep {
                statement: top,
                informativity: 0.0,
            });
        }
    }

    let mut labels = vec![0u8; n];
    for &i in &selected {
        labels[i] = 1;
    }
    LabeledSnippet {
        snippet: snippet.clone(),
        labels,
        trace,
        fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::{segment, Language};

    fn snippet(lines: &str) -> SegmentedSnippet {
        segment(lines, Language::Generic).unwrap()
    }

    fn seq(s: &str) -> TokenSequence {
        TokenSequence::from_whitespace(s)
    }

    #[test]
    fn informativity_basics() {
        let s = snippet("return a + b\nlog x\nclose y");
        let c = seq("return a + b");
        assert_eq!(informativity(&[], &s, &c), 0.0);
        assert_eq!(informativity(&[0], &s, &c), 1.0);
        // "log x" then "close y" against "x close": LCS 2 of 2.
        assert_eq!(informativity(&[2, 1], &s, &seq("x close")), 1.0);
        assert_eq!(informativity(&[1, 2], &s, &seq("close x")), 0.5);
    }

    #[test]
    fn single_exact_statement() {
        let s = snippet("int a\nreturn sum\nclose");
        let l = label_statements(&s, &seq("return sum"));
        assert_eq!(l.labels, vec![0, 1, 0]);
        assert!(!l.fallback);
    }

    #[test]
    fn disjoint_comment_falls_back_to_first() {
        let s = snippet("a\nb\nc");
        let l = label_statements(&s, &seq("zzz"));
        assert_eq!(l.labels, vec![1, 0, 0]);
        assert!(l.fallback);
        assert_eq!(l.trace.len(), 1);
    }

    #[test]
    fn complementary_statements() {
        let s = snippet("open file\nlog debug\nread lines");
        let c = seq("open file read lines");
        let l = label_statements(&s, &c);
        assert_eq!(l.labels, vec![1, 0, 1]);

        // Brute force over all subsets: the greedy set reaches the best score.
        let best = (0u32..8)
            .map(|mask| {
                let sel: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
                informativity(&sel, &s, &c)
            })
            .fold(0.0, f64::max);
        assert_eq!(informativity(&l.selected(), &s, &c), best);
    }
}
