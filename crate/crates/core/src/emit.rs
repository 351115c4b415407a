//! Text tables and JSON records for evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mann_whitney_u_test, MetricReport, MetricTriple, SignificanceResult};

const METRICS: [(&str, &str); 3] = [("bleu", "BLEU"), ("meteor", "METEOR"), ("rouge_l", "ROUGE-L")];

/// Per-metric rank-sum tests of one report against a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub tests: BTreeMap<String, SignificanceResult>,
}

pub fn compare_reports(ours: &MetricReport, baseline: &MetricReport, baseline_name: &str) -> Result<Comparison> {
    let mut tests = BTreeMap::new();
    for (key, _) in METRICS {
        tests.insert(
            key.to_owned(),
            mann_whitney_u_test(&ours.column(key), &baseline.column(key))?,
        );
    }
    Ok(Comparison {
        baseline: baseline_name.to_owned(),
        tests,
    })
}

#[derive(Serialize)]
struct Record<'a> {
    report: &'a MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<&'a Comparison>,
}

fn row(out: &mut String, label: &str, mean: &MetricTriple, compare: Option<&Comparison>) {
    let _ = write!(out, "{label:<24}");
    for (key, _) in METRICS {
        let v = mean.get(key).unwrap_or(0.0) * 100.0;
        match compare.and_then(|c| c.tests.get(key)) {
            Some(t) => {
                let _ = write!(out, " {:>8.2} {:<4}", v, t.band.as_str());
            }
            None => {
                let _ = write!(out, " {v:>8.2}");
            }
        }
    }
    out.push('\n');
}

fn header(out: &mut String, first: &str, compare: bool) {
    let _ = write!(out, "{first:<24}");
    for (_, title) in METRICS {
        if compare {
            let _ = write!(out, " {title:>8} {:<4}", "");
        } else {
            let _ = write!(out, " {title:>8}");
        }
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
}

/// Aligned text table of mean scores (x100, two decimals), followed by one
/// sub-table per length bucket.
pub fn render_table(report: &MetricReport, name: &str, compare: Option<&Comparison>) -> String {
    let mut out = String::new();
    header(&mut out, "Model", compare.is_some());
    row(&mut out, name, &report.mean, compare);
    if let Some(c) = compare {
        let _ = writeln!(out, "(bands vs {}: ns p>=0.05, * p<0.05, ** p<0.01, *** p<0.001, **** p<0.0001)", c.baseline);
    }
    for bucket in &report.buckets {
        out.push('\n');
        header(&mut out, &format!("{} (n={})", bucket.label(), bucket.count), false);
        row(&mut out, name, &bucket.report.mean, None);
    }
    out
}

/// Writes the JSON record (per-sample scores, percentiles, buckets and
/// significance) to `path` and returns the text table.
pub fn emit_report(report: &MetricReport, name: &str, compare: Option<&Comparison>, path: &Path) -> Result<String> {
    let record = Record {
        report,
        comparison: compare,
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))?;
    Ok(render_table(report, name, compare))
}
