//! Delimited text tables for evaluation results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::harness::{EvalReport, SubjectMetrics, METRICS};
use super::stats::{summarize, MetricSummary};
use super::sweep::format_sweep;
use super::EvalError;

pub const PER_SUBJECT_HEADER: &str = "method,subject,frames,airborne,degenerate_frames,kld,precision,recall,f1,contact_iou,contact_degenerate,com_mm,cop_mm,bos_iou,com_cop_mm,com_bos_mm";
pub const SUMMARY_HEADER: &str = "method,metric,mean,std,median,rstd,n";
pub const TTEST_HEADER: &str = "method_a,method_b,metric,n,t,dof,p,status";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn subject_row(method: &str, s: &SubjectMetrics) -> String {
    format!(
        "{method},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.subject,
        s.frames,
        s.airborne,
        s.degenerate_frames,
        opt(s.kld),
        s.precision,
        s.recall,
        s.f1,
        s.contact_iou,
        s.contact_degenerate,
        opt(s.com_mm),
        opt(s.cop_mm),
        opt(s.bos_iou),
        opt(s.com_cop_mm),
        opt(s.com_bos_mm),
    )
}

/// One row per subject and a final `pooled` row for each method.
pub fn format_per_subject(report: &EvalReport) -> String {
    let mut out = format!("{PER_SUBJECT_HEADER}\n");
    for m in &report.methods {
        for s in &m.subjects {
            let _ = writeln!(out, "{}", subject_row(&m.method, s));
        }
        let _ = writeln!(out, "{}", subject_row(&m.method, &m.pooled()));
    }
    out
}

pub fn summary_row(method: &str, metric: &str, s: &MetricSummary) -> String {
    format!("{method},{metric},{},{},{},{},{}", s.mean, s.std, s.median, s.rstd, s.n)
}

/// Statistics over subjects of every metric that is defined for at least
/// one subject.
pub fn format_summary(report: &EvalReport) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for m in &report.methods {
        for metric in METRICS {
            let values: Vec<f64> = m.subjects.iter().filter_map(|s| s.value(metric)).collect();
            if let Ok(s) = summarize(&values) {
                let _ = writeln!(out, "{}", summary_row(&m.method, metric, &s));
            }
        }
    }
    out
}

/// `(method, metric, summary)` rows of a summary table.
pub fn parse_summary(text: &str) -> Result<Vec<(String, String, MetricSummary)>, EvalError> {
    let mut lines = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#'));
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(EvalError::Parse("summary header missing".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || EvalError::Parse(format!("bad summary row {line:?}"));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok((
                f[0].to_string(),
                f[1].to_string(),
                MetricSummary {
                    mean: num(f[2])?,
                    std: num(f[3])?,
                    median: num(f[4])?,
                    rstd: num(f[5])?,
                    n: f[6].parse().map_err(|_| bad())?,
                },
            ))
        })
        .collect()
}

pub fn format_ttests(report: &EvalReport) -> String {
    let mut out = format!("{TTEST_HEADER}\n");
    for r in &report.ttests {
        let (t, dof, p, status) = match &r.outcome {
            Ok(tt) => (tt.t.to_string(), tt.dof.to_string(), tt.p.to_string(), "ok"),
            Err(s) => (String::new(), String::new(), String::new(), s.as_str()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{t},{dof},{p},{status}",
            r.method_a, r.method_b, r.metric, r.n
        );
    }
    out
}

/// Writes `per_subject.csv`, `summary.csv`, `ttests.csv` and one
/// `sweep_<method>.csv` per method into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let put = |name: String, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| EvalError::io(&p, e))
    };
    put("per_subject.csv".into(), format_per_subject(report))?;
    put("summary.csv".into(), format_summary(report))?;
    put("ttests.csv".into(), format_ttests(report))?;
    for m in &report.methods {
        put(format!("sweep_{}.csv", m.method), format_sweep(&m.sweep))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trips_losslessly() {
        let s = summarize(&[0.1, 0.7, 1.0 / 3.0, 2.5e-9]).unwrap();
        let text = format!("{SUMMARY_HEADER}\n{}\n", summary_row("m", "kld", &s));
        let back = parse_summary(&text).unwrap();
        assert_eq!(back, vec![("m".to_string(), "kld".to_string(), s)]);
        assert!(parse_summary("nope\n").is_err());
    }
}
