//! Small structured-text outputs: predictions, solver traces, evaluation
//! reports, and sweep tables. Every writer is deterministic so reruns with
//! the same inputs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    atomic_write, expect_header, fmt_f64, parse_error, parse_f64, parse_usize, tokenized_lines,
};
use crate::error::Result;
use crate::eval::{ConfusionEntry, EvalReport, MethodAccuracy};
use crate::solver::SolverTrace;
use crate::sweep::SweepRow;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub mode: String,
    pub direction: String,
    /// (query instance id, predicted identity), ascending by id.
    pub predictions: Vec<(usize, usize)>,
}

pub fn predictions_to_string(p: &PredictionFile) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} predictions {} {}",
        super::FORMAT_VERSION,
        p.mode,
        p.direction
    );
    let mut sorted = p.predictions.clone();
    sorted.sort_unstable();
    for (j, l) in sorted {
        let _ = writeln!(out, "pred {j} {l}");
    }
    out
}

pub fn save_predictions(p: &PredictionFile, path: &Path) -> Result<()> {
    atomic_write(path, predictions_to_string(p).as_bytes())
}

pub fn predictions_from_str(text: &str) -> Result<PredictionFile> {
    let mut lines = tokenized_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_error(0, "empty predictions file"))?;
    expect_header(&header, line, "predictions")?;
    if header.len() != 4 {
        return Err(parse_error(line, "predictions header needs mode and direction"));
    }
    let mode = header[2].to_string();
    let direction = header[3].to_string();
    let mut predictions = Vec::new();
    for (line, tokens) in lines {
        if tokens[0] != "pred" || tokens.len() != 3 {
            return Err(parse_error(line, "expected 'pred <instance> <label>'"));
        }
        predictions.push((
            parse_usize(tokens[1], line, "instance id")?,
            parse_usize(tokens[2], line, "label")?,
        ));
    }
    Ok(PredictionFile {
        mode,
        direction,
        predictions,
    })
}

pub fn load_predictions(path: &Path) -> Result<PredictionFile> {
    predictions_from_str(&fs::read_to_string(path)?)
}

/// Trace file. Wall time stays out of it on purpose: solve reruns must be
/// byte-identical.
pub fn trace_to_string(trace: &SolverTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} trace", super::FORMAT_VERSION);
    let _ = writeln!(out, "init {}", fmt_f64(trace.initial_objective));
    for it in &trace.iterations {
        let _ = writeln!(
            out,
            "iter {} {} {} {} {} {} {} {} {}",
            it.iteration,
            fmt_f64(it.objective_after_identity),
            fmt_f64(it.objective_after_event),
            fmt_f64(it.objective_after_context),
            fmt_f64(it.visual_term),
            fmt_f64(it.event_term),
            fmt_f64(it.cooccurrence_term),
            it.labels_changed,
            it.assignments_changed
        );
    }
    let _ = writeln!(out, "converged {}", trace.converged);
    out
}

pub fn save_trace(trace: &SolverTrace, path: &Path) -> Result<()> {
    atomic_write(path, trace_to_string(trace).as_bytes())
}

pub fn report_to_string(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} report", super::FORMAT_VERSION);
    for m in &report.methods {
        let backward = m
            .backward
            .map(|b| fmt_f64(b))
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            out,
            "method {} {} {} {}",
            m.method,
            fmt_f64(m.forward),
            backward,
            fmt_f64(m.mean)
        );
    }
    for e in &report.confusion {
        let _ = writeln!(out, "confusion {} {} {}", e.truth, e.predicted, e.count);
    }
    if let Some(trace) = &report.trace_ref {
        let _ = writeln!(out, "trace {trace}");
    }
    out
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    atomic_write(path, report_to_string(report).as_bytes())
}

pub fn report_from_str(text: &str) -> Result<EvalReport> {
    let mut lines = tokenized_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_error(0, "empty report file"))?;
    expect_header(&header, line, "report")?;
    let mut methods = Vec::new();
    let mut confusion = Vec::new();
    let mut trace_ref = None;
    for (line, tokens) in lines {
        match tokens[0] {
            "method" => {
                if tokens.len() != 5 {
                    return Err(parse_error(line, "method record has wrong arity"));
                }
                let forward = parse_f64(tokens[2], line, "forward accuracy")?;
                let backward = match tokens[3] {
                    "-" => None,
                    t => Some(parse_f64(t, line, "backward accuracy")?),
                };
                let stored_mean = parse_f64(tokens[4], line, "mean accuracy")?;
                let m = MethodAccuracy::new(tokens[1], forward, backward);
                if (m.mean - stored_mean).abs() > 1e-12 {
                    return Err(parse_error(
                        line,
                        format!("stored mean {stored_mean} is not the average of forward and backward"),
                    ));
                }
                methods.push(m);
            }
            "confusion" => {
                if tokens.len() != 4 {
                    return Err(parse_error(line, "confusion record has wrong arity"));
                }
                confusion.push(ConfusionEntry {
                    truth: parse_usize(tokens[1], line, "truth label")?,
                    predicted: parse_usize(tokens[2], line, "predicted label")?,
                    count: parse_usize(tokens[3], line, "count")?,
                });
            }
            "trace" => {
                trace_ref = Some(tokens[1..].join(" "));
            }
            other => return Err(parse_error(line, format!("unknown record '{other}'"))),
        }
    }
    if methods.is_empty() {
        return Err(parse_error(0, "report has no method records"));
    }
    Ok(EvalReport::from_methods(methods, confusion, trace_ref))
}

pub fn sweep_to_string(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} sweep", super::FORMAT_VERSION);
    for r in rows {
        let _ = writeln!(
            out,
            "rate {} {} {} {} {} {}",
            fmt_f64(r.rate),
            fmt_f64(r.visual),
            fmt_f64(r.ranet),
            fmt_f64(r.ranet_p),
            fmt_f64(r.ranet_p_e),
            r.seeds
        );
    }
    out
}

pub fn save_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    atomic_write(path, sweep_to_string(rows).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::IterationRecord;

    #[test]
    fn predictions_round_trip_and_sort() {
        let p = PredictionFile {
            mode: "ranet-p-e".into(),
            direction: "forward".into(),
            predictions: vec![(5, 1), (2, 0), (9, 3)],
        };
        let text = predictions_to_string(&p);
        let back = predictions_from_str(&text).unwrap();
        assert_eq!(back.predictions, vec![(2, 0), (5, 1), (9, 3)]);
        assert_eq!(back.mode, "ranet-p-e");
        assert_eq!(back.direction, "forward");
    }

    #[test]
    fn trace_file_has_no_wall_time() {
        let trace = SolverTrace {
            initial_objective: 1.5,
            iterations: vec![IterationRecord {
                iteration: 0,
                objective_after_identity: 2.0,
                objective_after_event: 2.25,
                objective_after_context: 2.5,
                visual_term: 2.0,
                event_term: 5.0,
                cooccurrence_term: 0.0,
                labels_changed: 3,
                assignments_changed: 1,
                wall_time_secs: 0.123,
            }],
            converged: true,
        };
        let text = trace_to_string(&trace);
        assert!(!text.contains("0.123"));
        assert!(text.contains("iter 0 2 2.25 2.5 2 5 0 3 1"));
        assert!(text.ends_with("converged true\n"));
    }

    #[test]
    fn report_round_trip_checks_the_mean() {
        let report = EvalReport::from_methods(
            vec![
                MethodAccuracy::new("visual", 0.5, Some(0.4)),
                MethodAccuracy::new("ranet-p-e", 0.8, Some(0.6)),
            ],
            vec![ConfusionEntry {
                truth: 1,
                predicted: 2,
                count: 3,
            }],
            Some("trace.txt".into()),
        );
        let text = report_to_string(&report);
        let back = report_from_str(&text).unwrap();
        assert_eq!(report, back);
        assert_eq!(back.accuracy_mean, 0.7);

        let tampered = text.replace("method visual 0.5 0.4 0.45", "method visual 0.5 0.4 0.5");
        assert!(report_from_str(&tampered).is_err());
    }
}
