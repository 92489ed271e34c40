//! Persistence of training reports.
//!
//! A report file holds one tagged JSON object per line: the configuration,
//! the initial metrics, every step record, the final metrics and the final
//! parameters, in that order.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::records::{read_jsonl, to_json_line, RecordError};
use crate::metrics::MetricReport;
use crate::sim::{RunReport, StepRecord};
use crate::types::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportLine {
    Config(RunConfig),
    InitialMetrics(MetricReport),
    Step(StepRecord),
    FinalMetrics(MetricReport),
    FinalParams { params: Vec<f64> },
}

/// Renders the report as line-delimited JSON. Wall time is not included.
pub fn render_report(report: &RunReport) -> Result<String, RecordError> {
    let mut lines = vec![
        ReportLine::Config(report.config_echo.clone()),
        ReportLine::InitialMetrics(report.initial_metrics.clone()),
    ];
    lines.extend(report.per_step.iter().cloned().map(ReportLine::Step));
    lines.push(ReportLine::FinalMetrics(report.final_metrics.clone()));
    lines.push(ReportLine::FinalParams { params: report.final_params.clone() });
    let mut out = String::new();
    for l in &lines {
        out.push_str(&to_json_line(l)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_report(path: impl AsRef<Path>, report: &RunReport) -> Result<(), RecordError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(render_report(report)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn parse_lines(lines: Vec<ReportLine>) -> Result<RunReport, RecordError> {
    let broken = |reason: &str| RecordError::Malformed { line: 0, reason: reason.to_string() };
    let mut it = lines.into_iter().peekable();
    let Some(ReportLine::Config(config_echo)) = it.next() else {
        return Err(broken("report must start with the config"));
    };
    let Some(ReportLine::InitialMetrics(initial_metrics)) = it.next() else {
        return Err(broken("missing initial metrics"));
    };
    let mut per_step = Vec::new();
    while let Some(ReportLine::Step(_)) = it.peek() {
        if let Some(ReportLine::Step(s)) = it.next() {
            per_step.push(s);
        }
    }
    let Some(ReportLine::FinalMetrics(final_metrics)) = it.next() else {
        return Err(broken("missing final metrics"));
    };
    let Some(ReportLine::FinalParams { params: final_params }) = it.next() else {
        return Err(broken("missing final parameters"));
    };
    if it.next().is_some() {
        return Err(broken("trailing lines after final parameters"));
    }
    Ok(RunReport { config_echo, per_step, initial_metrics, final_metrics, final_params, wall_time_seconds: 0.0 })
}

pub fn parse_report(text: &str) -> Result<RunReport, RecordError> {
    parse_lines(read_jsonl(text.as_bytes())?)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport, RecordError> {
    parse_lines(read_jsonl(BufReader::new(File::open(path)?))?)
}

/// Per-step diagnostics as CSV with a header row.
pub fn diagnostics_csv(steps: &[StepRecord]) -> String {
    let mut out = String::from(
        "step,stage,k,prompt_pool_size,objective,mean_reward,reward_std,mean_kl,clip_fraction,\
         mean_generation_std,mean_cot_answer_std\n",
    );
    for s in steps {
        let stage = match s.stage {
            crate::types::Stage::Explore => "explore",
            crate::types::Stage::Stabilize => "stabilize",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.step,
            stage,
            s.k,
            s.prompt_pool_size,
            s.objective,
            s.mean_reward,
            s.reward_std,
            s.mean_kl,
            s.clip_fraction,
            s.mean_generation_std,
            s.mean_cot_answer_std
        );
    }
    out
}
