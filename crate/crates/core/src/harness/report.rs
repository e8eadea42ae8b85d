//! Aggregate report over a directory of transcripts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::runner::per_hundred;
use super::transcript::{Transcript, TranscriptError};
use crate::metrics::Outcome;
use crate::sim::EpisodeStatus;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no transcripts (*.jsonl) under {0}")]
    Empty(PathBuf),
    #[error("{path}: {source}")]
    Transcript {
        path: PathBuf,
        source: TranscriptError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub config_digest: String,
    pub transcripts: usize,
    /// Percentage of transcripts per outcome label, every label present.
    pub outcome_percent: BTreeMap<Outcome, f64>,
    pub mean_final_mae: f64,
    pub llm_calls: u64,
    pub parse_failures: u64,
    pub parse_failures_per_100_calls: f64,
    pub held_decisions: u64,
    pub failed_episodes: usize,
    pub episode_failure_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub transcripts: usize,
    pub scenarios: Vec<ScenarioReport>,
    pub note: String,
}

const NOTE: &str =
    "outcome labels other than the 0.2 MAE success margin use harness threshold conventions";

/// All `*.jsonl` files under `dir`, sorted by path.
pub fn find_transcripts(dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|source| ReportError::Io {
            path: d.clone(),
            source,
        })?;
        for entry in entries {
            let path = entry
                .map_err(|source| ReportError::Io {
                    path: d.clone(),
                    source,
                })?
                .path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "jsonl") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn summarize(transcripts: &[Transcript]) -> Report {
    let mut groups: BTreeMap<(String, String), Vec<&Transcript>> = BTreeMap::new();
    for t in transcripts {
        let config = &t.header.config;
        groups
            .entry((config.name.clone(), config.digest()))
            .or_default()
            .push(t);
    }
    let scenarios = groups
        .into_iter()
        .map(|((name, config_digest), ts)| {
            let n = ts.len();
            let mut outcome_percent: BTreeMap<Outcome, f64> =
                Outcome::ALL.iter().map(|&o| (o, 0.0)).collect();
            for t in &ts {
                let label = t
                    .summary
                    .outcome
                    .as_ref()
                    .map_or(Outcome::Inconclusive, |o| o.label);
                *outcome_percent.get_mut(&label).expect("all labels present") += 1.0;
            }
            for v in outcome_percent.values_mut() {
                *v = 100.0 * *v / n as f64;
            }
            let llm_calls = ts.iter().map(|t| t.summary.llm_calls).sum();
            let parse_failures = ts.iter().map(|t| t.summary.parse_failures).sum();
            let failed_episodes = ts
                .iter()
                .filter(|t| matches!(t.summary.status, EpisodeStatus::Failed { .. }))
                .count();
            ScenarioReport {
                name,
                config_digest,
                transcripts: n,
                outcome_percent,
                mean_final_mae: ts.iter().map(|t| t.summary.final_mae).sum::<f64>() / n as f64,
                llm_calls,
                parse_failures,
                parse_failures_per_100_calls: per_hundred(parse_failures, llm_calls),
                held_decisions: ts.iter().map(|t| t.summary.held_decisions).sum(),
                failed_episodes,
                episode_failure_percent: 100.0 * failed_episodes as f64 / n as f64,
            }
        })
        .collect();
    Report {
        transcripts: transcripts.len(),
        scenarios,
        note: NOTE.into(),
    }
}

fn pct(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}%")
    } else {
        format!("{v:.1}%")
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.scenarios {
            let outcomes: Vec<String> = s
                .outcome_percent
                .iter()
                .map(|(o, p)| format!("{o}: {}", pct(*p)))
                .collect();
            let _ = writeln!(
                out,
                "scenario {} (config {})",
                s.name,
                &s.config_digest[..12]
            );
            let _ = writeln!(out, "  transcripts: {}", s.transcripts);
            let _ = writeln!(out, "  outcomes: {}", outcomes.join(", "));
            let _ = writeln!(out, "  mean final MAE: {:.6}", s.mean_final_mae);
            let _ = writeln!(
                out,
                "  parse failures per 100 calls: {:.2} ({} of {})",
                s.parse_failures_per_100_calls, s.parse_failures, s.llm_calls
            );
            let _ = writeln!(out, "  held decisions: {}", s.held_decisions);
            let _ = writeln!(
                out,
                "  episode failure rate: {} ({} of {})",
                pct(s.episode_failure_percent),
                s.failed_episodes,
                s.transcripts
            );
        }
        let _ = writeln!(out, "note: {}", self.note);
        out
    }
}

/// Loads every transcript under `dir`, writes `report.txt` and
/// `report.json` into it, and returns the report.
pub fn report_dir(dir: &Path) -> Result<Report, ReportError> {
    let paths = find_transcripts(dir)?;
    if paths.is_empty() {
        return Err(ReportError::Empty(dir.to_path_buf()));
    }
    let transcripts = paths
        .iter()
        .map(|p| {
            Transcript::load(p).map_err(|source| ReportError::Transcript {
                path: p.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = summarize(&transcripts);
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| ReportError::Io { path, source })
    };
    write("report.txt", report.to_text())?;
    write(
        "report.json",
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    Ok(report)
}
