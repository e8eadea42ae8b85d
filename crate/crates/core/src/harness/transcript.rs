//! Line-delimited JSON transcripts: a header record, one record per round,
//! and a closing summary.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::config::ExperimentConfig;
use crate::geometry::{fmt_min2, Vec2};
use crate::llm::TokenUsage;
use crate::metrics::{nearest_distances, MetricSeries, OutcomeLabel, RoundMetrics};
use crate::sim::{AgentId, EpisodeStatus, RoundRecord, WorldState};

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("transcript is empty")]
    Empty,
    #[error("transcript schema version {found} does not match supported version {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("transcript truncated after {lines} lines: {missing}")]
    Truncated { lines: usize, missing: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub schema_version: u32,
    pub trial: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Backend label per agent, in id order.
    pub backends: Vec<String>,
    pub initial: WorldState,
    pub initial_metrics: RoundMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub record: RoundRecord,
    /// Metrics of the positions after this round's moves.
    pub metrics: RoundMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub status: EpisodeStatus,
    /// Absent when the episode was too short to classify.
    pub outcome: Option<OutcomeLabel>,
    pub final_mae: f64,
    pub rounds_completed: u32,
    /// Model replies received, rejected ones included.
    pub llm_calls: u64,
    pub parse_failures: u64,
    pub held_decisions: u64,
    pub clamp_events: u64,
    pub safe_violations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(Box<TranscriptHeader>),
    Round(Box<RoundEntry>),
    Summary(Box<TranscriptSummary>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub rounds: Vec<RoundEntry>,
    pub summary: TranscriptSummary,
}

impl Transcript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: Line| {
            out.push_str(&serde_json::to_string(&line).expect("transcript serializes"));
            out.push('\n');
        };
        push(Line::Header(Box::new(self.header.clone())));
        for r in &self.rounds {
            push(Line::Round(Box::new(r.clone())));
        }
        push(Line::Summary(Box::new(self.summary.clone())));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(TranscriptError::Empty)?;
        check_version(first)?;

        let mut header = None;
        let mut rounds = Vec::new();
        let mut summary = None;
        let mut count = 0;
        for (idx, raw) in std::iter::once((0, first)).chain(lines) {
            count += 1;
            let line_no = idx + 1;
            let malformed = |message: String| TranscriptError::Malformed {
                line: line_no,
                message,
            };
            if summary.is_some() {
                return Err(malformed("record after the summary".into()));
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| {
                if e.is_eof() {
                    TranscriptError::Truncated {
                        lines: line_no,
                        missing: "incomplete final record",
                    }
                } else {
                    malformed(e.to_string())
                }
            })?;
            match line {
                Line::Header(h) if header.is_none() && line_no == 1 => header = Some(*h),
                Line::Header(_) => return Err(malformed("unexpected header record".into())),
                Line::Round(_) | Line::Summary(_) if header.is_none() => {
                    return Err(malformed("first record must be the header".into()))
                }
                Line::Round(r) => {
                    if r.record.round as usize != rounds.len() {
                        return Err(malformed(format!(
                            "round {} out of sequence (expected {})",
                            r.record.round,
                            rounds.len()
                        )));
                    }
                    rounds.push(*r);
                }
                Line::Summary(s) => summary = Some(*s),
            }
        }
        let header = header.ok_or(TranscriptError::Truncated {
            lines: count,
            missing: "header record",
        })?;
        let summary = summary.ok_or(TranscriptError::Truncated {
            lines: count,
            missing: "summary record",
        })?;
        Ok(Self {
            header,
            rounds,
            summary,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| TranscriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl(&text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_jsonl())
    }

    /// Positions for round 0 and after every completed round.
    pub fn trajectory(&self) -> Vec<Vec<Vec2>> {
        std::iter::once(self.header.initial.positions())
            .chain(self.rounds.iter().map(|r| r.record.after_positions()))
            .collect()
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.header.initial.ids().collect()
    }

    pub fn metrics(&self) -> MetricSeries {
        MetricSeries {
            rounds: std::iter::once(self.header.initial_metrics.clone())
                .chain(self.rounds.iter().map(|r| r.metrics.clone()))
                .collect(),
            positions: self.trajectory(),
        }
    }

    /// `round,agent_id,x,y,clamped,min_dist`, one row per agent per round.
    pub fn trajectory_csv(&self) -> String {
        let ids = self.agent_ids();
        let mut out = String::from("round,agent_id,x,y,clamped,min_dist\n");
        for (t, positions) in self.trajectory().iter().enumerate() {
            let nearest = nearest_distances(positions);
            for (k, (id, p)) in ids.iter().zip(positions).enumerate() {
                let clamped = t > 0 && self.rounds[t - 1].record.agents[k].clamped;
                out.push_str(&format!(
                    "{t},{id},{},{},{clamped},{}\n",
                    fmt_min2(p.x),
                    fmt_min2(p.y),
                    fmt_min2(nearest[k])
                ));
            }
        }
        out
    }

    pub fn metrics_csv(&self) -> String {
        self.metrics().to_csv()
    }
}

fn check_version(first: &str) -> Result<(), TranscriptError> {
    let value: Value = serde_json::from_str(first).map_err(|e| {
        if e.is_eof() {
            TranscriptError::Truncated {
                lines: 1,
                missing: "incomplete header record",
            }
        } else {
            TranscriptError::Malformed {
                line: 1,
                message: e.to_string(),
            }
        }
    })?;
    let found =
        value
            .get("schema_version")
            .and_then(Value::as_u64)
            .ok_or(TranscriptError::Malformed {
                line: 1,
                message: "header lacks schema_version".into(),
            })?;
    if found != u64::from(TRANSCRIPT_SCHEMA_VERSION) {
        return Err(TranscriptError::SchemaVersion {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: TRANSCRIPT_SCHEMA_VERSION,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::runner::run_trial;
    use crate::harness::BackendSpec;
    use crate::scripted::ScriptedKind;

    fn no_chat(
        _: &ExperimentConfig,
        _: AgentId,
    ) -> Result<Box<dyn crate::llm::ChatEndpoint>, crate::llm::TransportError> {
        Err(crate::llm::TransportError::Request("offline".into()))
    }

    fn sample() -> Transcript {
        let mut config = ExperimentConfig::preset("circle5x5").unwrap();
        config.set_backend(BackendSpec::Scripted(ScriptedKind::ConsensusSeeker));
        run_trial(&config, 0, &mut no_chat).unwrap()
    }

    #[test]
    fn round_trips_byte_identically() {
        let text = sample().to_jsonl();
        let back = Transcript::from_jsonl(&text).unwrap();
        for (k, (a, b)) in text.lines().zip(back.to_jsonl().lines()).enumerate() {
            let at = a
                .bytes()
                .zip(b.bytes())
                .position(|(x, y)| x != y)
                .unwrap_or(a.len().min(b.len()));
            assert_eq!(
                a,
                b,
                "line {k} differs at byte {at}: {:?}",
                &a[at.saturating_sub(80)..(at + 40).min(a.len())]
            );
        }
        assert_eq!(back.to_jsonl(), text);
    }
}
