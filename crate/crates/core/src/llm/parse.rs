//! Parser for `Reasoning: ..., Position: [x, y]` responses.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseError {
    #[error("empty response")]
    Empty,
    #[error("no 'Position:' marker")]
    MissingPositionMarker,
    #[error("no well-formed [x, y] pair after the last 'Position:' marker")]
    MalformedCoordinates,
    #[error("{0} coordinate pairs after the last 'Position:' marker")]
    MultipleAmbiguousPositions(usize),
}

impl ParseError {
    /// Stable identifier used in transcripts and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Empty => "empty",
            ParseError::MissingPositionMarker => "missing_position_marker",
            ParseError::MalformedCoordinates => "malformed_coordinates",
            ParseError::MultipleAmbiguousPositions(_) => "multiple_ambiguous_positions",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    /// Empty when the response carried no reasoning.
    pub reasoning: String,
    pub target: Vec2,
    pub raw: String,
    /// A coordinate had more than two fractional digits.
    pub excess_precision: bool,
}

impl DecisionResponse {
    pub fn has_reasoning(&self) -> bool {
        !self.reasoning.is_empty()
    }
}

fn position_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)position\s*\**\s*:\**").expect("valid regex"))
}

fn reasoning_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)reasoning\s*\**\s*:\**").expect("valid regex"))
}

fn coordinate_pair() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let num = r"([+-]?(?:\d+(?:\.\d*)?|\.\d+))";
        Regex::new(&format!(r"\[\s*{num}\s*,\s*{num}\s*\]")).expect("valid regex")
    })
}

fn fraction_digits(num: &str) -> usize {
    num.split_once('.').map(|(_, f)| f.len()).unwrap_or(0)
}

/// Extracts the target from the last `Position:` marker.
pub fn parse_response(raw: &str) -> Result<DecisionResponse, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let marker = position_marker()
        .find_iter(raw)
        .last()
        .ok_or(ParseError::MissingPositionMarker)?;
    let tail = &raw[marker.end()..];
    let pairs: Vec<_> = coordinate_pair().captures_iter(tail).collect();
    let caps = match pairs.len() {
        0 => return Err(ParseError::MalformedCoordinates),
        1 => &pairs[0],
        n => return Err(ParseError::MultipleAmbiguousPositions(n)),
    };
    let (xs, ys) = (&caps[1], &caps[2]);
    let x: f64 = xs.parse().map_err(|_| ParseError::MalformedCoordinates)?;
    let y: f64 = ys.parse().map_err(|_| ParseError::MalformedCoordinates)?;
    let target = Vec2::new(x, y);
    if !target.is_finite() {
        return Err(ParseError::MalformedCoordinates);
    }

    let head = &raw[..marker.start()];
    let body = match reasoning_marker().find(head) {
        Some(m) => &head[m.end()..],
        None => head,
    };
    let reasoning = body
        .trim()
        .trim_start_matches("```")
        .trim_end_matches(|c: char| c == ',' || c == '*' || c.is_whitespace())
        .trim()
        .to_string();

    Ok(DecisionResponse {
        reasoning,
        target,
        raw: raw.to_string(),
        excess_precision: fraction_digits(xs) > 2 || fraction_digits(ys) > 2,
    })
}

/// Byte-level entry point; invalid UTF-8 is replaced before parsing.
pub fn parse_response_bytes(raw: &[u8]) -> Result<DecisionResponse, ParseError> {
    parse_response(&String::from_utf8_lossy(raw))
}
