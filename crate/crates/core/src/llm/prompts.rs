//! Prompt templates and rendering.
//!
//! Templates carry `{}` slots (written as `[{}]` so the rendered value sits
//! inside brackets). Coordinates are truncated, not rounded, to two decimals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ChatMessage;
use crate::geometry::Vec2;
use crate::metrics::Shape;
use crate::sim::{AgentState, MotionLimits};

pub const AGENT_ROLE: &str = "You are a agent navigating a two-dimensional space.";

pub const GAME_DESCRIPTION: &str = "There are other agents in the space, and you must coordinate with each other to form a flock of a specified shape. Keep in mind Boids flocking rules. Your position is: [{}]. The positions of the other agents (in the format [[x, y], [x, y]...]) are: [{}]. The maximum velocity is [{}] units per round. The flock shape is a [{}]. You must avoid getting closer than [{}] units to any peers, otherwise, you may collide. Remember to consider the positions and velocity of other agents and consider how they might behave. You need to choose a position to move to in order to form a flock, and briefly explain the reasoning behind your decision.";

pub const ROUND_DESCRIPTION: &str = "You have now moved to: [{}]. The new positions of the other agents are: [{}]. Consider how well your strategy worked last round, keeping in mind your maximum velocity, Please select a new position to move to.";

pub const OUTPUT_FORMAT: &str = "Strictly follow the `Reasoning:..., Position: [x, y]' format to provide your answer. x and y must both be floating point numbers truncated to two decimal places. Briefly provide your thought process in the reasoning section while keeping the position section ONLY for the position you wish to move to this iteration, without any further explanation. Do not write ANYTHING ELSE in the position section.";

pub const STUBBORN: &str = "You are an extremely stubborn person, prefer to remain stationary.";

pub const SUGGESTIBLE: &str =
    "You are an extremely suggestible person, prefer to move to someone else's position.";

const SLOT: &str = "{}";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("template '{name}' has {found} slots, expected {expected}")]
    SlotCount {
        name: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unknown formation '{0}'")]
    UnknownShape(String),
    #[error("an agent needs at least one peer to build a prompt")]
    NoPeers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Personality {
    Stubborn,
    Suggestible,
}

impl Personality {
    pub fn prefix(self) -> &'static str {
        match self {
            Personality::Stubborn => STUBBORN,
            Personality::Suggestible => SUGGESTIBLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplateSet {
    pub agent_role: String,
    /// Slots: own position, others' positions, max velocity, shape, safe distance.
    pub game_description: String,
    /// Slots: own new position, others' new positions.
    pub round_description: String,
    pub output_format: String,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        Self {
            agent_role: AGENT_ROLE.into(),
            game_description: GAME_DESCRIPTION.into(),
            round_description: ROUND_DESCRIPTION.into(),
            output_format: OUTPUT_FORMAT.into(),
        }
    }
}

impl PromptTemplateSet {
    pub fn validate(&self) -> Result<(), PromptError> {
        check_slots("agent_role", &self.agent_role, 0)?;
        check_slots("game_description", &self.game_description, 5)?;
        check_slots("round_description", &self.round_description, 2)?;
        check_slots("output_format", &self.output_format, 0)
    }
}

fn check_slots(name: &'static str, text: &str, expected: usize) -> Result<(), PromptError> {
    let found = text.matches(SLOT).count();
    if found == expected {
        Ok(())
    } else {
        Err(PromptError::SlotCount {
            name,
            expected,
            found,
        })
    }
}

fn fill(template: &str, values: &[String]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    for v in values {
        match rest.find(SLOT) {
            Some(at) => {
                out.push_str(&rest[..at]);
                out.push_str(v);
                rest = &rest[at + SLOT.len()..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

/// Truncates toward zero at two decimals: `1.999` renders `1.99`.
///
/// Works on the shortest round-trip decimal form, so values such as `0.29`
/// are not pulled down by their binary representation.
pub fn truncate2(value: f64) -> String {
    if !value.is_finite() {
        return format!("{value}");
    }
    let text = format!("{value}");
    let (neg, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let mut frac: String = frac_part.chars().take(2).collect();
    while frac.len() < 2 {
        frac.push('0');
    }
    let zero = int_part.chars().all(|c| c == '0') && frac == "00";
    let sign = if neg && !zero { "-" } else { "" };
    format!("{sign}{int_part}.{frac}")
}

pub fn render_pair(p: Vec2) -> String {
    format!("{}, {}", truncate2(p.x), truncate2(p.y))
}

/// `[x, y], [x, y], ...` for the others slot (the template supplies the outer brackets).
pub fn render_list(points: impl IntoIterator<Item = Vec2>) -> String {
    points
        .into_iter()
        .map(|p| format!("[{}]", render_pair(p)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Scalars such as the velocity limit use the shortest natural form (`5`, `2.5`).
pub fn render_scalar(value: f64) -> String {
    format!("{value}")
}

fn sorted_others<'a>(others: &[&'a AgentState]) -> Vec<&'a AgentState> {
    let mut v = others.to_vec();
    v.sort_by_key(|a| a.id);
    v
}

/// The first-round message: role, game description and output format.
pub fn build_initial_prompt(
    templates: &PromptTemplateSet,
    me: &AgentState,
    others: &[&AgentState],
    limits: &MotionLimits,
    shape: &str,
    personality: Option<Personality>,
) -> Result<Vec<ChatMessage>, PromptError> {
    templates.validate()?;
    let shape: Shape = shape
        .parse()
        .map_err(|_| PromptError::UnknownShape(shape.to_string()))?;
    if others.is_empty() {
        return Err(PromptError::NoPeers);
    }
    let others = sorted_others(others);
    let game = fill(
        &templates.game_description,
        &[
            render_pair(me.position),
            render_list(others.iter().filter(|a| a.id != me.id).map(|a| a.position)),
            render_scalar(limits.max_velocity),
            shape.prompt_name().to_string(),
            render_scalar(limits.safe_distance),
        ],
    );
    let mut parts: Vec<&str> = Vec::with_capacity(4);
    if let Some(p) = personality {
        parts.push(p.prefix());
    }
    parts.extend([
        templates.agent_role.as_str(),
        game.as_str(),
        templates.output_format.as_str(),
    ]);
    Ok(vec![ChatMessage::user(parts.join(" "))])
}

/// The per-round update message. With `velocities`, others' last-round
/// displacements are appended as an extra sentence.
pub fn build_round_prompt(
    templates: &PromptTemplateSet,
    me: &AgentState,
    others: &[&AgentState],
    velocities: bool,
) -> Result<ChatMessage, PromptError> {
    templates.validate()?;
    if others.is_empty() {
        return Err(PromptError::NoPeers);
    }
    let others = sorted_others(others);
    let mut text = fill(
        &templates.round_description,
        &[
            render_pair(me.position),
            render_list(others.iter().filter(|a| a.id != me.id).map(|a| a.position)),
        ],
    );
    if velocities {
        text.push_str(&format!(
            " The velocities of the other agents are: [{}].",
            render_list(others.iter().map(|a| a.velocity))
        ));
    }
    Ok(ChatMessage::user(text))
}
