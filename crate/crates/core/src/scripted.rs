//! Deterministic offline decision-makers reproducing behaviours observed
//! from language-model agents: consensus collapse, divergence, and the
//! stubborn / suggestible personalities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::olfati::{AlphaParams, OracleFlocker};
use crate::sim::{
    AgentId, AgentState, BackendError, Decision, DecisionMaker, MotionLimits, WorldState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptedError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("policy needs at least two agents")]
    TooFewAgents,
    #[error("unknown scripted policy '{0}'")]
    UnknownKind(String),
    #[error("consensus step fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptedKind {
    Stationary,
    ConsensusSeeker,
    Diverger,
    Stubborn,
    Suggestible,
    OracleFlockerWrapper,
}

impl ScriptedKind {
    pub const ALL: [ScriptedKind; 6] = [
        ScriptedKind::Stationary,
        ScriptedKind::ConsensusSeeker,
        ScriptedKind::Diverger,
        ScriptedKind::Stubborn,
        ScriptedKind::Suggestible,
        ScriptedKind::OracleFlockerWrapper,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScriptedKind::Stationary => "stationary",
            ScriptedKind::ConsensusSeeker => "consensus-seeker",
            ScriptedKind::Diverger => "diverger",
            ScriptedKind::Stubborn => "stubborn",
            ScriptedKind::Suggestible => "suggestible",
            ScriptedKind::OracleFlockerWrapper => "oracle-flocker-wrapper",
        }
    }
}

impl fmt::Display for ScriptedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScriptedKind {
    type Err = ScriptedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScriptedKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ScriptedError::UnknownKind(s.to_string()))
    }
}

fn me(i: AgentId, state: &WorldState) -> Result<&AgentState, ScriptedError> {
    state.agent(i).ok_or(ScriptedError::UnknownAgent(i))
}

/// Nearest other agent, ties broken by lowest id.
fn nearest_other(i: AgentId, state: &WorldState) -> Result<&AgentState, ScriptedError> {
    let here = me(i, state)?.position;
    state
        .agents
        .iter()
        .filter(|a| a.id != i)
        .fold(None::<(&AgentState, f64)>, |best, a| {
            let d = here.distance(a.position);
            match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((a, d)),
            }
        })
        .map(|(a, _)| a)
        .ok_or(ScriptedError::TooFewAgents)
}

/// Moves to the centroid of all agents, itself included.
pub fn consensus_seeker_decide(
    i: AgentId,
    state: &WorldState,
    _limits: &MotionLimits,
) -> Result<Decision, ScriptedError> {
    damped_consensus_decide(i, state, 1.0)
}

/// Moves the given fraction of the way toward the centroid.
pub fn damped_consensus_decide(
    i: AgentId,
    state: &WorldState,
    fraction: f64,
) -> Result<Decision, ScriptedError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ScriptedError::BadFraction(fraction));
    }
    let here = me(i, state)?.position;
    if state.agents.len() < 2 {
        return Err(ScriptedError::TooFewAgents);
    }
    let centre = Vec2::centroid(&state.positions()).expect("non-empty");
    let target = if fraction == 1.0 {
        centre
    } else {
        here + (centre - here) * fraction
    };
    Ok(Decision::new(
        target,
        format!(
            "gather at the group centre ({:.2}, {:.2})",
            centre.x, centre.y
        ),
    ))
}

/// Flees the nearest agent at full speed; moves along +x if coincident.
pub fn diverger_decide(
    i: AgentId,
    state: &WorldState,
    limits: &MotionLimits,
) -> Result<Decision, ScriptedError> {
    let here = me(i, state)?.position;
    let nearest = nearest_other(i, state)?;
    let away = here - nearest.position;
    let len = away.norm();
    let dir = if len > 0.0 {
        away / len
    } else {
        Vec2::new(1.0, 0.0)
    };
    Ok(Decision::new(
        here + dir * limits.max_velocity,
        format!("move away from agent {}", nearest.id),
    ))
}

pub fn stubborn_decide(
    i: AgentId,
    state: &WorldState,
    _limits: &MotionLimits,
) -> Result<Decision, ScriptedError> {
    let here = me(i, state)?.position;
    Ok(Decision::new(here, "remain stationary"))
}

/// Moves onto the nearest other agent's position.
pub fn suggestible_decide(
    i: AgentId,
    state: &WorldState,
    _limits: &MotionLimits,
) -> Result<Decision, ScriptedError> {
    let nearest = nearest_other(i, state)?;
    Ok(Decision::new(
        nearest.position,
        format!("move to agent {}'s position", nearest.id),
    ))
}

/// A named scripted backend.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub kind: ScriptedKind,
    /// Fraction of the way to the centroid per round for consensus seekers.
    pub consensus_fraction: f64,
    oracle: Option<OracleFlocker>,
}

impl ScriptedPolicy {
    pub fn new(kind: ScriptedKind) -> Self {
        Self {
            kind,
            consensus_fraction: 1.0,
            oracle: None,
        }
    }

    pub fn with_oracle(params: AlphaParams) -> Self {
        Self {
            oracle: Some(OracleFlocker::new(params)),
            ..Self::new(ScriptedKind::OracleFlockerWrapper)
        }
    }

    pub fn decide_pure(
        &self,
        i: AgentId,
        state: &WorldState,
        limits: &MotionLimits,
    ) -> Result<Decision, BackendError> {
        let result = match self.kind {
            ScriptedKind::Stationary | ScriptedKind::Stubborn => stubborn_decide(i, state, limits),
            ScriptedKind::ConsensusSeeker => {
                damped_consensus_decide(i, state, self.consensus_fraction)
            }
            ScriptedKind::Diverger => diverger_decide(i, state, limits),
            ScriptedKind::Suggestible => suggestible_decide(i, state, limits),
            ScriptedKind::OracleFlockerWrapper => {
                let oracle = self.oracle.as_ref().ok_or_else(|| {
                    BackendError::Other("oracle wrapper built without parameters".into())
                })?;
                return crate::olfati::oracle_flocker_decide(
                    i,
                    state,
                    &oracle.params,
                    limits,
                    oracle.substeps,
                    oracle.dt,
                )
                .map_err(|e| BackendError::Other(e.to_string()));
            }
        };
        result.map_err(|e| BackendError::Other(e.to_string()))
    }
}

impl DecisionMaker for ScriptedPolicy {
    fn decide(
        &mut self,
        id: AgentId,
        world: &WorldState,
        limits: &MotionLimits,
    ) -> Result<Decision, BackendError> {
        self.decide_pure(id, world, limits)
    }

    fn label(&self) -> String {
        format!("scripted:{}", self.kind)
    }
}
