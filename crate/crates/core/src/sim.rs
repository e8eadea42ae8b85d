//! World state and the synchronous round loop.
//!
//! Every active agent decides from the same immutable [`WorldState`]
//! snapshot; [`step_world`] then applies all decisions at once. Position
//! commands are hard-clamped to the per-round velocity limit and clamp or
//! safe-distance violations are recorded rather than prevented.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

pub type AgentId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("invalid motion limits: {0}")]
    InvalidLimits(String),
    #[error("duplicate agent id {0}")]
    DuplicateAgent(AgentId),
    #[error("no decision for active agent {0}")]
    MissingDecision(AgentId),
    #[error("decision references unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("invalid initial placement: {0}")]
    InvalidPlacement(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub position: Vec2,
    /// Realized displacement over the last round.
    pub velocity: Vec2,
    pub stationary: bool,
}

impl AgentState {
    pub fn new(id: AgentId, position: Vec2) -> Self {
        Self {
            id,
            position,
            velocity: Vec2::ZERO,
            stationary: false,
        }
    }

    pub fn stationary(id: AgentId, position: Vec2) -> Self {
        Self {
            stationary: true,
            ..Self::new(id, position)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub round: u32,
    pub agents: Vec<AgentState>,
}

impl WorldState {
    /// Builds a round-0 world, rejecting duplicate ids and non-finite state.
    /// Agents are kept sorted by id.
    pub fn new(mut agents: Vec<AgentState>) -> Result<Self, SimError> {
        agents.sort_by_key(|a| a.id);
        for pair in agents.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(SimError::DuplicateAgent(pair[0].id));
            }
        }
        if agents
            .iter()
            .any(|a| !a.position.is_finite() || !a.velocity.is_finite())
        {
            return Err(SimError::NonFinite("agent state"));
        }
        Ok(Self { round: 0, agents })
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(|i| &self.agents[i])
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.agents.iter().map(|a| a.position).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.iter().map(|a| a.id)
    }

    /// Other agents in ascending id order.
    pub fn others(&self, id: AgentId) -> Vec<&AgentState> {
        self.agents.iter().filter(|a| a.id != id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    /// World units per round.
    pub max_velocity: f64,
    pub safe_distance: f64,
}

impl MotionLimits {
    pub fn new(max_velocity: f64, safe_distance: f64) -> Result<Self, SimError> {
        let limits = Self {
            max_velocity,
            safe_distance,
        };
        limits.validate()?;
        Ok(limits)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.max_velocity.is_finite() && self.max_velocity > 0.0) {
            return Err(SimError::InvalidLimits(format!(
                "max_velocity must be positive and finite, got {}",
                self.max_velocity
            )));
        }
        if !(self.safe_distance.is_finite() && self.safe_distance >= 0.0) {
            return Err(SimError::InvalidLimits(format!(
                "safe_distance must be nonnegative and finite, got {}",
                self.safe_distance
            )));
        }
        Ok(())
    }
}

/// Diagnostics attached to a decision by the backend that produced it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    /// Every assistant text received for this decision, in arrival order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_responses: Vec<String>,
    /// One entry per rejected response, naming the parse failure kind.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parse_failures: Vec<String>,
    /// Retry budget ran out and the agent held its position.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub held: bool,
    /// Coordinates carried more than two fractional digits.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub excess_precision: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub prompt_tokens: u64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub completion_tokens: u64,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub target: Vec2,
    pub reasoning: String,
    #[serde(default)]
    pub trace: DecisionTrace,
}

impl Decision {
    pub fn new(target: Vec2, reasoning: impl Into<String>) -> Self {
        Self {
            target,
            reasoning: reasoning.into(),
            trace: DecisionTrace::default(),
        }
    }
}

/// Failure of a decision-maker that the round loop cannot absorb.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("no parseable response after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("{0}")]
    Other(String),
}

/// A pluggable agent brain. Implementations see only the shared snapshot
/// and their own private state.
pub trait DecisionMaker: Send {
    fn decide(
        &mut self,
        id: AgentId,
        world: &WorldState,
        limits: &MotionLimits,
    ) -> Result<Decision, BackendError>;

    /// Short description recorded in transcripts.
    fn label(&self) -> String;
}

/// Moves from `current` toward `target` by at most `max_velocity`.
pub fn clamp_move(current: Vec2, target: Vec2, limits: &MotionLimits) -> Result<Vec2, SimError> {
    if !current.is_finite() || !target.is_finite() {
        return Err(SimError::NonFinite("clamp_move input"));
    }
    limits.validate()?;
    let delta = target - current;
    let len = delta.norm();
    if len <= limits.max_velocity {
        return Ok(target);
    }
    Ok(current + delta * (limits.max_velocity / len))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub id: AgentId,
    pub before: Vec2,
    pub after: Vec2,
    /// `None` for stationary agents that were not consulted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Round index of the snapshot the decisions were made from.
    pub round: u32,
    pub agents: Vec<AgentStep>,
    /// Pairs closer than the safe distance after the move.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub safe_violations: Vec<(AgentId, AgentId)>,
}

impl RoundRecord {
    pub fn after_positions(&self) -> Vec<Vec2> {
        self.agents.iter().map(|a| a.after).collect()
    }

    pub fn clamp_count(&self) -> usize {
        self.agents.iter().filter(|a| a.clamped).count()
    }
}

/// Applies one round of simultaneous decisions.
pub fn step_world(
    state: &WorldState,
    decisions: &BTreeMap<AgentId, Decision>,
    limits: &MotionLimits,
) -> Result<(WorldState, RoundRecord), SimError> {
    limits.validate()?;
    if let Some(&id) = decisions.keys().find(|&&id| state.agent(id).is_none()) {
        return Err(SimError::UnknownAgent(id));
    }

    let mut next = state.clone();
    let mut steps = Vec::with_capacity(state.agents.len());
    for (agent, slot) in state.agents.iter().zip(next.agents.iter_mut()) {
        let decision = decisions.get(&agent.id);
        if agent.stationary {
            slot.velocity = Vec2::ZERO;
            steps.push(AgentStep {
                id: agent.id,
                before: agent.position,
                after: agent.position,
                decision: decision.cloned(),
                clamped: false,
            });
            continue;
        }
        let decision = decision.ok_or(SimError::MissingDecision(agent.id))?;
        let after = clamp_move(agent.position, decision.target, limits)?;
        slot.position = after;
        slot.velocity = after - agent.position;
        steps.push(AgentStep {
            id: agent.id,
            before: agent.position,
            after,
            decision: Some(decision.clone()),
            clamped: after != decision.target,
        });
    }
    next.round = state.round + 1;

    let safe_violations = close_pairs(&next, limits.safe_distance);
    let record = RoundRecord {
        round: state.round,
        agents: steps,
        safe_violations,
    };
    Ok((next, record))
}

fn close_pairs(state: &WorldState, safe_distance: f64) -> Vec<(AgentId, AgentId)> {
    let mut out = Vec::new();
    for (k, a) in state.agents.iter().enumerate() {
        for b in &state.agents[k + 1..] {
            if a.position.distance(b.position) < safe_distance {
                out.push((a.id, b.id));
            }
        }
    }
    out
}

/// Semi-implicit Euler step of the double integrator `q' = v, v' = u`.
/// Agents without an entry in `accelerations` coast; stationary agents stay put.
pub fn integrate_double(
    state: &WorldState,
    accelerations: &BTreeMap<AgentId, Vec2>,
    dt: f64,
) -> Result<WorldState, SimError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(SimError::NonPositiveDt(dt));
    }
    if let Some(&id) = accelerations.keys().find(|&&id| state.agent(id).is_none()) {
        return Err(SimError::UnknownAgent(id));
    }
    if accelerations.values().any(|u| !u.is_finite()) {
        return Err(SimError::NonFinite("acceleration"));
    }
    let mut next = state.clone();
    for agent in next.agents.iter_mut().filter(|a| !a.stationary) {
        let u = accelerations.get(&agent.id).copied().unwrap_or_default();
        agent.velocity += u * dt;
        agent.position += agent.velocity * dt;
    }
    Ok(next)
}

/// Uniform i.i.d. placement in the square `[-half_width, half_width]^2`.
pub fn random_world(
    agent_count: usize,
    half_width: f64,
    stationary: &BTreeSet<AgentId>,
    seed: u64,
) -> Result<WorldState, SimError> {
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(SimError::InvalidPlacement(format!(
            "half width must be positive, got {half_width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = (0..agent_count)
        .map(|id| {
            let p = Vec2::new(
                rng.gen_range(-half_width..=half_width),
                rng.gen_range(-half_width..=half_width),
            );
            AgentState {
                stationary: stationary.contains(&id),
                ..AgentState::new(id, p)
            }
        })
        .collect();
    WorldState::new(agents)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSetup {
    pub rounds: u32,
    pub limits: MotionLimits,
    /// Abort the episode on an unrecoverable backend failure; otherwise the
    /// failing agent holds position for that round.
    pub strict: bool,
    /// Compute decisions for different agents on separate threads.
    #[serde(default)]
    pub parallel_decisions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EpisodeStatus {
    Completed,
    Failed { round: u32, cause: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub initial: WorldState,
    pub records: Vec<RoundRecord>,
    pub status: EpisodeStatus,
}

impl Episode {
    /// Positions at round 0 followed by the post-step positions of every round.
    pub fn trajectory(&self) -> Vec<Vec<Vec2>> {
        std::iter::once(self.initial.positions())
            .chain(self.records.iter().map(RoundRecord::after_positions))
            .collect()
    }
}

pub type Backends = BTreeMap<AgentId, Box<dyn DecisionMaker>>;

fn collect_decisions(
    world: &WorldState,
    backends: &mut Backends,
    limits: &MotionLimits,
    parallel: bool,
) -> Vec<(AgentId, Result<Decision, BackendError>)> {
    let active: BTreeSet<AgentId> = world
        .agents
        .iter()
        .filter(|a| !a.stationary)
        .map(|a| a.id)
        .collect();
    let jobs = backends.iter_mut().filter(|(id, _)| active.contains(id));
    if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .map(|(&id, backend)| (id, scope.spawn(move || backend.decide(id, world, limits))))
                .collect();
            handles
                .into_iter()
                .map(|(id, h)| {
                    let result = h.join().unwrap_or_else(|_| {
                        Err(BackendError::Other("decision thread panicked".into()))
                    });
                    (id, result)
                })
                .collect()
        })
    } else {
        jobs.map(|(&id, backend)| (id, backend.decide(id, world, limits)))
            .collect()
    }
}

/// Runs `setup.rounds` synchronous rounds from `initial`.
pub fn run_episode(
    setup: &EpisodeSetup,
    initial: WorldState,
    backends: &mut Backends,
) -> Result<Episode, SimError> {
    setup.limits.validate()?;
    if let Some(agent) = initial
        .agents
        .iter()
        .find(|a| !a.stationary && !backends.contains_key(&a.id))
    {
        return Err(SimError::MissingDecision(agent.id));
    }

    let mut world = initial.clone();
    let mut records = Vec::with_capacity(setup.rounds as usize);
    let mut status = EpisodeStatus::Completed;

    'rounds: for _ in 0..setup.rounds {
        let mut decisions = BTreeMap::new();
        for (id, result) in
            collect_decisions(&world, backends, &setup.limits, setup.parallel_decisions)
        {
            match result {
                Ok(d) => {
                    decisions.insert(id, d);
                }
                Err(err) if setup.strict => {
                    status = EpisodeStatus::Failed {
                        round: world.round,
                        cause: format!("agent {id}: {err}"),
                    };
                    break 'rounds;
                }
                Err(err) => {
                    let here = world.agent(id).map(|a| a.position).unwrap_or_default();
                    let mut held = Decision::new(here, format!("held position: {err}"));
                    held.trace.held = true;
                    decisions.insert(id, held);
                }
            }
        }
        let (next, record) = step_world(&world, &decisions, &setup.limits)?;
        records.push(record);
        world = next;
    }

    Ok(Episode {
        initial,
        records,
        status,
    })
}
