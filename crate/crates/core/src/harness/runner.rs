//! Trial execution, batches over seeds, and replay from transcripts.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{BackendSpec, ConfigError, ExperimentConfig};
use super::transcript::{
    RoundEntry, Transcript, TranscriptError, TranscriptHeader, TranscriptSummary,
    TRANSCRIPT_SCHEMA_VERSION,
};
use crate::llm::{
    ChatEndpoint, HttpChatClient, LlmAgent, PromptContext, ReplayEndpoint, TokenUsage,
    TransportError,
};
use crate::metrics::{classify_outcome, MetricSeries, MetricsError, Outcome};
use crate::olfati::OracleFlocker;
use crate::scripted::ScriptedPolicy;
use crate::sim::{
    random_world, run_episode, AgentId, BackendError, Backends, Decision, DecisionMaker, Episode,
    EpisodeSetup, EpisodeStatus, MotionLimits, SimError, WorldState,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("chat endpoint for agent {agent}: {source}")]
    Endpoint {
        agent: AgentId,
        source: TransportError,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("replayed transcript diverges: {0}")]
    ReplayMismatch(String),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let context = context.into();
    move |source| HarnessError::Io { context, source }
}

/// Builds the chat endpoint for one agent.
pub type EndpointFactory<'a> =
    dyn FnMut(&ExperimentConfig, AgentId) -> Result<Box<dyn ChatEndpoint>, TransportError> + 'a;

/// Connects to the configured HTTP endpoint.
pub fn http_endpoint(
    config: &ExperimentConfig,
    _agent: AgentId,
) -> Result<Box<dyn ChatEndpoint>, TransportError> {
    Ok(Box::new(HttpChatClient::from_env(
        config.backend.chat.clone(),
    )?))
}

pub fn prompt_context(
    config: &ExperimentConfig,
    agent: AgentId,
) -> Result<PromptContext, HarnessError> {
    Ok(PromptContext {
        templates: config.backend.templates.clone().unwrap_or_default(),
        shape: config.formation.shape.prompt_name().to_string(),
        limits: config.limits()?,
        personality: config.personality_for(agent),
        velocities: config.backend.velocities,
    })
}

fn chat_agent(
    config: &ExperimentConfig,
    id: AgentId,
    endpoint: Box<dyn ChatEndpoint>,
) -> Result<LlmAgent, HarnessError> {
    let label = format!("chat:{}", config.backend.chat.model);
    Ok(LlmAgent::new(
        id,
        endpoint,
        prompt_context(config, id)?,
        config.retry_policy(),
        config.backend.history,
        label,
    ))
}

pub fn build_backends(
    config: &ExperimentConfig,
    endpoints: &mut EndpointFactory<'_>,
) -> Result<Backends, HarnessError> {
    let params = config.alpha_params()?;
    let mut backends: Backends = BTreeMap::new();
    for id in 0..config.world.agent_count {
        let backend: Box<dyn DecisionMaker> = match config.backend_for(id) {
            BackendSpec::Oracle => {
                let mut oracle = OracleFlocker::new(params);
                oracle.substeps = config.backend.oracle_substeps;
                oracle.dt = config.backend.oracle_dt;
                Box::new(oracle)
            }
            BackendSpec::Scripted(kind) => {
                let mut policy = match kind {
                    crate::scripted::ScriptedKind::OracleFlockerWrapper => {
                        ScriptedPolicy::with_oracle(params)
                    }
                    other => ScriptedPolicy::new(other),
                };
                policy.consensus_fraction = config.backend.consensus_fraction;
                Box::new(policy)
            }
            BackendSpec::Chat => {
                let endpoint = endpoints(config, id)
                    .map_err(|source| HarnessError::Endpoint { agent: id, source })?;
                Box::new(chat_agent(config, id, endpoint)?)
            }
        };
        backends.insert(id, backend);
    }
    Ok(backends)
}

pub fn initial_world(config: &ExperimentConfig, seed: u64) -> Result<WorldState, HarnessError> {
    let stationary: BTreeSet<AgentId> = config.world.stationary_ids.iter().copied().collect();
    Ok(random_world(
        config.world.agent_count,
        config.world.init_half_width,
        &stationary,
        seed,
    )?)
}

fn episode_setup(config: &ExperimentConfig) -> Result<EpisodeSetup, HarnessError> {
    Ok(EpisodeSetup {
        rounds: config.world.rounds,
        limits: config.limits()?,
        strict: config.world.strict,
        parallel_decisions: config.world.parallel_decisions,
    })
}

/// Builds a transcript from a finished episode.
pub fn assemble_transcript(
    config: &ExperimentConfig,
    trial: u32,
    seed: u64,
    labels: Vec<String>,
    episode: &Episode,
    wall_clock_ms: Option<u64>,
) -> Result<Transcript, HarnessError> {
    let d = config.formation.desired_distance;
    let series = MetricSeries::from_trajectory(&episode.trajectory(), d)?;
    let outcome = match classify_outcome(&series, &config.formation_spec()?) {
        Ok(label) => Some(label),
        Err(MetricsError::SeriesTooShort { .. }) => None,
        Err(e) => return Err(e.into()),
    };

    let mut llm_calls = 0;
    let mut parse_failures = 0;
    let mut held = 0;
    let mut tokens = TokenUsage::default();
    for step in episode.records.iter().flat_map(|r| &r.agents) {
        if let Some(dec) = &step.decision {
            llm_calls += dec.trace.raw_responses.len() as u64;
            parse_failures += dec.trace.parse_failures.len() as u64;
            held += u64::from(dec.trace.held);
            tokens.prompt_tokens += dec.trace.prompt_tokens;
            tokens.completion_tokens += dec.trace.completion_tokens;
        }
    }
    let mut metrics = series.rounds.into_iter();
    let initial_metrics = metrics.next().expect("round 0 metrics");
    let rounds: Vec<RoundEntry> = episode
        .records
        .iter()
        .cloned()
        .zip(metrics)
        .map(|(record, metrics)| RoundEntry { record, metrics })
        .collect();
    let final_mae = rounds.last().map_or(initial_metrics.mae, |r| r.metrics.mae);
    let live = config.uses_chat();

    Ok(Transcript {
        header: TranscriptHeader {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            trial,
            seed,
            config: config.clone(),
            backends: labels,
            initial: episode.initial.clone(),
            initial_metrics,
        },
        summary: TranscriptSummary {
            status: episode.status.clone(),
            outcome,
            final_mae,
            rounds_completed: rounds.len() as u32,
            llm_calls,
            parse_failures,
            held_decisions: held,
            clamp_events: episode.records.iter().map(|r| r.clamp_count() as u64).sum(),
            safe_violations: episode
                .records
                .iter()
                .map(|r| r.safe_violations.len() as u64)
                .sum(),
            wall_clock_ms: if live { wall_clock_ms } else { None },
            tokens: (live && tokens != TokenUsage::default()).then_some(tokens),
        },
        rounds,
    })
}

/// Runs trial `trial` of the batch, seeded with `seed + trial`.
pub fn run_trial(
    config: &ExperimentConfig,
    trial: u32,
    endpoints: &mut EndpointFactory<'_>,
) -> Result<Transcript, HarnessError> {
    config.validate()?;
    let seed = config.world.seed.wrapping_add(u64::from(trial));
    let initial = initial_world(config, seed)?;
    let mut backends = build_backends(config, endpoints)?;
    let labels = backends.values().map(|b| b.label()).collect();
    let started = Instant::now();
    let episode = run_episode(&episode_setup(config)?, initial, &mut backends)?;
    let elapsed = started.elapsed().as_millis() as u64;
    assemble_transcript(config, trial, seed, labels, &episode, Some(elapsed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: u32,
    pub trials: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: u32,
    pub seed: u64,
    pub error: String,
}

/// Batch-level statistics over all trials that produced a transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub config_digest: String,
    pub trials: u32,
    pub completed: usize,
    pub failed_episodes: usize,
    pub trial_failures: Vec<TrialFailure>,
    pub outcome_counts: BTreeMap<Outcome, usize>,
    pub mae_per_round: Vec<RoundStats>,
    pub llm_calls: u64,
    pub parse_failures: u64,
    /// Parse failures per 100 model replies.
    pub format_failure_rate: f64,
}

pub fn aggregate(
    config: &ExperimentConfig,
    transcripts: &[Transcript],
    failures: Vec<TrialFailure>,
) -> Aggregate {
    let mut outcome_counts = BTreeMap::new();
    let mut per_round: Vec<Vec<f64>> = Vec::new();
    for t in transcripts {
        let label = t
            .summary
            .outcome
            .as_ref()
            .map_or(Outcome::Inconclusive, |o| o.label);
        *outcome_counts.entry(label).or_insert(0) += 1;
        for (k, m) in t.metrics().rounds.iter().enumerate() {
            if per_round.len() <= k {
                per_round.push(Vec::new());
            }
            per_round[k].push(m.mae);
        }
    }
    let mae_per_round = per_round
        .iter()
        .enumerate()
        .map(|(k, v)| RoundStats {
            round: k as u32,
            trials: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    let llm_calls = transcripts.iter().map(|t| t.summary.llm_calls).sum();
    let parse_failures = transcripts.iter().map(|t| t.summary.parse_failures).sum();
    Aggregate {
        name: config.name.clone(),
        config_digest: config.digest(),
        trials: config.world.trials,
        completed: transcripts.len(),
        failed_episodes: transcripts
            .iter()
            .filter(|t| matches!(t.summary.status, EpisodeStatus::Failed { .. }))
            .count(),
        trial_failures: failures,
        outcome_counts,
        mae_per_round,
        llm_calls,
        parse_failures,
        format_failure_rate: per_hundred(parse_failures, llm_calls),
    }
}

pub(crate) fn per_hundred(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

#[derive(Debug, Clone)]
pub struct MatrixResult {
    pub transcripts: Vec<Transcript>,
    pub aggregate: Aggregate,
    /// Directory holding this batch's files, when persisted.
    pub dir: Option<PathBuf>,
}

pub fn trial_stem(trial: u32) -> String {
    format!("trial-{trial:03}")
}

/// Writes `<stem>.jsonl`, `<stem>.trajectory.csv` and `<stem>.metrics.csv`.
pub fn write_trial(dir: &Path, transcript: &Transcript) -> Result<PathBuf, HarnessError> {
    let stem = trial_stem(transcript.header.trial);
    let path = dir.join(format!("{stem}.jsonl"));
    transcript
        .save(&path)
        .map_err(io_err(path.display().to_string()))?;
    let csv = dir.join(format!("{stem}.trajectory.csv"));
    std::fs::write(&csv, transcript.trajectory_csv()).map_err(io_err(csv.display().to_string()))?;
    let csv = dir.join(format!("{stem}.metrics.csv"));
    std::fs::write(&csv, transcript.metrics_csv()).map_err(io_err(csv.display().to_string()))?;
    Ok(path)
}

/// Runs every trial of the batch. A trial that cannot start (for example an
/// unreachable endpoint) is recorded as a failure and the batch continues.
/// With `out`, files go to `<out>/<name>/`.
pub fn run_matrix(
    config: &ExperimentConfig,
    out: Option<&Path>,
    endpoints: &mut EndpointFactory<'_>,
) -> Result<MatrixResult, HarnessError> {
    config.validate()?;
    let dir = match out {
        Some(root) => {
            let dir = root.join(&config.name);
            std::fs::create_dir_all(&dir).map_err(io_err(dir.display().to_string()))?;
            Some(dir)
        }
        None => None,
    };
    let mut transcripts = Vec::new();
    let mut failures = Vec::new();
    for trial in 0..config.world.trials {
        let seed = config.world.seed.wrapping_add(u64::from(trial));
        match run_trial(config, trial, endpoints) {
            Ok(t) => {
                log::info!(
                    "{} trial {trial}: {} final MAE {:.4}",
                    config.name,
                    t.summary
                        .outcome
                        .as_ref()
                        .map_or("unclassified", |o| o.label.as_str()),
                    t.summary.final_mae
                );
                if let Some(dir) = &dir {
                    write_trial(dir, &t)?;
                }
                transcripts.push(t);
            }
            Err(e @ (HarnessError::Config(_) | HarnessError::Io { .. })) => return Err(e),
            Err(e) => {
                log::warn!("{} trial {trial} failed: {e}", config.name);
                failures.push(TrialFailure {
                    trial,
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    let aggregate = aggregate(config, &transcripts, failures);
    if let Some(dir) = &dir {
        let path = dir.join("aggregate.json");
        let text = serde_json::to_string_pretty(&aggregate).expect("aggregate serializes");
        std::fs::write(&path, text + "\n").map_err(io_err(path.display().to_string()))?;
    }
    Ok(MatrixResult {
        transcripts,
        aggregate,
        dir,
    })
}

/// Serves one agent's recorded decisions in round order.
struct StoredDecisions {
    queue: VecDeque<Decision>,
    label: String,
}

impl DecisionMaker for StoredDecisions {
    fn decide(
        &mut self,
        id: AgentId,
        _world: &WorldState,
        _limits: &MotionLimits,
    ) -> Result<Decision, BackendError> {
        self.queue
            .pop_front()
            .ok_or_else(|| BackendError::Other(format!("no recorded decision left for agent {id}")))
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Re-runs a chat agent on its recorded replies and checks each decision
/// against the recorded one.
struct ReplayedChat {
    agent: LlmAgent,
    recorded: VecDeque<Decision>,
}

impl DecisionMaker for ReplayedChat {
    fn decide(
        &mut self,
        id: AgentId,
        world: &WorldState,
        limits: &MotionLimits,
    ) -> Result<Decision, BackendError> {
        let recorded = self.recorded.pop_front();
        let fresh = self.agent.decide(id, world, limits)?;
        match recorded {
            // Keep the stored trace; it carries token counts the replay cannot know.
            Some(r) if r.target == fresh.target => Ok(r),
            _ => Ok(fresh),
        }
    }

    fn label(&self) -> String {
        self.agent.label()
    }
}

/// Re-simulates a transcript. Chat agents re-parse their recorded replies;
/// every other agent re-applies its recorded decisions.
pub fn replay_transcript(original: &Transcript) -> Result<Transcript, HarnessError> {
    let config = &original.header.config;
    let mut recorded: BTreeMap<AgentId, VecDeque<Decision>> = BTreeMap::new();
    for step in original.rounds.iter().flat_map(|r| &r.record.agents) {
        if let Some(d) = &step.decision {
            recorded.entry(step.id).or_default().push_back(d.clone());
        }
    }

    let mut backends: Backends = BTreeMap::new();
    for (k, agent) in original.header.initial.agents.iter().enumerate() {
        let id = agent.id;
        let queue = recorded.remove(&id).unwrap_or_default();
        let label = original.header.backends.get(k).cloned().unwrap_or_default();
        let backend: Box<dyn DecisionMaker> = if config.backend_for(id) == BackendSpec::Chat {
            let replies: Vec<String> = queue
                .iter()
                .flat_map(|d| d.trace.raw_responses.iter().cloned())
                .collect();
            Box::new(ReplayedChat {
                agent: chat_agent(config, id, Box::new(ReplayEndpoint::new(replies)))?,
                recorded: queue,
            })
        } else {
            Box::new(StoredDecisions { queue, label })
        };
        backends.insert(id, backend);
    }

    let mut setup = episode_setup(config)?;
    setup.parallel_decisions = false;
    if matches!(original.summary.status, EpisodeStatus::Failed { .. }) {
        setup.rounds = original.summary.rounds_completed + 1;
    }
    let episode = run_episode(&setup, original.header.initial.clone(), &mut backends)?;
    let mut replayed = assemble_transcript(
        config,
        original.header.trial,
        original.header.seed,
        original.header.backends.clone(),
        &episode,
        None,
    )?;
    replayed.summary.wall_clock_ms = original.summary.wall_clock_ms;
    replayed.summary.tokens = original.summary.tokens;
    Ok(replayed)
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub original: Transcript,
    pub replayed: Transcript,
    pub original_csv: String,
    pub replayed_csv: String,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.original_csv == self.replayed_csv
    }
}

pub fn replay(path: &Path) -> Result<ReplayReport, HarnessError> {
    let original = Transcript::load(path)?;
    let replayed = replay_transcript(&original)?;
    Ok(ReplayReport {
        original_csv: original.trajectory_csv(),
        replayed_csv: replayed.trajectory_csv(),
        original,
        replayed,
    })
}
