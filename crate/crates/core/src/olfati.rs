//! Olfati-Saber alpha-agent flocking controller.
//!
//! The control input for agent `i` is
//!
//! ```text
//! u_i = sum_{j in N_i} phi_alpha(||q_j - q_i||_sigma) n_ij
//!     + sum_{j in N_i} a_ij(q) (v_j - v_i)
//! ```
//!
//! with the sigma-norm, bump function, action function and adjacency
//! defined below. The first sum is the negative gradient of a smooth
//! pairwise potential whose minimum sits at the lattice distance; the
//! second is velocity consensus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::sim::{
    integrate_double, AgentId, BackendError, Decision, DecisionMaker, MotionLimits, SimError,
    WorldState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("sigma-norm parameter must lie in (0, 1), got {0}")]
    SigmaEps(f64),
    #[error("bump threshold must lie in (0, 1), got {0}")]
    BumpH(f64),
    #[error("need 0 < lattice distance < interaction range, got d = {d}, r = {r}")]
    Distances { d: f64, r: f64 },
    #[error("need 0 < phi_a <= phi_b, got a = {a}, b = {b}")]
    Gains { a: f64, b: f64 },
    #[error("oracle integration needs substeps >= 1 and dt > 0, got {substeps} x {dt}")]
    Integration { substeps: u32, dt: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn check_eps(eps: f64) -> Result<(), ParamError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(ParamError::SigmaEps(eps))
    }
}

fn check_h(h: f64) -> Result<(), ParamError> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(ParamError::BumpH(h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams {
    pub sigma_eps: f64,
    pub interaction_range: f64,
    pub lattice_distance: f64,
    pub bump_h: f64,
    pub phi_a: f64,
    pub phi_b: f64,
}

impl AlphaParams {
    pub fn new(
        sigma_eps: f64,
        interaction_range: f64,
        lattice_distance: f64,
        bump_h: f64,
        phi_a: f64,
        phi_b: f64,
    ) -> Result<Self, ParamError> {
        let p = Self {
            sigma_eps,
            interaction_range,
            lattice_distance,
            bump_h,
            phi_a,
            phi_b,
        };
        p.validate()?;
        Ok(p)
    }

    /// Textbook gains: eps 0.1, h 0.2, a = b = 5, r = 1.2 d. These hold an
    /// already-connected lattice but fragment from scattered starts.
    pub fn textbook(lattice_distance: f64) -> Result<Self, ParamError> {
        Self::new(0.1, 1.2 * lattice_distance, lattice_distance, 0.2, 5.0, 5.0)
    }

    /// Oracle defaults: longer range (r = 3 d) so scattered agents find each
    /// other, with weak attraction (a = 1) against stiff repulsion (b = 5)
    /// to limit lattice compression from second-ring neighbours.
    pub fn for_lattice_distance(lattice_distance: f64) -> Result<Self, ParamError> {
        Self::new(
            0.1,
            3.0 * lattice_distance,
            lattice_distance,
            0.05,
            1.0,
            5.0,
        )
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check_eps(self.sigma_eps)?;
        check_h(self.bump_h)?;
        let (d, r) = (self.lattice_distance, self.interaction_range);
        if !(d > 0.0 && d < r && r.is_finite()) {
            return Err(ParamError::Distances { d, r });
        }
        let (a, b) = (self.phi_a, self.phi_b);
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return Err(ParamError::Gains { a, b });
        }
        Ok(())
    }

    /// Interaction range in sigma-norm units.
    pub fn r_alpha(&self) -> f64 {
        sigma_norm_len(self.interaction_range, self.sigma_eps)
    }

    /// Lattice distance in sigma-norm units.
    pub fn d_alpha(&self) -> f64 {
        sigma_norm_len(self.lattice_distance, self.sigma_eps)
    }
}

fn sigma_norm_len(len: f64, eps: f64) -> f64 {
    ((1.0 + eps * len * len).sqrt() - 1.0) / eps
}

/// `||z||_sigma = (sqrt(1 + eps ||z||^2) - 1) / eps`.
pub fn sigma_norm(z: Vec2, sigma_eps: f64) -> Result<f64, ParamError> {
    check_eps(sigma_eps)?;
    Ok(sigma_norm_len(z.norm(), sigma_eps))
}

fn sigma_grad_unchecked(qi: Vec2, qj: Vec2, eps: f64) -> Vec2 {
    let z = qj - qi;
    z / (1.0 + eps * z.norm_squared()).sqrt()
}

/// `n_ij = (q_j - q_i) / sqrt(1 + eps ||q_j - q_i||^2)`.
pub fn sigma_grad(qi: Vec2, qj: Vec2, sigma_eps: f64) -> Result<Vec2, ParamError> {
    check_eps(sigma_eps)?;
    Ok(sigma_grad_unchecked(qi, qj, sigma_eps))
}

fn bump_unchecked(z: f64, h: f64) -> f64 {
    if (0.0..h).contains(&z) {
        1.0
    } else if (h..=1.0).contains(&z) {
        0.5 * (1.0 + (std::f64::consts::PI * (z - h) / (1.0 - h)).cos())
    } else {
        0.0
    }
}

/// Bump function `rho_h`: 1 on `[0, h)`, cosine roll-off on `[h, 1]`, 0 elsewhere.
pub fn bump(z: f64, h: f64) -> Result<f64, ParamError> {
    check_h(h)?;
    Ok(bump_unchecked(z, h))
}

fn sigma1(z: f64) -> f64 {
    z / (1.0 + z * z).sqrt()
}

/// Uneven sigmoid `phi(z) = ((a + b) sigma1(z + c) + (a - b)) / 2`.
fn phi(z: f64, a: f64, b: f64) -> f64 {
    let c = (a - b).abs() / (4.0 * a * b).sqrt();
    0.5 * ((a + b) * sigma1(z + c) + (a - b))
}

/// `phi_alpha(z) = rho_h(z / r_alpha) phi(z - d_alpha)`, argument in sigma units.
pub fn action_phi_alpha(z: f64, params: &AlphaParams) -> f64 {
    bump_unchecked(z / params.r_alpha(), params.bump_h)
        * phi(z - params.d_alpha(), params.phi_a, params.phi_b)
}

/// `a_ij(q) = rho_h(||q_j - q_i||_sigma / r_alpha)`, zero at or beyond `r`.
pub fn adjacency(qi: Vec2, qj: Vec2, params: &AlphaParams) -> f64 {
    let dist = qi.distance(qj);
    if dist >= params.interaction_range {
        return 0.0;
    }
    bump_unchecked(
        sigma_norm_len(dist, params.sigma_eps) / params.r_alpha(),
        params.bump_h,
    )
}

/// Agents strictly within `range` of agent `i`, excluding `i`, ascending by id.
pub fn neighbors(i: AgentId, state: &WorldState, range: f64) -> Result<Vec<AgentId>, ControlError> {
    let me = state.agent(i).ok_or(ControlError::UnknownAgent(i))?;
    Ok(state
        .agents
        .iter()
        .filter(|a| a.id != i && me.position.distance(a.position) < range)
        .map(|a| a.id)
        .collect())
}

/// Gradient-based term alone: the pairwise force agent `j` exerts on `i`.
pub fn gradient_force(qi: Vec2, qj: Vec2, params: &AlphaParams) -> Vec2 {
    let dist = qi.distance(qj);
    if dist >= params.interaction_range {
        return Vec2::ZERO;
    }
    let z = sigma_norm_len(dist, params.sigma_eps);
    action_phi_alpha(z, params) * sigma_grad_unchecked(qi, qj, params.sigma_eps)
}

fn control_at(positions: &[Vec2], velocities: &[Vec2], k: usize, params: &AlphaParams) -> Vec2 {
    let (qi, vi) = (positions[k], velocities[k]);
    let mut u = Vec2::ZERO;
    for (j, (&qj, &vj)) in positions.iter().zip(velocities).enumerate() {
        if j == k || qi.distance(qj) >= params.interaction_range {
            continue;
        }
        u += gradient_force(qi, qj, params);
        u += adjacency(qi, qj, params) * (vj - vi);
    }
    u
}

/// Alpha-lattice control input for agent `i` on the given snapshot.
pub fn control_input(
    i: AgentId,
    state: &WorldState,
    params: &AlphaParams,
) -> Result<Vec2, ControlError> {
    params.validate()?;
    let k = state
        .agents
        .iter()
        .position(|a| a.id == i)
        .ok_or(ControlError::UnknownAgent(i))?;
    let positions: Vec<Vec2> = state.agents.iter().map(|a| a.position).collect();
    let velocities: Vec<Vec2> = state.agents.iter().map(|a| a.velocity).collect();
    Ok(control_at(&positions, &velocities, k, params))
}

/// Advances every agent through `substeps` double-integrator steps under the
/// alpha-lattice law and returns agent `i`'s resulting position as a target.
pub fn oracle_flocker_decide(
    i: AgentId,
    state: &WorldState,
    params: &AlphaParams,
    limits: &MotionLimits,
    substeps: u32,
    dt: f64,
) -> Result<Decision, ControlError> {
    params.validate()?;
    if substeps == 0 || !(dt > 0.0 && dt.is_finite()) {
        return Err(ParamError::Integration { substeps, dt }.into());
    }
    limits.validate()?;
    let start = state
        .agent(i)
        .ok_or(ControlError::UnknownAgent(i))?
        .position;

    let mut world = state.clone();
    // Round velocity is displacement per round and one round spans
    // substeps * dt time units.
    let round_time = substeps as f64 * dt;
    for a in world.agents.iter_mut() {
        a.velocity = if a.stationary {
            Vec2::ZERO
        } else {
            a.velocity / round_time
        };
    }
    let first_u = control_input(i, &world, params)?;
    let ids: Vec<AgentId> = world.ids().collect();
    for _ in 0..substeps {
        let positions = world.positions();
        let velocities: Vec<Vec2> = world.agents.iter().map(|a| a.velocity).collect();
        let accel: BTreeMap<AgentId, Vec2> = ids
            .iter()
            .enumerate()
            .map(|(k, &id)| (id, control_at(&positions, &velocities, k, params)))
            .collect();
        world = integrate_double(&world, &accel, dt)?;
    }
    let target = world.agent(i).map(|a| a.position).unwrap_or(start);
    let n = neighbors(i, state, params.interaction_range)?.len();
    let reasoning = format!(
        "alpha-lattice control with {n} neighbour(s) in range {:.2}; initial |u| = {:.4}; integrated {substeps} steps of dt {dt}",
        params.interaction_range,
        first_u.norm()
    );
    Ok(Decision::new(target, reasoning))
}

/// The classical controller as a round-based backend.
#[derive(Debug, Clone)]
pub struct OracleFlocker {
    pub params: AlphaParams,
    pub substeps: u32,
    pub dt: f64,
}

impl OracleFlocker {
    pub const DEFAULT_SUBSTEPS: u32 = 20;
    pub const DEFAULT_DT: f64 = 0.05;

    pub fn new(params: AlphaParams) -> Self {
        Self {
            params,
            substeps: Self::DEFAULT_SUBSTEPS,
            dt: Self::DEFAULT_DT,
        }
    }
}

impl DecisionMaker for OracleFlocker {
    fn decide(
        &mut self,
        id: AgentId,
        world: &WorldState,
        limits: &MotionLimits,
    ) -> Result<Decision, BackendError> {
        oracle_flocker_decide(id, world, &self.params, limits, self.substeps, self.dt)
            .map_err(|e| BackendError::Other(e.to_string()))
    }

    fn label(&self) -> String {
        "oracle".into()
    }
}
