//! Formation geometry, the nearest-neighbour MAE metric and episode outcome
//! classification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// MAE at or below this line counts as a formed flock.
pub const SUCCESS_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("need at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error("desired distance must be positive, got {0}")]
    BadDistance(f64),
    #[error("shape {shape} cannot hold {count} agents")]
    IncompatibleShape { shape: Shape, count: usize },
    #[error("unknown formation '{0}'")]
    UnknownShape(String),
    #[error("need a series covering at least {needed} rounds, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Circle,
    AlphaLattice,
    VShape,
    Line,
    Triangle,
    PairDistance,
}

impl Shape {
    pub const ALL: [Shape; 6] = [
        Shape::Circle,
        Shape::AlphaLattice,
        Shape::VShape,
        Shape::Line,
        Shape::Triangle,
        Shape::PairDistance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::AlphaLattice => "alpha-lattice",
            Shape::VShape => "v-shape",
            Shape::Line => "line",
            Shape::Triangle => "triangle",
            Shape::PairDistance => "pair-distance",
        }
    }

    /// Wording used when the shape is named to a language model.
    pub fn prompt_name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::AlphaLattice => "α-lattice",
            Shape::VShape => "V-shape",
            Shape::Line => "line",
            Shape::Triangle => "triangle",
            Shape::PairDistance => "pair keeping the desired distance",
        }
    }

    pub fn accepts(self, count: usize) -> bool {
        match self {
            Shape::Circle | Shape::VShape => count >= 3,
            Shape::Triangle => count == 3,
            Shape::PairDistance => count == 2,
            Shape::Line | Shape::AlphaLattice => count >= 2,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Shape {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.as_str() == s)
            .ok_or_else(|| MetricsError::UnknownShape(s.to_string()))
    }
}

fn default_half_angle() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    pub shape: Shape,
    pub desired_distance: f64,
    pub agent_count: usize,
    /// Half-opening of the V, in degrees.
    #[serde(default = "default_half_angle")]
    pub v_half_angle_deg: f64,
}

impl FormationSpec {
    pub fn new(
        shape: Shape,
        desired_distance: f64,
        agent_count: usize,
    ) -> Result<Self, MetricsError> {
        let spec = Self {
            shape,
            desired_distance,
            agent_count,
            v_half_angle_deg: default_half_angle(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.desired_distance.is_finite() && self.desired_distance > 0.0) {
            return Err(MetricsError::BadDistance(self.desired_distance));
        }
        if self.agent_count < 2 {
            return Err(MetricsError::TooFewAgents(self.agent_count));
        }
        if !self.shape.accepts(self.agent_count) {
            return Err(MetricsError::IncompatibleShape {
                shape: self.shape,
                count: self.agent_count,
            });
        }
        Ok(())
    }
}

/// Distance from each point to its closest other point (ties by lowest index).
pub fn nearest_distances(positions: &[Vec2]) -> Vec<f64> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| p.distance(*q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Mean over agents of `| ||p_i - p_j|| - desired |` where `j` is `i`'s nearest agent.
pub fn mae(positions: &[Vec2], desired_distance: f64) -> Result<f64, MetricsError> {
    if positions.len() < 2 {
        return Err(MetricsError::TooFewAgents(positions.len()));
    }
    if !(desired_distance.is_finite() && desired_distance > 0.0) {
        return Err(MetricsError::BadDistance(desired_distance));
    }
    let total: f64 = nearest_distances(positions)
        .into_iter()
        .map(|d| (d - desired_distance).abs())
        .sum();
    Ok(total / positions.len() as f64)
}

/// Circumradius of a regular `n`-gon with side `d`.
pub fn circle_radius(agent_count: usize, desired_distance: f64) -> Result<f64, MetricsError> {
    if agent_count < 3 {
        return Err(MetricsError::IncompatibleShape {
            shape: Shape::Circle,
            count: agent_count,
        });
    }
    if !(desired_distance.is_finite() && desired_distance > 0.0) {
        return Err(MetricsError::BadDistance(desired_distance));
    }
    Ok(desired_distance / (2.0 * sin_pi_over(agent_count as f64)))
}

/// `sin(pi / n)` with the rounding error of `pi / n` folded back in, so that
/// e.g. `n = 6` yields exactly one half.
fn sin_pi_over(n: f64) -> f64 {
    use std::f64::consts::PI;
    const PI_LO: f64 = 1.2246467991473532e-16;
    let hi = PI / n;
    let lo = ((-hi).mul_add(n, PI) + PI_LO) / n;
    hi.sin() + hi.cos() * lo
}

/// Ideal placement of `spec.agent_count` agents in the requested formation.
pub fn target_positions(spec: &FormationSpec, anchor: Vec2) -> Result<Vec<Vec2>, MetricsError> {
    spec.validate()?;
    let n = spec.agent_count;
    let d = spec.desired_distance;
    let points = match spec.shape {
        Shape::Circle => {
            let radius = circle_radius(n, d)?;
            (0..n)
                .map(|k| {
                    let theta = std::f64::consts::TAU * k as f64 / n as f64;
                    anchor + Vec2::new(radius * theta.cos(), radius * theta.sin())
                })
                .collect()
        }
        Shape::Triangle => {
            let radius = d / 3f64.sqrt();
            (0..3)
                .map(|k| {
                    let theta =
                        std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * k as f64 / 3.0;
                    anchor + Vec2::new(radius * theta.cos(), radius * theta.sin())
                })
                .collect()
        }
        Shape::Line | Shape::PairDistance => {
            let offset = (n - 1) as f64 * d / 2.0;
            (0..n)
                .map(|k| anchor + Vec2::new(k as f64 * d - offset, 0.0))
                .collect()
        }
        Shape::VShape => {
            // Apex leads toward +x; arms trail back at +/- half-angle.
            let half = spec.v_half_angle_deg.to_radians();
            let back = Vec2::new(-d, 0.0);
            let upper = back.rotated(-half);
            let lower = back.rotated(half);
            std::iter::once(anchor)
                .chain((1..n).map(|k| {
                    let rank = k.div_ceil(2) as f64;
                    let arm = if k % 2 == 1 { upper } else { lower };
                    anchor + arm * rank
                }))
                .collect()
        }
        Shape::AlphaLattice => lattice_patch(n, d, anchor),
    };
    Ok(points)
}

/// First `n` triangular-lattice sites ordered by distance from the anchor,
/// then by angle.
fn lattice_patch(n: usize, d: f64, anchor: Vec2) -> Vec<Vec2> {
    let reach = (n as f64).sqrt().ceil() as i64 + 1;
    let row = Vec2::new(d / 2.0, d * 3f64.sqrt() / 2.0);
    let mut sites: Vec<(i64, i64, Vec2)> = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            sites.push((i, j, Vec2::new(i as f64 * d, 0.0) + row * j as f64));
        }
    }
    // Integer key (i^2 + ij + j^2) is the exact squared lattice distance / d^2.
    sites.sort_by(|a, b| {
        let ka = a.0 * a.0 + a.0 * a.1 + a.1 * a.1;
        let kb = b.0 * b.0 + b.0 * b.1 + b.1 * b.1;
        ka.cmp(&kb).then_with(|| {
            let ta = a.2.y.atan2(a.2.x);
            let tb = b.2.y.atan2(b.2.x);
            ta.total_cmp(&tb)
        })
    });
    sites
        .into_iter()
        .take(n)
        .map(|(_, _, p)| anchor + p)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub mae: f64,
    pub min_dist: f64,
    pub max_dist: f64,
    pub centroid: Vec2,
    /// RMS distance to the centroid.
    pub spread: f64,
}

impl RoundMetrics {
    pub fn compute(
        round: u32,
        positions: &[Vec2],
        desired_distance: f64,
    ) -> Result<Self, MetricsError> {
        let mae = mae(positions, desired_distance)?;
        let mut min_dist = f64::INFINITY;
        let mut max_dist: f64 = 0.0;
        for (i, p) in positions.iter().enumerate() {
            for q in &positions[i + 1..] {
                let dist = p.distance(*q);
                min_dist = min_dist.min(dist);
                max_dist = max_dist.max(dist);
            }
        }
        let centroid = Vec2::centroid(positions).unwrap_or_default();
        let spread = (positions
            .iter()
            .map(|p| (*p - centroid).norm_squared())
            .sum::<f64>()
            / positions.len() as f64)
            .sqrt();
        Ok(Self {
            round,
            mae,
            min_dist,
            max_dist,
            centroid,
            spread,
        })
    }
}

/// Per-round metrics of one episode, round 0 included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub rounds: Vec<RoundMetrics>,
    /// Positions per round, needed for oscillation detection.
    #[serde(skip)]
    pub positions: Vec<Vec<Vec2>>,
}

impl MetricSeries {
    pub fn from_trajectory(
        trajectory: &[Vec<Vec2>],
        desired_distance: f64,
    ) -> Result<Self, MetricsError> {
        let rounds = trajectory
            .iter()
            .enumerate()
            .map(|(t, p)| RoundMetrics::compute(t as u32, p, desired_distance))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            rounds,
            positions: trajectory.to_vec(),
        })
    }

    pub fn final_mae(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.mae)
    }

    pub fn to_csv(&self) -> String {
        use crate::geometry::fmt_min2;
        let mut out = String::from("round,mae,min_dist,max_dist,spread\n");
        for r in &self.rounds {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.round,
                fmt_min2(r.mae),
                fmt_min2(r.min_dist),
                fmt_min2(r.max_dist),
                fmt_min2(r.spread)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Flocked,
    Collapsed,
    Diverged,
    Oscillating,
    Inconclusive,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::Flocked,
        Outcome::Collapsed,
        Outcome::Diverged,
        Outcome::Oscillating,
        Outcome::Inconclusive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Flocked => "flocked",
            Outcome::Collapsed => "collapsed",
            Outcome::Diverged => "diverged",
            Outcome::Oscillating => "oscillating",
            Outcome::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub label: Outcome,
    pub evidence: String,
}

/// Harness conventions separating the behavioural archetypes. Only the
/// success margin comes from the reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeThresholds {
    pub success_margin: f64,
    pub success_rounds: usize,
    pub collapse_max_dist_frac: f64,
    pub collapse_spread_drop: f64,
    pub diverge_min_dist_mult: f64,
    pub diverge_max_dist_growth: f64,
    pub oscillation_window: usize,
    pub oscillation_flips: usize,
}

impl Default for OutcomeThresholds {
    fn default() -> Self {
        Self {
            success_margin: SUCCESS_MARGIN,
            success_rounds: 3,
            collapse_max_dist_frac: 0.5,
            collapse_spread_drop: 0.8,
            diverge_min_dist_mult: 2.0,
            diverge_max_dist_growth: 0.5,
            oscillation_window: 6,
            oscillation_flips: 3,
        }
    }
}

/// Minimum number of rounds (beyond round 0) a series must cover.
pub const MIN_CLASSIFY_ROUNDS: usize = 5;

pub fn classify_outcome(
    series: &MetricSeries,
    spec: &FormationSpec,
) -> Result<OutcomeLabel, MetricsError> {
    classify_with(series, spec, &OutcomeThresholds::default())
}

pub fn classify_with(
    series: &MetricSeries,
    spec: &FormationSpec,
    th: &OutcomeThresholds,
) -> Result<OutcomeLabel, MetricsError> {
    let covered = series.rounds.len().saturating_sub(1);
    if covered < MIN_CLASSIFY_ROUNDS {
        return Err(MetricsError::SeriesTooShort {
            needed: MIN_CLASSIFY_ROUNDS,
            got: covered,
        });
    }
    let d = spec.desired_distance;
    let first = &series.rounds[0];
    let last = series.rounds.last().expect("non-empty");

    let tail = &series.rounds[series.rounds.len() - th.success_rounds.min(series.rounds.len())..];
    if tail.iter().all(|r| r.mae <= th.success_margin) {
        return Ok(OutcomeLabel {
            label: Outcome::Flocked,
            evidence: format!(
                "MAE <= {} for the final {} rounds (final {:.4})",
                th.success_margin,
                tail.len(),
                last.mae
            ),
        });
    }

    let spread_drop = if first.spread > 0.0 {
        1.0 - last.spread / first.spread
    } else {
        0.0
    };
    if last.max_dist < th.collapse_max_dist_frac * d && spread_drop >= th.collapse_spread_drop {
        return Ok(OutcomeLabel {
            label: Outcome::Collapsed,
            evidence: format!(
                "final max pairwise distance {:.4} < {:.4}; spread fell {:.1}% ({:.4} -> {:.4})",
                last.max_dist,
                th.collapse_max_dist_frac * d,
                100.0 * spread_drop,
                first.spread,
                last.spread
            ),
        });
    }

    let growth = if first.max_dist > 0.0 {
        last.max_dist / first.max_dist - 1.0
    } else {
        f64::INFINITY
    };
    if last.min_dist > th.diverge_min_dist_mult * d && growth >= th.diverge_max_dist_growth {
        return Ok(OutcomeLabel {
            label: Outcome::Diverged,
            evidence: format!(
                "final min pairwise distance {:.4} > {:.4}; max pairwise distance grew {:.1}%",
                last.min_dist,
                th.diverge_min_dist_mult * d,
                100.0 * growth
            ),
        });
    }

    if let Some(evidence) = oscillation(series, d, th) {
        return Ok(OutcomeLabel {
            label: Outcome::Oscillating,
            evidence,
        });
    }

    Ok(OutcomeLabel {
        label: Outcome::Inconclusive,
        evidence: format!(
            "final MAE {:.4}, min {:.4}, max {:.4}, spread {:.4}",
            last.mae, last.min_dist, last.max_dist, last.spread
        ),
    })
}

fn oscillation(series: &MetricSeries, d: f64, th: &OutcomeThresholds) -> Option<String> {
    let window = th.oscillation_window.min(series.positions.len());
    if window < 2 {
        return None;
    }
    let frames = &series.positions[series.positions.len() - window..];
    let agents = frames[0].len();
    for agent in 0..agents {
        for (axis, name) in [(0, "x"), (1, "y")] {
            let values: Vec<f64> = frames
                .iter()
                .map(|frame| {
                    let rel = frame[agent] - Vec2::centroid(frame).unwrap_or_default();
                    if axis == 0 {
                        rel.x
                    } else {
                        rel.y
                    }
                })
                .collect();
            let flips = values.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if flips >= th.oscillation_flips && hi - lo > d {
                return Some(format!(
                    "agent {agent} {name} flips sign {flips} times in the last {window} rounds, amplitude {:.4}",
                    hi - lo
                ));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_pair_mae() {
        let p = [Vec2::new(17.04, 15.4), Vec2::new(-16.96, 15.4)];
        assert_eq!(mae(&p, 10.0).unwrap(), 24.0);
    }

    #[test]
    fn mae_errors() {
        assert_eq!(mae(&[Vec2::ZERO], 1.0), Err(MetricsError::TooFewAgents(1)));
        assert!(mae(&[Vec2::ZERO, Vec2::ZERO], 0.0).is_err());
    }

    #[test]
    fn equilateral_triangle_has_zero_mae() {
        let spec = FormationSpec::new(Shape::Triangle, 5.0, 3).unwrap();
        let pts = target_positions(&spec, Vec2::new(1.0, -2.0)).unwrap();
        assert!(mae(&pts, 5.0).unwrap() < 1e-12);
        for i in 0..3 {
            for j in i + 1..3 {
                assert!((pts[i].distance(pts[j]) - 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radii() {
        assert_eq!(circle_radius(6, 1.0).unwrap(), 1.0);
        assert!((circle_radius(5, 5.0).unwrap() - 4.2532540417602).abs() < 1e-12);
        assert!((circle_radius(3, 5.0).unwrap() - 2.886751345948129).abs() < 1e-12);
        assert!(circle_radius(2, 5.0).is_err());
    }

    #[test]
    fn shape_compatibility() {
        assert!(FormationSpec::new(Shape::Triangle, 5.0, 4).is_err());
        assert!(FormationSpec::new(Shape::PairDistance, 5.0, 3).is_err());
        assert!(FormationSpec::new(Shape::VShape, 5.0, 2).is_err());
        assert!(FormationSpec::new(Shape::Circle, 5.0, 1).is_err());
        assert!("hexagon".parse::<Shape>().is_err());
        assert_eq!("v-shape".parse::<Shape>().unwrap(), Shape::VShape);
    }

    #[test]
    fn pair_distance_targets() {
        let spec = FormationSpec::new(Shape::PairDistance, 10.0, 2).unwrap();
        let pts = target_positions(&spec, Vec2::ZERO).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].distance(pts[1]), 10.0);
    }

    fn series_of(frames: Vec<Vec<Vec2>>, d: f64) -> MetricSeries {
        MetricSeries::from_trajectory(&frames, d).unwrap()
    }

    #[test]
    fn classification_requires_five_rounds() {
        let spec = FormationSpec::new(Shape::PairDistance, 10.0, 2).unwrap();
        let frames = vec![vec![Vec2::ZERO, Vec2::new(1.0, 0.0)]; 5];
        assert!(matches!(
            classify_outcome(&series_of(frames, 10.0), &spec),
            Err(MetricsError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn classifies_archetypes() {
        let spec = FormationSpec::new(Shape::PairDistance, 10.0, 2).unwrap();
        let flocked = vec![vec![Vec2::ZERO, Vec2::new(10.0, 0.0)]; 8];
        assert_eq!(
            classify_outcome(&series_of(flocked, 10.0), &spec)
                .unwrap()
                .label,
            Outcome::Flocked
        );

        let collapsed: Vec<_> = (0..8)
            .map(|t| {
                let s = 20.0 * 0.3f64.powi(t);
                vec![Vec2::new(-s, 0.0), Vec2::new(s, 0.0)]
            })
            .collect();
        assert_eq!(
            classify_outcome(&series_of(collapsed, 10.0), &spec)
                .unwrap()
                .label,
            Outcome::Collapsed
        );

        let diverged: Vec<_> = (0..8)
            .map(|t| {
                let s = 5.0 + 5.0 * t as f64;
                vec![Vec2::new(-s, 0.0), Vec2::new(s, 0.0)]
            })
            .collect();
        assert_eq!(
            classify_outcome(&series_of(diverged, 10.0), &spec)
                .unwrap()
                .label,
            Outcome::Diverged
        );

        let swapping: Vec<_> = (0..8)
            .map(|t| {
                let s = if t % 2 == 0 { 8.0 } else { -8.0 };
                vec![Vec2::new(-s, 0.0), Vec2::new(s, 0.0)]
            })
            .collect();
        assert_eq!(
            classify_outcome(&series_of(swapping, 10.0), &spec)
                .unwrap()
                .label,
            Outcome::Oscillating
        );

        let idle = vec![vec![Vec2::ZERO, Vec2::new(6.0, 0.0)]; 8];
        assert_eq!(
            classify_outcome(&series_of(idle, 10.0), &spec)
                .unwrap()
                .label,
            Outcome::Inconclusive
        );
    }

    #[test]
    fn metrics_csv_header() {
        let s = series_of(vec![vec![Vec2::ZERO, Vec2::new(3.0, 4.0)]], 5.0);
        assert_eq!(
            s.to_csv(),
            "round,mae,min_dist,max_dist,spread\n0,0.00,5.00,5.00,2.50\n"
        );
    }
}
