//! Ego policies: the trait the environment drives, plus scripted baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::Observation;
use crate::dynamics::{heading_tracker, speed_tracker, step, wrap_angle, ControlInput, VesselLimits, VesselState};
use crate::rules::{velocity_obstacle_margin, RuleParameters};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("policy failed: {0}")]
pub struct PolicyError(pub String);

/// Ground-truth state handed to policies next to the observation. Learned
/// policies only read the observation; scripted ones steer with this.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub step: usize,
    pub ego: &'a VesselState,
    pub adversary: &'a VesselState,
    pub goal: [f64; 2],
    pub dt: f64,
    pub limits: &'a VesselLimits,
    pub rules: &'a RuleParameters,
    /// Encounter predicates at this step.
    pub active: [bool; 3],
    /// Latched ego reference heading.
    pub latch: Option<f64>,
}

impl StepContext<'_> {
    /// Heading toward the goal, unwrapped to lie within pi of the ego heading.
    pub fn goal_heading(&self) -> f64 {
        let bearing = (self.goal[1] - self.ego.py).atan2(self.goal[0] - self.ego.px);
        self.ego.theta + wrap_angle(bearing - self.ego.theta)
    }
}

pub trait Policy: Send + Sync {
    fn act(&mut self, obs: &Observation, ctx: &StepContext<'_>) -> Result<ControlInput, PolicyError>;

    /// Clears per-episode state.
    fn reset(&mut self) {}

    fn clone_box(&self) -> Box<dyn Policy>;

    fn name(&self) -> &str;
}

impl Clone for Box<dyn Policy> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedKind {
    StraightToGoal,
    Random,
    GiveWayReference,
}

impl ScriptedKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "straight_to_goal" => Some(Self::StraightToGoal),
            "random" => Some(Self::Random),
            "give_way_reference" => Some(Self::GiveWayReference),
            _ => None,
        }
    }
}

pub fn scripted_policy(kind: ScriptedKind, seed: u64) -> Box<dyn Policy> {
    match kind {
        ScriptedKind::StraightToGoal => Box::new(StraightToGoal::default()),
        ScriptedKind::Random => Box::new(RandomPolicy::new(seed)),
        ScriptedKind::GiveWayReference => Box::new(GiveWayReference::default()),
    }
}

/// Mid-band cruise speed of the scripted policies, m/s.
pub const CRUISE_SPEED: f64 = 7.5;

fn steer(ctx: &StepContext<'_>, heading: f64) -> ControlInput {
    steer_at(ctx, heading, CRUISE_SPEED)
}

fn steer_at(ctx: &StepContext<'_>, heading: f64, speed: f64) -> ControlInput {
    let alpha = heading_tracker(ctx.ego, heading, ctx.limits, ctx.dt);
    let a = speed_tracker(ctx.ego, speed, ctx.limits, ctx.dt);
    ControlInput::new(a, alpha, ctx.limits)
}

/// Heads for the goal at cruise speed and ignores the other vessel.
#[derive(Debug, Clone, Default)]
pub struct StraightToGoal;

impl Policy for StraightToGoal {
    fn act(&mut self, _obs: &Observation, ctx: &StepContext<'_>) -> Result<ControlInput, PolicyError> {
        Ok(steer(ctx, ctx.goal_heading()))
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "straight_to_goal"
    }
}

/// Uniform inputs over the admissible box.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _obs: &Observation, ctx: &StepContext<'_>) -> Result<ControlInput, PolicyError> {
        let a = self.rng.random_range(-1.0..=1.0);
        let alpha = self.rng.random_range(-1.0..=1.0);
        Ok(ControlInput::from_normalized(a, alpha, ctx.limits))
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "random"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Maneuver {
    Cruise,
    /// Steering the planned starboard escape off the reference heading
    /// `base`; the rules want the cone left by step `deadline`.
    Avoid { base: f64, deadline: usize, heading: f64, speed: f64 },
    /// Keeping the escape course until the encounter and its latch clear.
    Hold { base: f64, deadline: usize, heading: f64, speed: f64 },
}

/// Heads for the goal at a gentle turn rate, and gives way on every
/// encounter.
///
/// It starts giving way as soon as an encounter becomes active, without
/// waiting for the persistence window, because the rules want the collision
/// cone left within `2 t_m` of confirmation. It turns to starboard by at
/// least `1.5 delta` and at most 150 degrees off the heading of the step
/// before the encounter (the one a latch would hold), picking the smallest
/// turn (and, if needed, a speed change) whose simulated course leaves the
/// cone in time. Once the cone is clear it holds course until the latch
/// clears, which happens after `t_m` quiet seconds. Heading back to the goal
/// afterwards it steers the heading nearest the goal that stays clear of the
/// other vessel.
#[derive(Debug, Clone)]
pub struct GiveWayReference {
    mode: Maneuver,
    /// It gave way this episode; cruising now avoids the cone.
    gave_way: bool,
}

impl Default for GiveWayReference {
    fn default() -> Self {
        Self { mode: Maneuver::Cruise, gave_way: false }
    }
}

const MAX_TURN: f64 = 5.0 * std::f64::consts::PI / 6.0;
/// Required clearance of a planned escape, in robustness seconds.
const ESCAPE_MARGIN: f64 = 20.0;
/// Cone radius over the zone-termination distance `2 r_zone`.
const CONE_FACTOR: f64 = 2.4;
/// Closest approach a planned escape must keep, in units of `r_zone`.
const ZONE_CLEARANCE: f64 = 2.3;
const ROLLOUT_STEPS: usize = 30;
/// Margin by which the rule-sized cone must be left before the deadline.
const DEADLINE_MARGIN: f64 = 5.0;

struct Rollout {
    closest: f64,
    end_margin: f64,
    /// Smallest rule-cone margin up to the deadline.
    by_deadline: f64,
}

impl GiveWayReference {
    // The cone is sized to the termination distance, which also clears the
    // smaller cone the rules check.
    fn margin(ctx: &StepContext<'_>, ego: &VesselState) -> f64 {
        velocity_obstacle_margin(ego, ctx.adversary, CONE_FACTOR * ctx.rules.r_zone, ctx.rules.t_h, ctx.limits)
    }

    /// Heading closest to the goal whose simulated cruise keeps out of the
    /// zone, starboard first on ties; otherwise the widest passing one.
    fn cruise_heading(ctx: &StepContext<'_>) -> f64 {
        let goal = ctx.goal_heading();
        let mut widest = (goal, f64::NEG_INFINITY);
        for i in 0..=36 {
            let off = f64::from(i) * 5f64.to_radians();
            for h in [goal - off, goal + off] {
                let closest = Self::rollout(ctx, h, CRUISE_SPEED, ctx.step).closest;
                if closest > ZONE_CLEARANCE * ctx.rules.r_zone {
                    return h;
                }
                if closest > widest.1 {
                    widest = (h, closest);
                }
            }
        }
        widest.0
    }

    /// Smallest admissible starboard turn, and speed, whose simulated
    /// course keeps out of the zone, leaves the rule cone by `deadline` and
    /// ends clear of the wide cone. Without one the deadline is dropped, and
    /// failing that the candidate with the widest passing distance is used.
    fn plan(ctx: &StepContext<'_>, base: f64, deadline: usize) -> (f64, f64) {
        let min_turn = 1.5 * ctx.rules.delta;
        let speeds = [CRUISE_SPEED, ctx.limits.v_min, ctx.limits.v_max];
        let mut candidates = Vec::with_capacity(75);
        for i in 0..=24 {
            let turn = min_turn + (MAX_TURN - min_turn) * f64::from(i) / 24.0;
            for &speed in &speeds {
                candidates.push((base - turn, speed, Self::rollout(ctx, base - turn, speed, deadline)));
            }
        }
        let clear = |r: &Rollout| r.closest > ZONE_CLEARANCE * ctx.rules.r_zone && r.end_margin < -ESCAPE_MARGIN;
        let pick = candidates
            .iter()
            .find(|(_, _, r)| clear(r) && r.by_deadline < -DEADLINE_MARGIN)
            .or_else(|| candidates.iter().find(|(_, _, r)| clear(r)))
            .or_else(|| candidates.iter().max_by(|a, b| a.2.closest.total_cmp(&b.2.closest)));
        pick.map_or((base - min_turn, CRUISE_SPEED), |&(h, v, _)| (h, v))
    }

    /// Steers `heading` at `speed` against a course-keeping adversary.
    fn rollout(ctx: &StepContext<'_>, heading: f64, speed: f64, deadline: usize) -> Rollout {
        let (limits, dt, rules) = (ctx.limits, ctx.dt, ctx.rules);
        let mut ego = *ctx.ego;
        let mut adv = *ctx.adversary;
        let hold = ControlInput::new(0.0, -adv.omega / dt, limits);
        let mut closest = ego.distance_to(&adv);
        let rule_margin = |e: &VesselState, a: &VesselState| velocity_obstacle_margin(e, a, rules.r_zone, rules.t_h, limits);
        let mut by_deadline = rule_margin(&ego, &adv);
        for j in 1..=ROLLOUT_STEPS {
            let u = ControlInput::new(
                speed_tracker(&ego, speed, limits, dt),
                heading_tracker(&ego, heading, limits, dt),
                limits,
            );
            ego = step(&ego, &u, dt, limits);
            adv = step(&adv, &hold, dt, limits);
            closest = closest.min(ego.distance_to(&adv));
            if ctx.step + j <= deadline {
                by_deadline = by_deadline.min(rule_margin(&ego, &adv));
            }
        }
        let end = StepContext { ego: &ego, adversary: &adv, ..*ctx };
        Rollout { closest, end_margin: Self::margin(&end, &ego), by_deadline }
    }
}

impl Policy for GiveWayReference {
    fn act(&mut self, _obs: &Observation, ctx: &StepContext<'_>) -> Result<ControlInput, PolicyError> {
        let delta = ctx.rules.delta;
        let encounter = ctx.active.iter().any(|&b| b);
        let blocked = Self::margin(ctx, ctx.ego) > 0.0;
        let min_turn = 1.5 * delta;
        let window = 2 * ctx.rules.maneuver_steps(ctx.dt).map_err(|e| PolicyError(e.to_string()))?;
        let avoid = |base: f64, deadline: usize| {
            let (heading, speed) = Self::plan(ctx, base, deadline);
            Maneuver::Avoid { base, deadline, heading, speed }
        };
        let persistence = ctx.rules.persistence_steps(ctx.dt).map_err(|e| PolicyError(e.to_string()))?;
        self.mode = match (self.mode, ctx.latch) {
            // first active step; a latch confirmed later holds the heading of the step before
            (Maneuver::Cruise, None) if encounter => avoid(ctx.ego.theta, ctx.step + persistence - 1 + window),
            (Maneuver::Cruise, None) => Maneuver::Cruise,
            (Maneuver::Cruise, Some(base)) => avoid(base, ctx.step + window),
            (Maneuver::Avoid { .. } | Maneuver::Hold { .. }, None) if !encounter && !blocked => Maneuver::Cruise,
            (Maneuver::Avoid { base, deadline, heading, speed }, latch) => {
                let base = latch.unwrap_or(base);
                if !blocked && ctx.ego.theta <= base - min_turn + 0.1 * delta {
                    Maneuver::Hold { base, deadline, heading: ctx.ego.theta.min(heading.max(base - MAX_TURN)), speed }
                } else {
                    avoid(base, deadline)
                }
            }
            (Maneuver::Hold { base, deadline, .. }, latch) if blocked => avoid(latch.unwrap_or(base), deadline),
            (hold @ Maneuver::Hold { .. }, _) => hold,
        };
        self.gave_way |= ctx.latch.is_some() || matches!(self.mode, Maneuver::Avoid { .. });
        let (heading, speed) = match self.mode {
            // a gentle turn rate keeps the course steady if a new encounter starts
            Maneuver::Cruise => {
                let target = if self.gave_way { Self::cruise_heading(ctx) } else { ctx.goal_heading() };
                (ctx.ego.theta + (target - ctx.ego.theta).clamp(-0.5 * delta, 0.5 * delta), CRUISE_SPEED)
            }
            Maneuver::Avoid { heading, speed, .. } | Maneuver::Hold { heading, speed, .. } => (heading, speed),
        };
        Ok(steer_at(ctx, heading, speed))
    }

    fn reset(&mut self) {
        *self = Self::default();
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "give_way_reference"
    }
}
