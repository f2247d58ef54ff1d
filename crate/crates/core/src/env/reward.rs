//! Reward components.

use serde::{Deserialize, Serialize};

use super::monitor::MonitorVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub c_goal_progress: f64,
    pub c_v: f64,
    pub c_omega: f64,
    pub c_colregs: f64,
    pub c_goal: f64,
    pub c_zone: f64,
    /// Speed band without penalty, m/s.
    pub v_low: f64,
    pub v_high: f64,
    /// Goal reached within this distance, m.
    pub d_goal: f64,
    /// Protected zone radius, m. Zones intersect at `2 r_zone`.
    pub r_zone: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            c_goal_progress: 0.0005,
            c_v: -0.25,
            c_omega: -1.0,
            c_colregs: 3.0,
            c_goal: 3.0,
            c_zone: -3.0,
            v_low: 5.0,
            v_high: 10.0,
            d_goal: 250.0,
            r_zone: 450.0,
        }
    }
}

impl RewardWeights {
    /// Largest possible `|total|` of a single step.
    pub fn step_bound(&self, v_max: f64, omega_max: f64, v_min: f64, dt: f64) -> f64 {
        let velocity = (v_max - self.v_high).max(self.v_low - v_min).max(0.0);
        self.c_goal_progress.abs() * v_max * dt
            + self.c_v.abs() * velocity
            + self.c_omega.abs() * omega_max
            + self.c_colregs.abs()
            + self.c_goal.abs().max(self.c_zone.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub goal_progress: f64,
    pub velocity: f64,
    pub angular: f64,
    pub colregs: f64,
    pub zone: f64,
    pub goal: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(goal_progress: f64, velocity: f64, angular: f64, colregs: f64, zone: f64, goal: f64) -> Self {
        let total = goal_progress + velocity + angular + colregs + zone + goal;
        Self { goal_progress, velocity, angular, colregs, zone, goal, total }
    }

    pub fn add(&mut self, other: &RewardBreakdown) {
        self.goal_progress += other.goal_progress;
        self.velocity += other.velocity;
        self.angular += other.angular;
        self.colregs += other.colregs;
        self.zone += other.zone;
        self.goal += other.goal;
        self.total += other.total;
    }
}

pub fn reward_goal_progress(prev_dist: f64, cur_dist: f64, w: &RewardWeights) -> f64 {
    w.c_goal_progress * (prev_dist - cur_dist)
}

pub fn reward_velocity(v: f64, w: &RewardWeights) -> f64 {
    if v > w.v_high {
        w.c_v * (v - w.v_high)
    } else if v < w.v_low {
        w.c_v * (w.v_low - v)
    } else {
        0.0
    }
}

pub fn reward_angular(omega: f64, w: &RewardWeights) -> f64 {
    w.c_omega * omega.abs()
}

/// `c_colregs (1 - 1_vac) sgn(rho_out)`, zero without a due verdict.
pub fn reward_colregs(verdict: Option<&MonitorVerdict>, w: &RewardWeights) -> f64 {
    match verdict {
        Some(v) if !v.vacuous() => {
            if v.rho_out > 0.0 {
                w.c_colregs
            } else if v.rho_out < 0.0 {
                -w.c_colregs
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}
