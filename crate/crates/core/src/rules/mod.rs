//! Give-way traffic rules for two-vessel encounters.
//!
//! [`measures`] holds the six atomic robustness functions, all scaled to
//! seconds. [`spec`] turns them into named atoms and builds the encounter,
//! maneuver and full give-way formulas. [`classify`] labels a joint signal
//! step by step and latches the maneuver reference heading.

pub mod classify;
pub mod measures;
pub mod spec;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{apply_latches, classify_encounters, EncounterLabels, EncounterTracker};
pub use measures::{
    h_change_course, h_drives_faster, h_orientation_halfplane, h_position_halfplane,
    h_time_horizon, h_velocity_halfplane, tangent_angle, velocity_obstacle_margin, ManeuverReference,
};
pub use spec::{
    build_colregs_spec, build_combined_spec, build_encounter_predicate, build_maneuver_predicate,
    build_persistent_encounter, colregs_registry, ColregsSpec, RuleContext, Verdict,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("invalid rule parameters: {0}")]
    InvalidParameters(String),
    #[error("maneuver reference is not latched")]
    Unlatched,
    #[error("vessel positions coincide")]
    CoincidentPositions,
    #[error(transparent)]
    Stl(#[from] crate::stl::StlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncounterType {
    Crossing,
    HeadOn,
    Overtake,
}

impl EncounterType {
    pub const ALL: [EncounterType; 3] = [EncounterType::Crossing, EncounterType::HeadOn, EncounterType::Overtake];

    pub fn name(&self) -> &'static str {
        match self {
            EncounterType::Crossing => "crossing",
            EncounterType::HeadOn => "head_on",
            EncounterType::Overtake => "overtake",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            EncounterType::Crossing => 0,
            EncounterType::HeadOn => 1,
            EncounterType::Overtake => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for EncounterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position sector `[beta_lo, beta_hi]` and relative-orientation sector
/// `[gamma_lo, gamma_hi]`, radians relative to the ego heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorBounds {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl SectorBounds {
    pub fn from_degrees(beta_lo: f64, beta_hi: f64, gamma_lo: f64, gamma_hi: f64) -> Self {
        Self {
            beta_lo: beta_lo.to_radians(),
            beta_hi: beta_hi.to_radians(),
            gamma_lo: gamma_lo.to_radians(),
            gamma_hi: gamma_hi.to_radians(),
        }
    }

    fn validate(&self, what: &str) -> Result<(), RuleError> {
        let widths = [("beta", self.beta_hi - self.beta_lo), ("gamma", self.gamma_hi - self.gamma_lo)];
        for (name, w) in widths {
            // the half-plane pair only carves out the sector for widths up to pi
            if !(w > 0.0 && w <= PI + 1e-12) {
                return Err(RuleError::InvalidParameters(format!(
                    "{what} {name} sector width {w} rad must lie in (0, pi]"
                )));
            }
        }
        Ok(())
    }
}

/// Timing, distance and sector parameters of the give-way rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleParameters {
    /// Persistence time of an encounter, seconds.
    pub t_p: f64,
    /// Maneuver time, seconds.
    pub t_m: f64,
    /// Collision look-ahead horizon, seconds.
    pub t_h: f64,
    /// Protected zone radius, meters.
    pub r_zone: f64,
    /// Required course change, radians.
    pub delta: f64,
    pub crossing: SectorBounds,
    pub head_on: SectorBounds,
    pub overtake: SectorBounds,
}

impl Default for RuleParameters {
    fn default() -> Self {
        Self {
            t_p: 50.0,
            t_m: 70.0,
            t_h: 420.0,
            r_zone: 450.0,
            delta: 20f64.to_radians(),
            crossing: SectorBounds::from_degrees(-112.5, -10.0, 45.0, 180.0),
            head_on: SectorBounds::from_degrees(-10.0, 10.0, 170.0, 190.0),
            overtake: SectorBounds::from_degrees(-45.0, 45.0, -67.5, 67.5),
        }
    }
}

fn steps_of(seconds: f64, dt: f64, name: &str) -> Result<usize, RuleError> {
    let ratio = seconds / dt;
    if !(seconds > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
        return Err(RuleError::InvalidParameters(format!(
            "{name} = {seconds} s must be a positive multiple of dt = {dt} s"
        )));
    }
    Ok(ratio.round() as usize)
}

impl RuleParameters {
    pub fn sectors(&self, t: EncounterType) -> &SectorBounds {
        match t {
            EncounterType::Crossing => &self.crossing,
            EncounterType::HeadOn => &self.head_on,
            EncounterType::Overtake => &self.overtake,
        }
    }

    pub fn validate(&self, dt: f64) -> Result<(), RuleError> {
        steps_of(self.t_p, dt, "t_p")?;
        steps_of(self.t_m, dt, "t_m")?;
        steps_of(self.t_h, dt, "t_h")?;
        if !(self.r_zone > 0.0) || !(self.delta > 0.0) {
            return Err(RuleError::InvalidParameters("r_zone and delta must be positive".into()));
        }
        for t in EncounterType::ALL {
            self.sectors(t).validate(t.name())?;
        }
        Ok(())
    }

    /// Persistence window `t_p / dt` in steps.
    pub fn persistence_steps(&self, dt: f64) -> Result<usize, RuleError> {
        steps_of(self.t_p, dt, "t_p")
    }

    /// Maneuver window `t_m / dt` in steps.
    pub fn maneuver_steps(&self, dt: f64) -> Result<usize, RuleError> {
        steps_of(self.t_m, dt, "t_m")
    }

    /// Evaluation delay `(t_p + 2 t_m) / dt` in steps.
    pub fn delay_steps(&self, dt: f64) -> Result<usize, RuleError> {
        Ok(self.persistence_steps(dt)? + 2 * self.maneuver_steps(dt)?)
    }
}
