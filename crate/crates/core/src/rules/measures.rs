//! Atomic robustness measures, all expressed in seconds.
//!
//! Distances are divided by a velocity bound and velocities by an
//! acceleration bound, so every value approximates the time needed to flip
//! the predicate under worst-case control.

use std::f64::consts::FRAC_PI_2;

use super::RuleError;
use crate::dynamics::{relative_velocity, VesselLimits, VesselState};

/// Heading latched when a persistent encounter is detected.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ManeuverReference {
    pub theta_ref: f64,
    pub valid: bool,
}

impl ManeuverReference {
    pub fn latched(theta_ref: f64) -> Self {
        Self { theta_ref, valid: true }
    }

    pub fn from_option(theta_ref: Option<f64>) -> Self {
        theta_ref.map_or_else(Self::default, Self::latched)
    }
}

fn rotate(angle: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Signed distance of the adversary from the line through the ego oriented
/// at `theta_E + beta`, positive on the left, over `v_max`.
pub fn h_position_halfplane(ego: &VesselState, adv: &VesselState, beta: f64, limits: &VesselLimits) -> f64 {
    let phi = ego.theta + beta;
    dot([-phi.sin(), phi.cos()], ego.offset_to(adv)) / limits.v_max
}

/// Minimal signed angle between the adversary heading and `theta_E + gamma`
/// (or its opposite), over `omega_max`.
pub fn h_orientation_halfplane(
    ego: &VesselState,
    adv: &VesselState,
    gamma: f64,
    limits: &VesselLimits,
) -> f64 {
    (adv.theta - (ego.theta + gamma)).sin().asin() / limits.omega_max
}

/// Course change margin `(theta_ref + delta_signed - theta_E) / alpha_max`.
/// Pass `-delta` to require a starboard turn of at least `delta`.
pub fn h_change_course(
    ego: &VesselState,
    reference: &ManeuverReference,
    delta_signed: f64,
    limits: &VesselLimits,
) -> Result<f64, RuleError> {
    if !reference.valid {
        return Err(RuleError::Unlatched);
    }
    Ok((reference.theta_ref + delta_signed - ego.theta) / limits.alpha_max)
}

/// Half-angle of the collision cone, `asin(2 r_zone / d)`.
///
/// When the zones already overlap (`d <= 2 r_zone`) the angle saturates at
/// `pi / 2` and the flag is set.
pub fn tangent_angle(ego: &VesselState, adv: &VesselState, r_zone: f64) -> (f64, bool) {
    let d = ego.distance_to(adv);
    if d <= 2.0 * r_zone {
        (FRAC_PI_2, true)
    } else {
        ((2.0 * r_zone / d).asin(), false)
    }
}

/// Signed velocity-space distance of the relative velocity from the tangent
/// line obtained by rotating the line of sight by `eps_signed`, over
/// `a_max`.
pub fn h_velocity_halfplane(
    ego: &VesselState,
    adv: &VesselState,
    eps_signed: f64,
    limits: &VesselLimits,
) -> Result<f64, RuleError> {
    let d = ego.offset_to(adv);
    let norm = d[0].hypot(d[1]);
    if norm == 0.0 {
        return Err(RuleError::CoincidentPositions);
    }
    let normal = rotate(eps_signed + FRAC_PI_2, d);
    Ok(dot(normal, relative_velocity(ego, adv)) / (limits.a_max * norm))
}

/// Closing speed margin `(|v_rel| - d / t_h) / a_max`.
pub fn h_time_horizon(ego: &VesselState, adv: &VesselState, t_h: f64, limits: &VesselLimits) -> f64 {
    let v = relative_velocity(ego, adv);
    (v[0].hypot(v[1]) - ego.distance_to(adv) / t_h) / limits.a_max
}

/// Robustness of "the relative velocity lies inside the collision cone and
/// the other vessel is within the time horizon", positive when it holds.
pub fn velocity_obstacle_margin(
    ego: &VesselState,
    adv: &VesselState,
    r_zone: f64,
    t_h: f64,
    limits: &VesselLimits,
) -> f64 {
    let (eps, _) = tangent_angle(ego, adv, r_zone);
    let neg = h_velocity_halfplane(ego, adv, -eps, limits).unwrap_or(0.0);
    let pos = h_velocity_halfplane(ego, adv, eps, limits).unwrap_or(0.0);
    neg.min(-pos).min(h_time_horizon(ego, adv, t_h, limits))
}

/// Speed difference `(v_E - v_A) / a_max`.
pub fn h_drives_faster(ego: &VesselState, adv: &VesselState, limits: &VesselLimits) -> f64 {
    (ego.v - adv.v) / limits.a_max
}
