//! Bounded unicycle-with-acceleration vessel model.
//!
//! A vessel state is `[px, py, theta, v, omega]` driven by a linear and an
//! angular acceleration. Speed and turn rate saturate at the configured
//! limits. Integration is fixed-step RK4 with [`SUBSTEPS`] sub-steps per
//! sampling interval; saturation is enforced inside every stage and after
//! every sub-step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of RK4 sub-steps per call to [`step`].
pub const SUBSTEPS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("invalid vessel limits: {0}")]
    InvalidLimits(String),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
}

/// Kinematic state of one vessel. `theta` is an unwrapped accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VesselState {
    pub px: f64,
    pub py: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

impl VesselState {
    pub const fn new(px: f64, py: f64, theta: f64, v: f64, omega: f64) -> Self {
        Self { px, py, theta, v, omega }
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.px, self.py, self.theta, self.v, self.omega]
    }

    pub fn position(&self) -> [f64; 2] {
        [self.px, self.py]
    }

    /// Velocity vector `v [cos theta, sin theta]`.
    pub fn velocity(&self) -> [f64; 2] {
        [self.v * self.theta.cos(), self.v * self.theta.sin()]
    }

    /// Vector from this vessel to `other`.
    pub fn offset_to(&self, other: &VesselState) -> [f64; 2] {
        [other.px - self.px, other.py - self.py]
    }

    pub fn distance_to(&self, other: &VesselState) -> f64 {
        let [dx, dy] = self.offset_to(other);
        dx.hypot(dy)
    }
}

/// Bounds on speed, turn rate and both accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub a_max: f64,
    pub alpha_max: f64,
}

impl VesselLimits {
    pub fn new(
        v_min: f64,
        v_max: f64,
        omega_max: f64,
        a_max: f64,
        alpha_max: f64,
    ) -> Result<Self, DynamicsError> {
        let limits = Self { v_min, v_max, omega_max, a_max, alpha_max };
        limits.validate()?;
        Ok(limits)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all = [self.v_min, self.v_max, self.omega_max, self.a_max, self.alpha_max];
        if all.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(DynamicsError::InvalidLimits(format!(
                "all bounds must be finite and strictly positive: {self:?}"
            )));
        }
        if self.v_min >= self.v_max {
            return Err(DynamicsError::InvalidLimits(format!(
                "v_min ({}) must be below v_max ({})",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    fn clamp_state(&self, s: &mut VesselState) {
        s.v = s.v.clamp(self.v_min, self.v_max);
        s.omega = s.omega.clamp(-self.omega_max, self.omega_max);
    }
}

impl Default for VesselLimits {
    fn default() -> Self {
        Self { v_min: 2.5, v_max: 15.0, omega_max: 0.015, a_max: 0.12, alpha_max: 2.5e-4 }
    }
}

/// Control input `[a, alpha]`, clamped to the limits on construction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    a: f64,
    alpha: f64,
}

impl ControlInput {
    pub fn new(a: f64, alpha: f64, limits: &VesselLimits) -> Self {
        Self {
            a: clamp_finite(a, limits.a_max),
            alpha: clamp_finite(alpha, limits.alpha_max),
        }
    }

    pub const fn zero() -> Self {
        Self { a: 0.0, alpha: 0.0 }
    }

    /// Maps `[-1, 1]`-normalized commands to physical units, saturating outside.
    pub fn from_normalized(a: f64, alpha: f64, limits: &VesselLimits) -> Self {
        Self::new(
            clamp_finite(a, 1.0) * limits.a_max,
            clamp_finite(alpha, 1.0) * limits.alpha_max,
            limits,
        )
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn clamp_finite(x: f64, bound: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-bound, bound)
    }
}

/// States `x_0..x_N` sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<VesselState>,
}

/// Inputs `u_0..u_{N-1}`, each held for `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSequence {
    pub dt: f64,
    pub inputs: Vec<ControlInput>,
}

impl InputSequence {
    pub fn zeros(dt: f64, n: usize) -> Self {
        Self { dt, inputs: vec![ControlInput::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Right-hand side of the vessel ODE: `[v cos theta, v sin theta, omega, a, alpha]`.
pub fn derivative(state: &VesselState, input: &ControlInput) -> [f64; 5] {
    [
        state.v * state.theta.cos(),
        state.v * state.theta.sin(),
        state.omega,
        input.a,
        input.alpha,
    ]
}

// Derivative of the saturated system. Speed and turn rate are read through
// the clamp; a channel already resting on a bound at the start of the
// sub-step with the input pushing further out stops changing.
fn saturated_derivative(
    s: &VesselState,
    u: &ControlInput,
    limits: &VesselLimits,
    frozen: (bool, bool),
) -> [f64; 5] {
    let v = s.v.clamp(limits.v_min, limits.v_max);
    let omega = s.omega.clamp(-limits.omega_max, limits.omega_max);
    let dv = if frozen.0 { 0.0 } else { u.a };
    let domega = if frozen.1 { 0.0 } else { u.alpha };
    [v * s.theta.cos(), v * s.theta.sin(), omega, dv, domega]
}

fn offset(s: &VesselState, k: &[f64; 5], h: f64) -> VesselState {
    VesselState::new(
        s.px + h * k[0],
        s.py + h * k[1],
        s.theta + h * k[2],
        s.v + h * k[3],
        s.omega + h * k[4],
    )
}

fn rk4_substep(s: &VesselState, u: &ControlInput, h: f64, limits: &VesselLimits) -> VesselState {
    let frozen = (
        (s.v >= limits.v_max && u.a > 0.0) || (s.v <= limits.v_min && u.a < 0.0),
        (s.omega >= limits.omega_max && u.alpha > 0.0)
            || (s.omega <= -limits.omega_max && u.alpha < 0.0),
    );
    let k1 = saturated_derivative(s, u, limits, frozen);
    let k2 = saturated_derivative(&offset(s, &k1, h / 2.0), u, limits, frozen);
    let k3 = saturated_derivative(&offset(s, &k2, h / 2.0), u, limits, frozen);
    let k4 = saturated_derivative(&offset(s, &k3, h), u, limits, frozen);
    let mut k = [0.0; 5];
    for i in 0..5 {
        k[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    let mut next = offset(s, &k, h);
    limits.clamp_state(&mut next);
    next
}

/// Advances `state` by `dt` seconds with `input` held constant.
pub fn step(state: &VesselState, input: &ControlInput, dt: f64, limits: &VesselLimits) -> VesselState {
    step_with_substeps(state, input, dt, limits, SUBSTEPS)
}

/// [`step`] with an explicit sub-step count.
pub fn step_with_substeps(
    state: &VesselState,
    input: &ControlInput,
    dt: f64,
    limits: &VesselLimits,
    substeps: usize,
) -> VesselState {
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    let mut s = *state;
    limits.clamp_state(&mut s);
    for _ in 0..substeps {
        s = rk4_substep(&s, input, h, limits);
    }
    s
}

/// Integrates an input sequence from `x0`, returning `N + 1` states.
pub fn rollout(
    x0: &VesselState,
    inputs: &InputSequence,
    limits: &VesselLimits,
) -> Result<Trajectory, DynamicsError> {
    if inputs.is_empty() {
        return Err(DynamicsError::EmptyInput);
    }
    if !(inputs.dt > 0.0) {
        return Err(DynamicsError::InvalidTimeStep(inputs.dt));
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(*x0);
    for u in &inputs.inputs {
        let last = states[states.len() - 1];
        states.push(step(&last, u, inputs.dt, limits));
    }
    Ok(Trajectory { dt: inputs.dt, states })
}

/// Relative velocity `v^E [cos, sin] - v^A [cos, sin]`.
pub fn relative_velocity(ego: &VesselState, other: &VesselState) -> [f64; 2] {
    let ve = ego.velocity();
    let va = other.velocity();
    [ve[0] - va[0], ve[1] - va[1]]
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Angular acceleration that drives the heading toward `target`.
///
/// Commands the turn rate along the time-optimal braking curve
/// `sqrt(2 alpha_max |e|)` for large errors and a first-order approach
/// `e / (3 dt)` near the target, then picks the acceleration that reaches
/// that rate within one step.
pub fn heading_tracker(state: &VesselState, target: f64, limits: &VesselLimits, dt: f64) -> f64 {
    let error = target - state.theta;
    let magnitude = (2.0 * limits.alpha_max * error.abs())
        .sqrt()
        .min(error.abs() / (3.0 * dt))
        .min(limits.omega_max);
    let desired = magnitude.copysign(error);
    ((desired - state.omega) / dt).clamp(-limits.alpha_max, limits.alpha_max)
}

/// Linear acceleration that drives the speed toward `target`.
pub fn speed_tracker(state: &VesselState, target: f64, limits: &VesselLimits, dt: f64) -> f64 {
    ((target - state.v) / dt).clamp(-limits.a_max, limits.a_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn limits() -> VesselLimits {
        VesselLimits::default()
    }

    #[test]
    fn derivative_examples() {
        let d = derivative(&VesselState::new(0.0, 0.0, 0.0, 5.0, 0.0), &ControlInput::zero());
        assert_eq!(d, [5.0, 0.0, 0.0, 0.0, 0.0]);

        let d = derivative(&VesselState::new(0.0, 0.0, FRAC_PI_2, 5.0, 0.0), &ControlInput::zero());
        assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 5.0, epsilon = 1e-12);

        let u = ControlInput::new(0.12, 0.0, &limits());
        let d = derivative(&VesselState::new(0.0, 0.0, 0.0, 5.0, 0.015), &u);
        assert_eq!(d, [5.0, 0.0, 0.015, 0.12, 0.0]);
    }

    #[test]
    fn control_input_is_clamped() {
        let u = ControlInput::new(1.0, -1.0, &limits());
        assert_eq!(u.a(), 0.12);
        assert_eq!(u.alpha(), -2.5e-4);
        let u = ControlInput::from_normalized(-0.5, 3.0, &limits());
        assert_abs_diff_eq!(u.a(), -0.06, epsilon = 1e-15);
        assert_eq!(u.alpha(), 2.5e-4);
    }

    #[test]
    fn straight_line_step() {
        let s = step(&VesselState::new(0.0, 0.0, 0.0, 5.0, 0.0), &ControlInput::zero(), 10.0, &limits());
        assert_abs_diff_eq!(s.px, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.py, 0.0, epsilon = 1e-12);
        assert_eq!(s.v, 5.0);
    }

    #[test]
    fn constant_turn_matches_arc() {
        let (v, w, t) = (5.0, 0.015, 10.0);
        let s = step(&VesselState::new(0.0, 0.0, 0.0, v, w), &ControlInput::zero(), t, &limits());
        let px = v / w * (w * t).sin();
        let py = v / w * (1.0 - (w * t).cos());
        // 49.8130..., 3.7430...
        assert!((s.px - px).abs() / px < 1e-6);
        assert!((s.py - py).abs() / py < 1e-6);
        assert_abs_diff_eq!(s.theta, 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(px, 49.81, epsilon = 0.01);
        assert_abs_diff_eq!(py, 3.74, epsilon = 0.01);
    }

    #[test]
    fn speed_saturates() {
        let u = ControlInput::new(0.12, 0.0, &limits());
        let s = step(&VesselState::new(0.0, 0.0, 0.0, 15.0, 0.0), &u, 10.0, &limits());
        assert_eq!(s.v, 15.0);
        assert_abs_diff_eq!(s.px, 150.0, epsilon = 1e-9);
    }

    #[test]
    fn rollout_shapes_and_errors() {
        let x0 = VesselState::new(0.0, 0.0, 0.0, 5.0, 0.0);
        let traj = rollout(&x0, &InputSequence::zeros(10.0, 100), &limits()).unwrap();
        assert_eq!(traj.states.len(), 101);
        assert_abs_diff_eq!(traj.states[100].px, 5000.0, epsilon = 1e-6);
        let traj = rollout(&x0, &InputSequence::zeros(10.0, 1), &limits()).unwrap();
        assert_eq!(traj.states.len(), 2);
        assert_eq!(
            rollout(&x0, &InputSequence::zeros(10.0, 0), &limits()),
            Err(DynamicsError::EmptyInput)
        );
    }

    #[test]
    fn turn_rate_ramp_is_piecewise_linear() {
        let l = limits();
        let x0 = VesselState::new(0.0, 0.0, 0.0, 5.0, 0.0);
        let seq = InputSequence {
            dt: 10.0,
            inputs: vec![ControlInput::new(0.0, l.alpha_max, &l); 12],
        };
        let traj = rollout(&x0, &seq, &l).unwrap();
        for (k, s) in traj.states.iter().enumerate() {
            let expected = (k as f64 * 10.0 * l.alpha_max).min(l.omega_max);
            assert_abs_diff_eq!(s.omega, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn relative_velocity_examples() {
        let a = VesselState::new(0.0, 0.0, 0.3, 5.0, 0.0);
        assert_eq!(relative_velocity(&a, &a), [0.0, 0.0]);

        let e = VesselState::new(0.0, 0.0, 0.0, 5.0, 0.0);
        let o = VesselState::new(0.0, 0.0, PI, 5.0, 0.0);
        let r = relative_velocity(&e, &o);
        assert_abs_diff_eq!(r[0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 0.0, epsilon = 1e-12);

        let e = VesselState::new(0.0, 0.0, FRAC_PI_2, 3.0, 0.0);
        let o = VesselState::new(0.0, 0.0, 0.0, 4.0, 0.0);
        let r = relative_velocity(&e, &o);
        assert_abs_diff_eq!(r[0], -4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_limits_rejected() {
        assert!(VesselLimits::new(15.0, 2.5, 0.015, 0.12, 2.5e-4).is_err());
        assert!(VesselLimits::new(2.5, 15.0, 0.0, 0.12, 2.5e-4).is_err());
        assert!(VesselLimits::new(2.5, 15.0, 0.015, 0.12, 2.5e-4).is_ok());
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-12);
        assert_eq!(wrap_angle(PI), -PI);
        assert_abs_diff_eq!(wrap_angle(-PI / 4.0), -PI / 4.0, epsilon = 1e-15);
        for i in -100..100 {
            let w = wrap_angle(i as f64 * 0.37);
            assert!((-PI..PI).contains(&w));
        }
    }

    #[test]
    fn heading_tracker_settles_on_target() {
        let l = limits();
        let mut s = VesselState::new(0.0, 0.0, 0.0, 7.5, 0.0);
        let target = -0.5;
        for _ in 0..40 {
            let alpha = heading_tracker(&s, target, &l, 10.0);
            s = step(&s, &ControlInput::new(0.0, alpha, &l), 10.0, &l);
        }
        assert_abs_diff_eq!(s.theta, target, epsilon = 5e-3);
        assert!(s.omega.abs() < 1e-3);
    }
}
