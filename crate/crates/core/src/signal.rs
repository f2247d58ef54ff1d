//! Joint two-vessel state sequences.

use serde::{Deserialize, Serialize};

use crate::dynamics::VesselState;

/// One sample of the joint state plus the latched maneuver references.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub ego: VesselState,
    pub adversary: VesselState,
    pub theta_ref_ego: Option<f64>,
    pub theta_ref_adversary: Option<f64>,
}

impl Frame {
    pub fn new(ego: VesselState, adversary: VesselState) -> Self {
        Self { ego, adversary, theta_ref_ego: None, theta_ref_adversary: None }
    }

    pub fn separation(&self) -> f64 {
        self.ego.distance_to(&self.adversary)
    }
}

/// Frames `eta_0..eta_N` sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointSignal {
    pub dt: f64,
    pub frames: Vec<Frame>,
}

impl JointSignal {
    pub fn new(dt: f64) -> Self {
        Self { dt, frames: Vec::new() }
    }

    /// Pairs two equally long state sequences without latches.
    pub fn from_states(dt: f64, ego: &[VesselState], adversary: &[VesselState]) -> Self {
        assert_eq!(ego.len(), adversary.len(), "state sequences differ in length");
        let frames = ego.iter().zip(adversary).map(|(e, a)| Frame::new(*e, *a)).collect();
        Self { dt, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Number of transitions, `N` for `N + 1` frames.
    pub fn steps(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    pub fn push(&mut self, frame: Frame) {
        self.frames.push(frame);
    }

    /// Frames `start..end` as a new signal.
    pub fn window(&self, start: usize, end: usize) -> JointSignal {
        JointSignal { dt: self.dt, frames: self.frames[start..end].to_vec() }
    }
}
