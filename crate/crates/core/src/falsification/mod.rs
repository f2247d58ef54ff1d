//! Scenario sampling, the rule-following adversary and CMA-ES falsification.
//!
//! A scenario is an initial setup plus a normalized decision vector `z` of
//! length `2N`. Entry `z[2k]` drives the adversary's linear acceleration and
//! `z[2k + 1]` its angular acceleration at step `k`, both clamped to
//! `[-1, 1]` and scaled by the vessel limits.

pub mod adversary;
pub mod search;
pub mod training;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ControlInput, InputSequence, VesselLimits, VesselState};
use crate::rules::{EncounterType, RuleError, Verdict};

pub use adversary::{AdversaryController, AdversaryDuty};
pub use search::{falsify, simulate_scenario, FalsificationResult, FalsificationSettings};
pub use training::{run_training_loop, EpisodeRecord, LoopMode, LoopSettings, PolicyTrainer, RoundRecord, TrainingLog};

#[derive(Debug, Error)]
pub enum FalsificationError {
    #[error("decision vector has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("cannot sample from an empty scenario pool")]
    EmptyPool,
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Cmaes(#[from] crate::cmaes::CmaesError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
}

/// Closed interval `[lo, hi]`; `lo == hi` is a point mass.
pub type Range = [f64; 2];

fn sample_range(range: Range, rng: &mut impl Rng) -> f64 {
    if range[0] >= range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

fn in_range(x: f64, range: Range) -> bool {
    x >= range[0] && x <= range[1]
}

/// Uniform box over initial vessel states. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub px: Range,
    pub py: Range,
    pub theta: Range,
    pub v: Range,
    pub omega: Range,
}

impl StateBox {
    pub fn sample(&self, rng: &mut impl Rng) -> VesselState {
        VesselState::new(
            sample_range(self.px, rng),
            sample_range(self.py, rng),
            sample_range(self.theta, rng),
            sample_range(self.v, rng),
            sample_range(self.omega, rng),
        )
    }

    pub fn contains(&self, s: &VesselState) -> bool {
        in_range(s.px, self.px)
            && in_range(s.py, self.py)
            && in_range(s.theta, self.theta)
            && in_range(s.v, self.v)
            && in_range(s.omega, self.omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalBox {
    pub px: Range,
    pub py: Range,
}

impl GoalBox {
    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 2] {
        [sample_range(self.px, rng), sample_range(self.py, rng)]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        in_range(p[0], self.px) && in_range(p[1], self.py)
    }
}

/// Sampling boxes for the ego, the adversary of each encounter type and the goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetupDistribution {
    pub ego: StateBox,
    pub crossing: StateBox,
    pub head_on: StateBox,
    pub overtake: StateBox,
    pub goal: GoalBox,
}

impl SetupDistribution {
    pub fn adversary(&self, t: EncounterType) -> &StateBox {
        match t {
            EncounterType::Crossing => &self.crossing,
            EncounterType::HeadOn => &self.head_on,
            EncounterType::Overtake => &self.overtake,
        }
    }
}

impl Default for SetupDistribution {
    fn default() -> Self {
        let deg = f64::to_radians;
        Self {
            ego: StateBox {
                px: [-1500.0, 1500.0],
                py: [-5000.0, -3500.0],
                theta: [deg(80.0), deg(100.0)],
                v: [7.5, 7.5],
                omega: [0.0, 0.0],
            },
            crossing: StateBox {
                px: [2500.0, 4000.0],
                py: [-2500.0, 500.0],
                theta: [deg(140.0), deg(220.0)],
                v: [5.0, 10.0],
                omega: [0.0, 0.0],
            },
            head_on: StateBox {
                px: [-1500.0, 500.0],
                py: [1500.0, 3000.0],
                theta: [deg(260.0), deg(280.0)],
                v: [5.0, 10.0],
                omega: [0.0, 0.0],
            },
            overtake: StateBox {
                px: [-1500.0, 1500.0],
                py: [-2000.0, -500.0],
                theta: [deg(80.0), deg(100.0)],
                v: [2.5, 5.0],
                omega: [0.0, 0.0],
            },
            goal: GoalBox { px: [-1500.0, 1500.0], py: [1500.0, 3000.0] },
        }
    }
}

/// Initial states of both vessels, the ego goal and the box the adversary
/// was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSetup {
    pub ego: VesselState,
    pub adversary: VesselState,
    pub goal: [f64; 2],
    pub tag: EncounterType,
}

/// Draws the tag uniformly, then ego, adversary and goal from their boxes.
pub fn sample_environment_setup(dist: &SetupDistribution, rng: &mut impl Rng) -> ScenarioSetup {
    let tag = EncounterType::ALL[rng.random_range(0..3)];
    let ego = dist.ego.sample(rng);
    let adversary = dist.adversary(tag).sample(rng);
    let goal = dist.goal.sample(rng);
    ScenarioSetup { ego, adversary, goal, tag }
}

/// Where a stored scenario came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProvenance {
    pub round: usize,
    pub objective: f64,
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub setup: ScenarioSetup,
    pub z: Vec<f64>,
    pub provenance: Option<ScenarioProvenance>,
}

impl Scenario {
    pub fn new(setup: ScenarioSetup, z: Vec<f64>) -> Self {
        Self { setup, z, provenance: None }
    }

    pub fn steps(&self) -> usize {
        self.z.len() / 2
    }

    pub fn decode(&self, limits: &VesselLimits, dt: f64) -> Result<InputSequence, FalsificationError> {
        decode_candidate(&self.z, self.steps(), limits, dt)
    }
}

/// `a_k = clamp(z[2k], -1, 1) a_max`, `alpha_k = clamp(z[2k + 1], -1, 1) alpha_max`.
pub fn decode_candidate(
    z: &[f64],
    steps: usize,
    limits: &VesselLimits,
    dt: f64,
) -> Result<InputSequence, FalsificationError> {
    if z.len() != 2 * steps {
        return Err(FalsificationError::WrongLength { expected: 2 * steps, got: z.len() });
    }
    let inputs = z.chunks_exact(2).map(|c| ControlInput::from_normalized(c[0], c[1], limits)).collect();
    Ok(InputSequence { dt, inputs })
}

/// Large constant that lifts every vacuous objective above every
/// nonvacuous one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigM(pub f64);

impl Default for BigM {
    fn default() -> Self {
        BigM(1e6)
    }
}

/// `1_vac (rho_in + M) + (1 - 1_vac) rho_out`.
///
/// The branches are selected rather than multiplied out: the unused
/// robustness is infinite, and `0 * inf` is NaN.
pub fn falsification_objective(verdict: &Verdict, big_m: BigM) -> f64 {
    if verdict.vacuous() {
        verdict.rho_in + big_m.0
    } else {
        verdict.rho_out
    }
}

/// Bounded FIFO queue of scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPool {
    capacity: usize,
    items: VecDeque<Scenario>,
}

impl ScenarioPool {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entries beyond capacity.
    pub fn push(&mut self, scenario: Scenario) {
        self.items.push_back(scenario);
        while self.items.len() > self.capacity {
            self.items.pop_front();
        }
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<&Scenario, FalsificationError> {
        if self.items.is_empty() {
            return Err(FalsificationError::EmptyPool);
        }
        Ok(&self.items[rng.random_range(0..self.items.len())])
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Scenario> {
        self.items.iter()
    }
}
