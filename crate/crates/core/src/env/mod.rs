//! Two-vessel episodic environment.
//!
//! Each step advances the ego with the policy's action and the adversary
//! with its scenario input, after the adversary's rule duties have had
//! their say. Encounters are labeled online; the give-way rules are checked
//! with a fixed delay and feed the rule-compliance reward.

pub mod monitor;
pub mod policy;
pub mod reward;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{step, wrap_angle, ControlInput, VesselLimits, VesselState};
use crate::falsification::{AdversaryController, AdversaryDuty, FalsificationError, Scenario};
use crate::rules::{EncounterLabels, EncounterTracker, RuleContext, RuleError, RuleParameters};
use crate::signal::{Frame, JointSignal};

pub use monitor::{DelayedSpecMonitor, MonitorVerdict};
pub use policy::{
    scripted_policy, GiveWayReference, Policy, PolicyError, RandomPolicy, ScriptedKind, StepContext, StraightToGoal,
};
pub use reward::{
    reward_angular, reward_colregs, reward_goal_progress, reward_velocity, RewardBreakdown, RewardWeights,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode has finished; call reset")]
    EpisodeFinished,
    #[error("environment was never reset")]
    NotReset,
    #[error("scenario has {got} input steps, environment runs {expected}")]
    ScenarioLength { expected: usize, got: usize },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl From<FalsificationError> for EnvError {
    fn from(e: FalsificationError) -> Self {
        match e {
            FalsificationError::WrongLength { expected, got } => {
                EnvError::ScenarioLength { expected: expected / 2, got: got / 2 }
            }
            other => EnvError::Policy(PolicyError(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub dt: f64,
    /// Episode length `N` in steps.
    pub steps: usize,
    pub limits: VesselLimits,
    pub rules: RuleParameters,
    pub rewards: RewardWeights,
    /// Without an adversary the episode is pure goal reaching: adversary
    /// observations are zero and there is no zone termination or rule reward.
    pub adversary: bool,
    /// Run the delayed rule monitor. Falsification only needs the final
    /// trace and switches it off.
    pub monitor: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 10.0,
            steps: 100,
            limits: VesselLimits::default(),
            rules: RuleParameters::default(),
            rewards: RewardWeights::default(),
            adversary: true,
            monitor: true,
        }
    }
}

/// Number of observation entries.
pub const OBS_DIM: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub v_ego: f64,
    pub theta_ego: f64,
    pub omega_ego: f64,
    pub dist_adversary: f64,
    pub bearing_adversary: f64,
    pub dist_delta_adversary: f64,
    pub dist_goal: f64,
    pub bearing_goal: f64,
    pub steps_remaining: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.v_ego,
            self.theta_ego,
            self.omega_ego,
            self.dist_adversary,
            self.bearing_adversary,
            self.dist_delta_adversary,
            self.dist_goal,
            self.bearing_goal,
            self.steps_remaining,
        ]
    }

    /// Entries divided by fixed scales so typical magnitudes are order one.
    pub fn normalized(&self, limits: &VesselLimits, steps: usize, dt: f64) -> [f64; OBS_DIM] {
        let scale = [
            limits.v_max,
            PI,
            limits.omega_max,
            1e4,
            PI,
            2.0 * limits.v_max * dt,
            1e4,
            PI,
            steps.max(1) as f64,
        ];
        let raw = self.to_array();
        std::array::from_fn(|i| raw[i] / scale[i])
    }
}

/// Builds the observation of `ego` from scratch.
pub fn observe(
    ego: &VesselState,
    adversary: Option<(&VesselState, f64)>,
    goal: [f64; 2],
    steps_remaining: usize,
) -> Observation {
    let bearing = |p: [f64; 2]| wrap_angle((p[1] - ego.py).atan2(p[0] - ego.px) - ego.theta);
    let (dist_adversary, bearing_adversary, dist_delta_adversary) = match adversary {
        Some((a, prev)) => {
            let d = ego.distance_to(a);
            (d, bearing(a.position()), d - prev)
        }
        None => (0.0, 0.0, 0.0),
    };
    Observation {
        v_ego: ego.v,
        theta_ego: wrap_angle(ego.theta),
        omega_ego: ego.omega,
        dist_adversary,
        bearing_adversary,
        dist_delta_adversary,
        dist_goal: ((goal[0] - ego.px).powi(2) + (goal[1] - ego.py).powi(2)).sqrt(),
        bearing_goal: bearing(goal),
        steps_remaining: steps_remaining as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub terminated: bool,
    pub truncated: bool,
    pub reached_goal: bool,
    pub zone_violation: bool,
    pub verdict: Option<MonitorVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Idle,
    Running,
    Done,
}

pub struct Env {
    cfg: EnvConfig,
    ctx: Arc<RuleContext>,
    tracker: EncounterTracker,
    adversary_ctrl: AdversaryController,
    monitor: DelayedSpecMonitor,
    tp: usize,
    signal: JointSignal,
    inputs: Vec<ControlInput>,
    goal: [f64; 2],
    t: usize,
    prev_goal: f64,
    prev_sep: f64,
    status: Status,
    duty: AdversaryDuty,
    duties: Vec<AdversaryDuty>,
    applied: Vec<ControlInput>,
    rewards: Vec<RewardBreakdown>,
    obs: Observation,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        let ctx = RuleContext::new(cfg.rules, cfg.limits, cfg.dt)?;
        Self::with_context(cfg, ctx)
    }

    /// Shares a prebuilt rule context; its parameters must match `cfg`.
    pub fn with_context(cfg: EnvConfig, ctx: Arc<RuleContext>) -> Result<Self, EnvError> {
        let tm = cfg.rules.maneuver_steps(cfg.dt)?;
        let tp = cfg.rules.persistence_steps(cfg.dt)?;
        Ok(Self {
            tracker: EncounterTracker::new(Arc::clone(&ctx))?,
            adversary_ctrl: AdversaryController::new(cfg.limits, &cfg.rules, cfg.dt, tm),
            monitor: DelayedSpecMonitor::new(Arc::clone(&ctx))?,
            tp,
            signal: JointSignal::new(cfg.dt),
            inputs: Vec::new(),
            goal: [0.0; 2],
            t: 0,
            prev_goal: 0.0,
            prev_sep: 0.0,
            status: Status::Idle,
            duty: AdversaryDuty::None,
            duties: Vec::new(),
            applied: Vec::new(),
            rewards: Vec::new(),
            obs: Observation::default(),
            cfg,
            ctx,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn context_handle(&self) -> &Arc<RuleContext> {
        &self.ctx
    }

    pub fn reset(&mut self, scenario: &Scenario) -> Result<Observation, EnvError> {
        self.inputs = if self.cfg.adversary {
            if scenario.steps() != self.cfg.steps || scenario.z.len() % 2 != 0 {
                return Err(EnvError::ScenarioLength { expected: self.cfg.steps, got: scenario.steps() });
            }
            scenario.decode(&self.cfg.limits, self.cfg.dt)?.inputs
        } else {
            vec![ControlInput::zero(); self.cfg.steps]
        };
        let setup = &scenario.setup;
        self.goal = setup.goal;
        self.t = 0;
        self.signal = JointSignal::new(self.cfg.dt);
        self.tracker = EncounterTracker::new(Arc::clone(&self.ctx))?;
        self.adversary_ctrl.reset();
        self.monitor.reset();
        self.duties.clear();
        self.applied.clear();
        self.rewards.clear();
        self.status = Status::Running;
        self.push_frame(Frame::new(setup.ego, setup.adversary))?;
        self.prev_sep = setup.ego.distance_to(&setup.adversary);
        self.prev_goal = self.obs_now().dist_goal;
        self.obs = self.obs_now();
        Ok(self.obs)
    }

    fn obs_now(&self) -> Observation {
        let frame = self.signal.frames[self.t];
        let adversary = self.cfg.adversary.then_some((&frame.adversary, self.prev_sep));
        observe(&frame.ego, adversary, self.goal, self.cfg.steps - self.t)
    }

    // Appends a frame, refreshes labels and latches, and picks the
    // adversary duty for the new step.
    fn push_frame(&mut self, frame: Frame) -> Result<(), EnvError> {
        self.signal.push(frame);
        let t = self.signal.len() - 1;
        if !self.cfg.adversary {
            return Ok(());
        }
        self.tracker.push(&frame)?;
        let labels = self.tracker.labels();
        for j in t.saturating_sub(self.tp)..=t {
            self.signal.frames[j].theta_ref_ego = labels.theta_ref[j];
        }
        let confirmed = self.tracker.newly_persistent().map_or([false; 3], |(_, f)| f);
        let latched = self.tracker.latch().is_some();
        self.duty = self.adversary_ctrl.update(t, labels.active[t], confirmed, latched, &frame.adversary);
        Ok(())
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    /// Ground truth for scripted policies at the current step.
    pub fn step_context(&self) -> StepContext<'_> {
        let frame = &self.signal.frames[self.t];
        let (active, latch) = if self.cfg.adversary {
            (self.tracker.labels().active[self.t], self.tracker.latch())
        } else {
            ([false; 3], None)
        };
        StepContext {
            step: self.t,
            ego: &frame.ego,
            adversary: &frame.adversary,
            goal: self.goal,
            dt: self.cfg.dt,
            limits: &self.cfg.limits,
            rules: &self.cfg.rules,
            active,
            latch,
        }
    }

    pub fn step(&mut self, action: ControlInput) -> Result<StepOutcome, EnvError> {
        match self.status {
            Status::Idle => return Err(EnvError::NotReset),
            Status::Done => return Err(EnvError::EpisodeFinished),
            Status::Running => {}
        }
        let cfg = self.cfg;
        let frame = self.signal.frames[self.t];
        let ego = step(&frame.ego, &action, cfg.dt, &cfg.limits);
        let adversary = if cfg.adversary {
            let u = self.adversary_ctrl.control(self.duty, self.inputs[self.t], &frame.adversary);
            self.duties.push(self.duty);
            self.applied.push(u);
            step(&frame.adversary, &u, cfg.dt, &cfg.limits)
        } else {
            frame.adversary
        };
        self.push_frame(Frame::new(ego, adversary))?;
        self.t += 1;

        let w = &cfg.rewards;
        let goal_dist = ((self.goal[0] - ego.px).powi(2) + (self.goal[1] - ego.py).powi(2)).sqrt();
        let sep = ego.distance_to(&adversary);
        let reached_goal = goal_dist <= w.d_goal;
        let zone_violation = cfg.adversary && sep <= 2.0 * w.r_zone;
        let terminated = reached_goal || zone_violation;
        let truncated = !terminated && self.t >= cfg.steps;

        let verdict = if cfg.adversary && cfg.monitor { self.monitor.poll(&self.signal)? } else { None };
        let reward = RewardBreakdown::new(
            reward_goal_progress(self.prev_goal, goal_dist, w),
            reward_velocity(ego.v, w),
            reward_angular(ego.omega, w),
            reward_colregs(verdict.as_ref(), w),
            if zone_violation { w.c_zone } else { 0.0 },
            if reached_goal { w.c_goal } else { 0.0 },
        );
        self.rewards.push(reward);

        self.obs = self.obs_now();
        self.prev_goal = goal_dist;
        self.prev_sep = sep;
        if terminated || truncated {
            self.status = Status::Done;
        }
        Ok(StepOutcome {
            observation: self.obs,
            reward,
            terminated,
            truncated,
            reached_goal,
            zone_violation,
            verdict,
        })
    }

    pub fn is_done(&self) -> bool {
        self.status == Status::Done
    }

    pub fn signal(&self) -> &JointSignal {
        &self.signal
    }

    pub fn labels(&self) -> &EncounterLabels {
        self.tracker.labels()
    }

    pub fn verdicts(&self) -> &[MonitorVerdict] {
        self.monitor.emitted()
    }

    /// Adversary duty and applied input per step.
    pub fn adversary_log(&self) -> (&[AdversaryDuty], &[ControlInput]) {
        (&self.duties, &self.applied)
    }

    pub fn rewards(&self) -> &[RewardBreakdown] {
        &self.rewards
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    Goal,
    Zone,
    Truncated,
}

/// Everything recorded while running one episode to its end.
#[derive(Debug, Clone)]
pub struct Episode {
    pub signal: JointSignal,
    pub labels: EncounterLabels,
    pub rewards: Vec<RewardBreakdown>,
    pub verdicts: Vec<MonitorVerdict>,
    pub duties: Vec<AdversaryDuty>,
    pub adversary_inputs: Vec<ControlInput>,
    pub ego_inputs: Vec<ControlInput>,
    pub end: EpisodeEnd,
}

impl Episode {
    pub fn total_reward(&self) -> RewardBreakdown {
        let mut sum = RewardBreakdown::default();
        for r in &self.rewards {
            sum.add(r);
        }
        sum
    }
}

/// Resets `env` to `scenario` and runs `policy` until the episode ends.
pub fn run_episode(env: &mut Env, scenario: &Scenario, policy: &mut dyn Policy) -> Result<Episode, EnvError> {
    policy.reset();
    let mut obs = env.reset(scenario)?;
    let mut ego_inputs = Vec::with_capacity(env.config().steps);
    let end = loop {
        let action = policy.act(&obs, &env.step_context())?;
        ego_inputs.push(action);
        let out = env.step(action)?;
        obs = out.observation;
        if out.terminated {
            break if out.zone_violation { EpisodeEnd::Zone } else { EpisodeEnd::Goal };
        }
        if out.truncated {
            break EpisodeEnd::Truncated;
        }
    };
    let (duties, applied) = env.adversary_log();
    Ok(Episode {
        signal: env.signal().clone(),
        labels: env.labels().clone(),
        rewards: env.rewards().to_vec(),
        verdicts: env.verdicts().to_vec(),
        duties: duties.to_vec(),
        adversary_inputs: applied.to_vec(),
        ego_inputs,
        end,
    })
}
