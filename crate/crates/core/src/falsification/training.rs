//! Outer training loop with periodic falsification rounds.
//!
//! Every `f_falsification` environment steps, `n_samples` fresh setups are
//! falsified against a frozen snapshot of the current policy and the best
//! scenarios are appended to the FIFO pool. Training episodes draw from the
//! pool; the trainer updates every `f_update` steps.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::search::{falsify, FalsificationSettings};
use super::{sample_environment_setup, FalsificationError, Scenario, ScenarioPool, SetupDistribution};
use crate::dynamics::ControlInput;
use crate::env::{Env, EnvConfig, Observation, Policy, RewardBreakdown, StepContext};
use crate::rules::{EncounterType, RuleContext};
use crate::train::{TrainError, UpdateStats};

/// What the loop needs from a learner.
pub trait PolicyTrainer {
    /// Exploratory action for the current step.
    fn act(&mut self, obs: &Observation, ctx: &StepContext<'_>) -> Result<ControlInput, TrainError>;
    /// Outcome of the last action.
    fn record(&mut self, reward: f64, next: &Observation, terminated: bool, truncated: bool) -> Result<(), TrainError>;
    fn update(&mut self) -> Result<UpdateStats, TrainError>;
    /// Frozen copy of the current policy, acting deterministically.
    fn snapshot(&self) -> Box<dyn Policy>;
    fn steps(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    /// Periodic falsification rounds feed the pool.
    Falsification,
    /// The pool is filled once with random scenarios before training.
    Baseline,
    /// Goal reaching only, fresh setups every episode and no adversary.
    AdversaryFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSettings {
    pub mode: LoopMode,
    pub total_steps: usize,
    pub f_falsification: usize,
    pub f_update: usize,
    pub n_samples: usize,
    pub pool_size: usize,
    pub baseline_scenarios: usize,
    /// Standard deviation of random decision vectors.
    pub baseline_sigma: f64,
    pub falsification: FalsificationSettings,
    pub setups: SetupDistribution,
    pub env: EnvConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub step: usize,
    pub objectives: Vec<f64>,
    pub vacuous_fraction: f64,
    pub falsified: usize,
    pub simulations: usize,
    pub env_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Environment step at which the episode ended.
    pub step: usize,
    pub length: usize,
    pub tag: EncounterType,
    pub reward: RewardBreakdown,
    pub reached_goal: bool,
    pub zone_violation: bool,
}

#[derive(Debug, Clone)]
pub struct TrainingLog {
    pub rounds: Vec<RoundRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub updates: Vec<(usize, UpdateStats)>,
    pub pool: ScenarioPool,
}

/// Seed of the CMA-ES run for sample `s` of round `round`.
pub fn falsification_seed(seed: u64, round: usize, s: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul((round as u64) << 20 | (s as u64 + 1))
}

/// A scenario with Gaussian decision vector `z ~ N(0, sigma^2 I)`.
pub fn random_scenario(
    setups: &SetupDistribution,
    steps: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Scenario, FalsificationError> {
    let setup = sample_environment_setup(setups, rng);
    let normal = Normal::new(0.0, sigma).map_err(|e| FalsificationError::InvalidSettings(e.to_string()))?;
    let z = (0..2 * steps).map(|_| normal.sample(rng)).collect();
    Ok(Scenario::new(setup, z))
}

pub fn run_training_loop(
    settings: &LoopSettings,
    trainer: &mut dyn PolicyTrainer,
) -> Result<TrainingLog, FalsificationError> {
    if settings.f_update == 0 || settings.f_falsification == 0 || settings.pool_size == 0 {
        return Err(FalsificationError::InvalidSettings(
            "f_update, f_falsification and pool_size must be positive".into(),
        ));
    }
    let mode = settings.mode;
    let env_cfg = EnvConfig { adversary: mode != LoopMode::AdversaryFree, monitor: true, ..settings.env };
    let ctx = RuleContext::new(env_cfg.rules, env_cfg.limits, env_cfg.dt)?;
    let mut env = Env::with_context(env_cfg, Arc::clone(&ctx))?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut pool = ScenarioPool::new(settings.pool_size);

    if mode == LoopMode::Baseline {
        for _ in 0..settings.baseline_scenarios {
            pool.push(random_scenario(&settings.setups, env_cfg.steps, settings.baseline_sigma, &mut rng)?);
        }
    }

    let mut log = TrainingLog { rounds: Vec::new(), episodes: Vec::new(), updates: Vec::new(), pool: ScenarioPool::new(0) };
    let mut obs: Option<Observation> = None;
    let mut tag = EncounterType::Crossing;
    let mut episode_reward = RewardBreakdown::default();
    let mut episode_len = 0;
    let mut round = 0;

    for t in 0..settings.total_steps {
        if mode == LoopMode::Falsification && t % settings.f_falsification == 0 {
            let snapshot = trainer.snapshot();
            let mut record = RoundRecord {
                round,
                step: t,
                objectives: Vec::new(),
                vacuous_fraction: 0.0,
                falsified: 0,
                simulations: 0,
                env_steps: 0,
            };
            let mut vacuous = 0;
            for s in 0..settings.n_samples {
                let setup = sample_environment_setup(&settings.setups, &mut rng);
                let seed = falsification_seed(settings.seed, round, s);
                let res = falsify(&setup, snapshot.as_ref(), &env_cfg, &ctx, &settings.falsification, seed, round)?;
                record.objectives.push(res.objective);
                record.falsified += usize::from(res.falsified());
                record.simulations += res.simulations;
                record.env_steps += res.env_steps;
                vacuous += usize::from(res.verdict.vacuous());
                pool.push(res.scenario);
            }
            record.vacuous_fraction = vacuous as f64 / settings.n_samples.max(1) as f64;
            log.rounds.push(record);
            round += 1;
        }

        let current = match obs {
            Some(o) => o,
            None => {
                let scenario = match mode {
                    LoopMode::AdversaryFree => {
                        let setup = sample_environment_setup(&settings.setups, &mut rng);
                        Scenario::new(setup, vec![0.0; 2 * env_cfg.steps])
                    }
                    _ => pool.sample(&mut rng)?.clone(),
                };
                tag = scenario.setup.tag;
                episode_reward = RewardBreakdown::default();
                episode_len = 0;
                env.reset(&scenario)?
            }
        };

        let action = trainer.act(&current, &env.step_context())?;
        let out = env.step(action)?;
        trainer.record(out.reward.total, &out.observation, out.terminated, out.truncated)?;
        episode_reward.add(&out.reward);
        episode_len += 1;
        obs = Some(out.observation);
        if out.terminated || out.truncated {
            log.episodes.push(EpisodeRecord {
                step: t + 1,
                length: episode_len,
                tag,
                reward: episode_reward,
                reached_goal: out.reached_goal,
                zone_violation: out.zone_violation,
            });
            obs = None;
        }
        if (t + 1) % settings.f_update == 0 {
            log.updates.push((t + 1, trainer.update()?));
        }
    }
    log.pool = pool;
    Ok(log)
}
