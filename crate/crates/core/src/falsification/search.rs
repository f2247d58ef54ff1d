//! Simulation of a scenario and the CMA-ES search for counterexamples.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{falsification_objective, BigM, FalsificationError, Scenario, ScenarioProvenance, ScenarioSetup};
use crate::cmaes::{minimize, GenerationRecord, OptimizerState};
use crate::env::{run_episode, Env, EnvConfig, EnvError, Episode, Policy};
use crate::rules::{RuleContext, Verdict};

/// Runs `policy` against `scenario` to the end of the episode.
pub fn simulate_scenario(env: &mut Env, scenario: &Scenario, policy: &mut dyn Policy) -> Result<Episode, EnvError> {
    run_episode(env, scenario, policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalsificationSettings {
    pub n_generation: usize,
    pub lambda: usize,
    pub sigma0: f64,
    /// Every entry of the initial mean.
    pub mean0: f64,
    pub big_m: BigM,
    /// Evaluate the candidates of a generation on the rayon pool.
    pub parallel: bool,
}

impl Default for FalsificationSettings {
    fn default() -> Self {
        Self { n_generation: 10, lambda: 10, sigma0: 0.05, mean0: 0.0, big_m: BigM::default(), parallel: false }
    }
}

#[derive(Debug, Clone)]
pub struct FalsificationResult {
    /// Best scenario found, with provenance filled in.
    pub scenario: Scenario,
    pub objective: f64,
    pub verdict: Verdict,
    pub history: Vec<GenerationRecord>,
    pub simulations: usize,
    pub env_steps: usize,
}

impl FalsificationResult {
    /// A nonvacuous violation was found.
    pub fn falsified(&self) -> bool {
        self.objective < 0.0
    }
}

/// Searches adversary inputs for `setup` that make `policy` violate the
/// give-way rules nonvacuously. Stops at the first negative objective and
/// otherwise returns the best candidate after `n_generation` generations.
pub fn falsify(
    setup: &ScenarioSetup,
    policy: &dyn Policy,
    env_cfg: &EnvConfig,
    ctx: &Arc<RuleContext>,
    settings: &FalsificationSettings,
    seed: u64,
    round: usize,
) -> Result<FalsificationResult, FalsificationError> {
    if settings.n_generation == 0 {
        return Err(FalsificationError::InvalidSettings("n_generation must be at least 1".into()));
    }
    let cfg = EnvConfig { adversary: true, monitor: false, ..*env_cfg };
    let dim = 2 * cfg.steps;
    let mut state = OptimizerState::new(dim, &vec![settings.mean0; dim], settings.sigma0, settings.lambda, seed)?;

    let simulations = AtomicUsize::new(0);
    let env_steps = AtomicUsize::new(0);
    let evaluated: Mutex<Vec<(Vec<f64>, Verdict)>> = Mutex::new(Vec::new());
    let objective = |z: &[f64]| -> Result<f64, FalsificationError> {
        let scenario = Scenario::new(*setup, z.to_vec());
        let mut env = Env::with_context(cfg, Arc::clone(ctx))?;
        let mut pi = policy.clone_box();
        let episode = simulate_scenario(&mut env, &scenario, pi.as_mut())?;
        simulations.fetch_add(1, Ordering::Relaxed);
        env_steps.fetch_add(episode.signal.steps(), Ordering::Relaxed);
        let verdict = ctx.evaluate(&episode.signal)?;
        evaluated.lock().expect("evaluation log poisoned").push((scenario.z, verdict));
        Ok(falsification_objective(&verdict, settings.big_m))
    };
    let result = minimize(objective, &mut state, settings.n_generation, 0.0, settings.parallel)?;

    let evaluated = evaluated.into_inner().expect("evaluation log poisoned");
    let verdict = evaluated
        .iter()
        .find(|(z, _)| z.as_slice() == result.best.as_slice())
        .map(|(_, v)| *v)
        .ok_or_else(|| FalsificationError::InvalidSettings("no candidate could be evaluated".into()))?;
    let mut scenario = Scenario::new(*setup, result.best.as_slice().to_vec());
    scenario.provenance = Some(ScenarioProvenance { round, objective: result.best_fitness, vacuous: verdict.vacuous() });
    Ok(FalsificationResult {
        scenario,
        objective: result.best_fitness,
        verdict,
        history: result.history,
        simulations: simulations.into_inner(),
        env_steps: env_steps.into_inner(),
    })
}
