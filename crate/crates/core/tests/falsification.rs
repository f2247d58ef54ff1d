//! CMA-ES falsification of scripted policies and the outer training loop.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seatrial::config::Config;
use seatrial::dynamics::VesselState;
use seatrial::env::{run_episode, scripted_policy, Env, EnvConfig, ScriptedKind};
use seatrial::falsification::training::random_scenario;
use seatrial::falsification::{
    falsification_objective, falsify, run_training_loop, BigM, FalsificationSettings, LoopMode, ScenarioSetup,
};
use seatrial::harness::generate_test_set;
use seatrial::rules::EncounterType;
use seatrial::train::PpoTrainer;

fn crossing_setup() -> ScenarioSetup {
    ScenarioSetup {
        ego: VesselState::new(0.0, -6000.0, FRAC_PI_2, 7.5, 0.0),
        adversary: VesselState::new(5000.0, -1000.0, PI, 7.5, 0.0),
        goal: [0.0, 6000.0],
        tag: EncounterType::Crossing,
    }
}

fn far_setup() -> ScenarioSetup {
    ScenarioSetup { adversary: VesselState::new(30_000.0, 0.0, 0.0, 2.5, 0.0), ..crossing_setup() }
}

fn settings(n_generation: usize, parallel: bool) -> FalsificationSettings {
    FalsificationSettings { n_generation, parallel, ..FalsificationSettings::default() }
}

#[test]
fn one_generation_costs_lambda_simulations() {
    let cfg = EnvConfig::default();
    let env = Env::new(cfg).unwrap();
    let policy = scripted_policy(ScriptedKind::StraightToGoal, 0);
    let res = falsify(&far_setup(), policy.as_ref(), &cfg, env.context_handle(), &settings(1, false), 1, 0).unwrap();
    assert_eq!(res.simulations, 10);
    assert_eq!(res.history.len(), 1);
    assert_eq!(res.env_steps, 1000);
    assert!(res.verdict.vacuous() && !res.falsified());
    assert!(res.objective > 0.5e6);
}

#[test]
fn search_stops_at_the_first_violation() {
    let cfg = EnvConfig::default();
    let env = Env::new(cfg).unwrap();
    let policy = scripted_policy(ScriptedKind::StraightToGoal, 0);
    let res = falsify(&crossing_setup(), policy.as_ref(), &cfg, env.context_handle(), &settings(10, true), 4, 2).unwrap();
    assert!(res.falsified());
    assert!(!res.verdict.vacuous() && !res.verdict.satisfied);
    assert_eq!(res.objective, res.verdict.rho_out);
    assert!(res.simulations < 100);
    let prov = res.scenario.provenance.unwrap();
    assert_eq!((prov.round, prov.objective, prov.vacuous), (2, res.objective, false));

    // the stored scenario replays to the same verdict
    let mut env = Env::new(cfg).unwrap();
    let mut pi = scripted_policy(ScriptedKind::StraightToGoal, 0);
    let ep = run_episode(&mut env, &res.scenario, pi.as_mut()).unwrap();
    assert_eq!(env.context_handle().evaluate(&ep.signal).unwrap(), res.verdict);
}

#[test]
fn search_is_deterministic_and_thread_count_independent() {
    let cfg = EnvConfig::default();
    let env = Env::new(cfg).unwrap();
    let policy = scripted_policy(ScriptedKind::GiveWayReference, 0);
    let run = |parallel| {
        falsify(&crossing_setup(), policy.as_ref(), &cfg, env.context_handle(), &settings(3, parallel), 17, 0).unwrap()
    };
    let (a, b, c) = (run(false), run(false), run(true));
    assert_eq!(a.scenario, b.scenario);
    assert_eq!(a.scenario, c.scenario);
    assert_eq!(a.objective, c.objective);
    assert_eq!(a.simulations, 30);
}

#[test]
fn zero_generations_are_rejected() {
    let cfg = EnvConfig::default();
    let env = Env::new(cfg).unwrap();
    let policy = scripted_policy(ScriptedKind::StraightToGoal, 0);
    assert!(falsify(&far_setup(), policy.as_ref(), &cfg, env.context_handle(), &settings(0, false), 1, 0).is_err());
}

#[test]
fn big_m_separates_vacuous_from_nonvacuous_objectives() {
    let cfg = EnvConfig::default();
    let mut env = Env::new(cfg).unwrap();
    let ctx = env.context_handle().clone();
    let m = BigM::default();
    let (mut vacuous, mut nonvacuous) = (0, 0);
    for (i, s) in generate_test_set(60, 2, &Default::default(), 100, 0.5).unwrap().iter().enumerate() {
        let mut pi = scripted_policy([ScriptedKind::StraightToGoal, ScriptedKind::Random][i % 2], i as u64);
        let ep = run_episode(&mut env, s, pi.as_mut()).unwrap();
        let v = ctx.evaluate(&ep.signal).unwrap();
        let f = falsification_objective(&v, m);
        assert!(f.is_finite());
        if v.vacuous() {
            vacuous += 1;
            assert!(v.rho_out.is_infinite() && f > m.0 / 2.0);
        } else {
            nonvacuous += 1;
            assert!(v.rho_out.is_finite() && f < m.0 / 2.0);
        }
    }
    assert!(vacuous > 0 && nonvacuous > 0);
}

fn trainer(config: &Config, seed: u64) -> PpoTrainer {
    let env = config.env();
    let scale = seatrial::train::observation_scale(&env.limits, env.steps, env.dt);
    PpoTrainer::new(config.ppo(), scale, env.limits, seed)
}

#[test]
fn falsification_rounds_follow_the_step_budget() {
    let config = Config::default();
    let mut settings = config.loop_settings(LoopMode::Falsification, 3);
    settings.total_steps = 10_000;
    settings.falsification.parallel = true;
    let log = run_training_loop(&settings, &mut trainer(&config, 3)).unwrap();
    assert_eq!(log.rounds.len(), 2);
    assert_eq!(log.rounds.iter().map(|r| r.step).collect::<Vec<_>>(), [0, 5000]);
    for r in &log.rounds {
        assert_eq!(r.objectives.len(), 6);
        assert!(r.simulations <= 6 * 100);
    }
    assert_eq!(log.pool.len(), 12);
    assert_eq!(log.updates.iter().map(|u| u.0).collect::<Vec<_>>(), [2048, 4096, 6144, 8192]);
    let last = log.episodes.last().unwrap();
    assert!(last.step <= 10_000);
    let lengths: usize = log.episodes.iter().map(|e| e.length).sum();
    assert_eq!(lengths, last.step);
}

#[test]
fn baseline_pool_keeps_the_newest_scenarios() {
    let config = Config::default();
    let mut settings = config.loop_settings(LoopMode::Baseline, 8);
    settings.total_steps = 50;
    let log = run_training_loop(&settings, &mut trainer(&config, 8)).unwrap();
    assert!(log.rounds.is_empty());
    assert_eq!(log.pool.len(), 100);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let all: Vec<_> = (0..settings.baseline_scenarios)
        .map(|_| random_scenario(&settings.setups, 100, settings.baseline_sigma, &mut rng).unwrap())
        .collect();
    assert_eq!(all.len(), 10_000);
    assert!(log.pool.iter().eq(all[all.len() - 100..].iter()));
}

#[test]
fn adversary_free_mode_uses_no_pool() {
    let config = Config::default();
    let mut settings = config.loop_settings(LoopMode::AdversaryFree, 1);
    settings.total_steps = 300;
    let log = run_training_loop(&settings, &mut trainer(&config, 1)).unwrap();
    assert!(log.rounds.is_empty() && log.pool.is_empty());
    assert!(log.episodes.iter().all(|e| !e.zone_violation && e.reward.colregs == 0.0));
}
