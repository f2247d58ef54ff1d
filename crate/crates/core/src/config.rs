//! Run configuration.
//!
//! A TOML file with one table per parameter group. Every key is optional and
//! falls back to the default below; unknown keys are rejected. Angles are
//! given in degrees, everything else in SI units.
//!
//! ```toml
//! [simulation]
//! dt = 10.0
//! steps = 100
//!
//! [traffic_rules]
//! delta_deg = 20.0
//!
//! [initial_state_and_goal.crossing]
//! theta_deg = [140.0, 220.0]
//!
//! [reinforcement_learning.ppo]
//! learning_rate = 3e-4
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::VesselLimits;
use crate::env::{EnvConfig, RewardWeights};
use crate::falsification::search::FalsificationSettings;
use crate::falsification::training::{LoopMode, LoopSettings};
use crate::falsification::{BigM, GoalBox, Range, SetupDistribution, StateBox};
use crate::rules::{RuleParameters, SectorBounds};
use crate::train::PpoConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulation {
    /// Time step, seconds.
    pub dt: f64,
    /// Episode length in steps.
    pub steps: usize,
}

impl Default for Simulation {
    fn default() -> Self {
        Self { dt: 10.0, steps: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemDynamics {
    pub v_min: f64,
    pub v_max: f64,
    /// Lower edge of the unpenalized speed band.
    pub v_low: f64,
    pub v_high: f64,
    pub a_max: f64,
    pub omega_max: f64,
    pub alpha_max: f64,
}

impl Default for SystemDynamics {
    fn default() -> Self {
        Self { v_min: 2.5, v_max: 15.0, v_low: 5.0, v_high: 10.0, a_max: 0.12, omega_max: 0.015, alpha_max: 0.00025 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorDegrees {
    pub beta_lo_deg: f64,
    pub beta_hi_deg: f64,
    pub gamma_lo_deg: f64,
    pub gamma_hi_deg: f64,
}

impl SectorDegrees {
    fn bounds(&self) -> SectorBounds {
        SectorBounds::from_degrees(self.beta_lo_deg, self.beta_hi_deg, self.gamma_lo_deg, self.gamma_hi_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficRules {
    pub t_m: f64,
    pub t_p: f64,
    pub t_h: f64,
    pub r_zone: f64,
    pub delta_deg: f64,
    pub crossing: SectorDegrees,
    pub head_on: SectorDegrees,
    pub overtake: SectorDegrees,
}

impl Default for TrafficRules {
    fn default() -> Self {
        Self {
            t_m: 70.0,
            t_p: 50.0,
            t_h: 420.0,
            r_zone: 450.0,
            delta_deg: 20.0,
            crossing: SectorDegrees { beta_lo_deg: -112.5, beta_hi_deg: -10.0, gamma_lo_deg: 45.0, gamma_hi_deg: 180.0 },
            head_on: SectorDegrees { beta_lo_deg: -10.0, beta_hi_deg: 10.0, gamma_lo_deg: 170.0, gamma_hi_deg: 190.0 },
            overtake: SectorDegrees { beta_lo_deg: -45.0, beta_hi_deg: 45.0, gamma_lo_deg: -67.5, gamma_hi_deg: 67.5 },
        }
    }
}

/// Uniform box over initial states; a degenerate range `[x, x]` is a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBoxConfig {
    pub px: Range,
    pub py: Range,
    pub theta_deg: Range,
    pub v: Range,
    pub omega: Range,
}

impl StateBoxConfig {
    fn to_box(self) -> StateBox {
        StateBox {
            px: self.px,
            py: self.py,
            theta: self.theta_deg.map(f64::to_radians),
            v: self.v,
            omega: self.omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalBoxConfig {
    pub px: Range,
    pub py: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialStateAndGoal {
    pub ego: StateBoxConfig,
    pub crossing: StateBoxConfig,
    pub head_on: StateBoxConfig,
    pub overtake: StateBoxConfig,
    pub goal: GoalBoxConfig,
}

impl Default for InitialStateAndGoal {
    fn default() -> Self {
        Self {
            ego: StateBoxConfig {
                px: [-1500.0, 1500.0],
                py: [-5000.0, -3500.0],
                theta_deg: [80.0, 100.0],
                v: [7.5, 7.5],
                omega: [0.0, 0.0],
            },
            crossing: StateBoxConfig {
                px: [2500.0, 4000.0],
                py: [-2500.0, 500.0],
                theta_deg: [140.0, 220.0],
                v: [5.0, 10.0],
                omega: [0.0, 0.0],
            },
            head_on: StateBoxConfig {
                px: [-1500.0, 500.0],
                py: [1500.0, 3000.0],
                theta_deg: [260.0, 280.0],
                v: [5.0, 10.0],
                omega: [0.0, 0.0],
            },
            overtake: StateBoxConfig {
                px: [-1500.0, 1500.0],
                py: [-2000.0, -500.0],
                theta_deg: [80.0, 100.0],
                v: [2.5, 5.0],
                omega: [0.0, 0.0],
            },
            goal: GoalBoxConfig { px: [-1500.0, 1500.0], py: [1500.0, 3000.0] },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Falsification {
    /// Every entry of the initial CMA-ES mean.
    pub mean0: f64,
    pub sigma0: f64,
    /// Environment steps between falsification rounds.
    pub f_falsification: usize,
    /// Setups falsified per round.
    pub n_samples: usize,
    pub n_generation: usize,
    pub lambda: usize,
    pub pool_size: usize,
    pub big_m: f64,
    /// Random scenarios of the baseline pool and test sets.
    pub baseline_scenarios: usize,
    pub baseline_sigma: f64,
    pub parallel: bool,
}

impl Default for Falsification {
    fn default() -> Self {
        Self {
            mean0: 0.0,
            sigma0: 0.05,
            f_falsification: 5000,
            n_samples: 6,
            n_generation: 10,
            lambda: 10,
            pool_size: 100,
            big_m: 1e6,
            baseline_scenarios: 10_000,
            baseline_sigma: 0.05,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReinforcementLearning {
    pub c_goal_progress: f64,
    pub c_v: f64,
    pub c_omega: f64,
    pub c_goal: f64,
    pub c_colregs: f64,
    pub c_zone: f64,
    pub d_goal: f64,
    /// Training budget `T` in environment steps.
    pub total_steps: usize,
    /// Environment steps between trainer updates.
    pub f_update: usize,
    pub ppo: PpoConfig,
}

impl Default for ReinforcementLearning {
    fn default() -> Self {
        let ppo = PpoConfig::default();
        Self {
            c_goal_progress: 0.0005,
            c_v: -0.25,
            c_omega: -1.0,
            c_goal: 3.0,
            c_colregs: 3.0,
            c_zone: -3.0,
            d_goal: 250.0,
            total_steps: 5_000_000,
            f_update: ppo.n_steps,
            ppo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub simulation: Simulation,
    pub system_dynamics: SystemDynamics,
    pub traffic_rules: TrafficRules,
    pub initial_state_and_goal: InitialStateAndGoal,
    pub falsification: Falsification,
    pub reinforcement_learning: ReinforcementLearning,
}

/// Where a default comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Fixed by the reference parameter set.
    Reference,
    /// Chosen here where the reference set leaves a gap.
    Chosen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEntry {
    pub key: String,
    /// Scalars have one value, ranges two.
    pub value: Vec<f64>,
    pub provenance: Provenance,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let s = &self.simulation;
        if !(s.dt > 0.0) || s.steps == 0 {
            return invalid(format!("simulation needs dt > 0 and steps > 0, got dt = {}, steps = {}", s.dt, s.steps));
        }
        let d = &self.system_dynamics;
        VesselLimits::new(d.v_min, d.v_max, d.omega_max, d.a_max, d.alpha_max)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(d.v_low <= d.v_high) {
            return invalid(format!("v_low = {} exceeds v_high = {}", d.v_low, d.v_high));
        }
        self.rule_parameters().validate(s.dt).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let init = &self.initial_state_and_goal;
        for (name, b) in [("ego", &init.ego), ("crossing", &init.crossing), ("head_on", &init.head_on), ("overtake", &init.overtake)] {
            for (field, r) in [("px", b.px), ("py", b.py), ("theta_deg", b.theta_deg), ("v", b.v), ("omega", b.omega)] {
                if !(r[0] <= r[1]) {
                    return invalid(format!("initial_state_and_goal.{name}.{field} = {r:?} is not an interval"));
                }
            }
        }
        for (field, r) in [("px", init.goal.px), ("py", init.goal.py)] {
            if !(r[0] <= r[1]) {
                return invalid(format!("initial_state_and_goal.goal.{field} = {r:?} is not an interval"));
            }
        }
        let f = &self.falsification;
        if f.lambda < 2 || f.n_generation == 0 || f.pool_size == 0 || f.f_falsification == 0 {
            return invalid("falsification needs lambda >= 2 and positive n_generation, pool_size, f_falsification".into());
        }
        if !(f.sigma0 > 0.0) || !(f.baseline_sigma > 0.0) || !(f.big_m > 0.0) {
            return invalid("falsification sigma0, baseline_sigma and big_m must be positive".into());
        }
        let rl = &self.reinforcement_learning;
        if rl.f_update == 0 || rl.ppo.minibatch == 0 || rl.ppo.epochs == 0 || rl.ppo.hidden == 0 {
            return invalid("reinforcement_learning needs positive f_update, minibatch, epochs and hidden".into());
        }
        Ok(())
    }

    pub fn limits(&self) -> VesselLimits {
        let d = &self.system_dynamics;
        VesselLimits { v_min: d.v_min, v_max: d.v_max, omega_max: d.omega_max, a_max: d.a_max, alpha_max: d.alpha_max }
    }

    pub fn rule_parameters(&self) -> RuleParameters {
        let r = &self.traffic_rules;
        RuleParameters {
            t_p: r.t_p,
            t_m: r.t_m,
            t_h: r.t_h,
            r_zone: r.r_zone,
            delta: r.delta_deg.to_radians(),
            crossing: r.crossing.bounds(),
            head_on: r.head_on.bounds(),
            overtake: r.overtake.bounds(),
        }
    }

    pub fn setup_distribution(&self) -> SetupDistribution {
        let i = &self.initial_state_and_goal;
        SetupDistribution {
            ego: i.ego.to_box(),
            crossing: i.crossing.to_box(),
            head_on: i.head_on.to_box(),
            overtake: i.overtake.to_box(),
            goal: GoalBox { px: i.goal.px, py: i.goal.py },
        }
    }

    pub fn reward_weights(&self) -> RewardWeights {
        let rl = &self.reinforcement_learning;
        RewardWeights {
            c_goal_progress: rl.c_goal_progress,
            c_v: rl.c_v,
            c_omega: rl.c_omega,
            c_colregs: rl.c_colregs,
            c_goal: rl.c_goal,
            c_zone: rl.c_zone,
            v_low: self.system_dynamics.v_low,
            v_high: self.system_dynamics.v_high,
            d_goal: rl.d_goal,
            r_zone: self.traffic_rules.r_zone,
        }
    }

    pub fn ppo(&self) -> PpoConfig {
        self.reinforcement_learning.ppo
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            dt: self.simulation.dt,
            steps: self.simulation.steps,
            limits: self.limits(),
            rules: self.rule_parameters(),
            rewards: self.reward_weights(),
            adversary: true,
            monitor: true,
        }
    }

    pub fn falsification_settings(&self) -> FalsificationSettings {
        let f = &self.falsification;
        FalsificationSettings {
            n_generation: f.n_generation,
            lambda: f.lambda,
            sigma0: f.sigma0,
            mean0: f.mean0,
            big_m: BigM(f.big_m),
            parallel: f.parallel,
        }
    }

    pub fn loop_settings(&self, mode: LoopMode, seed: u64) -> LoopSettings {
        let f = &self.falsification;
        LoopSettings {
            mode,
            total_steps: self.reinforcement_learning.total_steps,
            f_falsification: f.f_falsification,
            f_update: self.reinforcement_learning.f_update,
            n_samples: f.n_samples,
            pool_size: f.pool_size,
            baseline_scenarios: f.baseline_scenarios,
            baseline_sigma: f.baseline_sigma,
            falsification: self.falsification_settings(),
            setups: self.setup_distribution(),
            env: self.env(),
            seed,
        }
    }

    /// Every parameter with its dotted key and where its default comes from.
    pub fn parameters(&self) -> Vec<ParameterEntry> {
        use Provenance::{Chosen as A, Reference as P};
        let e = |key: &str, value: &[f64], provenance| ParameterEntry { key: key.to_string(), value: value.to_vec(), provenance };
        let (s, d, r, f, rl) = (
            &self.simulation,
            &self.system_dynamics,
            &self.traffic_rules,
            &self.falsification,
            &self.reinforcement_learning,
        );
        let i = &self.initial_state_and_goal;
        let mut out = vec![
            e("simulation.dt", &[s.dt], P),
            e("simulation.steps", &[s.steps as f64], P),
            e("system_dynamics.v_min", &[d.v_min], P),
            e("system_dynamics.v_max", &[d.v_max], P),
            e("system_dynamics.v_low", &[d.v_low], P),
            e("system_dynamics.v_high", &[d.v_high], P),
            e("system_dynamics.a_max", &[d.a_max], P),
            e("system_dynamics.omega_max", &[d.omega_max], P),
            e("system_dynamics.alpha_max", &[d.alpha_max], P),
            e("traffic_rules.t_m", &[r.t_m], P),
            e("traffic_rules.t_p", &[r.t_p], P),
            e("traffic_rules.t_h", &[r.t_h], P),
            e("traffic_rules.r_zone", &[r.r_zone], P),
            e("traffic_rules.delta_deg", &[r.delta_deg], P),
        ];
        for (key, sec) in [
            ("traffic_rules.crossing", &r.crossing),
            ("traffic_rules.head_on", &r.head_on),
            ("traffic_rules.overtake", &r.overtake),
        ] {
            let v = [sec.beta_lo_deg, sec.beta_hi_deg, sec.gamma_lo_deg, sec.gamma_hi_deg];
            out.push(e(key, &v, A));
        }
        for (name, b) in [("ego", &i.ego), ("crossing", &i.crossing), ("head_on", &i.head_on), ("overtake", &i.overtake)] {
            for (field, v) in [("px", b.px), ("py", b.py), ("theta_deg", b.theta_deg), ("v", b.v), ("omega", b.omega)] {
                out.push(e(&format!("initial_state_and_goal.{name}.{field}"), &v, P));
            }
        }
        out.push(e("initial_state_and_goal.goal.px", &i.goal.px, P));
        out.push(e("initial_state_and_goal.goal.py", &i.goal.py, P));
        out.extend([
            e("falsification.mean0", &[f.mean0], P),
            e("falsification.sigma0", &[f.sigma0], P),
            e("falsification.f_falsification", &[f.f_falsification as f64], P),
            e("falsification.n_samples", &[f.n_samples as f64], P),
            e("falsification.n_generation", &[f.n_generation as f64], P),
            e("falsification.lambda", &[f.lambda as f64], P),
            e("falsification.pool_size", &[f.pool_size as f64], P),
            e("falsification.big_m", &[f.big_m], A),
            e("falsification.baseline_scenarios", &[f.baseline_scenarios as f64], P),
            e("falsification.baseline_sigma", &[f.baseline_sigma], P),
            e("reinforcement_learning.c_goal_progress", &[rl.c_goal_progress], P),
            e("reinforcement_learning.c_v", &[rl.c_v], P),
            e("reinforcement_learning.c_omega", &[rl.c_omega], P),
            e("reinforcement_learning.c_goal", &[rl.c_goal], P),
            e("reinforcement_learning.c_colregs", &[rl.c_colregs], P),
            e("reinforcement_learning.c_zone", &[rl.c_zone], P),
            e("reinforcement_learning.d_goal", &[rl.d_goal], P),
            e("reinforcement_learning.total_steps", &[rl.total_steps as f64], P),
            e("reinforcement_learning.f_update", &[rl.f_update as f64], A),
        ]);
        let p = &rl.ppo;
        out.extend([
            e("reinforcement_learning.ppo.learning_rate", &[p.learning_rate], A),
            e("reinforcement_learning.ppo.n_steps", &[p.n_steps as f64], A),
            e("reinforcement_learning.ppo.minibatch", &[p.minibatch as f64], A),
            e("reinforcement_learning.ppo.epochs", &[p.epochs as f64], A),
            e("reinforcement_learning.ppo.gamma", &[p.gamma], A),
            e("reinforcement_learning.ppo.gae_lambda", &[p.gae_lambda], A),
            e("reinforcement_learning.ppo.clip", &[p.clip], A),
            e("reinforcement_learning.ppo.hidden", &[p.hidden as f64], P),
        ]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = Config::from_toml("[simulation]\nsteps = 50\n[traffic_rules]\ndelta_deg = 30.0\n").unwrap();
        assert_eq!(cfg.simulation.steps, 50);
        assert_eq!(cfg.simulation.dt, 10.0);
        assert!((cfg.rule_parameters().delta - 30f64.to_radians()).abs() < 1e-15);
        assert_eq!(cfg.traffic_rules.t_h, 420.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Config::from_toml("[simulation]\nsteps = 50\nfoo = 1\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(Config::from_toml("[nonsense]\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(Config::from_toml("[reinforcement_learning.ppo]\nlr = 1.0\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(matches!(Config::from_toml("[simulation]\ndt = 0.0\n"), Err(ConfigError::Invalid(_))));
        // t_p must be a multiple of dt
        assert!(matches!(Config::from_toml("[traffic_rules]\nt_p = 55.0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::from_toml("[falsification]\nlambda = 1\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            Config::from_toml("[initial_state_and_goal.goal]\npx = [1.0, 0.0]\npy = [0.0, 1.0]\n"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::default();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Config::default();
        let mut b = a;
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.falsification.sigma0 = 0.06;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn converters_match_module_defaults() {
        let cfg = Config::default();
        assert_eq!(cfg.limits(), VesselLimits::default());
        assert_eq!(cfg.reward_weights(), RewardWeights::default());
        assert_eq!(cfg.ppo(), PpoConfig::default());
        assert_eq!(cfg.falsification_settings(), FalsificationSettings::default());
        let (a, b) = (cfg.rule_parameters(), RuleParameters::default());
        assert_eq!((a.t_p, a.t_m, a.t_h, a.r_zone), (b.t_p, b.t_m, b.t_h, b.r_zone));
        assert!((a.delta - b.delta).abs() < 1e-15);
        for (x, y) in [(a.crossing, b.crossing), (a.head_on, b.head_on), (a.overtake, b.overtake)] {
            for (p, q) in [(x.beta_lo, y.beta_lo), (x.beta_hi, y.beta_hi), (x.gamma_lo, y.gamma_lo), (x.gamma_hi, y.gamma_hi)] {
                assert!((p - q).abs() < 1e-15);
            }
        }
        let (s, t) = (cfg.setup_distribution(), SetupDistribution::default());
        for (x, y) in [(s.ego, t.ego), (s.crossing, t.crossing), (s.head_on, t.head_on), (s.overtake, t.overtake)] {
            assert_eq!((x.px, x.py, x.v, x.omega), (y.px, y.py, y.v, y.omega));
            assert!((x.theta[0] - y.theta[0]).abs() < 1e-15 && (x.theta[1] - y.theta[1]).abs() < 1e-15);
        }
        assert_eq!(s.goal, t.goal);
        let env = cfg.env();
        assert_eq!((env.dt, env.steps), (10.0, 100));
    }

    #[test]
    fn parameter_keys_are_unique() {
        let params = Config::default().parameters();
        let mut keys: Vec<_> = params.iter().map(|p| p.key.as_str()).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), params.len());
    }
}
