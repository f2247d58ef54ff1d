//! Clipped-surrogate actor-critic with a tanh-squashed Gaussian policy.
//!
//! The actor maps the normalized observation to the mean of a Gaussian over
//! pre-squash actions `u`; the standard deviation is a learned,
//! state-independent vector. The executed action is `tanh(u)` scaled by
//! `(a_max, alpha_max)`. Probability ratios are taken on `u`, where the tanh
//! Jacobian cancels. Actor and critic are separate networks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{ForwardCache, Mlp};
use super::TrainError;
use crate::dynamics::{ControlInput, VesselLimits};
use crate::env::{Observation, Policy, PolicyError, StepContext, OBS_DIM};
use crate::falsification::PolicyTrainer;

pub const ACT_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub adam_eps: f64,
    /// Rollout length between updates.
    pub n_steps: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            adam_eps: 1e-5,
            n_steps: 2048,
            minibatch: 64,
            epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
            hidden: 64,
            log_std_init: 0.0,
        }
    }
}

/// Per-entry divisors applied to raw observations.
pub fn observation_scale(limits: &VesselLimits, steps: usize, dt: f64) -> [f64; OBS_DIM] {
    let ones = Observation {
        v_ego: 1.0,
        theta_ego: 1.0,
        omega_ego: 1.0,
        dist_adversary: 1.0,
        bearing_adversary: 1.0,
        dist_delta_adversary: 1.0,
        dist_goal: 1.0,
        bearing_goal: 1.0,
        steps_remaining: 1.0,
    };
    ones.normalized(limits, steps, dt).map(|x| 1.0 / x)
}

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

fn log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LOG_2PI
        })
        .sum()
}

/// Gaussian actor. With a sampling RNG it explores; without one it plays
/// the mean action.
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub obs_scale: [f64; OBS_DIM],
    pub limits: VesselLimits,
    sampler: Option<(u64, ChaCha8Rng)>,
}

impl GaussianPolicy {
    pub fn new(actor: Mlp, log_std: Vec<f64>, obs_scale: [f64; OBS_DIM], limits: VesselLimits) -> Self {
        Self { actor, log_std, obs_scale, limits, sampler: None }
    }

    pub fn init(cfg: &PpoConfig, obs_scale: [f64; OBS_DIM], limits: VesselLimits, rng: &mut ChaCha8Rng) -> Self {
        let actor = Mlp::new(&[OBS_DIM, cfg.hidden, cfg.hidden, ACT_DIM], 0.01, rng);
        Self::new(actor, vec![cfg.log_std_init; ACT_DIM], obs_scale, limits)
    }

    /// A sampling copy seeded with `seed`.
    pub fn stochastic(&self, seed: u64) -> Self {
        Self { sampler: Some((seed, ChaCha8Rng::seed_from_u64(seed))), ..self.clone() }
    }

    /// A copy that plays the mean action.
    pub fn deterministic(&self) -> Self {
        Self { sampler: None, ..self.clone() }
    }

    pub fn features(&self, obs: &Observation) -> [f64; OBS_DIM] {
        let raw = obs.to_array();
        std::array::from_fn(|i| raw[i] / self.obs_scale[i])
    }

    pub fn mean(&self, features: &[f64]) -> Vec<f64> {
        self.actor.forward(features)
    }

    pub fn squash(&self, u: &[f64]) -> ControlInput {
        ControlInput::from_normalized(u[0].tanh(), u[1].tanh(), &self.limits)
    }
}

impl Policy for GaussianPolicy {
    fn act(&mut self, obs: &Observation, _ctx: &StepContext<'_>) -> Result<ControlInput, PolicyError> {
        let features = self.features(obs);
        let mut u = self.mean(&features);
        if u.iter().any(|x| !x.is_finite()) {
            return Err(PolicyError(format!("non-finite action mean {u:?}")));
        }
        if let Some((_, rng)) = &mut self.sampler {
            for (ui, ls) in u.iter_mut().zip(&self.log_std) {
                let e: f64 = StandardNormal.sample(rng);
                *ui += ls.exp() * e;
            }
        }
        Ok(self.squash(&u))
    }

    fn reset(&mut self) {
        if let Some((seed, rng)) = &mut self.sampler {
            *rng = ChaCha8Rng::seed_from_u64(*seed);
        }
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "gaussian_mlp"
    }
}

#[derive(Debug, Clone)]
struct Adam {
    lr: f64,
    eps: f64,
    beta1: f64,
    beta2: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64, eps: f64) -> Self {
        Self { lr, eps, beta1: 0.9, beta2: 0.999, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let mut i = 0;
        for block in params.iter_mut() {
            for p in block.iter_mut() {
                let g = grad[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                i += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Rollout {
    features: Vec<[f64; OBS_DIM]>,
    u: Vec<[f64; ACT_DIM]>,
    log_prob: Vec<f64>,
    value: Vec<f64>,
    reward: Vec<f64>,
    done: Vec<bool>,
    last_next: Option<[f64; OBS_DIM]>,
}

impl Rollout {
    fn len(&self) -> usize {
        self.reward.len()
    }

    fn clear(&mut self) {
        *self = Rollout::default();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub samples: usize,
}

/// Rollout buffer, networks and optimizer state.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub cfg: PpoConfig,
    policy: GaussianPolicy,
    critic: Mlp,
    adam: Adam,
    rng: ChaCha8Rng,
    buffer: Rollout,
    pending: Option<([f64; OBS_DIM], [f64; ACT_DIM], f64, f64)>,
    steps: usize,
    updates: usize,
}

impl PpoTrainer {
    pub fn new(cfg: PpoConfig, obs_scale: [f64; OBS_DIM], limits: VesselLimits, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::init(&cfg, obs_scale, limits, &mut rng);
        let critic = Mlp::new(&[OBS_DIM, cfg.hidden, cfg.hidden, 1], 1.0, &mut rng);
        let n = policy.actor.params().len() + ACT_DIM + critic.params().len();
        Self {
            adam: Adam::new(n, cfg.learning_rate, cfg.adam_eps),
            cfg,
            policy,
            critic,
            rng,
            buffer: Rollout::default(),
            pending: None,
            steps: 0,
            updates: 0,
        }
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn value(&self, features: &[f64]) -> f64 {
        self.critic.forward(features)[0]
    }

    fn advantages(&self) -> (Vec<f64>, Vec<f64>) {
        let b = &self.buffer;
        let n = b.len();
        let mut next_value = match (b.done.last(), b.last_next) {
            (Some(false), Some(f)) => self.value(&f),
            _ => 0.0,
        };
        let mut adv = vec![0.0; n];
        let mut gae = 0.0;
        for t in (0..n).rev() {
            let live = if b.done[t] { 0.0 } else { 1.0 };
            let delta = b.reward[t] + self.cfg.gamma * next_value * live - b.value[t];
            gae = delta + self.cfg.gamma * self.cfg.gae_lambda * live * gae;
            adv[t] = gae;
            next_value = b.value[t];
        }
        let returns = adv.iter().zip(&b.value).map(|(a, v)| a + v).collect();
        (adv, returns)
    }

    fn minibatch_step(&mut self, idx: &[usize], adv: &[f64], returns: &[f64], stats: &mut UpdateStats) -> Result<(), TrainError> {
        let n = idx.len() as f64;
        let mean_adv = idx.iter().map(|&i| adv[i]).sum::<f64>() / n;
        let std_adv = if idx.len() > 1 {
            (idx.iter().map(|&i| (adv[i] - mean_adv).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            1.0
        };
        let n_actor = self.policy.actor.params().len();
        let n_critic = self.critic.params().len();
        let mut g_actor = vec![0.0; n_actor];
        let mut g_log_std = [0.0; ACT_DIM];
        let mut g_critic = vec![0.0; n_critic];
        let std: Vec<f64> = self.policy.log_std.iter().map(|l| l.exp()).collect();
        let mut cache = ForwardCache::default();
        let clip = self.cfg.clip;

        for &i in idx {
            let x = &self.buffer.features[i];
            let u = &self.buffer.u[i];
            let a = if idx.len() > 1 { (adv[i] - mean_adv) / (std_adv + 1e-8) } else { adv[i] };

            let mean = self.policy.actor.forward_cached(x, &mut cache);
            let logp = log_prob(u, &mean, &self.policy.log_std);
            let log_ratio = logp - self.buffer.log_prob[i];
            let ratio = log_ratio.exp();
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
            let (s1, s2) = (ratio * a, clipped * a);
            stats.policy_loss += -s1.min(s2) / n;
            stats.approx_kl += ((ratio - 1.0) - log_ratio) / n;
            if (ratio - 1.0).abs() > clip {
                stats.clip_fraction += 1.0 / n;
            }
            // d(-min(s1, s2))/d ratio; zero when the clipped branch is active
            let d_ratio = if s1 <= s2 || (ratio - 1.0).abs() <= clip { -a } else { 0.0 };
            let d_logp = d_ratio * ratio / n;
            if d_logp != 0.0 {
                let mut d_mean = [0.0; ACT_DIM];
                for k in 0..ACT_DIM {
                    let z = (u[k] - mean[k]) / std[k];
                    d_mean[k] = d_logp * z / std[k];
                    g_log_std[k] += d_logp * (z * z - 1.0);
                }
                self.policy.actor.backward(&cache, &d_mean, &mut g_actor);
            }
            // entropy of a diagonal Gaussian grows with sum(log_std)
            for g in &mut g_log_std {
                *g -= self.cfg.ent_coef / n;
            }

            let v = self.critic.forward_cached(x, &mut cache)[0];
            let err = v - returns[i];
            stats.value_loss += err * err / n;
            self.critic.backward(&cache, &[2.0 * self.cfg.vf_coef * err / n], &mut g_critic);
        }

        let mut grad: Vec<f64> = Vec::with_capacity(n_actor + ACT_DIM + n_critic);
        grad.extend_from_slice(&g_actor);
        grad.extend_from_slice(&g_log_std);
        grad.extend_from_slice(&g_critic);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(TrainError::NonFinite { what: "gradient", step: self.steps });
        }
        if norm > self.cfg.max_grad_norm {
            let s = self.cfg.max_grad_norm / (norm + 1e-6);
            grad.iter_mut().for_each(|g| *g *= s);
        }
        let mut blocks: [&mut [f64]; 3] =
            [self.policy.actor.params_mut(), &mut self.policy.log_std, self.critic.params_mut()];
        self.adam.step(&mut blocks, &grad);
        Ok(())
    }
}

impl PolicyTrainer for PpoTrainer {
    fn act(&mut self, obs: &Observation, _ctx: &StepContext<'_>) -> Result<ControlInput, TrainError> {
        let features = self.policy.features(obs);
        let mean = self.policy.mean(&features);
        let mut u = [0.0; ACT_DIM];
        for k in 0..ACT_DIM {
            let e: f64 = StandardNormal.sample(&mut self.rng);
            u[k] = mean[k] + self.policy.log_std[k].exp() * e;
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::NonFinite { what: "action", step: self.steps });
        }
        let logp = log_prob(&u, &mean, &self.policy.log_std);
        let value = self.value(&features);
        self.pending = Some((features, u, logp, value));
        Ok(self.policy.squash(&u))
    }

    fn record(&mut self, reward: f64, next: &Observation, terminated: bool, truncated: bool) -> Result<(), TrainError> {
        let (features, u, logp, value) = self.pending.take().ok_or(TrainError::NoPendingAction)?;
        let next_features = self.policy.features(next);
        let mut r = reward;
        if truncated && !terminated {
            // a time limit is not a real terminal state: fold the bootstrap
            // value into the reward
            r += self.cfg.gamma * self.value(&next_features);
        }
        let b = &mut self.buffer;
        b.features.push(features);
        b.u.push(u);
        b.log_prob.push(logp);
        b.value.push(value);
        b.reward.push(r);
        b.done.push(terminated || truncated);
        b.last_next = Some(next_features);
        self.steps += 1;
        Ok(())
    }

    fn update(&mut self) -> Result<UpdateStats, TrainError> {
        let n = self.buffer.len();
        let mut stats = UpdateStats { samples: n, ..UpdateStats::default() };
        if n == 0 {
            return Ok(stats);
        }
        let (adv, returns) = self.advantages();
        let mut order: Vec<usize> = (0..n).collect();
        let mb = self.cfg.minibatch.max(1);
        let mut batches = 0usize;
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            for idx in order.chunks(mb) {
                self.minibatch_step(idx, &adv, &returns, &mut stats)?;
                batches += 1;
            }
        }
        if batches > 0 {
            let b = batches as f64;
            stats.policy_loss /= b;
            stats.value_loss /= b;
            stats.approx_kl /= b;
            stats.clip_fraction /= b;
        }
        if !(stats.policy_loss.is_finite() && stats.value_loss.is_finite()) {
            return Err(TrainError::NonFinite { what: "loss", step: self.steps });
        }
        self.buffer.clear();
        self.updates += 1;
        Ok(stats)
    }

    fn snapshot(&self) -> Box<dyn Policy> {
        Box::new(self.policy.deterministic())
    }

    fn steps(&self) -> usize {
        self.steps
    }
}
