//! (mu/mu_w, lambda) covariance matrix adaptation evolution strategy.
//!
//! Strategy constants follow the standard tutorial defaults:
//!
//! - `mu = floor(lambda / 2)`, weights `w_i ∝ ln((lambda + 1) / 2) - ln i`
//!   normalized to sum 1, `mu_eff = 1 / sum w_i^2`
//! - `c_sigma = (mu_eff + 2) / (n + mu_eff + 5)`
//! - `d_sigma = 1 + 2 max(0, sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma`
//! - `c_c = (4 + mu_eff / n) / (n + 4 + 2 mu_eff / n)`
//! - `c_1 = 2 / ((n + 1.3)^2 + mu_eff)`
//! - `c_mu = min(1 - c_1, 2 (mu_eff - 2 + 1 / mu_eff) / ((n + 2)^2 + mu_eff))`
//!
//! The covariance is re-decomposed every generation. Sampling for
//! generation `g` draws from a ChaCha stream keyed by `(seed, g)`, so a
//! batch depends only on the seed, the generation and the current
//! distribution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

type BoxError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, Error)]
pub enum CmaesError {
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("initial mean has length {got}, expected {expected}")]
    MeanLength { expected: usize, got: usize },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStepSize(f64),
    #[error("population size must be at least 2, got {0}")]
    InvalidPopulation(usize),
    #[error("batch from generation {batch} told to optimizer at generation {state}")]
    StaleBatch { batch: usize, state: usize },
    #[error("expected {expected} fitness values, got {got}")]
    FitnessLength { expected: usize, got: usize },
    #[error("max_generations must be at least 1")]
    NoGenerations,
    #[error("objective failed on {0} consecutive evaluations")]
    Objective(usize, #[source] BoxError),
}

/// Distribution state and strategy constants.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    dim: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    seed: u64,
    generation: usize,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
}

/// One generation of candidates; fitness is lower-is-better.
#[derive(Debug, Clone)]
pub struct CandidateBatch {
    pub generation: usize,
    pub candidates: Vec<DVector<f64>>,
    steps: Vec<DVector<f64>>,
}

impl OptimizerState {
    pub fn new(dim: usize, m0: &[f64], sigma0: f64, lambda: usize, seed: u64) -> Result<Self, CmaesError> {
        if dim == 0 {
            return Err(CmaesError::InvalidDimension);
        }
        if m0.len() != dim {
            return Err(CmaesError::MeanLength { expected: dim, got: m0.len() });
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(CmaesError::InvalidStepSize(sigma0));
        }
        if lambda < 2 {
            return Err(CmaesError::InvalidPopulation(lambda));
        }
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Ok(Self {
            dim,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            seed,
            generation: 0,
            mean: DVector::from_column_slice(m0),
            sigma: sigma0,
            cov: DMatrix::identity(dim, dim),
            basis: DMatrix::identity(dim, dim),
            scales: DVector::from_element(dim, 1.0),
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn mu_eff(&self) -> f64 {
        self.mu_eff
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Smallest eigenvalue of the covariance from the latest decomposition.
    pub fn min_eigenvalue(&self) -> f64 {
        self.scales.iter().map(|d| d * d).fold(f64::INFINITY, f64::min)
    }

    /// Draws `lambda` candidates `m + sigma B D z`.
    pub fn ask(&self) -> CandidateBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.generation as u64);
        let mut candidates = Vec::with_capacity(self.lambda);
        let mut steps = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(&mut rng));
            let y = &self.basis * z.component_mul(&self.scales);
            candidates.push(&self.mean + self.sigma * &y);
            steps.push(y);
        }
        CandidateBatch { generation: self.generation, candidates, steps }
    }

    /// Ranks the batch and updates mean, paths, step size and covariance.
    /// NaN fitness ranks last.
    pub fn tell(&mut self, batch: CandidateBatch, fitness: &[f64]) -> Result<(), CmaesError> {
        if batch.generation != self.generation {
            return Err(CmaesError::StaleBatch { batch: batch.generation, state: self.generation });
        }
        if fitness.len() != self.lambda {
            return Err(CmaesError::FitnessLength { expected: self.lambda, got: fitness.len() });
        }
        let order = rank(fitness);
        let n = self.dim as f64;

        let mut y_w = DVector::zeros(self.dim);
        for (w, &i) in self.weights.iter().zip(&order) {
            y_w.axpy(*w, &batch.steps[i], 1.0);
        }
        self.mean.axpy(self.sigma, &y_w, 1.0);

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let bt_y = self.basis.transpose() * &y_w;
        let inv_sqrt_y = &self.basis * bt_y.component_div(&self.scales);
        let ps_coef = (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt();
        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma + ps_coef * inv_sqrt_y;

        let ps_norm = self.p_sigma.norm();
        let decay = 1.0 - (1.0 - self.c_sigma).powi(2 * (self.generation as i32 + 1));
        let h_sigma = ps_norm / decay.sqrt() < (1.4 + 2.0 / (n + 1.0)) * self.chi_n;
        let pc_coef = (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt();
        self.p_c = (1.0 - self.c_c) * &self.p_c;
        if h_sigma {
            self.p_c.axpy(pc_coef, &y_w, 1.0);
        }

        let delta_h = if h_sigma { 0.0 } else { self.c_c * (2.0 - self.c_c) };
        let keep = 1.0 + self.c_1 * delta_h - self.c_1 - self.c_mu;
        let mut cov = keep * &self.cov;
        cov.ger(self.c_1, &self.p_c, &self.p_c, 1.0);
        for (w, &i) in self.weights.iter().zip(&order) {
            let y = &batch.steps[i];
            cov.ger(self.c_mu * w, y, y, 1.0);
        }
        self.cov = (&cov + cov.transpose()) * 0.5;

        self.sigma *= ((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        self.decompose();
        self.generation += 1;
        Ok(())
    }

    fn decompose(&mut self) {
        let eig = SymmetricEigen::new(self.cov.clone());
        // guard against round-off pushing tiny eigenvalues negative
        let floor = 1e-300;
        self.scales = eig.eigenvalues.map(|v| v.max(floor).sqrt());
        self.basis = eig.eigenvectors;
    }
}

/// Candidate indices sorted best-first; NaN last, ties by index.
fn rank(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (fitness[a], fitness[b]);
        fa.is_nan().cmp(&fb.is_nan()).then(fa.partial_cmp(&fb).unwrap_or(std::cmp::Ordering::Equal))
    });
    order
}

/// Per-generation record of a [`minimize`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub batch_best: f64,
    pub best_so_far: f64,
    pub sigma: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub best: DVector<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
    pub evaluations: usize,
    pub stopped_early: bool,
}

/// Runs ask/tell until `max_generations` or until some candidate scores
/// strictly below `early_stop`. Failed evaluations count as NaN; `lambda`
/// failures in a row abort with the last error.
///
/// With `parallel`, candidates of one generation are evaluated on the rayon
/// pool; results are kept in candidate order so the run is identical to the
/// sequential one.
pub fn minimize<F, E>(
    objective: F,
    state: &mut OptimizerState,
    max_generations: usize,
    early_stop: f64,
    parallel: bool,
) -> Result<MinimizeResult, CmaesError>
where
    F: Fn(&[f64]) -> Result<f64, E> + Sync,
    E: Into<BoxError> + Send,
{
    if max_generations == 0 {
        return Err(CmaesError::NoGenerations);
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut history = Vec::new();
    let mut evaluations = 0;
    let mut consecutive_failures = 0;
    let mut stopped_early = false;

    for _ in 0..max_generations {
        let batch = state.ask();
        let results: Vec<Result<f64, E>> = if parallel {
            batch.candidates.par_iter().map(|c| objective(c.as_slice())).collect()
        } else {
            batch.candidates.iter().map(|c| objective(c.as_slice())).collect()
        };
        let mut fitness = Vec::with_capacity(results.len());
        for r in results {
            evaluations += 1;
            match r {
                Ok(f) => {
                    consecutive_failures = 0;
                    fitness.push(f);
                }
                Err(e) => {
                    consecutive_failures += 1;
                    if consecutive_failures >= state.lambda() {
                        return Err(CmaesError::Objective(consecutive_failures, e.into()));
                    }
                    fitness.push(f64::NAN);
                }
            }
        }
        let order = rank(&fitness);
        let top = order[0];
        let batch_best = fitness[top];
        if !batch_best.is_nan() && best.as_ref().is_none_or(|(_, f)| batch_best < *f) {
            best = Some((batch.candidates[top].clone(), batch_best));
        }
        let generation = batch.generation;
        state.tell(batch, &fitness)?;
        let best_so_far = best.as_ref().map_or(f64::NAN, |(_, f)| *f);
        history.push(GenerationRecord { generation, batch_best, best_so_far, sigma: state.sigma(), evaluations });
        if best_so_far < early_stop {
            stopped_early = true;
            break;
        }
    }

    let (best, best_fitness) = best.unwrap_or_else(|| (state.mean().clone(), f64::NAN));
    Ok(MinimizeResult { best, best_fitness, history, evaluations, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn sphere(x: &[f64]) -> Result<f64, Infallible> {
        Ok(x.iter().map(|v| v * v).sum())
    }

    fn rosenbrock(x: &[f64]) -> Result<f64, Infallible> {
        Ok(x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum())
    }

    #[test]
    fn init_checks_preconditions() {
        let s = OptimizerState::new(200, &[0.0; 200], 0.05, 10, 1).unwrap();
        assert_eq!(s.mean().len(), 200);
        assert!(s.mean().iter().all(|&m| m == 0.0));
        assert_eq!(s.mu(), 5);
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(OptimizerState::new(1, &[0.0], 0.5, 4, 1).is_ok());
        assert!(matches!(OptimizerState::new(3, &[0.0; 3], 0.5, 1, 1), Err(CmaesError::InvalidPopulation(1))));
        assert!(OptimizerState::new(0, &[], 0.5, 4, 1).is_err());
        assert!(OptimizerState::new(2, &[0.0; 2], 0.0, 4, 1).is_err());
        assert!(OptimizerState::new(2, &[0.0; 3], 0.5, 4, 1).is_err());
    }

    #[test]
    fn ask_is_deterministic() {
        let s = OptimizerState::new(5, &[0.0; 5], 0.3, 8, 42).unwrap();
        let a = s.ask();
        let b = s.ask();
        assert_eq!(a.candidates, b.candidates);
        let other = OptimizerState::new(5, &[0.0; 5], 0.3, 8, 43).unwrap().ask();
        assert_ne!(a.candidates, other.candidates);
    }

    #[test]
    fn tiny_sigma_collapses_onto_mean() {
        let m = [1.0, -2.0, 3.0];
        let s = OptimizerState::new(3, &m, 1e-300, 6, 0).unwrap();
        for c in s.ask().candidates {
            for (x, y) in c.iter().zip(&m) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn sample_mean_matches_distribution_mean() {
        let m = [0.5, -1.0, 2.0, 0.0];
        let sigma = 0.7;
        let s = OptimizerState::new(4, &m, sigma, 10_000, 7).unwrap();
        let batch = s.ask();
        let n = batch.candidates.len() as f64;
        for (i, mi) in m.iter().enumerate() {
            let mean = batch.candidates.iter().map(|c| c[i]).sum::<f64>() / n;
            assert!((mean - mi).abs() < 3.0 * sigma / n.sqrt(), "coordinate {i}: {mean}");
        }
    }

    #[test]
    fn equal_fitness_with_coincident_candidates_keeps_mean() {
        let m = [0.25, 0.5];
        let mut s = OptimizerState::new(2, &m, 1e-300, 6, 3).unwrap();
        let batch = s.ask();
        s.tell(batch, &[1.0; 6]).unwrap();
        assert_eq!(s.mean().as_slice(), &m);
    }

    #[test]
    fn tell_rejects_mismatched_batches() {
        let mut s = OptimizerState::new(2, &[0.0; 2], 0.5, 4, 3).unwrap();
        let batch = s.ask();
        assert!(matches!(s.tell(batch.clone(), &[1.0; 3]), Err(CmaesError::FitnessLength { .. })));
        s.tell(batch.clone(), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(s.tell(batch, &[1.0; 4]), Err(CmaesError::StaleBatch { .. })));
    }

    #[test]
    fn nan_ranks_last() {
        assert_eq!(rank(&[3.0, f64::NAN, 1.0, 2.0]), vec![2, 3, 0, 1]);
    }

    #[test]
    fn sphere_converges() {
        let mut s = OptimizerState::new(10, &[1.0; 10], 0.5, 10, 11).unwrap();
        let r = minimize(sphere, &mut s, 150, 1e-3, false).unwrap();
        assert!(r.best_fitness < 1e-3, "best {}", r.best_fitness);
        assert!(r.stopped_early);
        for w in r.history.windows(2) {
            assert!(w[1].best_so_far <= w[0].best_so_far);
        }
    }

    #[test]
    fn rosenbrock_gets_below_one() {
        let mut s = OptimizerState::new(5, &[0.0; 5], 0.5, 10, 5).unwrap();
        let r = minimize(rosenbrock, &mut s, 600, 1.0, false).unwrap();
        assert!(r.best_fitness < 1.0, "best {}", r.best_fitness);
    }

    #[test]
    fn early_stop_at_first_generation() {
        let mut s = OptimizerState::new(3, &[0.0; 3], 0.1, 10, 5).unwrap();
        let r = minimize(|_: &[f64]| Ok::<_, Infallible>(-1.0), &mut s, 50, 0.0, false).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.evaluations, 10);
        assert_eq!(r.best_fitness, -1.0);
    }

    #[test]
    fn constant_objective_runs_to_cap() {
        let mut s = OptimizerState::new(3, &[0.0; 3], 0.1, 10, 5).unwrap();
        let r = minimize(|_: &[f64]| Ok::<_, Infallible>(4.0), &mut s, 5, 0.0, false).unwrap();
        assert_eq!(r.best_fitness, 4.0);
        assert_eq!(r.evaluations, 50);
        assert!(!r.stopped_early);
    }

    #[test]
    fn persistent_failures_propagate() {
        #[derive(Debug, thiserror::Error)]
        #[error("boom")]
        struct Boom;
        let mut s = OptimizerState::new(3, &[0.0; 3], 0.1, 4, 5).unwrap();
        let r = minimize(|_: &[f64]| Err::<f64, _>(Boom), &mut s, 5, 0.0, false);
        assert!(matches!(r, Err(CmaesError::Objective(4, _))));

        // isolated failures are tolerated
        let mut s = OptimizerState::new(3, &[0.0; 3], 0.1, 4, 5).unwrap();
        let r = minimize(
            |x: &[f64]| if x[0] > 0.0 { Err(Boom) } else { Ok(x[0]) },
            &mut s,
            3,
            f64::NEG_INFINITY,
            false,
        );
        assert!(r.is_ok());
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut a = OptimizerState::new(6, &[1.0; 6], 0.5, 10, 9).unwrap();
        let mut b = a.clone();
        let ra = minimize(sphere, &mut a, 20, 0.0, false).unwrap();
        let rb = minimize(sphere, &mut b, 20, 0.0, true).unwrap();
        assert_eq!(ra.history, rb.history);
        assert_eq!(ra.best, rb.best);
    }

    #[test]
    fn covariance_stays_positive_definite() {
        use rand::Rng;
        let mut noise = ChaCha8Rng::seed_from_u64(99);
        let mut s = OptimizerState::new(8, &[0.0; 8], 0.3, 10, 2).unwrap();
        for _ in 0..1000 {
            let batch = s.ask();
            let fitness: Vec<f64> = batch
                .candidates
                .iter()
                .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() + noise.random::<f64>())
                .collect();
            s.tell(batch, &fitness).unwrap();
            let c = s.covariance();
            let eig = SymmetricEigen::new(c.clone()).eigenvalues;
            assert!(eig.min() > 0.0, "eigenvalues {eig}");
            assert!((c - c.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn constant_shift_leaves_samples_unchanged() {
        let mut a = OptimizerState::new(4, &[1.0; 4], 0.5, 8, 9).unwrap();
        let mut b = a.clone();
        for _ in 0..30 {
            let (ba, bb) = (a.ask(), b.ask());
            assert_eq!(ba.candidates, bb.candidates);
            let fa: Vec<f64> = ba.candidates.iter().map(|c| sphere(c.as_slice()).unwrap()).collect();
            let fb: Vec<f64> = fa.iter().map(|f| f + 1000.0).collect();
            a.tell(ba, &fa).unwrap();
            b.tell(bb, &fb).unwrap();
        }
    }
}
