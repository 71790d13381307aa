//! Augmented Random Search (V-1t): antithetic random directions, top-b
//! selection by best-of-pair return and a step scaled by the standard
//! deviation of the selected returns. No state normalization.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::GaitName;

/// Below this the selected returns are considered flat and the update is skipped.
pub const SIGMA_EPSILON: f64 = 1e-12;
/// Consecutive skipped updates after which training aborts.
pub const MAX_DEGENERATE_STREAK: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArsError {
    #[error("invalid ARS configuration: {0}")]
    InvalidConfig(String),
    #[error("selected returns have standard deviation {sigma:.3e}; update skipped")]
    DegenerateSigma { sigma: f64 },
    #[error("training aborted at iteration {iteration}: {streak} consecutive degenerate updates")]
    Aborted { iteration: usize, streak: usize },
    #[error("episode diverged: {0}")]
    EpisodeDiverged(String),
}

/// Scores a parameter matrix. `env_seed` fixes the episode's initial conditions.
pub trait Objective: Sync {
    fn evaluate(&self, theta: &DMatrix<f64>, env_seed: u64) -> Result<f64, ArsError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArsConfig {
    pub step_size_beta: f64,
    pub noise_nu: f64,
    pub num_directions: usize,
    pub top_directions: usize,
    pub iterations: usize,
    pub seed: u64,
    pub workers: usize,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
}

impl Default for ArsConfig {
    fn default() -> Self {
        Self {
            step_size_beta: 0.09,
            noise_nu: 0.03,
            num_directions: 16,
            top_directions: 8,
            iterations: 40,
            seed: 0,
            workers: 4,
            checkpoint_every: 0,
        }
    }
}

impl ArsConfig {
    /// Defaults with the step size and noise tuned for `gait`.
    pub fn for_gait(gait: GaitName) -> Self {
        let (step_size_beta, noise_nu) = match gait {
            GaitName::ForwardTrot => (0.09, 0.03),
            GaitName::BackwardTrot => (0.1, 0.03),
            GaitName::SideStep => (0.1, 0.03),
            GaitName::Turn => (0.1, 0.05),
        };
        Self {
            step_size_beta,
            noise_nu,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ArsError> {
        let fail = |m: &str| Err(ArsError::InvalidConfig(m.into()));
        if !(self.step_size_beta > 0.0 && self.step_size_beta.is_finite()) {
            return fail("step size must be positive");
        }
        if !(self.noise_nu > 0.0 && self.noise_nu.is_finite()) {
            return fail("noise must be positive");
        }
        if self.num_directions == 0 || self.iterations == 0 || self.workers == 0 {
            return fail("directions, iterations and workers must be positive");
        }
        if self.top_directions == 0 || self.top_directions > self.num_directions {
            return fail("top directions must lie in [1, num_directions]");
        }
        Ok(())
    }
}

/// SplitMix64 finalizer folded over `parts`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Environment seed shared by both rollouts of direction `direction` at `iteration`.
pub fn direction_env_seed(seed: u64, iteration: usize, direction: usize) -> u64 {
    derive_seed(&[seed, iteration as u64, direction as u64, 1])
}

/// Environment seed of the unperturbed evaluation rollouts.
pub fn evaluation_seed(seed: u64) -> u64 {
    derive_seed(&[seed, u64::MAX, 2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionBatch {
    pub deltas: Vec<DMatrix<f64>>,
}

/// `N` standard-normal matrices of the given shape, reproducible from
/// `(seed, iteration)`.
pub fn sample_directions(
    config: &ArsConfig,
    iteration: usize,
    shape: (usize, usize),
) -> DirectionBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, iteration as u64, 0]));
    let deltas = (0..config.num_directions)
        .map(|_| DMatrix::from_fn(shape.0, shape.1, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    DirectionBatch { deltas }
}

/// Returns of `θ + νδ` and `θ − νδ` on the same environment seed.
pub fn evaluate_pair<O: Objective + ?Sized>(
    objective: &O,
    theta: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    nu: f64,
    env_seed: u64,
) -> Result<(f64, f64), ArsError> {
    let plus = objective.evaluate(&(theta + delta * nu), env_seed)?;
    let minus = objective.evaluate(&(theta - delta * nu), env_seed)?;
    Ok((plus, minus))
}

/// Indices of the `b` pairs with the largest `max(R⁺, R⁻)`, best first;
/// ties go to the lower index.
pub fn select_top(returns: &[(f64, f64)], b: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..returns.len()).collect();
    let key = |i: usize| returns[i].0.max(returns[i].1);
    idx.sort_by(|&a, &c| key(c).total_cmp(&key(a)).then(a.cmp(&c)));
    idx.truncate(b);
    idx
}

/// Population standard deviation of both returns of every selected pair.
pub fn selected_sigma(returns: &[(f64, f64)], selected: &[usize]) -> f64 {
    let values: Vec<f64> = selected
        .iter()
        .flat_map(|&i| [returns[i].0, returns[i].1])
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `θ + β / (b σ_R) · Σ (R⁺ − R⁻) δ` over the selected directions.
pub fn update(
    theta: &DMatrix<f64>,
    returns: &[(f64, f64)],
    deltas: &[DMatrix<f64>],
    selected: &[usize],
    beta: f64,
) -> Result<DMatrix<f64>, ArsError> {
    if selected.is_empty() {
        return Err(ArsError::InvalidConfig("no directions selected".into()));
    }
    let sigma = selected_sigma(returns, selected);
    if !(sigma >= SIGMA_EPSILON) {
        return Err(ArsError::DegenerateSigma { sigma });
    }
    let mut step = DMatrix::zeros(theta.nrows(), theta.ncols());
    for &i in selected {
        step += &deltas[i] * (returns[i].0 - returns[i].1);
    }
    Ok(theta + step * (beta / (selected.len() as f64 * sigma)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean over all `2N` perturbed returns.
    pub mean_return: f64,
    pub max_return: f64,
    pub sigma_r: f64,
    /// Return of the updated, unperturbed policy.
    pub eval_return: f64,
    /// Wall-clock seconds since training started; the only non-reproducible field.
    pub wall_s: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub theta: DMatrix<f64>,
    /// Return of the initial parameters on the evaluation seed.
    pub initial_return: f64,
    pub records: Vec<IterationRecord>,
}

impl TrainOutcome {
    pub fn final_return(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_return, |r| r.eval_return)
    }
}

pub fn train<O: Objective + ?Sized>(
    objective: &O,
    config: &ArsConfig,
    theta0: DMatrix<f64>,
) -> Result<TrainOutcome, ArsError> {
    train_with(objective, config, theta0, &mut |_, _| {})
}

/// Full training loop; `observer` sees every record with the parameters it
/// refers to, on the calling thread.
pub fn train_with<O: Objective + ?Sized>(
    objective: &O,
    config: &ArsConfig,
    theta0: DMatrix<f64>,
    observer: &mut dyn FnMut(&IterationRecord, &DMatrix<f64>),
) -> Result<TrainOutcome, ArsError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ArsError::InvalidConfig(format!("worker pool: {e}")))?;
    let started = Instant::now();
    let eval_seed = evaluation_seed(config.seed);
    let shape = theta0.shape();
    let mut theta = theta0;
    let initial_return = objective.evaluate(&theta, eval_seed)?;
    let mut records = Vec::with_capacity(config.iterations);
    let mut streak = 0;

    for iteration in 0..config.iterations {
        let batch = sample_directions(config, iteration, shape);
        let returns: Vec<(f64, f64)> = pool.install(|| {
            batch
                .deltas
                .par_iter()
                .enumerate()
                .map(|(i, delta)| {
                    let seed = direction_env_seed(config.seed, iteration, i);
                    evaluate_pair(objective, &theta, delta, config.noise_nu, seed)
                })
                .collect::<Result<_, _>>()
        })?;
        let selected = select_top(&returns, config.top_directions);
        let sigma_r = selected_sigma(&returns, &selected);
        let skipped = match update(
            &theta,
            &returns,
            &batch.deltas,
            &selected,
            config.step_size_beta,
        ) {
            Ok(next) => {
                theta = next;
                streak = 0;
                false
            }
            Err(ArsError::DegenerateSigma { sigma }) => {
                streak += 1;
                log::warn!("iteration {iteration}: degenerate sigma {sigma:.3e}, update skipped ({streak} in a row)");
                if streak >= MAX_DEGENERATE_STREAK {
                    return Err(ArsError::Aborted { iteration, streak });
                }
                true
            }
            Err(e) => return Err(e),
        };
        let all: Vec<f64> = returns.iter().flat_map(|&(p, m)| [p, m]).collect();
        let record = IterationRecord {
            iteration,
            mean_return: all.iter().sum::<f64>() / all.len() as f64,
            max_return: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sigma_r,
            eval_return: objective.evaluate(&theta, eval_seed)?,
            wall_s: started.elapsed().as_secs_f64(),
            skipped,
        };
        log::info!(
            "iteration {iteration}: eval {:.4} mean {:.4} max {:.4} sigma {:.4}",
            record.eval_return,
            record.mean_return,
            record.max_return,
            record.sigma_r
        );
        observer(&record, &theta);
        records.push(record);
    }
    Ok(TrainOutcome {
        theta,
        initial_return,
        records,
    })
}

/// Writes `iteration, mean_return, max_return, sigma_R, eval_return, wall_s`.
pub fn write_learning_curve<W: Write>(out: W, records: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iteration",
        "mean_return",
        "max_return",
        "sigma_R",
        "eval_return",
        "wall_s",
    ])?;
    for r in records {
        w.serialize((
            r.iteration,
            r.mean_return,
            r.max_return,
            r.sigma_r,
            r.eval_return,
            r.wall_s,
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// `R(θ) = −‖θ − θ*‖²`, a test problem with a known optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurrogate {
    pub optimum: DMatrix<f64>,
}

impl QuadraticSurrogate {
    pub fn new(optimum: DMatrix<f64>) -> Self {
        Self { optimum }
    }

    /// Optimum with i.i.d. `N(0, scale²)` entries drawn from `seed`.
    pub fn random(shape: (usize, usize), scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let optimum = DMatrix::from_fn(shape.0, shape.1, |_, _| {
            scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        Self { optimum }
    }

    pub fn distance(&self, theta: &DMatrix<f64>) -> f64 {
        (theta - &self.optimum).norm()
    }
}

impl Objective for QuadraticSurrogate {
    fn evaluate(&self, theta: &DMatrix<f64>, _env_seed: u64) -> Result<f64, ArsError> {
        Ok(-(theta - &self.optimum).norm_squared())
    }
}
