//! Centralized Nash-equilibrium oracle and step-size bounds.
//!
//! The equilibrium is the unique fixed point of `x ↦ P_U(x − kF(x))` for any
//! `k > 0`. For `k < 2μ/θ²` the map is a contraction with factor
//! `√(1 − 2kμ + k²θ²)`, which is what [`solve_ne`] iterates.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::game_model::{block_mean, tile};
use crate::{AggregativeGame, Error, GameConstants, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeSolveConfig {
    pub k: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl NeSolveConfig {
    pub fn new(k: f64) -> Self {
        Self {
            k,
            tol: 1e-10,
            max_iter: 100_000,
        }
    }

    /// `k = μ/θ²`, the minimiser of the contraction factor.
    pub fn for_constants(constants: &GameConstants) -> Self {
        Self::new(constants.mu / (constants.theta * constants.theta))
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Whether `k < 2μ/θ²`, i.e. the fixed-point map provably contracts.
    pub fn is_contraction(&self, constants: &GameConstants) -> bool {
        self.k < 2.0 * constants.mu / (constants.theta * constants.theta)
    }
}

/// Contraction factor `√(1 − 2kμ + k²θ²)` of the projected fixed-point map.
pub fn contraction_factor(k: f64, constants: &GameConstants) -> f64 {
    (1.0 - 2.0 * k * constants.mu + k * k * constants.theta * constants.theta)
        .max(0.0)
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeSolution {
    pub x: Vector,
    /// `‖x − P_U(x − kF(x))‖` at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

/// `P_U(x − kF(x))`.
pub fn fixed_point_map(game: &AggregativeGame, k: f64, x: &Vector) -> Result<Vector> {
    let f = game.pseudo_gradient(x)?;
    game.project(&(x - f * k))
}

/// Fixed-point residual `‖x − P_U(x − kF(x))‖`.
pub fn fixed_point_residual(game: &AggregativeGame, k: f64, x: &Vector) -> Result<f64> {
    Ok((x - fixed_point_map(game, k, x)?).norm())
}

/// Iterates the projected fixed-point map from `P_U(0)`.
pub fn solve_ne(game: &AggregativeGame, config: &NeSolveConfig) -> Result<NeSolution> {
    let start = game.project(&DVector::zeros(game.profile_len()))?;
    solve_ne_from(game, config, &start)
}

/// Iterates the projected fixed-point map from a given profile (projected
/// onto `U` first).
pub fn solve_ne_from(
    game: &AggregativeGame,
    config: &NeSolveConfig,
    start: &Vector,
) -> Result<NeSolution> {
    if !(config.k > 0.0 && config.k.is_finite()) {
        return Err(Error::Config(format!("fixed-point step k must be positive, got {}", config.k)));
    }
    check_dim("starting profile", game.profile_len(), start.len())?;
    let mut x = game.project(start)?;
    for iteration in 1..=config.max_iter {
        let next = fixed_point_map(game, config.k, &x)?;
        let change = (&next - &x).norm();
        x = next;
        if change <= config.tol * x.norm().max(1.0) {
            let residual = fixed_point_residual(game, config.k, &x)?;
            return Ok(NeSolution {
                x,
                residual,
                iterations: iteration,
            });
        }
    }
    let residual = fixed_point_residual(game, config.k, &x)?;
    Err(Error::NotConverged {
        last: x,
        residual,
        iterations: config.max_iter,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViVerdict {
    pub pass: bool,
    /// Smallest sampled value of `(x − x*)ᵀF(x*)`.
    pub worst: f64,
    pub samples: usize,
}

/// Samples feasible profiles and checks `(x − x*)ᵀF(x*) ≥ −tol`.
///
/// Besides joint random draws, each player is deviated alone (others held at
/// `x*`) to every vertex of its set when the set has finitely many, and to
/// random points of its set otherwise.
pub fn verify_vi(
    game: &AggregativeGame,
    x_star: &Vector,
    sample_count: usize,
    seed: u64,
    tol: f64,
) -> Result<ViVerdict> {
    check_dim("candidate equilibrium", game.profile_len(), x_star.len())?;
    let f = game.pseudo_gradient(x_star)?;
    let n = game.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut samples = 0usize;
    let mut record = |value: f64| {
        worst = worst.min(value);
        samples += 1;
    };

    let draw_player = |i: usize, rng: &mut ChaCha8Rng| -> Result<Vector> {
        let set = game.action_set(i)?;
        if let Some(x) = set.sample(rng) {
            return Ok(x);
        }
        let centre = game.block(x_star, i);
        let spread = 1.0 + centre.norm();
        let raw = centre
            + DVector::from_fn(n, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                z * spread
            });
        set.project(&raw)
    };

    for _ in 0..sample_count {
        let mut x = DVector::zeros(game.profile_len());
        for i in 0..game.num_players() {
            x.rows_mut(i * n, n).copy_from(&draw_player(i, &mut rng)?);
        }
        record((x - x_star).dot(&f));
    }
    for i in 0..game.num_players() {
        let fi = f.rows(i * n, n);
        let xi_star = game.block(x_star, i);
        match game.action_set(i)?.vertices() {
            Some(vertices) => {
                for vertex in vertices {
                    record((vertex - &xi_star).dot(&fi));
                }
            }
            None => {
                for _ in 0..sample_count.div_ceil(game.num_players()).max(1) {
                    let xi = draw_player(i, &mut rng)?;
                    record((xi - &xi_star).dot(&fi));
                }
            }
        }
    }
    Ok(ViVerdict {
        pass: worst >= -tol,
        worst,
        samples,
    })
}

/// Step-size bounds under which exponential convergence is guaranteed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBounds {
    pub delta1_star: f64,
    pub delta1: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub m: f64,
    pub delta2_star: f64,
}

/// ```text
/// δ₁* = 2μ/θ²
/// k₁ = δ₁(2μ − δ₁θ²)/(2 + δ₁θ)
/// k₂ = ((δ₁θ + 2)M + δ₁θ̂)/2
/// k₃ = δ₁Mθ̂
/// M  = 2pl√(α² + 1)
/// δ₂* = k₁/(k₁k₃ + k₂²)
/// ```
pub fn step_bounds(constants: &GameConstants, delta1: f64, alpha: f64) -> Result<StepBounds> {
    constants.validate()?;
    let GameConstants {
        mu,
        theta,
        theta_hat,
        l,
        p,
    } = *constants;
    let delta1_star = 2.0 * mu / (theta * theta);
    if !(delta1 > 0.0 && delta1 < delta1_star) {
        return Err(Error::Domain(format!(
            "delta1 = {delta1} must lie in (0, {delta1_star})"
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be nonnegative, got {alpha}")));
    }
    let p = p.ok_or(Error::MissingLyapunovBound)?;
    let m = 2.0 * p * l * (alpha * alpha + 1.0).sqrt();
    let k1 = delta1 * (2.0 * mu - delta1 * theta * theta) / (2.0 + delta1 * theta);
    let k2 = ((delta1 * theta + 2.0) * m + delta1 * theta_hat) / 2.0;
    let k3 = delta1 * m * theta_hat;
    let delta2_star = k1 / (k1 * k3 + k2 * k2);
    Ok(StepBounds {
        delta1_star,
        delta1,
        k1,
        k2,
        k3,
        m,
        delta2_star,
    })
}

/// Limits of the estimate and compensator states:
/// `s → 𝟙 ⊗ σ(x*)` and `v → α (I − 𝟙𝟙ᵀ/N ⊗ I) φ(x*)`.
pub fn equilibrium_targets(
    game: &AggregativeGame,
    x_star: &Vector,
    alpha: f64,
) -> Result<(Vector, Vector)> {
    let phi = game.local_aggregates(x_star)?;
    let mean = block_mean(&phi, game.num_players(), game.dim());
    let s_target = tile(&mean, game.num_players());
    let v_target = (phi - &s_target) * alpha;
    Ok((s_target, v_target))
}
