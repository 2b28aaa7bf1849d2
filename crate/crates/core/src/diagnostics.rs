//! Error coordinates, decay-rate fits and run reports.
//!
//! With `Q = [r, R]` orthogonal and `r = 𝟙/√N`, the consensus errors
//! `s̄ = s − Pₙφ(x)` and `v̄ = v − αPₙ⊥φ(x)` are rotated blockwise into
//! `(e_s1, e_s2)` and `(e_v1, e_v2)`. On weight-balanced graphs `e_v1` is
//! conserved, and `ζ = col(e_s1, e_s2, e_v2)` together with `x − x*` measures
//! distance to the equilibrium.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorConfig, SimState, Trajectory};
use crate::error::check_dim;
use crate::game_model::{block_mean, block_sum, tile};
use crate::switching_network::{Assumption4Report, SwitchingSchedule};
use crate::{AggregativeGame, Error, Matrix, Result, Vector};

/// Fewest samples a rate fit accepts.
pub const MIN_FIT_SAMPLES: usize = 10;
/// Drift allowed on `e_v1` before the report flags it.
pub const EV1_DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    pub r: Vector,
    /// `N × (N − 1)` completion of `r`.
    pub rest: Matrix,
}

impl OrthonormalBasis {
    pub fn node_count(&self) -> usize {
        self.r.len()
    }

    /// `Q = [r, R]`.
    pub fn q(&self) -> Matrix {
        let n = self.node_count();
        DMatrix::from_fn(n, n, |i, j| if j == 0 { self.r[i] } else { self.rest[(i, j - 1)] })
    }

    /// `((rᵀ ⊗ I) y, (Rᵀ ⊗ I) y)` for a stacked vector `y`.
    pub fn rotate(&self, y: &Vector, n: usize) -> (Vector, Vector) {
        let nodes = self.node_count();
        let mut first = DVector::zeros(n);
        let mut rest = DVector::zeros((nodes - 1) * n);
        for i in 0..nodes {
            let block = y.rows(i * n, n);
            first += block * self.r[i];
            for k in 0..nodes - 1 {
                let mut target = rest.rows_mut(k * n, n);
                target += block * self.rest[(i, k)];
            }
        }
        (first, rest)
    }
}

/// Householder reflection `H = I − 2uuᵀ/‖u‖²` with `u = e₁ − r` maps `e₁` to
/// `r`; its remaining columns complete `r` to an orthonormal basis.
pub fn build_basis(nodes: usize) -> Result<OrthonormalBasis> {
    if nodes < 2 {
        return Err(Error::Domain(format!("basis needs at least 2 nodes, got {nodes}")));
    }
    let r = DVector::from_element(nodes, 1.0 / (nodes as f64).sqrt());
    let mut u = -r.clone();
    u[0] += 1.0;
    let h = DMatrix::identity(nodes, nodes) - (&u * u.transpose()) * (2.0 / u.norm_squared());
    let rest = h.columns(1, nodes - 1).into_owned();
    Ok(OrthonormalBasis { r, rest })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCoordinates {
    pub x_bar: Vector,
    pub e_s1: Vector,
    pub e_s2: Vector,
    pub e_v1: Vector,
    pub e_v2: Vector,
    /// `‖col(e_s1, e_s2, e_v2)‖`.
    pub zeta_norm: f64,
}

impl ErrorCoordinates {
    /// `√(‖x̄‖² + ‖ζ‖²)`.
    pub fn combined_norm(&self) -> f64 {
        (self.x_bar.norm_squared() + self.zeta_norm * self.zeta_norm).sqrt()
    }
}

/// `(s̄, v̄)` for the state.
pub fn consensus_errors(
    state: &SimState,
    game: &AggregativeGame,
    alpha: f64,
) -> Result<(Vector, Vector)> {
    let phi = game.local_aggregates(&state.x)?;
    let mean = tile(&block_mean(&phi, game.num_players(), game.dim()), game.num_players());
    check_dim("aggregate estimates", phi.len(), state.s.len())?;
    check_dim("compensators", phi.len(), state.v.len())?;
    let s_bar = &state.s - &mean;
    let v_bar = &state.v - (phi - mean) * alpha;
    Ok((s_bar, v_bar))
}

pub fn error_coordinates(
    state: &SimState,
    game: &AggregativeGame,
    x_star: &Vector,
    alpha: f64,
    basis: &OrthonormalBasis,
) -> Result<ErrorCoordinates> {
    check_dim("candidate equilibrium", game.profile_len(), x_star.len())?;
    check_dim("state actions", game.profile_len(), state.x.len())?;
    check_dim("basis size", game.num_players(), basis.node_count())?;
    let (s_bar, v_bar) = consensus_errors(state, game, alpha)?;
    let (e_s1, e_s2) = basis.rotate(&s_bar, game.dim());
    let (e_v1, e_v2) = basis.rotate(&v_bar, game.dim());
    let zeta_norm =
        (e_s1.norm_squared() + e_s2.norm_squared() + e_v2.norm_squared()).sqrt();
    Ok(ErrorCoordinates {
        x_bar: &state.x - x_star,
        e_s1,
        e_s2,
        e_v1,
        e_v2,
        zeta_norm,
    })
}

/// Slope of `log(error)` against time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted exponent; `-inf` when the tail sits at the numerical floor.
    pub lambda: f64,
    pub r_squared: f64,
    pub samples_used: usize,
}

/// Least-squares fit of `ln e(t)` over the last `tail_fraction` of the
/// samples. Samples below `100 ε e(0)` are treated as converged and dropped;
/// if fewer than [`MIN_FIT_SAMPLES`] remain the tail is at the floor and the
/// `-inf` sentinel is returned with a perfect fit.
pub fn fit_exponential_rate(times: &[f64], errors: &[f64], tail_fraction: f64) -> Result<RateFit> {
    check_dim("rate fit errors", times.len(), errors.len())?;
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let first = ((1.0 - tail_fraction) * times.len() as f64).floor() as usize;
    let window = times.len().saturating_sub(first);
    if window < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            usable: window,
            needed: MIN_FIT_SAMPLES,
        });
    }
    let floor = 100.0 * f64::EPSILON * errors.first().copied().unwrap_or(0.0);
    let points: Vec<(f64, f64)> = times[first..]
        .iter()
        .zip(&errors[first..])
        .filter(|(_, &e)| e.is_finite() && e > floor && e > 0.0)
        .map(|(&t, &e)| (t, e.ln()))
        .collect();
    if points.len() < MIN_FIT_SAMPLES {
        return Ok(RateFit {
            lambda: f64::NEG_INFINITY,
            r_squared: 1.0,
            samples_used: points.len(),
        });
    }
    let count = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / count;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &points {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if stt == 0.0 {
        return Err(Error::InsufficientData {
            usable: 1,
            needed: MIN_FIT_SAMPLES,
        });
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let ss_res: f64 = points
        .iter()
        .map(|&(t, y)| {
            let resid = y - (intercept + slope * t);
            resid * resid
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        lambda: slope,
        r_squared,
        samples_used: points.len(),
    })
}

/// `√(‖x − x*‖² + ‖ζ‖²)` at every sample.
pub fn error_norms(
    trajectory: &Trajectory,
    game: &AggregativeGame,
    x_star: &Vector,
    alpha: f64,
) -> Result<Vec<f64>> {
    let basis = build_basis(game.num_players())?;
    trajectory
        .samples
        .iter()
        .map(|st| error_coordinates(st, game, x_star, alpha, &basis).map(|e| e.combined_norm()))
        .collect()
}

/// Decay rate of the combined error `√(‖x̄‖² + ‖ζ‖²)` over the trajectory tail.
pub fn rate_fit(
    trajectory: &Trajectory,
    game: &AggregativeGame,
    x_star: &Vector,
    alpha: f64,
    tail_fraction: f64,
) -> Result<RateFit> {
    let errors = error_norms(trajectory, game, x_star, alpha)?;
    fit_exponential_rate(&trajectory.times(), &errors, tail_fraction)
}

/// Worst observed violations of the invariants along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantDrift {
    /// Largest distance of any player's action from its set.
    pub max_feasibility: f64,
    /// Largest `‖Σᵢ vᵢ(t)‖`.
    pub max_conservation: f64,
    /// Largest `‖e_v1(t)‖`.
    pub max_ev1_norm: f64,
    /// Largest `‖e_v1(t) − e_v1(0)‖`.
    pub max_ev1_drift: f64,
}

pub fn invariant_drift(
    trajectory: &Trajectory,
    game: &AggregativeGame,
    alpha: f64,
    basis: &OrthonormalBasis,
) -> Result<InvariantDrift> {
    let mut drift = InvariantDrift {
        max_feasibility: 0.0,
        max_conservation: 0.0,
        max_ev1_norm: 0.0,
        max_ev1_drift: 0.0,
    };
    let mut ev1_start: Option<Vector> = None;
    for state in &trajectory.samples {
        drift.max_feasibility = drift.max_feasibility.max(game.feasibility_violation(&state.x)?);
        let v_sum = block_sum(&state.v, game.num_players(), game.dim()).norm();
        drift.max_conservation = drift.max_conservation.max(v_sum);
        let (_, v_bar) = consensus_errors(state, game, alpha)?;
        let (ev1, _) = basis.rotate(&v_bar, game.dim());
        drift.max_ev1_norm = drift.max_ev1_norm.max(ev1.norm());
        let start = ev1_start.get_or_insert_with(|| ev1.clone());
        drift.max_ev1_drift = drift.max_ev1_drift.max((&ev1 - &*start).norm());
    }
    Ok(drift)
}

/// Flat summary of a run, serializable as key-value text and as a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub players: usize,
    pub dim: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub method: String,
    pub h: f64,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tau: f64,
    pub graph_count: usize,
    pub x_error: f64,
    pub s_error: f64,
    pub v_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_r_squared: Option<f64>,
    pub max_feasibility_violation: f64,
    pub feasibility_tol: f64,
    pub max_conservation_drift: f64,
    pub conservation_tol: f64,
    pub max_ev1_norm: f64,
    pub max_ev1_drift: f64,
    pub weight_balanced: Vec<bool>,
    pub jointly_connected: bool,
    pub joint_window: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smallest_joint_window: Option<f64>,
    pub verified_until: f64,
    pub feasibility_ok: bool,
    pub conservation_ok: bool,
    pub ev1_ok: bool,
    pub assumptions_ok: bool,
}

impl Report {
    /// All invariant and assumption verdicts passed.
    pub fn verdicts_pass(&self) -> bool {
        self.feasibility_ok && self.conservation_ok && self.ev1_ok && self.assumptions_ok
    }

    pub fn to_kv_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn csv_header() -> &'static str {
        "players,dim,delta1,delta2,alpha,beta,method,h,t_end,seed,tau,graph_count,\
         x_error,s_error,v_error,rate_lambda,rate_r_squared,max_feasibility_violation,\
         feasibility_tol,max_conservation_drift,conservation_tol,max_ev1_norm,max_ev1_drift,\
         weight_balanced,jointly_connected,joint_window,smallest_joint_window,verified_until,\
         feasibility_ok,conservation_ok,ev1_ok,assumptions_ok"
    }

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let balanced: Vec<&str> = self
            .weight_balanced
            .iter()
            .map(|&b| if b { "true" } else { "false" })
            .collect();
        [
            self.players.to_string(),
            self.dim.to_string(),
            format!("{:e}", self.delta1),
            format!("{:e}", self.delta2),
            format!("{:e}", self.alpha),
            format!("{:e}", self.beta),
            self.method.clone(),
            format!("{:e}", self.h),
            format!("{:e}", self.t_end),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:e}", self.tau),
            self.graph_count.to_string(),
            format!("{:e}", self.x_error),
            format!("{:e}", self.s_error),
            format!("{:e}", self.v_error),
            opt(self.rate_lambda),
            opt(self.rate_r_squared),
            format!("{:e}", self.max_feasibility_violation),
            format!("{:e}", self.feasibility_tol),
            format!("{:e}", self.max_conservation_drift),
            format!("{:e}", self.conservation_tol),
            format!("{:e}", self.max_ev1_norm),
            format!("{:e}", self.max_ev1_drift),
            balanced.join(";"),
            self.jointly_connected.to_string(),
            format!("{:e}", self.joint_window),
            opt(self.smallest_joint_window),
            format!("{:e}", self.verified_until),
            self.feasibility_ok.to_string(),
            self.conservation_ok.to_string(),
            self.ev1_ok.to_string(),
            self.assumptions_ok.to_string(),
        ]
        .join(",")
    }
}

/// Assembles final errors, the tail-half decay rate, invariant drift and the
/// network verdicts of a run.
pub fn make_report(
    trajectory: &Trajectory,
    game: &AggregativeGame,
    schedule: &SwitchingSchedule,
    x_star: &Vector,
    verdicts: &Assumption4Report,
    config: &IntegratorConfig,
) -> Result<Report> {
    let params = trajectory.meta.params;
    let basis = build_basis(game.num_players())?;
    let last = trajectory.final_state();
    let (s_target, v_target) = crate::equilibrium::equilibrium_targets(game, x_star, params.alpha)?;
    let drift = invariant_drift(trajectory, game, params.alpha, &basis)?;
    let rate = rate_fit(trajectory, game, x_star, params.alpha, 0.5).ok();
    let phi0 = game.local_aggregates(&trajectory.samples[0].x)?;
    let conservation_tol = config.conservation_tol.unwrap_or(1e-8 * phi0.norm());
    Ok(Report {
        players: game.num_players(),
        dim: game.dim(),
        delta1: params.delta1,
        delta2: params.delta2,
        alpha: params.alpha,
        beta: params.beta,
        method: trajectory.meta.method.to_string(),
        h: trajectory.meta.h,
        t_end: trajectory.meta.t_end,
        seed: trajectory.meta.seed,
        tau: schedule.tau(),
        graph_count: schedule.graphs().len(),
        x_error: (&last.x - x_star).norm(),
        s_error: (&last.s - s_target).norm(),
        v_error: (&last.v - v_target).norm(),
        rate_lambda: rate.map(|r| r.lambda),
        rate_r_squared: rate.map(|r| r.r_squared),
        max_feasibility_violation: drift.max_feasibility,
        feasibility_tol: config.feasibility_tol,
        max_conservation_drift: drift.max_conservation,
        conservation_tol,
        max_ev1_norm: drift.max_ev1_norm,
        max_ev1_drift: drift.max_ev1_drift,
        weight_balanced: verdicts.weight_balanced.clone(),
        jointly_connected: verdicts.jointly_connected,
        joint_window: verdicts.window,
        smallest_joint_window: verdicts.smallest_window,
        verified_until: verdicts.verified_until,
        feasibility_ok: drift.max_feasibility <= config.feasibility_tol,
        conservation_ok: drift.max_conservation <= conservation_tol,
        ev1_ok: drift.max_ev1_drift <= EV1_DRIFT_TOL,
        assumptions_ok: verdicts.passed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ConvexSet;
    use nalgebra::dvector;

    #[test]
    fn two_node_basis() {
        let b = build_basis(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b.r[0] - h).abs() < 1e-15 && (b.r[1] - h).abs() < 1e-15);
        let col = b.rest.column(0);
        assert!((col[0].abs() - h).abs() < 1e-15);
        assert!((col[0] + col[1]).abs() < 1e-15);
    }

    #[test]
    fn basis_is_orthonormal() {
        for n in 2..12 {
            let b = build_basis(n).unwrap();
            assert!((b.r.transpose() * &b.rest).norm() <= 1e-13);
            let gram = b.rest.transpose() * &b.rest;
            assert!((gram - DMatrix::identity(n - 1, n - 1)).norm() <= 1e-13);
            let complete = &b.r * b.r.transpose() + &b.rest * b.rest.transpose();
            assert!((complete - DMatrix::identity(n, n)).norm() <= 1e-13);
        }
        assert!(build_basis(1).is_err());
    }

    fn game3() -> AggregativeGame {
        let sets = (0..3).map(|_| ConvexSet::whole_space(2).unwrap()).collect();
        AggregativeGame::quadratic(
            &[1.0, 2.0, 3.0],
            &[dvector![0.1, 0.0], dvector![0.0, 1.0], dvector![-1.0, 0.5]],
            &[0.5, 0.5, 0.5],
            sets,
        )
        .unwrap()
    }

    #[test]
    fn coordinates_at_local_signals() {
        // s = φ(x), v = αPₙ⊥φ(x): e_s1 = 0 and e_s2 = (Rᵀ ⊗ I)(φ(x) − 𝟙⊗σ(x)).
        let game = game3();
        let basis = build_basis(3).unwrap();
        let x = dvector![1.0, 2.0, -1.0, 0.0, 0.5, 4.0];
        let alpha = 1.5;
        let phi = game.local_aggregates(&x).unwrap();
        let sigma = game.aggregate(&x).unwrap();
        let dispersion = &phi - tile(&sigma, 3);
        let state = SimState {
            t: 0.0,
            x: x.clone(),
            s: phi.clone(),
            v: &dispersion * alpha,
        };
        let e = error_coordinates(&state, &game, &x, alpha, &basis).unwrap();
        assert!(e.e_s1.norm() < 1e-15);
        // independent evaluation with the dense Kronecker lift
        let lift = basis.rest.transpose().kronecker(&DMatrix::<f64>::identity(2, 2));
        assert!((&e.e_s2 - lift * &dispersion).norm() < 1e-14);
        assert!(e.e_v1.norm() < 1e-15 && e.e_v2.norm() < 1e-15);
    }

    #[test]
    fn rotation_preserves_norm() {
        let game = game3();
        let basis = build_basis(3).unwrap();
        let state = SimState {
            t: 0.0,
            x: dvector![0.3, -0.2, 1.0, 0.7, -0.4, 0.1],
            s: dvector![1.0, 2.0, 3.0, -4.0, 0.5, 0.25],
            v: dvector![0.2, 0.1, -0.3, 0.4, 0.1, -0.5],
        };
        let (s_bar, v_bar) = consensus_errors(&state, &game, 0.8).unwrap();
        let e = error_coordinates(&state, &game, &state.x, 0.8, &basis).unwrap();
        let es = (e.e_s1.norm_squared() + e.e_s2.norm_squared()).sqrt();
        let ev = (e.e_v1.norm_squared() + e.e_v2.norm_squared()).sqrt();
        assert!((es - s_bar.norm()).abs() < 1e-10);
        assert!((ev - v_bar.norm()).abs() < 1e-10);
    }

    #[test]
    fn exact_exponential_rate() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let errors: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = fit_exponential_rate(&times, &errors, 0.5).unwrap();
        assert!((fit.lambda + 2.0).abs() < 1e-6);
        assert!(fit.r_squared >= 1.0 - 1e-9);
    }

    #[test]
    fn modulated_exponential_rate() {
        let times: Vec<f64> = (0..2000).map(|k| k as f64 * 0.01).collect();
        let errors: Vec<f64> = times.iter().map(|t| (-t).exp() * (2.0 + t.sin())).collect();
        let fit = fit_exponential_rate(&times, &errors, 0.5).unwrap();
        assert!((-1.2..=-0.8).contains(&fit.lambda), "lambda {}", fit.lambda);
        assert!(fit.r_squared >= 0.9);
    }

    #[test]
    fn floor_tail_gives_sentinel() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let mut errors: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        for e in errors.iter_mut().skip(40) {
            *e = 0.0;
        }
        let fit = fit_exponential_rate(&times, &errors, 0.5).unwrap();
        assert_eq!(fit.lambda, f64::NEG_INFINITY);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn too_few_samples() {
        let times = [0.0, 1.0, 2.0];
        let errors = [1.0, 0.5, 0.25];
        assert!(matches!(
            fit_exponential_rate(&times, &errors, 1.0),
            Err(Error::InsufficientData { .. })
        ));
    }
}
