//! Closed-loop seeking dynamics and their fixed-step integration.
//!
//! ```text
//! ẋ = δ₂ (P_U(x − δ₁ 𝐅(x, s)) − x)
//! ṡ = −α (s − φ(x)) − β 𝐋 s − v
//! v̇ = α β 𝐋 s
//! ```
//!
//! `𝐋 = L_ρ(t) ⊗ I_n` is piecewise constant. The integrator splits the
//! horizon at every switching instant so that no step straddles a switch.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::game_model::block_sum;
use crate::switching_network::{LaplacianOperator, SwitchingSchedule};
use crate::{AggregativeGame, Error, Result, Vector};

/// Tolerance on `Σ vᵢ(0)` accepted by [`simulate`].
pub const ZERO_SUM_TOL: f64 = 1e-12;

/// Gains of the seeking law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    /// Gradient step inside the projection.
    pub delta1: f64,
    /// Gain of the projected action dynamics.
    pub delta2: f64,
    /// Leak of the consensus filter.
    pub alpha: f64,
    /// Diffusion gain of the consensus filter.
    pub beta: f64,
}

impl AlgorithmParams {
    pub fn new(delta1: f64, delta2: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self {
            delta1,
            delta2,
            alpha,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: Vector,
    pub s: Vector,
    pub v: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Nominal step; shortened per interval so steps tile each interval.
    pub h: f64,
    /// Allowed distance from the action sets (checked after RK4 steps).
    pub feasibility_tol: f64,
    /// Bound on `‖Σ vᵢ‖`; `None` means `1e-8 ‖φ(x(0))‖`.
    pub conservation_tol: Option<f64>,
    /// Record every k-th step (interval ends are always recorded).
    pub record_every: usize,
    /// Permit schedules with graphs that are not weight-balanced.
    pub allow_unbalanced: bool,
}

impl IntegratorConfig {
    pub fn new(method: Method, h: f64) -> Self {
        Self {
            method,
            h,
            feasibility_tol: 1e-9,
            conservation_tol: None,
            record_every: 1,
            allow_unbalanced: false,
        }
    }

    pub fn euler(h: f64) -> Self {
        Self::new(Method::Euler, h)
    }

    pub fn rk4(h: f64) -> Self {
        Self::new(Method::Rk4, h)
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    /// `min(τ/10, 1/(2δ₂), 1/(2(α + β·d_max)))`, which keeps explicit Euler
    /// stable on the consensus block and satisfies `h δ₂ ≤ 1`.
    pub fn default_step(params: &AlgorithmParams, schedule: &SwitchingSchedule) -> f64 {
        let consensus = 1.0 / (2.0 * (params.alpha + params.beta * schedule.max_in_degree()));
        (schedule.tau() / 10.0)
            .min(1.0 / (2.0 * params.delta2))
            .min(consensus)
    }

    pub fn validate(&self, params: &AlgorithmParams) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.h)));
        }
        if self.method == Method::Euler && self.h * params.delta2 > 1.0 {
            return Err(Error::Config(format!(
                "Euler needs h * delta2 <= 1 for exact feasibility, got {}",
                self.h * params.delta2
            )));
        }
        if !(self.feasibility_tol >= 0.0) {
            return Err(Error::Config("feasibility_tol must be nonnegative".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Time derivative of the stacked state.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dx: Vector,
    pub ds: Vector,
    pub dv: Vector,
}

/// `g₀(x, s) = δ₂ (P_U(x − δ₁ 𝐅(x, s)) − x)`, projected blockwise.
pub fn g0(game: &AggregativeGame, params: &AlgorithmParams, x: &Vector, s: &Vector) -> Result<Vector> {
    Ok((projected_target(game, params, x, s)? - x) * params.delta2)
}

fn projected_target(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    x: &Vector,
    s: &Vector,
) -> Result<Vector> {
    let grad = game.extended_pseudo_gradient(x, s)?;
    game.project(&(x - grad * params.delta1))
}

/// Right-hand side of the closed loop with the Laplacian of the active graph.
pub fn rhs(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    laplacian: &LaplacianOperator,
    state: &SimState,
) -> Result<Derivative> {
    let dx = g0(game, params, &state.x, &state.s)?;
    let (ds, dv) = consensus_rhs(game, params, laplacian, state)?;
    Ok(Derivative { dx, ds, dv })
}

fn consensus_rhs(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    laplacian: &LaplacianOperator,
    state: &SimState,
) -> Result<(Vector, Vector)> {
    check_dim("aggregate estimates", game.profile_len(), state.s.len())?;
    check_dim("compensators", game.profile_len(), state.v.len())?;
    check_dim("graph nodes", game.num_players(), laplacian.node_count())?;
    let phi = game.local_aggregates(&state.x)?;
    let ls = laplacian.apply(&state.s, game.dim());
    let ds = (&state.s - phi) * (-params.alpha) - &ls * params.beta - &state.v;
    let dv = ls * (params.alpha * params.beta);
    Ok((ds, dv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub params: AlgorithmParams,
    pub method: Method,
    pub h: f64,
    pub t_end: f64,
    pub players: usize,
    pub dim: usize,
    pub seed: Option<u64>,
    pub schedule_label: Option<String>,
}

/// Sampled history of a run. Samples start at `t = 0`, include every
/// switching instant and the final time, and are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<SimState>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> &SimState {
        self.samples.last().expect("trajectory always holds the initial state")
    }

    /// CSV with header `t,x_1_1,…,x_N_n,s_1_1,…,v_N_n`; values with 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let (players, dim) = (self.meta.players, self.meta.dim);
        let mut header = vec!["t".to_string()];
        for var in ["x", "s", "v"] {
            for i in 1..=players {
                for k in 1..=dim {
                    header.push(format!("{var}_{i}_{k}"));
                }
            }
        }
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for state in &self.samples {
            line.clear();
            line.push_str(&format!("{:.16e}", state.t));
            for value in state.x.iter().chain(state.s.iter()).chain(state.v.iter()) {
                line.push_str(&format!(",{value:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Samples parsed back from the trajectory CSV format, with the player count
/// and action dimension recovered from the header.
pub fn read_csv<R: BufRead>(input: R) -> Result<(Vec<SimState>, usize, usize)> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(Error::Csv {
        line: 1,
        message: "missing header".into(),
    })??;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"t") || !(columns.len() - 1).is_multiple_of(3) || columns.len() < 4 {
        return Err(Error::Csv {
            line: 1,
            message: "header must be t followed by x, s and v columns".into(),
        });
    }
    let stacked = (columns.len() - 1) / 3;
    let last_x = columns[stacked];
    let parts: Vec<&str> = last_x.split('_').collect();
    let parse_index = |s: &str| s.parse::<usize>().ok();
    let (players, dim) = match parts.as_slice() {
        ["x", i, k] => match (parse_index(i), parse_index(k)) {
            (Some(i), Some(k)) if i * k == stacked => (i, k),
            _ => {
                return Err(Error::Csv {
                    line: 1,
                    message: format!("inconsistent column name {last_x}"),
                })
            }
        },
        _ => {
            return Err(Error::Csv {
                line: 1,
                message: format!("unexpected column name {last_x}"),
            })
        }
    };
    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Csv {
                line: idx + 2,
                message: e.to_string(),
            })?;
        if values.len() != columns.len() {
            return Err(Error::Csv {
                line: idx + 2,
                message: format!("expected {} values, found {}", columns.len(), values.len()),
            });
        }
        let block = |k: usize| DVector::from_column_slice(&values[1 + k * stacked..1 + (k + 1) * stacked]);
        samples.push(SimState {
            t: values[0],
            x: block(0),
            s: block(1),
            v: block(2),
        });
    }
    Ok((samples, players, dim))
}

/// `xᵢ(0)` is a projected standard-normal draw, `sᵢ(0)` a standard-normal
/// draw, and `v(0) = 0`.
pub fn default_init(game: &AggregativeGame, seed: u64) -> Result<SimState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = game.profile_len();
    let normal = |rng: &mut ChaCha8Rng| {
        DVector::from_fn(len, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z
        })
    };
    let raw_x = normal(&mut rng);
    let s = normal(&mut rng);
    Ok(SimState {
        t: 0.0,
        x: game.project(&raw_x)?,
        s,
        v: DVector::zeros(len),
    })
}

/// Integrates the closed loop over `[0, t_end]`.
pub fn simulate(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    schedule: &SwitchingSchedule,
    init: &SimState,
    config: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory> {
    integrate(game, params, schedule, init, config, t_end, false)
}

/// Integrates only the consensus filter `(s, v)` with the actions frozen at
/// `init.x`.
pub fn simulate_frozen_actions(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    schedule: &SwitchingSchedule,
    init: &SimState,
    config: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory> {
    integrate(game, params, schedule, init, config, t_end, true)
}

fn integrate(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    schedule: &SwitchingSchedule,
    init: &SimState,
    config: &IntegratorConfig,
    t_end: f64,
    frozen: bool,
) -> Result<Trajectory> {
    params.validate()?;
    config.validate(params)?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("t_end must be finite and nonnegative, got {t_end}")));
    }
    let len = game.profile_len();
    check_dim("initial actions", len, init.x.len())?;
    check_dim("initial aggregate estimates", len, init.s.len())?;
    check_dim("initial compensators", len, init.v.len())?;
    if schedule.node_count() != game.num_players() {
        return Err(Error::Config(format!(
            "schedule has {} nodes but the game has {} players",
            schedule.node_count(),
            game.num_players()
        )));
    }
    let violation = game.feasibility_violation(&init.x)?;
    if violation > config.feasibility_tol {
        return Err(Error::Config(format!(
            "initial actions are infeasible (distance {violation:e})"
        )));
    }
    let v_sum = block_sum(&init.v, game.num_players(), game.dim()).norm();
    if v_sum > ZERO_SUM_TOL {
        return Err(Error::Config(format!(
            "initial compensators must sum to zero, got norm {v_sum:e}"
        )));
    }
    let balance_tol = 1e-12 * (1.0 + schedule.max_in_degree());
    if !config.allow_unbalanced && !schedule.all_weight_balanced(balance_tol) {
        return Err(Error::Config(
            "schedule contains a graph that is not weight-balanced".into(),
        ));
    }

    let operators: Vec<LaplacianOperator> = schedule
        .graphs()
        .iter()
        .map(|g| g.laplacian_operator())
        .collect();
    let mut state = SimState {
        t: 0.0,
        x: game.project(&init.x)?,
        s: init.s.clone(),
        v: init.v.clone(),
    };
    let mut samples = vec![state.clone()];
    let mut step_count = 0usize;
    for segment in schedule.segments(0.0, t_end)? {
        let length = segment.end - segment.start;
        let steps = ((length / config.h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = length / steps as f64;
        let op = &operators[segment.graph];
        for k in 0..steps {
            state = match config.method {
                Method::Euler => euler_step(game, params, op, &state, h, frozen)?,
                Method::Rk4 => rk4_step(game, params, op, &state, h, frozen)?,
            };
            step_count += 1;
            state.t = if k + 1 == steps {
                segment.end
            } else {
                segment.start + (k + 1) as f64 * h
            };
            if config.method == Method::Rk4 && !frozen {
                for (player, distance) in game.player_distances(&state.x)?.into_iter().enumerate() {
                    if distance > config.feasibility_tol {
                        return Err(Error::Infeasible {
                            step: step_count,
                            t: state.t,
                            player,
                            distance,
                        });
                    }
                }
            }
            if k + 1 == steps || step_count.is_multiple_of(config.record_every) {
                samples.push(state.clone());
            }
        }
    }
    Ok(Trajectory {
        samples,
        meta: TrajectoryMeta {
            params: *params,
            method: config.method,
            h: config.h,
            t_end,
            players: game.num_players(),
            dim: game.dim(),
            seed: None,
            schedule_label: None,
        },
    })
}

/// Euler step. The action update is the convex combination
/// `(1 − hδ₂) x + hδ₂ P_U(·)`, which stays in `U` whenever `hδ₂ ≤ 1`.
fn euler_step(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    op: &LaplacianOperator,
    state: &SimState,
    h: f64,
    frozen: bool,
) -> Result<SimState> {
    let (ds, dv) = consensus_rhs(game, params, op, state)?;
    let x = if frozen {
        state.x.clone()
    } else {
        let lambda = h * params.delta2;
        let target = projected_target(game, params, &state.x, &state.s)?;
        &state.x * (1.0 - lambda) + target * lambda
    };
    Ok(SimState {
        t: state.t + h,
        x,
        s: &state.s + ds * h,
        v: &state.v + dv * h,
    })
}

fn rk4_step(
    game: &AggregativeGame,
    params: &AlgorithmParams,
    op: &LaplacianOperator,
    state: &SimState,
    h: f64,
    frozen: bool,
) -> Result<SimState> {
    let eval = |st: &SimState| -> Result<Derivative> {
        let (ds, dv) = consensus_rhs(game, params, op, st)?;
        let dx = if frozen {
            DVector::zeros(st.x.len())
        } else {
            g0(game, params, &st.x, &st.s)?
        };
        Ok(Derivative { dx, ds, dv })
    };
    let shifted = |d: &Derivative, scale: f64| SimState {
        t: state.t + scale,
        x: &state.x + &d.dx * scale,
        s: &state.s + &d.ds * scale,
        v: &state.v + &d.dv * scale,
    };
    let k1 = eval(state)?;
    let k2 = eval(&shifted(&k1, h / 2.0))?;
    let k3 = eval(&shifted(&k2, h / 2.0))?;
    let k4 = eval(&shifted(&k3, h))?;
    let combine = |a: &Vector, b: &Vector, c: &Vector, d: &Vector| (a + b * 2.0 + c * 2.0 + d) * (h / 6.0);
    Ok(SimState {
        t: state.t + h,
        x: &state.x + combine(&k1.dx, &k2.dx, &k3.dx, &k4.dx),
        s: &state.s + combine(&k1.ds, &k2.ds, &k3.ds, &k4.ds),
        v: &state.v + combine(&k1.dv, &k2.dv, &k3.dv, &k4.dv),
    })
}
