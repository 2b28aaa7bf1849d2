//! Aggregative games: player costs, local aggregate maps and the
//! (extended) pseudo-gradient.
//!
//! A player's cost is written as `f̄ᵢ(xᵢ, σ)` where `σ(x) = (1/N) Σ φⱼ(xⱼ)`.
//! Cost evaluators expose the two partial gradients separately and the game
//! assembles `Jᵢ(xᵢ, sᵢ) = ∇₁f̄ᵢ(xᵢ, sᵢ) + (1/N) (∂φᵢ/∂xᵢ)ᵀ ∇₂f̄ᵢ(xᵢ, sᵢ)`,
//! so that `Jᵢ(xᵢ, σ(x))` is exactly the gradient of the composed cost.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{ConvexSet, Error, Matrix, Result, Vector};

/// Cost `f̄ᵢ(xᵢ, σ)` of one player.
pub trait PlayerCost: fmt::Debug + Send + Sync {
    fn cost(&self, action: &Vector, aggregate: &Vector) -> f64;
    /// `∇_y f̄ᵢ(y, σ)` at `y = action`.
    fn grad_action(&self, action: &Vector, aggregate: &Vector) -> Vector;
    /// `∇_y f̄ᵢ(action, y)` at `y = aggregate`.
    fn grad_aggregate(&self, action: &Vector, aggregate: &Vector) -> Vector;
    /// Coefficients when the cost belongs to the quadratic family
    /// `½a‖x‖² + bᵀx + d xᵀσ`.
    fn quadratic_form(&self) -> Option<QuadraticCoefficients> {
        None
    }
}

/// Local contribution `φᵢ(xᵢ)` to the aggregate.
pub trait LocalAggregate: fmt::Debug + Send + Sync {
    fn value(&self, action: &Vector) -> Vector;
    /// `∂φᵢ/∂xᵢ`, rows indexed by output component.
    fn jacobian(&self, action: &Vector) -> Matrix;
    /// `(A, c)` when `φᵢ(x) = A x + c`.
    fn affine_form(&self) -> Option<(Matrix, Vector)> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCoefficients {
    pub a: f64,
    pub b: Vector,
    pub d: f64,
}

/// `f̄(x, σ) = ½a‖x‖² + bᵀx + d xᵀσ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub a: f64,
    pub b: Vector,
    pub d: f64,
}

impl QuadraticCost {
    pub fn new(a: f64, b: Vector, d: f64) -> Self {
        Self { a, b, d }
    }
}

impl PlayerCost for QuadraticCost {
    fn cost(&self, x: &Vector, sigma: &Vector) -> f64 {
        0.5 * self.a * x.norm_squared() + self.b.dot(x) + self.d * x.dot(sigma)
    }

    fn grad_action(&self, x: &Vector, sigma: &Vector) -> Vector {
        x * self.a + &self.b + sigma * self.d
    }

    fn grad_aggregate(&self, x: &Vector, _sigma: &Vector) -> Vector {
        x * self.d
    }

    fn quadratic_form(&self) -> Option<QuadraticCoefficients> {
        Some(QuadraticCoefficients {
            a: self.a,
            b: self.b.clone(),
            d: self.d,
        })
    }
}

/// Cournot competitor with linear inverse demand `P₀ − γσ` (per good) and
/// linear production cost `qᵀx`. The cost is the negated profit:
/// `f̄(x, σ) = qᵀx − xᵀ(P₀𝟙 − γσ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotCost {
    pub max_price: f64,
    pub slope: f64,
    pub unit_cost: Vector,
}

impl CournotCost {
    pub fn new(max_price: f64, slope: f64, unit_cost: Vector) -> Self {
        Self {
            max_price,
            slope,
            unit_cost,
        }
    }

    fn price(&self, sigma: &Vector) -> Vector {
        sigma.map(|s| self.max_price - self.slope * s)
    }
}

impl PlayerCost for CournotCost {
    fn cost(&self, x: &Vector, sigma: &Vector) -> f64 {
        self.unit_cost.dot(x) - x.dot(&self.price(sigma))
    }

    fn grad_action(&self, _x: &Vector, sigma: &Vector) -> Vector {
        &self.unit_cost - self.price(sigma)
    }

    fn grad_aggregate(&self, x: &Vector, _sigma: &Vector) -> Vector {
        x * self.slope
    }

    fn quadratic_form(&self) -> Option<QuadraticCoefficients> {
        Some(QuadraticCoefficients {
            a: 0.0,
            b: self.unit_cost.map(|q| q - self.max_price),
            d: self.slope,
        })
    }
}

/// `φ(x) = x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityAggregate {
    pub dim: usize,
}

impl LocalAggregate for IdentityAggregate {
    fn value(&self, x: &Vector) -> Vector {
        x.clone()
    }

    fn jacobian(&self, _x: &Vector) -> Matrix {
        DMatrix::identity(self.dim, self.dim)
    }

    fn affine_form(&self) -> Option<(Matrix, Vector)> {
        Some((DMatrix::identity(self.dim, self.dim), DVector::zeros(self.dim)))
    }
}

/// `φ(x) = A x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineAggregate {
    pub matrix: Matrix,
    pub offset: Vector,
}

impl AffineAggregate {
    pub fn new(matrix: Matrix, offset: Vector) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Config("affine aggregate matrix must be square".into()));
        }
        check_dim("affine aggregate offset", matrix.nrows(), offset.len())?;
        Ok(Self { matrix, offset })
    }
}

impl LocalAggregate for AffineAggregate {
    fn value(&self, x: &Vector) -> Vector {
        &self.matrix * x + &self.offset
    }

    fn jacobian(&self, _x: &Vector) -> Matrix {
        self.matrix.clone()
    }

    fn affine_form(&self) -> Option<(Matrix, Vector)> {
        Some((self.matrix.clone(), self.offset.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct Player {
    pub cost: Arc<dyn PlayerCost>,
    pub aggregate: Arc<dyn LocalAggregate>,
    pub action_set: ConvexSet,
}

impl Player {
    pub fn new(
        cost: impl PlayerCost + 'static,
        aggregate: impl LocalAggregate + 'static,
        action_set: ConvexSet,
    ) -> Self {
        Self {
            cost: Arc::new(cost),
            aggregate: Arc::new(aggregate),
            action_set,
        }
    }
}

/// N players sharing action dimension n.
#[derive(Debug, Clone)]
pub struct AggregativeGame {
    players: Vec<Player>,
    dim: usize,
}

impl AggregativeGame {
    pub fn new(players: Vec<Player>, dim: usize) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::Config("a game needs at least one player".into()));
        }
        if dim == 0 {
            return Err(Error::Config("action dimension must be positive".into()));
        }
        for p in &players {
            check_dim("player action set", dim, p.action_set.dim())?;
        }
        Ok(Self { players, dim })
    }

    /// Quadratic family with identity aggregates.
    pub fn quadratic(
        a: &[f64],
        b: &[Vector],
        d: &[f64],
        sets: Vec<ConvexSet>,
    ) -> Result<Self> {
        let n_players = a.len();
        if b.len() != n_players || d.len() != n_players || sets.len() != n_players {
            return Err(Error::Config(
                "quadratic game: a, b, d and sets must have one entry per player".into(),
            ));
        }
        let dim = b.first().map_or(0, |v| v.len());
        let players = a
            .iter()
            .zip(b)
            .zip(d)
            .zip(sets)
            .map(|(((&a, b), &d), set)| {
                Player::new(QuadraticCost::new(a, b.clone(), d), IdentityAggregate { dim }, set)
            })
            .collect();
        Self::new(players, dim)
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length `N·n` of stacked profiles.
    pub fn profile_len(&self) -> usize {
        self.players.len() * self.dim
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn action_set(&self, i: usize) -> Result<&ConvexSet> {
        self.player(i).map(|p| &p.action_set)
    }

    fn player(&self, i: usize) -> Result<&Player> {
        self.players.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            count: self.players.len(),
        })
    }

    /// Block `i` of a stacked vector.
    pub fn block(&self, stacked: &Vector, i: usize) -> Vector {
        stacked.rows(i * self.dim, self.dim).into_owned()
    }

    fn check_profile(&self, context: &'static str, x: &Vector) -> Result<()> {
        check_dim(context, self.profile_len(), x.len())
    }

    /// `φ(x) = col(φ₁(x₁), …, φ_N(x_N))`.
    pub fn local_aggregates(&self, x: &Vector) -> Result<Vector> {
        self.check_profile("strategy profile", x)?;
        let mut out = DVector::zeros(self.profile_len());
        for (i, p) in self.players.iter().enumerate() {
            let phi = p.aggregate.value(&self.block(x, i));
            check_dim("local aggregate output", self.dim, phi.len())?;
            out.rows_mut(i * self.dim, self.dim).copy_from(&phi);
        }
        Ok(out)
    }

    /// `σ(x) = (1/N) Σ φᵢ(xᵢ)`.
    pub fn aggregate(&self, x: &Vector) -> Result<Vector> {
        let phi = self.local_aggregates(x)?;
        Ok(block_mean(&phi, self.num_players(), self.dim))
    }

    /// `Jᵢ(xᵢ, sᵢ)`.
    pub fn partial_gradient(&self, i: usize, x_i: &Vector, s_i: &Vector) -> Result<Vector> {
        let player = self.player(i)?;
        check_dim("player action", self.dim, x_i.len())?;
        check_dim("aggregate estimate", self.dim, s_i.len())?;
        let direct = player.cost.grad_action(x_i, s_i);
        let through_aggregate = player.cost.grad_aggregate(x_i, s_i);
        let jac = player.aggregate.jacobian(x_i);
        Ok(direct + jac.tr_mul(&through_aggregate) / self.num_players() as f64)
    }

    /// `𝐅(x, s) = col(J₁(x₁, s₁), …, J_N(x_N, s_N))`.
    pub fn extended_pseudo_gradient(&self, x: &Vector, s: &Vector) -> Result<Vector> {
        self.check_profile("strategy profile", x)?;
        self.check_profile("aggregate estimates", s)?;
        let mut out = DVector::zeros(self.profile_len());
        for i in 0..self.num_players() {
            let g = self.partial_gradient(i, &self.block(x, i), &self.block(s, i))?;
            out.rows_mut(i * self.dim, self.dim).copy_from(&g);
        }
        Ok(out)
    }

    /// `F(x) = 𝐅(x, 𝟙 ⊗ σ(x))`.
    pub fn pseudo_gradient(&self, x: &Vector) -> Result<Vector> {
        let sigma = self.aggregate(x)?;
        let s = tile(&sigma, self.num_players());
        self.extended_pseudo_gradient(x, &s)
    }

    /// `fᵢ(xᵢ, x₋ᵢ) = f̄ᵢ(xᵢ, σ(x))`.
    pub fn player_cost(&self, i: usize, x: &Vector) -> Result<f64> {
        let player = self.player(i)?;
        let sigma = self.aggregate(x)?;
        Ok(player.cost.cost(&self.block(x, i), &sigma))
    }

    /// Blockwise projection onto `U = Π Uᵢ`.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        self.check_profile("strategy profile", x)?;
        let mut out = DVector::zeros(self.profile_len());
        for (i, p) in self.players.iter().enumerate() {
            let block = p.action_set.project(&self.block(x, i))?;
            out.rows_mut(i * self.dim, self.dim).copy_from(&block);
        }
        Ok(out)
    }

    /// Largest per-player distance to the action set.
    pub fn feasibility_violation(&self, x: &Vector) -> Result<f64> {
        self.check_profile("strategy profile", x)?;
        let mut worst: f64 = 0.0;
        for (i, p) in self.players.iter().enumerate() {
            worst = worst.max(p.action_set.distance(&self.block(x, i))?);
        }
        Ok(worst)
    }

    /// Per-player distances to the action sets.
    pub fn player_distances(&self, x: &Vector) -> Result<Vec<f64>> {
        self.check_profile("strategy profile", x)?;
        self.players
            .iter()
            .enumerate()
            .map(|(i, p)| p.action_set.distance(&self.block(x, i)))
            .collect()
    }

    /// `(M, c)` with `F(x) = M x + c`, available when every cost is in the
    /// quadratic family and every aggregate is affine.
    pub fn linear_pseudo_gradient(&self) -> Option<(Matrix, Vector)> {
        let n_players = self.num_players();
        let n = self.dim;
        let nf = n_players as f64;
        let quad: Vec<QuadraticCoefficients> = self
            .players
            .iter()
            .map(|p| p.cost.quadratic_form())
            .collect::<Option<_>>()?;
        let affine: Vec<(Matrix, Vector)> = self
            .players
            .iter()
            .map(|p| p.aggregate.affine_form())
            .collect::<Option<_>>()?;
        let offset_sum = affine
            .iter()
            .fold(DVector::zeros(n), |acc: Vector, (_, c)| acc + c);

        let mut op = DMatrix::zeros(n_players * n, n_players * n);
        let mut constant = DVector::zeros(n_players * n);
        for i in 0..n_players {
            let QuadraticCoefficients { a, b, d } = &quad[i];
            for (j, (mat_j, _)) in affine.iter().enumerate() {
                let mut block = mat_j * (d / nf);
                if i == j {
                    block += DMatrix::identity(n, n) * *a + affine[i].0.transpose() * (d / nf);
                }
                op.view_mut((i * n, j * n), (n, n)).copy_from(&block);
            }
            let c_i = b + &offset_sum * (d / nf);
            constant.rows_mut(i * n, n).copy_from(&c_i);
        }
        Some((op, constant))
    }
}

/// `𝟙_N ⊗ v`.
pub fn tile(v: &Vector, copies: usize) -> Vector {
    let n = v.len();
    DVector::from_fn(n * copies, |k, _| v[k % n])
}

/// `(1/N) Σᵢ blockᵢ`.
pub fn block_mean(stacked: &Vector, blocks: usize, n: usize) -> Vector {
    let mut acc = DVector::zeros(n);
    for i in 0..blocks {
        acc += stacked.rows(i * n, n);
    }
    acc / blocks as f64
}

/// `Σᵢ blockᵢ`.
pub fn block_sum(stacked: &Vector, blocks: usize, n: usize) -> Vector {
    block_mean(stacked, blocks, n) * blocks as f64
}

/// Constants of the standing assumptions: strong monotonicity `mu`,
/// Lipschitz constant `theta` of F, Lipschitz constant `theta_hat` of 𝐅 in
/// its second argument, Jacobian bound `l` of φ, and the optional bound `p`
/// on the Lyapunov matrix of the consensus subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConstants {
    pub mu: f64,
    pub theta: f64,
    pub theta_hat: f64,
    pub l: f64,
    pub p: Option<f64>,
}

impl GameConstants {
    pub fn new(mu: f64, theta: f64, theta_hat: f64, l: f64, p: Option<f64>) -> Result<Self> {
        let c = Self {
            mu,
            theta,
            theta_hat,
            l,
            p,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("mu", self.mu),
            ("theta", self.theta),
            ("theta_hat", self.theta_hat),
            ("l", self.l),
        ];
        for (name, v) in named.into_iter().chain(self.p.map(|p| ("p", p))) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mu > self.theta * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "mu = {} exceeds theta = {}",
                self.mu, self.theta
            )));
        }
        Ok(())
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum EstimateMethod {
    Exact,
    Sampled { sample_count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimate {
    pub constants: GameConstants,
    pub method: EstimateMethod,
    /// Set when the sampled monotonicity modulus is not positive.
    pub monotonicity_violated: bool,
}

/// Region used to draw points from unbounded action sets and aggregate
/// estimates: each coordinate uniform in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingBox {
    pub lo: f64,
    pub hi: f64,
}

/// Constants of the game. Quadratic games with affine aggregates use exact
/// spectral formulas; everything else is estimated by sampling.
pub fn estimate_constants(
    game: &AggregativeGame,
    sample_count: usize,
    seed: u64,
    sampling_box: Option<SamplingBox>,
) -> Result<ConstantEstimate> {
    if let Some(exact) = exact_constants(game) {
        return Ok(exact);
    }
    estimate_constants_sampled(game, sample_count, seed, sampling_box)
}

/// Closed forms for the quadratic family: `mu` is the least eigenvalue of the
/// symmetric part of the linear pseudo-gradient, `theta` its largest singular
/// value, `theta_hat = max |dᵢ|` and `l = max ‖Aᵢ‖`.
pub fn exact_constants(game: &AggregativeGame) -> Option<ConstantEstimate> {
    let (op, _) = game.linear_pseudo_gradient()?;
    let sym = (&op + op.transpose()) * 0.5;
    let mu = SymmetricEigen::new(sym).eigenvalues.min();
    let theta = op.singular_values().max();
    let mut theta_hat: f64 = 0.0;
    let mut l: f64 = 0.0;
    for p in game.players() {
        theta_hat = theta_hat.max(p.cost.quadratic_form()?.d.abs());
        let (mat, _) = p.aggregate.affine_form()?;
        l = l.max(mat.singular_values().max());
    }
    Some(ConstantEstimate {
        constants: GameConstants {
            mu,
            theta,
            theta_hat,
            l,
            p: None,
        },
        method: EstimateMethod::Exact,
        monotonicity_violated: mu <= 0.0,
    })
}

/// Monte-Carlo estimates over random pairs of feasible profiles.
pub fn estimate_constants_sampled(
    game: &AggregativeGame,
    sample_count: usize,
    seed: u64,
    sampling_box: Option<SamplingBox>,
) -> Result<ConstantEstimate> {
    if sample_count == 0 {
        return Err(Error::Config("sample_count must be positive".into()));
    }
    let unbounded = game.players().iter().any(|p| !p.action_set.is_bounded());
    if unbounded && sampling_box.is_none() {
        return Err(Error::Config(
            "constant estimation needs a sampling box for unbounded action sets".into(),
        ));
    }
    let region = sampling_box.unwrap_or(SamplingBox { lo: -1.0, hi: 1.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Vector> {
        let mut x = DVector::zeros(game.profile_len());
        for (i, p) in game.players().iter().enumerate() {
            let xi = p.action_set.sample_with_box(rng, region.lo, region.hi)?;
            x.rows_mut(i * game.dim(), game.dim()).copy_from(&xi);
        }
        Ok(x)
    };

    let mut mu = f64::INFINITY;
    let mut theta: f64 = 0.0;
    let mut theta_hat: f64 = 0.0;
    let mut l: f64 = 0.0;
    for sample in 0..sample_count {
        let x = draw(&mut rng)?;
        // alternate global pairs with nearby pairs at a random scale, so that
        // local curvature of nonlinear games is also probed
        let local = sample % 2 == 1;
        let x2 = if local {
            let scale = (region.hi - region.lo).abs() * 10f64.powf(-3.0 * rng.random::<f64>());
            game.project(&(&x + gaussian(game.profile_len(), scale, &mut rng)))?
        } else {
            draw(&mut rng)?
        };
        let dx = &x - &x2;
        let dist2 = dx.norm_squared();
        if dist2 > 0.0 {
            let df = game.pseudo_gradient(&x)? - game.pseudo_gradient(&x2)?;
            mu = mu.min(dx.dot(&df) / dist2);
            theta = theta.max(df.norm() / dist2.sqrt());
        }

        let s = draw_estimate(game, &x, &region, &mut rng)?;
        let s2 = if local {
            let scale = (region.hi - region.lo).abs() * 10f64.powf(-3.0 * rng.random::<f64>());
            &s + gaussian(game.profile_len(), scale, &mut rng)
        } else {
            draw_estimate(game, &x, &region, &mut rng)?
        };
        let ds = (&s - &s2).norm();
        if ds > 0.0 {
            let dfs =
                game.extended_pseudo_gradient(&x, &s)? - game.extended_pseudo_gradient(&x, &s2)?;
            theta_hat = theta_hat.max(dfs.norm() / ds);
        }

        for (i, p) in game.players().iter().enumerate() {
            let jac = p.aggregate.jacobian(&game.block(&x, i));
            l = l.max(jac.singular_values().max());
        }
    }
    if mu <= 0.0 {
        log::warn!("sampled strong-monotonicity modulus {mu} is not positive");
    }
    Ok(ConstantEstimate {
        constants: GameConstants {
            mu,
            theta,
            theta_hat,
            l,
            p: None,
        },
        method: EstimateMethod::Sampled { sample_count, seed },
        monotonicity_violated: mu <= 0.0,
    })
}

/// Aggregate estimate near `𝟙 ⊗ σ(x)`, perturbed across the sampling region.
fn draw_estimate(
    game: &AggregativeGame,
    x: &Vector,
    region: &SamplingBox,
    rng: &mut ChaCha8Rng,
) -> Result<Vector> {
    let base = tile(&game.aggregate(x)?, game.num_players());
    let spread = (region.hi - region.lo).abs().max(1e-12);
    Ok(base + gaussian(game.profile_len(), spread, rng))
}

fn gaussian(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vector {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn whole(n: usize, count: usize) -> Vec<ConvexSet> {
        (0..count).map(|_| ConvexSet::whole_space(n).unwrap()).collect()
    }

    #[test]
    fn aggregate_identity_mean() {
        let game = AggregativeGame::quadratic(
            &[1.0, 1.0, 1.0],
            &[dvector![0.0], dvector![0.0], dvector![0.0]],
            &[0.0, 0.0, 0.0],
            whole(1, 3),
        )
        .unwrap();
        assert_eq!(game.aggregate(&dvector![1.0, 2.0, 3.0]).unwrap(), dvector![2.0]);
    }

    #[test]
    fn aggregate_mixed_maps() {
        let players = vec![
            Player::new(
                QuadraticCost::new(1.0, dvector![0.0, 0.0], 0.0),
                IdentityAggregate { dim: 2 },
                ConvexSet::whole_space(2).unwrap(),
            ),
            Player::new(
                QuadraticCost::new(1.0, dvector![0.0, 0.0], 0.0),
                AffineAggregate::new(DMatrix::identity(2, 2) * 2.0, dvector![0.0, 0.0]).unwrap(),
                ConvexSet::whole_space(2).unwrap(),
            ),
        ];
        let game = AggregativeGame::new(players, 2).unwrap();
        let sigma = game.aggregate(&dvector![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(sigma, dvector![0.5, 1.0]);
    }

    #[test]
    fn aggregate_rejects_wrong_length() {
        let game = AggregativeGame::quadratic(
            &[1.0, 1.0],
            &[dvector![0.0], dvector![0.0]],
            &[0.0, 0.0],
            whole(1, 2),
        )
        .unwrap();
        assert!(matches!(
            game.aggregate(&dvector![1.0, 2.0, 3.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn partial_gradient_quadratic_formula() {
        let (a, d) = (1.5, 0.7);
        let b = dvector![0.2, -0.4];
        let game = AggregativeGame::quadratic(
            &[a, 2.0, 1.0],
            &[b.clone(), dvector![0.0, 0.0], dvector![0.0, 0.0]],
            &[d, 0.0, 0.0],
            whole(2, 3),
        )
        .unwrap();
        let x = dvector![0.3, -1.1];
        let s = dvector![2.0, 0.5];
        let got = game.partial_gradient(0, &x, &s).unwrap();
        let expected = &x * a + &b + &s * d + &x * (d / 3.0);
        assert!((got - expected).norm() < 1e-15);
    }

    #[test]
    fn partial_gradient_without_coupling_ignores_estimate() {
        let game =
            AggregativeGame::quadratic(&[2.0], &[dvector![1.0]], &[0.0], whole(1, 1)).unwrap();
        let g1 = game.partial_gradient(0, &dvector![3.0], &dvector![-5.0]).unwrap();
        let g2 = game.partial_gradient(0, &dvector![3.0], &dvector![9.0]).unwrap();
        assert_eq!(g1, dvector![7.0]);
        assert_eq!(g1, g2);
    }

    #[test]
    fn partial_gradient_index_out_of_range() {
        let game =
            AggregativeGame::quadratic(&[2.0], &[dvector![1.0]], &[0.0], whole(1, 1)).unwrap();
        assert!(matches!(
            game.partial_gradient(1, &dvector![0.0], &dvector![0.0]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn extended_pseudo_gradient_two_players() {
        let game = AggregativeGame::quadratic(
            &[2.0, 2.0],
            &[dvector![0.0], dvector![0.0]],
            &[1.0, 1.0],
            whole(1, 2),
        )
        .unwrap();
        let f = game
            .extended_pseudo_gradient(&dvector![1.0, 1.0], &dvector![1.0, 1.0])
            .unwrap();
        assert_eq!(f, dvector![3.5, 3.5]);
    }

    #[test]
    fn single_player_stacking() {
        let game =
            AggregativeGame::quadratic(&[1.0], &[dvector![0.0]], &[0.0], whole(1, 1)).unwrap();
        let x = dvector![0.7];
        assert_eq!(game.pseudo_gradient(&x).unwrap(), x);
        assert_eq!(
            game.extended_pseudo_gradient(&x, &dvector![4.0]).unwrap(),
            game.partial_gradient(0, &x, &dvector![4.0]).unwrap()
        );
    }

    #[test]
    fn cournot_is_quadratic_family_member() {
        let cost = CournotCost::new(10.0, 0.5, dvector![1.0, 2.0]);
        let quad = cost.quadratic_form().unwrap();
        let as_quad = QuadraticCost::new(quad.a, quad.b, quad.d);
        let x = dvector![0.4, 1.3];
        let sigma = dvector![2.0, 0.1];
        assert!((cost.cost(&x, &sigma) - as_quad.cost(&x, &sigma)).abs() < 1e-12);
        assert!((cost.grad_action(&x, &sigma) - as_quad.grad_action(&x, &sigma)).norm() < 1e-12);
    }

    #[test]
    fn decoupled_exact_constants() {
        let game = AggregativeGame::quadratic(
            &[2.0, 3.0],
            &[dvector![0.0], dvector![0.0]],
            &[0.0, 0.0],
            whole(1, 2),
        )
        .unwrap();
        let est = estimate_constants(&game, 10, 0, None).unwrap();
        assert_eq!(est.method, EstimateMethod::Exact);
        assert!((est.constants.mu - 2.0).abs() < 1e-12);
        assert!((est.constants.theta - 3.0).abs() < 1e-12);
        assert!((est.constants.l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_sampling_requires_box() {
        let game = AggregativeGame::quadratic(
            &[2.0, 3.0],
            &[dvector![0.0], dvector![0.0]],
            &[0.0, 0.0],
            whole(1, 2),
        )
        .unwrap();
        assert!(matches!(
            estimate_constants_sampled(&game, 10, 0, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn constants_validation() {
        assert!(GameConstants::new(1.0, 2.0, 1.0, 1.0, None).is_ok());
        assert!(GameConstants::new(3.0, 2.0, 1.0, 1.0, None).is_err());
        assert!(GameConstants::new(1.0, 2.0, 0.0, 1.0, None).is_err());
        assert!(GameConstants::new(1.0, 2.0, 1.0, 1.0, Some(-1.0)).is_err());
    }
}
