//! Declarative run configuration.
//!
//! A run is described by one TOML file. Every section is optional at the
//! parse stage; each subcommand asks only for the sections it needs, and
//! semantic errors are reported against the line of the offending section.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use dnes::convex_sets::Halfspace;
use dnes::game_model::{
    AffineAggregate, CournotCost, IdentityAggregate, Player, QuadraticCost, SamplingBox,
};
use dnes::{
    AggregativeGame, AlgorithmParams, ConvexSet, GameConstants, IntegratorConfig, Matrix, Method,
    SwitchingSchedule, Vector, WeightedDigraph,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "yes")]
    pub require_assumptions: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<Spanned<GameSpec>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sets: Vec<Spanned<SetSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<Spanned<NetworkSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Spanned<ParamsSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Spanned<IntegratorSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Spanned<InitSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ne: Option<Spanned<NeSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<Spanned<ConstantsSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Spanned<BoundsSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Spanned<CriteriaSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Spanned<OutputSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameSpec {
    /// `½aᵢ‖xᵢ‖² + bᵢᵀxᵢ + dᵢxᵢᵀσ`, with identity or per-player affine aggregates.
    Quadratic {
        a: Vec<f64>,
        b: Vec<Vec<f64>>,
        d: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        aggregates: Vec<AffineSpec>,
    },
    /// `qᵢᵀxᵢ − (P₀ − γσ)ᵀxᵢ` with identity aggregates.
    Cournot {
        max_price: f64,
        slope: f64,
        unit_cost: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex { dim: usize, scale: f64 },
    Halfspaces { faces: Vec<FaceSpec>, interior: Vec<f64> },
    WholeSpace { dim: usize },
    Product { parts: Vec<SetSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Node count; defaults to the number of players.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    pub graphs: Vec<GraphSpec>,
    /// Graph index for each interval; defaults to `0, 1, ..`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Vec<usize>>,
    pub dwell: Dwell,
    #[serde(default = "yes")]
    pub periodic: bool,
    /// Joint-connectivity window; defaults to the period (periodic) or the
    /// number of graphs times the dwell time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default = "default_balance_tol")]
    pub balance_tol: f64,
}

fn default_balance_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dwell {
    Uniform(f64),
    Each(Vec<f64>),
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    /// `weights[i][j] > 0` is an edge `j → i`.
    Matrix { weights: Vec<Vec<f64>> },
    /// `[from, to, weight]` triples.
    Edges { edges: Vec<(usize, usize, f64)> },
    Ring {
        #[serde(default = "unit")]
        weight: f64,
        #[serde(default)]
        bidirectional: bool,
    },
    Star {
        #[serde(default)]
        center: usize,
        #[serde(default = "unit")]
        weight: f64,
        #[serde(default = "yes")]
        bidirectional: bool,
    },
    SplitRing {
        k: usize,
        #[serde(default = "unit")]
        weight: f64,
    },
    Cycles {
        groups: Vec<Vec<usize>>,
        #[serde(default = "unit")]
        weight: f64,
    },
    Complete {
        #[serde(default = "unit")]
        weight: f64,
    },
    Edgeless,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub delta1: f64,
    pub delta2: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn default_feasibility_tol() -> f64 {
    1e-9
}

fn default_record_every() -> usize {
    1
}

fn euler() -> Method {
    Method::Euler
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default = "euler")]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_feasibility_tol")]
    pub feasibility_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conservation_tol: Option<f64>,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            method: Method::Euler,
            h: None,
            record_every: 1,
            feasibility_tol: default_feasibility_tol(),
            conservation_tol: None,
        }
    }
}

/// Explicit initial state; missing parts come from the seeded default draw.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
}

fn default_ne_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    100_000
}

fn default_vi_samples() -> usize {
    1000
}

fn default_vi_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default = "default_ne_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_vi_samples")]
    pub vi_samples: usize,
    #[serde(default = "default_vi_tol")]
    pub vi_tol: f64,
}

impl Default for NeSpec {
    fn default() -> Self {
        Self {
            k: None,
            tol: default_ne_tol(),
            max_iter: default_max_iter(),
            vi_samples: default_vi_samples(),
            vi_tol: default_vi_tol(),
        }
    }
}

fn default_sample_count() -> usize {
    10_000
}

/// Explicit constants override computed ones; `p` can only come from here.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default)]
    pub sample_seed: u64,
    /// `[lo, hi]` for sampling unbounded action sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_box: Option<(f64, f64)>,
}

impl Default for ConstantsSpec {
    fn default() -> Self {
        Self {
            mu: None,
            theta: None,
            theta_hat: None,
            l: None,
            p: None,
            sample_count: default_sample_count(),
            sample_seed: 0,
            sampling_box: None,
        }
    }
}

impl ConstantsSpec {
    pub fn sampling_box(&self) -> Option<SamplingBox> {
        self.sampling_box.map(|(lo, hi)| SamplingBox { lo, hi })
    }

    pub fn is_complete(&self) -> bool {
        self.mu.is_some() && self.theta.is_some() && self.theta_hat.is_some() && self.l.is_some()
    }

    /// Overlays the explicit values on computed constants.
    pub fn overlay(&self, base: GameConstants) -> GameConstants {
        GameConstants {
            mu: self.mu.unwrap_or(base.mu),
            theta: self.theta.unwrap_or(base.theta),
            theta_hat: self.theta_hat.unwrap_or(base.theta_hat),
            l: self.l.unwrap_or(base.l),
            p: self.p.or(base.p),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    /// Defaults to `params.delta1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    /// Defaults to `params.alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// Convergence requirements checked after a run.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_error: Option<f64>,
    /// Fitted rate must be strictly below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_below: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_r_squared: Option<f64>,
}

fn trajectory_name() -> String {
    "trajectory.csv".into()
}

fn report_name() -> String {
    "report.toml".into()
}

fn summary_name() -> String {
    "summary.csv".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "trajectory_name")]
    pub trajectory: String,
    #[serde(default = "report_name")]
    pub report: String,
    #[serde(default = "summary_name")]
    pub summary: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            trajectory: trajectory_name(),
            report: report_name(),
            summary: summary_name(),
        }
    }
}

/// A parsed configuration together with its source text, used to anchor
/// semantic errors to lines.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub name: String,
}

impl LoadedConfig {
    pub fn from_str(source: &str, name: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(source).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(source, s.start)),
            message: e.message().trim().to_string(),
        })?;
        Ok(Self {
            config,
            source: source.to_string(),
            name: name.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        Self::from_str(&source, &name)
    }

    fn error_at(&self, span: Option<Range<usize>>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: span.map(|s| line_of(&self.source, s.start)),
            message: message.into(),
        }
    }

    fn missing(&self, section: &str) -> ConfigError {
        ConfigError {
            line: None,
            message: format!("missing [{section}] section"),
        }
    }

    pub fn game(&self) -> Result<AggregativeGame, ConfigError> {
        let spec = self.config.game.as_ref().ok_or_else(|| self.missing("game"))?;
        let at = |msg: String| self.error_at(Some(spec.span()), msg);
        let players = match spec.get_ref() {
            GameSpec::Quadratic { a, .. } => a.len(),
            GameSpec::Cournot { unit_cost, .. } => unit_cost.len(),
        };
        if players == 0 {
            return Err(at("game needs at least one player".into()));
        }
        let sets = self.sets(players)?;
        let built = match spec.get_ref() {
            GameSpec::Quadratic { a, b, d, aggregates } => {
                if b.len() != players || d.len() != players {
                    return Err(at(format!(
                        "a, b and d must have one entry per player ({players})"
                    )));
                }
                let dim = b[0].len();
                if !aggregates.is_empty() && aggregates.len() != players {
                    return Err(at(format!(
                        "aggregates must be empty or list one map per player ({players})"
                    )));
                }
                let mut list = Vec::with_capacity(players);
                for (i, set) in sets.into_iter().enumerate() {
                    let cost = QuadraticCost::new(a[i], DVector::from_vec(b[i].clone()), d[i]);
                    let player = match aggregates.get(i) {
                        None => Player::new(cost, IdentityAggregate { dim }, set),
                        Some(aff) => {
                            let matrix = matrix_from_rows(&aff.matrix)
                                .map_err(|m| at(format!("aggregate {i}: {m}")))?;
                            let map = AffineAggregate::new(matrix, DVector::from_vec(aff.offset.clone()))
                                .map_err(|e| at(format!("aggregate {i}: {e}")))?;
                            Player::new(cost, map, set)
                        }
                    };
                    list.push(player);
                }
                AggregativeGame::new(list, dim)
            }
            GameSpec::Cournot {
                max_price,
                slope,
                unit_cost,
            } => {
                let dim = unit_cost[0].len();
                let list = unit_cost
                    .iter()
                    .zip(sets)
                    .map(|(q, set)| {
                        Player::new(
                            CournotCost::new(*max_price, *slope, DVector::from_vec(q.clone())),
                            IdentityAggregate { dim },
                            set,
                        )
                    })
                    .collect();
                AggregativeGame::new(list, dim)
            }
        };
        built.map_err(|e| at(e.to_string()))
    }

    /// One set per player, or a single set shared by all.
    fn sets(&self, players: usize) -> Result<Vec<ConvexSet>, ConfigError> {
        let specs = &self.config.sets;
        if specs.is_empty() {
            return Err(self.missing("sets"));
        }
        if specs.len() != 1 && specs.len() != players {
            return Err(self.error_at(
                Some(specs[0].span()),
                format!("expected 1 or {players} [[sets]] entries, got {}", specs.len()),
            ));
        }
        let built: Vec<ConvexSet> = specs
            .iter()
            .map(|s| build_set(s.get_ref()).map_err(|m| self.error_at(Some(s.span()), m)))
            .collect::<Result<_, _>>()?;
        Ok(if built.len() == 1 {
            vec![built[0].clone(); players]
        } else {
            built
        })
    }

    pub fn node_count(&self) -> Result<usize, ConfigError> {
        let spec = self.config.network.as_ref().ok_or_else(|| self.missing("network"))?;
        if let Some(n) = spec.get_ref().nodes {
            return Ok(n);
        }
        match self.config.game.as_ref().map(|g| g.get_ref()) {
            Some(GameSpec::Quadratic { a, .. }) => Ok(a.len()),
            Some(GameSpec::Cournot { unit_cost, .. }) => Ok(unit_cost.len()),
            None => Err(self.error_at(
                Some(spec.span()),
                "network.nodes is required when there is no [game] section",
            )),
        }
    }

    pub fn schedule(&self) -> Result<SwitchingSchedule, ConfigError> {
        let spanned = self.config.network.as_ref().ok_or_else(|| self.missing("network"))?;
        let spec = spanned.get_ref();
        let at = |msg: String| self.error_at(Some(spanned.span()), msg);
        let n = self.node_count()?;
        let graphs: Vec<WeightedDigraph> = spec
            .graphs
            .iter()
            .enumerate()
            .map(|(k, g)| build_graph(g, n).map_err(|m| at(format!("graph {k}: {m}"))))
            .collect::<Result<_, _>>()?;
        let pattern = spec
            .pattern
            .clone()
            .unwrap_or_else(|| (0..graphs.len()).collect());
        let durations = match &spec.dwell {
            Dwell::Uniform(d) => vec![*d; pattern.len()],
            Dwell::Each(list) => list.clone(),
        };
        SwitchingSchedule::from_pattern(graphs, &pattern, &durations, spec.periodic)
            .map_err(|e| at(e.to_string()))
    }

    pub fn window(&self, schedule: &SwitchingSchedule) -> Result<f64, ConfigError> {
        let spec = self.config.network.as_ref().ok_or_else(|| self.missing("network"))?;
        Ok(spec.get_ref().window.unwrap_or_else(|| {
            schedule
                .period()
                .unwrap_or(schedule.graphs().len() as f64 * schedule.tau())
        }))
    }

    pub fn balance_tol(&self) -> f64 {
        self.config
            .network
            .as_ref()
            .map_or(default_balance_tol(), |n| n.get_ref().balance_tol)
    }

    pub fn params(&self) -> Result<AlgorithmParams, ConfigError> {
        let spec = self.config.params.as_ref().ok_or_else(|| self.missing("params"))?;
        let p = spec.get_ref();
        AlgorithmParams::new(p.delta1, p.delta2, p.alpha, p.beta)
            .map_err(|e| self.error_at(Some(spec.span()), e.to_string()))
    }

    /// Integrator settings with the default step filled in and validated.
    pub fn integrator(
        &self,
        params: &AlgorithmParams,
        schedule: &SwitchingSchedule,
    ) -> Result<IntegratorConfig, ConfigError> {
        let span = self.config.integrator.as_ref().map(|s| s.span());
        let spec = self
            .config
            .integrator
            .as_ref()
            .map(|s| *s.get_ref())
            .unwrap_or_default();
        let h = spec
            .h
            .unwrap_or_else(|| IntegratorConfig::default_step(params, schedule));
        let mut config = IntegratorConfig::new(spec.method, h).with_record_every(spec.record_every);
        config.feasibility_tol = spec.feasibility_tol;
        config.conservation_tol = spec.conservation_tol;
        config.allow_unbalanced = !self.config.require_assumptions;
        config
            .validate(params)
            .map_err(|e| self.error_at(span, e.to_string()))?;
        Ok(config)
    }

    pub fn init_spec(&self) -> (InitSpec, Option<Range<usize>>) {
        match &self.config.init {
            Some(s) => (s.get_ref().clone(), Some(s.span())),
            None => (InitSpec::default(), None),
        }
    }

    pub fn init_error(&self, span: Option<Range<usize>>, message: String) -> ConfigError {
        self.error_at(span, message)
    }

    pub fn ne(&self) -> NeSpec {
        self.config.ne.as_ref().map(|s| *s.get_ref()).unwrap_or_default()
    }

    pub fn constants_spec(&self) -> ConstantsSpec {
        self.config
            .constants
            .as_ref()
            .map(|s| *s.get_ref())
            .unwrap_or_default()
    }

    pub fn bounds_spec(&self) -> BoundsSpec {
        self.config.bounds.as_ref().map(|s| *s.get_ref()).unwrap_or_default()
    }

    pub fn criteria(&self) -> CriteriaSpec {
        self.config.criteria.as_ref().map(|s| *s.get_ref()).unwrap_or_default()
    }

    pub fn output(&self) -> OutputSpec {
        self.config
            .output
            .as_ref()
            .map(|s| s.get_ref().clone())
            .unwrap_or_default()
    }

    pub fn constants_error(&self, message: String) -> ConfigError {
        self.error_at(self.config.constants.as_ref().map(|s| s.span()), message)
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err("matrix rows have different lengths".into());
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn vector(values: &[f64]) -> Vector {
    DVector::from_vec(values.to_vec())
}

pub fn build_set(spec: &SetSpec) -> Result<ConvexSet, String> {
    let set = match spec {
        SetSpec::Box { lo, hi } => ConvexSet::new_box(vector(lo), vector(hi)),
        SetSpec::Ball { center, radius } => ConvexSet::ball(vector(center), *radius),
        SetSpec::Simplex { dim, scale } => ConvexSet::simplex(*dim, *scale),
        SetSpec::Halfspaces { faces, interior } => ConvexSet::halfspaces(
            faces
                .iter()
                .map(|f| Halfspace::new(vector(&f.normal), f.offset))
                .collect(),
            vector(interior),
        ),
        SetSpec::WholeSpace { dim } => ConvexSet::whole_space(*dim),
        SetSpec::Product { parts } => {
            let built = parts.iter().map(build_set).collect::<Result<Vec<_>, _>>()?;
            ConvexSet::product(built)
        }
    };
    set.map_err(|e| e.to_string())
}

pub fn build_graph(spec: &GraphSpec, n: usize) -> Result<WeightedDigraph, String> {
    let graph = match spec {
        GraphSpec::Matrix { weights } => {
            let m = matrix_from_rows(weights)?;
            if m.nrows() != n || m.ncols() != n {
                return Err(format!("weight matrix must be {n}x{n}"));
            }
            WeightedDigraph::new(m)
        }
        GraphSpec::Edges { edges } => WeightedDigraph::from_edges(n, edges),
        GraphSpec::Ring {
            weight,
            bidirectional,
        } => WeightedDigraph::ring(n, *weight, *bidirectional),
        GraphSpec::Star {
            center,
            weight,
            bidirectional,
        } => WeightedDigraph::star(n, *center, *weight, *bidirectional),
        GraphSpec::SplitRing { k, weight } => WeightedDigraph::split_ring(n, *k, *weight),
        GraphSpec::Cycles { groups, weight } => WeightedDigraph::cycles(n, groups, *weight),
        GraphSpec::Complete { weight } => WeightedDigraph::complete(n, *weight),
        GraphSpec::Edgeless => WeightedDigraph::edgeless(n),
    };
    graph.map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
seed = 3

[game]
family = "quadratic"
a = [2.0, 3.0]
b = [[0.1], [-0.2]]
d = [0.5, 0.5]

[[sets]]
kind = "box"
lo = [-1.0]
hi = [1.0]

[network]
graphs = [{ kind = "ring", bidirectional = true }]
dwell = 0.5

[params]
delta1 = 0.1
delta2 = 1.0
alpha = 1.0
beta = 1.0
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = LoadedConfig::from_str(SMALL, "small").unwrap();
        let game = cfg.game().unwrap();
        assert_eq!(game.num_players(), 2);
        let schedule = cfg.schedule().unwrap();
        assert_eq!(schedule.node_count(), 2);
        assert_eq!(cfg.window(&schedule).unwrap(), 0.5);
        let params = cfg.params().unwrap();
        let integ = cfg.integrator(&params, &schedule).unwrap();
        assert_eq!(integ.method, Method::Euler);
        assert!((integ.h - 0.05).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let text = SMALL.replace("beta = 1.0", "beta = 1.0\ngamma = 2.0");
        let err = LoadedConfig::from_str(&text, "bad").unwrap_err();
        assert_eq!(err.line, Some(text.lines().position(|l| l.starts_with("gamma")).unwrap() + 1));
    }

    #[test]
    fn semantic_error_points_at_section() {
        let text = SMALL.replace("delta2 = 1.0", "delta2 = -1.0");
        let cfg = LoadedConfig::from_str(&text, "bad").unwrap();
        let err = cfg.params().unwrap_err();
        let header = text.lines().position(|l| l == "[params]").unwrap() + 1;
        assert_eq!(err.line, Some(header));
        assert!(err.to_string().contains("delta2"));
    }

    #[test]
    fn set_count_must_match() {
        let text = SMALL.replace(
            "[network]",
            "[[sets]]\nkind = \"whole-space\"\ndim = 1\n\n[[sets]]\nkind = \"whole-space\"\ndim = 1\n\n[network]",
        );
        let cfg = LoadedConfig::from_str(&text, "bad").unwrap();
        assert!(cfg.game().is_err());
    }
}
