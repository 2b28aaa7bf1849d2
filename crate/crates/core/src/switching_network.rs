//! Weighted digraphs, dwell-time switching schedules and the joint
//! connectivity / weight-balance checks the consensus filter relies on.
//!
//! Weights follow the receiving convention: `a[i][j] > 0` is an edge `(j, i)`,
//! meaning node `i` receives from node `j`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// Relative slack when comparing segment lengths against the dwell time.
const DWELL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: Matrix,
}

impl WeightedDigraph {
    pub fn new(weights: Matrix) -> Result<Self> {
        if !weights.is_square() || weights.nrows() == 0 {
            return Err(Error::InvalidGraph(
                "weight matrix must be square and non-empty".into(),
            ));
        }
        for i in 0..weights.nrows() {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            for j in 0..weights.ncols() {
                let w = weights[(i, j)];
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::InvalidGraph(format!(
                        "weight a[{i}][{j}] = {w} is not a nonnegative number"
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn edgeless(n: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n, n))
    }

    /// Builds a graph from directed edges `(from, to, weight)`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for &(from, to, weight) in edges {
            if from >= n || to >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({from}, {to}) references a node outside 0..{n}"
                )));
            }
            w[(to, from)] = weight;
        }
        Self::new(w)
    }

    /// Directed ring `0 → 1 → … → N−1 → 0`, or both directions.
    pub fn ring(n: usize, weight: f64, bidirectional: bool) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            let next = (i + 1) % n;
            if next != i {
                edges.push((i, next, weight));
                if bidirectional {
                    edges.push((next, i, weight));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Star with edges out of `center` (and back, if bidirectional).
    pub fn star(n: usize, center: usize, weight: f64, bidirectional: bool) -> Result<Self> {
        let mut edges = Vec::new();
        for i in (0..n).filter(|&i| i != center) {
            edges.push((center, i, weight));
            if bidirectional {
                edges.push((i, center, weight));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Half `k ∈ {0, 1}` of the bidirectional ring: the undirected links
    /// `{i, i+1}` with `i ≡ k (mod 2)`. Both halves are symmetric (hence
    /// weight-balanced); their union is the full bidirectional ring.
    pub fn split_ring(n: usize, k: usize, weight: f64) -> Result<Self> {
        if k > 1 {
            return Err(Error::InvalidGraph(format!("split-ring half must be 0 or 1, got {k}")));
        }
        let mut edges = Vec::new();
        for i in (0..n).filter(|i| i % 2 == k) {
            let next = (i + 1) % n;
            if next != i {
                edges.push((i, next, weight));
                edges.push((next, i, weight));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Disjoint directed cycles, one per group. Every node on a cycle has equal
    /// in- and out-weight, so the graph is weight-balanced.
    pub fn cycles(n: usize, groups: &[Vec<usize>], weight: f64) -> Result<Self> {
        let mut edges = Vec::new();
        for group in groups {
            if group.len() < 2 {
                continue;
            }
            for (k, &from) in group.iter().enumerate() {
                let to = group[(k + 1) % group.len()];
                edges.push((from, to, weight));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize, weight: f64) -> Result<Self> {
        let mut w = DMatrix::from_element(n, n, weight);
        w.fill_diagonal(0.0);
        Self::new(w)
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    pub fn out_degree(&self, i: usize) -> f64 {
        self.weights.column(i).sum()
    }

    pub fn max_in_degree(&self) -> f64 {
        (0..self.node_count())
            .map(|i| self.in_degree(i))
            .fold(0.0, f64::max)
    }

    /// `L = D − A` with `D` the diagonal of in-degrees.
    pub fn laplacian(&self) -> Matrix {
        let n = self.node_count();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.in_degree(i);
        }
        l
    }

    /// In-degree equals out-degree at every node, within `tol`.
    pub fn is_weight_balanced(&self, tol: f64) -> bool {
        (0..self.node_count()).all(|i| (self.in_degree(i) - self.out_degree(i)).abs() <= tol)
    }

    /// Some node reaches every other node along directed edges.
    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        (0..n).any(|root| self.reachable_from(root) == n)
    }

    pub fn is_strongly_connected(&self) -> bool {
        let n = self.node_count();
        (0..n).all(|root| self.reachable_from(root) == n)
    }

    fn reachable_from(&self, root: usize) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if !seen[v] && self.weights[(v, u)] > 0.0 {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    /// Elementwise maximum of weights: union of edge sets.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.node_count() != other.node_count() {
            return Err(Error::InvalidGraph("union of graphs with different node counts".into()));
        }
        Ok(Self {
            weights: self.weights.zip_map(&other.weights, f64::max),
        })
    }

    pub fn laplacian_operator(&self) -> LaplacianOperator {
        let n = self.node_count();
        let in_edges = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| self.weights[(i, j)] > 0.0)
                    .map(|j| (j, self.weights[(i, j)]))
                    .collect()
            })
            .collect();
        LaplacianOperator { in_edges }
    }
}

/// Action of `L ⊗ I_n` on stacked vectors, applied blockwise from adjacency
/// lists without forming the Kronecker product.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianOperator {
    in_edges: Vec<Vec<(usize, f64)>>,
}

impl LaplacianOperator {
    pub fn node_count(&self) -> usize {
        self.in_edges.len()
    }

    /// `((L ⊗ I_n) s)ᵢ = Σⱼ aᵢⱼ (sᵢ − sⱼ)`.
    pub fn apply(&self, s: &Vector, n: usize) -> Vector {
        let mut out = DVector::zeros(s.len());
        for (i, edges) in self.in_edges.iter().enumerate() {
            let si = s.rows(i * n, n);
            let mut acc = DVector::zeros(n);
            for &(j, w) in edges {
                acc += (si - s.rows(j * n, n)) * w;
            }
            out.rows_mut(i * n, n).copy_from(&acc);
        }
        out
    }
}

/// A constant-graph interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub graph: usize,
}

/// Piecewise-constant switching among a finite family of graphs, with
/// intervals `[t_j, t_{j+1})` at least `tau` long.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSchedule {
    graphs: Vec<WeightedDigraph>,
    instants: Vec<f64>,
    indices: Vec<usize>,
    tau: f64,
    /// End of the pattern; the period when `periodic`.
    pattern_end: f64,
    periodic: bool,
}

impl SwitchingSchedule {
    /// `instants[j]` starts the interval that uses `graphs[indices[j]]`; the
    /// last interval ends at `pattern_end`. A periodic schedule repeats the
    /// pattern forever with period `pattern_end`.
    pub fn new(
        graphs: Vec<WeightedDigraph>,
        instants: Vec<f64>,
        indices: Vec<usize>,
        pattern_end: f64,
        tau: f64,
        periodic: bool,
    ) -> Result<Self> {
        let Some(first) = graphs.first() else {
            return Err(Error::InvalidSchedule("no graphs given".into()));
        };
        let n = first.node_count();
        if graphs.iter().any(|g| g.node_count() != n) {
            return Err(Error::InvalidSchedule("graphs have different node counts".into()));
        }
        if instants.is_empty() || instants.len() != indices.len() {
            return Err(Error::InvalidSchedule(
                "need one graph index per switching instant".into(),
            ));
        }
        if instants[0] != 0.0 {
            return Err(Error::InvalidSchedule("first switching instant must be 0".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidSchedule(format!("dwell time must be positive, got {tau}")));
        }
        if let Some(&bad) = indices.iter().find(|&&k| k >= graphs.len()) {
            return Err(Error::InvalidSchedule(format!(
                "graph index {bad} out of range ({} graphs)",
                graphs.len()
            )));
        }
        let ends = instants.iter().skip(1).chain(std::iter::once(&pattern_end));
        for (j, (&start, &end)) in instants.iter().zip(ends).enumerate() {
            if !(end > start) {
                return Err(Error::InvalidSchedule(format!(
                    "switching instants must be strictly increasing (interval {j})"
                )));
            }
            if end - start < tau * (1.0 - DWELL_SLACK) {
                return Err(Error::InvalidSchedule(format!(
                    "interval {j} lasts {} which is shorter than the dwell time {tau}",
                    end - start
                )));
            }
        }
        Ok(Self {
            graphs,
            instants,
            indices,
            tau,
            pattern_end,
            periodic,
        })
    }

    /// Pattern given as graph indices and per-interval durations; the dwell
    /// time is the shortest duration.
    pub fn from_pattern(
        graphs: Vec<WeightedDigraph>,
        pattern: &[usize],
        durations: &[f64],
        periodic: bool,
    ) -> Result<Self> {
        if pattern.len() != durations.len() || pattern.is_empty() {
            return Err(Error::InvalidSchedule(
                "pattern and durations must be non-empty and of equal length".into(),
            ));
        }
        let mut instants = Vec::with_capacity(pattern.len());
        let mut t = 0.0;
        for &d in durations {
            instants.push(t);
            t += d;
        }
        let tau = durations.iter().copied().fold(f64::INFINITY, f64::min);
        Self::new(graphs, instants, pattern.to_vec(), t, tau, periodic)
    }

    /// A single graph repeated with period `tau`.
    pub fn fixed(graph: WeightedDigraph, tau: f64) -> Result<Self> {
        Self::new(vec![graph], vec![0.0], vec![0], tau, tau, true)
    }

    pub fn graphs(&self) -> &[WeightedDigraph] {
        &self.graphs
    }

    pub fn node_count(&self) -> usize {
        self.graphs[0].node_count()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn period(&self) -> Option<f64> {
        self.periodic.then_some(self.pattern_end)
    }

    /// Last time covered: infinite for periodic schedules.
    pub fn horizon(&self) -> f64 {
        if self.periodic {
            f64::INFINITY
        } else {
            self.pattern_end
        }
    }

    pub fn pattern_instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn pattern_indices(&self) -> &[usize] {
        &self.indices
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.horizon() || t.is_nan() {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon(),
            });
        }
        Ok(())
    }

    /// Index of the graph active at `t` (intervals are right-open).
    pub fn graph_at(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let local = if self.periodic {
            let cycles = (t / self.pattern_end).floor();
            let r = t - cycles * self.pattern_end;
            if r >= self.pattern_end {
                0.0
            } else {
                r.max(0.0)
            }
        } else {
            t
        };
        let j = self.instants.partition_point(|&s| s <= local);
        Ok(self.indices[j.saturating_sub(1)])
    }

    pub fn graph(&self, index: usize) -> &WeightedDigraph {
        &self.graphs[index]
    }

    /// Constant-graph intervals covering `[t0, t1)`, clipped to it.
    pub fn segments(&self, t0: f64, t1: f64) -> Result<Vec<Segment>> {
        self.check_time(t0)?;
        if t1 > self.horizon() * (1.0 + DWELL_SLACK) {
            return Err(Error::TimeOutOfRange {
                t: t1,
                horizon: self.horizon(),
            });
        }
        let mut out = Vec::new();
        if t1 <= t0 {
            return Ok(out);
        }
        let mut cycle = if self.periodic {
            (t0 / self.pattern_end).floor().max(0.0) as u64
        } else {
            0
        };
        loop {
            let base = cycle as f64 * self.pattern_end;
            for (j, &start) in self.instants.iter().enumerate() {
                let abs_start = base + start;
                let abs_end = base
                    + self
                        .instants
                        .get(j + 1)
                        .copied()
                        .unwrap_or(self.pattern_end);
                if abs_end <= t0 {
                    continue;
                }
                if abs_start >= t1 {
                    return Ok(out);
                }
                out.push(Segment {
                    start: abs_start.max(t0),
                    end: abs_end.min(t1),
                    graph: self.indices[j],
                });
            }
            if !self.periodic {
                return Ok(out);
            }
            cycle += 1;
        }
    }

    /// Union of the graphs active anywhere in `[t, t + window)`; weights of
    /// shared edges take the maximum.
    pub fn union_graph(&self, t: f64, window: f64) -> Result<WeightedDigraph> {
        if !(window > 0.0) {
            return Err(Error::Domain(format!("union window must be positive, got {window}")));
        }
        let segments = self.segments(t, t + window)?;
        let mut acc = WeightedDigraph::edgeless(self.node_count())?;
        for seg in segments {
            acc = acc.union(&self.graphs[seg.graph])?;
        }
        Ok(acc)
    }

    /// Largest in-degree over the graph family.
    pub fn max_in_degree(&self) -> f64 {
        self.graphs
            .iter()
            .map(WeightedDigraph::max_in_degree)
            .fold(0.0, f64::max)
    }

    pub fn all_weight_balanced(&self, tol: f64) -> bool {
        self.indices
            .iter()
            .all(|&k| self.graphs[k].is_weight_balanced(tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    pub start: f64,
    pub connected: bool,
}

/// Outcome of the joint-connectivity and weight-balance checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption4Report {
    pub window: f64,
    /// Weight balance of each graph in the family.
    pub weight_balanced: Vec<bool>,
    /// Connectivity of each graph on its own.
    pub instantaneous_connected: Vec<bool>,
    pub windows: Vec<WindowCheck>,
    pub jointly_connected: bool,
    /// Joint connectivity is established for window starts in
    /// `[0, verified_until]`; infinite for periodic schedules.
    pub verified_until: f64,
    /// Smallest multiple of the dwell time for which joint connectivity holds.
    pub smallest_window: Option<f64>,
}

impl Assumption4Report {
    pub fn all_weight_balanced(&self) -> bool {
        self.weight_balanced.iter().all(|&b| b)
    }

    pub fn passed(&self) -> bool {
        self.all_weight_balanced() && self.jointly_connected
    }
}

/// Checks weight balance of every graph and joint connectivity of every
/// window `[t_j, t_j + window)` anchored at a switching instant. Between
/// instants the active graph is constant, so the union over a window starting
/// inside an interval contains the union anchored at that interval's start.
pub fn verify_assumption4(
    schedule: &SwitchingSchedule,
    window: f64,
    tol: f64,
) -> Result<Assumption4Report> {
    if window < schedule.tau() * (1.0 - DWELL_SLACK) {
        return Err(Error::Domain(format!(
            "window {window} is shorter than the dwell time {}",
            schedule.tau()
        )));
    }
    let weight_balanced = schedule
        .graphs()
        .iter()
        .map(|g| g.is_weight_balanced(tol))
        .collect();
    let instantaneous_connected = schedule.graphs().iter().map(|g| g.is_connected()).collect();
    let (windows, verified_until) = joint_windows(schedule, window)?;
    let jointly_connected = !windows.is_empty() && windows.iter().all(|w| w.connected);

    let max_multiple = match schedule.period() {
        Some(period) => (period / schedule.tau()).ceil() as usize + 1,
        None => (schedule.horizon() / schedule.tau()).floor() as usize,
    };
    let mut smallest_window = None;
    for k in 1..=max_multiple {
        let candidate = k as f64 * schedule.tau();
        let (checks, _) = joint_windows(schedule, candidate)?;
        if !checks.is_empty() && checks.iter().all(|w| w.connected) {
            smallest_window = Some(candidate);
            break;
        }
    }
    Ok(Assumption4Report {
        window,
        weight_balanced,
        instantaneous_connected,
        windows,
        jointly_connected,
        verified_until,
        smallest_window,
    })
}

fn joint_windows(schedule: &SwitchingSchedule, window: f64) -> Result<(Vec<WindowCheck>, f64)> {
    let mut checks = Vec::new();
    let verified_until = if schedule.is_periodic() {
        f64::INFINITY
    } else {
        schedule.horizon() - window
    };
    for &start in schedule.pattern_instants() {
        if !schedule.is_periodic() && start > verified_until * (1.0 + DWELL_SLACK) + DWELL_SLACK {
            break;
        }
        let end = (start + window).min(schedule.horizon());
        let union = schedule.union_graph(start, end - start)?;
        checks.push(WindowCheck {
            start,
            connected: union.is_connected(),
        });
    }
    Ok((checks, verified_until.max(0.0)))
}
