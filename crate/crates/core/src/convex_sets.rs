//! Closed convex action sets and their Euclidean projections.
//!
//! Every variant is closed and convex by construction: the constructors
//! reject descriptions that would be empty or degenerate, so a [`ConvexSet`]
//! value always has a well-defined unique nearest point for any query.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::check_dim;
use crate::{Error, Result, Vector};

/// Successive-iterate change at which Dykstra's method stops.
pub const DYKSTRA_TOL: f64 = 1e-12;
/// Sweep budget for Dykstra's method.
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;

/// Box vertices are enumerated only up to this dimension.
const MAX_VERTEX_DIM: usize = 12;

/// A closed halfspace `{x : normal·x <= offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vector,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vector, offset: f64) -> Self {
        Self { normal, offset }
    }

    fn violation(&self, y: &Vector) -> f64 {
        self.normal.dot(y) - self.offset
    }

    fn project(&self, y: &Vector) -> Vector {
        let excess = self.violation(y);
        if excess <= 0.0 {
            y.clone()
        } else {
            y - &self.normal * (excess / self.normal.norm_squared())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    Box {
        lo: Vector,
        hi: Vector,
    },
    Ball {
        center: Vector,
        radius: f64,
    },
    /// `{x >= 0, sum(x) = scale}`
    Simplex {
        dim: usize,
        scale: f64,
    },
    Halfspaces {
        faces: Vec<Halfspace>,
        interior: Vector,
    },
    Product(Vec<ConvexSet>),
    WholeSpace(usize),
}

/// A nonempty closed convex subset of `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSet {
    kind: SetKind,
    dim: usize,
}

impl ConvexSet {
    pub fn new_box(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim("box bounds", lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::InvalidSet("box must have dimension >= 1".into()));
        }
        for (k, (l, h)) in lo.iter().zip(hi.iter()).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidSet(format!("box bound {k} is not finite")));
            }
            if l > h {
                return Err(Error::InvalidSet(format!(
                    "box lower bound {l} exceeds upper bound {h} in component {k}"
                )));
            }
        }
        let dim = lo.len();
        Ok(Self {
            kind: SetKind::Box { lo, hi },
            dim,
        })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidSet("ball must have dimension >= 1".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidSet(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let dim = center.len();
        Ok(Self {
            kind: SetKind::Ball { center, radius },
            dim,
        })
    }

    pub fn simplex(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("simplex must have dimension >= 1".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidSet(format!(
                "simplex scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            kind: SetKind::Simplex { dim, scale },
            dim,
        })
    }

    /// Intersection of halfspaces. `interior` must satisfy every constraint;
    /// it certifies that the intersection is nonempty.
    pub fn halfspaces(faces: Vec<Halfspace>, interior: Vector) -> Result<Self> {
        let dim = interior.len();
        if dim == 0 {
            return Err(Error::InvalidSet(
                "halfspace intersection must have dimension >= 1".into(),
            ));
        }
        for (k, face) in faces.iter().enumerate() {
            check_dim("halfspace normal", dim, face.normal.len())?;
            if face.normal.norm() == 0.0 || !face.offset.is_finite() {
                return Err(Error::InvalidSet(format!("halfspace {k} is degenerate")));
            }
            if face.violation(&interior) > 0.0 {
                return Err(Error::InvalidSet(format!(
                    "supplied interior point violates halfspace {k}"
                )));
            }
        }
        Ok(Self {
            kind: SetKind::Halfspaces { faces, interior },
            dim,
        })
    }

    pub fn product(parts: Vec<ConvexSet>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidSet("product of zero sets".into()));
        }
        let dim = parts.iter().map(ConvexSet::dim).sum();
        Ok(Self {
            kind: SetKind::Product(parts),
            dim,
        })
    }

    pub fn whole_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("space must have dimension >= 1".into()));
        }
        Ok(Self {
            kind: SetKind::WholeSpace(dim),
            dim,
        })
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_bounded(&self) -> bool {
        match &self.kind {
            SetKind::Box { .. } | SetKind::Ball { .. } | SetKind::Simplex { .. } => true,
            SetKind::Product(parts) => parts.iter().all(ConvexSet::is_bounded),
            // A halfspace intersection may or may not be bounded; treat it as
            // unbounded for sampling purposes.
            SetKind::Halfspaces { .. } | SetKind::WholeSpace(_) => false,
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        check_dim("projection input", self.dim, y.len())?;
        Ok(match &self.kind {
            SetKind::Box { lo, hi } => {
                DVector::from_fn(y.len(), |k, _| y[k].max(lo[k]).min(hi[k]))
            }
            SetKind::Ball { center, radius } => {
                let offset = y - center;
                let dist = offset.norm();
                if dist <= *radius {
                    y.clone()
                } else {
                    center + offset * (*radius / dist)
                }
            }
            SetKind::Simplex { scale, .. } => project_simplex(y, *scale),
            SetKind::Halfspaces { faces, .. } => project_halfspaces(faces, y)?,
            SetKind::Product(parts) => {
                let mut out = DVector::zeros(self.dim);
                let mut offset = 0;
                for part in parts {
                    let d = part.dim();
                    let block = part.project(&y.rows(offset, d).into_owned())?;
                    out.rows_mut(offset, d).copy_from(&block);
                    offset += d;
                }
                out
            }
            SetKind::WholeSpace(_) => y.clone(),
        })
    }

    /// Distance from `y` to the set.
    pub fn distance(&self, y: &Vector) -> Result<f64> {
        Ok((y - self.project(y)?).norm())
    }

    /// Whether `y` lies within distance `tol` of the set.
    pub fn contains(&self, y: &Vector, tol: f64) -> Result<bool> {
        Ok(self.distance(y)? <= tol)
    }

    /// Draws a point of the set. Returns `None` for sets that are not known
    /// to be bounded.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vector> {
        match &self.kind {
            SetKind::Box { lo, hi } => Some(DVector::from_fn(self.dim, |k, _| {
                lo[k] + (hi[k] - lo[k]) * rng.random::<f64>()
            })),
            SetKind::Ball { center, radius } => {
                let dir = standard_normal(self.dim, rng);
                let norm = dir.norm();
                let r = radius * rng.random::<f64>().powf(1.0 / self.dim as f64);
                if norm == 0.0 {
                    Some(center.clone())
                } else {
                    Some(center + dir * (r / norm))
                }
            }
            SetKind::Simplex { dim, scale } => {
                let draws = DVector::from_fn(*dim, |_, _| {
                    let e: f64 = Exp1.sample(rng);
                    e
                });
                let total = draws.sum();
                Some(draws * (*scale / total))
            }
            SetKind::Product(parts) => {
                let mut out = DVector::zeros(self.dim);
                let mut offset = 0;
                for part in parts {
                    let block = part.sample(rng)?;
                    out.rows_mut(offset, part.dim()).copy_from(&block);
                    offset += part.dim();
                }
                Some(out)
            }
            SetKind::Halfspaces { .. } | SetKind::WholeSpace(_) => None,
        }
    }

    /// Draws a point of the set: native sampling for bounded variants,
    /// otherwise a uniform draw from `[lo, hi]^n` projected onto the set.
    pub fn sample_with_box<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        lo: f64,
        hi: f64,
    ) -> Result<Vector> {
        if let Some(x) = self.sample(rng) {
            return Ok(x);
        }
        let raw = DVector::from_fn(self.dim, |_, _| lo + (hi - lo) * rng.random::<f64>());
        self.project(&raw)
    }

    /// Extreme points, when finitely many and few enough to enumerate.
    pub fn vertices(&self) -> Option<Vec<Vector>> {
        match &self.kind {
            SetKind::Box { lo, hi } if self.dim <= MAX_VERTEX_DIM => {
                let count = 1usize << self.dim;
                Some(
                    (0..count)
                        .map(|mask| {
                            DVector::from_fn(self.dim, |k, _| {
                                if mask & (1 << k) == 0 {
                                    lo[k]
                                } else {
                                    hi[k]
                                }
                            })
                        })
                        .collect(),
                )
            }
            SetKind::Simplex { dim, scale } => Some(
                (0..*dim)
                    .map(|k| {
                        let mut v = DVector::zeros(*dim);
                        v[k] = *scale;
                        v
                    })
                    .collect(),
            ),
            _ => None,
        }
    }
}

fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    DVector::from_fn(dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    })
}

/// Sort-and-threshold projection onto `{x >= 0, sum(x) = scale}`.
fn project_simplex(y: &Vector, scale: f64) -> Vector {
    let mut sorted: Vec<f64> = y.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - scale) / (j + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        }
    }
    y.map(|v| (v - threshold).max(0.0))
}

fn project_halfspaces(faces: &[Halfspace], y: &Vector) -> Result<Vector> {
    if faces.iter().all(|f| f.violation(y) <= 0.0) {
        return Ok(y.clone());
    }
    let mut x = y.clone();
    let mut increments: Vec<Vector> = vec![DVector::zeros(y.len()); faces.len()];
    let mut change = f64::INFINITY;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < DYKSTRA_MAX_SWEEPS {
        sweeps += 1;
        let previous = x.clone();
        let mut increment_change: f64 = 0.0;
        for (face, inc) in faces.iter().zip(increments.iter_mut()) {
            let z = &x + &*inc;
            x = face.project(&z);
            let next = z - &x;
            increment_change = increment_change.max((&next - &*inc).norm());
            *inc = next;
        }
        change = (&x - &previous).norm().max(increment_change);
        if change <= DYKSTRA_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ProjectionNotConverged {
            last: x,
            residual: change,
            sweeps,
        });
    }
    Ok(polish_active_set(faces, y, &x).unwrap_or(x))
}

/// Refines a Dykstra iterate by solving the equality-constrained projection on
/// the constraints active there. Returns the refined point only when it passes
/// the KKT conditions (nonnegative multipliers, primal feasibility).
fn polish_active_set(faces: &[Halfspace], y: &Vector, approx: &Vector) -> Option<Vector> {
    let scale = 1.0 + y.norm();
    let active: Vec<&Halfspace> = faces
        .iter()
        .filter(|f| f.violation(approx) >= -1e-9 * scale * f.normal.norm())
        .collect();
    if active.is_empty() {
        return None;
    }
    let dim = y.len();
    let a = DMatrix::from_fn(active.len(), dim, |r, c| active[r].normal[c]);
    let rhs = DVector::from_fn(active.len(), |r, _| active[r].violation(y));
    let gram = &a * a.transpose();
    let multipliers = gram.svd(true, true).solve(&rhs, 1e-14).ok()?;
    if multipliers.iter().any(|&m| m < -1e-12) {
        return None;
    }
    let z = y - a.transpose() * &multipliers;
    let feasible = faces
        .iter()
        .all(|f| f.violation(&z) <= 1e-13 * scale * f.normal.norm());
    let close = (&z - approx).norm() <= 1e-6 * scale;
    (feasible && close).then_some(z)
}
