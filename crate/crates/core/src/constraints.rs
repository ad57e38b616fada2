//! Area, volume and no-overlap constraints.
//!
//! The overlap measure between two weighted point sets is
//! `sum_{x in A} w(x) sum_{y in B, |x - y| < eps} w(y)`. Points of `B` are
//! bucketed in a uniform grid of cell size `eps`; for every `x` the matching
//! indices are sorted before summing, so the result is bitwise identical to
//! the plain double loop regardless of thread count.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::CurvatureField;
use crate::energy::PhaseField;
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("targets must be positive (m = {m}, e = {e})")]
    NonPositiveTarget { m: f64, e: f64 },
    #[error("need at least 4 radii strictly inside (h, eps0) = ({h}, {eps0}), got n_eps = {n_eps}")]
    InsufficientSamples { n_eps: usize, h: f64, eps0: f64 },
    #[error("phase areas sum to {sum}, total area target is {m}")]
    PhaseAreaMismatch { sum: f64, m: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub const DEFAULT_TOL: f64 = 1e-6;

fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// Targets of a constrained run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Total area `m`.
    pub area: f64,
    /// Per-phase areas, index `p - 1`; empty for single-phase runs.
    #[serde(default)]
    pub phase_areas: Vec<f64>,
    /// Enclosed volume `e`.
    pub volume: f64,
    /// Overlap threshold `eps0`; `None` disables the no-overlap gate.
    #[serde(default)]
    pub eps0: Option<f64>,
    /// Relative residual tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl ConstraintSet {
    pub fn new(area: f64, volume: f64) -> Self {
        ConstraintSet {
            area,
            phase_areas: Vec::new(),
            volume,
            eps0: None,
            tol: DEFAULT_TOL,
        }
    }

    /// Targets equal to the mesh's own measured area, volume and phase areas.
    pub fn measured(mesh: &TriMesh, phases: &PhaseField) -> Self {
        let phase_areas = if phases.n_phases() > 1 {
            phases.phase_areas(mesh)
        } else {
            Vec::new()
        };
        ConstraintSet {
            area: mesh.total_area(),
            phase_areas,
            volume: mesh.enclosed_volume(),
            eps0: None,
            tol: DEFAULT_TOL,
        }
    }

    pub fn validate(&self) -> Result<Isoperimetry, ConstraintError> {
        if !(self.tol > 0.0) {
            return Err(ConstraintError::Invalid(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if let Some(e0) = self.eps0 {
            if !(e0 > 0.0) {
                return Err(ConstraintError::Invalid(format!("eps0 must be positive, got {e0}")));
            }
        }
        if !self.phase_areas.is_empty() {
            if self.phase_areas.iter().any(|&a| !(a > 0.0)) {
                return Err(ConstraintError::Invalid("phase areas must be positive".into()));
            }
            let sum: f64 = self.phase_areas.iter().sum();
            if (sum - self.area).abs() > 1e-9 * self.area.abs() {
                return Err(ConstraintError::PhaseAreaMismatch { sum, m: self.area });
            }
        }
        isoperimetric_check(self.area, self.volume)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Isoperimetry {
    Feasible,
    /// Round-sphere equality, relative tolerance `1e-9`.
    Equality,
    Infeasible,
}

/// Admissibility of `(m, e)`: `(6 sqrt(pi) e)^(1/3) <= m^(1/2)`.
pub fn isoperimetric_check(m: f64, e: f64) -> Result<Isoperimetry, ConstraintError> {
    if !(m > 0.0 && e > 0.0) || !m.is_finite() || !e.is_finite() {
        return Err(ConstraintError::NonPositiveTarget { m, e });
    }
    let lhs = (6.0 * std::f64::consts::PI.sqrt() * e).cbrt();
    let rhs = m.sqrt();
    Ok(if (lhs - rhs).abs() <= 1e-9 * rhs {
        Isoperimetry::Equality
    } else if lhs < rhs {
        Isoperimetry::Feasible
    } else {
        Isoperimetry::Infeasible
    })
}

/// Point samples of a measure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedPoints {
    pub points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn new(points: Vec<Vector3<f64>>, weights: Vec<f64>) -> Self {
        assert_eq!(points.len(), weights.len());
        WeightedPoints { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Vertex samples of a phase measure.
///
/// Each vertex is assigned wholly to the phase with the largest incident face
/// area (ties go to the lower label) and weighted by its mixed area. Splitting
/// a vertex between phases would place identical atoms in both supports and
/// register as shared support at every radius.
pub fn phase_support(mesh: &TriMesh, curv: &CurvatureField, phases: &PhaseField, phase: u32) -> WeightedPoints {
    let mut out = WeightedPoints::default();
    for v in 0..mesh.n_vertices() {
        if dominant_phase(&phases.vertex_fractions(mesh, v)) == phase {
            out.points.push(mesh.vertices()[v]);
            out.weights.push(curv.area[v]);
        }
    }
    out
}

fn dominant_phase(fractions: &[(u32, f64)]) -> u32 {
    let mut best = fractions[0];
    for &(l, f) in &fractions[1..] {
        if f > best.1 || (f == best.1 && l < best.0) {
            best = (l, f);
        }
    }
    best.0
}

#[inline]
fn within(x: &Vector3<f64>, y: &Vector3<f64>, eps_sq: f64) -> bool {
    (x - y).norm_squared() < eps_sq
}

fn cell_of(p: &Vector3<f64>, eps: f64) -> [i64; 3] {
    [
        (p.x / eps).floor() as i64,
        (p.y / eps).floor() as i64,
        (p.z / eps).floor() as i64,
    ]
}

/// Product measure of the open `eps`-neighbourhood of the diagonal.
pub fn overlap_measure(a: &WeightedPoints, b: &WeightedPoints, eps: f64) -> f64 {
    assert!(eps > 0.0, "eps must be positive");
    let eps_sq = eps * eps;
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (j, y) in b.points.iter().enumerate() {
        grid.entry(cell_of(y, eps)).or_default().push(j);
    }
    let inner: Vec<f64> = a
        .points
        .par_iter()
        .map(|x| {
            let c = cell_of(x, eps);
            let mut hits: Vec<usize> = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(bucket) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            hits.extend(bucket.iter().copied().filter(|&j| within(x, &b.points[j], eps_sq)));
                        }
                    }
                }
            }
            hits.sort_unstable();
            let mut s = 0.0;
            for j in hits {
                s += b.weights[j];
            }
            s
        })
        .collect();
    let mut total = 0.0;
    for (w, s) in a.weights.iter().zip(inner) {
        total += w * s;
    }
    total
}

/// Reference `O(|A| |B|)` evaluation with the same summation order.
pub fn overlap_measure_brute_force(a: &WeightedPoints, b: &WeightedPoints, eps: f64) -> f64 {
    let eps_sq = eps * eps;
    let mut total = 0.0;
    for (x, w) in a.points.iter().zip(&a.weights) {
        let mut s = 0.0;
        for (y, wy) in b.points.iter().zip(&b.weights) {
            if within(x, y, eps_sq) {
                s += wy;
            }
        }
        total += w * s;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapSample {
    pub eps: f64,
    pub measure: f64,
    /// `eps^3 / eps0`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoOverlapReport {
    pub pass: bool,
    /// Least-squares slope of `log measure` against `log eps` over samples
    /// with non-zero measure (`None` with fewer than two).
    pub slope: Option<f64>,
    pub samples: Vec<OverlapSample>,
    /// Weight product of pairs closer than `1e-9 h`; a report-only proxy for
    /// shared support at mesh resolution.
    pub coincident_mass: f64,
}

/// Radii at the geometric midpoints of `n` equal log-bins spanning `(h, eps0)`.
pub fn sample_radii(h: f64, eps0: f64, n: usize) -> Vec<f64> {
    let (lh, l0) = (h.ln(), eps0.ln());
    (0..n)
        .map(|k| (lh + (l0 - lh) * (k as f64 + 0.5) / n as f64).exp())
        .collect()
}

pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Check `measure(eps) <= eps^3 / eps0` at `n_eps` radii in `(h, eps0)`,
/// `h` being the sampling resolution (mean edge length for meshes).
pub fn no_overlap_check(
    a: &WeightedPoints,
    b: &WeightedPoints,
    eps0: f64,
    n_eps: usize,
    h: f64,
) -> Result<NoOverlapReport, ConstraintError> {
    if n_eps < 4 || !(h > 0.0) || !(eps0 > h) {
        return Err(ConstraintError::InsufficientSamples { n_eps, h, eps0 });
    }
    let samples: Vec<OverlapSample> = sample_radii(h, eps0, n_eps)
        .into_iter()
        .map(|eps| OverlapSample {
            eps,
            measure: overlap_measure(a, b, eps),
            bound: eps * eps * eps / eps0,
        })
        .collect();
    let pass = samples.iter().all(|s| s.measure <= s.bound);
    let xs: Vec<f64> = samples.iter().map(|s| s.eps).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.measure).collect();
    Ok(NoOverlapReport {
        pass,
        slope: log_log_slope(&xs, &ys),
        samples,
        coincident_mass: overlap_measure(a, b, 1e-9 * h),
    })
}

/// Relative residuals of a configuration against its targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    pub area: f64,
    pub phase_areas: Vec<f64>,
    pub volume: f64,
    /// Total length of boundary edges of the whole surface.
    pub boundary_mass: f64,
}

impl Residuals {
    /// Largest absolute relative residual.
    pub fn max_abs(&self) -> f64 {
        self.phase_areas
            .iter()
            .fold(self.area.abs().max(self.volume.abs()), |m, r| m.max(r.abs()))
            .max(self.boundary_mass)
    }
}

pub fn constraint_residuals(mesh: &TriMesh, phases: &PhaseField, cs: &ConstraintSet) -> Residuals {
    let area = mesh.total_area();
    let phase_areas = if cs.phase_areas.is_empty() {
        Vec::new()
    } else {
        phases
            .phase_areas(mesh)
            .iter()
            .zip(&cs.phase_areas)
            .map(|(a, t)| (a - t) / t)
            .collect()
    };
    let boundary_mass = (0..mesh.n_edges())
        .filter(|&e| mesh.edge_faces(e)[1] == usize::MAX)
        .map(|e| mesh.edge_length(e))
        .sum();
    Residuals {
        area: (area - cs.area) / cs.area,
        phase_areas,
        volume: (mesh.enclosed_volume() - cs.volume) / cs.volume,
        boundary_mass,
    }
}

/// Cell-centred `n x n` grid on a unit square spanned by `u`, `v` from
/// `origin`, each point weighted `1/n^2`.
pub fn square_samples(origin: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, n: usize) -> WeightedPoints {
    let mut out = WeightedPoints::default();
    let w = 1.0 / (n * n) as f64;
    for i in 0..n {
        for j in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            let t = (j as f64 + 0.5) / n as f64;
            out.points.push(origin + u * s + v * t);
            out.weights.push(w);
        }
    }
    out
}
