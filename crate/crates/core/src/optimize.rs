//! Constrained minimization of the discrete energy over vertex positions.
//!
//! Augmented Lagrangian on the relative constraints
//! `c = ((A - m)/m, (V - e)/e, (A_i - m_i)/m_i ...)`:
//!
//! ```text
//! L(x) = E(x) - sum_k lambda_k c_k(x) + mu/2 sum_k c_k(x)^2
//! ```
//!
//! The inner loop is gradient descent with Armijo backtracking on `L` at fixed
//! `(lambda, mu)`; every accepted step is one iteration. Multipliers are
//! updated (`lambda <- lambda - mu c`) once the inner gradient falls below a
//! shrinking tolerance or the inner budget is spent, and `mu` grows when the
//! constraint violation has not dropped by a factor of four. Phase labels
//! are fixed. Rigid translations are projected out of every step.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    constraint_residuals, isoperimetric_check, no_overlap_check, phase_support, ConstraintError, ConstraintSet,
    Isoperimetry, Residuals,
};
use crate::curvature::curvature_field;
use crate::density::{DensityError, MaterialParams};
use crate::energy::{energy_terms, vertex_energy, EnergyError, EnergyTerms, PhaseField};
use crate::geometry::{vertex_local, Dual3, V3};
use crate::mesh::{MeshError, TriMesh};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("targets violate the isoperimetric inequality (m = {m}, e = {e}, reduced volume {v})")]
    Infeasible { m: f64, e: f64, v: f64 },
    #[error(
        "mesh quality collapsed at iteration {iteration} (min angle {min_angle:.3} deg, edge ratio {edge_ratio:.1}); \
         try a finer mesh or smaller steps"
    )]
    QualityCollapse {
        iteration: usize,
        min_angle: f64,
        edge_ratio: f64,
    },
    #[error("energy became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("non-finite gradient at vertex {vertex}")]
    DegenerateConfiguration { vertex: usize },
    #[error("initial phase {phase} area {area} is more than 20% away from its target {target}")]
    StartTooFar { phase: u32, area: f64, target: f64 },
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn default_max_iterations() -> usize {
    2000
}
fn default_grad_tol() -> f64 {
    1e-6
}
fn default_initial_penalty() -> f64 {
    1e3
}
fn default_penalty_growth() -> f64 {
    10.0
}
fn default_max_penalty() -> f64 {
    1e9
}
fn default_armijo() -> f64 {
    1e-4
}
fn default_shrink() -> f64 {
    0.5
}
fn default_max_backtracks() -> usize {
    40
}
fn default_initial_step() -> f64 {
    0.1
}
fn default_inner_tol() -> f64 {
    1e-2
}
fn default_inner_iterations() -> usize {
    100
}
fn default_min_angle() -> f64 {
    3.0
}
fn default_max_edge_ratio() -> f64 {
    50.0
}
fn default_perturbation() -> f64 {
    0.01
}

/// Optimizer settings. Every field has a default, so partial JSON is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_iterations: usize,
    /// Stop once the RMS per-vertex search field (the gradient of `L`, normal
    /// part if `normal_motion`) is below this and all
    /// constraint residuals are below the constraint tolerance.
    pub grad_tol: f64,
    /// Relative constraint tolerance; the effective value is the smaller of
    /// this and the constraint set's own tolerance.
    pub constraint_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Backtracking factor.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Curvature pairs kept for the limited-memory BFGS direction; 0 gives
    /// plain steepest descent.
    pub lbfgs_memory: usize,
    /// Move vertices along their normals only. Tangential motion leaves the
    /// shape unchanged but lets the descent collapse triangles.
    pub normal_motion: bool,
    /// First steepest-descent step moves the vertex with the largest gradient by this
    /// fraction of the mean edge length.
    pub initial_step: f64,
    /// First inner-loop gradient tolerance; divided by ten at every multiplier
    /// update, never below `grad_tol`.
    pub inner_tol: f64,
    pub inner_iterations: usize,
    pub min_angle_deg: f64,
    pub max_edge_ratio: f64,
    /// Jitter the start by `perturbation * mean edge length` with this seed.
    pub seed: Option<u64>,
    pub perturbation: f64,
    /// Reject steps leaving the ball of this radius about the origin.
    pub confinement_radius: Option<f64>,
    /// Upper bound on the boundary mass of the whole surface.
    pub boundary_mass_bound: Option<f64>,
    /// Radii per no-overlap check in multiphase runs.
    pub overlap_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iterations: default_max_iterations(),
            grad_tol: default_grad_tol(),
            constraint_tol: crate::constraints::DEFAULT_TOL,
            initial_penalty: default_initial_penalty(),
            penalty_growth: default_penalty_growth(),
            max_penalty: default_max_penalty(),
            armijo_c: default_armijo(),
            shrink: default_shrink(),
            max_backtracks: default_max_backtracks(),
            lbfgs_memory: 8,
            normal_motion: true,
            initial_step: default_initial_step(),
            inner_tol: default_inner_tol(),
            inner_iterations: default_inner_iterations(),
            min_angle_deg: default_min_angle(),
            max_edge_ratio: default_max_edge_ratio(),
            seed: None,
            perturbation: default_perturbation(),
            confinement_radius: None,
            boundary_mass_bound: None,
            overlap_samples: 6,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("constraint_tol", self.constraint_tol),
            ("initial_penalty", self.initial_penalty),
            ("max_penalty", self.max_penalty),
            ("armijo_c", self.armijo_c),
            ("initial_step", self.initial_step),
            ("inner_tol", self.inner_tol),
            ("max_edge_ratio", self.max_edge_ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(OptimizeError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.penalty_growth >= 1.0) {
            return Err(OptimizeError::Config("penalty_growth must be >= 1".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(OptimizeError::Config("shrink must lie in (0, 1)".into()));
        }
        if !(self.armijo_c < 1.0) {
            return Err(OptimizeError::Config("armijo_c must be < 1".into()));
        }
        if self.max_backtracks == 0 || self.inner_iterations == 0 {
            return Err(OptimizeError::Config(
                "backtrack and inner budgets must be positive".into(),
            ));
        }
        if self.overlap_samples < 4 {
            return Err(OptimizeError::Config("overlap_samples must be >= 4".into()));
        }
        if !(self.min_angle_deg >= 0.0 && self.perturbation >= 0.0) {
            return Err(OptimizeError::Config(
                "min_angle_deg and perturbation must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Gradient of the discrete energy with respect to every vertex position.
///
/// Each vertex energy depends on the positions in its star, so the gradient
/// at `p` collects the contributions of `p` and its one-ring neighbours,
/// evaluated with `x_p` seeded as a dual number.
pub fn energy_gradient(
    mesh: &TriMesh,
    phases: &PhaseField,
    params: &[MaterialParams],
) -> Result<Vec<Vector3<f64>>, OptimizeError> {
    if params.len() != phases.n_phases() {
        return Err(EnergyError::PhaseCountMismatch {
            phases: phases.n_phases(),
            params: params.len(),
        }
        .into());
    }
    let verts = mesh.vertices();
    let mut grad: Vec<Vector3<f64>> = (0..mesh.n_vertices())
        .into_par_iter()
        .map(|p| {
            let xp = verts[p];
            let seeded = V3([Dual3::seeded(xp.x, 0), Dual3::seeded(xp.y, 1), Dual3::seeded(xp.z, 2)]);
            let pos = |i: usize| {
                if i == p {
                    seeded
                } else {
                    let q = verts[i];
                    V3([Dual3::constant(q.x), Dual3::constant(q.y), Dual3::constant(q.z)])
                }
            };
            let mut acc = Dual3::constant(0.0);
            for v in std::iter::once(p).chain(mesh.neighbors(p)) {
                let star = mesh.star_vec(v);
                let loc = vertex_local::<Dual3, _>(&star, pos);
                acc += vertex_energy(&loc, &phases.star_labels(mesh, v), params);
            }
            Vector3::new(acc.d[0], acc.d[1], acc.d[2])
        })
        .collect();
    for &e in phases.interface_edges() {
        let [f0, f1] = mesh.edge_faces(e);
        let s = params[phases.label(f0) as usize - 1].sigma + params[phases.label(f1) as usize - 1].sigma;
        let [a, b] = mesh.edges()[e];
        let d = verts[a] - verts[b];
        let u = d * (s / d.norm());
        grad[a] += u;
        grad[b] -= u;
    }
    if let Some(vertex) = grad.iter().position(|g| !g.iter().all(|x| x.is_finite())) {
        return Err(OptimizeError::DegenerateConfiguration { vertex });
    }
    Ok(grad)
}

/// Gradient of the total area.
pub fn area_gradient(mesh: &TriMesh) -> Vec<Vector3<f64>> {
    face_area_gradient(mesh, |_| true)
}

fn face_area_gradient(mesh: &TriMesh, include: impl Fn(usize) -> bool) -> Vec<Vector3<f64>> {
    let p = mesh.vertices();
    let mut g = vec![Vector3::zeros(); p.len()];
    for (f, &[a, b, c]) in mesh.faces().iter().enumerate() {
        if !include(f) {
            continue;
        }
        let n = (p[b] - p[a]).cross(&(p[c] - p[a])).normalize();
        g[a] += 0.5 * n.cross(&(p[c] - p[b]));
        g[b] += 0.5 * n.cross(&(p[a] - p[c]));
        g[c] += 0.5 * n.cross(&(p[b] - p[a]));
    }
    g
}

/// Gradient of the enclosed volume.
pub fn volume_gradient(mesh: &TriMesh) -> Vec<Vector3<f64>> {
    let p = mesh.vertices();
    let mut g = vec![Vector3::zeros(); p.len()];
    for &[a, b, c] in mesh.faces() {
        g[a] += p[b].cross(&p[c]) / 6.0;
        g[b] += p[c].cross(&p[a]) / 6.0;
        g[c] += p[a].cross(&p[b]) / 6.0;
    }
    g
}

/// Reduced volume `v = 6 sqrt(pi) e / m^(3/2)` with the admissibility verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedVolume {
    pub value: f64,
    pub verdict: Isoperimetry,
}

pub fn reduced_volume(m: f64, e: f64) -> Result<ReducedVolume, ConstraintError> {
    let verdict = isoperimetric_check(m, e)?;
    Ok(ReducedVolume {
        value: 6.0 * PI.sqrt() * e / m.powf(1.5),
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multipliers {
    pub area: f64,
    pub volume: f64,
    pub phase_areas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No step satisfied the Armijo condition within the backtracking budget.
    Stalled,
    /// The no-overlap gate failed between two phases.
    OverlapGate {
        phase_a: u32,
        phase_b: u32,
    },
    /// The surface boundary mass exceeds the configured bound.
    BoundaryMass {
        mass: f64,
    },
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub iteration: usize,
    pub mesh: TriMesh,
    pub energy: EnergyTerms,
    pub augmented: f64,
    pub residuals: Residuals,
    pub multipliers: Multipliers,
    pub penalty: f64,
    pub step: f64,
    pub grad_norm: f64,
    pub termination: Option<Termination>,
}

/// One logged iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub iteration: usize,
    /// Multiplier stage; `augmented` is nonincreasing within a stage.
    pub stage: usize,
    pub energy: f64,
    pub bending: f64,
    pub gauss: f64,
    pub spontaneous: f64,
    pub line: f64,
    pub augmented: f64,
    pub residual_area: f64,
    pub residual_volume: f64,
    pub residual_phase_max: f64,
    pub step: f64,
    pub grad_norm: f64,
    pub penalty: f64,
}

impl TrajectoryRow {
    pub const CSV_HEADER: &'static str = "iteration,stage,energy,bending,gauss,spontaneous,line,augmented,\
residual_area,residual_volume,residual_phase_max,step,grad_norm,penalty";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.iteration,
            self.stage,
            self.energy,
            self.bending,
            self.gauss,
            self.spontaneous,
            self.line,
            self.augmented,
            self.residual_area,
            self.residual_volume,
            self.residual_phase_max,
            self.step,
            self.grad_norm,
            self.penalty
        )
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerRun {
    pub state: OptimizerState,
    pub trajectory: Vec<TrajectoryRow>,
}

struct Problem<'a> {
    phases: &'a PhaseField,
    params: &'a [MaterialParams],
    cs: &'a ConstraintSet,
}

struct Eval {
    terms: EnergyTerms,
    c: Vec<f64>,
}

impl Problem<'_> {
    fn eval(&self, mesh: &TriMesh) -> Result<Eval, OptimizeError> {
        let terms = energy_terms(mesh, self.phases, self.params)?;
        let mut c = vec![
            (mesh.total_area() - self.cs.area) / self.cs.area,
            (mesh.enclosed_volume() - self.cs.volume) / self.cs.volume,
        ];
        if !self.cs.phase_areas.is_empty() {
            for (a, t) in self.phases.phase_areas(mesh).iter().zip(&self.cs.phase_areas) {
                c.push((a - t) / t);
            }
        }
        Ok(Eval { terms, c })
    }

    fn augmented(&self, ev: &Eval, lambda: &[f64], mu: f64) -> f64 {
        let mut l = ev.terms.total;
        for (c, lam) in ev.c.iter().zip(lambda) {
            l += -lam * c + 0.5 * mu * c * c;
        }
        l
    }

    fn gradient(&self, mesh: &TriMesh, ev: &Eval, lambda: &[f64], mu: f64) -> Result<Vec<Vector3<f64>>, OptimizeError> {
        let mut g = energy_gradient(mesh, self.phases, self.params)?;
        let mut add = |grad_c: Vec<Vector3<f64>>, scale: f64, k: usize| {
            let w = (-lambda[k] + mu * ev.c[k]) / scale;
            for (gi, gc) in g.iter_mut().zip(grad_c) {
                *gi += gc * w;
            }
        };
        add(area_gradient(mesh), self.cs.area, 0);
        add(volume_gradient(mesh), self.cs.volume, 1);
        for (i, &target) in self.cs.phase_areas.iter().enumerate() {
            let label = i as u32 + 1;
            let gc = face_area_gradient(mesh, |f| self.phases.label(f) == label);
            add(gc, target, 2 + i);
        }
        // project out rigid translations
        let mean = g.iter().fold(Vector3::zeros(), |acc, x| acc + x) / g.len() as f64;
        for gi in g.iter_mut() {
            *gi -= mean;
        }
        Ok(g)
    }
}

/// Area-weighted vertex normals.
fn vertex_normals(mesh: &TriMesh) -> Vec<Vector3<f64>> {
    let p = mesh.vertices();
    let mut n = vec![Vector3::zeros(); p.len()];
    for &[a, b, c] in mesh.faces() {
        let w = (p[b] - p[a]).cross(&(p[c] - p[a]));
        n[a] += w;
        n[b] += w;
        n[c] += w;
    }
    for v in n.iter_mut() {
        *v = v.normalize();
    }
    n
}

/// The field the descent follows: optionally the normal part of `g`, with
/// the mean removed so no step translates the mesh.
fn search_field(mesh: &TriMesh, g: &[Vector3<f64>], normal_motion: bool) -> Vec<Vector3<f64>> {
    let mut out = if normal_motion {
        vertex_normals(mesh)
            .iter()
            .zip(g)
            .map(|(n, gi)| n * n.dot(gi))
            .collect()
    } else {
        g.to_vec()
    };
    let mean = out.iter().fold(Vector3::zeros(), |acc, x| acc + x) / out.len() as f64;
    for v in out.iter_mut() {
        *v -= mean;
    }
    out
}

fn dot(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Limited-memory BFGS curvature pairs `(s, y)`, oldest first.
struct History {
    memory: usize,
    pairs: std::collections::VecDeque<(Vec<Vector3<f64>>, Vec<Vector3<f64>>, f64)>,
}

impl History {
    fn new(memory: usize) -> Self {
        History {
            memory,
            pairs: Default::default(),
        }
    }

    fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Pairs violating the curvature condition are dropped, which keeps the
    /// implicit inverse Hessian positive definite.
    fn push(&mut self, s: Vec<Vector3<f64>>, y: Vec<Vector3<f64>>) {
        if self.memory == 0 {
            return;
        }
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion; returns `-H g`.
    fn direction(&self, g: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= yi * a;
            }
            alphas.push(a);
        }
        let (s, y, _) = self.pairs.back().expect("non-empty history");
        let scale = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= scale;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += si * (a - b);
            }
        }
        for qi in q.iter_mut() {
            *qi = -*qi;
        }
        q
    }
}

fn rms(g: &[Vector3<f64>]) -> f64 {
    (g.iter().map(|x| x.norm_squared()).sum::<f64>() / g.len() as f64).sqrt()
}

fn quality_ok(mesh: &TriMesh, cfg: &RunConfig) -> bool {
    mesh.min_angle_degrees() >= cfg.min_angle_deg && mesh.edge_length_ratio() <= cfg.max_edge_ratio
}

fn confined(mesh: &TriMesh, cfg: &RunConfig) -> bool {
    match cfg.confinement_radius {
        Some(r) => mesh.vertices().iter().all(|x| x.norm() <= r),
        None => true,
    }
}

fn max_abs(c: &[f64]) -> f64 {
    c.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn overlap_gate(
    mesh: &TriMesh,
    phases: &PhaseField,
    eps0: f64,
    samples: usize,
) -> Result<Option<(u32, u32)>, OptimizeError> {
    let curv = match curvature_field(mesh) {
        Ok(c) => c,
        Err(_) => return Ok(None),
    };
    let h = mesh.mean_edge_length();
    if !(eps0 > h) {
        return Ok(None);
    }
    let n = phases.n_phases() as u32;
    let supports: Vec<_> = (1..=n).map(|p| phase_support(mesh, &curv, phases, p)).collect();
    for a in 1..=n {
        for b in (a + 1)..=n {
            let (sa, sb) = (&supports[a as usize - 1], &supports[b as usize - 1]);
            if sa.is_empty() || sb.is_empty() {
                continue;
            }
            if !no_overlap_check(sa, sb, eps0, samples, h)?.pass {
                return Ok(Some((a, b)));
            }
        }
    }
    Ok(None)
}

/// Run the augmented-Lagrangian descent from `mesh0`.
pub fn minimize(
    mesh0: &TriMesh,
    phases: &PhaseField,
    params: &[MaterialParams],
    cs: &ConstraintSet,
    cfg: &RunConfig,
) -> Result<OptimizerRun, OptimizeError> {
    cfg.validate()?;
    for p in params {
        p.validate()?;
    }
    if params.len() != phases.n_phases() {
        return Err(EnergyError::PhaseCountMismatch {
            phases: phases.n_phases(),
            params: params.len(),
        }
        .into());
    }
    if cs.validate()? == Isoperimetry::Infeasible {
        let v = reduced_volume(cs.area, cs.volume)?.value;
        return Err(OptimizeError::Infeasible {
            m: cs.area,
            e: cs.volume,
            v,
        });
    }
    if !cs.phase_areas.is_empty() && cs.phase_areas.len() != phases.n_phases() {
        return Err(OptimizeError::Config(format!(
            "{} phase-area targets for {} phases",
            cs.phase_areas.len(),
            phases.n_phases()
        )));
    }
    for (i, (&a, &t)) in phases.phase_areas(mesh0).iter().zip(&cs.phase_areas).enumerate() {
        if (a - t).abs() > 0.2 * t {
            return Err(OptimizeError::StartTooFar {
                phase: i as u32 + 1,
                area: a,
                target: t,
            });
        }
    }

    let mut mesh = match cfg.seed {
        Some(seed) if cfg.perturbation > 0.0 => {
            crate::shapes::jitter(mesh0, cfg.perturbation * mesh0.mean_edge_length(), seed)
        }
        _ => mesh0.clone(),
    };
    if !quality_ok(&mesh, cfg) {
        return Err(OptimizeError::QualityCollapse {
            iteration: 0,
            min_angle: mesh.min_angle_degrees(),
            edge_ratio: mesh.edge_length_ratio(),
        });
    }

    let problem = Problem { phases, params, cs };
    let n_c = 2 + cs.phase_areas.len();
    let mut lambda = vec![0.0; n_c];
    let mut mu = cfg.initial_penalty;
    let mut ev = problem.eval(&mesh)?;
    let mut aug = problem.augmented(&ev, &lambda, mu);
    if !aug.is_finite() {
        return Err(OptimizeError::Diverged { iteration: 0 });
    }

    let mut termination = None;
    if let Some(bound) = cfg.boundary_mass_bound {
        let mass = constraint_residuals(&mesh, phases, cs).boundary_mass;
        if mass > bound {
            termination = Some(Termination::BoundaryMass { mass });
        }
    }

    let row = |it: usize, stage: usize, ev: &Eval, aug: f64, step: f64, gn: f64, mu: f64| TrajectoryRow {
        iteration: it,
        stage,
        energy: ev.terms.total,
        bending: ev.terms.bending,
        gauss: ev.terms.gauss,
        spontaneous: ev.terms.spontaneous,
        line: ev.terms.line,
        augmented: aug,
        residual_area: ev.c[0],
        residual_volume: ev.c[1],
        residual_phase_max: max_abs(&ev.c[2..]),
        step,
        grad_norm: gn,
        penalty: mu,
    };

    let mut grad = problem.gradient(&mesh, &ev, &lambda, mu)?;
    let mut field = search_field(&mesh, &grad, cfg.normal_motion);
    let mut gnorm = rms(&field);
    let mut trajectory = vec![row(0, 0, &ev, aug, 0.0, gnorm, mu)];
    let gmax = field.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let mut alpha = if gmax > 0.0 {
        cfg.initial_step * mesh.mean_edge_length() / gmax
    } else {
        1.0
    };
    let mut stage = 0;
    let mut inner = 0;
    let mut inner_tol = cfg.inner_tol;
    let mut last_violation = max_abs(&ev.c);
    let mut iteration = 0;
    let ctol = cs.tol.min(cfg.constraint_tol);
    let mut history = History::new(cfg.lbfgs_memory);
    let mut last_step = 0.0;

    while termination.is_none() {
        let violation = max_abs(&ev.c);
        if gnorm < cfg.grad_tol && violation < ctol {
            termination = Some(Termination::Converged);
            break;
        }
        if iteration >= cfg.max_iterations {
            termination = Some(Termination::MaxIterations);
            break;
        }
        if gnorm < inner_tol || inner >= cfg.inner_iterations {
            for (lam, c) in lambda.iter_mut().zip(&ev.c) {
                *lam -= mu * c;
            }
            if violation > 0.25 * last_violation {
                mu = (mu * cfg.penalty_growth).min(cfg.max_penalty);
            }
            last_violation = violation;
            inner_tol = (inner_tol * 0.1).max(cfg.grad_tol);
            inner = 0;
            stage += 1;
            if let (Some(eps0), true) = (cs.eps0, phases.n_phases() > 1) {
                if let Some((a, b)) = overlap_gate(&mesh, phases, eps0, cfg.overlap_samples)? {
                    termination = Some(Termination::OverlapGate { phase_a: a, phase_b: b });
                    break;
                }
            }
            aug = problem.augmented(&ev, &lambda, mu);
            grad = problem.gradient(&mesh, &ev, &lambda, mu)?;
            field = search_field(&mesh, &grad, cfg.normal_motion);
            gnorm = rms(&field);
            history.clear();
        }

        let quasi_newton = !history.is_empty();
        let (dir, mut t) = if quasi_newton {
            (history.direction(&field), 1.0)
        } else {
            (field.iter().map(|g| -g).collect::<Vec<_>>(), alpha * 2.0)
        };
        let slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            history.clear();
            if quasi_newton {
                continue;
            }
            termination = Some(Termination::Stalled);
            break;
        }
        let mut accepted = None;
        let mut guard_rejections = 0;
        for _ in 0..cfg.max_backtracks {
            let verts: Vec<Vector3<f64>> = mesh.vertices().iter().zip(&dir).map(|(x, d)| x + d * t).collect();
            match mesh.with_vertices(verts) {
                Ok(trial) if quality_ok(&trial, cfg) && confined(&trial, cfg) => {
                    let tev = problem.eval(&trial)?;
                    let taug = problem.augmented(&tev, &lambda, mu);
                    if taug.is_finite() && taug <= aug + cfg.armijo_c * t * slope {
                        accepted = Some((trial, tev, taug));
                        break;
                    }
                }
                _ => guard_rejections += 1,
            }
            t *= cfg.shrink;
        }
        let Some((trial, tev, taug)) = accepted else {
            if quasi_newton {
                // retry along the plain gradient before giving up
                history.clear();
                continue;
            }
            if guard_rejections == cfg.max_backtracks {
                return Err(OptimizeError::QualityCollapse {
                    iteration,
                    min_angle: mesh.min_angle_degrees(),
                    edge_ratio: mesh.edge_length_ratio(),
                });
            }
            termination = Some(Termination::Stalled);
            break;
        };
        let step: Vec<Vector3<f64>> = dir.iter().map(|d| d * t).collect();
        let step_len = step.iter().map(|d| d.norm()).fold(0.0, f64::max);
        if !quasi_newton {
            alpha = t;
        }
        mesh = trial;
        ev = tev;
        aug = taug;
        iteration += 1;
        inner += 1;
        let new_grad = problem.gradient(&mesh, &ev, &lambda, mu).map_err(|e| match e {
            OptimizeError::DegenerateConfiguration { .. } => OptimizeError::Diverged { iteration },
            other => other,
        })?;
        let new_field = search_field(&mesh, &new_grad, cfg.normal_motion);
        let change: Vec<Vector3<f64>> = new_field.iter().zip(&field).map(|(a, b)| a - b).collect();
        history.push(step, change);
        grad = new_grad;
        field = new_field;
        gnorm = rms(&field);
        last_step = step_len;
        trajectory.push(row(iteration, stage, &ev, aug, last_step, gnorm, mu));
    }

    let residuals = constraint_residuals(&mesh, phases, cs);
    let multipliers = Multipliers {
        area: lambda[0],
        volume: lambda[1],
        phase_areas: lambda[2..].to_vec(),
    };
    Ok(OptimizerRun {
        state: OptimizerState {
            iteration,
            energy: ev.terms,
            augmented: aug,
            residuals,
            multipliers,
            penalty: mu,
            step: last_step,
            grad_norm: gnorm,
            termination,
            mesh,
        },
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::discrete_energy;
    use crate::shapes;

    fn fd_check(mesh: &TriMesh, phases: &PhaseField, params: &[MaterialParams], vertices: &[usize]) -> f64 {
        let g = energy_gradient(mesh, phases, params).unwrap();
        let h = 1e-5 * mesh.bbox_diagonal();
        let gscale = g.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for &v in vertices {
            for k in 0..3 {
                let eval = |d: f64| {
                    let mut p = mesh.vertices().to_vec();
                    p[v][k] += d;
                    discrete_energy(&mesh.with_vertices(p).unwrap(), phases, params).unwrap()
                };
                let fd = (-eval(2.0 * h) + 8.0 * eval(h) - 8.0 * eval(-h) + eval(-2.0 * h)) / (12.0 * h);
                worst = worst.max((fd - g[v][k]).abs() / g[v][k].abs().max(1e-3 * gscale));
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = shapes::perturbed_sphere(2, 0.1);
        let ph = PhaseField::new(&m, shapes::hemisphere_labels(&m)).unwrap();
        let params = [
            MaterialParams::new(1.0, -0.5, 0.7).with_sigma(0.3),
            MaterialParams::new(2.0, -1.0, -0.4).with_sigma(0.8),
        ];
        let verts: Vec<usize> = (0..m.n_vertices()).step_by(7).collect();
        let err = fd_check(&m, &ph, &params, &verts);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn flat_patch_interior_gradient_vanishes() {
        let m = shapes::flat_lattice_patch(6);
        let ph = PhaseField::uniform(&m);
        let g = energy_gradient(&m, &ph, &[MaterialParams::new(1.0, 0.0, 0.0)]).unwrap();
        for v in 0..m.n_vertices() {
            if m.is_interior_vertex(v) {
                assert!(g[v].norm() < 1e-10, "{v}: {}", g[v].norm());
            }
        }
    }

    #[test]
    fn translation_is_a_null_direction() {
        let m = shapes::jitter(&shapes::icosphere(2), 0.02, 9);
        let ph = PhaseField::uniform(&m);
        let g = energy_gradient(&m, &ph, &[MaterialParams::new(1.0, -0.3, 1.1)]).unwrap();
        let scale: f64 = g.iter().map(|x| x.norm()).sum();
        for dir in [Vector3::x(), Vector3::y(), Vector3::z()] {
            let d: f64 = g.iter().map(|x| x.dot(&dir)).sum();
            assert!(d.abs() < 1e-10 * scale.max(1.0), "{d}");
        }
    }

    #[test]
    fn constraint_gradients_match_finite_differences() {
        let m = shapes::jitter(&shapes::icosphere(2), 0.02, 3);
        let ga = area_gradient(&m);
        let gv = volume_gradient(&m);
        let h = 1e-6;
        for v in [0, 17, 101] {
            for k in 0..3 {
                let at = |d: f64| {
                    let mut p = m.vertices().to_vec();
                    p[v][k] += d;
                    let t = m.with_vertices(p).unwrap();
                    (t.total_area(), t.enclosed_volume())
                };
                let (ap, vp) = at(h);
                let (am, vm) = at(-h);
                assert!(((ap - am) / (2.0 * h) - ga[v][k]).abs() < 1e-7);
                assert!(((vp - vm) / (2.0 * h) - gv[v][k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn reduced_volume_examples() {
        let s = reduced_volume(4.0 * PI, 4.0 * PI / 3.0).unwrap();
        assert!((s.value - 1.0).abs() < 1e-15);
        assert_eq!(s.verdict, Isoperimetry::Equality);
        let h = reduced_volume(4.0 * PI, 2.0 * PI / 3.0).unwrap();
        assert!((h.value - 0.5).abs() < 1e-15);
        let bad = reduced_volume(4.0 * PI, 10.0).unwrap();
        assert!(bad.value > 1.0 && bad.verdict == Isoperimetry::Infeasible);
    }

    #[test]
    fn zero_iterations_echo_the_start() {
        let m = shapes::ellipsoid(3, 1.2, 1.0, 0.8);
        let ph = PhaseField::uniform(&m);
        let params = [MaterialParams::new(1.0, 0.0, 0.0)];
        let cs = ConstraintSet::measured(&m, &ph);
        let cfg = RunConfig {
            max_iterations: 0,
            ..RunConfig::default()
        };
        let run = minimize(&m, &ph, &params, &cs, &cfg).unwrap();
        assert_eq!(run.state.iteration, 0);
        assert_eq!(run.trajectory.len(), 1);
        assert_eq!(run.state.energy.total, discrete_energy(&m, &ph, &params).unwrap());
        assert!(run.state.residuals.max_abs() < cs.tol);
        assert_eq!(run.state.termination, Some(Termination::MaxIterations));
    }

    #[test]
    fn infeasible_targets_rejected() {
        let m = shapes::icosphere(2);
        let ph = PhaseField::uniform(&m);
        let err = minimize(
            &m,
            &ph,
            &[MaterialParams::new(1.0, 0.0, 0.0)],
            &ConstraintSet::new(4.0 * PI, 10.0),
            &RunConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, OptimizeError::Infeasible { .. }));
    }

    #[test]
    fn accepted_steps_descend_within_each_stage() {
        let m = shapes::ellipsoid(2, 1.3, 1.0, 0.8);
        let ph = PhaseField::uniform(&m);
        let cs = ConstraintSet::new(m.total_area() * 1.01, m.enclosed_volume());
        let cfg = RunConfig {
            max_iterations: 150,
            inner_iterations: 30,
            ..RunConfig::default()
        };
        let run = minimize(&m, &ph, &[MaterialParams::new(1.0, 0.0, 0.0)], &cs, &cfg).unwrap();
        for w in run.trajectory.windows(2) {
            if w[0].stage == w[1].stage {
                assert!(w[1].augmented <= w[0].augmented, "{:?}", w);
            }
        }
    }
}
