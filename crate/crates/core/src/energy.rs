//! Total energies: single-phase Canham-Helfrich (tensor and scalar paths),
//! Willmore in both normalizations, and the multiphase energy with line
//! tension on phase interfaces.
//!
//! A vertex's mixed area is split among phases in proportion to the areas of
//! its incident faces carrying each label. Interface edges are charged once
//! per adjacent phase, so a shared curve pays `sigma_1 + sigma_2` per unit
//! length. All reductions run sequentially in vertex (or edge) index order.

use nalgebra::Vector3;
use serde::Serialize;
use smallvec::SmallVec;
use thiserror::Error;

use crate::curvature::{CurvatureError, CurvatureField};
use crate::density::{f_ch, DensityError, MaterialParams};
use crate::geometry::{Real, VertexLocal};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("{labels} phase labels for {faces} faces")]
    LabelCountMismatch { labels: usize, faces: usize },
    #[error("face {face} has label 0; labels start at 1")]
    ZeroLabel { face: usize },
    #[error("{phases} phases but {params} parameter sets")]
    PhaseCountMismatch { phases: usize, params: usize },
    #[error("phase {0} does not exist")]
    UnknownPhase(u32),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
}

/// Per-face phase labels in `1..=n_phases`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    labels: Vec<u32>,
    n_phases: usize,
    interface: Vec<usize>,
}

impl PhaseField {
    pub fn new(mesh: &TriMesh, labels: Vec<u32>) -> Result<Self, EnergyError> {
        if labels.len() != mesh.n_faces() {
            return Err(EnergyError::LabelCountMismatch {
                labels: labels.len(),
                faces: mesh.n_faces(),
            });
        }
        if let Some(face) = labels.iter().position(|&l| l == 0) {
            return Err(EnergyError::ZeroLabel { face });
        }
        let n_phases = labels.iter().copied().max().unwrap_or(1) as usize;
        let interface = (0..mesh.n_edges())
            .filter(|&e| {
                let [f0, f1] = mesh.edge_faces(e);
                f1 != usize::MAX && labels[f0] != labels[f1]
            })
            .collect();
        Ok(PhaseField {
            labels,
            n_phases,
            interface,
        })
    }

    pub fn uniform(mesh: &TriMesh) -> Self {
        PhaseField {
            labels: vec![1; mesh.n_faces()],
            n_phases: 1,
            interface: Vec::new(),
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, f: usize) -> u32 {
        self.labels[f]
    }

    pub fn n_phases(&self) -> usize {
        self.n_phases
    }

    /// Edges whose two faces carry different labels.
    pub fn interface_edges(&self) -> &[usize] {
        &self.interface
    }

    pub fn phase_faces(&self, phase: u32) -> Vec<usize> {
        (0..self.labels.len()).filter(|&f| self.labels[f] == phase).collect()
    }

    pub fn phase_area(&self, mesh: &TriMesh, phase: u32) -> f64 {
        (0..self.labels.len())
            .filter(|&f| self.labels[f] == phase)
            .map(|f| mesh.face_area(f))
            .sum()
    }

    /// Face area of every phase, index `p - 1`.
    pub fn phase_areas(&self, mesh: &TriMesh) -> Vec<f64> {
        let mut out = vec![0.0; self.n_phases];
        for f in 0..self.labels.len() {
            out[self.labels[f] as usize - 1] += mesh.face_area(f);
        }
        out
    }

    /// Whether every vertex touches an even number of interface edges, i.e.
    /// the interface is a union of closed polygons.
    pub fn interface_is_closed(&self, mesh: &TriMesh) -> bool {
        let mut deg = vec![0u32; mesh.n_vertices()];
        for &e in &self.interface {
            let [a, b] = mesh.edges()[e];
            deg[a] += 1;
            deg[b] += 1;
        }
        deg.iter().all(|d| d % 2 == 0)
    }

    /// Labels of the star faces of `v`, in star order.
    pub(crate) fn star_labels(&self, mesh: &TriMesh, v: usize) -> SmallVec<[u32; 8]> {
        mesh.star_faces(v).iter().map(|&f| self.labels[f]).collect()
    }

    /// Phase fractions of `v` from incident face areas.
    pub fn vertex_fractions(&self, mesh: &TriMesh, v: usize) -> SmallVec<[(u32, f64); 4]> {
        let mut out: SmallVec<[(u32, f64); 4]> = SmallVec::new();
        let mut total = 0.0;
        for &f in mesh.star_faces(v) {
            let a = mesh.face_area(f);
            total += a;
            let l = self.labels[f];
            match out.iter_mut().find(|(p, _)| *p == l) {
                Some(slot) => slot.1 += a,
                None => out.push((l, a)),
            }
        }
        for slot in out.iter_mut() {
            slot.1 /= total;
        }
        out
    }
}

fn check_params(phases: &PhaseField, params: &[MaterialParams]) -> Result<(), EnergyError> {
    if params.len() != phases.n_phases() {
        return Err(EnergyError::PhaseCountMismatch {
            phases: phases.n_phases(),
            params: params.len(),
        });
    }
    Ok(())
}

/// Energy of one vertex from its local quantities; shared by the `f64`
/// evaluation and the dual-number gradient.
///
/// `star_labels` must follow the star order used to build `loc`.
pub(crate) fn vertex_energy<T: Real>(loc: &VertexLocal<T>, star_labels: &[u32], params: &[MaterialParams]) -> T {
    let h = loc.mean_curvature();
    let defect = loc.angle_defect();
    let mut total_face = T::cst(0.0);
    for &a in &loc.face_areas {
        total_face += a;
    }
    let mut e = T::cst(0.0);
    for (&fa, &l) in loc.face_areas.iter().zip(star_labels) {
        let p = &params[l as usize - 1];
        let d = h - T::cst(p.h0);
        let dens = T::cst(0.5 * p.beta) * d * d * loc.area + T::cst(p.gamma) * defect;
        e += dens * fa;
    }
    e / total_face
}

/// Line energy `sum_e (sigma_a + sigma_b) |e|` over interface edges.
pub fn line_energy(mesh: &TriMesh, phases: &PhaseField, params: &[MaterialParams]) -> f64 {
    let mut out = 0.0;
    for &e in phases.interface_edges() {
        let [f0, f1] = mesh.edge_faces(e);
        let s = params[phases.label(f0) as usize - 1].sigma + params[phases.label(f1) as usize - 1].sigma;
        out += s * mesh.edge_length(e);
    }
    out
}

/// Scalar-path energy terms computed straight from the positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyTerms {
    pub total: f64,
    pub bending: f64,
    pub gauss: f64,
    pub spontaneous: f64,
    pub line: f64,
}

/// Energy terms without building a full curvature field; `total` is
/// bit-identical to [`discrete_energy`].
pub fn energy_terms(
    mesh: &TriMesh,
    phases: &PhaseField,
    params: &[MaterialParams],
) -> Result<EnergyTerms, EnergyError> {
    use rayon::prelude::*;
    check_params(phases, params)?;
    let per_vertex: Vec<[f64; 4]> = (0..mesh.n_vertices())
        .into_par_iter()
        .map(|v| {
            let loc = crate::curvature::local_f64(mesh, v);
            let labels = phases.star_labels(mesh, v);
            let h = loc.mean_curvature();
            let defect = loc.angle_defect();
            let total_face: f64 = loc.face_areas.iter().sum();
            let mut t = [0.0, 0.0, 0.0, vertex_energy(&loc, &labels, params)];
            for (&fa, &l) in loc.face_areas.iter().zip(&labels) {
                let p = &params[l as usize - 1];
                let w = fa / total_face;
                t[0] += w * 0.5 * p.beta * h * h * loc.area;
                t[1] += w * p.gamma * defect;
                t[2] += w * (-p.beta * p.h0 * h + 0.5 * p.beta * p.h0 * p.h0) * loc.area;
            }
            t
        })
        .collect();
    let mut t = [0.0; 4];
    for pv in &per_vertex {
        for k in 0..4 {
            t[k] += pv[k];
        }
    }
    let line = line_energy(mesh, phases, params);
    Ok(EnergyTerms {
        total: t[3] + line,
        bending: t[0],
        gauss: t[1],
        spontaneous: t[2],
        line,
    })
}

/// Total discrete energy (scalar path plus line tension) straight from the
/// positions; this is the objective the optimizer differentiates.
pub fn discrete_energy(mesh: &TriMesh, phases: &PhaseField, params: &[MaterialParams]) -> Result<f64, EnergyError> {
    use rayon::prelude::*;
    check_params(phases, params)?;
    let per_vertex: Vec<f64> = (0..mesh.n_vertices())
        .into_par_iter()
        .map(|v| {
            let loc = crate::curvature::local_f64(mesh, v);
            vertex_energy(&loc, &phases.star_labels(mesh, v), params)
        })
        .collect();
    let mut total = 0.0;
    for e in &per_vertex {
        total += e;
    }
    Ok(total + line_energy(mesh, phases, params))
}

/// Both evaluations of the single-phase Canham-Helfrich energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChEnergy {
    /// `sum_v f_CH(nu, A) a`.
    pub tensor_path: f64,
    /// `sum_v (beta/2 (H - H0)^2 + gamma K) a`.
    pub scalar_path: f64,
}

impl ChEnergy {
    pub fn relative_gap(&self) -> f64 {
        (self.tensor_path - self.scalar_path).abs()
            / self
                .tensor_path
                .abs()
                .max(self.scalar_path.abs())
                .max(f64::MIN_POSITIVE)
    }
}

pub fn canham_helfrich(curv: &CurvatureField, params: &MaterialParams) -> Result<ChEnergy, EnergyError> {
    let mut tensor_path = 0.0;
    let mut scalar_path = 0.0;
    for v in 0..curv.len() {
        let a = curv.area[v];
        tensor_path += f_ch(&curv.normal[v], &curv.tensor[v], params)? * a;
        let d = curv.mean[v] - params.h0;
        scalar_path += (0.5 * params.beta * d * d + params.gamma * curv.gauss[v]) * a;
    }
    Ok(ChEnergy {
        tensor_path,
        scalar_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WillmoreNormalization {
    /// `1/4 sum H^2 a`.
    Quarter,
    /// `sum |H̄|^2 a`.
    Varifold,
}

pub fn willmore(curv: &CurvatureField, normalization: WillmoreNormalization) -> f64 {
    match normalization {
        WillmoreNormalization::Quarter => 0.25 * curv.mean.iter().zip(&curv.area).map(|(h, a)| h * h * a).sum::<f64>(),
        WillmoreNormalization::Varifold => curv
            .mean_vector
            .iter()
            .zip(&curv.area)
            .map(|(h, a)| h.norm_squared() * a)
            .sum(),
    }
}

/// Energy terms of one phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTerms {
    pub phase: u32,
    /// Share of the vertex measure assigned to this phase.
    pub area: f64,
    /// `beta/2 sum H^2 a`.
    pub bending: f64,
    /// `gamma sum K a`.
    pub gauss: f64,
    /// `sum (-beta H0 H + beta/2 H0^2) a`.
    pub spontaneous: f64,
    /// Interface length bounding this phase.
    pub boundary_mass: f64,
    /// `sigma * boundary_mass`.
    pub line: f64,
    /// `sum f_CH(nu, A) a` restricted to the phase.
    pub density_path: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    /// Scalar-path total including line tension.
    pub total: f64,
    /// Tensor-path total including line tension.
    pub total_density_path: f64,
    pub bending: f64,
    pub gauss: f64,
    pub spontaneous: f64,
    pub line: f64,
    pub willmore_quarter: f64,
    pub willmore_varifold: f64,
    pub phases: Vec<PhaseTerms>,
}

impl EnergyReport {
    /// `|total - sum of parts| / |total|`.
    pub fn decomposition_gap(&self) -> f64 {
        let parts: f64 = self
            .phases
            .iter()
            .map(|p| p.bending + p.gauss + p.spontaneous + p.line)
            .sum();
        (self.total - parts).abs() / self.total.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn multiphase_energy(
    mesh: &TriMesh,
    curv: &CurvatureField,
    phases: &PhaseField,
    params: &[MaterialParams],
) -> Result<EnergyReport, EnergyError> {
    check_params(phases, params)?;
    let mut terms: Vec<PhaseTerms> = (0..phases.n_phases())
        .map(|i| PhaseTerms {
            phase: i as u32 + 1,
            area: 0.0,
            bending: 0.0,
            gauss: 0.0,
            spontaneous: 0.0,
            boundary_mass: 0.0,
            line: 0.0,
            density_path: 0.0,
        })
        .collect();
    for v in 0..mesh.n_vertices() {
        let a = curv.area[v];
        let h = curv.mean[v];
        let k = curv.gauss[v];
        for (l, phi) in phases.vertex_fractions(mesh, v) {
            let i = l as usize - 1;
            let p = &params[i];
            let w = phi * a;
            let t = &mut terms[i];
            t.area += w;
            t.bending += 0.5 * p.beta * h * h * w;
            t.gauss += p.gamma * k * w;
            t.spontaneous += (-p.beta * p.h0 * h + 0.5 * p.beta * p.h0 * p.h0) * w;
            t.density_path += f_ch(&curv.normal[v], &curv.tensor[v], p)? * w;
        }
    }
    for &e in phases.interface_edges() {
        let len = mesh.edge_length(e);
        let [f0, f1] = mesh.edge_faces(e);
        for f in [f0, f1] {
            terms[phases.label(f) as usize - 1].boundary_mass += len;
        }
    }
    for (t, p) in terms.iter_mut().zip(params) {
        t.line = p.sigma * t.boundary_mass;
    }
    let sum = |g: fn(&PhaseTerms) -> f64| terms.iter().map(g).sum::<f64>();
    let bending = sum(|t| t.bending);
    let gauss = sum(|t| t.gauss);
    let spontaneous = sum(|t| t.spontaneous);
    let line = sum(|t| t.line);
    let density = sum(|t| t.density_path);
    Ok(EnergyReport {
        total: bending + gauss + spontaneous + line,
        total_density_path: density + line,
        bending,
        gauss,
        spontaneous,
        line,
        willmore_quarter: willmore(curv, WillmoreNormalization::Quarter),
        willmore_varifold: willmore(curv, WillmoreNormalization::Varifold),
        phases: terms,
    })
}

/// Total length of the interface edges bounding `phase`.
pub fn boundary_mass(mesh: &TriMesh, phases: &PhaseField, phase: u32) -> Result<f64, EnergyError> {
    if phase == 0 || phase as usize > phases.n_phases() {
        return Err(EnergyError::UnknownPhase(phase));
    }
    let mut out = 0.0;
    for &e in phases.interface_edges() {
        let [f0, f1] = mesh.edge_faces(e);
        if phases.label(f0) == phase || phases.label(f1) == phase {
            out += mesh.edge_length(e);
        }
    }
    Ok(out)
}

/// Largest angle (radians) between the normals of the two faces across any
/// interface edge; zero without an interface.
pub fn interface_kink(mesh: &TriMesh, phases: &PhaseField) -> f64 {
    phases
        .interface_edges()
        .iter()
        .map(|&e| {
            let [f0, f1] = mesh.edge_faces(e);
            let n0: Vector3<f64> = mesh.face_normal(f0);
            let n1 = mesh.face_normal(f1);
            n0.cross(&n1).norm().atan2(n0.dot(&n1))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::curvature_field;
    use crate::shapes;
    use std::f64::consts::PI;

    fn within(x: f64, target: f64, rel: f64) -> bool {
        (x - target).abs() <= rel * target.abs()
    }

    #[test]
    fn sphere_energies() {
        let m = shapes::icosphere(4);
        let c = curvature_field(&m).unwrap();
        let e = canham_helfrich(&c, &MaterialParams::new(1.0, 0.0, 0.0)).unwrap();
        assert!(within(e.scalar_path, 8.0 * PI, 0.02));
        let e = canham_helfrich(&c, &MaterialParams::new(1.0, 0.0, 2.0)).unwrap();
        assert!(e.scalar_path.abs() < 0.02 * 8.0 * PI);
        let e = canham_helfrich(&c, &MaterialParams::new(1.0, -1.0, 0.0)).unwrap();
        assert!(within(e.scalar_path, 4.0 * PI, 0.02));
        assert!(e.relative_gap() < 1e-9);

        let q = willmore(&c, WillmoreNormalization::Quarter);
        let w = willmore(&c, WillmoreNormalization::Varifold);
        assert!(within(q, 4.0 * PI, 0.01));
        assert!(within(w, 16.0 * PI, 0.01));
        assert!((w - 4.0 * q).abs() <= 1e-12 * w);
    }

    #[test]
    fn willmore_is_scale_invariant() {
        let m = shapes::perturbed_sphere(3, 0.1);
        let q0 = willmore(&curvature_field(&m).unwrap(), WillmoreNormalization::Quarter);
        let q1 = willmore(
            &curvature_field(&m.scaled(3.7)).unwrap(),
            WillmoreNormalization::Quarter,
        );
        assert!((q0 - q1).abs() < 1e-9 * q0);
    }

    #[test]
    fn gauss_term_is_topological() {
        for (m, chi) in [(shapes::icosphere(3), 2.0), (shapes::torus(2.0, 1.0, 40, 20), 0.0)] {
            let c = curvature_field(&m).unwrap();
            let e = canham_helfrich(&c, &MaterialParams::new(0.0, 1.0, 0.0)).unwrap();
            assert!((e.scalar_path - 2.0 * PI * chi).abs() < 1e-9);
        }
    }

    #[test]
    fn flip_maps_h0_to_minus_h0() {
        let m = shapes::perturbed_sphere(3, 0.1);
        let c = curvature_field(&m).unwrap();
        let cf = curvature_field(&m.flipped()).unwrap();
        let p = MaterialParams::new(1.0, -0.5, 1.3);
        let q = MaterialParams::new(1.0, -0.5, -1.3);
        let a = canham_helfrich(&c, &p).unwrap().scalar_path;
        let b = canham_helfrich(&cf, &q).unwrap().scalar_path;
        assert!((a - b).abs() <= 1e-10 * a.abs());
    }

    #[test]
    fn hemispheres_line_tension_and_areas() {
        let m = shapes::icosphere(4);
        let c = curvature_field(&m).unwrap();
        let ph = PhaseField::new(&m, shapes::hemisphere_labels(&m)).unwrap();
        assert!(ph.interface_is_closed(&m));
        let p = MaterialParams::new(1.0, 0.0, 0.0).with_sigma(1.0);
        let r = multiphase_energy(&m, &c, &ph, &[p, p.with_phase(2)]).unwrap();
        assert!(within(r.line, 4.0 * PI, 0.02));
        for t in &r.phases {
            assert!(within(t.area, 2.0 * PI, 0.02));
            assert!(within(t.boundary_mass, 2.0 * PI, 0.02));
        }
        assert!(within(boundary_mass(&m, &ph, 1).unwrap(), 2.0 * PI, 0.02));
        assert!(r.decomposition_gap() < 1e-10);
        let direct = discrete_energy(&m, &ph, &[p, p]).unwrap();
        assert!((direct - r.total).abs() < 1e-10 * r.total);
        let terms = energy_terms(&m, &ph, &[p, p]).unwrap();
        assert!((terms.total - r.total).abs() < 1e-10 * r.total);
        assert!((terms.line - r.line).abs() < 1e-12 * r.line);
    }

    #[test]
    fn partition_is_additive() {
        let m = shapes::perturbed_sphere(3, 0.1);
        let c = curvature_field(&m).unwrap();
        let p = MaterialParams::new(1.3, -0.4, 0.7);
        let single = canham_helfrich(&c, &p).unwrap();
        let uni = multiphase_energy(&m, &c, &PhaseField::uniform(&m), &[p.with_sigma(5.0)]).unwrap();
        assert_eq!(uni.line, 0.0);
        assert!((uni.total - single.scalar_path).abs() <= 1e-12 * single.scalar_path.abs());
        let ph = PhaseField::new(&m, shapes::hemisphere_labels(&m)).unwrap();
        let two = multiphase_energy(&m, &c, &ph, &[p, p]).unwrap();
        assert!((two.total - single.scalar_path).abs() <= 1e-10 * single.scalar_path.abs());
        assert!((two.total_density_path - single.tensor_path).abs() <= 1e-10 * single.tensor_path.abs());
    }

    #[test]
    fn boundary_mass_cases() {
        let m = shapes::icosphere(2);
        assert_eq!(boundary_mass(&m, &PhaseField::uniform(&m), 1).unwrap(), 0.0);
        let mut labels = vec![1; m.n_faces()];
        labels[5] = 2;
        let ph = PhaseField::new(&m, labels).unwrap();
        let [a, b, c] = m.faces()[5];
        let p = m.vertices();
        let perim = (p[a] - p[b]).norm() + (p[b] - p[c]).norm() + (p[c] - p[a]).norm();
        assert!((boundary_mass(&m, &ph, 2).unwrap() - perim).abs() < 1e-14);
        assert!(matches!(boundary_mass(&m, &ph, 3), Err(EnergyError::UnknownPhase(3))));
        assert!(matches!(
            multiphase_energy(
                &m,
                &curvature_field(&m).unwrap(),
                &ph,
                &[MaterialParams::new(1.0, 0.0, 0.0)]
            ),
            Err(EnergyError::PhaseCountMismatch { phases: 2, params: 1 })
        ));
    }

    #[test]
    fn kink_shrinks_under_refinement() {
        let kinks: Vec<f64> = (2..=5)
            .map(|l| {
                let m = shapes::icosphere(l);
                interface_kink(&m, &PhaseField::new(&m, shapes::hemisphere_labels(&m)).unwrap())
            })
            .collect();
        assert!(kinks.windows(2).all(|w| w[1] < w[0]), "{kinks:?}");
    }
}
