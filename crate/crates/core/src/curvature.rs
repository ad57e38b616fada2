//! Per-vertex curvature quantities.
//!
//! Scalars come from the standard discrete operators: the mean curvature from
//! the cotangent Laplacian of the position over the mixed Voronoi area, the
//! Gauss curvature from the angle defect over the same area. The shape
//! operator is fitted by least squares to the variation of the vertex normal
//! over the one-ring; its principal frame is kept and its eigenvalues are
//! adjusted so that `tr S = H` and `det S = K`. The second fundamental form
//! and the curvature tensor are then assembled from `S`:
//!
//! ```text
//! II^k_ij = S_ij nu_k               A_ijk = II^j_ik + II^k_ij
//! ```
//!
//! which makes `sum_j A_jij = H nu`, `|A|^2 = 2 |II|^2` and
//! `K = |H̄|^2 / 2 - |A|^2 / 4` hold to rounding.
//!
//! A real symmetric `S` with `tr S = H`, `det S = K` exists only when
//! `K <= H^2 / 4`. Discretely the two operators can disagree slightly (most
//! often on near-umbilic vertices), so in the range `H^2/4 < K <= 3 H^2 / 8`
//! an isotropic `S = s I` is combined with a normal component
//! `c nu (x) nu (x) nu` in `II` (and a compensating antisymmetric
//! normal-tangent-tangent block that leaves `A` untouched). The identities
//! still hold exactly and the excess `c` vanishes under refinement. Beyond
//! `3 H^2 / 8` no tensor symmetric in its last two indices can satisfy them;
//! such vertices are clamped to the boundary case and listed in
//! [`CurvatureField::inconsistent`].
//!
//! Sign convention: outward normals, `H = +2/r` on a sphere of radius `r`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{vertex_local, VertexLocal, V3};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error("vertex {vertex}: one-ring is numerically degenerate ({reason})")]
    DegenerateOneRing { vertex: usize, reason: &'static str },
}

/// Dense rank-3 tensor on R^3, row-major in `(i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor3(pub [f64; 27]);

impl Default for Tensor3 {
    fn default() -> Self {
        Tensor3([0.0; 27])
    }
}

impl Tensor3 {
    pub fn zeros() -> Self {
        Self::default()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0[9 * i + 3 * j + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.0[9 * i + 3 * j + k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.0[9 * i + 3 * j + k] += v;
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    /// `t_i = sum_j A_jij`, the mean-curvature trace.
    pub fn trace_vector(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| (0..3).map(|j| self.get(j, i, j)).sum())
    }

    /// `A_ijk = II^j_ik + II^k_ij`, with `II^k_ij` stored at `(i, j, k)`.
    pub fn symmetrize_second_form(ii: &Tensor3) -> Tensor3 {
        let mut a = Tensor3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    a.set(i, j, k, ii.get(i, k, j) + ii.get(i, j, k));
                }
            }
        }
        a
    }

    pub fn scaled(&self, s: f64) -> Tensor3 {
        let mut out = *self;
        out.0.iter_mut().for_each(|x| *x *= s);
        out
    }
}

/// Curvature data sampled at every vertex.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    /// Mixed Voronoi area.
    pub area: Vec<f64>,
    /// Unit outward normal (normalized sum of face area vectors).
    pub normal: Vec<Vector3<f64>>,
    /// Tangential projection `I - nu nu^T`.
    pub projection: Vec<Matrix3<f64>>,
    /// Mean curvature vector `H nu`.
    pub mean_vector: Vec<Vector3<f64>>,
    /// Scalar mean curvature (sum of principal curvatures).
    pub mean: Vec<f64>,
    /// Gauss curvature, angle defect over mixed area.
    pub gauss: Vec<f64>,
    /// Angle defect `2 pi - sum of corner angles`.
    pub angle_defect: Vec<f64>,
    /// Principal curvatures, `kappa1 >= kappa2`.
    pub principal: Vec<[f64; 2]>,
    /// Generalized second fundamental form, `II^k_ij` at `(i, j, k)`.
    pub second_form: Vec<Tensor3>,
    /// Curvature tensor `A`.
    pub tensor: Vec<Tensor3>,
    /// Normal excess `c` used where `K > H^2 / 4` (zero elsewhere).
    pub normal_excess: Vec<f64>,
    /// Vertices where no consistent tensor exists (`K > 3 H^2 / 8`).
    pub inconsistent: Vec<usize>,
}

impl CurvatureField {
    pub fn len(&self) -> usize {
        self.area.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area.is_empty()
    }

    /// Mass `mu_V(Omega)`, the sum of mixed areas (equals the surface area).
    pub fn total_area(&self) -> f64 {
        self.area.iter().sum()
    }

    /// `sum_v K a = sum of angle defects`.
    pub fn total_gauss(&self) -> f64 {
        self.angle_defect.iter().sum()
    }

    /// `||A||^2_{L^2} = sum_v |A|^2 a`.
    pub fn tensor_l2_sq(&self) -> f64 {
        self.tensor.iter().zip(&self.area).map(|(t, a)| t.norm_sq() * a).sum()
    }
}

struct VertexCurvature {
    area: f64,
    normal: Vector3<f64>,
    mean: f64,
    gauss: f64,
    defect: f64,
    principal: [f64; 2],
    second_form: Tensor3,
    tensor: Tensor3,
    excess: f64,
    consistent: bool,
}

pub(crate) fn local_f64(mesh: &TriMesh, v: usize) -> VertexLocal<f64> {
    let star = mesh.star_vec(v);
    vertex_local::<f64, _>(&star, |i| mesh.position(i))
}

fn to_na(p: V3<f64>) -> Vector3<f64> {
    Vector3::new(p.0[0], p.0[1], p.0[2])
}

/// Orthonormal tangent frame for a unit normal.
pub fn tangent_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = (helper - n * n.dot(&helper)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Assemble `II` and `A` from a tangential shape operator `s` (in the frame
/// `t1, t2`), the normal excess `c`, and the normal.
pub fn assemble_tensors(
    s: &Matrix2<f64>,
    excess: f64,
    n: &Vector3<f64>,
    t1: &Vector3<f64>,
    t2: &Vector3<f64>,
) -> (Tensor3, Tensor3) {
    let frame = [t1, t2];
    let mut s3 = Matrix3::zeros();
    for a in 0..2 {
        for b in 0..2 {
            s3 += frame[a] * frame[b].transpose() * s[(a, b)];
        }
    }
    let w = excess / std::f64::consts::SQRT_2;
    let mut ii = Tensor3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let mut v = s3[(i, j)] * n[k];
                if excess != 0.0 {
                    v += excess * n[i] * n[j] * n[k];
                    v += w * n[i] * (t1[j] * t2[k] - t2[j] * t1[k]);
                }
                ii.set(i, j, k, v);
            }
        }
    }
    let a = Tensor3::symmetrize_second_form(&ii);
    (ii, a)
}

/// Build a consistent tangential operator and normal excess from `H`, `K` and
/// a fitted anisotropy direction (traceless, in the tangent frame).
///
/// Returns `(S, c, consistent)`.
pub fn consistent_shape_operator(h: f64, k: f64, direction: Option<Matrix2<f64>>) -> (Matrix2<f64>, f64, bool) {
    // required |S|^2 + 2 c^2 = |II|^2 = H^2 - 2K
    let q = h * h - 2.0 * k;
    let iso = Matrix2::identity();
    if q >= 0.5 * h * h {
        let dir = direction.unwrap_or_else(|| Matrix2::new(1.0, 0.0, 0.0, -1.0) / std::f64::consts::SQRT_2);
        let mag = (q - 0.5 * h * h).max(0.0).sqrt();
        (iso * (0.5 * h) + dir * mag, 0.0, true)
    } else {
        // S = s I, c on nu(x)nu(x)nu:  2s + 2c = H,  2s^2 + 2c^2 = q
        let consistent = q >= 0.25 * h * h;
        let disc = (q - 0.25 * h * h).max(0.0).sqrt();
        let s = 0.25 * h + 0.5 * disc;
        let c = 0.25 * h - 0.5 * disc;
        (iso * s, c, consistent)
    }
}

/// Least-squares symmetric fit of `d nu ~ S dx` over the one-ring; returns the
/// normalized traceless part (or `None` when the fit is isotropic).
fn fitted_direction(
    v: usize,
    mesh: &TriMesh,
    normals: &[Vector3<f64>],
    t1: &Vector3<f64>,
    t2: &Vector3<f64>,
) -> Result<Option<Matrix2<f64>>, CurvatureError> {
    let x0 = mesh.vertices()[v];
    let n0 = normals[v];
    // unknowns (s11, s12, s22)
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    let mut gram = Matrix2::<f64>::zeros();
    for j in mesh.neighbors(v) {
        let dx = mesh.vertices()[j] - x0;
        let d = Vector2::new(dx.dot(t1), dx.dot(t2));
        let dn = normals[j] - n0;
        let g = Vector2::new(dn.dot(t1), dn.dot(t2));
        gram += d * d.transpose();
        let r1 = Vector3::new(d.x, d.y, 0.0);
        let r2 = Vector3::new(0.0, d.x, d.y);
        ata += r1 * r1.transpose() + r2 * r2.transpose();
        atb += r1 * g.x + r2 * g.y;
    }
    let scale = gram.trace();
    if !(gram.determinant() > 1e-12 * scale * scale) {
        return Err(CurvatureError::DegenerateOneRing {
            vertex: v,
            reason: "one-ring does not span the tangent plane",
        });
    }
    let sol = ata.lu().solve(&atb).ok_or(CurvatureError::DegenerateOneRing {
        vertex: v,
        reason: "singular shape-operator fit",
    })?;
    let s = Matrix2::new(sol.x, sol.y, sol.y, sol.z);
    let traceless = s - Matrix2::identity() * (0.5 * s.trace());
    let norm = traceless.norm();
    let ref_scale = s.norm().max(1e-300);
    Ok((norm > 1e-12 * ref_scale).then(|| traceless / norm))
}

fn vertex_curvature(
    v: usize,
    mesh: &TriMesh,
    locals: &[VertexLocal<f64>],
    normals: &[Vector3<f64>],
) -> Result<VertexCurvature, CurvatureError> {
    let loc = &locals[v];
    if !(loc.area > 0.0) {
        return Err(CurvatureError::DegenerateOneRing {
            vertex: v,
            reason: "non-positive mixed area",
        });
    }
    let n = normals[v];
    let h = -to_na(loc.laplace).dot(&n) / loc.area;
    let defect = loc.angle_defect();
    let k = defect / loc.area;
    if !h.is_finite() || !k.is_finite() {
        return Err(CurvatureError::DegenerateOneRing {
            vertex: v,
            reason: "non-finite curvature",
        });
    }
    let (t1, t2) = tangent_frame(&n);
    let dir = fitted_direction(v, mesh, normals, &t1, &t2)?;
    let (s, excess, consistent) = consistent_shape_operator(h, k, dir);
    let eig = s.symmetric_eigenvalues();
    let principal = [eig[0].max(eig[1]), eig[0].min(eig[1])];
    let (second_form, tensor) = assemble_tensors(&s, excess, &n, &t1, &t2);
    Ok(VertexCurvature {
        area: loc.area,
        normal: n,
        mean: h,
        gauss: k,
        defect,
        principal,
        second_form,
        tensor,
        excess,
        consistent,
    })
}

/// Compute the curvature field of a closed mesh.
///
/// Vertices are processed in parallel; every per-vertex value depends only on
/// its own star, so results are independent of the thread count. Reductions
/// over the field are always taken sequentially in vertex order.
pub fn curvature_field(mesh: &TriMesh) -> Result<CurvatureField, CurvatureError> {
    curvature_field_at(mesh, &(0..mesh.n_vertices()).collect::<Vec<_>>())
}

/// Curvature at a subset of vertices (all of which must be interior); other
/// entries are zero. Used for open test patches.
#[doc(hidden)]
pub fn curvature_field_at(mesh: &TriMesh, vertices: &[usize]) -> Result<CurvatureField, CurvatureError> {
    let nv = mesh.n_vertices();
    let locals: Vec<VertexLocal<f64>> = (0..nv).into_par_iter().map(|v| local_f64(mesh, v)).collect();
    let normals: Vec<Vector3<f64>> = locals
        .iter()
        .enumerate()
        .map(|(v, l)| {
            let s = to_na(l.normal_sum);
            let len = s.norm();
            if len > 0.0 && len.is_finite() {
                Ok(s / len)
            } else {
                Err(CurvatureError::DegenerateOneRing {
                    vertex: v,
                    reason: "vanishing normal",
                })
            }
        })
        .collect::<Result<_, _>>()?;

    let computed: Vec<VertexCurvature> = vertices
        .par_iter()
        .map(|&v| vertex_curvature(v, mesh, &locals, &normals))
        .collect::<Result<_, _>>()?;

    let mut field = CurvatureField {
        area: vec![0.0; nv],
        normal: normals.clone(),
        projection: normals
            .iter()
            .map(|n| Matrix3::identity() - n * n.transpose())
            .collect(),
        mean_vector: vec![Vector3::zeros(); nv],
        mean: vec![0.0; nv],
        gauss: vec![0.0; nv],
        angle_defect: vec![0.0; nv],
        principal: vec![[0.0; 2]; nv],
        second_form: vec![Tensor3::zeros(); nv],
        tensor: vec![Tensor3::zeros(); nv],
        normal_excess: vec![0.0; nv],
        inconsistent: Vec::new(),
    };
    for (&v, c) in vertices.iter().zip(computed) {
        field.area[v] = c.area;
        field.normal[v] = c.normal;
        field.mean_vector[v] = c.normal * c.mean;
        field.mean[v] = c.mean;
        field.gauss[v] = c.gauss;
        field.angle_defect[v] = c.defect;
        field.principal[v] = c.principal;
        field.second_form[v] = c.second_form;
        field.tensor[v] = c.tensor;
        field.normal_excess[v] = c.excess;
        if !c.consistent {
            field.inconsistent.push(v);
        }
    }
    Ok(field)
}
