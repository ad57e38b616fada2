//! Closed, oriented, manifold triangle meshes.
//!
//! Half-edges are implicit: half-edge `3 * f + c` leaves corner `c` of face
//! `f` towards corner `(c + 1) % 3`. Construction derives twins and the
//! ordered star of every vertex and rejects anything that is not a closed
//! orientable 2-manifold. Invalid input is reported, never repaired.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::V3;

/// Relative factor of the degenerate-face threshold (times bbox diagonal squared).
pub const AREA_EPS_FACTOR: f64 = 1e-12;

const NO_TWIN: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("vertex {0} is not referenced by any face")]
    UnreferencedVertex(usize),
    #[error("face {face} has area {area:e}, below the degeneracy threshold {threshold:e}")]
    DegenerateFace { face: usize, area: f64, threshold: f64 },
    #[error("edge ({a}, {b}) has {faces} incident faces, expected 2")]
    NonManifoldEdge { a: usize, b: usize, faces: usize },
    #[error("faces {f0} and {f1} span the same three vertices")]
    DuplicateFace { f0: usize, f1: usize },
    #[error("vertex {0} does not have a single closed fan of faces")]
    NonManifoldVertex(usize),
    #[error("faces {f0} and {f1} traverse edge ({a}, {b}) in the same direction")]
    InconsistentOrientation { a: usize, b: usize, f0: usize, f1: usize },
}

/// Validated closed triangle mesh with half-edge adjacency.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    twin: Vec<usize>,
    star_offsets: Vec<usize>,
    star_faces: Vec<usize>,
    edges: Vec<[usize; 2]>,
    edge_faces: Vec<[usize; 2]>,
    closed: bool,
}

impl TriMesh {
    /// Validate raw arrays and build the adjacency.
    pub fn build(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        Self::build_inner(vertices, faces, true)
    }

    /// Open patches are only used by tests (interior-vertex checks).
    #[doc(hidden)]
    pub fn build_open_patch(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        Self::build_inner(vertices, faces, false)
    }

    fn build_inner(
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
        require_closed: bool,
    ) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        let mut referenced = vec![false; nv];
        for (f, tri) in faces.iter().enumerate() {
            for &i in tri {
                if i >= nv {
                    return Err(MeshError::IndexOutOfRange {
                        face: f,
                        index: i,
                        count: nv,
                    });
                }
                referenced[i] = true;
            }
        }
        if let Some(v) = referenced.iter().position(|r| !r) {
            return Err(MeshError::UnreferencedVertex(v));
        }

        let threshold = area_threshold(&vertices);
        for (f, tri) in faces.iter().enumerate() {
            let area = tri_area(&vertices, tri);
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] || !(area > threshold) {
                return Err(MeshError::DegenerateFace {
                    face: f,
                    area,
                    threshold,
                });
            }
        }

        // undirected edge -> incident half-edges
        let mut incidence: HashMap<[usize; 2], Vec<usize>> = HashMap::with_capacity(faces.len() * 2);
        for (f, tri) in faces.iter().enumerate() {
            for c in 0..3 {
                let (a, b) = (tri[c], tri[(c + 1) % 3]);
                incidence.entry(key(a, b)).or_default().push(3 * f + c);
            }
        }
        let mut edge_list: Vec<([usize; 2], Vec<usize>)> = incidence.into_iter().collect();
        edge_list.sort_unstable_by_key(|(k, _)| *k);

        let mut twin = vec![NO_TWIN; 3 * faces.len()];
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut edge_faces = Vec::with_capacity(edge_list.len());
        for (k, hes) in &edge_list {
            match hes.len() {
                2 => {
                    let (h0, h1) = (hes[0], hes[1]);
                    let o0 = faces[h0 / 3][h0 % 3];
                    let o1 = faces[h1 / 3][h1 % 3];
                    if o0 == o1 {
                        return Err(MeshError::InconsistentOrientation {
                            a: k[0],
                            b: k[1],
                            f0: h0 / 3,
                            f1: h1 / 3,
                        });
                    }
                    twin[h0] = h1;
                    twin[h1] = h0;
                    edges.push(*k);
                    edge_faces.push([h0 / 3, h1 / 3]);
                }
                1 if !require_closed => {
                    edges.push(*k);
                    edge_faces.push([hes[0] / 3, usize::MAX]);
                }
                n => {
                    return Err(MeshError::NonManifoldEdge {
                        a: k[0],
                        b: k[1],
                        faces: n,
                    })
                }
            }
        }

        // faces sharing all three vertices (e.g. a two-triangle pillow)
        let mut seen: HashMap<[usize; 3], usize> = HashMap::with_capacity(faces.len());
        for (f, tri) in faces.iter().enumerate() {
            let mut s = *tri;
            s.sort_unstable();
            if let Some(&g) = seen.get(&s) {
                return Err(MeshError::DuplicateFace { f0: g, f1: f });
            }
            seen.insert(s, f);
        }

        // outgoing half-edges per vertex
        let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for (f, tri) in faces.iter().enumerate() {
            for c in 0..3 {
                outgoing[tri[c]].push(3 * f + c);
            }
        }

        let mut star_offsets = Vec::with_capacity(nv + 1);
        let mut star_faces = Vec::with_capacity(3 * faces.len());
        star_offsets.push(0);
        for (v, outs) in outgoing.iter().enumerate() {
            if require_closed {
                if outs.len() < 3 {
                    return Err(MeshError::NonManifoldVertex(v));
                }
                // walk the fan: next outgoing = twin(prev(h))
                let start = outs[0];
                let mut h = start;
                let mut count = 0;
                loop {
                    star_faces.push(h / 3);
                    count += 1;
                    let prev = 3 * (h / 3) + (h % 3 + 2) % 3;
                    h = twin[prev];
                    if h == start {
                        break;
                    }
                    if count > outs.len() {
                        return Err(MeshError::NonManifoldVertex(v));
                    }
                }
                if count != outs.len() {
                    return Err(MeshError::NonManifoldVertex(v));
                }
            } else {
                star_faces.extend(outs.iter().map(|h| h / 3));
            }
            star_offsets.push(star_faces.len());
        }

        Ok(TriMesh {
            vertices,
            faces,
            twin,
            star_offsets,
            star_faces,
            edges,
            edge_faces,
            closed: require_closed,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Unique undirected edges `[a, b]` with `a < b`, sorted.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// The two faces incident to edge `e` (`usize::MAX` marks an open side).
    pub fn edge_faces(&self, e: usize) -> [usize; 2] {
        self.edge_faces[e]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.vertices[a] - self.vertices[b]).norm()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let total: f64 = (0..self.edges.len()).map(|e| self.edge_length(e)).sum();
        total / self.edges.len() as f64
    }

    /// Twin of a half-edge.
    pub fn twin(&self, he: usize) -> Option<usize> {
        let t = self.twin[he];
        (t != NO_TWIN).then_some(t)
    }

    /// Face indices around `v` (in fan order for closed meshes).
    pub fn star_faces(&self, v: usize) -> &[usize] {
        &self.star_faces[self.star_offsets[v]..self.star_offsets[v + 1]]
    }

    /// Faces around `v`, each rotated to start at `v`.
    pub fn star(&self, v: usize) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.star_faces(v).iter().map(move |&f| rotate_to(self.faces[f], v))
    }

    pub fn star_vec(&self, v: usize) -> Vec<[usize; 3]> {
        self.star(v).collect()
    }

    /// One-ring neighbours of `v` (each appears once).
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(8);
        for [_, j, k] in self.star(v) {
            for n in [j, k] {
                if !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        out
    }

    /// Whether every incident edge of `v` has two faces.
    pub fn is_interior_vertex(&self, v: usize) -> bool {
        if self.closed {
            return true;
        }
        self.star_faces(v).iter().all(|&f| {
            let c = self.faces[f].iter().position(|&x| x == v).unwrap();
            self.twin[3 * f + c] != NO_TWIN && self.twin[3 * f + (c + 2) % 3] != NO_TWIN
        })
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64
    }

    /// Number of connected components (face-edge connectivity).
    pub fn components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n_vertices()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &[a, b] in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..self.n_vertices()).filter(|&v| find(&mut parent, v) == v).count()
    }

    /// Total genus over all components: `chi = sum_i 2 (1 - g_i)`.
    pub fn genus(&self) -> i64 {
        (2 * self.components() as i64 - self.euler_characteristic()) / 2
    }

    pub fn face_area(&self, f: usize) -> f64 {
        tri_area(&self.vertices, &self.faces[f])
    }

    /// Unit outward normal of face `f`.
    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[f];
        let p = &self.vertices;
        (p[b] - p[a]).cross(&(p[c] - p[a])).normalize()
    }

    pub fn face_centroid(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[f];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_faces()).map(|f| self.face_area(f)).sum()
    }

    /// Enclosed volume via the divergence theorem, exact for polyhedra.
    pub fn enclosed_volume(&self) -> f64 {
        let p = &self.vertices;
        self.faces
            .iter()
            .map(|&[a, b, c]| p[a].dot(&p[b].cross(&p[c])))
            .sum::<f64>()
            / 6.0
    }

    /// Exact maximum pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        let p = &self.vertices;
        let best = (0..p.len())
            .into_par_iter()
            .map(|i| {
                let mut m = 0.0f64;
                for j in (i + 1)..p.len() {
                    m = m.max((p[i] - p[j]).norm_squared());
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        best.sqrt()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }

    pub fn area_threshold(&self) -> f64 {
        area_threshold(&self.vertices)
    }

    /// Same connectivity, new positions; rejects degenerate faces.
    pub fn with_vertices(&self, vertices: Vec<Vector3<f64>>) -> Result<Self, MeshError> {
        assert_eq!(vertices.len(), self.vertices.len());
        let threshold = area_threshold(&vertices);
        for (f, tri) in self.faces.iter().enumerate() {
            let area = tri_area(&vertices, tri);
            if !(area > threshold) {
                return Err(MeshError::DegenerateFace {
                    face: f,
                    area,
                    threshold,
                });
            }
        }
        Ok(TriMesh {
            vertices,
            ..self.clone()
        })
    }

    /// All windings reversed (normals flipped).
    pub fn flipped(&self) -> Self {
        let faces = self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self::build_inner(self.vertices.clone(), faces, self.closed).expect("flipping preserves validity")
    }

    /// Apply `x -> rotation * x + translation`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let verts = self.vertices.iter().map(|x| rotation * x + translation).collect();
        TriMesh {
            vertices: verts,
            ..self.clone()
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        assert!(s > 0.0);
        TriMesh {
            vertices: self.vertices.iter().map(|x| x * s).collect(),
            ..self.clone()
        }
    }

    /// Smallest corner angle over all faces, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let p = &self.vertices;
        let mut min = f64::INFINITY;
        for &[a, b, c] in &self.faces {
            for (o, i, j) in [(a, b, c), (b, c, a), (c, a, b)] {
                let u = p[i] - p[o];
                let w = p[j] - p[o];
                let ang = u.cross(&w).norm().atan2(u.dot(&w));
                min = min.min(ang);
            }
        }
        min.to_degrees()
    }

    /// Longest over shortest edge.
    pub fn edge_length_ratio(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for e in 0..self.edges.len() {
            let l = self.edge_length(e);
            lo = lo.min(l);
            hi = hi.max(l);
        }
        hi / lo
    }

    pub(crate) fn position(&self, i: usize) -> V3<f64> {
        let p = self.vertices[i];
        V3([p.x, p.y, p.z])
    }
}

fn key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn rotate_to(tri: [usize; 3], v: usize) -> [usize; 3] {
    if tri[0] == v {
        tri
    } else if tri[1] == v {
        [tri[1], tri[2], tri[0]]
    } else {
        [tri[2], tri[0], tri[1]]
    }
}

fn tri_area(p: &[Vector3<f64>], &[a, b, c]: &[usize; 3]) -> f64 {
    0.5 * (p[b] - p[a]).cross(&(p[c] - p[a])).norm()
}

fn bbox_diagonal(p: &[Vector3<f64>]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for x in p {
        lo = lo.inf(x);
        hi = hi.sup(x);
    }
    (hi - lo).norm()
}

fn area_threshold(p: &[Vector3<f64>]) -> f64 {
    let d = bbox_diagonal(p);
    AREA_EPS_FACTOR * d * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn octahedron_is_valid_sphere() {
        let m = shapes::octahedron();
        assert_eq!(m.n_vertices(), 6);
        assert_eq!(m.n_faces(), 8);
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.genus(), 0);
    }

    #[test]
    fn back_to_back_triangles_are_rejected() {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let same = TriMesh::build(v.clone(), vec![[0, 1, 2], [0, 1, 2]]).unwrap_err();
        assert!(matches!(same, MeshError::InconsistentOrientation { .. }));
        let opposite = TriMesh::build(v, vec![[0, 1, 2], [0, 2, 1]]).unwrap_err();
        assert_eq!(opposite, MeshError::DuplicateFace { f0: 0, f1: 1 });
    }

    #[test]
    fn icosphere_level3_counts() {
        let m = shapes::icosphere(3);
        assert_eq!(m.n_faces(), 1280);
        assert_eq!(m.n_vertices(), 642);
        assert_eq!(m.n_edges(), 1920);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn index_out_of_range() {
        let v = vec![Vector3::zeros(); 3];
        let err = TriMesh::build(v, vec![[0, 1, 5]]).unwrap_err();
        assert_eq!(
            err,
            MeshError::IndexOutOfRange {
                face: 0,
                index: 5,
                count: 3
            }
        );
    }

    #[test]
    fn degenerate_face() {
        let mut m = shapes::octahedron();
        let mut v = m.vertices().to_vec();
        // collapse vertex 0 onto vertex 2
        v[0] = v[2];
        let err = TriMesh::build(v.clone(), m.faces().to_vec()).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateFace { .. }));
        m = m.with_vertices(m.vertices().to_vec()).unwrap();
        assert!(m.with_vertices(v).is_err());
    }

    #[test]
    fn open_edge_rejected_in_closed_mode() {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let err = TriMesh::build(v, vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge { faces: 1, .. }));
    }

    #[test]
    fn pinched_vertex_rejected() {
        // two octahedra sharing one vertex index
        let a = shapes::octahedron();
        let mut verts = a.vertices().to_vec();
        let mut faces = a.faces().to_vec();
        let shift = Vector3::new(0.0, 0.0, 2.0);
        // vertex 5 of `a` is the top (0,0,1); reuse it as the bottom of the copy
        let top = 5;
        let bottom = 4;
        let mut map = vec![usize::MAX; 6];
        for (i, x) in a.vertices().iter().enumerate() {
            if i == bottom {
                map[i] = top;
            } else {
                map[i] = verts.len();
                verts.push(x + shift);
            }
        }
        for f in a.faces() {
            faces.push([map[f[0]], map[f[1]], map[f[2]]]);
        }
        let err = TriMesh::build(verts, faces).unwrap_err();
        assert_eq!(err, MeshError::NonManifoldVertex(top));
    }

    #[test]
    fn cube_volume_area_diameter() {
        let m = shapes::unit_cube();
        assert_eq!(m.n_faces(), 12);
        assert_eq!(m.enclosed_volume(), 1.0);
        assert_eq!(m.total_area(), 6.0);
        assert!((m.diameter() - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.flipped().enclosed_volume(), -1.0);
    }

    #[test]
    fn tetrahedron_diameter() {
        let m = shapes::regular_tetrahedron(1.0);
        assert!((m.diameter() - 1.0).abs() < 1e-14);
    }
}
