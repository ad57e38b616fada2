//! Mesh generators for tests, benchmarks and the shipped corpus.
//!
//! The icosahedron is oriented with a 5-fold axis along `z`, so every
//! subdivision level `>= 1` contains an exact equatorial edge loop at `z = 0`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::TriMesh;

pub fn octahedron() -> TriMesh {
    let v = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(0.0, 0.0, 1.0),
    ];
    let f = vec![
        [5, 0, 2],
        [5, 2, 1],
        [5, 1, 3],
        [5, 3, 0],
        [4, 2, 0],
        [4, 1, 2],
        [4, 3, 1],
        [4, 0, 3],
    ];
    TriMesh::build(v, f).expect("octahedron")
}

/// Axis-aligned unit cube `[0, 1]^3`, two triangles per side.
pub fn unit_cube() -> TriMesh {
    let mut v = Vec::with_capacity(8);
    for i in 0..8 {
        v.push(Vector3::new(
            (i & 1) as f64,
            ((i >> 1) & 1) as f64,
            ((i >> 2) & 1) as f64,
        ));
    }
    let f = vec![
        [0, 2, 3],
        [0, 3, 1], // z = 0
        [4, 5, 7],
        [4, 7, 6], // z = 1
        [0, 1, 5],
        [0, 5, 4], // y = 0
        [2, 6, 7],
        [2, 7, 3], // y = 1
        [0, 4, 6],
        [0, 6, 2], // x = 0
        [1, 3, 7],
        [1, 7, 5], // x = 1
    ];
    TriMesh::build(v, f).expect("cube")
}

pub fn regular_tetrahedron(edge: f64) -> TriMesh {
    let s = edge / (2.0 * 2f64.sqrt());
    let v = vec![
        Vector3::new(1.0, 1.0, 1.0) * s,
        Vector3::new(1.0, -1.0, -1.0) * s,
        Vector3::new(-1.0, 1.0, -1.0) * s,
        Vector3::new(-1.0, -1.0, 1.0) * s,
    ];
    let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriMesh::build(v, f).expect("tetrahedron")
}

fn icosahedron_raw() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let z0 = 1.0 / 5f64.sqrt();
    let rho = 2.0 / 5f64.sqrt();
    let mut v = vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, -1.0)];
    for k in 0..5 {
        let t = 2.0 * PI * k as f64 / 5.0;
        v.push(Vector3::new(rho * t.cos(), rho * t.sin(), z0));
    }
    for k in 0..5 {
        let t = 2.0 * PI * k as f64 / 5.0 + PI / 5.0;
        v.push(Vector3::new(rho * t.cos(), rho * t.sin(), -z0));
    }
    let up = |k: usize| 2 + k % 5;
    let lo = |k: usize| 7 + k % 5;
    let mut f = Vec::with_capacity(20);
    for k in 0..5 {
        f.push([0, up(k), up(k + 1)]);
        f.push([up(k), lo(k), up(k + 1)]);
        f.push([up(k + 1), lo(k), lo(k + 1)]);
        f.push([1, lo(k + 1), lo(k)]);
    }
    (v, f)
}

/// Unit icosphere after `level` midpoint subdivisions (`20 * 4^level` faces).
pub fn icosphere(level: u32) -> TriMesh {
    icosphere_radius(level, 1.0)
}

pub fn icosphere_radius(level: u32, radius: f64) -> TriMesh {
    let (mut v, mut f) = icosahedron_raw();
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, v: &mut Vec<Vector3<f64>>| -> usize {
            let k = (a.min(b), a.max(b));
            *cache.entry(k).or_insert_with(|| {
                let m = (v[a] + v[b]) * 0.5;
                v.push(m.normalize());
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(f.len() * 4);
        for &[a, b, c] in &f {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        f = next;
    }
    let v = v.into_iter().map(|x| x * radius).collect();
    TriMesh::build(v, f).expect("icosphere")
}

/// Icosphere scaled to the ellipsoid with semi-axes `(a, b, c)`.
pub fn ellipsoid(level: u32, a: f64, b: f64, c: f64) -> TriMesh {
    let s = icosphere(level);
    let v = s
        .vertices()
        .iter()
        .map(|x| Vector3::new(a * x.x, b * x.y, c * x.z))
        .collect();
    TriMesh::build(v, s.faces().to_vec()).expect("ellipsoid")
}

/// Unit icosphere with a smooth radial bump `r = 1 + amplitude * (xy + z^3 / 2)`.
pub fn perturbed_sphere(level: u32, amplitude: f64) -> TriMesh {
    let s = icosphere(level);
    let v = s
        .vertices()
        .iter()
        .map(|x| x * (1.0 + amplitude * (x.x * x.y + 0.5 * x.z.powi(3))))
        .collect();
    TriMesh::build(v, s.faces().to_vec()).expect("perturbed sphere")
}

/// Displace every coordinate uniformly in `[-amplitude, amplitude]`.
pub fn jitter(mesh: &TriMesh, amplitude: f64, seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = mesh
        .vertices()
        .iter()
        .map(|x| {
            x + Vector3::new(
                rng.gen_range(-amplitude..=amplitude),
                rng.gen_range(-amplitude..=amplitude),
                rng.gen_range(-amplitude..=amplitude),
            )
        })
        .collect();
    mesh.with_vertices(v).expect("jitter produced a degenerate face")
}

/// Torus of revolution around `z` with major radius `major` and tube radius `minor`.
pub fn torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> TriMesh {
    let mut v = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = 2.0 * PI * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let w = 2.0 * PI * j as f64 / n_minor as f64;
            let r = major + minor * w.cos();
            v.push(Vector3::new(r * u.cos(), r * u.sin(), minor * w.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % n_major) * n_minor + j % n_minor;
    let mut f = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::build(v, f).expect("torus")
}

/// Capsule along `z`: two hemispherical icosphere caps of radius `radius`
/// joined by a staggered cylinder of length `length`.
pub fn capsule(level: u32, radius: f64, length: f64) -> TriMesh {
    assert!(level >= 1, "the equator loop needs at least one subdivision");
    let s = icosphere(level);
    let half = 0.5 * length;
    let mut v: Vec<Vector3<f64>> = Vec::new();
    let mut top_id = vec![usize::MAX; s.n_vertices()];
    let mut bot_id = vec![usize::MAX; s.n_vertices()];
    let mut equator: Vec<usize> = Vec::new();
    for (i, x) in s.vertices().iter().enumerate() {
        let p = x * radius;
        if x.z == 0.0 {
            equator.push(i);
            top_id[i] = v.len();
            v.push(p + Vector3::new(0.0, 0.0, half));
            bot_id[i] = v.len();
            v.push(p - Vector3::new(0.0, 0.0, half));
        } else if x.z > 0.0 {
            top_id[i] = v.len();
            v.push(p + Vector3::new(0.0, 0.0, half));
        } else {
            bot_id[i] = v.len();
            v.push(p - Vector3::new(0.0, 0.0, half));
        }
    }
    let mut f = Vec::new();
    for (fi, tri) in s.faces().iter().enumerate() {
        let map = if s.face_centroid(fi).z > 0.0 { &top_id } else { &bot_id };
        f.push([map[tri[0]], map[tri[1]], map[tri[2]]]);
    }

    let mut phi: Vec<(f64, usize)> = equator
        .iter()
        .map(|&i| {
            let x = s.vertices()[i];
            (x.y.atan2(x.x), i)
        })
        .collect();
    phi.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = phi.len();
    let phi0 = phi[0].0;
    let dphi = 2.0 * PI / n as f64;
    let seg = radius * dphi;
    let mut gaps = (length / (seg * 3f64.sqrt() / 2.0)).round() as usize;
    gaps = gaps.max(2);
    if gaps % 2 == 1 {
        gaps += 1;
    }
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(gaps + 1);
    rings.push(phi.iter().map(|&(_, i)| top_id[i]).collect());
    for r in 1..gaps {
        let z = half - length * r as f64 / gaps as f64;
        let off = if r % 2 == 1 { 0.5 * dphi } else { 0.0 };
        let ring = (0..n)
            .map(|k| {
                let t = phi0 + k as f64 * dphi + off;
                v.push(Vector3::new(radius * t.cos(), radius * t.sin(), z));
                v.len() - 1
            })
            .collect();
        rings.push(ring);
    }
    rings.push(phi.iter().map(|&(_, i)| bot_id[i]).collect());
    for r in 0..gaps {
        let (p, q) = (&rings[r], &rings[r + 1]);
        for i in 0..n {
            let i1 = (i + 1) % n;
            if r % 2 == 0 {
                // next ring shifted by +half a step
                f.push([p[i], q[i], p[i1]]);
                f.push([p[i1], q[i], q[i1]]);
            } else {
                f.push([p[i], q[i1], p[i1]]);
                f.push([p[i], q[i], q[i1]]);
            }
        }
    }
    TriMesh::build(v, f).expect("capsule")
}

/// Two unit icospheres touching at the origin (a point of multiplicity two).
pub fn touching_spheres(level: u32) -> TriMesh {
    let s = icosphere(level);
    let n = s.n_vertices();
    let mut v: Vec<Vector3<f64>> = s.vertices().iter().map(|x| x - Vector3::new(0.0, 0.0, 1.0)).collect();
    v.extend(s.vertices().iter().map(|x| x + Vector3::new(0.0, 0.0, 1.0)));
    let mut f = s.faces().to_vec();
    f.extend(s.faces().iter().map(|t| [t[0] + n, t[1] + n, t[2] + n]));
    TriMesh::build(v, f).expect("touching spheres")
}

/// Label faces `1` above the `z = 0` plane and `2` below (by centroid).
pub fn hemisphere_labels(mesh: &TriMesh) -> Vec<u32> {
    (0..mesh.n_faces())
        .map(|f| if mesh.face_centroid(f).z >= 0.0 { 1 } else { 2 })
        .collect()
}

/// Open equilateral-lattice patch with `n x n` points (test use only).
#[doc(hidden)]
pub fn flat_lattice_patch(n: usize) -> TriMesh {
    let h = 3f64.sqrt() / 2.0;
    let mut v = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let shift = if j % 2 == 1 { 0.5 } else { 0.0 };
            v.push(Vector3::new(i as f64 + shift, j as f64 * h, 0.0));
        }
    }
    let id = |i: usize, j: usize| j * n + i;
    let mut f = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            if j % 2 == 0 {
                f.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                f.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            } else {
                f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            }
        }
    }
    TriMesh::build_open_patch(v, f).expect("lattice patch")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_meshes_are_closed_and_outward() {
        for (m, chi) in [
            (icosphere(2), 2),
            (octahedron(), 2),
            (unit_cube(), 2),
            (regular_tetrahedron(1.0), 2),
            (ellipsoid(2, 1.0, 1.0, 0.5), 2),
            (torus(2.0, 1.0, 32, 16), 0),
            (capsule(2, 1.0, 6.0), 2),
            (perturbed_sphere(2, 0.1), 2),
        ] {
            assert_eq!(m.euler_characteristic(), chi);
            assert!(m.enclosed_volume() > 0.0);
        }
        let two = touching_spheres(1);
        assert_eq!(two.components(), 2);
        assert_eq!(two.euler_characteristic(), 4);
        assert_eq!(two.genus(), 0);
    }

    #[test]
    fn equator_is_an_edge_loop() {
        let m = icosphere(3);
        let on_equator = m
            .edges()
            .iter()
            .filter(|&&[a, b]| m.vertices()[a].z == 0.0 && m.vertices()[b].z == 0.0)
            .count();
        assert_eq!(on_equator, 40);
        let labels = hemisphere_labels(&m);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 640);
    }

    #[test]
    fn capsule_dimensions() {
        let m = capsule(3, 1.0, 18.0);
        assert!((m.diameter() - 20.0).abs() < 1e-9);
        let cyl_area = 2.0 * PI * 18.0;
        let exact = 4.0 * PI + cyl_area;
        assert!((m.total_area() - exact).abs() / exact < 0.01);
    }
}

/// One mesh of the standard corpus.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    /// File stem of the shipped copy.
    pub name: &'static str,
    pub mesh: TriMesh,
    pub labels: Option<Vec<u32>>,
    /// Largest point multiplicity, known by construction.
    pub multiplicity: u32,
}

/// The standard corpus: icospheres at levels 2 to 4, a torus (R = 2, r = 1),
/// a capsule of aspect ratio 10, a perturbed sphere, and an equator-split
/// two-phase sphere.
pub fn standard_corpus() -> Vec<CorpusEntry> {
    let plain = |name, mesh| CorpusEntry {
        name,
        mesh,
        labels: None,
        multiplicity: 1,
    };
    let split = icosphere(3);
    let labels = hemisphere_labels(&split);
    vec![
        plain("icosphere2", icosphere(2)),
        plain("icosphere3", icosphere(3)),
        plain("icosphere4", icosphere(4)),
        plain("torus", torus(2.0, 1.0, 48, 24)),
        plain("capsule", capsule(3, 0.1, 1.8)),
        plain("perturbed_sphere", perturbed_sphere(3, 0.1)),
        CorpusEntry {
            name: "split_sphere",
            mesh: split,
            labels: Some(labels),
            multiplicity: 1,
        },
    ]
}
