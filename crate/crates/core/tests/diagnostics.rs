use std::f64::consts::PI;

use approx::assert_relative_eq;
use helfrich::curvature::{assemble_tensors, consistent_shape_operator, tangent_frame};
use helfrich::density::{random_unit, MaterialParams};
use helfrich::diagnostics::*;
use helfrich::energy::{willmore, WillmoreNormalization};
use helfrich::shapes;
use helfrich::{curvature_field, CurvatureField, Tensor3};
use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A field with one entry per vertex from `(normal, S, excess, K)`.
fn synthetic_field(points: &[(Vector3<f64>, Matrix2<f64>, f64, f64)]) -> CurvatureField {
    let mut f = CurvatureField {
        area: Vec::new(),
        normal: Vec::new(),
        projection: Vec::new(),
        mean_vector: Vec::new(),
        mean: Vec::new(),
        gauss: Vec::new(),
        angle_defect: Vec::new(),
        principal: Vec::new(),
        second_form: Vec::new(),
        tensor: Vec::new(),
        normal_excess: Vec::new(),
        inconsistent: Vec::new(),
    };
    for (n, s, c, k) in points {
        let (t1, t2) = tangent_frame(n);
        let (ii, a) = assemble_tensors(s, *c, n, &t1, &t2);
        let h = s.trace() + 2.0 * c;
        f.area.push(1.0);
        f.normal.push(*n);
        f.projection.push(Matrix3::identity() - n * n.transpose());
        f.mean_vector.push(n * h);
        f.mean.push(h);
        f.gauss.push(*k);
        f.angle_defect.push(*k);
        let eig = s.symmetric_eigenvalues();
        f.principal.push([eig.max(), eig.min()]);
        f.second_form.push(ii);
        f.tensor.push(a);
        f.normal_excess.push(*c);
    }
    f
}

fn by_name<'a>(records: &'a [CheckRecord], name: &str) -> &'a CheckRecord {
    records.iter().find(|r| r.name == name).unwrap()
}

#[test]
fn pointwise_sphere_point() {
    for r in [0.5, 1.0, 3.0] {
        let s = Matrix2::identity() / r;
        let f = synthetic_field(&[(Vector3::z(), s, 0.0, 1.0 / (r * r))]);
        let recs = verify_pointwise(&f);
        let b = by_name(&recs, "pointwise.mean_curvature_bound");
        assert_relative_eq!(b.lhs, 4.0 / (r * r), max_relative = 1e-14);
        assert_relative_eq!(b.rhs, 8.0 / (r * r), max_relative = 1e-14);
        assert!(recs.iter().all(|r| r.pass));
    }
}

#[test]
fn pointwise_saddle_point() {
    let s = Matrix2::new(1.0, 0.0, 0.0, -1.0);
    let f = synthetic_field(&[(Vector3::new(0.0, 0.6, 0.8), s, 0.0, -1.0)]);
    let recs = verify_pointwise(&f);
    let b = by_name(&recs, "pointwise.mean_curvature_bound");
    assert!(b.lhs.abs() < 1e-15);
    assert_relative_eq!(b.rhs, 8.0, max_relative = 1e-14);
    assert!(recs.iter().all(|r| r.pass));
}

#[test]
fn pointwise_random_fields_through_the_constructor() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut points = Vec::with_capacity(10_000);
    while points.len() < 10_000 {
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let h = scale * rng.gen_range(-2.0..2.0);
        let k = scale * scale * rng.gen_range(-2.0..1.0);
        let angle: f64 = rng.gen_range(0.0..PI);
        let dir = Matrix2::new(angle.cos(), angle.sin(), angle.sin(), -angle.cos()) / 2f64.sqrt();
        let (s, c, consistent) = consistent_shape_operator(h, k, Some(dir));
        if consistent {
            points.push((random_unit(&mut rng), s, c, k));
        }
    }
    let f = synthetic_field(&points);
    let recs = verify_pointwise(&f);
    for r in &recs {
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn first_variation_sphere_position_field() {
    let m = shapes::icosphere(4);
    let c = curvature_field(&m).unwrap();
    let recs = verify_first_variation(&m, &c, 0, 0).unwrap();
    let p = by_name(&recs, "first_variation.position_field");
    assert_relative_eq!(p.lhs, 8.0 * PI, max_relative = 1e-2);
    assert_relative_eq!(p.rhs, (128.0 * PI * PI).sqrt(), max_relative = 2e-2);
    assert!(by_name(&recs, "first_variation.constant_field").pass);
}

#[test]
fn first_variation_random_fields_on_corpus() {
    for e in shapes::standard_corpus() {
        let c = curvature_field(&e.mesh).unwrap();
        let recs = verify_first_variation(&e.mesh, &c, 20, 5).unwrap();
        assert_eq!(recs.len(), 22);
        for r in &recs {
            assert!(r.pass, "{}: {r:?}", e.name);
        }
    }
}

#[test]
fn energy_bounds_sphere() {
    let m = shapes::icosphere(4);
    let c = curvature_field(&m).unwrap();
    let recs = verify_energy_bounds(&c, &MaterialParams::new(1.0, -1.0, 0.0)).unwrap();
    let t = by_name(&recs, "energy_bounds.tensor");
    assert_relative_eq!(t.lhs, 16.0 * PI, max_relative = 2e-2);
    assert_relative_eq!(t.rhs, 32.0 * PI, max_relative = 2e-2);
    let w = by_name(&recs, "energy_bounds.willmore");
    assert_eq!(w.willmore, Some(WillmoreNormalization::Varifold));
    assert_relative_eq!(w.lhs, 16.0 * PI, max_relative = 2e-2);
    assert_relative_eq!(w.rhs, 64.0 * PI, max_relative = 2e-2);
    assert!(t.pass && w.pass);
}

#[test]
fn energy_bounds_with_spontaneous_curvature_on_corpus() {
    for e in shapes::standard_corpus() {
        let c = curvature_field(&e.mesh).unwrap();
        for p in [
            MaterialParams::new(1.0, -0.5, 0.7),
            MaterialParams::new(2.0, -1.0, -1.5),
        ] {
            for r in verify_energy_bounds(&c, &p).unwrap() {
                assert!(r.pass, "{}: {r:?}", e.name);
            }
        }
    }
}

#[test]
fn energy_bounds_reject_nonconvex_params() {
    let m = shapes::icosphere(2);
    let c = curvature_field(&m).unwrap();
    assert!(matches!(
        verify_energy_bounds(&c, &MaterialParams::new(1.0, 0.5, 0.0)),
        Err(DiagnosticsError::Density(_))
    ));
}

#[test]
fn diameter_sphere_values() {
    let m = shapes::icosphere(4);
    let c = curvature_field(&m).unwrap();
    let recs = verify_diameter(&m, &c);
    assert_relative_eq!(by_name(&recs, "diameter.lower_varifold").lhs, 0.5, max_relative = 1e-2);
    assert_relative_eq!(by_name(&recs, "diameter.lower_quarter").lhs, 1.0, max_relative = 1e-2);
    assert_relative_eq!(by_name(&recs, "diameter.upper_quarter").rhs, 8.0, max_relative = 1e-2);
    assert!(recs.iter().all(|r| r.pass));
}

#[test]
fn diameter_capsule_has_positive_margins() {
    let m = shapes::capsule(3, 0.1, 1.8);
    assert_relative_eq!(m.diameter(), 2.0, max_relative = 1e-12);
    let c = curvature_field(&m).unwrap();
    let recs = verify_diameter(&m, &c);
    assert_eq!(recs.len(), 3);
    for r in &recs {
        assert!(r.pass && r.margin > 0.0, "{r:?}");
    }
}

#[test]
fn li_yau_cases() {
    let sphere = shapes::icosphere(4);
    let r = verify_li_yau(&sphere, &curvature_field(&sphere).unwrap(), 1).unwrap();
    assert!(r.pass, "{r:?}");
    assert_relative_eq!(r.rhs, 4.0 * PI, max_relative = 2e-2);

    let touching = shapes::touching_spheres(4);
    let r = verify_li_yau(&touching, &curvature_field(&touching).unwrap(), 2).unwrap();
    assert!(r.pass, "{r:?}");
    assert_relative_eq!(r.rhs, 8.0 * PI, max_relative = 2e-2);

    let torus = shapes::torus(2.0, 1.0, 64, 32);
    let r = verify_li_yau(&torus, &curvature_field(&torus).unwrap(), 1).unwrap();
    assert!(r.pass && r.rhs > 4.0 * PI, "{r:?}");
}

#[test]
fn open_meshes_skip_closed_checks() {
    let m = shapes::flat_lattice_patch(6);
    let c = curvature_field(&m).unwrap();
    assert!(matches!(
        verify_first_variation(&m, &c, 3, 0),
        Err(DiagnosticsError::OpenMesh(_))
    ));
    assert_eq!(verify_diameter(&m, &c).len(), 1);
}

#[test]
fn refinement_tables() {
    let tables = refinement_suite().unwrap();
    let names: Vec<&str> = tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["sphere_willmore", "sphere_gauss", "spheroid_willmore"]);
    for t in &tables {
        assert!(t.converged(), "{t:?}");
    }
    let gauss = &tables[1];
    for r in &gauss.rows {
        assert!(r.error < 1e-9, "{r:?}");
    }
    let spheroid = &tables[2];
    assert!(spheroid.rows.windows(2).all(|w| w[1].error < w[0].error));
    assert!(spheroid.rows.last().unwrap().error < 2e-2);
}

#[test]
fn report_is_sorted_reproducible_and_non_mutating() {
    let m = shapes::perturbed_sphere(3, 0.1);
    let before = m.clone();
    let p = MaterialParams::new(1.0, -0.5, 0.3);
    let cfg = VerifyConfig {
        seed: 11,
        ..VerifyConfig::default()
    };
    let a = verify_all(&m, &p, &cfg).unwrap();
    let b = verify_all(&m, &p, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(m.vertices(), before.vertices());
    assert!(a.checks.windows(2).all(|w| w[0].name < w[1].name));
    assert!(a.all_pass());
    assert_eq!(a.mesh.vertices, 642);
    assert_eq!(a.mesh.genus, 0);
}

#[test]
fn full_suite_passes_on_corpus() {
    let cfg = VerifyConfig {
        refinement: true,
        ..VerifyConfig::default()
    };
    for e in shapes::standard_corpus() {
        let r = verify_all(&e.mesh, &MaterialParams::new(1.0, -1.0, 0.0), &cfg).unwrap();
        let failures: Vec<_> = r.failures().collect();
        assert!(failures.is_empty(), "{}: {failures:?}", e.name);
    }
}

#[test]
fn willmore_normalizations_differ_by_four() {
    let m = shapes::ellipsoid(3, 1.0, 1.0, 0.5);
    let c = curvature_field(&m).unwrap();
    let q = willmore(&c, WillmoreNormalization::Quarter);
    let v = willmore(&c, WillmoreNormalization::Varifold);
    assert_relative_eq!(v, 4.0 * q, max_relative = 1e-12);
}

#[test]
fn tensor_norm_is_twice_second_form_norm() {
    let m = shapes::torus(2.0, 1.0, 32, 16);
    let c = curvature_field(&m).unwrap();
    for v in 0..c.len() {
        let ii: &Tensor3 = &c.second_form[v];
        assert_relative_eq!(
            c.tensor[v].norm_sq(),
            2.0 * ii.norm_sq(),
            max_relative = 1e-12,
            epsilon = 1e-14
        );
    }
}
