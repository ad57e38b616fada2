use std::f64::consts::PI;
use std::path::PathBuf;

use helfrich::energy::canham_helfrich;
use helfrich::io::{read_labels, read_mesh};
use helfrich::shapes::standard_corpus;
use helfrich::{curvature_field, MaterialParams, PhaseField};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

#[test]
fn shipped_files_match_generators() {
    for e in standard_corpus() {
        let m = read_mesh(&corpus_dir().join(format!("{}.off", e.name))).unwrap();
        assert_eq!(m.faces(), e.mesh.faces(), "{}", e.name);
        assert_eq!(m.vertices(), e.mesh.vertices(), "{}", e.name);
        if let Some(labels) = &e.labels {
            let l = read_labels(&corpus_dir().join(format!("{}.labels", e.name))).unwrap();
            assert_eq!(&l, labels);
            PhaseField::new(&m, l).unwrap();
        }
    }
}

#[test]
fn gauss_bonnet_on_every_corpus_mesh() {
    for e in standard_corpus() {
        let c = curvature_field(&e.mesh).unwrap();
        let expected = 2.0 * PI * e.mesh.euler_characteristic() as f64;
        let expected_genus = if e.name == "torus" { 1 } else { 0 };
        assert_eq!(e.mesh.genus(), expected_genus, "{}", e.name);
        assert!(
            (c.total_gauss() - expected).abs() < 1e-9,
            "{}: {}",
            e.name,
            c.total_gauss()
        );
    }
}

#[test]
fn tensor_and_scalar_paths_agree_on_every_corpus_mesh() {
    let params = [
        MaterialParams::new(1.0, -1.0, 0.0),
        MaterialParams::new(1.0, -0.5, 0.7),
        MaterialParams::new(2.5, 0.3, -1.2),
    ];
    for e in standard_corpus() {
        let c = curvature_field(&e.mesh).unwrap();
        assert!(c.inconsistent.is_empty(), "{}", e.name);
        for p in &params {
            let ch = canham_helfrich(&c, p).unwrap();
            assert!(ch.relative_gap() < 1e-9, "{}: {ch:?}", e.name);
        }
    }
}

#[test]
fn corpus_meshes_are_closed_and_single_component() {
    for e in standard_corpus() {
        assert!(e.mesh.is_closed(), "{}", e.name);
        assert_eq!(e.mesh.components(), 1, "{}", e.name);
        assert_eq!(e.multiplicity, 1);
    }
}
