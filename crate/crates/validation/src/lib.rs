//! Acceptance criteria as plain functions. Each returns its verdict and the
//! measured values; the runtime budget is enforced by the caller.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Duration;

use helfrich::constraints::{
    no_overlap_check, overlap_measure, overlap_measure_brute_force, phase_support, square_samples,
};
use helfrich::density::{convexity_check, hessian, numeric_verdict, Convexity};
use helfrich::diagnostics::verify_all;
use helfrich::energy::{canham_helfrich, discrete_energy, multiphase_energy, willmore, WillmoreNormalization};
use helfrich::io::{read_labels, read_mesh};
use helfrich::optimize::{energy_gradient, minimize, RunConfig};
use helfrich::shapes;
use helfrich::{curvature_field, ConstraintSet, MaterialParams, PhaseField, TriMesh, VerifyConfig};
use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/corpus")
}

const CORPUS: [&str; 7] = [
    "icosphere2",
    "icosphere3",
    "icosphere4",
    "torus",
    "capsule",
    "perturbed_sphere",
    "split_sphere",
];

fn corpus() -> Vec<(&'static str, TriMesh)> {
    CORPUS
        .iter()
        .map(|&n| (n, read_mesh(&corpus_dir().join(format!("{n}.off"))).expect(n)))
        .collect()
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

pub fn ac1_hessian() -> Outcome {
    let mut worst = 0.0f64;
    let mut verdicts_agree = true;
    for i in 0..4 {
        for j in 0..5 {
            let beta = 0.5 + 2.5 * i as f64 / 3.0;
            let gamma = -3.0 + 3.5 * j as f64 / 4.0;
            let r = hessian(&MaterialParams::new(beta, gamma, 0.0));
            let l1 = 0.5 * (6.0 * beta + 5.0 * gamma);
            let l2 = -0.5 * gamma;
            let mut expected = vec![l1];
            expected.extend([l2; 8]);
            expected.sort_by(f64::total_cmp);
            for (a, b) in r.numeric_eigenvalues.iter().zip(&expected) {
                worst = worst.max((a - b).abs());
            }
            verdicts_agree &= numeric_verdict(&r.numeric_eigenvalues, 1e-10) == r.verdict;
        }
    }
    let mut flips = true;
    for beta in [0.5, 1.0, 1.7, 3.0] {
        let at = |g: f64| convexity_check(&MaterialParams::new(beta, g, 0.0));
        let edge = -6.0 * beta / 5.0;
        let d = 1e-9;
        flips &= at(edge - d) == Convexity::Nonconvex
            && at(edge) == Convexity::Boundary
            && at(edge + d) == Convexity::StrictlyConvex
            && at(-d) == Convexity::StrictlyConvex
            && at(0.0) == Convexity::Boundary
            && at(d) == Convexity::Nonconvex;
    }
    outcome(
        worst <= 1e-10 && verdicts_agree && flips,
        format!("max |eig - closed form| = {worst:.2e} (<= 1e-10), numeric verdicts agree: {verdicts_agree}, flips at -6b/5 and 0: {flips}"),
    )
}

pub fn ac2_gauss_bonnet() -> Outcome {
    let mut worst = 0.0f64;
    let mut topology = true;
    for (name, m) in corpus() {
        let expected = if name == "torus" { 0.0 } else { 4.0 * PI };
        topology &= m.genus() == if name == "torus" { 1 } else { 0 };
        let total = curvature_field(&m).unwrap().total_gauss();
        worst = worst.max((total - expected).abs());
    }
    outcome(
        worst <= 1e-9 && topology,
        format!(
            "max |sum K a - 4 pi (1 - g)| = {worst:.2e} (<= 1e-9) over {} meshes",
            CORPUS.len()
        ),
    )
}

pub fn ac3_sphere_energies() -> Outcome {
    let m = read_mesh(&corpus_dir().join("icosphere4.off")).unwrap();
    let c = curvature_field(&m).unwrap();
    let wq = willmore(&c, WillmoreNormalization::Quarter);
    let wv = willmore(&c, WillmoreNormalization::Varifold);
    let ch = canham_helfrich(&c, &MaterialParams::new(1.0, -1.0, 0.0))
        .unwrap()
        .scalar_path;
    let (vol, area) = (m.enclosed_volume(), m.total_area());
    let pass = within(wq, 4.0 * PI, 0.02)
        && within(wv, 16.0 * PI, 0.02)
        && within(ch, 4.0 * PI, 0.02)
        && within(vol, 4.0 * PI / 3.0, 0.01)
        && within(area, 4.0 * PI, 0.01);
    outcome(
        pass,
        format!(
            "W/4pi = {:.5}, W_var/16pi = {:.5}, E_CH/4pi = {:.5}, V/(4pi/3) = {:.5}, A/4pi = {:.5}",
            wq / (4.0 * PI),
            wv / (16.0 * PI),
            ch / (4.0 * PI),
            vol / (4.0 * PI / 3.0),
            area / (4.0 * PI)
        ),
    )
}

pub fn ac4_path_agreement() -> Outcome {
    let params = [
        MaterialParams::new(1.0, -1.0, 0.0),
        MaterialParams::new(1.0, -0.5, 0.7),
        MaterialParams::new(2.5, 0.3, -1.2),
    ];
    let mut worst = 0.0f64;
    for (_, m) in corpus() {
        let c = curvature_field(&m).unwrap();
        for p in &params {
            worst = worst.max(canham_helfrich(&c, p).unwrap().relative_gap());
        }
    }
    outcome(
        worst <= 1e-9,
        format!("max relative gap tensor vs scalar path = {worst:.2e} (<= 1e-9)"),
    )
}

pub fn ac5_inequality_suite() -> Outcome {
    let cfg = VerifyConfig {
        refinement: true,
        ..VerifyConfig::default()
    };
    let mut failures = Vec::new();
    let mut n_checks = 0;
    for (name, m) in corpus() {
        let r = verify_all(&m, &MaterialParams::new(1.0, -1.0, 0.0), &cfg).unwrap();
        n_checks += r.checks.len();
        failures.extend(r.failures().map(|f| format!("{name}:{}", f.name)));
    }
    let mut cli_codes = Vec::new();
    for name in CORPUS {
        let mesh = corpus_dir().join(format!("{name}.off"));
        let args = [
            "helfrich".into(),
            "verify".into(),
            "--mesh".into(),
            mesh.into_os_string(),
        ];
        cli_codes.push(helfrich_cli::run(args, &mut Vec::new(), &mut Vec::new()));
    }
    let cli_ok = cli_codes.iter().all(|&c| c == helfrich_cli::EXIT_OK);
    outcome(
        failures.is_empty() && cli_ok,
        format!("{n_checks} checks, failures: {failures:?}; `verify` exit codes {cli_codes:?}"),
    )
}

pub fn ac6_no_overlap() -> Outcome {
    let grid = 200;
    let h = 1.0 / grid as f64;
    let a = square_samples(Vector3::zeros(), Vector3::x(), Vector3::y(), grid);
    let hinge = square_samples(Vector3::zeros(), Vector3::x(), Vector3::z(), grid);
    let band = |s: Option<f64>, c: f64| s.is_some_and(|s| (s - c).abs() <= 0.3);

    let coincident = no_overlap_check(&a, &a, 0.1, 6, h).unwrap();
    let hinged = no_overlap_check(&a, &hinge, 0.1, 6, h).unwrap();

    let m = shapes::icosphere(6);
    let c = curvature_field(&m).unwrap();
    let ph = PhaseField::new(&m, shapes::hemisphere_labels(&m)).unwrap();
    let (s1, s2) = (phase_support(&m, &c, &ph, 1), phase_support(&m, &c, &ph, 2));
    let hemis = no_overlap_check(&s1, &s2, 0.15, 6, m.mean_edge_length()).unwrap();

    let small = shapes::icosphere(3);
    let cs = curvature_field(&small).unwrap();
    let phs = PhaseField::new(&small, shapes::hemisphere_labels(&small)).unwrap();
    let (t1, t2) = (phase_support(&small, &cs, &phs, 1), phase_support(&small, &cs, &phs, 2));
    let sq = square_samples(Vector3::zeros(), Vector3::x(), Vector3::y(), 22);
    let sq_h = square_samples(Vector3::zeros(), Vector3::x(), Vector3::z(), 22);
    let exact = [1e-3, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 3.0].iter().all(|&eps| {
        overlap_measure(&t1, &t2, eps) == overlap_measure_brute_force(&t1, &t2, eps)
            && overlap_measure(&sq, &sq_h, eps) == overlap_measure_brute_force(&sq, &sq_h, eps)
    }) && t1.len() <= 500
        && t2.len() <= 500;

    let pass = band(coincident.slope, 2.0)
        && !coincident.pass
        && band(hinged.slope, 3.0)
        && hinged.pass
        && band(hemis.slope, 3.0)
        && hemis.pass
        && exact;
    let fmt = |s: Option<f64>| s.map_or("none".to_string(), |s| format!("{s:.3}"));
    outcome(
        pass,
        format!(
            "coincident slope {} gate {}, hinge slope {} gate {}, hemispheres slope {} gate {}, hash == brute force: {exact}",
            fmt(coincident.slope),
            if coincident.pass { "pass" } else { "fail" },
            fmt(hinged.slope),
            if hinged.pass { "pass" } else { "fail" },
            fmt(hemis.slope),
            if hemis.pass { "pass" } else { "fail" },
        ),
    )
}

pub fn ac7_gradient() -> Outcome {
    let params = [
        MaterialParams::new(1.0, -0.5, 0.7).with_sigma(0.5),
        MaterialParams::new(1.5, -1.0, -0.3).with_sigma(0.25),
    ];
    let mut parts = Vec::new();
    let mut worst_all = 0.0f64;
    for name in ["perturbed_sphere", "torus", "split_sphere"] {
        let mesh = read_mesh(&corpus_dir().join(format!("{name}.off"))).unwrap();
        let phases = match read_labels(&corpus_dir().join(format!("{name}.labels"))) {
            Ok(l) => PhaseField::new(&mesh, l).unwrap(),
            Err(_) => PhaseField::uniform(&mesh),
        };
        let p = &params[..phases.n_phases()];
        let g = energy_gradient(&mesh, &phases, p).unwrap();
        let h = 1e-5 * mesh.bbox_diagonal();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = 0.0f64;
        for v in sample(&mut rng, mesh.n_vertices(), 50) {
            let mut fd = Vector3::zeros();
            for k in 0..3 {
                let at = |d: f64| {
                    let mut x = mesh.vertices().to_vec();
                    x[v][k] += d;
                    discrete_energy(&mesh.with_vertices(x).unwrap(), &phases, p).unwrap()
                };
                // fourth-order central stencil at the pinned step
                fd[k] = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            }
            worst = worst.max((fd - g[v]).norm() / g[v].norm());
        }
        worst_all = worst_all.max(worst);
        parts.push(format!("{name} {worst:.2e}"));
    }
    outcome(
        worst_all <= 1e-4,
        format!("max relative error over 50 vertices: {} (<= 1e-4)", parts.join(", ")),
    )
}

/// Jittered level-3 icosphere driven to targets `(4 pi, volume)` with the
/// default run settings: `(W/4pi, max |residual|, iterations, termination)`.
pub fn sphere_benchmark(volume: f64) -> (f64, f64, usize, String) {
    let start = shapes::jitter(&shapes::icosphere(3), 0.01, 7);
    let cs = ConstraintSet::new(4.0 * PI, volume);
    let phases = PhaseField::uniform(&start);
    let run = minimize(
        &start,
        &phases,
        &[MaterialParams::new(1.0, 0.0, 0.0)],
        &cs,
        &RunConfig::default(),
    )
    .unwrap();
    let wq = willmore(
        &curvature_field(&run.state.mesh).unwrap(),
        WillmoreNormalization::Quarter,
    );
    let r = &run.state.residuals;
    let term = format!("{:?}", run.state.termination);
    (wq, r.area.abs().max(r.volume.abs()), run.state.iteration, term)
}

pub fn ac8_minimization() -> Outcome {
    let (wq, res, iters, term) = sphere_benchmark(4.0 * PI / 3.0);
    outcome(
        wq <= 4.0 * PI * 1.02 && res < 1e-5 && iters <= 2000,
        format!(
            "targets (4pi, 4pi/3): W/4pi = {:.5} (<= 1.02), max residual {res:.2e} (< 1e-5), {iters} iterations, {term}",
            wq / (4.0 * PI)
        ),
    )
}

pub fn ac9_line_tension() -> Outcome {
    let m = read_mesh(&corpus_dir().join("split_sphere.off")).unwrap();
    let labels = read_labels(&corpus_dir().join("split_sphere.labels")).unwrap();
    let ph = PhaseField::new(&m, labels).unwrap();
    let params = [
        MaterialParams::new(1.0, -0.5, 0.0).with_sigma(1.0),
        MaterialParams::new(1.0, -0.5, 0.0).with_sigma(1.0).with_phase(2),
    ];
    let r = multiphase_energy(&m, &curvature_field(&m).unwrap(), &ph, &params).unwrap();
    let areas = ph.phase_areas(&m);
    let pass = within(r.line, 4.0 * PI, 0.02) && areas.iter().all(|&a| within(a, 2.0 * PI, 0.02));
    outcome(
        pass,
        format!(
            "line/4pi = {:.5}, phase areas/2pi = [{:.5}, {:.5}]",
            r.line / (4.0 * PI),
            areas[0] / (2.0 * PI),
            areas[1] / (2.0 * PI)
        ),
    )
}

/// `(id, title, check, runtime budget)`.
pub const CRITERIA: [(&str, &str, fn() -> Outcome, Duration); 9] = [
    ("AC1", "hessian exactness", ac1_hessian, Duration::from_secs(1)),
    ("AC2", "discrete gauss-bonnet", ac2_gauss_bonnet, Duration::from_secs(1)),
    ("AC3", "sphere energies", ac3_sphere_energies, Duration::from_secs(5)),
    ("AC4", "tensor/scalar path agreement", ac4_path_agreement, Duration::MAX),
    ("AC5", "inequality suite", ac5_inequality_suite, Duration::from_secs(60)),
    ("AC6", "no-overlap scaling law", ac6_no_overlap, Duration::from_secs(30)),
    ("AC7", "gradient correctness", ac7_gradient, Duration::from_secs(30)),
    (
        "AC8",
        "minimization benchmark",
        ac8_minimization,
        Duration::from_secs(600),
    ),
    (
        "AC9",
        "multiphase line tension",
        ac9_line_tension,
        Duration::from_secs(5),
    ),
];
