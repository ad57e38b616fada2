use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use anyhow::{bail, Context, Result};
use helfrich::constraints::{no_overlap_check, phase_support, Residuals};
use helfrich::density::{hessian, Convexity};
use helfrich::diagnostics::{verify_all, MeshMeta};
use helfrich::energy::{multiphase_energy, willmore, EnergyTerms, WillmoreNormalization};
use helfrich::io::{read_labels, read_mesh, write_mesh};
use helfrich::optimize::{reduced_volume, Multipliers, Termination, TrajectoryRow};
use helfrich::{curvature_field, minimize, ConstraintSet, EnergyReport, MaterialParams, PhaseField, TriMesh};
use serde::Serialize;

use crate::cli::{Command, Common};
use crate::json;
use crate::spec::{RunSpec, DEFAULT_PARAMS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_OPTIMIZER: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

/// Runs a subcommand, writing its report to `out`; returns the exit status
/// for outcomes that still produce a report.
pub fn run(command: Command, out: &mut dyn io::Write) -> Result<u8> {
    match command {
        Command::Eval { common } => eval(&common, out),
        Command::Minimize {
            common,
            area,
            volume,
            phase_areas,
            eps0,
            max_iterations,
            seed,
        } => {
            let mut spec = RunSpec::resolve("minimize", &common)?;
            let c = &mut spec.constraints;
            c.area = area.or(c.area);
            c.volume = volume.or(c.volume);
            c.phase_areas = phase_areas.or(c.phase_areas.take());
            c.eps0 = eps0.or(c.eps0);
            if let Some(n) = max_iterations {
                spec.run.max_iterations = n;
            }
            if seed.is_some() {
                spec.run.seed = seed;
            }
            run_minimize(&spec, &common, out)
        }
        Command::Verify {
            common,
            seed,
            n_fields,
            multiplicity,
            refinement,
        } => {
            let mut spec = RunSpec::resolve("verify", &common)?;
            let v = &mut spec.verify;
            v.seed = seed.unwrap_or(v.seed);
            v.n_fields = n_fields.unwrap_or(v.n_fields);
            v.multiplicity = multiplicity.unwrap_or(v.multiplicity);
            v.refinement |= refinement;
            run_verify(&spec, &common, out)
        }
        Command::Overlap {
            common,
            phase_a,
            phase_b,
            eps0,
            samples,
        } => {
            let mut spec = RunSpec::resolve("overlap", &common)?;
            let o = &mut spec.overlap;
            o.phase_a = phase_a.unwrap_or(o.phase_a);
            o.phase_b = phase_b.unwrap_or(o.phase_b);
            o.eps0 = eps0.or(o.eps0).or(spec.constraints.eps0);
            o.samples = samples.unwrap_or(o.samples);
            run_overlap(&spec, &common, out)
        }
        Command::Hessian {
            config,
            beta,
            gamma,
            json,
        } => {
            let common = Common {
                config,
                ..Common::default()
            };
            let spec = RunSpec::resolve("hessian", &common)?;
            let mut p = spec.params.first().copied().unwrap_or(DEFAULT_PARAMS);
            p.beta = beta.unwrap_or(p.beta);
            p.gamma = gamma.unwrap_or(p.gamma);
            run_hessian(&p, json, out)
        }
    }
}

fn load(spec: &RunSpec) -> Result<(TriMesh, PhaseField)> {
    let path = spec.mesh_path()?;
    let mesh = read_mesh(path).with_context(|| format!("reading mesh {}", path.display()))?;
    let phases = match spec.labels_path()? {
        Some(lp) => {
            let labels = read_labels(lp).with_context(|| format!("reading labels {}", lp.display()))?;
            PhaseField::new(&mesh, labels)?
        }
        None => PhaseField::uniform(&mesh),
    };
    Ok((mesh, phases))
}

/// Prints `text` and, with an output directory, also writes it to `name` there.
fn emit(spec: &RunSpec, name: &str, text: &str, out: &mut dyn io::Write) -> Result<()> {
    out.write_all(text.as_bytes())?;
    if let Some(dir) = &spec.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    mesh: MeshMeta,
    area: f64,
    volume: f64,
    params: Vec<MaterialParams>,
    energy: EnergyReport,
}

fn eval(common: &Common, sink: &mut dyn io::Write) -> Result<u8> {
    let spec = RunSpec::resolve("eval", common)?;
    let (mesh, phases) = load(&spec)?;
    let params = spec.material_params(common, phases.n_phases())?;
    let curv = curvature_field(&mesh)?;
    let energy = multiphase_energy(&mesh, &curv, &phases, &params)?;
    let out = EvalOutput {
        mesh: MeshMeta::of(&mesh),
        area: mesh.total_area(),
        volume: mesh.enclosed_volume(),
        params,
        energy,
    };
    emit(&spec, "energy.json", &json::to_string(&out)?, sink)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FinalShape {
    area: f64,
    volume: f64,
    reduced_volume: f64,
    willmore_quarter: f64,
    min_angle_deg: f64,
    edge_ratio: f64,
}

#[derive(Serialize)]
struct MinimizeOutput {
    iteration: usize,
    termination: Option<Termination>,
    targets: ConstraintSet,
    target_reduced_volume: f64,
    energy: EnergyTerms,
    augmented: f64,
    residuals: Residuals,
    multipliers: Multipliers,
    penalty: f64,
    step: f64,
    grad_norm: f64,
    #[serde(rename = "final")]
    final_shape: FinalShape,
}

fn run_minimize(spec: &RunSpec, common: &Common, sink: &mut dyn io::Write) -> Result<u8> {
    let (mesh, phases) = load(spec)?;
    let params = spec.material_params(common, phases.n_phases())?;
    let c = &spec.constraints;
    let mut cs = ConstraintSet::measured(&mesh, &phases);
    if let Some(pa) = &c.phase_areas {
        cs.phase_areas = pa.clone();
        cs.area = pa.iter().sum();
    }
    cs.area = c.area.unwrap_or(cs.area);
    cs.volume = c.volume.unwrap_or(cs.volume);
    cs.eps0 = c.eps0;
    cs.tol = c.tol.unwrap_or(cs.tol);

    let run = minimize(&mesh, &phases, &params, &cs, &spec.run)?;
    let dir = spec.out.as_deref().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut csv = String::from(TrajectoryRow::CSV_HEADER);
    csv.push('\n');
    for row in &run.trajectory {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    fs::write(dir.join("trajectory.csv"), csv).context("writing trajectory.csv")?;
    let s = run.state;
    write_mesh(&dir.join("final.off"), &s.mesh)?;

    let curv = curvature_field(&s.mesh)?;
    let (area, volume) = (s.mesh.total_area(), s.mesh.enclosed_volume());
    let out = MinimizeOutput {
        iteration: s.iteration,
        target_reduced_volume: reduced_volume(cs.area, cs.volume)?.value,
        termination: s.termination.clone(),
        targets: cs,
        energy: s.energy,
        augmented: s.augmented,
        residuals: s.residuals,
        multipliers: s.multipliers,
        penalty: s.penalty,
        step: s.step,
        grad_norm: s.grad_norm,
        final_shape: FinalShape {
            area,
            volume,
            reduced_volume: reduced_volume(area, volume)?.value,
            willmore_quarter: willmore(&curv, WillmoreNormalization::Quarter),
            min_angle_deg: s.mesh.min_angle_degrees(),
            edge_ratio: s.mesh.edge_length_ratio(),
        },
    };
    let text = json::to_string(&out)?;
    fs::write(dir.join("state.json"), &text).context("writing state.json")?;
    sink.write_all(text.as_bytes())?;
    Ok(match out.termination {
        Some(Termination::OverlapGate { .. } | Termination::BoundaryMass { .. }) => EXIT_OPTIMIZER,
        _ => EXIT_OK,
    })
}

fn run_verify(spec: &RunSpec, common: &Common, out: &mut dyn io::Write) -> Result<u8> {
    let (mesh, _) = load(spec)?;
    let params = spec.material_params(common, 1)?;
    if hessian(&params[0]).verdict != Convexity::StrictlyConvex {
        bail!(
            "verify needs -6/5 beta < gamma < 0, got beta = {}, gamma = {}",
            params[0].beta,
            params[0].gamma
        );
    }
    let report = verify_all(&mesh, &params[0], &spec.verify)?;
    emit(spec, "verify.json", &json::to_string(&report)?, out)?;
    for f in report.failures() {
        eprintln!(
            "FAIL {}: {} (lhs {:e}, rhs {:e}, margin {:e})",
            f.name, f.statement, f.lhs, f.rhs, f.margin
        );
    }
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_VERIFY })
}

#[derive(Serialize)]
struct OverlapOutput {
    phase_a: u32,
    phase_b: u32,
    eps0: f64,
    /// Sampling resolution (mean edge length).
    h: f64,
    pass: bool,
    slope: Option<f64>,
    coincident_mass: f64,
    samples: Vec<helfrich::constraints::OverlapSample>,
}

fn run_overlap(spec: &RunSpec, _common: &Common, sink: &mut dyn io::Write) -> Result<u8> {
    let o = &spec.overlap;
    if spec.labels.is_none() {
        bail!("overlap needs phase labels (--labels)");
    }
    let eps0 = o.eps0.context("overlap needs eps0 (--eps0)")?;
    let (mesh, phases) = load(spec)?;
    for p in [o.phase_a, o.phase_b] {
        if p == 0 || p as usize > phases.n_phases() {
            bail!("phase {p} not present (mesh has {} phases)", phases.n_phases());
        }
    }
    let curv = curvature_field(&mesh)?;
    let a = phase_support(&mesh, &curv, &phases, o.phase_a);
    let b = phase_support(&mesh, &curv, &phases, o.phase_b);
    let h = mesh.mean_edge_length();
    let r = no_overlap_check(&a, &b, eps0, o.samples, h)?;
    let out = OverlapOutput {
        phase_a: o.phase_a,
        phase_b: o.phase_b,
        eps0,
        h,
        pass: r.pass,
        slope: r.slope,
        coincident_mass: r.coincident_mass,
        samples: r.samples,
    };
    emit(spec, "overlap.json", &json::to_string(&out)?, sink)?;
    Ok(if out.pass { EXIT_OK } else { EXIT_VERIFY })
}

#[derive(Serialize)]
struct HessianOutput {
    beta: f64,
    gamma: f64,
    matrix: Vec<Vec<f64>>,
    numeric_eigenvalues: Vec<f64>,
    lambda1: f64,
    lambda_rest: f64,
    spectrum_mismatch: f64,
    verdict: Convexity,
}

fn run_hessian(p: &MaterialParams, as_json: bool, sink: &mut dyn io::Write) -> Result<u8> {
    p.validate()?;
    let r = hessian(p);
    if as_json {
        let out = HessianOutput {
            beta: p.beta,
            gamma: p.gamma,
            matrix: r.matrix.row_iter().map(|row| row.iter().copied().collect()).collect(),
            numeric_eigenvalues: r.numeric_eigenvalues.clone(),
            lambda1: r.lambda1(),
            lambda_rest: r.lambda_rest(),
            spectrum_mismatch: r.spectrum_mismatch(),
            verdict: r.verdict,
        };
        sink.write_all(json::to_string(&out)?.as_bytes())?;
        return Ok(EXIT_OK);
    }
    let mut s = format!(
        "Hessian of the quadratic density, beta = {}, gamma = {}\n",
        p.beta, p.gamma
    );
    for row in r.matrix.row_iter() {
        for x in row.iter() {
            write!(s, " {x:>9.4}")?;
        }
        s.push('\n');
    }
    s.push_str("eigenvalues:");
    for x in &r.numeric_eigenvalues {
        write!(s, " {x:.12}")?;
    }
    writeln!(s)?;
    writeln!(s, "λ₁ = (6β + 5γ)/2 = {}", r.lambda1())?;
    writeln!(s, "λ₂..₉ = -γ/2 = {}", r.lambda_rest())?;
    writeln!(s, "verdict: {}", r.verdict.label())?;
    sink.write_all(s.as_bytes())?;
    Ok(EXIT_OK)
}
