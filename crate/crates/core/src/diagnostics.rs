//! Numerical checks of the curvature inequalities on a given mesh.
//!
//! Every record states `lhs <= rhs + tolerance`; lower bounds are written
//! with the bound on the left. Records that involve the Willmore energy name
//! the normalization they use, because the quarter and varifold forms differ
//! by a factor of four.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::constraints::log_log_slope;
use crate::curvature::{curvature_field, CurvatureError, CurvatureField};
use crate::density::{coercivity_constants, DensityError, MaterialParams};
use crate::energy::{canham_helfrich, willmore, WillmoreNormalization};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("check `{0}` needs a closed mesh")]
    OpenMesh(&'static str),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Energy(#[from] crate::energy::EnergyError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    /// `rhs + tolerance - lhs`; non-negative iff the check passed.
    pub margin: f64,
    pub pass: bool,
    /// The inequality being checked, in words.
    pub statement: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub willmore: Option<WillmoreNormalization>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64, statement: impl Into<String>) -> Self {
        let margin = rhs + tolerance - lhs;
        CheckRecord {
            name: name.into(),
            lhs,
            rhs,
            tolerance,
            margin,
            // NaN on either side fails
            pass: margin >= 0.0,
            statement: statement.into(),
            willmore: None,
        }
    }

    fn with_willmore(mut self, n: WillmoreNormalization) -> Self {
        self.willmore = Some(n);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshMeta {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub genus: i64,
    /// Mean edge length.
    pub h: f64,
}

impl MeshMeta {
    pub fn of(mesh: &TriMesh) -> Self {
        MeshMeta {
            vertices: mesh.n_vertices(),
            edges: mesh.n_edges(),
            faces: mesh.n_faces(),
            genus: mesh.genus(),
            h: mesh.mean_edge_length(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub mesh: MeshMeta,
    /// Sorted by name.
    pub checks: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub refinement: Vec<RefinementTable>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn scaled_tol(rel: f64, scale: f64) -> f64 {
    rel * scale.abs().max(1.0)
}

/// `|H̄|^2 <= 2|A|^2` at every vertex, plus the trace and Gauss identities
/// the tensor construction guarantees. Each record reports the worst vertex.
pub fn verify_pointwise(curv: &CurvatureField) -> Vec<CheckRecord> {
    let mut worst_bound = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut trace_err = 0.0f64;
    let mut gauss_err = 0.0f64;
    let mut h_scale = 0.0f64;
    for v in 0..curv.len() {
        let hv = curv.mean_vector[v];
        let a2 = curv.tensor[v].norm_sq();
        let lhs = hv.norm_squared();
        if lhs - 2.0 * a2 > worst_bound.0 {
            worst_bound = (lhs - 2.0 * a2, lhs, 2.0 * a2);
        }
        trace_err = trace_err.max((curv.tensor[v].trace_vector() - hv).norm());
        gauss_err = gauss_err.max((curv.gauss[v] - (0.5 * lhs - 0.25 * a2)).abs());
        h_scale = h_scale.max(hv.norm());
    }
    if curv.is_empty() {
        worst_bound = (0.0, 0.0, 0.0);
    }
    vec![
        CheckRecord::new(
            "pointwise.mean_curvature_bound",
            worst_bound.1,
            worst_bound.2,
            1e-10,
            "|H̄|^2 <= 2|A|^2 at every vertex",
        ),
        CheckRecord::new(
            "pointwise.trace_identity",
            trace_err,
            0.0,
            scaled_tol(1e-10, h_scale),
            "sum_j A_jij = H̄_i at every vertex",
        ),
        CheckRecord::new(
            "pointwise.gauss_identity",
            gauss_err,
            0.0,
            scaled_tol(1e-10, h_scale * h_scale),
            "K = |H̄|^2/2 - |A|^2/4 at every vertex",
        ),
    ]
}

/// Smooth test field `X(x) = s * sum_m c_m sin(w_m . x + phi_m)`.
#[derive(Debug, Clone)]
pub struct TrigField {
    modes: Vec<(Vector3<f64>, Vector3<f64>, f64)>,
    scale: f64,
}

impl TrigField {
    /// Random field with wave numbers up to `max_wave` and `n_modes` terms.
    pub fn random<R: Rng>(rng: &mut R, n_modes: usize, max_wave: f64) -> Self {
        let mut sym = || {
            Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        };
        let modes = (0..n_modes).map(|_| (sym(), sym() * max_wave, 0.0)).collect::<Vec<_>>();
        let mut f = TrigField { modes, scale: 1.0 };
        for m in f.modes.iter_mut() {
            m.2 = rng.gen_range(0.0..2.0 * PI);
        }
        f
    }

    pub fn value(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.modes
            .iter()
            .map(|(c, w, phi)| c * (w.dot(x) + phi).sin())
            .fold(Vector3::zeros(), |a, b| a + b)
            * self.scale
    }

    /// `DX` with `(DX)_kl = d X_k / d x_l`.
    pub fn jacobian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        self.modes
            .iter()
            .map(|(c, w, phi)| c * w.transpose() * (w.dot(x) + phi).cos())
            .fold(Matrix3::zeros(), |a, b| a + b)
            * self.scale
    }

    /// Rescale so the largest vertex value has unit length.
    pub fn normalized_on(mut self, points: &[Vector3<f64>]) -> Self {
        let m = points.iter().map(|x| self.value(x).norm()).fold(0.0, f64::max);
        if m > 0.0 {
            self.scale /= m;
        }
        self
    }
}

/// `delta V(X) = sum_v div^P X(x_v) a_v`, with `div^P X = tr(P DX)`.
pub fn first_variation(mesh: &TriMesh, curv: &CurvatureField, jac: impl Fn(&Vector3<f64>) -> Matrix3<f64>) -> f64 {
    mesh.vertices()
        .iter()
        .enumerate()
        .map(|(v, x)| (curv.projection[v] * jac(x)).trace() * curv.area[v])
        .sum()
}

fn boundary_length(mesh: &TriMesh) -> f64 {
    (0..mesh.n_edges())
        .filter(|&e| mesh.edge_faces(e).contains(&usize::MAX))
        .map(|e| mesh.edge_length(e))
        .sum()
}

/// `|delta V(X)| <= sqrt(2 mu) ||A||_{L^2}` for the position field and
/// `n_fields` random trigonometric fields with unit sup norm. The tolerance
/// is 5% of the right side, for vertex quadrature.
pub fn verify_first_variation(
    mesh: &TriMesh,
    curv: &CurvatureField,
    n_fields: usize,
    seed: u64,
) -> Result<Vec<CheckRecord>, DiagnosticsError> {
    if !mesh.is_closed() {
        return Err(DiagnosticsError::OpenMesh("first_variation"));
    }
    let mu = curv.total_area();
    let rhs = (2.0 * mu).sqrt() * curv.tensor_l2_sq().sqrt();
    let statement = "|delta V(X)| <= sqrt(2 mu) ||A||_L2 for |X| <= 1";
    let mut out = Vec::with_capacity(n_fields + 2);

    let constant = first_variation(mesh, curv, |_| Matrix3::zeros());
    out.push(CheckRecord::new(
        "first_variation.constant_field",
        constant.abs(),
        0.0,
        1e-12 * rhs,
        "delta V(X) = 0 for constant X",
    ));

    let rmax = mesh.vertices().iter().map(|x| x.norm()).fold(0.0, f64::max);
    let position = first_variation(mesh, curv, |_| Matrix3::identity() / rmax);
    out.push(CheckRecord::new(
        "first_variation.position_field",
        position.abs(),
        rhs,
        0.05 * rhs,
        statement,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wave = 2.0 * PI / mesh.diameter().max(f64::MIN_POSITIVE) * 3.0;
    let width = n_fields.saturating_sub(1).to_string().len();
    for i in 0..n_fields {
        let field = TrigField::random(&mut rng, 4, wave).normalized_on(mesh.vertices());
        let dv = first_variation(mesh, curv, |x| field.jacobian(x));
        out.push(CheckRecord::new(
            format!("first_variation.random_{i:0width$}"),
            dv.abs(),
            rhs,
            0.05 * rhs,
            statement,
        ));
    }
    Ok(out)
}

/// `||A||^2 <= c1 (F + c2 mu)` and `W_var <= 2 c1 (F + c2 mu)` with `F` the
/// tensor-path energy and `(c1, c2)` the coercivity constants of `params`.
pub fn verify_energy_bounds(
    curv: &CurvatureField,
    params: &MaterialParams,
) -> Result<Vec<CheckRecord>, DiagnosticsError> {
    let c = coercivity_constants(params)?;
    let f = canham_helfrich(curv, params)?.tensor_path;
    let mu = curv.total_area();
    let rhs = c.c1 * (f + c.c2 * mu);
    let a2 = curv.tensor_l2_sq();
    let w = willmore(curv, WillmoreNormalization::Varifold);
    Ok(vec![
        CheckRecord::new(
            "energy_bounds.tensor",
            a2,
            rhs,
            1e-9 * rhs.abs(),
            "||A||^2 <= c1 (F_CH + c2 mu)",
        ),
        CheckRecord::new(
            "energy_bounds.willmore",
            w,
            2.0 * rhs,
            2e-9 * rhs.abs(),
            "W <= 2 c1 (F_CH + c2 mu)",
        )
        .with_willmore(WillmoreNormalization::Varifold),
    ])
}

/// Diameter bounds:
/// `mu / (sqrt(mu W_var) + |boundary|) <= diam` and, on closed meshes,
/// `sqrt(mu / W_quarter) <= diam <= (2/pi) sqrt(mu W_quarter)`.
pub fn verify_diameter(mesh: &TriMesh, curv: &CurvatureField) -> Vec<CheckRecord> {
    let diam = mesh.diameter();
    let mu = curv.total_area();
    let w_var = willmore(curv, WillmoreNormalization::Varifold);
    let w_q = willmore(curv, WillmoreNormalization::Quarter);
    let lower = mu / ((mu * w_var).sqrt() + boundary_length(mesh));
    let mut out = vec![CheckRecord::new(
        "diameter.lower_varifold",
        lower,
        diam,
        1e-9 * diam,
        "mu / (sqrt(mu W) + |boundary|) <= diam",
    )
    .with_willmore(WillmoreNormalization::Varifold)];
    if mesh.is_closed() {
        let upper = 2.0 / PI * (mu * w_q).sqrt();
        out.push(
            CheckRecord::new(
                "diameter.lower_quarter",
                (mu / w_q).sqrt(),
                diam,
                1e-9 * diam,
                "sqrt(mu / W) <= diam",
            )
            .with_willmore(WillmoreNormalization::Quarter),
        );
        out.push(
            CheckRecord::new(
                "diameter.upper_quarter",
                diam,
                upper,
                1e-9 * upper,
                "diam <= (2/pi) sqrt(mu W)",
            )
            .with_willmore(WillmoreNormalization::Quarter),
        );
    }
    out
}

/// `W_quarter >= 4 pi k` for a surface with a point of multiplicity `k`,
/// with a tolerance of 2% of `4 pi k`.
pub fn verify_li_yau(
    mesh: &TriMesh,
    curv: &CurvatureField,
    multiplicity: u32,
) -> Result<CheckRecord, DiagnosticsError> {
    if !mesh.is_closed() {
        return Err(DiagnosticsError::OpenMesh("li_yau"));
    }
    let bound = 4.0 * PI * multiplicity as f64;
    Ok(CheckRecord::new(
        "li_yau",
        bound,
        willmore(curv, WillmoreNormalization::Quarter),
        0.02 * bound,
        format!("W >= 4 pi k with k = {multiplicity}"),
    )
    .with_willmore(WillmoreNormalization::Quarter))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementRow {
    pub level: u32,
    pub h: f64,
    pub value: f64,
    pub error: f64,
}

/// Convergence of a mesh quantity toward a known value under refinement.
/// Only a weak numerical shadow of lower semicontinuity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementTable {
    pub name: String,
    pub exact: f64,
    pub rows: Vec<RefinementRow>,
    /// No error increase above roundoff between consecutive levels.
    pub monotone: bool,
    /// Least-squares slope of `log error` against `log h`; `None` when some
    /// error is zero (exact at every level counts as converged).
    pub order: Option<f64>,
}

impl RefinementTable {
    /// Errors at roundoff level relative to the exact value count as zero.
    fn floor(&self) -> f64 {
        1e-12 * self.exact.abs().max(1.0)
    }

    fn exact_at_every_level(&self) -> bool {
        self.rows.iter().all(|r| r.error <= self.floor())
    }

    fn increases(&self) -> usize {
        let floor = self.floor();
        self.rows
            .windows(2)
            .filter(|w| w[1].error > floor && w[1].error > w[0].error)
            .count()
    }

    pub fn converged(&self) -> bool {
        self.exact_at_every_level() || (self.increases() == 0 && self.order.is_some_and(|p| p >= 1.0))
    }

    /// Monotonicity and order as report records.
    pub fn records(&self) -> Vec<CheckRecord> {
        let order = if self.exact_at_every_level() {
            f64::INFINITY
        } else {
            self.order.unwrap_or(f64::NAN)
        };
        vec![
            CheckRecord::new(
                format!("refinement.{}.monotone", self.name),
                self.increases() as f64,
                0.0,
                0.0,
                "error does not increase under refinement",
            ),
            CheckRecord::new(
                format!("refinement.{}.order", self.name),
                1.0,
                order,
                0.0,
                "empirical convergence order >= 1",
            ),
        ]
    }
}

pub fn refinement_probe(
    name: &str,
    generate: impl Fn(u32) -> TriMesh,
    levels: std::ops::RangeInclusive<u32>,
    quantity: impl Fn(&TriMesh, &CurvatureField) -> f64,
    exact: f64,
) -> Result<RefinementTable, DiagnosticsError> {
    let mut rows = Vec::new();
    for level in levels {
        let mesh = generate(level);
        let curv = curvature_field(&mesh)?;
        let value = quantity(&mesh, &curv);
        rows.push(RefinementRow {
            level,
            h: mesh.mean_edge_length(),
            value,
            error: (value - exact).abs(),
        });
    }
    let order = if rows.iter().all(|r| r.error > 0.0) {
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let es: Vec<f64> = rows.iter().map(|r| r.error).collect();
        log_log_slope(&hs, &es)
    } else {
        None
    };
    let mut table = RefinementTable {
        name: name.to_string(),
        exact,
        rows,
        monotone: false,
        order,
    };
    table.monotone = table.increases() == 0;
    Ok(table)
}

/// `1/4 int H^2 dA` over the ellipsoid `x^2/a^2 + y^2/b^2 + z^2/c^2 = 1` by
/// the midpoint rule in the polar angle (`n` nodes) and the periodic
/// trapezoid rule in the azimuth (`2n` nodes).
pub fn ellipsoid_willmore_quadrature(a: f64, b: f64, c: f64, n: usize) -> f64 {
    let (a2, b2, c2) = (a * a, b * b, c * c);
    let dt = PI / n as f64;
    let dp = PI / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let t = (i as f64 + 0.5) * dt;
        let (st, ct) = t.sin_cos();
        for j in 0..2 * n {
            let (sp, cp) = (j as f64 * dp).sin_cos();
            let x = Vector3::new(a * st * cp, b * st * sp, c * ct);
            let q = x.x * x.x / (a2 * a2) + x.y * x.y / (b2 * b2) + x.z * x.z / (c2 * c2);
            let h = (x.norm_squared() - a2 - b2 - c2) / (a2 * b2 * c2 * q.powf(1.5));
            let da = a * b * c * st * q.sqrt();
            sum += 0.25 * h * h * da;
        }
    }
    sum * dt * dp
}

/// Settings for [`verify_all`].
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub n_fields: usize,
    pub seed: u64,
    /// Largest point multiplicity of the surface, known by construction.
    pub multiplicity: u32,
    /// Add the standard refinement probes to the report.
    pub refinement: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n_fields: 20,
            seed: 0,
            multiplicity: 1,
            refinement: false,
        }
    }
}

/// Standard refinement probes: sphere quarter Willmore toward `4 pi`, the
/// sphere Gauss term (exact at every level), and the `(1, 1, 1/2)` spheroid
/// quarter Willmore toward its value by dense quadrature.
pub fn refinement_suite() -> Result<Vec<RefinementTable>, DiagnosticsError> {
    let gen = crate::shapes::icosphere;
    let spheroid = ellipsoid_willmore_quadrature(1.0, 1.0, 0.5, 2000);
    Ok(vec![
        refinement_probe(
            "sphere_willmore",
            gen,
            2..=5,
            |_, c| willmore(c, WillmoreNormalization::Quarter),
            4.0 * PI,
        )?,
        refinement_probe("sphere_gauss", gen, 2..=5, |_, c| c.total_gauss(), 4.0 * PI)?,
        refinement_probe(
            "spheroid_willmore",
            |l| crate::shapes::ellipsoid(l, 1.0, 1.0, 0.5),
            2..=5,
            |_, c| willmore(c, WillmoreNormalization::Quarter),
            spheroid,
        )?,
    ])
}

/// All checks on one mesh. Closed-mesh checks are skipped on open meshes.
pub fn verify_all(
    mesh: &TriMesh,
    params: &MaterialParams,
    cfg: &VerifyConfig,
) -> Result<VerificationReport, DiagnosticsError> {
    let curv = curvature_field(mesh)?;
    let closed = mesh.is_closed();
    let ((pointwise, bounds), (diameter, (first_variation, li_yau))) = rayon::join(
        || (verify_pointwise(&curv), verify_energy_bounds(&curv, params)),
        || {
            (
                verify_diameter(mesh, &curv),
                rayon::join(
                    || closed.then(|| verify_first_variation(mesh, &curv, cfg.n_fields, cfg.seed)),
                    || closed.then(|| verify_li_yau(mesh, &curv, cfg.multiplicity)),
                ),
            )
        },
    );
    let mut checks = pointwise;
    checks.extend(bounds?);
    checks.extend(diameter);
    if let Some(fv) = first_variation {
        checks.extend(fv?);
    }
    if let Some(ly) = li_yau {
        checks.push(ly?);
    }
    let refinement = if cfg.refinement {
        refinement_suite()?
    } else {
        Vec::new()
    };
    for t in &refinement {
        checks.extend(t.records());
    }
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(VerificationReport {
        mesh: MeshMeta::of(mesh),
        checks,
        refinement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn record_pass_matches_margin() {
        assert!(CheckRecord::new("a", 1.0, 1.0, 0.0, "").pass);
        assert!(!CheckRecord::new("a", 1.0 + 1e-9, 1.0, 0.0, "").pass);
        assert!(!CheckRecord::new("a", f64::NAN, 1.0, 0.0, "").pass);
    }

    #[test]
    fn trig_field_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = TrigField::random(&mut rng, 4, 5.0);
        let x = Vector3::new(0.3, -0.2, 0.7);
        let j = f.jacobian(&x);
        let h = 1e-6;
        for l in 0..3 {
            let mut e = Vector3::zeros();
            e[l] = h;
            let col = (f.value(&(x + e)) - f.value(&(x - e))) / (2.0 * h);
            for k in 0..3 {
                assert!((col[k] - j[(k, l)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn position_field_first_variation_is_twice_area() {
        let m = shapes::icosphere(3);
        let c = curvature_field(&m).unwrap();
        let dv = first_variation(&m, &c, |_| Matrix3::identity());
        assert!((dv - 2.0 * c.total_area()).abs() < 1e-12);
    }

    #[test]
    fn spheroid_quadrature_matches_profile_integral() {
        // meridian-profile integral evaluated independently to 1e-14
        let w = ellipsoid_willmore_quadrature(1.0, 1.0, 0.5, 2000);
        assert!((w - 16.902311966031696).abs() < 1e-6, "{w}");
    }

    #[test]
    fn quadrature_reproduces_sphere() {
        let w = ellipsoid_willmore_quadrature(1.0, 1.0, 1.0, 1000);
        assert!((w - 4.0 * PI).abs() < 1e-5);
        let w = ellipsoid_willmore_quadrature(2.5, 2.5, 2.5, 1000);
        assert!((w - 4.0 * PI).abs() < 1e-5);
    }

    #[test]
    fn refinement_suite_converges() {
        let tables = refinement_suite().unwrap();
        for t in &tables {
            assert!(t.converged(), "{t:?}");
            assert!(t.records().iter().all(|r| r.pass));
        }
        let w = &tables[0];
        assert!(w.rows.windows(2).all(|r| r[1].error < r[0].error));
        assert!(w.order.unwrap() > 1.0);
    }

    #[test]
    fn sphere_passes_everything() {
        let m = shapes::icosphere(3);
        let r = verify_all(&m, &MaterialParams::new(1.0, -1.0, 0.0), &VerifyConfig::default()).unwrap();
        for c in &r.checks {
            assert!(c.pass, "{c:?}");
        }
        assert!(r.checks.windows(2).all(|w| w[0].name <= w[1].name));
    }
}
