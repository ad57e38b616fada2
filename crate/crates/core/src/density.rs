//! Pointwise bending density on (normal, curvature tensor) pairs, its Hessian
//! in the reduced nine-dimensional variables, the convexity window and
//! explicit coercivity constants.

use nalgebra::{SMatrix, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::Tensor3;

/// Material parameters of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Bending rigidity, `> 0`.
    pub beta: f64,
    /// Gaussian rigidity.
    pub gamma: f64,
    /// Spontaneous curvature (outward-normal convention).
    pub h0: f64,
    /// Line tension charged on this phase's boundary.
    #[serde(default)]
    pub sigma: f64,
    /// Phase label this parameter set applies to (1-based).
    #[serde(default = "default_phase")]
    pub phase_id: u32,
}

fn default_phase() -> u32 {
    1
}

impl MaterialParams {
    pub fn new(beta: f64, gamma: f64, h0: f64) -> Self {
        MaterialParams {
            beta,
            gamma,
            h0,
            sigma: 0.0,
            phase_id: 1,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_phase(mut self, phase_id: u32) -> Self {
        self.phase_id = phase_id;
        self
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        let finite = self.beta.is_finite() && self.gamma.is_finite() && self.h0.is_finite() && self.sigma.is_finite();
        if !finite || !(self.beta > 0.0) || self.sigma < 0.0 {
            return Err(DensityError::InvalidParams(*self));
        }
        Ok(())
    }

    /// `-6/5 beta < gamma < 0`.
    pub fn in_convexity_window(&self) -> bool {
        convexity_check(self) == Convexity::StrictlyConvex
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("normal has length {norm}, expected 1")]
    NonUnitNormal { norm: f64 },
    #[error("density is not strictly convex ({verdict:?}) for beta = {beta}, gamma = {gamma}")]
    NotConvex { verdict: Convexity, beta: f64, gamma: f64 },
    #[error("invalid material parameters {0:?} (need beta > 0, sigma >= 0, finite values)")]
    InvalidParams(MaterialParams),
}

pub const UNIT_NORMAL_TOL: f64 = 1e-9;

/// `sum_i beta/2 (t_i - nu_i H0)^2 + gamma/2 t_i^2 - gamma/4 sum_jk A_ijk^2`
/// with `t_i = sum_j A_jij`.
pub fn f_ch(nu: &Vector3<f64>, a: &Tensor3, p: &MaterialParams) -> Result<f64, DensityError> {
    let norm = nu.norm();
    if !((norm - 1.0).abs() <= UNIT_NORMAL_TOL) {
        return Err(DensityError::NonUnitNormal { norm });
    }
    Ok(f_ch_unchecked(nu, a, p))
}

pub(crate) fn f_ch_unchecked(nu: &Vector3<f64>, a: &Tensor3, p: &MaterialParams) -> f64 {
    let t = a.trace_vector();
    let mut out = 0.0;
    for i in 0..3 {
        let d = t[i] - nu[i] * p.h0;
        let mut sq = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                sq += a.get(i, j, k) * a.get(i, j, k);
            }
        }
        out += 0.5 * p.beta * d * d + 0.5 * p.gamma * t[i] * t[i] - 0.25 * p.gamma * sq;
    }
    out
}

/// Reduced coordinate order `(a11, a22, a33, a12, a13, a23, a21, a31, a32)`,
/// with `a_jk = A_jik` for a fixed slice `i`.
pub const REDUCED_ORDER: [(usize, usize); 9] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1)];

pub type Matrix9 = SMatrix<f64, 9, 9>;

/// Hessian of the quadratic part in the reduced coordinates, with both the
/// numerically computed and the closed-form spectra.
#[derive(Debug, Clone)]
pub struct HessianReport {
    pub matrix: Matrix9,
    /// Eigenvalues from the symmetric eigensolver, ascending.
    pub numeric_eigenvalues: Vec<f64>,
    /// `[ (6 beta + 5 gamma)/2, -gamma/2 x 8 ]`.
    pub closed_form_eigenvalues: Vec<f64>,
    pub verdict: Convexity,
}

impl HessianReport {
    pub fn lambda1(&self) -> f64 {
        self.closed_form_eigenvalues[0]
    }

    pub fn lambda_rest(&self) -> f64 {
        self.closed_form_eigenvalues[1]
    }

    /// Max absolute difference between sorted numeric and closed-form spectra.
    pub fn spectrum_mismatch(&self) -> f64 {
        let mut cf = self.closed_form_eigenvalues.clone();
        cf.sort_by(f64::total_cmp);
        cf.iter()
            .zip(&self.numeric_eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn hessian_matrix(beta: f64, gamma: f64) -> Matrix9 {
    let mut m = Matrix9::zeros();
    for r in 0..3 {
        for c in 0..3 {
            m[(r, c)] = if r == c {
                0.5 * (2.0 * beta + gamma)
            } else {
                beta + gamma
            };
        }
    }
    for d in 3..9 {
        m[(d, d)] = -0.5 * gamma;
    }
    m
}

pub fn closed_form_eigenvalues(beta: f64, gamma: f64) -> (f64, f64) {
    (0.5 * (6.0 * beta + 5.0 * gamma), -0.5 * gamma)
}

pub fn hessian(p: &MaterialParams) -> HessianReport {
    let matrix = hessian_matrix(p.beta, p.gamma);
    let mut numeric: Vec<f64> = SymmetricEigen::new(matrix).eigenvalues.iter().copied().collect();
    numeric.sort_by(f64::total_cmp);
    let (l1, l2) = closed_form_eigenvalues(p.beta, p.gamma);
    let mut closed = vec![l1];
    closed.extend(std::iter::repeat(l2).take(8));
    HessianReport {
        matrix,
        numeric_eigenvalues: numeric,
        closed_form_eigenvalues: closed,
        verdict: convexity_check(p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    StrictlyConvex,
    Boundary,
    Nonconvex,
}

impl Convexity {
    pub fn label(self) -> &'static str {
        match self {
            Convexity::StrictlyConvex => "strictly convex",
            Convexity::Boundary => "boundary",
            Convexity::Nonconvex => "nonconvex",
        }
    }
}

fn sign_with_tol(x: f64, scale: f64) -> i8 {
    // a few ulps of the inputs count as zero so that gamma = -6 beta / 5 is
    // recognized as the boundary despite rounding in the division
    let tol = 4.0 * f64::EPSILON * scale;
    if x > tol {
        1
    } else if x < -tol {
        -1
    } else {
        0
    }
}

/// Classify by the signs of the closed-form eigenvalues.
pub fn convexity_check(p: &MaterialParams) -> Convexity {
    let s1 = sign_with_tol(6.0 * p.beta + 5.0 * p.gamma, 6.0 * p.beta.abs() + 5.0 * p.gamma.abs());
    let s2 = sign_with_tol(-p.gamma, p.gamma.abs());
    match (s1, s2) {
        (1, 1) => Convexity::StrictlyConvex,
        (a, b) if a < 0 || b < 0 => Convexity::Nonconvex,
        _ => Convexity::Boundary,
    }
}

/// Verdict implied by the numerical spectrum, treating `|lambda| <= tol` as zero.
pub fn numeric_verdict(eigenvalues: &[f64], tol: f64) -> Convexity {
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min > tol {
        Convexity::StrictlyConvex
    } else if min < -tol {
        Convexity::Nonconvex
    } else {
        Convexity::Boundary
    }
}

/// Constants with `f_CH(nu, A) >= |A|^2 / c1 - c2` for all unit `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coercivity {
    pub lambda_min: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn coercivity_constants(p: &MaterialParams) -> Result<Coercivity, DensityError> {
    let verdict = convexity_check(p);
    if verdict != Convexity::StrictlyConvex {
        return Err(DensityError::NotConvex {
            verdict,
            beta: p.beta,
            gamma: p.gamma,
        });
    }
    let (l1, l2) = closed_form_eigenvalues(p.beta, p.gamma);
    let lambda_min = l1.min(l2);
    let h0sq = p.h0 * p.h0;
    Ok(Coercivity {
        lambda_min,
        c1: 4.0 / lambda_min,
        c2: 0.5 * p.beta * h0sq + 2.0 * p.beta * p.beta * h0sq * (3.0 / lambda_min),
    })
}

/// Outcome of a random sampling check of the coercivity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivitySample {
    pub samples: usize,
    /// `min (f - |A|^2/c1 + c2)`; non-negative iff the bound held everywhere.
    pub min_margin: f64,
    /// `min f / |A|^2` over the samples.
    pub min_ratio: f64,
}

/// Random unit normal (uniform on the sphere).
pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random tensor; the scale is drawn log-uniformly so that both the
/// quadratic and the linear regime are exercised.
pub fn random_tensor<R: Rng>(rng: &mut R) -> Tensor3 {
    let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
    let mut t = Tensor3::zeros();
    for x in t.0.iter_mut() {
        *x = scale * rng.gen_range(-1.0..1.0);
    }
    t
}

pub fn sample_coercivity(p: &MaterialParams, samples: usize, seed: u64) -> Result<CoercivitySample, DensityError> {
    let c = coercivity_constants(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_margin = f64::INFINITY;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..samples {
        let nu = random_unit(&mut rng);
        let a = random_tensor(&mut rng);
        let f = f_ch_unchecked(&nu, &a, p);
        let a2 = a.norm_sq();
        // compare relative to the magnitudes involved
        let margin = (f - a2 / c.c1 + c.c2) / (f.abs() + a2 / c.c1 + c.c2).max(1e-300);
        min_margin = min_margin.min(margin);
        if a2 > 0.0 {
            min_ratio = min_ratio.min(f / a2);
        }
    }
    Ok(CoercivitySample {
        samples,
        min_margin,
        min_ratio,
    })
}
