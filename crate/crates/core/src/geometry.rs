//! Scalar-generic per-vertex geometry kernel.
//!
//! Everything the scalar energy path consumes (mixed Voronoi area, cotangent
//! Laplacian of the position, area-weighted normal, angle sum) is computed
//! here for any [`Real`]. With `f64` this feeds the curvature field; with
//! [`Dual3`] it yields exact position derivatives for the optimizer, so the
//! energy and its gradient always come from the same expressions.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use smallvec::SmallVec;

/// Minimal scalar abstraction shared by `f64` and forward-mode duals.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn sqrt(self) -> Self;
    fn atan2(self, x: Self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// Forward-mode dual number carrying derivatives along three seed directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual3 {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual3 {
    pub fn constant(v: f64) -> Self {
        Dual3 { v, d: [0.0; 3] }
    }

    /// Variable seeded along axis `axis`.
    pub fn seeded(v: f64, axis: usize) -> Self {
        let mut d = [0.0; 3];
        d[axis] = 1.0;
        Dual3 { v, d }
    }

    #[inline]
    fn chain(self, v: f64, f: f64) -> Self {
        Dual3 {
            v,
            d: [f * self.d[0], f * self.d[1], f * self.d[2]],
        }
    }
}

impl Add for Dual3 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual3 {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]],
        }
    }
}

impl Sub for Dual3 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual3 {
            v: self.v - o.v,
            d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]],
        }
    }
}

impl Mul for Dual3 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual3 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
            ],
        }
    }
}

impl Div for Dual3 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        Dual3 {
            v,
            d: [
                (self.d[0] - v * o.d[0]) * inv,
                (self.d[1] - v * o.d[1]) * inv,
                (self.d[2] - v * o.d[2]) * inv,
            ],
        }
    }
}

impl Neg for Dual3 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual3 {
            v: -self.v,
            d: [-self.d[0], -self.d[1], -self.d[2]],
        }
    }
}

impl AddAssign for Dual3 {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Real for Dual3 {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual3::constant(v)
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        // d atan2(y, x) = (x dy - y dx) / (x^2 + y^2)
        let r2 = x.v * x.v + self.v * self.v;
        let v = self.v.atan2(x.v);
        Dual3 {
            v,
            d: [
                (x.v * self.d[0] - self.v * x.d[0]) / r2,
                (x.v * self.d[1] - self.v * x.d[1]) / r2,
                (x.v * self.d[2] - self.v * x.d[2]) / r2,
            ],
        }
    }
}

/// Small generic 3-vector used by the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V3<T>(pub [T; 3]);

impl<T: Real> V3<T> {
    #[inline]
    pub fn zero() -> Self {
        V3([T::cst(0.0); 3])
    }
    #[inline]
    pub fn from_f64(p: [f64; 3]) -> Self {
        V3([T::cst(p[0]), T::cst(p[1]), T::cst(p[2])])
    }
    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }
    #[inline]
    pub fn cross(self, o: Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        V3([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }
    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }
    #[inline]
    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }
    #[inline]
    pub fn scale(self, s: T) -> Self {
        V3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
    pub fn values(self) -> [f64; 3] {
        [self.0[0].val(), self.0[1].val(), self.0[2].val()]
    }
}

impl<T: Real> Add for V3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> Sub for V3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> AddAssign for V3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Local quantities of one vertex, accumulated over its star.
#[derive(Debug, Clone)]
pub struct VertexLocal<T> {
    /// Mixed Voronoi area with the obtuse-triangle fallback.
    pub area: T,
    /// `1/2 * sum (cot a + cot b) (x_j - x_v)`; approximately `-area * H * nu`.
    pub laplace: V3<T>,
    /// Sum of unnormalized face normals (twice the area-weighted normal).
    pub normal_sum: V3<T>,
    /// Sum of the corner angles at the vertex.
    pub angle_sum: T,
    /// Area of each star face, in star order.
    pub face_areas: SmallVec<[T; 8]>,
}

impl<T: Real> VertexLocal<T> {
    /// Unit normal.
    pub fn normal(&self) -> V3<T> {
        let n = self.normal_sum.norm();
        self.normal_sum.scale(T::cst(1.0) / n)
    }

    /// Scalar mean curvature `H = -<L, nu> / a` (positive on outward spheres).
    pub fn mean_curvature(&self) -> T {
        -(self.laplace.dot(self.normal())) / self.area
    }

    /// Angle defect `2 pi - sum of angles`.
    pub fn angle_defect(&self) -> T {
        T::cst(2.0 * PI) - self.angle_sum
    }
}

/// Accumulate the local quantities of vertex `v`.
///
/// `star` lists the faces around `v`, each rotated so that `v` comes first
/// and the remaining two corners keep the face winding.
pub fn vertex_local<T, F>(star: &[[usize; 3]], pos: F) -> VertexLocal<T>
where
    T: Real,
    F: Fn(usize) -> V3<T>,
{
    let half = T::cst(0.5);
    let eighth = T::cst(0.125);
    let quarter = T::cst(0.25);
    let mut out = VertexLocal {
        area: T::cst(0.0),
        laplace: V3::zero(),
        normal_sum: V3::zero(),
        angle_sum: T::cst(0.0),
        face_areas: SmallVec::new(),
    };
    for &[v, j, k] in star {
        let xv = pos(v);
        let u = pos(j) - xv;
        let w = pos(k) - xv;
        let e = pos(k) - pos(j);
        let n = u.cross(w);
        let nn = n.norm();
        let area = half * nn;

        let dot_v = u.dot(w);
        let dot_j = -(u.dot(e));
        let dot_k = w.dot(e);
        let cot_j = dot_j / nn;
        let cot_k = dot_k / nn;

        out.laplace += (u.scale(cot_k) + w.scale(cot_j)).scale(half);
        out.normal_sum += n;
        out.angle_sum += nn.atan2(dot_v);
        out.area += if dot_v.val() < 0.0 {
            area * half
        } else if dot_j.val() < 0.0 || dot_k.val() < 0.0 {
            area * quarter
        } else {
            eighth * (u.norm_sq() * cot_k + w.norm_sq() * cot_j)
        };
        out.face_areas.push(area);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_matches_analytic_derivatives() {
        let x = Dual3::seeded(0.7, 0);
        let y = Dual3::seeded(-1.3, 1);
        let g = (x * x + Dual3::constant(2.0)).sqrt();
        let expect = 0.7 / (0.49f64 + 2.0).sqrt();
        assert!((g.d[0] - expect).abs() < 1e-15);
        assert_eq!(g.d[1], 0.0);

        let a = y.atan2(x);
        let r2 = 0.49 + 1.69;
        assert!((a.d[0] - (1.3 / r2)).abs() < 1e-15);
        assert!((a.d[1] - (0.7 / r2)).abs() < 1e-15);

        let q = x / y;
        assert!((q.d[0] - 1.0 / -1.3).abs() < 1e-15);
        assert!((q.d[1] + 0.7 / (1.3 * 1.3)).abs() < 1e-15);
    }

    #[test]
    fn flat_symmetric_star_has_no_curvature() {
        // regular hexagon around the origin
        let mut pts = vec![[0.0, 0.0, 0.0]];
        for i in 0..6 {
            let t = i as f64 * PI / 3.0;
            pts.push([t.cos(), t.sin(), 0.0]);
        }
        let star: Vec<[usize; 3]> = (0..6).map(|i| [0, 1 + i, 1 + (i + 1) % 6]).collect();
        let loc = vertex_local::<f64, _>(&star, |i| V3::from_f64(pts[i]));
        assert!(loc.angle_defect().abs() < 1e-14);
        assert!(loc.laplace.norm() < 1e-14);
        let hex_area = 1.5 * 3f64.sqrt();
        assert!((loc.area - hex_area / 3.0).abs() < 1e-14);
        assert!(loc.mean_curvature().abs() < 1e-14);
    }
}
