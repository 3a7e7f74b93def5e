//! Homogeneous 2-D primitives, homographies, vanishing points and the
//! central-projection rectification of image quadrilaterals.
//!
//! Pixel coordinates are continuous with pixel `(i, j)` covering the square
//! `[i, i + 1) x [j, j + 1)`, so rescaling an image by a factor `s` rescales
//! coordinates by exactly `s`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2-D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn to_homo(self) -> HomoPoint {
        HomoPoint(Vector3::new(self.x, self.y, 1.0))
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        self + (other - self) * t
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(p: [f64; 2]) -> Self {
        Point2::new(p[0], p[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// Line classes of the problem: slope in `(-1, 1]` is primarily horizontal,
/// anything else (including vertical) is primarily vertical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    PrimarilyHorizontal,
    PrimarilyVertical,
}

impl Orientation {
    /// Classifies a direction vector by its slope `dy / dx`.
    pub fn of_direction(d: Point2) -> Orientation {
        if d.x == 0.0 {
            return Orientation::PrimarilyVertical;
        }
        let slope = d.y / d.x;
        if slope > -1.0 && slope <= 1.0 {
            Orientation::PrimarilyHorizontal
        } else {
            Orientation::PrimarilyVertical
        }
    }

    pub fn other(self) -> Orientation {
        match self {
            Orientation::PrimarilyHorizontal => Orientation::PrimarilyVertical,
            Orientation::PrimarilyVertical => Orientation::PrimarilyHorizontal,
        }
    }
}

/// Homogeneous point normalized so that `w` is either 1 (finite point) or 0
/// (a direction at infinity stored as a unit vector with a canonical sign).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomoPoint(Vector3<f64>);

impl HomoPoint {
    const INFINITY_EPS: f64 = 1e-12;

    /// Returns `None` for the all-zero vector.
    pub fn new(x: f64, y: f64, w: f64) -> Option<HomoPoint> {
        let planar = x.hypot(y);
        if planar == 0.0 && w == 0.0 {
            return None;
        }
        if w.abs() > Self::INFINITY_EPS * planar {
            return Some(HomoPoint(Vector3::new(x / w, y / w, 1.0)));
        }
        let (mut dx, mut dy) = (x / planar, y / planar);
        if dx < 0.0 || (dx == 0.0 && dy < 0.0) {
            dx = -dx;
            dy = -dy;
        }
        Some(HomoPoint(Vector3::new(dx, dy, 0.0)))
    }

    pub fn from_vector(v: Vector3<f64>) -> Option<HomoPoint> {
        HomoPoint::new(v.x, v.y, v.z)
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }

    pub fn is_infinite(&self) -> bool {
        self.0.z == 0.0
    }

    pub fn to_point(&self) -> Option<Point2> {
        (!self.is_infinite()).then(|| Point2::new(self.0.x, self.0.y))
    }
}

/// Line `a x + b y + c = 0` with `a^2 + b^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomoLine {
    a: f64,
    b: f64,
    c: f64,
}

impl HomoLine {
    pub fn new(a: f64, b: f64, c: f64) -> Result<HomoLine> {
        let n = a.hypot(b);
        if !(n > 0.0) || !c.is_finite() || !n.is_finite() {
            return Err(Error::DegenerateLine);
        }
        Ok(HomoLine {
            a: a / n,
            b: b / n,
            c: c / n,
        })
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<HomoLine> {
        HomoLine::new(v.x, v.y, v.z)
    }

    pub fn through(p: Point2, q: Point2) -> Result<HomoLine> {
        HomoLine::from_vector(p.to_homo().vector().cross(&q.to_homo().vector()))
    }

    pub fn through_homo(p: &HomoPoint, q: &HomoPoint) -> Result<HomoLine> {
        HomoLine::from_vector(p.vector().cross(&q.vector()))
    }

    pub fn coeffs(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.c)
    }

    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }

    /// Unit direction along the line.
    pub fn direction(&self) -> Point2 {
        Point2::new(-self.b, self.a)
    }

    pub fn orientation(&self) -> Orientation {
        Orientation::of_direction(self.direction())
    }

    /// `y` at the given `x`; `None` for vertical lines.
    pub fn y_at(&self, x: f64) -> Option<f64> {
        (self.b != 0.0).then(|| -(self.a * x + self.c) / self.b)
    }

    /// `x` at the given `y`; `None` for horizontal lines.
    pub fn x_at(&self, y: f64) -> Option<f64> {
        (self.a != 0.0).then(|| -(self.b * y + self.c) / self.a)
    }

    /// Orthogonal projection of `p` onto the line.
    pub fn project(&self, p: Point2) -> Point2 {
        let d = self.signed_distance(p);
        Point2::new(p.x - d * self.a, p.y - d * self.b)
    }

    pub fn scaled(&self, factor: f64) -> HomoLine {
        // a x' + b y' + c f = 0 for x' = f x
        HomoLine::new(self.a, self.b, self.c * factor).expect("scaling keeps (a, b)")
    }
}

/// Intersection of two lines; parallel lines meet at a point at infinity.
pub fn intersect_lines(l1: &HomoLine, l2: &HomoLine) -> Result<HomoPoint> {
    let v = l1.vector().cross(&l2.vector());
    if v.norm() < 1e-12 {
        return Err(Error::DegenerateIntersection);
    }
    HomoPoint::from_vector(v).ok_or(Error::DegenerateIntersection)
}

/// Finite intersection point, if any.
pub fn intersect_finite(l1: &HomoLine, l2: &HomoLine) -> Option<Point2> {
    intersect_lines(l1, l2).ok()?.to_point()
}

fn cross3(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - b)
}

/// True iff the four consecutive turns are all strictly positive.
pub fn is_convex_ordered(v: &[Point2; 4]) -> bool {
    if !v.iter().all(|p| p.is_finite()) {
        return false;
    }
    (0..4).all(|i| cross3(v[i], v[(i + 1) % 4], v[(i + 2) % 4]) > 0.0)
}

/// Shoelace signed area of a closed polygon.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum::<f64>()
}

/// Convex quadrilateral with vertices in canonical order: positive signed
/// area (counterclockwise in raw image coordinates) starting from the vertex
/// with minimal `x + y`, ties broken by minimal `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Point2; 4]", into = "[Point2; 4]")]
pub struct Quad {
    vertices: [Point2; 4],
}

impl TryFrom<[Point2; 4]> for Quad {
    type Error = Error;
    fn try_from(v: [Point2; 4]) -> Result<Quad> {
        Quad::new(v)
    }
}

impl From<Quad> for [Point2; 4] {
    fn from(q: Quad) -> Self {
        q.vertices
    }
}

impl Quad {
    pub fn new(points: [Point2; 4]) -> Result<Quad> {
        let perm = Quad::canonical_permutation(&points)
            .ok_or(Error::DegenerateQuad("not a convex quadrilateral"))?;
        Ok(Quad {
            vertices: perm.map(|i| points[i]),
        })
    }

    pub fn from_arrays(points: [[f64; 2]; 4]) -> Result<Quad> {
        Quad::new(points.map(Point2::from))
    }

    /// Index order that puts `points` into canonical order, or `None` if the
    /// points do not form a strictly convex quadrilateral in either winding.
    pub fn canonical_permutation(points: &[Point2; 4]) -> Option<[usize; 4]> {
        let mut order = [0usize, 1, 2, 3];
        let ordered = |o: &[usize; 4]| o.map(|i| points[i]);
        if !is_convex_ordered(&ordered(&order)) {
            order = [0, 3, 2, 1];
            if !is_convex_ordered(&ordered(&order)) {
                return None;
            }
        }
        let start = (0..4)
            .min_by(|&i, &j| {
                let (p, q) = (points[order[i]], points[order[j]]);
                (p.x + p.y)
                    .total_cmp(&(q.x + q.y))
                    .then(p.y.total_cmp(&q.y))
            })
            .unwrap();
        Some([0, 1, 2, 3].map(|k| order[(start + k) % 4]))
    }

    pub fn vertices(&self) -> &[Point2; 4] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point2 {
        self.vertices[i % 4]
    }

    /// Side `i` runs from vertex `i` to vertex `i + 1`.
    pub fn side(&self, i: usize) -> (Point2, Point2) {
        (self.vertex(i), self.vertex(i + 1))
    }

    pub fn side_line(&self, i: usize) -> HomoLine {
        let (p, q) = self.side(i);
        HomoLine::through(p, q).expect("convex quad has distinct vertices")
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        (0..4).map(|i| {
            let (p, q) = self.side(i);
            p.distance(q)
        })
        .sum()
    }

    pub fn contains(&self, p: Point2) -> bool {
        (0..4).all(|i| {
            let (a, b) = self.side(i);
            (b - a).cross(p - a) >= 0.0
        })
    }

    pub fn scaled(&self, factor: f64) -> Quad {
        Quad {
            vertices: self.vertices.map(|p| p * factor),
        }
    }

    pub fn to_arrays(&self) -> [[f64; 2]; 4] {
        self.vertices.map(Into::into)
    }

    /// Smallest interior angle in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        (0..4)
            .map(|i| {
                let p = self.vertex(i);
                let a = self.vertex(i + 3) - p;
                let b = self.vertex(i + 1) - p;
                (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// True if side pair (0, 2) is the primarily horizontal pair.
    pub fn first_pair_is_horizontal(&self) -> bool {
        let v = &self.vertices;
        // Opposite sides summed with consistent direction.
        let pair_a = (v[1] - v[0]) + (v[2] - v[3]);
        let pair_b = (v[2] - v[1]) + (v[3] - v[0]);
        let steep = |d: Point2| d.y.abs() / d.x.abs().max(f64::MIN_POSITIVE);
        steep(pair_a) <= steep(pair_b)
    }
}

/// 3x3 projective transform, normalized so the bottom-right entry is 1 when
/// it is not (numerically) zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Homography {
        Homography {
            m: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Homography> {
        let scale = if m[(2, 2)].abs() > 1e-12 * m.norm() {
            m[(2, 2)]
        } else {
            m.norm()
        };
        if !(scale.abs() > 0.0) || !scale.is_finite() {
            return Err(Error::SingularHomography);
        }
        let m = m / scale;
        if !(m.determinant().abs() > 1e-12) {
            return Err(Error::SingularHomography);
        }
        Ok(Homography { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Exact 4-point solve with Hartley normalization of both point sets.
    pub fn from_correspondences(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Homography> {
        let (ts, ns) = normalize_points(src).ok_or(Error::SingularHomography)?;
        let (td, nd) = normalize_points(dst).ok_or(Error::SingularHomography)?;

        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (x, y) = (ns[i].x, ns[i].y);
            let (u, v) = (nd[i].x, nd[i].y);
            let r = 2 * i;
            a[(r, 0)] = x;
            a[(r, 1)] = y;
            a[(r, 2)] = 1.0;
            a[(r, 6)] = -x * u;
            a[(r, 7)] = -y * u;
            b[r] = u;
            a[(r + 1, 3)] = x;
            a[(r + 1, 4)] = y;
            a[(r + 1, 5)] = 1.0;
            a[(r + 1, 6)] = -x * v;
            a[(r + 1, 7)] = -y * v;
            b[r + 1] = v;
        }
        let h = a.lu().solve(&b).ok_or(Error::SingularHomography)?;
        let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
        let td_inv = td.try_inverse().ok_or(Error::SingularHomography)?;
        Homography::from_matrix(td_inv * hn * ts)
    }

    pub fn apply_homo(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m * v
    }

    /// Maps a finite point; `None` if it lands at infinity.
    pub fn apply(&self, p: Point2) -> Option<Point2> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        (v.z.abs() > 1e-300).then(|| Point2::new(v.x / v.z, v.y / v.z))
    }

    /// Maps `p` and reports the sign of the projective depth.
    pub fn apply_with_depth(&self, p: Point2) -> (Point2, f64) {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        (Point2::new(v.x / v.z, v.y / v.z), v.z)
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self.m.try_inverse().ok_or(Error::SingularHomography)?;
        Homography::from_matrix(inv)
    }

    pub fn compose(&self, then: &Homography) -> Result<Homography> {
        Homography::from_matrix(then.m * self.m)
    }
}

fn normalize_points(pts: &[Point2; 4]) -> Option<(Matrix3<f64>, [Point2; 4])> {
    let c = pts.iter().fold(Point2::default(), |acc, &p| acc + p) * 0.25;
    let mean = pts.iter().map(|&p| p.distance(c)).sum::<f64>() / 4.0;
    if !(mean > 0.0) || !mean.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    let t = Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0);
    Some((t, pts.map(|p| (p - c) * s)))
}

/// Homography mapping each `src` vertex to the `dst` vertex of the same index.
pub fn homography_from_quad(src: &Quad, dst: &Quad) -> Result<Homography> {
    if src.area() < 1.0 {
        return Err(Error::DegenerateQuad("source area below 1 px^2"));
    }
    Homography::from_correspondences(src.vertices(), dst.vertices())
}

/// Pinhole intrinsics, in working-resolution pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
    pub principal: Point2,
}

impl CameraIntrinsics {
    pub fn new(focal_px: f64, principal: Point2) -> Result<CameraIntrinsics> {
        if !(focal_px > 0.0) || !principal.is_finite() {
            return Err(Error::Config(format!("invalid intrinsics f={focal_px}")));
        }
        Ok(CameraIntrinsics {
            focal_px,
            principal,
        })
    }

    /// Focal length as a fraction of the image diagonal, principal point at
    /// the image center.
    pub fn for_image(width: usize, height: usize, focal_coeff: f64) -> CameraIntrinsics {
        let (w, h) = (width as f64, height as f64);
        CameraIntrinsics {
            focal_px: focal_coeff * w.hypot(h),
            principal: Point2::new(w / 2.0, h / 2.0),
        }
    }

    pub fn scaled(&self, factor: f64) -> CameraIntrinsics {
        CameraIntrinsics {
            focal_px: self.focal_px * factor,
            principal: self.principal * factor,
        }
    }

    /// Ray direction `K^-1 p` in camera coordinates.
    pub fn back_project(&self, p: &HomoPoint) -> Vector3<f64> {
        let v = p.vector();
        Vector3::new(
            (v.x - self.principal.x * v.z) / self.focal_px,
            (v.y - self.principal.y * v.z) / self.focal_px,
            v.z,
        )
    }

    pub fn back_project_point(&self, p: Point2) -> Vector3<f64> {
        Vector3::new(
            (p.x - self.principal.x) / self.focal_px,
            (p.y - self.principal.y) / self.focal_px,
            1.0,
        )
    }

    /// `K X` as a homogeneous image point.
    pub fn project(&self, x: &Vector3<f64>) -> Option<HomoPoint> {
        HomoPoint::new(
            self.focal_px * x.x + self.principal.x * x.z,
            self.focal_px * x.y + self.principal.y * x.z,
            x.z,
        )
    }

    /// Normal of the plane through the camera center containing the image line.
    pub fn line_plane_normal(&self, l: &HomoLine) -> Vector3<f64> {
        let [a, b, c] = l.coeffs();
        Vector3::new(
            a * self.focal_px,
            b * self.focal_px,
            a * self.principal.x + b * self.principal.y + c,
        )
    }
}

/// Vanishing points of the primarily horizontal and the primarily vertical
/// side pairs, in that order.
pub fn vanishing_points(q: &Quad) -> (HomoPoint, HomoPoint) {
    let l = [0, 1, 2, 3].map(|i| q.side_line(i));
    let a = intersect_lines(&l[0], &l[2]).expect("opposite sides of a convex quad differ");
    let b = intersect_lines(&l[1], &l[3]).expect("opposite sides of a convex quad differ");
    if q.first_pair_is_horizontal() {
        (a, b)
    } else {
        (b, a)
    }
}

/// Inverse image of a quad on a plane parallel to the plane through the
/// camera center and both vanishing points, at unit distance from the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parallelogram {
    /// 2-D coordinates on the plane, in the quad's vertex order.
    pub vertices: [[f64; 2]; 4],
    /// Horizontal-family side length over vertical-family side length.
    pub aspect: f64,
    /// Angle at vertex 0, degrees.
    pub corner_angle: f64,
}

pub fn rectify_to_parallelogram(q: &Quad, cam: &CameraIntrinsics) -> Result<Parallelogram> {
    let (vh, vv) = vanishing_points(q);
    let dh = cam.back_project(&vh);
    let dv = cam.back_project(&vv);
    let n = dh.cross(&dv);
    let n_norm = n.norm();
    if !(n_norm > 1e-15) {
        return Err(Error::Unrectifiable);
    }
    let n = n / n_norm;

    let rays = q.vertices().map(|p| cam.back_project_point(p));
    let dots = rays.map(|r| r.dot(&n));
    let same_sign = dots.iter().all(|&d| d > 0.0) || dots.iter().all(|&d| d < 0.0);
    if !same_sign || dots.iter().zip(&rays).any(|(d, r)| d.abs() < 1e-12 * r.norm()) {
        return Err(Error::Unrectifiable);
    }
    let pts: [Vector3<f64>; 4] = std::array::from_fn(|i| rays[i] / dots[i]);

    let u = (pts[1] - pts[0]).normalize();
    let v = n.cross(&u);
    let vertices = pts.map(|p| {
        let d = p - pts[0];
        [d.dot(&u), d.dot(&v)]
    });

    let len = |i: usize, j: usize| (pts[j] - pts[i]).norm();
    let pair_a = len(0, 1) + len(3, 2);
    let pair_b = len(1, 2) + len(0, 3);
    let aspect = if q.first_pair_is_horizontal() {
        pair_a / pair_b
    } else {
        pair_b / pair_a
    };
    let e1 = pts[1] - pts[0];
    let e3 = pts[3] - pts[0];
    let corner_angle = (e1.dot(&e3) / (e1.norm() * e3.norm()))
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees();
    if !aspect.is_finite() || !corner_angle.is_finite() {
        return Err(Error::Unrectifiable);
    }
    Ok(Parallelogram {
        vertices,
        aspect,
        corner_angle,
    })
}
