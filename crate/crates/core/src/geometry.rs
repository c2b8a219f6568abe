//! Planar geometry for convex footprints.

use std::ops::{Add, Mul, Neg, Sub};

/// Intersections with an area below this are treated as empty (mm²).
pub const AREA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `deg` degrees counter-clockwise from +x.
    pub fn from_angle_deg(deg: f64) -> Self {
        let r = deg.to_radians();
        Self::new(r.cos(), r.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotated_deg(self, deg: f64) -> Vec2 {
        let (s, c) = deg.to_radians().sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Signed area (positive for counter-clockwise winding).
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Area-weighted centroid. Falls back to the vertex mean for degenerate input.
pub fn centroid(poly: &[Vec2]) -> Vec2 {
    let a = signed_area(poly);
    if a.abs() < AREA_EPS {
        let n = poly.len().max(1) as f64;
        let s = poly.iter().fold(Vec2::default(), |acc, p| acc + *p);
        return s * (1.0 / n);
    }
    let n = poly.len();
    let mut c = Vec2::default();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let k = p.cross(q);
        c = c + (p + q) * k;
    }
    c * (1.0 / (6.0 * a))
}

/// True when `poly` has at least three vertices, nonzero area and no reflex turn.
pub fn is_convex(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 || signed_area(poly).abs() < AREA_EPS {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        let z = (b - a).cross(c - b);
        if z.abs() <= 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return false;
        }
    }
    true
}

/// Clips a convex polygon to the half-plane `dot(p, normal) <= offset`.
pub fn clip_half_plane(poly: &[Vec2], normal: Vec2, offset: f64) -> Vec<Vec2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let dc = cur.dot(normal) - offset;
        let dn = next.dot(normal) - offset;
        if dc <= 0.0 {
            out.push(cur);
        }
        if (dc < 0.0 && dn > 0.0) || (dc > 0.0 && dn < 0.0) {
            let t = dc / (dc - dn);
            out.push(cur + (next - cur) * t);
        }
    }
    out
}

/// Places a body-frame polygon at `origin` rotated by `theta_deg`.
pub fn transform(poly: &[Vec2], origin: Vec2, theta_deg: f64) -> Vec<Vec2> {
    poly.iter().map(|p| p.rotated_deg(theta_deg) + origin).collect()
}

/// Width of `poly` measured along the unit direction `axis`.
pub fn extent_along(poly: &[Vec2], axis: Vec2) -> f64 {
    let (lo, hi) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    });
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Regular `n`-gon of circumradius `r`, counter-clockwise, first vertex on +x.
pub fn regular_polygon(n: usize, r: f64) -> Vec<Vec2> {
    (0..n).map(|k| Vec2::from_angle_deg(360.0 * k as f64 / n as f64) * r).collect()
}
