use super::Vec3;

/// Cubic Bézier segment given by its four control points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicBezier {
    pub p: [Vec3; 4],
}

impl CubicBezier {
    pub fn new(p0: Vec3, p1: Vec3, p2: Vec3, p3: Vec3) -> Self {
        CubicBezier { p: [p0, p1, p2, p3] }
    }

    /// Straight segment with evenly spaced inner control points (uniform speed).
    pub fn line(a: Vec3, b: Vec3) -> Self {
        let d = (b - a) / 3.0;
        CubicBezier::new(a, a + d, a + 2.0 * d, b)
    }

    /// Degree-elevated quadratic.
    pub fn from_quadratic(a: Vec3, c: Vec3, b: Vec3) -> Self {
        CubicBezier::new(a, a + (c - a) * (2.0 / 3.0), b + (c - b) * (2.0 / 3.0), b)
    }

    pub fn point(&self, t: f64) -> Vec3 {
        let s = 1.0 - t;
        let [p0, p1, p2, p3] = self.p;
        p0 * (s * s * s) + p1 * (3.0 * s * s * t) + p2 * (3.0 * s * t * t) + p3 * (t * t * t)
    }

    pub fn d1(&self, t: f64) -> Vec3 {
        let s = 1.0 - t;
        let [p0, p1, p2, p3] = self.p;
        (p1 - p0) * (3.0 * s * s) + (p2 - p1) * (6.0 * s * t) + (p3 - p2) * (3.0 * t * t)
    }

    pub fn d2(&self, t: f64) -> Vec3 {
        let [p0, p1, p2, p3] = self.p;
        (p2 - p1 * 2.0 + p0) * (6.0 * (1.0 - t)) + (p3 - p2 * 2.0 + p1) * (6.0 * t)
    }

    pub fn start(&self) -> Vec3 {
        self.p[0]
    }

    pub fn end(&self) -> Vec3 {
        self.p[3]
    }
}
