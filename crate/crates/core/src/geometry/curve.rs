use super::quad::{adaptive, gauss7};
use super::{frame_from_tangent, CubicBezier, Frame, GeometryError, LaneCoord, Vec3, REGULARITY_EPS};

const REGULARITY_SAMPLES: usize = 256;
const LENGTH_REL_TOL: f64 = 1e-9;
/// Target spacing of the cumulative-length table, in meters of arc.
const TABLE_SPACING: f64 = 4.0;
const RANGE_SLACK: f64 = 1e-9;

/// Cumulative arc length at a grid of Bézier parameters, with monotone
/// cubic slopes for the inverse map s -> t.
#[derive(Clone)]
struct ArcTable {
    t: Vec<f64>,
    s: Vec<f64>,
    slope: Vec<f64>,
}

impl std::fmt::Debug for ArcTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ArcTable({} knots)", self.t.len())
    }
}

impl ArcTable {
    fn build<F: Fn(f64) -> f64>(speed: &F, approx_len: f64) -> ArcTable {
        let n = ((approx_len / TABLE_SPACING).ceil() as usize).clamp(8, 20_000);
        let mut t = Vec::with_capacity(n + 1);
        let mut s = Vec::with_capacity(n + 1);
        t.push(0.0);
        s.push(0.0);
        let mut acc = 0.0;
        for k in 0..n {
            let (a, b) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
            acc += adaptive(speed, a, b, LENGTH_REL_TOL, 1e-13);
            t.push(b);
            s.push(acc);
        }
        // dt/ds = 1/speed, limited with Fritsch–Carlson so the interpolant stays monotone
        let mut slope: Vec<f64> = t.iter().map(|&x| 1.0 / speed(x)).collect();
        for k in 0..n {
            let secant = (t[k + 1] - t[k]) / (s[k + 1] - s[k]);
            let a = slope[k] / secant;
            let b = slope[k + 1] / secant;
            let h = a * a + b * b;
            if h > 9.0 {
                let tau = 3.0 / h.sqrt();
                slope[k] = tau * a * secant;
                slope[k + 1] = tau * b * secant;
            }
        }
        ArcTable { t, s, slope }
    }

    fn length(&self) -> f64 {
        *self.s.last().unwrap_or(&0.0)
    }

    /// Bézier parameter at local arc length `sigma`, refined by Newton steps on
    /// the exact arc-length integral.
    fn invert<F: Fn(f64) -> f64>(&self, speed: &F, sigma: f64) -> f64 {
        let len = self.length();
        if sigma <= 0.0 {
            return 0.0;
        }
        if sigma >= len {
            return 1.0;
        }
        let k = self.s.partition_point(|&x| x <= sigma).saturating_sub(1).min(self.s.len() - 2);
        let (s0, s1) = (self.s[k], self.s[k + 1]);
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let h = s1 - s0;
        let x = (sigma - s0) / h;
        let (x2, x3) = (x * x, x * x * x);
        let mut t = (2.0 * x3 - 3.0 * x2 + 1.0) * t0
            + (x3 - 2.0 * x2 + x) * h * self.slope[k]
            + (-2.0 * x3 + 3.0 * x2) * t1
            + (x3 - x2) * h * self.slope[k + 1];
        for _ in 0..4 {
            let f = s0 + gauss7(speed, t0, t) - sigma;
            if f.abs() < 1e-11 {
                break;
            }
            t = (t - f / speed(t)).clamp(t0, t1);
        }
        t
    }
}

/// One arc-length parameterized curve of a lane.
///
/// The geometry is a base Bézier displaced by `offset` = (f1, f2) along the
/// moving frame (u1, u2) of the base. Center-lane and ramp curves have a zero
/// offset; parallel-lane curves reuse the center curve as their base.
#[derive(Debug, Clone)]
pub struct Curve {
    pub id: String,
    pub base: CubicBezier,
    pub offset: (f64, f64),
    pub start_param: f64,
    pub end_param: f64,
    pub start_point: Vec3,
    pub end_point: Vec3,
    table: ArcTable,
}

impl PartialEq for Curve {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.base == other.base
            && self.offset == other.offset
            && self.start_param == other.start_param
            && self.end_param == other.end_param
    }
}

impl Curve {
    pub fn new(
        id: impl Into<String>,
        base: CubicBezier,
        offset: (f64, f64),
        start_param: f64,
    ) -> Result<Curve, GeometryError> {
        check_regular(&base)?;
        let shifted = offset != (0.0, 0.0);
        if shifted {
            for k in 0..=REGULARITY_SAMPLES {
                let t = k as f64 / REGULARITY_SAMPLES as f64;
                frame_from_tangent(base.d1(t))?;
            }
        }
        let mut curve = Curve {
            id: id.into(),
            base,
            offset,
            start_param,
            end_param: start_param,
            start_point: Vec3::zeros(),
            end_point: Vec3::zeros(),
            table: ArcTable { t: vec![], s: vec![], slope: vec![] },
        };
        if shifted {
            for k in 0..=REGULARITY_SAMPLES {
                let t = k as f64 / REGULARITY_SAMPLES as f64;
                let n = curve.velocity(t).norm();
                if n < REGULARITY_EPS {
                    return Err(GeometryError::Degenerate { t, norm: n });
                }
            }
        }
        let approx = control_polygon_length(&base) + offset.0.abs() + offset.1.abs();
        curve.table = ArcTable::build(&|t| curve.velocity(t).norm(), approx);
        curve.end_param = start_param + curve.table.length();
        curve.start_point = curve.point_t(0.0);
        curve.end_point = curve.point_t(1.0);
        Ok(curve)
    }

    pub fn length(&self) -> f64 {
        self.end_param - self.start_param
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.start_param - RANGE_SLACK && s <= self.end_param + RANGE_SLACK
    }

    /// Derivative of the (possibly offset) curve with respect to the Bézier parameter.
    pub fn velocity(&self, t: f64) -> Vec3 {
        let d1 = self.base.d1(t);
        if self.offset == (0.0, 0.0) {
            return d1;
        }
        let (_, du1, du2) = frame_derivative(&self.base, t);
        d1 + du1 * self.offset.0 + du2 * self.offset.1
    }

    /// Point at Bézier parameter `t`.
    pub fn point_t(&self, t: f64) -> Vec3 {
        self.base_point_offset(t, self.offset.0, self.offset.1)
    }

    /// Point of the base curve at `t` displaced by arbitrary frame coefficients.
    pub fn base_point_offset(&self, t: f64, f1: f64, f2: f64) -> Vec3 {
        let p = self.base.point(t);
        if f1 == 0.0 && f2 == 0.0 {
            return p;
        }
        match frame_from_tangent(self.base.d1(t)) {
            Ok(fr) => fr.place(p, f1, f2),
            Err(_) => p,
        }
    }

    /// Bézier parameter at chained arc-length parameter `s` (clamped to the curve).
    pub fn t_at(&self, s: f64) -> f64 {
        self.table.invert(&|t| self.velocity(t).norm(), s - self.start_param)
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        self.point_t(self.t_at(s))
    }

    /// Unit tangent at chained parameter `s`.
    pub fn tangent_at(&self, s: f64) -> Vec3 {
        self.velocity(self.t_at(s)).normalize()
    }

    /// Moving frame of the base curve at chained parameter `s`.
    pub fn frame_at(&self, s: f64) -> Result<Frame, GeometryError> {
        frame_from_tangent(self.base.d1(self.t_at(s)))
    }

    fn check_range(&self, s: f64) -> Result<(), GeometryError> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(GeometryError::OutOfRange { s, a: self.start_param, b: self.end_param })
        }
    }
}

fn control_polygon_length(b: &CubicBezier) -> f64 {
    (b.p[1] - b.p[0]).norm() + (b.p[2] - b.p[1]).norm() + (b.p[3] - b.p[2]).norm()
}

fn check_regular(b: &CubicBezier) -> Result<(), GeometryError> {
    for k in 0..=REGULARITY_SAMPLES {
        let t = k as f64 / REGULARITY_SAMPLES as f64;
        let n = b.d1(t).norm();
        if n < REGULARITY_EPS {
            return Err(GeometryError::Degenerate { t, norm: n });
        }
    }
    Ok(())
}

/// Frame (u1, u2) of the base at `t` and its derivatives with respect to `t`.
fn frame_derivative(b: &CubicBezier, t: f64) -> (Frame, Vec3, Vec3) {
    let d1 = b.d1(t);
    let d2 = b.d2(t);
    let n = d1.norm();
    let v = d1 / n;
    let dv = (d2 - v * d2.dot(&v)) / n;
    let z = Vec3::z();
    let w = z - v * v.z;
    let wn = w.norm();
    let u1 = w / wn;
    let dw = -(v * dv.z + dv * v.z);
    let du1 = (dw - u1 * dw.dot(&u1)) / wn;
    let u2 = v.cross(&u1);
    let du2 = dv.cross(&u1) + v.cross(&du1);
    (Frame { u1, u2 }, du1, du2)
}

/// Length of a Bézier curve by adaptive Gauss–Legendre quadrature.
pub fn curve_length(b: &CubicBezier) -> Result<f64, GeometryError> {
    check_regular(b)?;
    Ok(adaptive(&|t| b.d1(t).norm(), 0.0, 1.0, LENGTH_REL_TOL, 1e-13))
}

/// Arc-length parameterized curve starting at chained parameter `start_param`.
pub fn arclength_reparam(
    id: impl Into<String>,
    b: CubicBezier,
    start_param: f64,
) -> Result<Curve, GeometryError> {
    Curve::new(id, b, (0.0, 0.0), start_param)
}

/// Moving frame of `curve` at chained parameter `s`.
pub fn normal_frame(curve: &Curve, s: f64) -> Result<Frame, GeometryError> {
    curve.check_range(s)?;
    curve.frame_at(s)
}

/// Lattice point `lane` around the central chain at parameter `s`.
pub fn parallel_point(
    central: &ChainedCurve,
    s: f64,
    lane: LaneCoord,
    r: f64,
) -> Result<Vec3, GeometryError> {
    let c = central.curve_at(s)?;
    let t = c.t_at(s);
    let frame = frame_from_tangent(c.velocity(t))?;
    let (f1, f2) = lane.frame_offset(r);
    Ok(frame.place(c.point_t(t), f1, f2))
}

/// Ordered chain of curves in chained arc-length parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainedCurve {
    pub id: String,
    pub curves: Vec<Curve>,
}

impl ChainedCurve {
    /// Chain the given Béziers, all displaced by `offset`, starting at parameter 0.
    pub fn build(
        id: impl Into<String>,
        pieces: Vec<(String, CubicBezier)>,
        offset: (f64, f64),
    ) -> Result<ChainedCurve, GeometryError> {
        if pieces.is_empty() {
            return Err(GeometryError::EmptyChain);
        }
        let mut curves = Vec::with_capacity(pieces.len());
        let mut a = 0.0;
        for (cid, b) in pieces {
            let c = Curve::new(cid, b, offset, a)?;
            a = c.end_param;
            curves.push(c);
        }
        Ok(ChainedCurve { id: id.into(), curves })
    }

    pub fn start_param(&self) -> f64 {
        self.curves.first().map_or(0.0, |c| c.start_param)
    }

    pub fn end_param(&self) -> f64 {
        self.curves.last().map_or(0.0, |c| c.end_param)
    }

    pub fn length(&self) -> f64 {
        self.end_param() - self.start_param()
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.start_param() - RANGE_SLACK && s <= self.end_param() + RANGE_SLACK
    }

    /// Index of the curve holding `s`; interior joints belong to the later curve.
    pub fn locate(&self, s: f64) -> Option<usize> {
        if self.curves.is_empty() || !self.contains(s) {
            return None;
        }
        let k = self.curves.partition_point(|c| c.start_param <= s);
        Some(k.saturating_sub(1).min(self.curves.len() - 1))
    }

    pub fn curve_at(&self, s: f64) -> Result<&Curve, GeometryError> {
        self.locate(s).map(|k| &self.curves[k]).ok_or(GeometryError::OutOfRange {
            s,
            a: self.start_param(),
            b: self.end_param(),
        })
    }

    pub fn point_at(&self, s: f64) -> Result<Vec3, GeometryError> {
        Ok(self.curve_at(s)?.point_at(s))
    }

    pub fn tangent_at(&self, s: f64) -> Result<Vec3, GeometryError> {
        Ok(self.curve_at(s)?.tangent_at(s))
    }

    /// Point at `s` with the base frame offset replaced by (f1, f2).
    pub fn point_with_offset(&self, s: f64, f1: f64, f2: f64) -> Result<Vec3, GeometryError> {
        let c = self.curve_at(s)?;
        Ok(c.base_point_offset(c.t_at(s), f1, f2))
    }
}

/// Proportional map of `s` from interval `src` onto interval `dst`.
pub fn convert_interval(src: (f64, f64), dst: (f64, f64), s: f64) -> Result<f64, GeometryError> {
    let (a, b) = src;
    if s < a - RANGE_SLACK || s > b + RANGE_SLACK {
        return Err(GeometryError::OutOfRange { s, a, b });
    }
    Ok((dst.1 - dst.0) * (s - a) / (b - a) + dst.0)
}

/// Converts parameter `s` on `src` to the corresponding parameter on `dst`,
/// per corresponding curve pair when both chains have the same subdivision.
pub fn param_convert(src: &ChainedCurve, dst: &ChainedCurve, s: f64) -> Result<f64, GeometryError> {
    if src.curves.is_empty() || dst.curves.is_empty() {
        return Err(GeometryError::EmptyChain);
    }
    if std::ptr::eq(src, dst) {
        src.curve_at(s)?;
        return Ok(s);
    }
    if src.curves.len() == dst.curves.len() {
        let k = src.locate(s).ok_or(GeometryError::OutOfRange {
            s,
            a: src.start_param(),
            b: src.end_param(),
        })?;
        let (c, d) = (&src.curves[k], &dst.curves[k]);
        convert_interval((c.start_param, c.end_param), (d.start_param, d.end_param), s)
    } else {
        convert_interval(
            (src.start_param(), src.end_param()),
            (dst.start_param(), dst.end_param()),
            s,
        )
    }
}

/// Like [`param_convert`] but extends the first and last curve pair linearly
/// beyond the chain ends instead of failing.
pub fn convert_extrapolated(src: &ChainedCurve, dst: &ChainedCurve, s: f64) -> f64 {
    if src.curves.is_empty() || dst.curves.is_empty() {
        return s;
    }
    let paired = src.curves.len() == dst.curves.len();
    let pick = |k: usize| -> ((f64, f64), (f64, f64)) {
        if paired {
            let (c, d) = (&src.curves[k], &dst.curves[k]);
            ((c.start_param, c.end_param), (d.start_param, d.end_param))
        } else {
            ((src.start_param(), src.end_param()), (dst.start_param(), dst.end_param()))
        }
    };
    let k = if s < src.start_param() {
        0
    } else if s > src.end_param() {
        src.curves.len() - 1
    } else {
        src.locate(s).unwrap_or(0)
    };
    let ((a, b), (a2, b2)) = pick(k);
    (b2 - a2) * (s - a) / (b - a) + a2
}

/// Signed distance along `dst` from the converted own position to `other_s`;
/// positive when the other point lies ahead.
pub fn along_lane_distance(
    other_s: f64,
    src: &ChainedCurve,
    dst: &ChainedCurve,
    own_s: f64,
) -> Result<f64, GeometryError> {
    Ok(other_s - param_convert(src, dst, own_s)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quarter_circle(r: f64) -> CubicBezier {
        let k = 0.552_284_749_830_793_4 * r;
        CubicBezier::new(
            Vec3::new(r, 0.0, 0.0),
            Vec3::new(r, k, 0.0),
            Vec3::new(k, r, 0.0),
            Vec3::new(0.0, r, 0.0),
        )
    }

    fn skewed() -> CubicBezier {
        CubicBezier::new(
            Vec3::new(0.0, 0.0, 100.0),
            Vec3::new(5.0, 0.0, 100.0),
            Vec3::new(150.0, 40.0, 120.0),
            Vec3::new(200.0, 60.0, 130.0),
        )
    }

    // dense trapezoid oracle
    fn trapezoid_len(b: &CubicBezier, n: usize) -> f64 {
        let mut acc = 0.0;
        let mut prev = b.d1(0.0).norm();
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let cur = b.d1(t).norm();
            acc += 0.5 * (prev + cur) / n as f64;
            prev = cur;
        }
        acc
    }

    #[test]
    fn straight_length() {
        let b = CubicBezier::line(Vec3::zeros(), Vec3::new(100.0, 0.0, 0.0));
        assert!((curve_length(&b).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn quarter_circle_length_matches_trapezoid_oracle() {
        let b = quarter_circle(50.0);
        let oracle = trapezoid_len(&b, 1_000_000);
        let len = curve_length(&b).unwrap();
        assert!((len - oracle).abs() / oracle < 1e-5, "{len} vs {oracle}");
        // frozen oracle value for this control polygon
        assert!((len - 78.550_834_903_692_8).abs() < 1e-6, "{len}");
    }

    #[test]
    fn zero_length_curve_is_degenerate() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let b = CubicBezier::new(p, p, p, p);
        assert!(matches!(curve_length(&b), Err(GeometryError::Degenerate { .. })));
        assert!(arclength_reparam("c", b, 0.0).is_err());
    }

    #[test]
    fn reparam_midpoint_of_line() {
        let b = CubicBezier::new(
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(100.0, 0.0, 0.0),
        );
        let c = arclength_reparam("c", b, 0.0).unwrap();
        assert!((c.point_at(50.0) - Vec3::new(50.0, 0.0, 0.0)).norm() < 1e-4);
        assert_eq!(c.point_at(0.0), b.start());
    }

    #[test]
    fn reparam_matches_cumulative_oracle() {
        let b = skewed();
        let c = arclength_reparam("c", b, 0.0).unwrap();
        let half = c.length() / 2.0;
        // brute-force: walk the curve in tiny steps until half the length is covered
        let n = 2_000_000;
        let mut acc = 0.0;
        let mut prev = b.point(0.0);
        let mut hit = prev;
        for k in 1..=n {
            let p = b.point(k as f64 / n as f64);
            acc += (p - prev).norm();
            prev = p;
            if acc >= half {
                hit = p;
                break;
            }
        }
        assert!((c.point_at(half) - hit).norm() < 1e-3);
    }

    #[test]
    fn reparam_speed_is_unit() {
        let c = arclength_reparam("c", skewed(), 10.0).unwrap();
        let h = 1e-3;
        for k in 1..1000 {
            let s = c.start_param + c.length() * k as f64 / 1000.0;
            let sp = (c.point_at(s + h) - c.point_at(s - h)).norm() / (2.0 * h);
            assert!((sp - 1.0).abs() < 1e-3, "speed {sp} at {s}");
        }
    }

    #[test]
    fn offset_curve_length_and_separation() {
        let b = skewed();
        let center = ChainedCurve::build("c", vec![("c0".into(), b)], (0.0, 0.0)).unwrap();
        let r = 10.0;
        let lane = LaneCoord::new(1, 0);
        let par = ChainedCurve::build("p", vec![("p0".into(), b)], lane.frame_offset(r)).unwrap();
        // separation at corresponding parameters is exactly one lattice step
        for k in 0..=100 {
            let s = center.length() * k as f64 / 100.0;
            let s2 = param_convert(&center, &par, s).unwrap();
            let c = center.curves[0].t_at(s);
            let p = par.curves[0].t_at(s2);
            let d = (center.curves[0].point_t(c) - par.curves[0].point_t(p)).norm();
            if (c - p).abs() < 1e-9 {
                assert!((d - 2.0 * r).abs() < 1e-6);
            }
        }
        // parallel length matches a dense polyline of the offset map
        let n = 200_000;
        let mut acc = 0.0;
        let mut prev = par.curves[0].point_t(0.0);
        for k in 1..=n {
            let p = par.curves[0].point_t(k as f64 / n as f64);
            acc += (p - prev).norm();
            prev = p;
        }
        assert!((par.length() - acc).abs() / acc < 1e-6, "{} vs {acc}", par.length());
    }

    #[test]
    fn parallel_point_example() {
        let b = CubicBezier::line(Vec3::new(0.0, 0.0, 50.0), Vec3::new(10.0, 0.0, 50.0));
        let chain = ChainedCurve::build("c", vec![("c0".into(), b)], (0.0, 0.0)).unwrap();
        let p = parallel_point(&chain, 5.0, LaneCoord::new(1, 0), 10.0).unwrap();
        assert!((p - Vec3::new(5.0, 0.0, 70.0)).norm() < 1e-9);
        let p0 = parallel_point(&chain, 5.0, LaneCoord::CENTER, 10.0).unwrap();
        assert!((p0 - Vec3::new(5.0, 0.0, 50.0)).norm() < 1e-9);
    }

    #[test]
    fn normal_frame_errors() {
        let up = CubicBezier::line(Vec3::zeros(), Vec3::new(0.0, 0.0, 10.0));
        let c = arclength_reparam("v", up, 0.0).unwrap();
        assert_eq!(normal_frame(&c, 5.0), Err(GeometryError::FrameUndefined));
        assert!(matches!(normal_frame(&c, 11.0), Err(GeometryError::OutOfRange { .. })));
    }

    #[test]
    fn frames_vary_continuously() {
        let c = arclength_reparam("c", skewed(), 0.0).unwrap();
        let mut s = 0.0;
        while s + 0.01 <= c.end_param {
            let a = c.frame_at(s).unwrap();
            let b = c.frame_at(s + 0.01).unwrap();
            assert!((a.u1 - b.u1).norm() < 0.1);
            s += 0.37;
        }
    }

    #[test]
    fn frame_derivative_matches_finite_difference() {
        let b = skewed();
        let h = 1e-6;
        for &t in &[0.05, 0.4, 0.9] {
            let (_, du1, du2) = frame_derivative(&b, t);
            let fa = frame_from_tangent(b.d1(t + h)).unwrap();
            let fb = frame_from_tangent(b.d1(t - h)).unwrap();
            assert!(((fa.u1 - fb.u1) / (2.0 * h) - du1).norm() < 1e-6);
            assert!(((fa.u2 - fb.u2) / (2.0 * h) - du2).norm() < 1e-6);
        }
    }

    #[test]
    fn convert_examples() {
        assert_eq!(convert_interval((0.0, 100.0), (0.0, 50.0), 50.0).unwrap(), 25.0);
        assert!((convert_interval((0.0, 100.0), (0.0, 100.0), 73.2).unwrap() - 73.2).abs() < 1e-12);
        assert_eq!(convert_interval((200.0, 300.0), (150.0, 200.0), 250.0).unwrap(), 175.0);
        assert!(convert_interval((0.0, 100.0), (0.0, 50.0), 101.0).is_err());
    }

    #[test]
    fn two_segment_chain_oracle() {
        // chain curves of length 200 and 100 vs 150 and 50: second pair maps [200,300] -> [150,200]
        let x = |v: f64| Vec3::new(v, 0.0, 0.0);
        let src = ChainedCurve::build(
            "s",
            vec![("a".into(), CubicBezier::line(x(0.0), x(200.0))), ("b".into(), CubicBezier::line(x(200.0), x(300.0)))],
            (0.0, 0.0),
        )
        .unwrap();
        let dst = ChainedCurve::build(
            "d",
            vec![("a".into(), CubicBezier::line(x(0.0), x(150.0))), ("b".into(), CubicBezier::line(x(150.0), x(200.0)))],
            (0.0, 0.0),
        )
        .unwrap();
        assert!((param_convert(&src, &dst, 250.0).unwrap() - 175.0).abs() < 1e-9);
        assert!((param_convert(&src, &dst, 100.0).unwrap() - 75.0).abs() < 1e-9);
        assert!((along_lane_distance(170.0, &src, &dst, 250.0).unwrap() + 5.0).abs() < 1e-9);
        assert!((convert_extrapolated(&src, &dst, 310.0) - 205.0).abs() < 1e-9);
        assert!((convert_extrapolated(&src, &dst, -20.0) + 15.0).abs() < 1e-9);
    }

    #[test]
    fn along_lane_examples() {
        let x = |v: f64| Vec3::new(v, 0.0, 0.0);
        let a = ChainedCurve::build("a", vec![("a0".into(), CubicBezier::line(x(0.0), x(100.0)))], (0.0, 0.0)).unwrap();
        let b = ChainedCurve::build("b", vec![("b0".into(), CubicBezier::line(x(0.0), x(50.0)))], (0.0, 0.0)).unwrap();
        assert!((along_lane_distance(55.0, &a, &a, 40.0).unwrap() - 15.0).abs() < 1e-9);
        assert!(along_lane_distance(25.0, &a, &b, 50.0).unwrap().abs() < 1e-9);
        assert!((along_lane_distance(20.0, &a, &b, 50.0).unwrap() + 5.0).abs() < 1e-9);
    }


    fn control_point() -> impl proptest::strategy::Strategy<Value = Vec3> {
        use proptest::prelude::*;
        (-200.0f64..200.0, -200.0f64..200.0, 50.0f64..150.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn arc_length_inverse_is_monotone(
            p1 in control_point(), p2 in control_point(), p3 in control_point(), start in -500.0f64..500.0,
        ) {
            let b = CubicBezier::new(Vec3::new(0.0, 0.0, 100.0), p1, p2, p3);
            proptest::prop_assume!(curve_length(&b).map_or(false, |l| l > 1.0));
            let c = arclength_reparam("c", b, start).unwrap();
            proptest::prop_assert!((c.end_param - c.start_param - c.length()).abs() < 1e-9);
            let mut prev_t = -1.0;
            let mut prev_p = c.point_at(c.start_param);
            for k in 0..=50 {
                let s = c.start_param + c.length() * k as f64 / 50.0;
                let t = c.t_at(s);
                proptest::prop_assert!(t >= prev_t && (0.0..=1.0).contains(&t));
                // a chord never exceeds the arc it spans
                let p = c.point_at(s);
                proptest::prop_assert!((p - prev_p).norm() <= c.length() / 50.0 + 1e-6);
                prev_t = t;
                prev_p = p;
            }
            proptest::prop_assert!((c.point_at(c.end_param) - b.end()).norm() < 1e-6);
        }

        #[test]
        fn param_convert_keeps_order_and_ends(
            p1 in control_point(), p2 in control_point(), s0 in 0.0f64..1.0, s1 in 0.0f64..1.0,
        ) {
            let a = CubicBezier::new(Vec3::new(0.0, 0.0, 100.0), p1, p2, Vec3::new(300.0, 0.0, 100.0));
            let b = CubicBezier::line(Vec3::new(300.0, 0.0, 100.0), Vec3::new(600.0, 0.0, 100.0));
            proptest::prop_assume!(curve_length(&a).is_ok());
            let center = ChainedCurve::build("c", vec![("c0".into(), a), ("c1".into(), b)], (0.0, 0.0));
            let par = ChainedCurve::build("p", vec![("p0".into(), a), ("p1".into(), b)], LaneCoord::new(0, 1).frame_offset(10.0));
            proptest::prop_assume!(center.is_ok() && par.is_ok());
            let (center, par) = (center.unwrap(), par.unwrap());
            let (lo, hi) = (s0.min(s1) * center.end_param(), s0.max(s1) * center.end_param());
            proptest::prop_assert!(param_convert(&center, &par, lo).unwrap() <= param_convert(&center, &par, hi).unwrap());
            proptest::prop_assert_eq!(param_convert(&center, &center, lo).unwrap(), lo);
            proptest::prop_assert!((param_convert(&center, &par, center.end_param()).unwrap() - par.end_param()).abs() < 1e-9);
            proptest::prop_assert!((param_convert(&center, &par, center.start_param()).unwrap() - par.start_param()).abs() < 1e-9);
        }
    }
}
