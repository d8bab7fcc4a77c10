//! Curve geometry for drone road systems.
//!
//! Lanes are chains of cubic Béziers in chained arc-length
//! parameterization. Parallel lanes of a road sit on a hexagonal lattice in
//! the normal plane of the center lane and are evaluated on the fly from the
//! center curve's moving frame.

mod bezier;
mod curve;
pub mod quad;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use bezier::CubicBezier;
pub use curve::{
    along_lane_distance, arclength_reparam, convert_extrapolated, convert_interval, curve_length,
    normal_frame, parallel_point, param_convert, ChainedCurve, Curve,
};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Derivative norms below this count as a non-regular curve.
pub const REGULARITY_EPS: f64 = 1e-9;
/// `|tangent . z| > 1 - VERTICAL_EPS` means the frame is undefined.
pub const VERTICAL_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate curve: derivative norm {norm:.3e} at t = {t}")]
    Degenerate { t: f64, norm: f64 },
    #[error("moving frame undefined: tangent is vertical")]
    FrameUndefined,
    #[error("parameter {s} outside [{a}, {b}]")]
    OutOfRange { s: f64, a: f64, b: f64 },
    #[error("chains have no curves")]
    EmptyChain,
}

/// Hexagonal lattice coordinate of a lane within its road; (0,0) is the center lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LaneCoord {
    pub i: i32,
    pub j: i32,
}

impl LaneCoord {
    pub const CENTER: LaneCoord = LaneCoord { i: 0, j: 0 };

    pub const fn new(i: i32, j: i32) -> Self {
        LaneCoord { i, j }
    }

    /// Coefficients (f1, f2) of this lattice point on the frame vectors (u1, u2).
    pub fn frame_offset(self, r: f64) -> (f64, f64) {
        let (i, j) = (self.i as f64, self.j as f64);
        let c = (std::f64::consts::PI / 3.0).cos();
        let s = (std::f64::consts::PI / 3.0).sin();
        (2.0 * r * (i + j * c), 2.0 * r * j * s)
    }
}

impl fmt::Display for LaneCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid lane coordinate {0:?}, expected \"(i,j)\"")]
pub struct LaneCoordParseError(pub String);

impl FromStr for LaneCoord {
    type Err = LaneCoordParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || LaneCoordParseError(s.to_string());
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|x| x.strip_suffix(')'))
            .ok_or_else(err)?;
        let mut parts = inner.split(',');
        let i = parts.next().ok_or_else(err)?.trim().parse().map_err(|_| err())?;
        let j = parts.next().ok_or_else(err)?.trim().parse().map_err(|_| err())?;
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(LaneCoord { i, j })
    }
}

/// Minimum number of single-lane lateral switches between two lattice lanes.
pub fn hop_distance(a: LaneCoord, b: LaneCoord) -> u32 {
    let di = a.i as i64 - b.i as i64;
    let dj = a.j as i64 - b.j as i64;
    let d = if di * dj >= 0 {
        di.abs() + dj.abs()
    } else {
        di.abs().max(dj.abs())
    };
    d as u32
}

/// The six lattice lanes one hop away.
pub fn hex_neighbors(a: LaneCoord) -> [LaneCoord; 6] {
    let LaneCoord { i, j } = a;
    [
        LaneCoord::new(i + 1, j),
        LaneCoord::new(i - 1, j),
        LaneCoord::new(i, j + 1),
        LaneCoord::new(i, j - 1),
        LaneCoord::new(i + 1, j - 1),
        LaneCoord::new(i - 1, j + 1),
    ]
}

/// Orthonormal basis of the normal plane at a curve point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub u1: Vec3,
    pub u2: Vec3,
}

impl Frame {
    /// Point at lattice coefficients (f1, f2) relative to `origin`.
    pub fn place(&self, origin: Vec3, f1: f64, f2: f64) -> Vec3 {
        origin + self.u1 * f1 + self.u2 * f2
    }
}

/// Moving frame for a (not necessarily unit) tangent vector.
///
/// An auxiliary basis (w1, w2) of the normal plane is found from the plane
/// equation, pivoting on the largest tangent component; +z is projected onto
/// it to give u1, and u2 = v x u1.
pub fn frame_from_tangent(tangent: Vec3) -> Result<Frame, GeometryError> {
    let n = tangent.norm();
    if n < REGULARITY_EPS {
        return Err(GeometryError::Degenerate { t: f64::NAN, norm: n });
    }
    let v = tangent / n;
    if v.z.abs() > 1.0 - VERTICAL_EPS {
        return Err(GeometryError::FrameUndefined);
    }
    let pivot = (0..3)
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .unwrap_or(0);
    let free = (pivot + 1) % 3;
    let mut w1 = Vec3::zeros();
    w1[free] = 1.0;
    w1[pivot] = -v[free] / v[pivot];
    let w1 = w1.normalize();
    let w2 = v.cross(&w1);
    let z0 = Vec3::z();
    let u1 = (w1 * z0.dot(&w1) + w2 * z0.dot(&w2)).normalize();
    let u2 = v.cross(&u1);
    Ok(Frame { u1, u2 })
}
