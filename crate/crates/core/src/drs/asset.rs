//! Generator for the bundled intersection system (`assets/intersection.drsx`).

use super::{connector, DroneRoadSystem, DrsBuilder, DrsError, LaneSpec};
use crate::geometry::{hex_neighbors, CubicBezier, LaneCoord, Vec3};

/// Header comment written into the bundled asset.
pub const INTERSECTION_NOTE: &str = "\
Four-road intersection with seven connecting ramps.

Every road has seven lanes: the center lane and its six lattice neighbours,
lane radius 10 m, speed limit 15 m/s. Roads are straight, each built from
two curves so that one end can be closed:

  A  inbound from the west, +x along y=0 at z=100, x -900..-100;
     the last 100 m are closed on all lanes, so A can only be left by ramp.
  B  inbound from the south, +y along x=0 at z=200, y -900..-100;
     the last 100 m are closed on all lanes.
  C  through road, +x along y=0 at z=300, x -900..700, open everywhere.
  D  outbound to the north, +y along x=0 at z=500, y 0..900;
     the first 100 m are closed, so D can only be entered by ramp.

This gives 21 entry lanes (A, B and C starts) and 14 exit lanes (C and D
ends). Ramps are single cubics tangent to the lanes they join and attach
to outer lanes on the side they turn towards:

  AC1  A(1,0)@100   -> C(-1,0)@400
  AC2  A(0,1)@400   -> C(-1,1)@700
  AD   A(1,-1)@600  -> D(0,-1)@400
  BC   B(0,1)@300   -> C(-1,1)@1500
  BD1  B(1,0)@450   -> D(-1,0)@300
  BD2  B(0,1)@550   -> D(-1,1)@200
  CD   C(1,-1)@800  -> D(0,-1)@250

Ramps stay more than 15 m away from every lane and ramp they do not attach to.

Lane geometry beyond the road/ramp topology (lengths, altitudes, attachment
points) is a modelling choice.";

/// The bundled asset as shipped, byte for byte.
pub const INTERSECTION_XML: &str = include_str!("../../assets/intersection.drsx");

const SPEED: f64 = 15.0;
const R: f64 = 10.0;

fn seven_lanes(closed: &[usize]) -> Vec<LaneSpec> {
    std::iter::once(LaneCoord::CENTER)
        .chain(hex_neighbors(LaneCoord::CENTER))
        .map(|c| LaneSpec::new(c, closed.iter().copied()))
        .collect()
}

fn straight(points: &[Vec3]) -> Vec<CubicBezier> {
    points.windows(2).map(|w| CubicBezier::line(w[0], w[1])).collect()
}

/// Builds the bundled intersection system.
pub fn intersection() -> Result<DroneRoadSystem, DrsError> {
    let v = Vec3::new;
    let mut b = DrsBuilder::new("intersection", "1", R);
    b.road("A", SPEED, straight(&[v(-900.0, 0.0, 100.0), v(-200.0, 0.0, 100.0), v(-100.0, 0.0, 100.0)]), seven_lanes(&[1]));
    b.road("B", SPEED, straight(&[v(0.0, -900.0, 200.0), v(0.0, -200.0, 200.0), v(0.0, -100.0, 200.0)]), seven_lanes(&[1]));
    b.road("C", SPEED, straight(&[v(-900.0, 0.0, 300.0), v(0.0, 0.0, 300.0), v(700.0, 0.0, 300.0)]), seven_lanes(&[]));
    b.road("D", SPEED, straight(&[v(0.0, 0.0, 500.0), v(0.0, 100.0, 500.0), v(0.0, 900.0, 500.0)]), seven_lanes(&[0]));
    let ramps: [(&str, &str, (i32, i32), f64, &str, (i32, i32), f64); 7] = [
        ("AC1", "A", (1, 0), 100.0, "C", (-1, 0), 400.0),
        ("AC2", "A", (0, 1), 400.0, "C", (-1, 1), 700.0),
        ("AD", "A", (1, -1), 600.0, "D", (0, -1), 400.0),
        ("BC", "B", (0, 1), 300.0, "C", (-1, 1), 1500.0),
        ("BD1", "B", (1, 0), 450.0, "D", (-1, 0), 300.0),
        ("BD2", "B", (0, 1), 550.0, "D", (-1, 1), 200.0),
        ("CD", "C", (1, -1), 800.0, "D", (0, -1), 250.0),
    ];
    for (id, from, (fi, fj), p, to, (ti, tj), q) in ramps {
        let (fl, tl) = (LaneCoord::new(fi, fj), LaneCoord::new(ti, tj));
        let missing = |road: &str, c: LaneCoord| DrsError::Invalid {
            path: format!("Ramp[{id}]"),
            message: format!("no lane {c} on road {road}"),
        };
        let (p0, t0) = b.lane_point(from, fl, p).ok_or_else(|| missing(from, fl))?;
        let (p3, t3) = b.lane_point(to, tl, q).ok_or_else(|| missing(to, tl))?;
        b.ramp(id, SPEED, vec![connector(p0, t0, p3, t3)], Some((from, fl, p)), Some((to, tl, q)));
    }
    b.build()
}
