use std::collections::{BTreeMap, BTreeSet};

use super::{Attachment, DeclaredCurve, DroneRoadSystem, DrsError, Lane, Ramp, Road};
use crate::geometry::{ChainedCurve, CubicBezier, LaneCoord, Vec3};

/// A lane to create on a road, with the indices of its closed curves.
#[derive(Debug, Clone)]
pub struct LaneSpec {
    pub coord: LaneCoord,
    pub closed: BTreeSet<usize>,
}

impl LaneSpec {
    pub fn new(coord: LaneCoord, closed: impl IntoIterator<Item = usize>) -> Self {
        LaneSpec { coord, closed: closed.into_iter().collect() }
    }

    pub fn open(coord: LaneCoord) -> Self {
        LaneSpec { coord, closed: BTreeSet::new() }
    }
}

/// Cubic from `p0` heading along `t0` to `p3` arriving along `t3`, with
/// handles a third of the chord long.
pub fn connector(p0: Vec3, t0: Vec3, p3: Vec3, t3: Vec3) -> CubicBezier {
    let h = (p3 - p0).norm() / 3.0;
    CubicBezier::new(p0, p0 + t0.normalize() * h, p3 - t3.normalize() * h, p3)
}

pub(crate) fn lane_id(road: &str, c: LaneCoord) -> String {
    format!("{road}:{}:{}", c.i, c.j)
}

/// Lane whose geometry is the center pieces displaced to lattice point `coord`.
pub(crate) fn make_lane(
    id: String,
    coord: LaneCoord,
    road_id: Option<String>,
    chain_id: String,
    pieces: Vec<(String, CubicBezier)>,
    r: f64,
    closed: BTreeSet<usize>,
) -> Result<Lane, crate::geometry::GeometryError> {
    let chain = ChainedCurve::build(chain_id, pieces, coord.frame_offset(r))?;
    let declared = chain
        .curves
        .iter()
        .map(|c| DeclaredCurve {
            start_param: c.start_param,
            end_param: c.end_param,
            start_point: c.start_point,
            end_point: c.end_point,
        })
        .collect();
    Ok(Lane { id, description: None, coord, road_id, chain, closed, declared, extra: BTreeMap::new() })
}

/// Programmatic construction of a drone road system.
pub struct DrsBuilder {
    name: String,
    version: String,
    r: f64,
    roads: Vec<Road>,
    ramps: Vec<Ramp>,
    error: Option<DrsError>,
}

impl DrsBuilder {
    pub fn new(name: &str, version: &str, lane_radius: f64) -> Self {
        DrsBuilder {
            name: name.into(),
            version: version.into(),
            r: lane_radius,
            roads: Vec::new(),
            ramps: Vec::new(),
            error: None,
        }
    }

    fn fail(&mut self, e: DrsError) {
        if self.error.is_none() {
            self.error = Some(e);
        }
    }

    fn make_road(&self, id: &str, speed: f64, pieces: &[CubicBezier], lanes: Vec<LaneSpec>) -> Result<Road, DrsError> {
        let mut out = Vec::with_capacity(lanes.len());
        for spec in lanes {
            let lid = lane_id(id, spec.coord);
            let named = pieces
                .iter()
                .enumerate()
                .map(|(k, b)| (format!("{lid}:c{k}"), *b))
                .collect();
            if let Some(&k) = spec.closed.iter().find(|&&k| k >= pieces.len()) {
                return Err(DrsError::Invalid {
                    path: format!("Road[{id}]/Lane[{lid}]"),
                    message: format!("closed curve index {k} out of range"),
                });
            }
            let lane = make_lane(lid.clone(), spec.coord, Some(id.into()), format!("{lid}:chain"), named, self.r, spec.closed)
                .map_err(|source| DrsError::Geometry { path: format!("Road[{id}]/Lane[{lid}]"), source })?;
            out.push(lane);
        }
        Ok(Road { id: id.into(), description: None, speed_limit: speed, lanes: out, extra: BTreeMap::new() })
    }

    /// Adds a road built from center-lane pieces; every lane shares the subdivision.
    pub fn road(&mut self, id: &str, speed: f64, pieces: Vec<CubicBezier>, lanes: Vec<LaneSpec>) -> &mut Self {
        match self.make_road(id, speed, &pieces, lanes) {
            Ok(r) => self.roads.push(r),
            Err(e) => self.fail(e),
        }
        self
    }

    /// Adds a single-lane ramp; attachments are (road id, lane, parameter).
    pub fn ramp(
        &mut self,
        id: &str,
        speed: f64,
        pieces: Vec<CubicBezier>,
        entry: Option<(&str, LaneCoord, f64)>,
        exit: Option<(&str, LaneCoord, f64)>,
    ) -> &mut Self {
        let att = |a: Option<(&str, LaneCoord, f64)>| {
            a.map(|(road, lane, param)| Attachment { road: road.into(), lane, param })
        };
        match self.make_road(id, speed, &pieces, vec![LaneSpec::open(LaneCoord::CENTER)]) {
            Ok(road) => self.ramps.push(Ramp {
                id: id.into(),
                description: None,
                road,
                entry: att(entry),
                exit: att(exit),
                extra: BTreeMap::new(),
            }),
            Err(e) => self.fail(e),
        }
        self
    }

    /// Point and unit tangent of an already added road lane at parameter `s`.
    pub fn lane_point(&self, road: &str, coord: LaneCoord, s: f64) -> Option<(Vec3, Vec3)> {
        let lane = self.roads.iter().find(|r| r.id == road)?.lane(coord)?;
        let c = lane.chain.curve_at(s).ok()?;
        Some((c.point_at(s), c.tangent_at(s)))
    }

    /// Length of an already added road lane.
    pub fn lane_length(&self, road: &str, coord: LaneCoord) -> Option<f64> {
        Some(self.roads.iter().find(|r| r.id == road)?.lane(coord)?.length())
    }

    pub fn build(self) -> Result<DroneRoadSystem, DrsError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        DroneRoadSystem::new(self.name, self.version, self.r, self.roads, self.ramps, BTreeMap::new())
    }
}
