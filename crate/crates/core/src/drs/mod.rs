//! Drone road systems: roads of hex-lattice lanes, ramps, XML I/O,
//! validation and route planning.

pub mod asset;
mod builder;
mod route;
mod validate;
mod xml;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::geometry::{ChainedCurve, GeometryError, LaneCoord, Vec3};

pub use builder::{connector, DrsBuilder, LaneSpec};
pub use route::{
    build_route_graph, plan_from, plan_path, EdgeKind, GraphEdge, GraphNode, NodeId, RouteGraph,
    RoutePlan, RouteSegment, SegmentExit, Target,
};
pub use validate::{validate_drs, Finding, FindingKind};
pub use xml::{parse_drs, parse_drs_with_radius, to_xml, to_xml_with_comment};

/// Default lane radius when the document does not carry one.
pub const DEFAULT_LANE_RADIUS: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrsError {
    #[error("XML error: {0}")]
    Xml(String),
    #[error("{path}: missing mandatory attribute {attr}")]
    MissingAttribute { path: String, attr: String },
    #[error("{path}: missing element {element}")]
    MissingElement { path: String, element: String },
    #[error("{path}: malformed value {value:?} for {attr}")]
    BadValue { path: String, attr: String, value: String },
    #[error("{path}: {attr} refers to unknown {value:?}")]
    Dangling { path: String, attr: String, value: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Geometry { path: String, source: GeometryError },
    #[error("no route from {from} to {to}")]
    NoRoute { from: String, to: String },
}

/// Road or ramp, by index into [`DroneRoadSystem::roads`] / [`DroneRoadSystem::ramps`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentRef {
    Road(usize),
    Ramp(usize),
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub id: String,
    pub description: Option<String>,
    pub coord: LaneCoord,
    /// Declared owning road, if the document gives one.
    pub road_id: Option<String>,
    pub chain: ChainedCurve,
    pub closed: BTreeSet<usize>,
    /// Parameters and end points as written in the document, per curve.
    pub declared: Vec<DeclaredCurve>,
    pub extra: BTreeMap<String, String>,
}

/// Curve attributes as read from a document, kept for consistency checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DeclaredCurve {
    pub start_param: f64,
    pub end_param: f64,
    pub start_point: Vec3,
    pub end_point: Vec3,
}

// declared values are document noise; equality is on the resolved geometry
impl PartialEq for Lane {
    fn eq(&self, o: &Self) -> bool {
        self.id == o.id
            && self.description == o.description
            && self.coord == o.coord
            && self.road_id == o.road_id
            && self.chain == o.chain
            && self.closed == o.closed
            && self.extra == o.extra
    }
}

impl Lane {
    pub fn length(&self) -> f64 {
        self.chain.length()
    }

    pub fn is_closed_curve(&self, k: usize) -> bool {
        self.closed.contains(&k)
    }

    /// True when `s` lies on an open curve (joint points count as open if either side is).
    pub fn is_open_at(&self, s: f64) -> bool {
        let curves = &self.chain.curves;
        curves
            .iter()
            .enumerate()
            .any(|(k, c)| !self.closed.contains(&k) && c.contains(s))
    }

    /// True when the whole interval `[a, b]` is open.
    pub fn is_open_between(&self, a: f64, b: f64) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.chain.curves.iter().enumerate().all(|(k, c)| {
            !self.closed.contains(&k) || c.end_param <= lo + 1e-9 || c.start_param >= hi - 1e-9
        })
    }

    /// Parameters where a run of closed curves begins, ascending.
    pub fn closing_points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, c) in self.chain.curves.iter().enumerate() {
            if self.closed.contains(&k) && (k == 0 || !self.closed.contains(&(k - 1))) {
                out.push(c.start_param);
            }
        }
        out
    }

    /// Parameters where a run of closed curves ends and the lane reopens, ascending.
    pub fn reopening_points(&self) -> Vec<f64> {
        let n = self.chain.curves.len();
        let mut out = Vec::new();
        for (k, c) in self.chain.curves.iter().enumerate() {
            if self.closed.contains(&k) && k + 1 < n && !self.closed.contains(&(k + 1)) {
                out.push(c.end_param);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub id: String,
    pub description: Option<String>,
    /// m/s
    pub speed_limit: f64,
    pub lanes: Vec<Lane>,
    pub extra: BTreeMap<String, String>,
}

impl Road {
    pub fn lane(&self, coord: LaneCoord) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.coord == coord)
    }

    pub fn center(&self) -> Option<&Lane> {
        self.lane(LaneCoord::CENTER)
    }
}

/// Where a ramp end meets a road lane.
#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub road: String,
    pub lane: LaneCoord,
    pub param: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampKind {
    OnRamp,
    OffRamp,
    Connecting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ramp {
    pub id: String,
    pub description: Option<String>,
    /// Single-lane road holding the ramp geometry.
    pub road: Road,
    pub entry: Option<Attachment>,
    pub exit: Option<Attachment>,
    pub extra: BTreeMap<String, String>,
}

impl Ramp {
    pub fn kind(&self) -> RampKind {
        match (&self.entry, &self.exit) {
            (Some(_), Some(_)) => RampKind::Connecting,
            (None, _) => RampKind::OnRamp,
            (Some(_), None) => RampKind::OffRamp,
        }
    }

    pub fn lane(&self) -> &Lane {
        &self.road.lanes[0]
    }

    pub fn length(&self) -> f64 {
        self.lane().length()
    }
}

/// A ramp attachment resolved to indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub ramp: usize,
    pub road: usize,
    pub lane: LaneCoord,
    pub param: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneRoadSystem {
    pub name: String,
    pub version: String,
    pub lane_radius: f64,
    pub roads: Vec<Road>,
    pub ramps: Vec<Ramp>,
    pub extra: BTreeMap<String, String>,
    road_index: HashMap<String, usize>,
    ramp_index: HashMap<String, usize>,
    /// Outgoing ramp links per road, sorted by parameter.
    out_links: Vec<Vec<Link>>,
    /// Incoming ramp links per road, sorted by parameter.
    in_links: Vec<Vec<Link>>,
}

impl DroneRoadSystem {
    /// Assemble and cross-check a system; attachments must resolve.
    pub fn new(
        name: String,
        version: String,
        lane_radius: f64,
        roads: Vec<Road>,
        ramps: Vec<Ramp>,
        extra: BTreeMap<String, String>,
    ) -> Result<DroneRoadSystem, DrsError> {
        if roads.is_empty() {
            return Err(DrsError::MissingElement {
                path: "DroneRoadSystem".into(),
                element: "Road".into(),
            });
        }
        let mut road_index = HashMap::new();
        for (k, r) in roads.iter().enumerate() {
            if road_index.insert(r.id.clone(), k).is_some() {
                return Err(DrsError::Invalid {
                    path: format!("DroneRoadSystem/Road[{}]", r.id),
                    message: "duplicate road identifier".into(),
                });
            }
        }
        let mut ramp_index = HashMap::new();
        for (k, r) in ramps.iter().enumerate() {
            if ramp_index.insert(r.id.clone(), k).is_some() || road_index.contains_key(&r.id) {
                return Err(DrsError::Invalid {
                    path: format!("DroneRoadSystem/Ramp[{}]", r.id),
                    message: "duplicate identifier".into(),
                });
            }
        }
        let mut out_links = vec![Vec::new(); roads.len()];
        let mut in_links = vec![Vec::new(); roads.len()];
        for (k, ramp) in ramps.iter().enumerate() {
            let path = format!("DroneRoadSystem/Ramp[{}]", ramp.id);
            if ramp.entry.is_none() && ramp.exit.is_none() {
                return Err(DrsError::Invalid {
                    path,
                    message: "ramp must attach to at least one road".into(),
                });
            }
            for (att, prefix, list) in [
                (&ramp.entry, "Entry", &mut out_links),
                (&ramp.exit, "Exit", &mut in_links),
            ] {
                let Some(att) = att else { continue };
                let road = *road_index.get(&att.road).ok_or_else(|| DrsError::Dangling {
                    path: path.clone(),
                    attr: format!("{prefix}RoadIdentifier"),
                    value: att.road.clone(),
                })?;
                let lane = roads[road].lane(att.lane).ok_or_else(|| DrsError::Dangling {
                    path: path.clone(),
                    attr: format!("{prefix}LaneIdentifier"),
                    value: att.lane.to_string(),
                })?;
                if !lane.chain.contains(att.param) {
                    return Err(DrsError::Invalid {
                        path: path.clone(),
                        message: format!(
                            "{prefix}LaneParameter {} outside lane range [{}, {}]",
                            att.param,
                            lane.chain.start_param(),
                            lane.chain.end_param()
                        ),
                    });
                }
                list[road].push(Link { ramp: k, road, lane: att.lane, param: att.param });
            }
        }
        for l in out_links.iter_mut().chain(in_links.iter_mut()) {
            l.sort_by(|a, b| a.param.total_cmp(&b.param).then(a.ramp.cmp(&b.ramp)));
        }
        Ok(DroneRoadSystem {
            name,
            version,
            lane_radius,
            roads,
            ramps,
            extra,
            road_index,
            ramp_index,
            out_links,
            in_links,
        })
    }

    pub fn road_by_id(&self, id: &str) -> Option<usize> {
        self.road_index.get(id).copied()
    }

    pub fn ramp_by_id(&self, id: &str) -> Option<usize> {
        self.ramp_index.get(id).copied()
    }

    pub fn segment_id(&self, seg: SegmentRef) -> &str {
        match seg {
            SegmentRef::Road(k) => &self.roads[k].id,
            SegmentRef::Ramp(k) => &self.ramps[k].id,
        }
    }

    pub fn segment_by_id(&self, id: &str) -> Option<SegmentRef> {
        self.road_by_id(id)
            .map(SegmentRef::Road)
            .or_else(|| self.ramp_by_id(id).map(SegmentRef::Ramp))
    }

    pub fn lane(&self, seg: SegmentRef, coord: LaneCoord) -> Option<&Lane> {
        match seg {
            SegmentRef::Road(k) => self.roads.get(k)?.lane(coord),
            SegmentRef::Ramp(k) => {
                let r = self.ramps.get(k)?;
                (coord == r.lane().coord).then(|| r.lane())
            }
        }
    }

    /// Lane coordinates drones may use on a segment.
    pub fn lane_coords(&self, seg: SegmentRef) -> Vec<LaneCoord> {
        match seg {
            SegmentRef::Road(k) => self.roads[k].lanes.iter().map(|l| l.coord).collect(),
            SegmentRef::Ramp(k) => vec![self.ramps[k].lane().coord],
        }
    }

    pub fn speed_limit(&self, seg: SegmentRef) -> f64 {
        match seg {
            SegmentRef::Road(k) => self.roads[k].speed_limit,
            SegmentRef::Ramp(k) => self.ramps[k].road.speed_limit,
        }
    }

    /// Ramps leaving road `road`, sorted by parameter.
    pub fn outgoing(&self, road: usize) -> &[Link] {
        &self.out_links[road]
    }

    /// Ramps merging into road `road`, sorted by parameter.
    pub fn incoming(&self, road: usize) -> &[Link] {
        &self.in_links[road]
    }

    /// Parameters on `lane` of `road` where outgoing ramps attach, ascending.
    pub fn ramp_points(&self, road: usize, lane: LaneCoord) -> Vec<f64> {
        self.out_links[road]
            .iter()
            .filter(|l| l.lane == lane)
            .map(|l| l.param)
            .collect()
    }

    /// Parameters on a lane where closed stretches begin, ascending.
    pub fn closing_points(&self, seg: SegmentRef, lane: LaneCoord) -> Vec<f64> {
        self.lane(seg, lane).map(|l| l.closing_points()).unwrap_or_default()
    }

    /// Resolved outgoing link of a ramp (where it leaves a road), if any.
    pub fn ramp_entry_link(&self, ramp: usize) -> Option<Link> {
        let att = self.ramps[ramp].entry.as_ref()?;
        let road = self.road_by_id(&att.road)?;
        Some(Link { ramp, road, lane: att.lane, param: att.param })
    }

    /// Resolved incoming link of a ramp (where it merges into a road), if any.
    pub fn ramp_exit_link(&self, ramp: usize) -> Option<Link> {
        let att = self.ramps[ramp].exit.as_ref()?;
        let road = self.road_by_id(&att.road)?;
        Some(Link { ramp, road, lane: att.lane, param: att.param })
    }

    /// All entry points: open lane starts and on-ramp starts.
    pub fn entry_points(&self) -> Vec<(SegmentRef, LaneCoord, f64)> {
        let mut out = Vec::new();
        for (k, road) in self.roads.iter().enumerate() {
            for lane in &road.lanes {
                if !lane.is_closed_curve(0) {
                    out.push((SegmentRef::Road(k), lane.coord, lane.chain.start_param()));
                }
            }
        }
        for (k, ramp) in self.ramps.iter().enumerate() {
            if ramp.kind() == RampKind::OnRamp {
                out.push((SegmentRef::Ramp(k), ramp.lane().coord, ramp.lane().chain.start_param()));
            }
        }
        out
    }

    /// All exit points: open lane ends and off-ramp ends.
    pub fn exit_points(&self) -> Vec<(SegmentRef, LaneCoord, f64)> {
        let mut out = Vec::new();
        for (k, road) in self.roads.iter().enumerate() {
            for lane in &road.lanes {
                let last = lane.chain.curves.len() - 1;
                if !lane.is_closed_curve(last) {
                    out.push((SegmentRef::Road(k), lane.coord, lane.chain.end_param()));
                }
            }
        }
        for (k, ramp) in self.ramps.iter().enumerate() {
            if ramp.kind() == RampKind::OffRamp {
                out.push((SegmentRef::Ramp(k), ramp.lane().coord, ramp.lane().chain.end_param()));
            }
        }
        out
    }

    /// 3D position on a lane.
    pub fn position(&self, seg: SegmentRef, lane: LaneCoord, s: f64) -> Option<Vec3> {
        let l = self.lane(seg, lane)?;
        let s = s.clamp(l.chain.start_param(), l.chain.end_param());
        l.chain.point_at(s).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CubicBezier;

    fn x(v: f64) -> Vec3 {
        Vec3::new(v, 0.0, 100.0)
    }

    #[test]
    fn closing_points_from_closed_runs() {
        let mut b = DrsBuilder::new("t", "1", 10.0);
        b.road(
            "A",
            15.0,
            vec![
                CubicBezier::line(x(0.0), x(60.0)),
                CubicBezier::line(x(60.0), x(120.0)),
                CubicBezier::line(x(120.0), x(180.0)),
                CubicBezier::line(x(180.0), x(200.0)),
            ],
            vec![LaneSpec::new(LaneCoord::CENTER, [2])],
        );
        let drs = b.build().unwrap();
        let lane = drs.roads[0].center().unwrap();
        let close = lane.closing_points();
        let reopen = lane.reopening_points();
        assert_eq!((close.len(), reopen.len()), (1, 1));
        assert!((close[0] - 120.0).abs() < 1e-9 && (reopen[0] - 180.0).abs() < 1e-9);
        assert!(lane.is_open_at(120.0) && lane.is_open_at(180.0));
        assert!(!lane.is_open_at(150.0));
        assert!(!lane.is_open_between(100.0, 130.0));
        assert!(lane.is_open_between(0.0, 120.0));
        assert!(drs.ramp_points(0, LaneCoord::CENTER).is_empty());
    }

    #[test]
    fn ramp_points_sorted() {
        let mut b = DrsBuilder::new("t", "1", 10.0);
        b.road("A", 15.0, vec![CubicBezier::line(x(0.0), x(1000.0))], vec![LaneSpec::open(LaneCoord::CENTER)]);
        for (id, p) in [("late", 700.0), ("early", 300.0)] {
            let (start, _) = b.lane_point("A", LaneCoord::CENTER, p).unwrap();
            let end = start + Vec3::new(100.0, 100.0, 0.0);
            b.ramp(
                id,
                15.0,
                vec![connector(start, Vec3::x(), end, Vec3::y())],
                Some(("A", LaneCoord::CENTER, p)),
                None,
            );
        }
        let drs = b.build().unwrap();
        assert_eq!(drs.ramp_points(0, LaneCoord::CENTER), vec![300.0, 700.0]);
        assert_eq!(drs.ramps[0].kind(), RampKind::OffRamp);
    }
}
