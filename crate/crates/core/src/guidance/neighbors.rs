use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use crate::drs::{DroneRoadSystem, SegmentRef};
use crate::geometry::{param_convert, LaneCoord, Vec3};
use crate::radio::Beacon;

/// Neighbour table timeout, s.
pub const NEIGHBOR_TIMEOUT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub sender: usize,
    pub seq: u64,
    /// When the beacon was generated, s.
    pub timestamp: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub seg: SegmentRef,
    pub lane: LaneCoord,
    pub param: f64,
}

impl NeighborEntry {
    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Last-heard state of other drones, keyed by sender.
#[derive(Debug, Clone, Default)]
pub struct NeighborTable {
    entries: BTreeMap<usize, NeighborEntry>,
}

impl NeighborTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a beacon unless a newer one from the same sender is already held.
    pub fn update(&mut self, b: &Beacon) {
        let fresh = NeighborEntry {
            sender: b.sender,
            seq: b.seq,
            timestamp: b.time,
            position: b.position,
            velocity: b.velocity,
            seg: b.seg,
            lane: b.lane,
            param: b.param,
        };
        match self.entries.entry(b.sender) {
            Entry::Occupied(mut e) => {
                if e.get().seq < b.seq {
                    e.insert(fresh);
                }
            }
            Entry::Vacant(e) => {
                e.insert(fresh);
            }
        }
    }

    /// Drops entries older than `timeout`.
    pub fn scrub(&mut self, now: f64, timeout: f64) {
        self.entries.retain(|_, e| now - e.timestamp <= timeout);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, sender: usize) -> Option<&NeighborEntry> {
        self.entries.get(&sender)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeighborEntry> {
        self.entries.values()
    }
}

/// A neighbour expressed on a lane of the observer's segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub sender: usize,
    /// Segment the neighbour is actually on.
    pub seg: SegmentRef,
    pub lane: LaneCoord,
    pub param: f64,
    pub speed: f64,
}

/// Places a neighbour on a lane of segment `seg`.
///
/// Neighbours on the same segment keep their lane and parameter. A neighbour
/// one ramp attachment away is placed on the attached lane at the parameter
/// reached by adding its distance to the connection point. Only traffic that
/// shares the observer's path counts: drones upstream of a merge, drones on
/// the merge road, and drones that left the observer's lane by ramp less than
/// two lane radii ago. Anything else returns `None`.
pub fn project(drs: &DroneRoadSystem, seg: SegmentRef, e: &NeighborEntry) -> Option<Projected> {
    let at = |lane, param| Some(Projected { sender: e.sender, seg: e.seg, lane, param, speed: e.speed() });
    if e.seg == seg {
        return at(e.lane, e.param);
    }
    match (seg, e.seg) {
        (SegmentRef::Road(r), SegmentRef::Ramp(k)) => {
            let chain = &drs.ramps[k].lane().chain;
            if let Some(l) = drs.ramp_exit_link(k).filter(|l| l.road == r) {
                return at(l.lane, l.param - (chain.end_param() - e.param));
            }
            let gone = e.param - chain.start_param();
            if let Some(l) = drs.ramp_entry_link(k).filter(|l| l.road == r && gone < 2.0 * drs.lane_radius) {
                return at(l.lane, l.param + gone);
            }
            None
        }
        (SegmentRef::Ramp(k), SegmentRef::Road(r)) => {
            let lane = drs.ramps[k].lane();
            if let Some(l) = drs.ramp_exit_link(k).filter(|l| l.road == r && l.lane == e.lane) {
                return at(lane.coord, lane.chain.end_param() + (e.param - l.param));
            }
            if let Some(l) = drs.ramp_entry_link(k).filter(|l| l.road == r && l.lane == e.lane && e.param <= l.param) {
                return at(lane.coord, lane.chain.start_param() + (e.param - l.param));
            }
            None
        }
        _ => None,
    }
}

/// Parameter of a projected neighbour converted onto lane `to` of `seg`.
pub(crate) fn convert_onto(drs: &DroneRoadSystem, seg: SegmentRef, p: &Projected, to: LaneCoord) -> Option<f64> {
    if p.lane == to {
        return Some(p.param);
    }
    let (a, b) = (drs.lane(seg, p.lane)?, drs.lane(seg, to)?);
    let s = p.param.clamp(a.chain.start_param(), a.chain.end_param());
    let c = param_convert(&a.chain, &b.chain, s).ok()?;
    // keep the overhang of positions projected past either end
    Some(c + (p.param - s))
}

/// Signed distance along the sender's lane from the observer's converted
/// position to the sender; positive when the sender is ahead.
pub fn dist_to(drs: &DroneRoadSystem, seg: SegmentRef, own_lane: LaneCoord, own_param: f64, e: &NeighborEntry) -> Option<f64> {
    let p = project(drs, seg, e)?;
    let me = Projected { sender: usize::MAX, seg, lane: own_lane, param: own_param, speed: 0.0 };
    Some(p.param - convert_onto(drs, seg, &me, p.lane)?)
}

/// Signed distance along the observer's lane from the observer to the
/// sender's converted position; positive when the sender is ahead.
pub fn dist_from(drs: &DroneRoadSystem, seg: SegmentRef, own_lane: LaneCoord, own_param: f64, e: &NeighborEntry) -> Option<f64> {
    let p = project(drs, seg, e)?;
    Some(convert_onto(drs, seg, &p, own_lane)? - own_param)
}
