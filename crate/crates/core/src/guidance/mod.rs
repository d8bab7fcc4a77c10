//! Short-term decentralized greedy lane and speed selection.
//!
//! Every invocation builds per-lane inputs from the neighbour table, scores
//! each candidate lane with its achievable speed, and picks the cheapest.

mod neighbors;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::drs::{DroneRoadSystem, SegmentRef, Target};
use crate::geometry::{hex_neighbors, hop_distance, LaneCoord};

pub use neighbors::{dist_from, dist_to, project, NeighborEntry, NeighborTable, Projected, NEIGHBOR_TIMEOUT};
use neighbors::convert_onto;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("invalid guidance parameter: {0}")]
    Param(String),
    #[error("drone references missing lane {lane} on {seg}")]
    MissingLane { seg: String, lane: LaneCoord },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceParams {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Closing point and target hold threshold, m.
    pub eps0: f64,
    /// Nearby-drone window, m.
    pub eps1: f64,
    /// Ahead-drone window for speed adoption, m.
    pub eps2: f64,
    /// Priority margin, m.
    pub eps3: f64,
    pub c_max: f64,
    /// Invocation period while moving, s.
    pub u_normal: f64,
    /// Invocation period while stopped, s.
    pub u_stop: f64,
    /// Lane switch duration, s.
    pub switch_time: f64,
    /// Disabling this removes the priority exemption; only useful for experiments.
    pub priority: bool,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        GuidanceParams {
            kappa1: 10.0,
            kappa2: 30000.0,
            eps0: 30.0,
            eps1: 15.0,
            eps2: 30.0,
            eps3: 3.0,
            c_max: 30000.0,
            u_normal: 2.0,
            u_stop: 0.5,
            switch_time: 1.0,
            priority: true,
        }
    }
}

impl GuidanceParams {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        let positive = [
            ("eps0", self.eps0),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("eps3", self.eps3),
            ("c_max", self.c_max),
            ("u_normal", self.u_normal),
            ("u_stop", self.u_stop),
            ("switch_time", self.switch_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GuidanceError::Param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.eps3 >= self.eps1 {
            return Err(GuidanceError::Param("eps3 must be smaller than eps1".into()));
        }
        if !(self.kappa1 >= 0.0 && self.kappa2 >= 0.0) {
            return Err(GuidanceError::Param("kappa1 and kappa2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// The observing drone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwnState {
    pub seg: SegmentRef,
    pub lane: LaneCoord,
    pub param: f64,
    pub speed: f64,
    pub v_pref: f64,
    pub v_max: f64,
    /// On a merging ramp, the ramp's [`merge_commit_param`] for clearance ε3.
    pub merge_commit: Option<f64>,
}

/// Where the drone has to be on the current segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal {
    pub target: Target,
    /// The target point is a switching point that must not be overshot; this
    /// enables the speed cap and the stop before it.
    pub hold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneInputs {
    pub lane: LaneCoord,
    /// Own parameter converted onto this lane.
    pub converted: f64,
    pub dist_ahead: f64,
    pub v_ahead: f64,
    pub n_same: usize,
    pub n_neigh: usize,
    /// Signed distance to the closest behind drone among the nearby set.
    pub d_nearby: f64,
    pub v_nearby: f64,
    pub v_star: f64,
    pub blocking: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceInputs {
    pub lane: LaneCoord,
    pub param: f64,
    pub speed: f64,
    pub v_pref: f64,
    pub target: Option<Target>,
    pub d_t: Option<f64>,
    pub hold: bool,
    pub candidates: Vec<LaneInputs>,
    /// Speed cap for a ramp drone giving way to merging traffic, m/s.
    pub yield_merge: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceDecision {
    pub lane: LaneCoord,
    pub speed: f64,
}

fn closest_ahead(points: impl IntoIterator<Item = f64>, t: f64) -> f64 {
    points.into_iter().filter(|&p| p > t).map(|p| p - t).fold(f64::INFINITY, f64::min)
}

/// Position cost weight as a function of the distance to the target point.
pub fn f_dist(d: f64) -> f64 {
    if d <= 15.0 {
        20.0
    } else if d <= 30.0 {
        -(2.0 / 3.0) * d + 30.0
    } else {
        300.0 / d
    }
}

pub fn speed_cost(v: f64, v_pref: f64) -> f64 {
    (v_pref - v) * (v_pref - v)
}

pub fn position_cost(c: &LaneInputs, inputs: &GuidanceInputs, p: &GuidanceParams) -> f64 {
    match (inputs.target, inputs.d_t) {
        (Some(t), Some(d)) if !c.blocking => f_dist(d.max(0.0)) * hop_distance(c.lane, t.lane) as f64,
        _ if c.blocking && inputs.target.is_none_or(|t| t.lane != c.lane) => p.c_max,
        _ => 0.0,
    }
}

pub fn has_priority(d_nearby: f64, v: f64, v_nearby: f64, eps3: f64) -> bool {
    d_nearby > eps3 || (d_nearby > 0.0 && d_nearby <= eps3 && v > v_nearby)
}

pub fn collision_cost(c: &LaneInputs, inputs: &GuidanceInputs, p: &GuidanceParams) -> f64 {
    if c.lane == inputs.lane {
        0.0
    } else if c.n_same > 0 {
        p.c_max
    } else if p.priority && has_priority(c.d_nearby, inputs.speed, c.v_nearby, p.eps3) {
        0.0
    } else {
        c.n_neigh as f64
    }
}

/// Speed, position and collision cost of one candidate, unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParts {
    pub speed: f64,
    pub position: f64,
    pub collision: f64,
}

impl CostParts {
    pub fn total(&self, p: &GuidanceParams) -> f64 {
        self.speed + p.kappa1 * self.position + p.kappa2 * self.collision
    }
}

pub fn cost_parts(inputs: &GuidanceInputs, p: &GuidanceParams) -> Vec<CostParts> {
    inputs
        .candidates
        .iter()
        .map(|c| CostParts {
            speed: speed_cost(c.v_star, inputs.v_pref),
            position: position_cost(c, inputs, p),
            collision: collision_cost(c, inputs, p),
        })
        .collect()
}

pub fn total_cost(c: &LaneInputs, inputs: &GuidanceInputs, p: &GuidanceParams) -> f64 {
    speed_cost(c.v_star, inputs.v_pref) + p.kappa1 * position_cost(c, inputs, p) + p.kappa2 * collision_cost(c, inputs, p)
}

/// Builds this invocation's inputs from the drone's state and neighbours.
pub fn compute_inputs(
    drs: &DroneRoadSystem,
    own: &OwnState,
    goal: Option<Goal>,
    neighbors: &[Projected],
    p: &GuidanceParams,
) -> Result<GuidanceInputs, GuidanceError> {
    let seg = own.seg;
    let missing = |lane| GuidanceError::MissingLane { seg: drs.segment_id(seg).to_string(), lane };
    let me = Projected { sender: usize::MAX, seg, lane: own.lane, param: own.param, speed: own.speed };
    let conv = |to: LaneCoord| convert_onto(drs, seg, &me, to).ok_or_else(|| missing(to));
    drs.lane(seg, own.lane).ok_or_else(|| missing(own.lane))?;

    let target = goal.map(|g| g.target);
    let hold = goal.is_some_and(|g| g.hold);
    let d_t = match target {
        Some(t) => Some(t.param - conv(t.lane)?),
        None => None,
    };
    let d_target = if hold { d_t.unwrap_or(f64::INFINITY) } else { f64::INFINITY };
    let exists = |l: LaneCoord| drs.lane(seg, l).is_some();
    let ramp_points = |l: LaneCoord| match seg {
        SegmentRef::Road(r) => drs.ramp_points(r, l),
        SegmentRef::Ramp(_) => Vec::new(),
    };

    let mut lanes = vec![own.lane];
    lanes.extend(hex_neighbors(own.lane).into_iter().filter(|&l| exists(l)));
    let mut candidates = Vec::new();
    for lane in lanes {
        let chain_lane = drs.lane(seg, lane).ok_or_else(|| missing(lane))?;
        let converted = conv(lane)?;
        if !chain_lane.is_open_at(converted.clamp(chain_lane.chain.start_param(), chain_lane.chain.end_param())) {
            continue;
        }
        let next_close = closest_ahead(drs.closing_points(seg, lane), converted);
        let target_first = target.is_some_and(|t| t.lane == lane && t.param - converted < next_close);
        if next_close < p.eps0 && !target_first {
            continue;
        }
        let on_lane = neighbors.iter().filter(|n| n.lane == lane);
        let (mut dist_ahead, mut v_ahead) = (f64::INFINITY, f64::INFINITY);
        for n in on_lane.clone() {
            let d = n.param - converted;
            if d > 0.0 && d < dist_ahead {
                dist_ahead = d;
                v_ahead = n.speed;
            }
        }
        let n_same = on_lane.filter(|n| (converted - n.param).abs() < p.eps1).count();
        let around: Vec<LaneCoord> = hex_neighbors(lane).into_iter().filter(|&l| exists(l)).collect();
        let (mut n_neigh, mut d_nearby, mut v_nearby) = (0, f64::INFINITY, f64::INFINITY);
        for n in neighbors.iter().filter(|n| around.contains(&n.lane)) {
            let Some(their) = convert_onto(drs, seg, n, lane) else { continue };
            let d = converted - their;
            if d.abs() < 2.0 * p.eps1 {
                n_neigh += 1;
                if d < d_nearby {
                    d_nearby = d;
                    v_nearby = n.speed;
                }
            }
        }
        let mut v_star = own.v_pref.min(own.v_max).min(d_target / p.switch_time);
        if dist_ahead <= p.eps2 {
            v_star = v_star.min(v_ahead);
        }
        let blocking = matches!(seg, SegmentRef::Road(_))
            && target.is_none_or(|t| t.lane != lane)
            && closest_ahead(ramp_points(lane), converted) < p.eps0;
        candidates.push(LaneInputs {
            lane,
            converted,
            dist_ahead,
            v_ahead,
            n_same,
            n_neigh,
            d_nearby,
            v_nearby,
            v_star: v_star.max(0.0),
            blocking,
        });
    }

    let yield_merge = match seg {
        SegmentRef::Ramp(k) => merge_yield_cap(drs, k, own, neighbors, p),
        SegmentRef::Road(_) => None,
    };
    Ok(GuidanceInputs {
        lane: own.lane,
        param: own.param,
        speed: own.speed,
        v_pref: own.v_pref,
        target,
        d_t,
        hold,
        candidates,
        yield_merge,
    })
}

/// Last parameter on ramp `k` that is still `clearance` away from the level
/// point of the lane it merges into. `None` for ramps that do not merge.
pub fn merge_commit_param(drs: &DroneRoadSystem, k: usize, clearance: f64) -> Option<f64> {
    let link = drs.ramp_exit_link(k)?;
    let ramp = &drs.ramps[k].lane().chain;
    let road = &drs.lane(SegmentRef::Road(link.road), link.lane)?.chain;
    let sep = |back: f64| -> Option<f64> {
        let p = ramp.point_at(ramp.end_param() - back).ok()?;
        let q = road.point_at((link.param - back).max(road.start_param())).ok()?;
        Some((p - q).norm())
    };
    let (mut lo, mut hi) = (0.0, ramp.length());
    if sep(hi)? < clearance {
        return Some(ramp.start_param());
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if sep(mid)? >= clearance {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(ramp.end_param() - hi)
}

/// A ramp drone with nobody ahead of it on the ramp gives way to merge-lane
/// drones within ε1 of its merge-equivalent position that it has no priority
/// over. It holds at the commit point, the last spot at least ε3 clear of the
/// merge lane, arriving there by the next invocation; past that point it
/// completes the merge.
fn merge_yield_cap(drs: &DroneRoadSystem, k: usize, own: &OwnState, neighbors: &[Projected], p: &GuidanceParams) -> Option<f64> {
    let link = drs.ramp_exit_link(k)?;
    let here = SegmentRef::Ramp(k);
    let to_commit = own.merge_commit? - own.param;
    if to_commit < 0.0 || neighbors.iter().any(|n| n.seg == here && n.param > own.param) {
        return None;
    }
    let conflict = neighbors.iter().filter(|n| n.seg == SegmentRef::Road(link.road)).any(|n| {
        let d = own.param - n.param;
        d.abs() < p.eps1 && !has_priority(d, own.speed, n.speed, p.eps3)
    });
    conflict.then(|| to_commit / p.u_normal)
}

/// Picks among candidates given their total costs.
pub fn choose<R: Rng>(inputs: &GuidanceInputs, costs: &[f64], c_max: f64, rng: &mut R) -> GuidanceDecision {
    let stop = GuidanceDecision { lane: inputs.lane, speed: 0.0 };
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min < c_max) {
        return stop;
    }
    let tied: Vec<usize> = (0..costs.len()).filter(|&k| costs[k] == min).collect();
    let pick = if let Some(&k) = tied.iter().find(|&&k| inputs.candidates[k].lane == inputs.lane) {
        k
    } else {
        let hop = |k: usize| inputs.target.map_or(0, |t| hop_distance(inputs.candidates[k].lane, t.lane));
        let best = tied.iter().map(|&k| hop(k)).min().unwrap_or(0);
        let closest: Vec<usize> = tied.into_iter().filter(|&k| hop(k) == best).collect();
        *closest.choose(rng).expect("at least one tied candidate")
    };
    let c = &inputs.candidates[pick];
    GuidanceDecision { lane: c.lane, speed: c.v_star }
}

/// Full decision: cheapest candidate, then the stop rules.
pub fn decide<R: Rng>(inputs: &GuidanceInputs, p: &GuidanceParams, rng: &mut R) -> GuidanceDecision {
    let costs: Vec<f64> = cost_parts(inputs, p).iter().map(|c| c.total(p)).collect();
    let mut d = choose(inputs, &costs, p.c_max, rng);
    let off_target = inputs.target.is_some_and(|t| t.lane != inputs.lane);
    if inputs.hold && off_target && inputs.d_t.is_some_and(|d_t| d_t < p.eps0) {
        d.speed = 0.0;
    }
    if let Some(cap) = inputs.yield_merge {
        d.speed = d.speed.min(cap);
    }
    d
}

/// Delay until the next invocation; `None` while a lane switch is in progress.
pub fn next_invocation_delay(speed: f64, switching: bool, p: &GuidanceParams) -> Option<f64> {
    if switching {
        None
    } else if speed > 0.0 {
        Some(p.u_normal)
    } else {
        Some(p.u_stop)
    }
}

#[cfg(test)]
mod tests;
