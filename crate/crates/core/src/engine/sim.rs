use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rustc_hash::FxHashMap;

use super::{EngineError, LogRecord, RunOutput, SecondBin, SimConfig, Totals};
use crate::drs::{build_route_graph, plan_from, plan_path, DroneRoadSystem, NodeId, RouteGraph, RoutePlan, SegmentExit, SegmentRef};
use crate::geometry::{param_convert, LaneCoord, Vec3};
use crate::guidance::{compute_inputs, decide, merge_commit_param, next_invocation_delay, project, Goal, NeighborTable, OwnState};
use crate::radio::{Beacon, Channel, Delivery, RadioEvent, RadioMode};

/// Closest-approach checks consider pairs within this distance at tick end, m.
const COLLISION_CELL: f64 = 5.0;

/// Beacon intervals a generated drone listens for before its first decision.
const LISTEN_INTERVALS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Cruising,
    Switching { from: LaneCoord, to: LaneCoord, progress: f64 },
    Stopped,
}

/// Read-only snapshot of one drone.
#[derive(Debug, Clone, PartialEq)]
pub struct DroneView {
    pub id: usize,
    pub seg: SegmentRef,
    pub lane: LaneCoord,
    pub param: f64,
    pub speed: f64,
    pub v_pref: f64,
    pub phase: Phase,
    pub position: Vec3,
    pub neighbors: usize,
}

/// Hand placement of a drone, bypassing generation and the clearance check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spawn {
    pub seg: SegmentRef,
    pub lane: LaneCoord,
    pub param: f64,
    /// Exit point the drone is routed to.
    pub exit: (SegmentRef, LaneCoord, f64),
    pub v_pref: f64,
    /// Delay before the first guidance invocation; the drone hovers until then.
    pub invoke_after: f64,
}

#[derive(Debug, Clone, Copy)]
struct Switch {
    from: LaneCoord,
    to: LaneCoord,
    elapsed: f64,
}

#[derive(Debug)]
struct Drone {
    route: RoutePlan,
    leg: usize,
    dest: NodeId,
    seg: SegmentRef,
    lane: LaneCoord,
    param: f64,
    speed: f64,
    v_pref: f64,
    switch: Option<Switch>,
    table: NeighborTable,
    seq: u64,
    token: u64,
    pos: Vec3,
    prev: Vec3,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Radio(RadioEvent),
    Beacon(usize),
    Invoke { drone: usize, token: u64 },
    Generate(usize),
}

impl Ev {
    /// Tie-break between events at the same instant.
    fn class(&self) -> u8 {
        match self {
            Ev::Radio(RadioEvent::FrameEnd { .. }) => 0,
            Ev::Radio(RadioEvent::MacTry { .. }) => 1,
            Ev::Beacon(_) => 2,
            Ev::Invoke { .. } => 3,
            Ev::Generate(_) => 4,
        }
    }
}

struct Queued {
    t: f64,
    class: u8,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        // reversed: the heap pops the earliest event
        o.t.total_cmp(&self.t).then(o.class.cmp(&self.class)).then(o.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

struct Rngs {
    arrivals: ChaCha8Rng,
    routes: ChaCha8Rng,
    beacons: ChaCha8Rng,
    mac: ChaCha8Rng,
    guidance: ChaCha8Rng,
}

impl Rngs {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Rngs { arrivals: stream(1), routes: stream(2), beacons: stream(3), mac: stream(4), guidance: stream(5) }
    }
}

/// One simulation run over a road system.
pub struct Simulation<'a> {
    drs: &'a DroneRoadSystem,
    cfg: SimConfig,
    graph: RouteGraph,
    entries: Vec<(SegmentRef, LaneCoord, f64)>,
    /// Per entry, every reachable exit node with its route.
    routes: Vec<Vec<(NodeId, RoutePlan)>>,
    exits: Vec<NodeId>,
    /// Per ramp, where a merging drone commits to the merge.
    merge_commits: Vec<Option<f64>>,
    drones: Vec<Option<Drone>>,
    active: Vec<usize>,
    channel: Channel,
    queue: BinaryHeap<Queued>,
    seq: u64,
    tick: u64,
    rng: Rngs,
    totals: Totals,
    series: Vec<SecondBin>,
    bin_ic: u64,
    bin_ac: u64,
    events: Vec<LogRecord>,
    arrival_gap: Option<Exp<f64>>,
}

impl<'a> Simulation<'a> {
    pub fn new(drs: &'a DroneRoadSystem, cfg: SimConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let graph = build_route_graph(drs);
        let entries = drs.entry_points();
        let exits: Vec<NodeId> = graph.exit_nodes(drs);
        let mut routes = Vec::with_capacity(entries.len());
        for &(seg, lane, param) in &entries {
            let from = graph.node_at(seg, lane, param).ok_or_else(|| EngineError::Config(format!(
                "entry {} {lane} @ {param} has no route graph node",
                drs.segment_id(seg)
            )))?;
            routes.push(exits.iter().filter_map(|&to| plan_path(drs, &graph, from, to).ok().map(|p| (to, p))).collect());
        }
        let arrival_gap = if cfg.generation_rate > 0.0 {
            Some(Exp::new(cfg.generation_rate).map_err(|e| EngineError::Config(e.to_string()))?)
        } else {
            None
        };
        let merge_commits = (0..drs.ramps.len()).map(|k| merge_commit_param(drs, k, cfg.guidance.eps3)).collect();
        Ok(Simulation {
            drs,
            merge_commits,
            channel: Channel::new(cfg.radio.clone()),
            rng: Rngs::new(cfg.seed),
            cfg,
            graph,
            entries,
            routes,
            exits,
            drones: Vec::new(),
            active: Vec::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            tick: 0,
            totals: Totals::default(),
            series: Vec::new(),
            bin_ic: 0,
            bin_ac: 0,
            events: Vec::new(),
            arrival_gap,
        })
    }

    pub fn now(&self) -> f64 {
        self.tick as f64 * self.cfg.dt
    }

    pub fn totals(&self) -> &Totals {
        &self.totals
    }

    pub fn events(&self) -> &[LogRecord] {
        &self.events
    }

    pub fn active_ids(&self) -> &[usize] {
        &self.active
    }

    pub fn drone(&self, id: usize) -> Option<DroneView> {
        let d = self.drones.get(id)?.as_ref()?;
        let phase = match d.switch {
            Some(s) => Phase::Switching { from: s.from, to: s.to, progress: s.elapsed / self.cfg.guidance.switch_time },
            None if d.speed == 0.0 => Phase::Stopped,
            None => Phase::Cruising,
        };
        Some(DroneView {
            id,
            seg: d.seg,
            lane: d.lane,
            param: d.param,
            speed: d.speed,
            v_pref: d.v_pref,
            phase,
            position: d.pos,
            neighbors: d.table.len(),
        })
    }

    fn push(&mut self, t: f64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Queued { t, class: ev.class(), seq: self.seq, ev });
    }

    fn log(&mut self, r: impl FnOnce() -> LogRecord) {
        if self.cfg.event_log {
            self.events.push(r());
        }
    }

    /// Schedules the first generation event on every entry lane.
    pub fn start_generation(&mut self) {
        let Some(gap) = self.arrival_gap else { return };
        for e in 0..self.entries.len() {
            let t = gap.sample(&mut self.rng.arrivals);
            self.push(t, Ev::Generate(e));
        }
    }

    pub fn spawn(&mut self, s: Spawn) -> Result<usize, EngineError> {
        let (es, el, ep) = s.exit;
        let dest = self.graph.node_at(es, el, ep).ok_or_else(|| EngineError::Config(format!(
            "spawn exit {} {el} @ {ep} is not an exit node",
            self.drs.segment_id(es)
        )))?;
        let plan = plan_from(self.drs, &self.graph, s.seg, s.lane, s.param, dest)?;
        let now = self.now();
        Ok(self.inject(s.seg, s.lane, s.param, plan, dest, s.v_pref, now + s.invoke_after))
    }

    fn inject(&mut self, seg: SegmentRef, lane: LaneCoord, param: f64, route: RoutePlan, dest: NodeId, v_pref: f64, invoke_at: f64) -> usize {
        let id = self.drones.len();
        let pos = self.drs.position(seg, lane, param).unwrap_or_else(Vec3::zeros);
        self.drones.push(Some(Drone {
            route,
            leg: 0,
            dest,
            seg,
            lane,
            param,
            speed: 0.0,
            v_pref,
            switch: None,
            table: NeighborTable::new(),
            seq: 0,
            token: 1,
            pos,
            prev: pos,
        }));
        self.active.push(id);
        self.channel.add_node(id, pos);
        let now = self.now();
        let phase = self.rng.beacons.gen_range(0.0..1.0) / self.cfg.radio.beacon_rate;
        self.push(now + phase, Ev::Beacon(id));
        self.push(invoke_at, Ev::Invoke { drone: id, token: 1 });
        self.totals.injected += 1;
        self.bin_ic += 1;
        let seg_id = self.drs.segment_id(seg).to_string();
        self.log(|| LogRecord::Injection { t: now, drone: id, seg: seg_id, lane: lane.to_string(), param, v_pref });
        id
    }

    fn clear_to_inject(&self, seg: SegmentRef, lane: LaneCoord, param: f64) -> bool {
        let Some(p) = self.drs.position(seg, lane, param) else { return false };
        let eps2 = self.cfg.guidance.eps2;
        // lattice neighbours sit exactly 2r away; only closer drones block
        let clearance = 2.0 * self.drs.lane_radius - 1e-6;
        self.active.iter().filter_map(|&id| self.drones[id].as_ref()).all(|d| {
            let same_lane = d.seg == seg && d.lane == lane && (d.param - param).abs() < eps2;
            !same_lane && (d.pos - p).norm() >= clearance
        })
    }

    fn generate(&mut self, e: usize, t: f64) {
        self.totals.generated += 1;
        if let Some(gap) = self.arrival_gap {
            let next = t + gap.sample(&mut self.rng.arrivals);
            self.push(next, Ev::Generate(e));
        }
        let n = self.routes[e].len();
        if n == 0 {
            return;
        }
        let k = self.rng.routes.gen_range(0..n);
        let v_pref = self.rng.routes.gen_range(self.cfg.speed_min..=self.cfg.speed_max);
        let (seg, lane, param) = self.entries[e];
        if !self.clear_to_inject(seg, lane, param) {
            return;
        }
        let (dest, plan) = self.routes[e][k].clone();
        let first = self.now() + LISTEN_INTERVALS / self.cfg.radio.beacon_rate;
        self.inject(seg, lane, param, plan, dest, v_pref, first);
    }

    fn convert(&self, seg: SegmentRef, from: LaneCoord, to: LaneCoord, s: f64) -> f64 {
        if from == to {
            return s;
        }
        match (self.drs.lane(seg, from), self.drs.lane(seg, to)) {
            (Some(a), Some(b)) => {
                let c = s.clamp(a.chain.start_param(), a.chain.end_param());
                param_convert(&a.chain, &b.chain, c).map(|v| v + (s - c)).unwrap_or(s)
            }
            _ => s,
        }
    }

    fn beacon_of(&self, id: usize, t: f64) -> Option<Beacon> {
        let d = self.drones[id].as_ref()?;
        let lane = self.drs.lane(d.seg, d.lane)?;
        let dir = lane.chain.tangent_at(d.param.clamp(lane.chain.start_param(), lane.chain.end_param())).ok()?;
        let (lane, param) = match d.switch {
            Some(sw) if sw.elapsed < 0.5 * self.cfg.guidance.switch_time => (sw.from, self.convert(d.seg, sw.to, sw.from, d.param)),
            _ => (d.lane, d.param),
        };
        Some(Beacon { sender: id, seq: d.seq, time: t, position: d.pos, velocity: dir * d.speed, seg: d.seg, lane, param })
    }

    fn deliver(&mut self, delivered: Vec<Delivery>) {
        for dl in delivered {
            if let Some(Some(d)) = self.drones.get_mut(dl.receiver) {
                d.table.update(&dl.beacon);
            }
        }
    }

    fn send_beacon(&mut self, id: usize, t: f64) {
        let Some(d) = self.drones[id].as_mut() else { return };
        d.seq += 1;
        let Some(b) = self.beacon_of(id, t) else { return };
        self.push(t + 1.0 / self.cfg.radio.beacon_rate, Ev::Beacon(id));
        match self.cfg.radio.mode {
            RadioMode::Ideal => {
                let got = self.channel.broadcast_ideal(id, b);
                self.deliver(got);
            }
            RadioMode::Csma => {
                let mut out = Vec::new();
                self.channel.enqueue(id, b, t, &mut self.rng.mac, &mut out);
                for (te, e) in out {
                    self.push(te, Ev::Radio(e));
                }
            }
        }
    }

    fn radio_event(&mut self, e: RadioEvent, t: f64) {
        let mut out = Vec::new();
        let mut got = Vec::new();
        self.channel.handle(e, t, &mut self.rng.mac, &mut out, &mut got);
        for (te, e) in out {
            self.push(te, Ev::Radio(e));
        }
        self.deliver(got);
    }

    /// Replaces the route of drone `id` with one from its current position.
    fn replan(&mut self, id: usize) {
        let Some(d) = self.drones[id].as_ref() else { return };
        let (seg, lane, param, dest) = (d.seg, d.lane, d.param, d.dest);
        let mut best = plan_from(self.drs, &self.graph, seg, lane, param, dest).ok().map(|p| (dest, p));
        if best.is_none() {
            for &x in &self.exits {
                if let Ok(p) = plan_from(self.drs, &self.graph, seg, lane, param, x) {
                    if best.as_ref().is_none_or(|(_, b)| p.cost < b.cost) {
                        best = Some((x, p));
                    }
                }
            }
        }
        self.totals.replans += 1;
        let d = self.drones[id].as_mut().expect("checked above");
        match best {
            Some((x, p)) => {
                d.dest = x;
                d.route = p;
            }
            None => d.route.segments.clear(),
        }
        d.leg = 0;
    }

    fn goal(&self, d: &Drone) -> Option<Goal> {
        let leg = d.route.segments.get(d.leg).filter(|l| l.seg == d.seg)?;
        match d.seg {
            SegmentRef::Road(_) => Some(Goal { target: leg.target, hold: matches!(leg.exit, SegmentExit::Ramp(_)) }),
            SegmentRef::Ramp(_) => None,
        }
    }

    fn needs_replan(&self, d: &Drone) -> bool {
        if d.route.segments.get(d.leg).is_none_or(|l| l.seg != d.seg) {
            return !d.route.segments.is_empty() || matches!(d.seg, SegmentRef::Road(_));
        }
        match self.goal(d) {
            Some(g) if g.hold => g.target.param - self.convert(d.seg, d.lane, g.target.lane, d.param) < 0.0,
            _ => false,
        }
    }

    fn invoke(&mut self, id: usize, t: f64) -> Result<(), EngineError> {
        let timeout = self.cfg.neighbor_timeout;
        let Some(d) = self.drones[id].as_mut() else { return Ok(()) };
        d.table.scrub(t, timeout);
        let d = self.drones[id].as_ref().expect("present");
        if self.needs_replan(d) {
            self.replan(id);
        }
        let d = self.drones[id].as_ref().expect("present");
        let goal = self.goal(d);
        let neighbors: Vec<_> = d.table.iter().filter_map(|e| project(self.drs, d.seg, e)).collect();
        let merge_commit = match d.seg {
            SegmentRef::Ramp(k) => self.merge_commits[k],
            SegmentRef::Road(_) => None,
        };
        let own = OwnState {
            seg: d.seg,
            lane: d.lane,
            param: d.param,
            speed: d.speed,
            v_pref: d.v_pref,
            v_max: self.drs.speed_limit(d.seg),
            merge_commit,
        };
        let inputs = compute_inputs(self.drs, &own, goal, &neighbors, &self.cfg.guidance)?;
        let decision = decide(&inputs, &self.cfg.guidance, &mut self.rng.guidance);
        let target_lane = goal.map_or_else(|| "-".to_string(), |g| g.target.lane.to_string());
        self.log(|| LogRecord::Decision { t, drone: id, lane: decision.lane.to_string(), target_lane, speed: decision.speed });

        let (seg, lane, param) = (own.seg, own.lane, own.param);
        let converted = self.convert(seg, lane, decision.lane, param);
        let d = self.drones[id].as_mut().expect("present");
        d.speed = decision.speed;
        if decision.lane != lane {
            d.switch = Some(Switch { from: lane, to: decision.lane, elapsed: 0.0 });
            d.lane = decision.lane;
            d.param = converted;
            d.token += 1;
            self.log(|| LogRecord::Switch { t, drone: id, from: lane.to_string(), to: decision.lane.to_string() });
        } else if let Some(delay) = next_invocation_delay(decision.speed, false, &self.cfg.guidance) {
            d.token += 1;
            let token = d.token;
            self.push(t + delay, Ev::Invoke { drone: id, token });
        }
        Ok(())
    }

    fn drain(&mut self, t: f64) -> Result<(), EngineError> {
        while let Some(top) = self.queue.peek() {
            if top.t > t + 1e-9 {
                break;
            }
            let q = self.queue.pop().expect("peeked");
            match q.ev {
                Ev::Radio(e) => self.radio_event(e, q.t),
                Ev::Beacon(id) => self.send_beacon(id, q.t),
                Ev::Invoke { drone, token } => {
                    let live = matches!(&self.drones[drone], Some(d) if d.token == token && d.switch.is_none());
                    if live {
                        self.invoke(drone, q.t)?;
                    }
                }
                Ev::Generate(e) => self.generate(e, q.t),
            }
        }
        Ok(())
    }

    fn position_of(&self, d: &Drone) -> Vec3 {
        let Some(lane) = self.drs.lane(d.seg, d.lane) else { return d.pos };
        let s = d.param.clamp(lane.chain.start_param(), lane.chain.end_param());
        match d.switch {
            Some(sw) => {
                let Ok(c) = lane.chain.curve_at(s) else { return d.pos };
                let w = (sw.elapsed / self.cfg.guidance.switch_time).clamp(0.0, 1.0);
                let (a1, a2) = sw.from.frame_offset(self.drs.lane_radius);
                let (b1, b2) = sw.to.frame_offset(self.drs.lane_radius);
                c.base_point_offset(c.t_at(s), a1 + w * (b1 - a1), a2 + w * (b2 - a2))
            }
            None => lane.chain.point_at(s).unwrap_or(d.pos),
        }
    }

    /// Moves drone `id` by one tick; returns true when it left the system.
    fn move_drone(&mut self, id: usize, t: f64) -> Result<bool, EngineError> {
        let dt = self.cfg.dt;
        let drs = self.drs;
        let d = self.drones[id].as_mut().expect("active drone");
        d.prev = d.pos;
        let travel = d.speed * dt;
        d.param += travel;
        let mut moved_on = false;
        let mut arrived = None;
        loop {
            let lane = drs.lane(d.seg, d.lane).ok_or_else(|| EngineError::Internal {
                drone: id,
                message: format!("lane {} missing on {}", d.lane, drs.segment_id(d.seg)),
            })?;
            if let (SegmentRef::Road(_), None, Some(leg)) = (d.seg, d.switch, d.route.segments.get(d.leg)) {
                if let SegmentExit::Ramp(k) = leg.exit {
                    if leg.seg == d.seg && leg.target.lane == d.lane && d.param >= leg.target.param {
                        let over = d.param - leg.target.param;
                        let ramp = drs.ramps[k].lane();
                        d.seg = SegmentRef::Ramp(k);
                        d.lane = ramp.coord;
                        d.param = ramp.chain.start_param() + over;
                        d.leg += 1;
                        moved_on = true;
                        continue;
                    }
                }
            }
            let end = lane.chain.end_param();
            if d.param >= end {
                let over = d.param - end;
                if let SegmentRef::Ramp(k) = d.seg {
                    if let Some(link) = drs.ramp_exit_link(k) {
                        d.seg = SegmentRef::Road(link.road);
                        d.lane = link.lane;
                        d.param = link.param + over;
                        d.leg += 1;
                        moved_on = true;
                        continue;
                    }
                }
                arrived = Some(over);
            }
            break;
        }
        let mut switch_done = false;
        if let Some(sw) = d.switch.as_mut() {
            sw.elapsed += dt;
            if sw.elapsed >= self.cfg.guidance.switch_time - 1e-9 {
                d.switch = None;
                switch_done = true;
            }
        }
        if let Some(over) = arrived {
            let flown = (travel - over).max(0.0);
            self.totals.distance += flown;
            self.totals.active_time += if travel > 0.0 { dt * flown / travel } else { dt };
            return Ok(true);
        }
        self.totals.distance += travel;
        self.totals.active_time += dt;
        let d = self.drones[id].as_ref().expect("active drone");
        let pos = self.position_of(d);
        let open = d.switch.is_some() || drs.lane(d.seg, d.lane).is_some_and(|l| l.is_open_at(d.param));
        if !open {
            self.totals.closed_lane_violations += 1;
        }
        let d = self.drones[id].as_mut().expect("active drone");
        d.pos = pos;
        if moved_on || switch_done {
            d.token += 1;
            let token = d.token;
            self.push(t + dt, Ev::Invoke { drone: id, token });
        }
        Ok(false)
    }

    fn remove(&mut self, id: usize) {
        self.drones[id] = None;
        self.channel.remove_node(id);
    }

    /// Pairs whose straight-line motion over the last tick came closer than
    /// the safety distance.
    fn collisions(&self) -> Vec<usize> {
        let cell = |p: &Vec3| ((p.x / COLLISION_CELL).floor() as i64, (p.y / COLLISION_CELL).floor() as i64, (p.z / COLLISION_CELL).floor() as i64);
        let mut grid: FxHashMap<(i64, i64, i64), Vec<usize>> = FxHashMap::default();
        for &id in &self.active {
            let d = self.drones[id].as_ref().expect("active drone");
            grid.entry(cell(&d.pos)).or_default().push(id);
        }
        let limit = self.cfg.min_safety_distance;
        let mut hit = Vec::new();
        for &a in &self.active {
            let da = self.drones[a].as_ref().expect("active drone");
            let (cx, cy, cz) = cell(&da.pos);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(ids) = grid.get(&(cx + dx, cy + dy, cz + dz)) else { continue };
                        for &b in ids.iter().filter(|&&b| b > a) {
                            let db = self.drones[b].as_ref().expect("active drone");
                            if closest_approach(da.prev - db.prev, da.pos - db.pos) < limit {
                                hit.push(a);
                                hit.push(b);
                            }
                        }
                    }
                }
            }
        }
        hit.sort_unstable();
        hit.dedup();
        hit
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self) -> Result<(), EngineError> {
        let t = self.now();
        self.drain(t)?;
        let mut arrived = Vec::new();
        for id in self.active.clone() {
            if self.move_drone(id, t)? {
                arrived.push(id);
            }
        }
        self.tick += 1;
        let now = self.now();
        for &id in &arrived {
            self.remove(id);
            self.totals.arrived += 1;
            self.bin_ac += 1;
            self.log(|| LogRecord::Arrival { t: now, drone: id });
        }
        self.active.retain(|&id| self.drones[id].is_some());
        let collided = self.collisions();
        if !collided.is_empty() {
            for &id in &collided {
                self.remove(id);
            }
            self.totals.collided += collided.len() as u64;
            self.active.retain(|&id| self.drones[id].is_some());
            self.log(|| LogRecord::Collision { t: now, drones: collided });
        }
        for &id in &self.active {
            let p = self.drones[id].as_ref().expect("active drone").pos;
            self.channel.set_position(id, p);
        }
        self.channel.rebuild_index();
        let tot = &self.totals;
        if tot.injected != tot.arrived + tot.collided + self.active.len() as u64 {
            self.totals.conservation_violations += 1;
        }
        let sec = (now + 1e-9).floor() as u64;
        while (self.series.len() as u64) < sec {
            self.series.push(SecondBin { t: self.series.len() as u64 + 1, ic: self.bin_ic, ac: self.bin_ac, nc: self.active.len() as u64 });
            self.bin_ic = 0;
            self.bin_ac = 0;
        }
        Ok(())
    }

    pub fn run_until(&mut self, t_end: f64) -> Result<(), EngineError> {
        while self.now() < t_end - 1e-9 {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(self) -> RunOutput {
        RunOutput {
            seed: self.cfg.seed,
            series: self.series,
            totals: self.totals,
            radio: self.channel.stats.clone(),
            events: self.events,
        }
    }
}

/// Minimum norm of the relative position moving linearly from `r0` to `r1`.
fn closest_approach(r0: Vec3, r1: Vec3) -> f64 {
    let v = r1 - r0;
    let vv = v.dot(&v);
    let tau = if vv > 0.0 { (-r0.dot(&v) / vv).clamp(0.0, 1.0) } else { 0.0 };
    (r0 + v * tau).norm()
}

#[cfg(test)]
mod tests;
