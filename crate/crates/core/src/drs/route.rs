//! Route graph over lane key points and shortest-path planning.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::{DroneRoadSystem, DrsError, SegmentRef};
use crate::geometry::{hex_neighbors, param_convert, LaneCoord};

pub type NodeId = usize;

const SNAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    pub seg: SegmentRef,
    pub lane: LaneCoord,
    pub param: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Forward travel along one lane.
    Along,
    /// Lateral switch to an adjacent lane.
    Hop,
    /// Traversal of a ramp.
    Ramp(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub weight: f64,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone)]
pub struct RouteGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    adj: Vec<Vec<usize>>,
    lanes: HashMap<(SegmentRef, LaneCoord), Vec<NodeId>>,
}

impl RouteGraph {
    fn add_node(&mut self, n: GraphNode) -> NodeId {
        self.nodes.push(n);
        self.adj.push(Vec::new());
        let id = self.nodes.len() - 1;
        self.lanes.entry((n.seg, n.lane)).or_default().push(id);
        id
    }

    fn add_edge(&mut self, from: NodeId, to: NodeId, weight: f64, kind: EdgeKind) {
        self.edges.push(GraphEdge { from, to, weight, kind });
        self.adj[from].push(self.edges.len() - 1);
    }

    pub fn out_edges(&self, n: NodeId) -> impl Iterator<Item = &GraphEdge> {
        self.adj[n].iter().map(|&e| &self.edges[e])
    }

    /// Nodes on one lane, ascending by parameter.
    pub fn lane_nodes(&self, seg: SegmentRef, lane: LaneCoord) -> &[NodeId] {
        self.lanes.get(&(seg, lane)).map_or(&[], Vec::as_slice)
    }

    /// The node at `param` on a lane, if one exists there.
    pub fn node_at(&self, seg: SegmentRef, lane: LaneCoord, param: f64) -> Option<NodeId> {
        self.lane_nodes(seg, lane)
            .iter()
            .copied()
            .find(|&n| (self.nodes[n].param - param).abs() <= SNAP)
    }

    pub fn entry_nodes(&self, drs: &DroneRoadSystem) -> Vec<NodeId> {
        drs.entry_points().into_iter().filter_map(|(s, l, p)| self.node_at(s, l, p)).collect()
    }

    pub fn exit_nodes(&self, drs: &DroneRoadSystem) -> Vec<NodeId> {
        drs.exit_points().into_iter().filter_map(|(s, l, p)| self.node_at(s, l, p)).collect()
    }
}

fn push_unique(v: &mut Vec<f64>, x: f64) {
    if !v.iter().any(|&y| (y - x).abs() <= SNAP) {
        v.push(x);
    }
}

/// Builds the route graph: nodes at every lane's key parameters (ends,
/// closing and reopening points, ramp attachments) projected onto all lanes
/// of the road, along-lane edges over open stretches, hop edges between
/// adjacent lanes (weight 2r) and one edge per ramp (weight = ramp length).
pub fn build_route_graph(drs: &DroneRoadSystem) -> RouteGraph {
    let mut g = RouteGraph { nodes: Vec::new(), edges: Vec::new(), adj: Vec::new(), lanes: HashMap::new() };
    let hop = 2.0 * drs.lane_radius;
    for (k, road) in drs.roads.iter().enumerate() {
        let seg = SegmentRef::Road(k);
        let Some(center) = road.center() else { continue };
        let mut own: HashMap<LaneCoord, Vec<f64>> = HashMap::new();
        let mut keys = Vec::new();
        for lane in &road.lanes {
            let mut ps = vec![lane.chain.start_param(), lane.chain.end_param()];
            ps.extend(lane.closing_points());
            ps.extend(lane.reopening_points());
            ps.extend(drs.outgoing(k).iter().filter(|l| l.lane == lane.coord).map(|l| l.param));
            ps.extend(drs.incoming(k).iter().filter(|l| l.lane == lane.coord).map(|l| l.param));
            for &p in &ps {
                if let Ok(pc) = param_convert(&lane.chain, &center.chain, p) {
                    push_unique(&mut keys, pc);
                }
            }
            own.insert(lane.coord, ps);
        }
        keys.sort_by(f64::total_cmp);
        let mut ids: HashMap<LaneCoord, Vec<NodeId>> = HashMap::new();
        for lane in &road.lanes {
            let exact = &own[&lane.coord];
            let mut v = Vec::with_capacity(keys.len());
            for &pc in &keys {
                let mut p = param_convert(&center.chain, &lane.chain, pc).unwrap_or(pc);
                if let Some(&e) = exact.iter().find(|&&e| (e - p).abs() <= SNAP) {
                    p = e;
                }
                v.push(g.add_node(GraphNode { seg, lane: lane.coord, param: p }));
            }
            ids.insert(lane.coord, v);
        }
        for lane in &road.lanes {
            let v = &ids[&lane.coord];
            for m in 0..v.len().saturating_sub(1) {
                let (a, b) = (g.nodes[v[m]].param, g.nodes[v[m + 1]].param);
                if lane.is_open_between(a, b) {
                    g.add_edge(v[m], v[m + 1], b - a, EdgeKind::Along);
                }
            }
            for nb in hex_neighbors(lane.coord) {
                let (Some(other), Some(w)) = (road.lane(nb), ids.get(&nb)) else { continue };
                for m in 0..v.len() {
                    let (pa, pb) = (g.nodes[v[m]].param, g.nodes[w[m]].param);
                    if lane.is_open_at(pa) && other.is_open_at(pb) {
                        g.add_edge(v[m], w[m], hop, EdgeKind::Hop);
                    }
                }
            }
        }
    }
    for (k, ramp) in drs.ramps.iter().enumerate() {
        let seg = SegmentRef::Ramp(k);
        let lane = ramp.lane();
        let from = match drs.ramp_entry_link(k) {
            Some(l) => g.node_at(SegmentRef::Road(l.road), l.lane, l.param),
            None => Some(g.add_node(GraphNode { seg, lane: lane.coord, param: lane.chain.start_param() })),
        };
        let to = match drs.ramp_exit_link(k) {
            Some(l) => g.node_at(SegmentRef::Road(l.road), l.lane, l.param),
            None => Some(g.add_node(GraphNode { seg, lane: lane.coord, param: lane.chain.end_param() })),
        };
        if let (Some(a), Some(b)) = (from, to) {
            g.add_edge(a, b, ramp.length(), EdgeKind::Ramp(k));
        }
    }
    g
}

/// Where a route segment's drone must be when it leaves the segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub lane: LaneCoord,
    pub param: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentExit {
    /// Leave the road onto this ramp at the target.
    Ramp(usize),
    /// End of a ramp that merges into the next segment.
    Continue,
    /// Arrive and leave the system at the segment end.
    Arrive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteSegment {
    pub seg: SegmentRef,
    pub entry_lane: LaneCoord,
    pub entry_param: f64,
    pub target: Target,
    pub exit: SegmentExit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    pub segments: Vec<RouteSegment>,
    pub cost: f64,
}

#[derive(PartialEq)]
struct Item(f64, NodeId);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Multi-source Dijkstra; returns the cost, source node and edge list of the best path.
fn dijkstra(g: &RouteGraph, sources: &[(NodeId, f64)], to: NodeId) -> Option<(f64, NodeId, Vec<usize>)> {
    let n = g.nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    for &(s, c) in sources {
        if c < dist[s] {
            dist[s] = c;
            heap.push(Item(c, s));
        }
    }
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == to {
            break;
        }
        for &e in &g.adj[u] {
            let ed = &g.edges[e];
            let nd = d + ed.weight;
            if nd < dist[ed.to] {
                dist[ed.to] = nd;
                pred[ed.to] = Some(e);
                heap.push(Item(nd, ed.to));
            }
        }
    }
    if !dist[to].is_finite() {
        return None;
    }
    let mut path = Vec::new();
    let mut cur = to;
    while let Some(e) = pred[cur] {
        path.push(e);
        cur = g.edges[e].from;
    }
    path.reverse();
    Some((dist[to], cur, path))
}

fn ramp_segment(drs: &DroneRoadSystem, k: usize, entry_param: f64) -> RouteSegment {
    let lane = drs.ramps[k].lane();
    RouteSegment {
        seg: SegmentRef::Ramp(k),
        entry_lane: lane.coord,
        entry_param,
        target: Target { lane: lane.coord, param: lane.chain.end_param() },
        exit: if drs.ramps[k].exit.is_some() { SegmentExit::Continue } else { SegmentExit::Arrive },
    }
}

/// Splits an edge path starting at `start` into per-segment legs.
fn assemble(
    drs: &DroneRoadSystem,
    g: &RouteGraph,
    start: (SegmentRef, LaneCoord, f64),
    edges: &[usize],
) -> Vec<RouteSegment> {
    let mut out = Vec::new();
    let mut open = match start.0 {
        SegmentRef::Road(_) => Some((start.0, start.1, start.2)),
        SegmentRef::Ramp(_) => None,
    };
    let mut last = None;
    for &e in edges {
        let ed = &g.edges[e];
        last = Some(ed.to);
        if let EdgeKind::Ramp(k) = ed.kind {
            if let Some((seg, lane, p)) = open.take() {
                let at = g.nodes[ed.from];
                out.push(RouteSegment {
                    seg,
                    entry_lane: lane,
                    entry_param: p,
                    target: Target { lane: at.lane, param: at.param },
                    exit: SegmentExit::Ramp(k),
                });
            }
            out.push(ramp_segment(drs, k, drs.ramps[k].lane().chain.start_param()));
            let to = g.nodes[ed.to];
            if matches!(to.seg, SegmentRef::Road(_)) {
                open = Some((to.seg, to.lane, to.param));
            }
        }
    }
    if let Some((seg, lane, p)) = open {
        let end = last.map(|n| g.nodes[n]).unwrap_or(GraphNode { seg, lane, param: p });
        out.push(RouteSegment {
            seg,
            entry_lane: lane,
            entry_param: p,
            target: Target { lane: end.lane, param: end.param },
            exit: SegmentExit::Arrive,
        });
    }
    out
}

fn no_route(drs: &DroneRoadSystem, g: &RouteGraph, from: String, to: NodeId) -> DrsError {
    let t = g.nodes[to];
    DrsError::NoRoute { from, to: format!("{} {} @ {}", drs.segment_id(t.seg), t.lane, t.param) }
}

/// Least-cost route between two graph nodes.
pub fn plan_path(drs: &DroneRoadSystem, g: &RouteGraph, from: NodeId, to: NodeId) -> Result<RoutePlan, DrsError> {
    let f = g.nodes[from];
    let (cost, _, edges) = dijkstra(g, &[(from, 0.0)], to)
        .ok_or_else(|| no_route(drs, g, format!("{} {} @ {}", drs.segment_id(f.seg), f.lane, f.param), to))?;
    Ok(RoutePlan { segments: assemble(drs, g, (f.seg, f.lane, f.param), &edges), cost })
}

/// Least-cost route from an arbitrary lane position, moving forward from it.
pub fn plan_from(
    drs: &DroneRoadSystem,
    g: &RouteGraph,
    seg: SegmentRef,
    lane: LaneCoord,
    s: f64,
    to: NodeId,
) -> Result<RoutePlan, DrsError> {
    let here = format!("{} {} @ {}", drs.segment_id(seg), lane, s);
    match seg {
        SegmentRef::Ramp(k) => {
            let first = ramp_segment(drs, k, s);
            let rest = drs.ramps[k].lane().chain.end_param() - s;
            let Some(link) = drs.ramp_exit_link(k) else {
                let target = g.nodes[to];
                if target.seg == seg {
                    return Ok(RoutePlan { segments: vec![first], cost: rest });
                }
                return Err(no_route(drs, g, here, to));
            };
            let road = SegmentRef::Road(link.road);
            let n = g.node_at(road, link.lane, link.param).ok_or_else(|| no_route(drs, g, here.clone(), to))?;
            let (cost, _, edges) = dijkstra(g, &[(n, 0.0)], to).ok_or_else(|| no_route(drs, g, here, to))?;
            let mut segments = vec![first];
            segments.extend(assemble(drs, g, (road, link.lane, link.param), &edges));
            Ok(RoutePlan { segments, cost: cost + rest })
        }
        SegmentRef::Road(k) => {
            let l = drs.roads[k].lane(lane).ok_or_else(|| no_route(drs, g, here.clone(), to))?;
            let ahead = g
                .lane_nodes(seg, lane)
                .iter()
                .copied()
                .find(|&n| g.nodes[n].param >= s - SNAP)
                .filter(|&n| l.is_open_between(s, g.nodes[n].param.max(s)))
                .ok_or_else(|| no_route(drs, g, here.clone(), to))?;
            let c0 = (g.nodes[ahead].param - s).max(0.0);
            let (cost, _, edges) = dijkstra(g, &[(ahead, c0)], to).ok_or_else(|| no_route(drs, g, here, to))?;
            Ok(RoutePlan { segments: assemble(drs, g, (seg, lane, s), &edges), cost })
        }
    }
}
