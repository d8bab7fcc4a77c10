//! Structural and geometric checks that do not prevent loading.

use std::collections::HashSet;
use std::fmt;

use super::{build_route_graph, DroneRoadSystem, Lane, SegmentRef};
use crate::geometry::{hex_neighbors, Curve, Vec3, VERTICAL_EPS};

const POSITION_TOL: f64 = 1e-6;
const DIRECTION_TOL: f64 = 1e-4;
const DECLARED_TOL: f64 = 1e-3;
const SEPARATION_STEP: f64 = 5.0;
const VERTICAL_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FindingKind {
    ChainDiscontinuity,
    LaneSeparation,
    VerticalTangent,
    UnreachableRamp,
    SpeedLimit,
    DuplicateLane,
    DeclaredMismatch,
    RampAttachment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub kind: FindingKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.location, self.message)
    }
}

fn curvature(c: &Curve, t: f64) -> Vec3 {
    let d1 = c.base.d1(t);
    let d2 = c.base.d2(t);
    let n2 = d1.norm_squared();
    (d2 * n2 - d1 * d1.dot(&d2)) / (n2 * n2)
}

fn check_chain(lane: &Lane, loc: &str, out: &mut Vec<Finding>) {
    for w in lane.chain.curves.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let gap = (a.end_point - b.start_point).norm();
        let ta = a.base.d1(1.0).normalize();
        let tb = b.base.d1(0.0).normalize();
        let dk = (curvature(a, 1.0) - curvature(b, 0.0)).norm();
        if gap > POSITION_TOL || (ta - tb).norm() > DIRECTION_TOL || dk > DIRECTION_TOL {
            out.push(Finding {
                kind: FindingKind::ChainDiscontinuity,
                location: format!("{loc}/{}", b.id),
                message: format!("joint gap {gap:.3e} m, tangent jump {:.3e}, curvature jump {dk:.3e}", (ta - tb).norm()),
            });
        }
    }
}

fn check_declared(lane: &Lane, loc: &str, out: &mut Vec<Finding>) {
    for (c, d) in lane.chain.curves.iter().zip(&lane.declared) {
        let worst = (c.start_param - d.start_param)
            .abs()
            .max((c.end_param - d.end_param).abs())
            .max((c.start_point - d.start_point).norm())
            .max((c.end_point - d.end_point).norm());
        if worst > DECLARED_TOL {
            out.push(Finding {
                kind: FindingKind::DeclaredMismatch,
                location: format!("{loc}/{}", c.id),
                message: format!(
                    "declared [{}, {}] differs from computed [{:.6}, {:.6}] by up to {worst:.3e}",
                    d.start_param, d.end_param, c.start_param, c.end_param
                ),
            });
        }
    }
}

fn check_vertical(lane: &Lane, loc: &str, out: &mut Vec<Finding>) {
    for c in &lane.chain.curves {
        let vertical = (0..=VERTICAL_SAMPLES).any(|k| {
            let v = c.base.d1(k as f64 / VERTICAL_SAMPLES as f64).normalize();
            v.z.abs() > 1.0 - VERTICAL_EPS
        });
        if vertical {
            out.push(Finding {
                kind: FindingKind::VerticalTangent,
                location: format!("{loc}/{}", c.id),
                message: format!("curve {} has a vertical tangent", c.id),
            });
        }
    }
}

/// Samples lane pairs in shared normal planes (same base-curve parameter).
fn check_separation(drs: &DroneRoadSystem, k: usize, out: &mut Vec<Finding>) {
    let road = &drs.roads[k];
    let two_r = 2.0 * drs.lane_radius;
    let Some(center) = road.center() else { return };
    for (ia, a) in road.lanes.iter().enumerate() {
        for b in road.lanes.iter().skip(ia + 1) {
            if a.chain.curves.len() != b.chain.curves.len() {
                continue;
            }
            let adjacent = hex_neighbors(a.coord).contains(&b.coord);
            let mut worst: Option<(f64, f64)> = None;
            for (kc, cc) in center.chain.curves.iter().enumerate() {
                let n = (cc.length() / SEPARATION_STEP).ceil().max(1.0) as usize;
                for m in 0..=n {
                    let t = cc.t_at(cc.start_param + cc.length() * m as f64 / n as f64);
                    let d = (a.chain.curves[kc].point_t(t) - b.chain.curves[kc].point_t(t)).norm();
                    let bad = if adjacent { (d - two_r).abs() > POSITION_TOL } else { d < two_r - POSITION_TOL };
                    if bad && worst.is_none_or(|(w, _)| (d - two_r).abs() > (w - two_r).abs()) {
                        worst = Some((d, cc.start_param + cc.length() * m as f64 / n as f64));
                    }
                }
            }
            if let Some((d, s)) = worst {
                out.push(Finding {
                    kind: FindingKind::LaneSeparation,
                    location: format!("Road[{}]/{}-{}", road.id, a.coord, b.coord),
                    message: format!("separation {d:.6} m at center parameter {s:.3}, expected {} {two_r}", if adjacent { "=" } else { ">=" }),
                });
            }
        }
    }
}

fn check_attachments(drs: &DroneRoadSystem, out: &mut Vec<Finding>) {
    for (k, ramp) in drs.ramps.iter().enumerate() {
        let chain = &ramp.lane().chain;
        let ends = [
            (drs.ramp_entry_link(k), chain.curves[0].start_point, "entry"),
            (drs.ramp_exit_link(k), chain.curves[chain.curves.len() - 1].end_point, "exit"),
        ];
        for (link, p, what) in ends {
            let Some(l) = link else { continue };
            let Some(q) = drs.position(SegmentRef::Road(l.road), l.lane, l.param) else { continue };
            let gap = (p - q).norm();
            if gap > DECLARED_TOL {
                out.push(Finding {
                    kind: FindingKind::RampAttachment,
                    location: format!("Ramp[{}]", ramp.id),
                    message: format!("{what} point is {gap:.3} m from the attached lane point"),
                });
            }
        }
    }
}

/// Ramps that cannot be reached from any entry point or cannot reach any exit point.
fn check_reachability(drs: &DroneRoadSystem, out: &mut Vec<Finding>) {
    let g = build_route_graph(drs);
    let n = g.nodes.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &g.edges {
        rev[e.to].push(e.from);
    }
    let flood = |starts: Vec<usize>, forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = starts;
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut seen[u], true) {
                continue;
            }
            if forward {
                stack.extend(g.out_edges(u).map(|e| e.to));
            } else {
                stack.extend(rev[u].iter().copied());
            }
        }
        seen
    };
    let from_entry = flood(g.entry_nodes(drs), true);
    let to_exit = flood(g.exit_nodes(drs), false);
    let mut reported = HashSet::new();
    for e in &g.edges {
        if let super::EdgeKind::Ramp(k) = e.kind {
            if !(from_entry[e.from] && to_exit[e.to]) && reported.insert(k) {
                out.push(Finding {
                    kind: FindingKind::UnreachableRamp,
                    location: format!("Ramp[{}]", drs.ramps[k].id),
                    message: if from_entry[e.from] {
                        "no exit point reachable after this ramp".into()
                    } else {
                        "not reachable from any entry point".into()
                    },
                });
            }
        }
    }
}

/// Runs all checks; an empty result means the system is valid.
pub fn validate_drs(drs: &DroneRoadSystem) -> Vec<Finding> {
    let mut out = Vec::new();
    let roads = drs
        .roads
        .iter()
        .map(|r| (r, format!("Road[{}]", r.id)))
        .chain(drs.ramps.iter().map(|r| (&r.road, format!("Ramp[{}]", r.id))));
    for (road, loc) in roads {
        if !(road.speed_limit > 0.0) {
            out.push(Finding {
                kind: FindingKind::SpeedLimit,
                location: loc.clone(),
                message: format!("speed limit {} must be positive", road.speed_limit),
            });
        }
        let mut seen = HashSet::new();
        for lane in &road.lanes {
            let lloc = format!("{loc}/Lane[{}]", lane.id);
            if !seen.insert(lane.coord) {
                out.push(Finding {
                    kind: FindingKind::DuplicateLane,
                    location: lloc.clone(),
                    message: format!("lane coordinate {} used twice", lane.coord),
                });
            }
            check_chain(lane, &lloc, &mut out);
            check_declared(lane, &lloc, &mut out);
            check_vertical(lane, &lloc, &mut out);
        }
    }
    for k in 0..drs.roads.len() {
        check_separation(drs, k, &mut out);
    }
    check_attachments(drs, &mut out);
    check_reachability(drs, &mut out);
    out
}
