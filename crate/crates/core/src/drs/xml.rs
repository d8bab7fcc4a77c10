//! XML reading and writing of drone road systems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::builder::make_lane;
use super::{Attachment, DeclaredCurve, DroneRoadSystem, DrsError, Lane, Ramp, Road, DEFAULT_LANE_RADIUS};
use crate::geometry::{CubicBezier, LaneCoord, Vec3};

const DRS_ATTRS: &[&str] = &["Name", "Version", "LaneRadius"];
const ROAD_ATTRS: &[&str] = &["Identifier", "Description", "SpeedLimit"];
const LANE_ATTRS: &[&str] = &["Identifier", "Description", "LaneIdentifier", "RoadIdentifier", "ClosedCurves"];
const RAMP_ATTRS: &[&str] = &[
    "Identifier",
    "Description",
    "EntryRoadIdentifier",
    "EntryLaneIdentifier",
    "EntryLaneParameter",
    "ExitRoadIdentifier",
    "ExitLaneIdentifier",
    "ExitLaneParameter",
];

/// Parses a document, taking the lane radius from the `LaneRadius` attribute.
pub fn parse_drs(text: &str) -> Result<DroneRoadSystem, DrsError> {
    parse_drs_with_radius(text, None)
}

/// Parses a document; `radius` overrides the document's lane radius.
pub fn parse_drs_with_radius(text: &str, radius: Option<f64>) -> Result<DroneRoadSystem, DrsError> {
    let doc = Document::parse(text).map_err(|e| DrsError::Xml(e.to_string()))?;
    let root = doc.root_element();
    let path = "DroneRoadSystem".to_string();
    if root.tag_name().name() != "DroneRoadSystem" {
        return Err(DrsError::MissingElement { path: "/".into(), element: path });
    }
    let name = req(&root, &path, "Name")?.to_string();
    let version = req(&root, &path, "Version")?.to_string();
    let r = match radius {
        Some(r) => r,
        None => match root.attribute("LaneRadius") {
            Some(v) => num(&path, "LaneRadius", v)?,
            None => DEFAULT_LANE_RADIUS,
        },
    };
    if !(r > 0.0 && r.is_finite()) {
        return Err(DrsError::Invalid { path, message: format!("lane radius {r} must be positive") });
    }
    let mut roads = Vec::new();
    let mut ramps = Vec::new();
    for child in root.children().filter(Node::is_element) {
        match child.tag_name().name() {
            "Road" => roads.push(parse_road(&child, &path, r)?),
            "Ramp" => ramps.push(parse_ramp(&child, &path, r)?),
            _ => {}
        }
    }
    DroneRoadSystem::new(name, version, r, roads, ramps, extras(&root, DRS_ATTRS))
}

fn req<'a>(n: &Node<'a, '_>, path: &str, attr: &str) -> Result<&'a str, DrsError> {
    n.attribute(attr).ok_or_else(|| DrsError::MissingAttribute { path: path.into(), attr: attr.into() })
}

fn num(path: &str, attr: &str, v: &str) -> Result<f64, DrsError> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| DrsError::BadValue { path: path.into(), attr: attr.into(), value: v.into() })
}

fn point(path: &str, attr: &str, v: &str) -> Result<Vec3, DrsError> {
    let bad = || DrsError::BadValue { path: path.into(), attr: attr.into(), value: v.into() };
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut p = Vec3::zeros();
    for (k, s) in parts.iter().enumerate() {
        p[k] = s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad)?;
    }
    Ok(p)
}

fn extras(n: &Node, known: &[&str]) -> BTreeMap<String, String> {
    n.attributes()
        .filter(|a| !known.contains(&a.name()))
        .map(|a| (a.name().to_string(), a.value().to_string()))
        .collect()
}

struct RawCurve {
    id: String,
    base: CubicBezier,
    declared: DeclaredCurve,
}

struct RawLane {
    id: String,
    description: Option<String>,
    coord: LaneCoord,
    road_id: Option<String>,
    closed: BTreeSet<usize>,
    chain_id: String,
    curves: Vec<RawCurve>,
    extra: BTreeMap<String, String>,
    path: String,
}

fn parse_curve(n: &Node, path: &str) -> Result<RawCurve, DrsError> {
    let id = req(n, path, "Identifier")?.to_string();
    let start_param = num(path, "StartParameter", req(n, path, "StartParameter")?)?;
    let end_param = num(path, "EndParameter", req(n, path, "EndParameter")?)?;
    let start_point = point(path, "StartPoint", req(n, path, "StartPoint")?)?;
    let end_point = point(path, "EndPoint", req(n, path, "EndPoint")?)?;
    let mut cps = Vec::new();
    for cp in n.children().filter(|c| c.has_tag_name("ControlPoint")) {
        let cpath = format!("{path}/ControlPoint");
        let mut p = Vec3::zeros();
        for (k, a) in ["x", "y", "z"].iter().enumerate() {
            p[k] = num(&cpath, a, req(&cp, &cpath, a)?)?;
        }
        cps.push(p);
    }
    let base = match cps.as_slice() {
        [] => CubicBezier::line(start_point, end_point),
        [c] => CubicBezier::from_quadratic(start_point, *c, end_point),
        [c1, c2] => CubicBezier::new(start_point, *c1, *c2, end_point),
        _ => {
            return Err(DrsError::Invalid {
                path: path.into(),
                message: format!("{} control points, at most 2 allowed", cps.len()),
            })
        }
    };
    Ok(RawCurve { id, base, declared: DeclaredCurve { start_param, end_param, start_point, end_point } })
}

fn parse_lane(n: &Node, parent: &str) -> Result<RawLane, DrsError> {
    let id = n.attribute("Identifier").unwrap_or("?");
    let path = format!("{parent}/Lane[{id}]");
    let id = req(n, &path, "Identifier")?.to_string();
    let coord_text = req(n, &path, "LaneIdentifier")?;
    let coord: LaneCoord = coord_text.parse().map_err(|_| DrsError::BadValue {
        path: path.clone(),
        attr: "LaneIdentifier".into(),
        value: coord_text.into(),
    })?;
    let mut closed = BTreeSet::new();
    if let Some(v) = n.attribute("ClosedCurves") {
        for tok in v.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let k = tok.parse::<usize>().map_err(|_| DrsError::BadValue {
                path: path.clone(),
                attr: "ClosedCurves".into(),
                value: v.into(),
            })?;
            closed.insert(k);
        }
    }
    let chain = n
        .children()
        .find(|c| c.has_tag_name("ChainedCurve"))
        .ok_or_else(|| DrsError::MissingElement { path: path.clone(), element: "ChainedCurve".into() })?;
    let cpath = format!("{path}/ChainedCurve");
    let chain_id = req(&chain, &cpath, "Identifier")?.to_string();
    req(&chain, &cpath, "StartParameter")?;
    req(&chain, &cpath, "EndParameter")?;
    let mut curves = Vec::new();
    for (k, c) in chain.children().filter(|c| c.has_tag_name("Curve")).enumerate() {
        curves.push(parse_curve(&c, &format!("{cpath}/Curve[{k}]"))?);
    }
    if curves.is_empty() {
        return Err(DrsError::MissingElement { path: cpath, element: "Curve".into() });
    }
    if let Some(&k) = closed.iter().find(|&&k| k >= curves.len()) {
        return Err(DrsError::Invalid {
            path,
            message: format!("closed curve index {k} but the chain has {} curves", curves.len()),
        });
    }
    Ok(RawLane {
        id,
        description: n.attribute("Description").map(str::to_string),
        coord,
        road_id: n.attribute("RoadIdentifier").map(str::to_string),
        closed,
        chain_id,
        curves,
        extra: extras(n, LANE_ATTRS),
        path,
    })
}

fn parse_road(n: &Node, parent: &str, r: f64) -> Result<Road, DrsError> {
    let id = n.attribute("Identifier").unwrap_or("?");
    let path = format!("{parent}/Road[{id}]");
    let id = req(n, &path, "Identifier")?.to_string();
    let speed_limit = num(&path, "SpeedLimit", req(n, &path, "SpeedLimit")?)?;
    let mut raw = Vec::new();
    for l in n.children().filter(|c| c.has_tag_name("Lane")) {
        raw.push(parse_lane(&l, &path)?);
    }
    if raw.is_empty() {
        return Err(DrsError::MissingElement { path, element: "Lane".into() });
    }
    let center = raw
        .iter()
        .position(|l| l.coord == LaneCoord::CENTER)
        .ok_or_else(|| DrsError::MissingElement { path: path.clone(), element: "Lane (0,0)".into() })?;
    let bases: Vec<CubicBezier> = raw[center].curves.iter().map(|c| c.base).collect();
    let mut lanes = Vec::with_capacity(raw.len());
    for l in raw {
        if let Some(rid) = &l.road_id {
            if *rid != id {
                return Err(DrsError::Dangling { path: l.path, attr: "RoadIdentifier".into(), value: rid.clone() });
            }
        }
        if l.curves.len() != bases.len() {
            return Err(DrsError::Invalid {
                path: l.path,
                message: format!("{} curves but the center lane has {}", l.curves.len(), bases.len()),
            });
        }
        let pieces = l.curves.iter().zip(&bases).map(|(c, b)| (c.id.clone(), *b)).collect();
        let mut lane = make_lane(l.id, l.coord, l.road_id, l.chain_id, pieces, r, l.closed)
            .map_err(|source| DrsError::Geometry { path: l.path.clone(), source })?;
        lane.declared = l.curves.into_iter().map(|c| c.declared).collect();
        lane.description = l.description;
        lane.extra = l.extra;
        lanes.push(lane);
    }
    Ok(Road {
        id,
        description: n.attribute("Description").map(str::to_string),
        speed_limit,
        lanes,
        extra: extras(n, ROAD_ATTRS),
    })
}

fn attachment(n: &Node, path: &str, prefix: &str) -> Result<Option<Attachment>, DrsError> {
    let road_attr = format!("{prefix}RoadIdentifier");
    let lane_attr = format!("{prefix}LaneIdentifier");
    let param_attr = format!("{prefix}LaneParameter");
    let Some(road) = n.attribute(road_attr.as_str()) else {
        for a in [&lane_attr, &param_attr] {
            if n.attribute(a.as_str()).is_some() {
                return Err(DrsError::Invalid {
                    path: path.into(),
                    message: format!("{road_attr} must be defined when {a} is given"),
                });
            }
        }
        return Ok(None);
    };
    let get = |a: &str| {
        n.attribute(a).ok_or_else(|| DrsError::Invalid {
            path: path.into(),
            message: format!("{a} must be defined when {road_attr} is given"),
        })
    };
    let lane_text = get(&lane_attr)?;
    let param_text = get(&param_attr)?;
    let lane = lane_text.parse().map_err(|_| DrsError::BadValue {
        path: path.into(),
        attr: lane_attr.clone(),
        value: lane_text.into(),
    })?;
    Ok(Some(Attachment { road: road.into(), lane, param: num(path, &param_attr, param_text)? }))
}

fn parse_ramp(n: &Node, parent: &str, r: f64) -> Result<Ramp, DrsError> {
    let id = n.attribute("Identifier").unwrap_or("?");
    let path = format!("{parent}/Ramp[{id}]");
    let id = req(n, &path, "Identifier")?.to_string();
    let road_node = n
        .children()
        .find(|c| c.has_tag_name("Road"))
        .ok_or_else(|| DrsError::MissingElement { path: path.clone(), element: "Road".into() })?;
    let road = parse_road(&road_node, &path, r)?;
    if road.lanes.len() != 1 {
        return Err(DrsError::Invalid {
            path,
            message: format!("ramp road must have exactly one lane, found {}", road.lanes.len()),
        });
    }
    Ok(Ramp {
        id,
        description: n.attribute("Description").map(str::to_string),
        entry: attachment(n, &path, "Entry")?,
        exit: attachment(n, &path, "Exit")?,
        road,
        extra: extras(n, RAMP_ATTRS),
    })
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn fmt_point(p: &Vec3) -> String {
    format!("{},{},{}", p.x, p.y, p.z)
}

fn attrs<K: AsRef<str>>(out: &mut String, list: &[(K, String)], extra: &BTreeMap<String, String>) {
    for (k, v) in list {
        let _ = write!(out, " {}=\"{}\"", k.as_ref(), esc(v));
    }
    for (k, v) in extra {
        let _ = write!(out, " {k}=\"{}\"", esc(v));
    }
}

fn write_lane(out: &mut String, lane: &Lane, indent: &str) {
    let mut a = vec![("Identifier", lane.id.clone())];
    if let Some(d) = &lane.description {
        a.push(("Description", d.clone()));
    }
    a.push(("LaneIdentifier", lane.coord.to_string()));
    if let Some(r) = &lane.road_id {
        a.push(("RoadIdentifier", r.clone()));
    }
    if !lane.closed.is_empty() {
        let list: Vec<String> = lane.closed.iter().map(usize::to_string).collect();
        a.push(("ClosedCurves", list.join(" ")));
    }
    let _ = write!(out, "{indent}<Lane");
    attrs(out, &a, &lane.extra);
    out.push_str(">\n");
    let ch = &lane.chain;
    let _ = writeln!(
        out,
        "{indent}  <ChainedCurve Identifier=\"{}\" StartParameter=\"{}\" EndParameter=\"{}\">",
        esc(&ch.id),
        ch.start_param(),
        ch.end_param()
    );
    // parallel lanes take their shape from the center lane, so only the end points are written
    let derived = lane.coord != LaneCoord::CENTER;
    for c in &ch.curves {
        let _ = write!(
            out,
            "{indent}    <Curve Identifier=\"{}\" StartParameter=\"{}\" EndParameter=\"{}\" StartPoint=\"{}\" EndPoint=\"{}\"",
            esc(&c.id),
            c.start_param,
            c.end_param,
            fmt_point(&c.start_point),
            fmt_point(&c.end_point)
        );
        if derived {
            out.push_str("/>\n");
            continue;
        }
        out.push_str(">\n");
        for p in &c.base.p[1..3] {
            let _ = writeln!(out, "{indent}      <ControlPoint x=\"{}\" y=\"{}\" z=\"{}\"/>", p.x, p.y, p.z);
        }
        let _ = writeln!(out, "{indent}    </Curve>");
    }
    let _ = writeln!(out, "{indent}  </ChainedCurve>");
    let _ = writeln!(out, "{indent}</Lane>");
}

fn write_road(out: &mut String, road: &Road, indent: &str) {
    let mut a = vec![("Identifier", road.id.clone())];
    if let Some(d) = &road.description {
        a.push(("Description", d.clone()));
    }
    a.push(("SpeedLimit", road.speed_limit.to_string()));
    let _ = write!(out, "{indent}<Road");
    attrs(out, &a, &road.extra);
    out.push_str(">\n");
    let inner = format!("{indent}  ");
    for lane in &road.lanes {
        write_lane(out, lane, &inner);
    }
    let _ = writeln!(out, "{indent}</Road>");
}

/// Serializes a system; curve parameters and end points are the computed values.
pub fn to_xml(drs: &DroneRoadSystem) -> String {
    to_xml_with_comment(drs, None)
}

/// Like [`to_xml`], with an optional leading comment.
pub fn to_xml_with_comment(drs: &DroneRoadSystem, comment: Option<&str>) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    if let Some(c) = comment {
        let _ = writeln!(out, "<!--\n{}\n-->", c.replace("--", "- -"));
    }
    out.push_str("<DroneRoadSystem");
    attrs(
        &mut out,
        &[
            ("Name", drs.name.clone()),
            ("Version", drs.version.clone()),
            ("LaneRadius", drs.lane_radius.to_string()),
        ],
        &drs.extra,
    );
    out.push_str(">\n");
    for road in &drs.roads {
        write_road(&mut out, road, "  ");
    }
    for ramp in &drs.ramps {
        let mut a = vec![("Identifier".to_string(), ramp.id.clone())];
        if let Some(d) = &ramp.description {
            a.push(("Description".into(), d.clone()));
        }
        for (prefix, att) in [("Entry", &ramp.entry), ("Exit", &ramp.exit)] {
            if let Some(att) = att {
                a.push((format!("{prefix}RoadIdentifier"), att.road.clone()));
                a.push((format!("{prefix}LaneIdentifier"), att.lane.to_string()));
                a.push((format!("{prefix}LaneParameter"), att.param.to_string()));
            }
        }
        out.push_str("  <Ramp");
        attrs(&mut out, &a, &ramp.extra);
        out.push_str(">\n");
        write_road(&mut out, &ramp.road, "    ");
        out.push_str("  </Ramp>\n");
    }
    out.push_str("</DroneRoadSystem>\n");
    out
}
