use super::*;
use crate::drs::{DrsBuilder, LaneSpec};
use crate::geometry::CubicBezier;
use crate::radio::RadioConfig;

fn x(v: f64) -> Vec3 {
    Vec3::new(v, 0.0, 100.0)
}

fn straight(len: f64) -> DroneRoadSystem {
    let mut b = DrsBuilder::new("t", "1", 10.0);
    b.road(
        "A",
        15.0,
        vec![CubicBezier::line(x(0.0), x(len))],
        vec![LaneSpec::open(LaneCoord::CENTER), LaneSpec::open(LaneCoord::new(1, 0))],
    );
    b.build().unwrap()
}

const ROAD: SegmentRef = SegmentRef::Road(0);

fn ideal() -> SimConfig {
    SimConfig {
        radio: RadioConfig { mode: RadioMode::Ideal, ..RadioConfig::default() },
        sim_time: 100.0,
        warmup: 0.0,
        ..SimConfig::default()
    }
}

fn parked(param: f64, lane: LaneCoord, end: f64) -> Spawn {
    Spawn { seg: ROAD, lane, param, exit: (ROAD, lane, end), v_pref: 12.0, invoke_after: 1e6 }
}

#[test]
fn closest_approach_cases() {
    let a = Vec3::new(1.0, 0.0, 0.0);
    assert_eq!(closest_approach(a, a), 1.0);
    // passing through each other between ticks
    assert!(closest_approach(Vec3::new(1.0, 0.2, 0.0), Vec3::new(-1.0, 0.2, 0.0)) < 0.2 + 1e-12);
    assert_eq!(closest_approach(Vec3::new(3.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)), 2.0);
}

#[test]
fn queue_orders_by_time_class_sequence() {
    let mut h = BinaryHeap::new();
    h.push(Queued { t: 1.0, class: 3, seq: 1, ev: Ev::Beacon(0) });
    h.push(Queued { t: 0.5, class: 4, seq: 2, ev: Ev::Beacon(1) });
    h.push(Queued { t: 1.0, class: 0, seq: 3, ev: Ev::Beacon(2) });
    h.push(Queued { t: 1.0, class: 3, seq: 0, ev: Ev::Beacon(3) });
    let order: Vec<u64> = std::iter::from_fn(|| h.pop().map(|q| q.seq)).collect();
    assert_eq!(order, vec![2, 3, 0, 1]);
}

#[test]
fn lone_drone_flies_at_preferred_speed_and_arrives() {
    let drs = straight(300.0);
    let mut sim = Simulation::new(&drs, ideal()).unwrap();
    let id = sim
        .spawn(Spawn { seg: ROAD, lane: LaneCoord::CENTER, param: 0.0, exit: (ROAD, LaneCoord::CENTER, 300.0), v_pref: 12.0, invoke_after: 0.0 })
        .unwrap();
    sim.run_until(1.0).unwrap();
    let v = sim.drone(id).unwrap();
    assert!((v.param - 12.0).abs() < 1e-9);
    assert_eq!(v.phase, Phase::Cruising);
    sim.run_until(30.0).unwrap();
    let out = sim.finish();
    assert_eq!(out.totals.arrived, 1);
    assert!((out.totals.distance - 300.0).abs() < 1e-6);
    assert!((out.totals.active_time - 25.0).abs() < 1e-6);
    assert!((out.average_speed() - 12.0).abs() < 1e-9);
    assert_eq!(out.series.len(), 30);
    assert_eq!(out.series.iter().map(|b| b.ac).sum::<u64>(), 1);
    assert_eq!(out.series[0].ic, 1);
}

#[test]
fn switch_moves_laterally_and_hands_over_beacon_lane() {
    let drs = straight(400.0);
    let mut sim = Simulation::new(&drs, ideal()).unwrap();
    // routed to the end of (1,0): the first decision switches over
    let id = sim
        .spawn(Spawn { seg: ROAD, lane: LaneCoord::CENTER, param: 20.0, exit: (ROAD, LaneCoord::new(1, 0), 400.0), v_pref: 12.0, invoke_after: 0.0 })
        .unwrap();
    for _ in 0..3 {
        sim.step().unwrap();
    }
    assert_eq!(sim.beacon_of(id, sim.now()).unwrap().lane, LaneCoord::CENTER);
    sim.step().unwrap();
    sim.step().unwrap();
    let v = sim.drone(id).unwrap();
    let Phase::Switching { from, to, progress } = v.phase else { panic!("not switching: {:?}", v.phase) };
    assert_eq!((from, to), (LaneCoord::CENTER, LaneCoord::new(1, 0)));
    assert!((progress - 0.5).abs() < 1e-9);
    let center = drs.position(ROAD, LaneCoord::CENTER, v.param).unwrap();
    let dest = drs.position(ROAD, to, v.param).unwrap();
    assert!(((v.position - center).norm() - 10.0).abs() < 1e-6);
    assert!(((v.position - dest).norm() - 10.0).abs() < 1e-6);
    sim.step().unwrap();
    assert_eq!(sim.beacon_of(id, sim.now()).unwrap().lane, to);
    sim.run_until(1.5).unwrap();
    let v = sim.drone(id).unwrap();
    assert_eq!(v.phase, Phase::Cruising);
    assert!((v.position - drs.position(ROAD, to, v.param).unwrap()).norm() < 1e-6);
}

#[test]
fn injection_needs_clearance() {
    let drs = straight(400.0);
    let mut sim = Simulation::new(&drs, ideal()).unwrap();
    sim.spawn(parked(25.0, LaneCoord::CENTER, 400.0)).unwrap();
    // 25 m along the same lane is inside eps2
    assert!(!sim.clear_to_inject(ROAD, LaneCoord::CENTER, 0.0));
    // the neighbouring lane start is sqrt(20^2 + 25^2) m away
    assert!(sim.clear_to_inject(ROAD, LaneCoord::new(1, 0), 0.0));
    sim.spawn(parked(5.0, LaneCoord::new(1, 0), 400.0)).unwrap();
    // 5 m past the start of (1,0) is within 2r of the center lane start too
    assert!(!sim.clear_to_inject(ROAD, LaneCoord::new(1, 0), 0.0));
    assert!(!sim.clear_to_inject(ROAD, LaneCoord::CENTER, 0.0));
    assert!(sim.clear_to_inject(ROAD, LaneCoord::CENTER, 60.0));
}

#[test]
fn colliding_drones_are_removed_together() {
    let drs = straight(400.0);
    let mut sim = Simulation::new(&drs, SimConfig { event_log: true, ..ideal() }).unwrap();
    for p in [10.0, 10.3, 10.6, 100.0] {
        sim.spawn(parked(p, LaneCoord::CENTER, 400.0)).unwrap();
    }
    sim.step().unwrap();
    assert_eq!(sim.active_ids(), &[3]);
    let t = sim.totals();
    assert_eq!((t.injected, t.collided, t.conservation_violations), (4, 3, 0));
    assert!(matches!(&sim.events()[4], LogRecord::Collision { drones, .. } if drones == &vec![0, 1, 2]));
}

#[test]
fn no_generation_at_zero_rate() {
    let drs = straight(400.0);
    let cfg = SimConfig { generation_rate: 0.0, sim_time: 50.0, warmup: 0.0, ..SimConfig::default() };
    let out = super::super::run(&drs, &cfg).unwrap();
    assert_eq!(out.totals.generated, 0);
    assert_eq!(out.series.len(), 50);
    assert!(out.series.iter().all(|b| b.ic == 0 && b.ac == 0 && b.nc == 0));
}

#[test]
fn generation_is_poisson_per_entry_lane() {
    let drs = straight(400.0);
    let cfg = SimConfig { generation_rate: 1.0, sim_time: 200.0, warmup: 0.0, ..ideal() };
    let out = super::super::run(&drs, &cfg).unwrap();
    // two entry lanes at one drone per second each: 400 expected, sd 20
    let g = out.totals.generated as f64;
    assert!((320.0..480.0).contains(&g), "generated {g}");
    assert!(out.totals.injected <= out.totals.generated);
    assert_eq!(out.totals.conservation_violations, 0);
}

#[test]
fn same_seed_same_run() {
    let drs = crate::drs::asset::intersection().unwrap();
    let cfg = SimConfig { generation_rate: 0.1, sim_time: 60.0, warmup: 0.0, event_log: true, seed: 7, ..SimConfig::default() };
    let dump = |o: &RunOutput| {
        let mut buf = Vec::new();
        o.write_series_csv(&mut buf).unwrap();
        o.write_events(&mut buf).unwrap();
        buf
    };
    let a = super::super::run(&drs, &cfg).unwrap();
    let b = super::super::run(&drs, &cfg).unwrap();
    assert!(a.totals.injected > 0);
    assert_eq!(dump(&a), dump(&b));
    assert_eq!(a.totals, b.totals);
    let c = super::super::run(&drs, &SimConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(dump(&a), dump(&c));
}

#[test]
fn ramp_route_is_flown_end_to_end() {
    let drs = crate::drs::asset::intersection().unwrap();
    let mut sim = Simulation::new(&drs, SimConfig { sim_time: 600.0, ..ideal() }).unwrap();
    // an entry whose route changes road over a ramp
    let (e, plan) = sim
        .routes
        .iter()
        .enumerate()
        .find_map(|(e, rs)| {
            rs.iter()
                .find(|(_, p)| p.segments.iter().any(|s| matches!(s.seg, SegmentRef::Ramp(_))))
                .map(|(_, p)| (e, p.clone()))
        })
        .expect("asset has a route over a ramp");
    let (seg, lane, param) = sim.entries[e];
    let last = plan.segments.last().unwrap();
    let exit = (last.seg, last.target.lane, last.target.param);
    let id = sim.spawn(Spawn { seg, lane, param, exit, v_pref: 12.0, invoke_after: 0.0 }).unwrap();
    let mut visited = vec![seg];
    while sim.drone(id).is_some() && sim.now() < 600.0 {
        sim.step().unwrap();
        if let Some(v) = sim.drone(id) {
            if *visited.last().unwrap() != v.seg {
                visited.push(v.seg);
            }
        }
    }
    let planned: Vec<SegmentRef> = plan.segments.iter().map(|s| s.seg).collect();
    assert_eq!(visited, planned);
    let t = sim.totals();
    assert_eq!((t.arrived, t.collided, t.replans, t.closed_lane_violations), (1, 0, 0, 0));
}
