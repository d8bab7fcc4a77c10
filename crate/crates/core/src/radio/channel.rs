use std::collections::BTreeMap;

use rustc_hash::FxHashMap;

use rand::Rng;

use super::{received_power, Beacon, RadioConfig};
use crate::geometry::Vec3;

/// Radio events the engine must schedule back into the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioEvent {
    /// Backoff expiry for `node`; stale if `token` no longer matches.
    MacTry { node: usize, token: u64 },
    FrameEnd { frame: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub receiver: usize,
    pub beacon: Beacon,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelStats {
    pub beacons: u64,
    pub frames_sent: u64,
    pub queue_drops: u64,
    pub receptions: u64,
    pub delivered: u64,
    pub lost_sinr: u64,
    pub lost_half_duplex: u64,
    /// Sum of frame airtimes, s.
    pub airtime: f64,
}

impl ChannelStats {
    /// Fraction of in-range receptions that failed.
    pub fn loss_rate(&self) -> f64 {
        if self.receptions == 0 {
            0.0
        } else {
            (self.lost_sinr + self.lost_half_duplex) as f64 / self.receptions as f64
        }
    }
}

#[derive(Debug)]
enum Mac {
    Idle,
    Contending { beacon: Beacon, remaining: u32, idle_since: f64, frozen: bool },
    Transmitting,
}

#[derive(Debug)]
struct Node {
    pos: Vec3,
    alive: bool,
    busy: u32,
    mac: Mac,
    queued: Option<Beacon>,
    token: u64,
}

#[derive(Debug)]
struct Reception {
    receiver: usize,
    signal: f64,
    interference: f64,
    worst: f64,
    /// Interference contributions by frame, removed when those frames end.
    parts: Vec<(u64, f64)>,
    aborted: bool,
}

#[derive(Debug)]
struct Frame {
    sender: usize,
    tx_pos: Vec3,
    beacon: Beacon,
    sensed: Vec<usize>,
    receptions: Vec<Reception>,
}

type Cell = (i64, i64, i64);

/// Shared broadcast medium. Node ids are caller-chosen indices.
#[derive(Debug)]
pub struct Channel {
    cfg: RadioConfig,
    nodes: Vec<Option<Node>>,
    grid: FxHashMap<Cell, Vec<usize>>,
    cell: f64,
    /// Squared distance beyond which power is below the interference floor,
    /// padded so rounding never drops a contribution.
    interference_range2: f64,
    frames: BTreeMap<u64, Frame>,
    next_frame: u64,
    pub stats: ChannelStats,
}

impl Channel {
    pub fn new(cfg: RadioConfig) -> Channel {
        let cell = cfg.reception_range().max(1.0);
        let ir = cfg.interference_range();
        let interference_range2 = if ir.is_finite() { (ir * (1.0 + 1e-9) + 1e-6).powi(2) } else { f64::INFINITY };
        Channel {
            interference_range2,
            cfg,
            nodes: Vec::new(),
            grid: FxHashMap::default(),
            cell,
            frames: BTreeMap::new(),
            next_frame: 0,
            stats: ChannelStats::default(),
        }
    }

    pub fn config(&self) -> &RadioConfig {
        &self.cfg
    }

    pub fn add_node(&mut self, id: usize, pos: Vec3) {
        if self.nodes.len() <= id {
            self.nodes.resize_with(id + 1, || None);
        }
        self.nodes[id] = Some(Node { pos, alive: true, busy: 0, mac: Mac::Idle, queued: None, token: 0 });
        self.grid.entry(self.cell_of(&pos)).or_default().push(id);
    }

    /// Marks a node gone; frames it already has on air still complete.
    pub fn remove_node(&mut self, id: usize) {
        if let Some(Some(n)) = self.nodes.get_mut(id) {
            n.alive = false;
            n.token += 1;
            n.queued = None;
            if !matches!(n.mac, Mac::Transmitting) {
                n.mac = Mac::Idle;
            }
        }
    }

    pub fn set_position(&mut self, id: usize, pos: Vec3) {
        if let Some(Some(n)) = self.nodes.get_mut(id) {
            n.pos = pos;
        }
    }

    /// Rebuilds the neighbour index from current positions.
    pub fn rebuild_index(&mut self) {
        for v in self.grid.values_mut() {
            v.clear();
        }
        let cell = self.cell;
        for (id, n) in self.nodes.iter().enumerate() {
            if let Some(n) = n {
                if n.alive {
                    let c = cell_of(cell, &n.pos);
                    self.grid.entry(c).or_default().push(id);
                }
            }
        }
        self.grid.retain(|_, v| !v.is_empty());
    }

    fn cell_of(&self, p: &Vec3) -> Cell {
        cell_of(self.cell, p)
    }

    /// Alive nodes other than `except` within reception range of `p`, ascending.
    fn in_range(&self, p: &Vec3, except: usize) -> Vec<usize> {
        let range = self.cfg.reception_range();
        let (cx, cy, cz) = self.cell_of(p);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(ids) = self.grid.get(&(cx + dx, cy + dy, cz + dz)) else { continue };
                    for &id in ids {
                        if id == except {
                            continue;
                        }
                        if let Some(n) = &self.nodes[id] {
                            if n.alive && (n.pos - p).norm() <= range {
                                out.push(id);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn power_at(&self, from: &Vec3, to: &Vec3) -> f64 {
        received_power(&self.cfg, self.cfg.transmit_power, (to - from).norm().max(1e-3)).unwrap_or(0.0)
    }

    /// Received power from `from`, or `None` when below the interference floor.
    fn interference_at(&self, from: &Vec3, to: &Vec3) -> Option<f64> {
        let d2 = (to - from).norm_squared();
        if d2 > self.interference_range2 {
            return None;
        }
        let p = self.power_at(from, to);
        (p >= self.cfg.interference_threshold).then_some(p)
    }

    /// Instant lossless delivery used by the ideal radio mode.
    pub fn broadcast_ideal(&mut self, sender: usize, beacon: Beacon) -> Vec<Delivery> {
        self.stats.beacons += 1;
        let Some(Some(n)) = self.nodes.get(sender) else { return Vec::new() };
        let pos = n.pos;
        let out: Vec<Delivery> = self
            .in_range(&pos, sender)
            .into_iter()
            .map(|receiver| Delivery { receiver, beacon: beacon.clone() })
            .collect();
        self.stats.frames_sent += 1;
        self.stats.receptions += out.len() as u64;
        self.stats.delivered += out.len() as u64;
        out
    }

    /// Hands a fresh beacon to the MAC; a beacon still waiting is replaced.
    pub fn enqueue<R: Rng>(
        &mut self,
        id: usize,
        beacon: Beacon,
        now: f64,
        rng: &mut R,
        out: &mut Vec<(f64, RadioEvent)>,
    ) {
        self.stats.beacons += 1;
        let Some(Some(n)) = self.nodes.get_mut(id) else { return };
        if !n.alive {
            return;
        }
        match &mut n.mac {
            Mac::Transmitting => {
                if n.queued.replace(beacon).is_some() {
                    self.stats.queue_drops += 1;
                }
            }
            Mac::Contending { beacon: b, .. } => {
                *b = beacon;
                self.stats.queue_drops += 1;
            }
            Mac::Idle => self.contend(id, beacon, now, rng, out),
        }
    }

    fn contend<R: Rng>(&mut self, id: usize, beacon: Beacon, now: f64, rng: &mut R, out: &mut Vec<(f64, RadioEvent)>) {
        let remaining = rng.gen_range(0..=self.cfg.cw_min);
        let (aifs, slot) = (self.cfg.aifs(), self.cfg.slot_time);
        let Some(Some(n)) = self.nodes.get_mut(id) else { return };
        n.token += 1;
        let idle = n.busy == 0;
        n.mac = Mac::Contending { beacon, remaining, idle_since: now, frozen: !idle };
        if idle {
            out.push((now + aifs + remaining as f64 * slot, RadioEvent::MacTry { node: id, token: n.token }));
        }
    }

    /// Stops a node's backoff countdown because the medium turned busy.
    fn freeze(&mut self, id: usize, now: f64) {
        let (aifs, slot) = (self.cfg.aifs(), self.cfg.slot_time);
        let Some(Some(n)) = self.nodes.get_mut(id) else { return };
        if let Mac::Contending { remaining, idle_since, frozen, .. } = &mut n.mac {
            if *frozen {
                return;
            }
            let start = *idle_since + aifs;
            let deadline = start + *remaining as f64 * slot;
            // a node whose backoff ends in this very instant cannot sense the other sender
            if deadline <= now {
                return;
            }
            if now > start {
                let elapsed = ((now - start) / slot + 1e-9).floor() as u32;
                *remaining = remaining.saturating_sub(elapsed);
            }
            *frozen = true;
            n.token += 1;
        }
    }

    fn resume(&mut self, id: usize, now: f64, out: &mut Vec<(f64, RadioEvent)>) {
        let (aifs, slot) = (self.cfg.aifs(), self.cfg.slot_time);
        let Some(Some(n)) = self.nodes.get_mut(id) else { return };
        if let Mac::Contending { remaining, idle_since, frozen, .. } = &mut n.mac {
            if !*frozen || !n.alive {
                return;
            }
            *frozen = false;
            *idle_since = now;
            n.token += 1;
            out.push((now + aifs + *remaining as f64 * slot, RadioEvent::MacTry { node: id, token: n.token }));
        }
    }

    /// Processes a scheduled radio event; finished frames yield deliveries.
    pub fn handle<R: Rng>(
        &mut self,
        ev: RadioEvent,
        now: f64,
        rng: &mut R,
        out: &mut Vec<(f64, RadioEvent)>,
        delivered: &mut Vec<Delivery>,
    ) {
        match ev {
            RadioEvent::MacTry { node, token } => {
                let ok = matches!(
                    self.nodes.get(node),
                    Some(Some(n)) if n.alive && n.token == token && matches!(n.mac, Mac::Contending { frozen: false, .. })
                );
                if ok {
                    self.start_frame(node, now, out);
                }
            }
            RadioEvent::FrameEnd { frame } => self.end_frame(frame, now, rng, out, delivered),
        }
    }

    fn start_frame(&mut self, id: usize, now: f64, out: &mut Vec<(f64, RadioEvent)>) {
        let n = self.nodes[id].as_mut().expect("checked by caller");
        let Mac::Contending { beacon, .. } = std::mem::replace(&mut n.mac, Mac::Transmitting) else {
            return;
        };
        n.token += 1;
        let tx_pos = n.pos;
        let f = self.next_frame;
        self.next_frame += 1;
        // half duplex: anything this node was receiving is lost
        for fr in self.frames.values_mut() {
            for r in fr.receptions.iter_mut().filter(|r| r.receiver == id) {
                r.aborted = true;
            }
        }
        let sensed = self.in_range(&tx_pos, id);
        for &k in &sensed {
            let busy_before = {
                let node = self.nodes[k].as_mut().expect("in range");
                node.busy += 1;
                node.busy - 1
            };
            if busy_before == 0 {
                self.freeze(k, now);
            }
        }
        let mut receptions = Vec::new();
        for &k in &sensed {
            let node = self.nodes[k].as_ref().expect("in range");
            if matches!(node.mac, Mac::Transmitting) {
                continue;
            }
            let pos = node.pos;
            let mut parts = Vec::with_capacity(self.frames.len() + 4);
            for (&g, fr) in &self.frames {
                if let Some(p) = self.interference_at(&fr.tx_pos, &pos) {
                    parts.push((g, p));
                }
            }
            let interference: f64 = parts.iter().map(|x| x.1).sum();
            receptions.push(Reception {
                receiver: k,
                signal: self.power_at(&tx_pos, &pos),
                interference,
                worst: interference,
                parts,
                aborted: false,
            });
        }
        let mut frames = std::mem::take(&mut self.frames);
        for fr in frames.values_mut() {
            for r in fr.receptions.iter_mut() {
                let Some(node) = &self.nodes[r.receiver] else { continue };
                if let Some(p) = self.interference_at(&tx_pos, &node.pos) {
                    r.parts.push((f, p));
                    r.interference += p;
                    r.worst = r.worst.max(r.interference);
                }
            }
        }
        self.frames = frames;
        self.stats.frames_sent += 1;
        self.stats.airtime += self.cfg.airtime();
        out.push((now + self.cfg.airtime(), RadioEvent::FrameEnd { frame: f }));
        self.frames.insert(f, Frame { sender: id, tx_pos, beacon, sensed, receptions });
    }

    fn end_frame<R: Rng>(
        &mut self,
        f: u64,
        now: f64,
        rng: &mut R,
        out: &mut Vec<(f64, RadioEvent)>,
        delivered: &mut Vec<Delivery>,
    ) {
        let Some(frame) = self.frames.remove(&f) else { return };
        for fr in self.frames.values_mut() {
            for r in fr.receptions.iter_mut() {
                if let Some(i) = r.parts.iter().position(|x| x.0 == f) {
                    r.interference -= r.parts.swap_remove(i).1;
                }
            }
        }
        let thr = self.cfg.sinr_threshold();
        let noise = self.cfg.noise_power;
        for r in &frame.receptions {
            self.stats.receptions += 1;
            let alive = matches!(&self.nodes[r.receiver], Some(n) if n.alive);
            if r.aborted {
                self.stats.lost_half_duplex += 1;
            } else if r.signal / (noise + r.worst) >= thr {
                if alive {
                    self.stats.delivered += 1;
                    delivered.push(Delivery { receiver: r.receiver, beacon: frame.beacon.clone() });
                }
            } else {
                self.stats.lost_sinr += 1;
            }
        }
        for &k in &frame.sensed {
            let now_idle = match self.nodes[k].as_mut() {
                Some(n) => {
                    n.busy = n.busy.saturating_sub(1);
                    n.busy == 0
                }
                None => false,
            };
            if now_idle {
                self.resume(k, now, out);
            }
        }
        let sender = frame.sender;
        let next = match self.nodes[sender].as_mut() {
            Some(n) => {
                n.mac = Mac::Idle;
                if n.alive {
                    n.queued.take()
                } else {
                    None
                }
            }
            None => None,
        };
        if let Some(b) = next {
            self.contend(sender, b, now, rng, out);
        }
    }

    /// Number of frames currently on air.
    pub fn frames_on_air(&self) -> usize {
        self.frames.len()
    }
}

fn cell_of(cell: f64, p: &Vec3) -> Cell {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
}
