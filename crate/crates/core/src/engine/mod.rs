//! Discrete-event simulation of drones flying a road system.
//!
//! Kinematics advance on a fixed tick; beacons, guidance invocations, radio
//! MAC events and drone generation are continuous-time events on a queue.

mod sim;

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::drs::{DroneRoadSystem, DrsError};
use crate::guidance::{GuidanceError, GuidanceParams, NEIGHBOR_TIMEOUT};
use crate::radio::{calibrate, ChannelStats, RadioConfig, RadioError, RadioMode};

pub use sim::{DroneView, Phase, Simulation, Spawn};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Drs(#[from] DrsError),
    #[error("drone {drone}: {message}")]
    Internal { drone: usize, message: String },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Drones per second per entry lane.
    pub generation_rate: f64,
    /// s
    pub sim_time: f64,
    /// Hint for analysis only; the engine records from t = 0.
    pub warmup: f64,
    pub seed: u64,
    pub radio: RadioConfig,
    pub guidance: GuidanceParams,
    /// m
    pub min_safety_distance: f64,
    /// Kinematics tick, s.
    pub dt: f64,
    /// Preferred speeds are drawn uniformly from this interval, m/s.
    pub speed_min: f64,
    pub speed_max: f64,
    /// s
    pub neighbor_timeout: f64,
    pub event_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            generation_rate: 0.05,
            sim_time: 1000.0,
            warmup: 200.0,
            seed: 1,
            radio: RadioConfig::default(),
            guidance: GuidanceParams::default(),
            min_safety_distance: 0.5,
            dt: 0.1,
            speed_min: 10.0,
            speed_max: 15.0,
            neighbor_timeout: NEIGHBOR_TIMEOUT,
            event_log: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if !(self.generation_rate >= 0.0 && self.generation_rate.is_finite()) {
            return bad(format!("generation rate must be non-negative, got {}", self.generation_rate));
        }
        if !(self.sim_time > 0.0 && self.sim_time.is_finite()) {
            return bad(format!("sim_time must be positive, got {}", self.sim_time));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.sim_time) {
            return bad(format!("warmup {} must lie in [0, sim_time)", self.warmup));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return bad(format!("tick must lie in (0, 1] s, got {}", self.dt));
        }
        if !(self.min_safety_distance > 0.0) {
            return bad("min_safety_distance must be positive".into());
        }
        if !(self.speed_min > 0.0 && self.speed_min <= self.speed_max) {
            return bad("speed interval must be positive and ordered".into());
        }
        if !(self.neighbor_timeout > 0.0) {
            return bad("neighbor timeout must be positive".into());
        }
        self.radio.validate()?;
        self.guidance.validate()?;
        Ok(())
    }

    /// Every key accepted by [`SimConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "sim.generation_rate",
        "sim.time",
        "sim.warmup",
        "sim.seed",
        "sim.dt",
        "sim.min_safety_distance",
        "sim.speed_min",
        "sim.speed_max",
        "sim.neighbor_timeout",
        "sim.event_log",
        "radio.mode",
        "radio.txpower_mw",
        "radio.beacon_rate_hz",
        "radio.payload_bytes",
        "radio.sinr_threshold_db",
        "radio.path_loss_exponent",
        "stdg.kappa1",
        "stdg.kappa2",
        "stdg.eps0",
        "stdg.eps1",
        "stdg.eps2",
        "stdg.eps3",
        "stdg.cmax",
        "stdg.u_normal",
        "stdg.u_stop",
        "stdg.switch_time",
        "stdg.priority",
    ];

    /// Sets one parameter from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), EngineError> {
        let v = value.trim();
        let num = || v.parse::<f64>().map_err(|_| EngineError::Config(format!("{key}: expected a number, got `{v}`")));
        let int = || v.parse::<u64>().map_err(|_| EngineError::Config(format!("{key}: expected an unsigned integer, got `{v}`")));
        let flag = || match v {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(EngineError::Config(format!("{key}: expected true or false, got `{v}`"))),
        };
        let g = &mut self.guidance;
        match key {
            "sim.generation_rate" => self.generation_rate = num()?,
            "sim.time" => self.sim_time = num()?,
            "sim.warmup" => self.warmup = num()?,
            "sim.seed" => self.seed = int()?,
            "sim.dt" => self.dt = num()?,
            "sim.min_safety_distance" => self.min_safety_distance = num()?,
            "sim.speed_min" => self.speed_min = num()?,
            "sim.speed_max" => self.speed_max = num()?,
            "sim.neighbor_timeout" => self.neighbor_timeout = num()?,
            "sim.event_log" => self.event_log = flag()?,
            "radio.mode" => {
                self.radio.mode = match v {
                    "csma" => RadioMode::Csma,
                    "ideal" => RadioMode::Ideal,
                    _ => return Err(EngineError::Config(format!("{key}: expected csma or ideal, got `{v}`"))),
                }
            }
            "radio.txpower_mw" => self.radio.transmit_power = num()? * 1e-3,
            "radio.beacon_rate_hz" => self.radio.beacon_rate = num()?,
            "radio.payload_bytes" => self.radio.payload_bytes = int()? as u32,
            "radio.sinr_threshold_db" => self.radio.sinr_threshold_db = num()?,
            "radio.path_loss_exponent" => {
                self.radio.path_loss_exponent = num()?;
                self.radio = calibrate(self.radio.clone());
            }
            "stdg.kappa1" => g.kappa1 = num()?,
            "stdg.kappa2" => g.kappa2 = num()?,
            "stdg.eps0" => g.eps0 = num()?,
            "stdg.eps1" => g.eps1 = num()?,
            "stdg.eps2" => g.eps2 = num()?,
            "stdg.eps3" => g.eps3 = num()?,
            "stdg.cmax" => g.c_max = num()?,
            "stdg.u_normal" => g.u_normal = num()?,
            "stdg.u_stop" => g.u_stop = num()?,
            "stdg.switch_time" => g.switch_time = num()?,
            "stdg.priority" => g.priority = flag()?,
            _ => return Err(EngineError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Textual value of one parameter, in the form [`SimConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Result<String, EngineError> {
        let g = &self.guidance;
        let r = &self.radio;
        Ok(match key {
            "sim.generation_rate" => self.generation_rate.to_string(),
            "sim.time" => self.sim_time.to_string(),
            "sim.warmup" => self.warmup.to_string(),
            "sim.seed" => self.seed.to_string(),
            "sim.dt" => self.dt.to_string(),
            "sim.min_safety_distance" => self.min_safety_distance.to_string(),
            "sim.speed_min" => self.speed_min.to_string(),
            "sim.speed_max" => self.speed_max.to_string(),
            "sim.neighbor_timeout" => self.neighbor_timeout.to_string(),
            "sim.event_log" => self.event_log.to_string(),
            "radio.mode" => match r.mode {
                RadioMode::Csma => "csma".into(),
                RadioMode::Ideal => "ideal".into(),
            },
            "radio.txpower_mw" => (r.transmit_power * 1e3).to_string(),
            "radio.beacon_rate_hz" => r.beacon_rate.to_string(),
            "radio.payload_bytes" => r.payload_bytes.to_string(),
            "radio.sinr_threshold_db" => r.sinr_threshold_db.to_string(),
            "radio.path_loss_exponent" => r.path_loss_exponent.to_string(),
            "stdg.kappa1" => g.kappa1.to_string(),
            "stdg.kappa2" => g.kappa2.to_string(),
            "stdg.eps0" => g.eps0.to_string(),
            "stdg.eps1" => g.eps1.to_string(),
            "stdg.eps2" => g.eps2.to_string(),
            "stdg.eps3" => g.eps3.to_string(),
            "stdg.cmax" => g.c_max.to_string(),
            "stdg.u_normal" => g.u_normal.to_string(),
            "stdg.u_stop" => g.u_stop.to_string(),
            "stdg.switch_time" => g.switch_time.to_string(),
            "stdg.priority" => g.priority.to_string(),
            _ => return Err(EngineError::UnknownKey(key.to_string())),
        })
    }
}

/// One row of the per-second series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondBin {
    /// End of the one-second bin, s.
    pub t: u64,
    pub ic: u64,
    pub ac: u64,
    pub nc: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Totals {
    pub generated: u64,
    pub injected: u64,
    pub arrived: u64,
    pub collided: u64,
    /// Routes re-planned after a missed switching point.
    pub replans: u64,
    /// m
    pub distance: f64,
    /// s
    pub active_time: f64,
    /// Ticks on which injected != arrived + collided + active.
    pub conservation_violations: u64,
    /// Drone-ticks spent on a closed stretch of a lane.
    pub closed_lane_violations: u64,
}

impl Totals {
    pub fn collision_rate(&self) -> f64 {
        if self.injected == 0 {
            0.0
        } else {
            self.collided as f64 / self.injected as f64
        }
    }

    pub fn average_speed(&self) -> f64 {
        if self.active_time > 0.0 {
            self.distance / self.active_time
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Injection { t: f64, drone: usize, seg: String, lane: String, param: f64, v_pref: f64 },
    Decision { t: f64, drone: usize, lane: String, target_lane: String, speed: f64 },
    Switch { t: f64, drone: usize, from: String, to: String },
    Collision { t: f64, drones: Vec<usize> },
    Arrival { t: f64, drone: usize },
}

impl LogRecord {
    pub fn time(&self) -> f64 {
        match self {
            LogRecord::Injection { t, .. }
            | LogRecord::Decision { t, .. }
            | LogRecord::Switch { t, .. }
            | LogRecord::Collision { t, .. }
            | LogRecord::Arrival { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub series: Vec<SecondBin>,
    pub totals: Totals,
    pub radio: ChannelStats,
    pub events: Vec<LogRecord>,
}

impl RunOutput {
    pub fn collision_rate(&self) -> f64 {
        self.totals.collision_rate()
    }

    pub fn average_speed(&self) -> f64 {
        self.totals.average_speed()
    }

    pub fn write_series_csv<W: Write>(&self, w: W) -> Result<(), EngineError> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.series {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> Summary {
        Summary {
            seed: self.seed,
            cr: self.collision_rate(),
            r#as: self.average_speed(),
            total_injected: self.totals.injected,
            total_arrived: self.totals.arrived,
            total_collided: self.totals.collided,
        }
    }

    pub fn write_events<W: Write>(&self, mut w: W) -> Result<(), EngineError> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e).map_err(|e| EngineError::Io(e.into()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub cr: f64,
    #[serde(rename = "as")]
    pub r#as: f64,
    pub total_injected: u64,
    pub total_arrived: u64,
    pub total_collided: u64,
}

pub fn write_summaries<W: Write>(rows: &[Summary], w: W) -> Result<(), EngineError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Runs one replication with Poisson drone generation on every entry lane.
pub fn run(drs: &DroneRoadSystem, cfg: &SimConfig) -> Result<RunOutput, EngineError> {
    let mut sim = Simulation::new(drs, cfg.clone())?;
    sim.start_generation();
    sim.run_until(cfg.sim_time)?;
    Ok(sim.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let mut cfg = SimConfig::default();
        for key in SimConfig::KEYS {
            let v = cfg.get(key).unwrap();
            cfg.set(key, &v).unwrap();
        }
        assert_eq!(cfg, SimConfig::default());
        cfg.set("stdg.kappa1", "100").unwrap();
        assert_eq!(cfg.guidance.kappa1, 100.0);
        cfg.set("radio.txpower_mw", "20").unwrap();
        assert!((cfg.radio.reception_range() - 790.6).abs() < 1.0);
        assert!(matches!(cfg.set("stdg.kappa9", "1"), Err(EngineError::UnknownKey(k)) if k == "stdg.kappa9"));
        assert!(cfg.set("sim.seed", "-1").is_err());
        assert!(cfg.set("radio.mode", "lora").is_err());
    }
}
