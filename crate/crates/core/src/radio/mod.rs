//! Beacon radio: log-distance path loss, SINR reception and a CSMA/CA
//! broadcast MAC without acknowledgements.

mod channel;

use thiserror::Error;

use crate::drs::SegmentRef;
use crate::geometry::{LaneCoord, Vec3};

pub use channel::{Channel, ChannelStats, Delivery, RadioEvent};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("received power undefined at distance {0}")]
    UndefinedDistance(f64),
    #[error("invalid radio configuration: {0}")]
    Config(String),
}

/// How beacons travel between drones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioMode {
    /// Full MAC and SINR model.
    Csma,
    /// Instant, lossless delivery to every node within reception range.
    Ideal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub mode: RadioMode,
    /// Hz
    pub center_frequency: f64,
    /// Hz
    pub bandwidth: f64,
    /// bit/s
    pub data_rate: f64,
    /// W
    pub transmit_power: f64,
    pub path_loss_exponent: f64,
    /// W
    pub noise_power: f64,
    /// Minimum received power for reception and carrier sense, W.
    pub sensitivity: f64,
    /// Received power at which a signal stops counting as interference, W.
    pub interference_threshold: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub aifs_slots: u32,
    /// s
    pub slot_time: f64,
    /// s
    pub sifs: f64,
    /// s
    pub preamble_time: f64,
    pub payload_bytes: u32,
    pub sinr_threshold_db: f64,
    /// Hz
    pub beacon_rate: f64,
}

impl Default for RadioConfig {
    /// 2 mW at 10 Hz, calibrated.
    fn default() -> Self {
        calibrate(RadioConfig {
            mode: RadioMode::Csma,
            center_frequency: 2.437e9,
            bandwidth: 1e7,
            data_rate: 1.2e7,
            transmit_power: 2e-3,
            path_loss_exponent: 2.0,
            noise_power: dbm_to_watt(-110.0),
            sensitivity: 0.0,
            interference_threshold: 0.0,
            cw_min: 31,
            cw_max: 1023,
            aifs_slots: 7,
            slot_time: 13e-6,
            sifs: 32e-6,
            preamble_time: 40e-6,
            payload_bytes: 100,
            sinr_threshold_db: 6.0,
            beacon_rate: 10.0,
        })
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        let positive = [
            ("center_frequency", self.center_frequency),
            ("bandwidth", self.bandwidth),
            ("data_rate", self.data_rate),
            ("transmit_power", self.transmit_power),
            ("path_loss_exponent", self.path_loss_exponent),
            ("noise_power", self.noise_power),
            ("sensitivity", self.sensitivity),
            ("slot_time", self.slot_time),
            ("sifs", self.sifs),
            ("preamble_time", self.preamble_time),
            ("beacon_rate", self.beacon_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RadioError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sensitivity <= self.noise_power {
            return Err(RadioError::Config("sensitivity must exceed the noise power".into()));
        }
        if self.payload_bytes == 0 || self.cw_min == 0 || self.cw_max < self.cw_min {
            return Err(RadioError::Config("payload, cw_min and cw_max must be positive with cw_min <= cw_max".into()));
        }
        Ok(())
    }

    fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency
    }

    pub fn sinr_threshold(&self) -> f64 {
        10f64.powf(self.sinr_threshold_db / 10.0)
    }

    /// Distance at which received power falls to `level`.
    pub fn range_for(&self, level: f64) -> f64 {
        self.wavelength() / (4.0 * std::f64::consts::PI)
            * (self.transmit_power / level).powf(1.0 / self.path_loss_exponent)
    }

    pub fn reception_range(&self) -> f64 {
        self.range_for(self.sensitivity)
    }

    pub fn interference_range(&self) -> f64 {
        self.range_for(self.interference_threshold)
    }

    /// Frame duration on air, s.
    pub fn airtime(&self) -> f64 {
        self.preamble_time + self.payload_bytes as f64 * 8.0 / self.data_rate
    }

    /// Arbitration inter-frame space, s.
    pub fn aifs(&self) -> f64 {
        self.sifs + self.aifs_slots as f64 * self.slot_time
    }

    pub fn received_power(&self, distance: f64) -> Result<f64, RadioError> {
        received_power(self, self.transmit_power, distance)
    }
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// Log-distance path loss with the free-space form at the 1 m reference.
pub fn received_power(cfg: &RadioConfig, tx_power: f64, distance: f64) -> Result<f64, RadioError> {
    if !(distance > 0.0) {
        return Err(RadioError::UndefinedDistance(distance));
    }
    let k = cfg.wavelength() / (4.0 * std::f64::consts::PI);
    let decay = if cfg.path_loss_exponent == 2.0 { 1.0 / (distance * distance) } else { distance.powf(-cfg.path_loss_exponent) };
    Ok(tx_power * k * k * decay)
}

/// Reference transmit power and the reception and interference ranges it
/// must reach.
pub const CALIBRATION_POWER: f64 = 2e-3;
pub const CALIBRATION_RANGE: f64 = 250.0;
pub const CALIBRATION_INTERFERENCE_RANGE: f64 = 4445.0;

/// Sets the sensitivity so that a 2 mW sender is received out to 250 m and
/// the interference threshold so that it interferes out to 4445 m.
///
/// With exponent 2 the threshold lands about 25 dB under the sensitivity,
/// -110.13 dBm, i.e. the thermal noise floor to within rounding.
pub fn calibrate(mut cfg: RadioConfig) -> RadioConfig {
    cfg.sensitivity = received_power(&cfg, CALIBRATION_POWER, CALIBRATION_RANGE).unwrap_or(f64::NAN);
    cfg.interference_threshold =
        received_power(&cfg, CALIBRATION_POWER, CALIBRATION_INTERFERENCE_RANGE).unwrap_or(f64::NAN);
    cfg
}

/// Safety beacon broadcast by every drone.
#[derive(Debug, Clone, PartialEq)]
pub struct Beacon {
    pub sender: usize,
    pub seq: u64,
    /// Generation time, s.
    pub time: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub seg: SegmentRef,
    pub lane: LaneCoord,
    pub param: f64,
}
