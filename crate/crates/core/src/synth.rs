//! Synthetic single-room CO₂ generator.
//!
//! Indoor concentration follows the well-mixed mass balance
//! `dC/dt = r (C_out - C) + M_t` with exchange rate `r = ṁ / (ρ V)` in 1/h and
//! the occupant source `M_t` given directly in ppm/h (ρ and V folded in).
//! The ODE is stepped with explicit Euler at Δt = 1 h.

use std::f64::consts::TAU;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutdoorProfile {
    pub mean: f64,
    pub amplitude: f64,
    /// Hours per cycle.
    pub period: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Occupancy {
    /// First occupied hour of day.
    pub start_hour: u32,
    /// First unoccupied hour after the occupied block.
    pub end_hour: u32,
    pub weekdays_only: bool,
    /// Generation while occupied, ppm/h.
    pub source: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemperatureProfile {
    pub t_out_mean: f64,
    pub t_out_amplitude: f64,
    pub t_in_setpoint: f64,
    /// Indoor warming while occupied, °C.
    pub t_in_occupied_rise: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Ventilation mass flow, kg/h.
    pub mass_flow: f64,
    /// Air density, kg/m³.
    pub air_density: f64,
    /// Room volume, m³.
    pub volume: f64,
    pub outdoor: OutdoorProfile,
    pub occupancy: Occupancy,
    pub temperature: TemperatureProfile,
    /// Initial indoor concentration; defaults to the outdoor mean.
    pub initial_co2: Option<f64>,
    /// Additive Gaussian sensor noise on the emitted indoor series, ppm.
    pub sensor_noise: f64,
    /// Hours to simulate.
    pub length: usize,
    pub start: NaiveDateTime,
    pub seed: u64,
}

impl Default for OutdoorProfile {
    fn default() -> Self {
        Self {
            mean: 420.0,
            amplitude: 15.0,
            period: 24.0,
            noise: 5.0,
        }
    }
}

impl Default for Occupancy {
    fn default() -> Self {
        Self {
            start_hour: 8,
            end_hour: 18,
            weekdays_only: true,
            source: 150.0,
        }
    }
}

impl Default for TemperatureProfile {
    fn default() -> Self {
        Self {
            t_out_mean: 15.0,
            t_out_amplitude: 6.0,
            t_in_setpoint: 21.0,
            t_in_occupied_rise: 1.5,
            noise: 0.3,
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        // ρV = 60 kg, so ṁ = 30 kg/h gives an exchange rate of 0.5 per hour.
        Self {
            mass_flow: 30.0,
            air_density: 1.2,
            volume: 50.0,
            outdoor: OutdoorProfile::default(),
            occupancy: Occupancy::default(),
            temperature: TemperatureProfile::default(),
            initial_co2: None,
            sensor_noise: 0.0,
            length: 5000,
            start: NaiveDate::from_ymd_opt(2019, 8, 19)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Air exchange rate ṁ / (ρ V), per hour.
    pub fn exchange_rate(&self) -> f64 {
        self.mass_flow / (self.air_density * self.volume)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass_flow", self.mass_flow),
            ("air_density", self.air_density),
            ("volume", self.volume),
            ("outdoor.period", self.outdoor.period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.length == 0 {
            return Err(Error::InvalidArgument("length must be at least 1 hour".into()));
        }
        if self.occupancy.start_hour > 24 || self.occupancy.end_hour > 24 {
            return Err(Error::InvalidArgument("occupancy hours must lie in 0..=24".into()));
        }
        let step = self.exchange_rate();
        if step >= 2.0 {
            return Err(Error::UnstableStep(step));
        }
        Ok(())
    }

    pub fn occupied(&self, ts: &NaiveDateTime) -> bool {
        let occ = &self.occupancy;
        let h = ts.hour();
        let weekday = ts.weekday().number_from_monday() <= 5;
        h >= occ.start_hour && h < occ.end_hour && (weekday || !occ.weekdays_only)
    }

    /// Noise-free outdoor concentration at hour offset `t`.
    pub fn outdoor_mean_at(&self, t: usize) -> f64 {
        let o = &self.outdoor;
        o.mean + o.amplitude * (TAU * t as f64 / o.period).sin()
    }

    fn forcing_is_constant(&self) -> bool {
        let o = &self.outdoor;
        let occ = &self.occupancy;
        let source_constant = occ.source == 0.0
            || (occ.start_hour == 0 && occ.end_hour == 24 && !occ.weekdays_only);
        o.amplitude == 0.0 && o.noise == 0.0 && source_constant
    }

    fn constant_source(&self) -> f64 {
        if self.occupancy.start_hour < self.occupancy.end_hour {
            self.occupancy.source
        } else {
            0.0
        }
    }
}

/// Closed-form fixed point `C_out + M / r` of the update, or `None` when the
/// forcing is not constant (outdoor swing, noise or a part-time schedule).
pub fn steady_state(cfg: &SynthConfig) -> Option<f64> {
    cfg.forcing_is_constant()
        .then(|| cfg.outdoor.mean + cfg.constant_source() / cfg.exchange_rate())
}

/// Runs the Euler recursion and returns a full frame with calendar columns.
pub fn simulate(cfg: &SynthConfig) -> Result<TimeSeriesFrame> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let mut outdoor_rng = rng.fork();
    let mut temp_rng = rng.fork();
    let mut sensor_rng = rng.fork();

    let r = cfg.exchange_rate();
    let temp = &cfg.temperature;
    let n = cfg.length;
    let mut timestamps = Vec::with_capacity(n);
    let mut co2 = Vec::with_capacity(n);
    let mut t_in = Vec::with_capacity(n);
    let mut t_out = Vec::with_capacity(n);

    let mut c = cfg.initial_co2.unwrap_or(cfg.outdoor.mean);
    for t in 0..n {
        let ts = cfg.start + Duration::hours(t as i64);
        let occupied = cfg.occupied(&ts);
        let c_out = cfg.outdoor_mean_at(t) + cfg.outdoor.noise * outdoor_rng.normal();
        let source = if occupied { cfg.occupancy.source } else { 0.0 };

        let daily = (TAU * (ts.hour() as f64 - 9.0) / 24.0).sin();
        let outside = temp.t_out_mean + temp.t_out_amplitude * daily + temp.noise * temp_rng.normal();
        let inside = temp.t_in_setpoint
            + if occupied { temp.t_in_occupied_rise } else { 0.0 }
            + 0.05 * (outside - temp.t_out_mean)
            + temp.noise * temp_rng.normal();

        timestamps.push(ts);
        co2.push(c + cfg.sensor_noise * sensor_rng.normal());
        t_in.push(inside);
        t_out.push(outside);
        c += r * (c_out - c) + source;
    }
    TimeSeriesFrame::from_measurements(timestamps, co2, t_in, t_out)
}
