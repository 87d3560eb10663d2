//! Flexibility models: battery storage, PV inverter, EV charging station.
//!
//! Powers are in kW / kVar, consumer counting system (charging and load
//! positive, feed-in negative).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssetError {
    #[error("irradiance must be non-negative, got {0} W/m²")]
    NegativeIrradiance(f64),
    #[error("invalid {asset} parameter: {reason}")]
    Invalid { asset: &'static str, reason: String },
}

/// Weights of the European efficiency at 5/10/20/30/50/100 % load.
pub const EURO_WEIGHTS: [f64; 6] = [0.03, 0.06, 0.13, 0.10, 0.48, 0.20];

/// Irradiance-weighted inverter efficiency from partial-load measurements
/// at 5, 10, 20, 30, 50 and 100 % of nominal power.
pub fn european_efficiency(eta: [f64; 6]) -> f64 {
    EURO_WEIGHTS.iter().zip(eta).map(|(w, e)| w * e).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryModel {
    pub s_max_kva: f64,
    pub e_total_kwh: f64,
    /// Stored energy.
    pub e_kwh: f64,
    pub e_min_kwh: f64,
    pub e_max_kwh: f64,
    pub sin_phi_max: f64,
    #[serde(default = "one")]
    pub roundtrip_efficiency: f64,
}

fn one() -> f64 {
    1.0
}

/// How the battery target power is derived from the state of charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BssTargetRule {
    /// Drive the stored energy toward half of the capacity.
    #[default]
    HalfCapacity,
    /// Magnitude `|E - E_total| / ΔT` as printed in the cost table.
    Literal,
}

impl BatteryModel {
    pub fn validate(&self) -> Result<(), AssetError> {
        let ok = self.s_max_kva > 0.0
            && self.e_min_kwh <= self.e_kwh
            && self.e_kwh <= self.e_max_kwh
            && self.e_max_kwh <= self.e_total_kwh
            && (0.0..=1.0).contains(&self.sin_phi_max)
            && self.roundtrip_efficiency > 0.0
            && self.roundtrip_efficiency <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(AssetError::Invalid {
                asset: "battery",
                reason: format!("{self:?}"),
            })
        }
    }

    /// Target power that steers the state of charge back to 50 % within
    /// `horizon_h`, capped at `S_max`. Positive means charging.
    pub fn target_power(&self, horizon_h: f64, rule: BssTargetRule) -> f64 {
        let reference = match rule {
            BssTargetRule::HalfCapacity => 0.5 * self.e_total_kwh,
            BssTargetRule::Literal => self.e_total_kwh,
        };
        let magnitude = ((self.e_kwh - reference) / horizon_h).abs().min(self.s_max_kva);
        if self.e_kwh < 0.5 * self.e_total_kwh {
            magnitude
        } else {
            -magnitude
        }
    }

    /// Integrates stored energy over `dt_h` hours at power `p_kw`.
    /// Round-trip losses are split evenly between charge and discharge.
    pub fn integrate(&self, p_kw: f64, dt_h: f64) -> BatteryModel {
        let half = self.roundtrip_efficiency.sqrt();
        let delta = if p_kw >= 0.0 {
            p_kw * dt_h * half
        } else {
            p_kw * dt_h / half
        };
        BatteryModel {
            e_kwh: (self.e_kwh + delta).clamp(self.e_min_kwh, self.e_max_kwh),
            ..*self
        }
    }
}

pub fn bss_target_power(model: &BatteryModel, horizon_h: f64) -> f64 {
    model.target_power(horizon_h, BssTargetRule::HalfCapacity)
}

pub fn bss_integrate_soc(model: &BatteryModel, p_kw: f64, dt_h: f64) -> BatteryModel {
    model.integrate(p_kw, dt_h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvModel {
    /// Power at reference conditions.
    pub p_ref_kw: f64,
    #[serde(default = "e_ref")]
    pub e_ref: f64,
    #[serde(default = "t_ref")]
    pub t_ref: f64,
    /// Relative temperature coefficient in 1/K.
    pub alpha: f64,
    pub eta_inverter: f64,
    /// Inverter nameplate apparent power.
    pub s_max_kva: f64,
    pub sin_phi_max: f64,
    /// Upper clamp on available power relative to `p_ref * eta`.
    #[serde(default = "headroom")]
    pub headroom: f64,
}

fn e_ref() -> f64 {
    1000.0
}
fn t_ref() -> f64 {
    25.0
}
fn headroom() -> f64 {
    1.1
}

impl PvModel {
    pub fn validate(&self) -> Result<(), AssetError> {
        if self.eta_inverter > 0.0 && self.eta_inverter <= 1.0 && self.p_ref_kw > 0.0 && self.e_ref > 0.0 {
            Ok(())
        } else {
            Err(AssetError::Invalid {
                asset: "pv",
                reason: format!("{self:?}"),
            })
        }
    }

    /// Maximum AC power available at irradiance `e` (W/m²) and module
    /// temperature `t` (°C).
    pub fn available_power(&self, e: f64, t: f64) -> Result<f64, AssetError> {
        if !(e >= 0.0) {
            return Err(AssetError::NegativeIrradiance(e));
        }
        let p = self.p_ref_kw * (e / self.e_ref) * (1.0 + self.alpha * (t - self.t_ref)) * self.eta_inverter;
        Ok(p.clamp(0.0, self.p_ref_kw * self.eta_inverter * self.headroom))
    }
}

pub fn pv_available_power(model: &PvModel, e: f64, t: f64) -> Result<f64, AssetError> {
    model.available_power(e, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvModel {
    pub i_min_a: f64,
    pub i_max_a: f64,
    pub connected: bool,
    #[serde(default = "three")]
    pub phases: u8,
}

fn three() -> u8 {
    3
}

impl EvModel {
    /// Charging power in kW for per-phase current `i` at phase voltage `v`.
    pub fn power_kw(&self, i_a: f64, v_phase: f64) -> f64 {
        f64::from(self.phases) * v_phase * i_a / 1000.0
    }
}

/// Asset-specific state needed for bound computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridContext {
    pub irradiance: f64,
    pub temperature: f64,
    /// Phase-to-ground voltage at the charging station in V.
    pub v_cs: f64,
}

impl Default for GridContext {
    fn default() -> Self {
        Self {
            irradiance: 0.0,
            temperature: 25.0,
            v_cs: 230.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Asset {
    Battery(BatteryModel),
    Pv(PvModel),
    Ev(EvModel),
}

/// Box of admissible setpoints, kW / kVar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl Bounds {
    pub fn contains(&self, p: f64, q: f64, tol: f64) -> bool {
        p >= self.p_min - tol && p <= self.p_max + tol && q >= self.q_min - tol && q <= self.q_max + tol
    }
}

pub fn flexibility_bounds(asset: &Asset, ctx: &GridContext) -> Result<Bounds, AssetError> {
    Ok(match asset {
        Asset::Battery(b) => {
            let q = b.s_max_kva * b.sin_phi_max;
            Bounds {
                p_min: -b.s_max_kva,
                p_max: b.s_max_kva,
                q_min: -q,
                q_max: q,
            }
        }
        Asset::Pv(pv) => {
            let avail = pv.available_power(ctx.irradiance, ctx.temperature)?;
            let q = pv.s_max_kva * pv.sin_phi_max;
            Bounds {
                p_min: -avail,
                p_max: 0.0,
                q_min: -q,
                q_max: q,
            }
        }
        Asset::Ev(ev) if ev.connected => Bounds {
            p_min: ev.power_kw(ev.i_min_a, ctx.v_cs),
            p_max: ev.power_kw(ev.i_max_a, ctx.v_cs),
            q_min: 0.0,
            q_max: 0.0,
        },
        Asset::Ev(_) => Bounds {
            p_min: 0.0,
            p_max: 0.0,
            q_min: 0.0,
            q_max: 0.0,
        },
    })
}
