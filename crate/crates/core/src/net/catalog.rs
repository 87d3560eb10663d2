//! Low-voltage cable catalog.
//!
//! Per-length parameters are typical manufacturer datasheet values at 20 °C
//! for the positive-sequence system. They are engineering defaults, not
//! measured data of any particular installation.

use serde::Serialize;

/// Positive-sequence parameters of one cable type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CableType {
    pub name: &'static str,
    /// Series resistance in Ω/km.
    pub r_ohm_per_km: f64,
    /// Series reactance in Ω/km at 50 Hz.
    pub x_ohm_per_km: f64,
    /// Shunt susceptance in µS/km at 50 Hz.
    pub b_us_per_km: f64,
    /// Thermal current limit in A.
    pub ampacity_a: f64,
    /// Rated line-to-line voltage in kV.
    pub rated_kv: f64,
}

impl CableType {
    /// Three-phase thermal rating in kVA.
    pub fn rating_kva(&self) -> f64 {
        3f64.sqrt() * self.rated_kv * self.ampacity_a
    }
}

pub const CATALOG: &[CableType] = &[
    CableType {
        name: "NAYY 4x150 SE",
        r_ohm_per_km: 0.206,
        x_ohm_per_km: 0.080,
        b_us_per_km: 81.7,
        ampacity_a: 246.0,
        rated_kv: 0.4,
    },
    CableType {
        name: "NAYY 4x25",
        r_ohm_per_km: 1.200,
        x_ohm_per_km: 0.088,
        b_us_per_km: 53.4,
        ampacity_a: 102.0,
        rated_kv: 0.4,
    },
    CableType {
        name: "NYY-J 5x16 RE",
        r_ohm_per_km: 1.150,
        x_ohm_per_km: 0.090,
        b_us_per_km: 47.1,
        ampacity_a: 98.0,
        rated_kv: 0.4,
    },
    CableType {
        name: "H07RN-F 5G6",
        r_ohm_per_km: 3.300,
        x_ohm_per_km: 0.100,
        b_us_per_km: 31.4,
        ampacity_a: 44.0,
        rated_kv: 0.4,
    },
];

pub fn lookup(name: &str) -> Option<&'static CableType> {
    CATALOG.iter().find(|c| c.name == name)
}
