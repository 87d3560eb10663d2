//! Register maps per asset class. Values are fixed-point: the raw signed
//! integer times `scale` gives the value in `unit`. Two-word registers are
//! stored high word first.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    ReadWrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Width {
    /// One word, `i16`.
    Single,
    /// Two words, `i32`.
    Double,
}

impl Width {
    pub fn words(self) -> u16 {
        match self {
            Width::Single => 1,
            Width::Double => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisterDef {
    pub name: &'static str,
    pub addr: u16,
    pub width: Width,
    pub access: Access,
    pub scale: f64,
    pub unit: &'static str,
    pub description: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("value {value} {unit} does not fit register `{name}`")]
pub struct OutOfRange {
    pub name: &'static str,
    pub value: f64,
    pub unit: &'static str,
}

impl RegisterDef {
    pub fn encode(&self, value: f64) -> Result<Vec<u16>, OutOfRange> {
        let raw = (value / self.scale).round();
        let err = OutOfRange {
            name: self.name,
            value,
            unit: self.unit,
        };
        if !raw.is_finite() {
            return Err(err);
        }
        match self.width {
            Width::Single => {
                if raw < i16::MIN as f64 || raw > i16::MAX as f64 {
                    return Err(err);
                }
                Ok(vec![raw as i16 as u16])
            }
            Width::Double => {
                if raw < i32::MIN as f64 || raw > i32::MAX as f64 {
                    return Err(err);
                }
                let v = raw as i32 as u32;
                Ok(vec![(v >> 16) as u16, v as u16])
            }
        }
    }

    pub fn decode(&self, words: &[u16]) -> f64 {
        let raw = match self.width {
            Width::Single => words[0] as i16 as f64,
            Width::Double => (((words[0] as u32) << 16) | words[1] as u32) as i32 as f64,
        };
        raw * self.scale
    }

    fn end(&self) -> u16 {
        self.addr + self.width.words()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    Oltc,
    Pv,
    Cs,
    Bss,
    Meter,
    Rts,
}

const fn reg(
    name: &'static str,
    addr: u16,
    width: Width,
    access: Access,
    scale: f64,
    unit: &'static str,
    description: &'static str,
) -> RegisterDef {
    RegisterDef {
        name,
        addr,
        width,
        access,
        scale,
        unit,
        description,
    }
}

use Access::{Read as R, ReadWrite as RW};
use Width::{Double as D, Single as S};

const OLTC: &[RegisterDef] = &[
    reg("tap", 0, S, RW, 1.0, "-", "tap position"),
    reg("v", 1, D, R, 0.01, "V", "phase to ground voltage, LV side"),
    reg("tap_min", 3, S, R, 1.0, "-", "lowest tap position"),
    reg("tap_max", 4, S, R, 1.0, "-", "highest tap position"),
    reg("v_step", 5, D, R, 0.01, "V", "voltage change per step"),
];

const PV: &[RegisterDef] = &[
    reg("v", 0, D, R, 0.01, "V", "phase to ground voltage"),
    reg("p", 2, D, R, 1.0, "W", "three phase active power"),
    reg("q", 4, D, R, 1.0, "var", "three phase reactive power"),
    reg("p_set", 6, D, RW, 1.0, "W", "three phase active power setpoint"),
    reg("q_set", 8, D, RW, 1.0, "var", "three phase reactive power setpoint"),
    reg("p_max", 10, D, R, 1.0, "W", "maximum three phase power"),
];

const CS: &[RegisterDef] = &[
    reg("i_set", 0, S, RW, 1.0, "A", "charging current"),
    reg("p", 1, D, R, 1.0, "W", "charging power"),
    reg("i_min", 3, S, R, 1.0, "A", "minimum charging current"),
    reg("i_max", 4, S, R, 1.0, "A", "maximum charging current"),
    reg("state", 5, S, R, 1.0, "-", "vehicle state: 1 no vehicle, 2 connected, 3 charging"),
];

const BSS: &[RegisterDef] = &[
    reg("soc", 0, D, R, 1.0, "Wh", "stored energy"),
    reg("e_max", 2, D, R, 1.0, "Wh", "upper energy limit"),
    reg("e_min", 4, D, R, 1.0, "Wh", "lower energy limit"),
    reg("v", 6, D, R, 0.01, "V", "phase to ground voltage"),
    reg("i", 8, D, R, 0.01, "A", "phase current"),
    reg("p", 10, D, R, 1.0, "W", "active power"),
    reg("q", 12, D, R, 1.0, "var", "reactive power"),
    reg("s", 14, D, R, 1.0, "VA", "apparent power"),
    reg("p_set", 16, D, RW, 1.0, "W", "three phase active power setpoint"),
    reg("q_set", 18, D, RW, 1.0, "var", "three phase reactive power setpoint"),
    reg("cos_phi", 20, S, R, 1e-4, "-", "power factor of the present setpoint"),
    reg("s_max", 21, D, R, 1.0, "VA", "maximum apparent power"),
    reg("e_total", 23, D, R, 1.0, "Wh", "usable capacity"),
];

const METER: &[RegisterDef] = &[
    reg("i", 0, D, RW, 0.01, "A", "current"),
    reg("v", 2, D, R, 0.01, "V", "phase to ground voltage"),
    reg("p", 4, D, R, 1.0, "W", "active power"),
    reg("q", 6, D, R, 1.0, "var", "reactive power"),
    reg("s", 8, D, R, 1.0, "VA", "apparent power"),
    reg("cos_phi", 10, S, R, 1e-4, "-", "power factor"),
];

const RTS: &[RegisterDef] = &[
    reg("temperature", 0, S, R, 0.01, "degC", "module temperature"),
    reg("irradiance", 1, D, R, 0.01, "W/m2", "irradiance"),
    reg("sync", 3, S, R, 1.0, "-", "synchronisation bit, 1 once the scenario runs"),
];

impl AssetKind {
    pub const ALL: [AssetKind; 6] = [
        AssetKind::Oltc,
        AssetKind::Pv,
        AssetKind::Cs,
        AssetKind::Bss,
        AssetKind::Meter,
        AssetKind::Rts,
    ];

    pub fn registers(self) -> &'static [RegisterDef] {
        match self {
            AssetKind::Oltc => OLTC,
            AssetKind::Pv => PV,
            AssetKind::Cs => CS,
            AssetKind::Bss => BSS,
            AssetKind::Meter => METER,
            AssetKind::Rts => RTS,
        }
    }

    pub fn register(self, name: &str) -> Option<&'static RegisterDef> {
        self.registers().iter().find(|r| r.name == name)
    }

    pub fn n_words(self) -> u16 {
        self.registers().iter().map(|r| r.end()).max().unwrap_or(0)
    }

    /// Registers exactly covering `[addr, addr + count)`, or `None` if the
    /// range starts or ends inside a register or hits a hole.
    pub fn span(self, addr: u16, count: u16) -> Option<Vec<&'static RegisterDef>> {
        let end = addr.checked_add(count)?;
        let mut out = Vec::new();
        let mut at = addr;
        while at < end {
            let r = self.registers().iter().find(|r| r.addr == at)?;
            if r.end() > end {
                return None;
            }
            out.push(r);
            at = r.end();
        }
        Some(out)
    }

    pub fn label(self) -> &'static str {
        match self {
            AssetKind::Oltc => "OLTC",
            AssetKind::Pv => "PV inverter",
            AssetKind::Cs => "Charging station",
            AssetKind::Bss => "Battery storage",
            AssetKind::Meter => "Measurement device",
            AssetKind::Rts => "Real-time simulator",
        }
    }
}

/// Markdown tables of every register map.
pub fn register_table_markdown() -> String {
    let mut out = String::from("# Register map\n\nAll registers are big-endian. One-word registers hold an `i16`, two-word registers an `i32` (high word first). The physical value is `raw * scale`.\n");
    for kind in AssetKind::ALL {
        let _ = write!(out, "\n## {}\n\n", kind.label());
        out.push_str("| Address | Name | Words | Access | Scale | Unit | Description |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for r in kind.registers() {
            let access = match r.access {
                Access::Read => "R",
                Access::ReadWrite => "R/W",
            };
            let _ = writeln!(
                out,
                "| {} | `{}` | {} | {} | {} | {} | {} |",
                r.addr,
                r.name,
                r.width.words(),
                access,
                r.scale,
                r.unit,
                r.description
            );
        }
    }
    out
}
