//! Scenario replay: a simulated grid with register-mapped assets, driven
//! cycle by cycle with or without the controller, and the violation
//! metrics used to compare the two runs.

mod io;
mod metrics;
mod run;
mod schedule;
mod series;
mod world;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{BatteryModel, BssTargetRule, PvModel};
use crate::bus::BusError;
use crate::ctrl::{BssConfig, ControllerConfig, CtrlError, EvConfig, IdlePolicy, MeterConfig, OltcConfig, PvConfig};
use crate::net::{self, NetError, Network};
use crate::opf::{CostFactors, OpfOptions};
use crate::pf::PfError;
use crate::se::{self, Location, SeOptions};

pub use io::{read_trace_csv, write_comparison_csv, write_cycle_logs, write_trace_csv};
pub use metrics::{compute_metrics, score_run, violation_series, BranchMetrics, MetricsReport, NodeMetrics, Score, Totals, ViolationFlags};
pub use run::{cycle_seed, run, AssetState, Mode, RunOutput, Trace, TraceRow, TransportKind};
pub use schedule::{BranchSchedule, LimitInterval, LimitSchedule};
pub use series::TimeSeries;
pub use world::World;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("traces differ: {0}")]
    Mismatch(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CtrlError> for SimError {
    fn from(e: CtrlError) -> Self {
        match e {
            CtrlError::Config(s) => SimError::Config(s),
            CtrlError::Pf(e) => SimError::Pf(e),
        }
    }
}

/// A series given inline as a constant or `[time_s, value]` pairs, or as a
/// CSV path relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesRef {
    Constant(f64),
    Points(Vec<(f64, f64)>),
    File(String),
}

impl SeriesRef {
    fn resolve(&self, dir: &Path) -> Result<TimeSeries, SimError> {
        match self {
            SeriesRef::Constant(v) => Ok(TimeSeries::constant(*v)),
            SeriesRef::Points(p) => TimeSeries::new(p.iter().map(|x| x.0).collect(), p.iter().map(|x| x.1).collect()),
            SeriesRef::File(f) => TimeSeries::from_csv(&dir.join(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvEntry {
    pub id: String,
    pub asset: u8,
    pub bus: String,
    pub model: PvModel,
    /// W/m².
    pub irradiance: SeriesRef,
    /// Module temperature, °C.
    pub temperature: SeriesRef,
    #[serde(default)]
    pub costs: Option<CostFactors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssEntry {
    pub id: String,
    pub asset: u8,
    pub bus: String,
    pub model: BatteryModel,
    #[serde(default = "default_horizon_h")]
    pub horizon_h: f64,
    #[serde(default)]
    pub target_rule: BssTargetRule,
    #[serde(default)]
    pub costs: Option<CostFactors>,
}

fn default_horizon_h() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvEntry {
    pub id: String,
    pub asset: u8,
    pub bus: String,
    pub i_min_a: f64,
    pub i_max_a: f64,
    /// Phase voltage used to convert current to power.
    #[serde(default = "default_v_cs")]
    pub v_cs: f64,
    #[serde(default)]
    pub connected: bool,
    #[serde(default)]
    pub costs: Option<CostFactors>,
}

fn default_v_cs() -> f64 {
    230.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadEntry {
    pub bus: String,
    pub p_kw: SeriesRef,
    #[serde(default)]
    pub q_kvar: Option<SeriesRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    EvPlugIn,
    EvUnplug,
}

/// Takes effect for every cycle strictly after `t_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_s: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerSettings {
    #[serde(default)]
    pub idle: IdlePolicy,
    #[serde(default)]
    pub se: SeOptions,
    #[serde(default)]
    pub opf: OpfOptions,
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Network file, relative to the scenario file.
    pub network: String,
    #[serde(default)]
    pub t0_s: f64,
    pub t_end_s: f64,
    #[serde(default = "default_cycle")]
    pub cycle_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Multiplier on the meter noise standard deviations.
    #[serde(default = "one")]
    pub noise_scale: f64,
    #[serde(default = "one")]
    pub slack_vm: f64,
    pub schedule: LimitSchedule,
    #[serde(default)]
    pub oltc: Option<OltcConfig>,
    #[serde(default)]
    pub pv: Option<PvEntry>,
    #[serde(default)]
    pub bss: Option<BssEntry>,
    #[serde(default)]
    pub ev: Option<EvEntry>,
    /// Asset id of the real-time station holding weather data and the
    /// synchronisation bit.
    #[serde(default)]
    pub rts: Option<u8>,
    #[serde(default)]
    pub loads: Vec<LoadEntry>,
    #[serde(default)]
    pub events: Vec<Event>,
    pub meters: Vec<MeterConfig>,
    /// `host:port` per asset id, used when serving over TCP.
    #[serde(default)]
    pub endpoints: BTreeMap<u8, String>,
    #[serde(default)]
    pub controller: ControllerSettings,
}

fn default_cycle() -> f64 {
    15.0
}

fn one() -> f64 {
    1.0
}

/// A loaded scenario: the spec with its network and series resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub net: Network,
    pub irradiance: Option<TimeSeries>,
    pub temperature: Option<TimeSeries>,
    /// `(bus index, P kW, Q kVar)`.
    pub loads: Vec<(usize, TimeSeries, TimeSeries)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let spec: ScenarioSpec =
            serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let net_path = dir.join(&spec.network);
        let net = net::load_network(&net_path)?;
        Self::from_spec(spec, net, &dir)
    }

    /// Resolves series (relative to `dir`) and checks references.
    pub fn from_spec(spec: ScenarioSpec, net: Network, dir: &Path) -> Result<Self, SimError> {
        let bus = |id: &str, what: &str| {
            net.bus_idx(id)
                .ok_or_else(|| SimError::Config(format!("{what}: unknown bus `{id}`")))
        };
        if !(spec.cycle_s > 0.0) || !(spec.t_end_s >= spec.t0_s) {
            return Err(SimError::Config("need cycle_s > 0 and t_end_s >= t0_s".into()));
        }
        spec.schedule.validate()?;
        for b in &spec.schedule.branches {
            if net.branch_idx(&b.branch).is_none() {
                return Err(SimError::Config(format!("schedule: unknown branch `{}`", b.branch)));
            }
        }
        let mut loads = Vec::new();
        for l in &spec.loads {
            let i = bus(&l.bus, "load")?;
            let q = l.q_kvar.as_ref().map_or(Ok(TimeSeries::constant(0.0)), |q| q.resolve(dir))?;
            loads.push((i, l.p_kw.resolve(dir)?, q));
        }
        let (irradiance, temperature) = match &spec.pv {
            Some(pv) => {
                bus(&pv.bus, "pv")?;
                pv.model.validate().map_err(|e| SimError::Config(e.to_string()))?;
                (Some(pv.irradiance.resolve(dir)?), Some(pv.temperature.resolve(dir)?))
            }
            None => (None, None),
        };
        if let Some(b) = &spec.bss {
            bus(&b.bus, "bss")?;
            b.model.validate().map_err(|e| SimError::Config(e.to_string()))?;
        }
        if let Some(ev) = &spec.ev {
            bus(&ev.bus, "ev")?;
            if !(0.0 < ev.i_min_a && ev.i_min_a <= ev.i_max_a) || ev.i_min_a.fract() != 0.0 || ev.i_max_a.fract() != 0.0 {
                return Err(SimError::Config(format!("ev `{}`: currents must be integers with 0 < i_min <= i_max", ev.id)));
            }
        }
        let mut ids: Vec<u8> = spec.meters.iter().map(|m| m.asset).collect();
        ids.extend(spec.oltc.as_ref().map(|o| o.asset));
        ids.extend(spec.pv.as_ref().map(|o| o.asset));
        ids.extend(spec.bss.as_ref().map(|o| o.asset));
        ids.extend(spec.ev.as_ref().map(|o| o.asset));
        ids.extend(spec.rts);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(SimError::Config(format!("asset id {} used twice", w[0])));
        }
        for id in spec.endpoints.keys() {
            if !ids.contains(id) {
                return Err(SimError::Config(format!("endpoint for unknown asset {id}")));
            }
        }
        let scn = Self {
            spec,
            net,
            irradiance,
            temperature,
            loads,
        };
        // surfaces meter and OLTC reference errors early
        crate::ctrl::Controller::new(scn.controller_config())?;
        Ok(scn)
    }

    /// Cycle instants `t0, t0 + Δ, …` up to and including `t_end`.
    pub fn instants(&self) -> Vec<f64> {
        let s = &self.spec;
        let n = ((s.t_end_s - s.t0_s) / s.cycle_s + 1e-9).floor() as usize + 1;
        (0..n).map(|k| s.t0_s + k as f64 * s.cycle_s).collect()
    }

    pub fn controller_config(&self) -> ControllerConfig {
        let s = &self.spec;
        ControllerConfig {
            net: self.net.clone(),
            band: s.schedule.band,
            meters: s.meters.clone(),
            bss: s.bss.as_ref().map(|b| BssConfig {
                id: b.id.clone(),
                asset: b.asset,
                bus: b.bus.clone(),
                sin_phi_max: b.model.sin_phi_max,
                horizon_h: b.horizon_h,
                target_rule: b.target_rule,
                costs: b.costs,
            }),
            pv: s.pv.as_ref().map(|p| PvConfig {
                id: p.id.clone(),
                asset: p.asset,
                bus: p.bus.clone(),
                model: p.model,
                costs: p.costs,
            }),
            ev: s.ev.as_ref().map(|e| EvConfig {
                id: e.id.clone(),
                asset: e.asset,
                bus: e.bus.clone(),
                v_cs: e.v_cs,
                costs: e.costs,
            }),
            oltc: s.oltc.clone(),
            rts: s.rts,
            idle: s.controller.idle,
            se: s.controller.se,
            opf: s.controller.opf,
        }
    }

    /// Consistency checks that do not prevent loading: limit coverage at
    /// the cycle instants, series coverage and measurement redundancy.
    pub fn validate(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let err = |message: String| Issue {
            severity: Severity::Error,
            message,
        };
        let instants = self.instants();
        for (branch, a, z) in self.spec.schedule.gaps(&instants) {
            out.push(err(format!("no limit for `{branch}` at cycles in [{a}, {z}] s")));
        }
        let (t0, t1) = (self.spec.t0_s, *instants.last().unwrap_or(&self.spec.t0_s));
        let mut series: Vec<(String, &TimeSeries)> = Vec::new();
        if let (Some(e), Some(t)) = (&self.irradiance, &self.temperature) {
            series.push(("pv irradiance".into(), e));
            series.push(("pv temperature".into(), t));
        }
        for (i, p, q) in &self.loads {
            let id = &self.net.buses()[*i].id;
            series.push((format!("load P at `{id}`"), p));
            series.push((format!("load Q at `{id}`"), q));
        }
        for (name, s) in series {
            if !s.covers(t0, t1) {
                out.push(err(format!("{name} does not cover [{t0}, {t1}] s")));
            }
        }
        let specs: Vec<_> = self.spec.meters.iter().flat_map(MeterConfig::specs).collect();
        let (states, ok) = se::observability(&self.net, specs.len());
        if !ok {
            out.push(Issue {
                severity: Severity::Warning,
                message: format!("{} measurements for {states} states: not observable (need m >= 2n - 1)", specs.len()),
            });
        }
        if !specs
            .iter()
            .any(|s| s.kind == se::MeasKind::VoltageMagnitude && matches!(s.location, Location::Bus(_)))
        {
            out.push(Issue {
                severity: Severity::Warning,
                message: "no voltage magnitude measurement".into(),
            });
        }
        out
    }
}
