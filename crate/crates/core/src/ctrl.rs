//! Per-cycle control policy: estimate the state, detect violations, then
//! either step the tap changer, run the OPF, or dispatch targets.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{flexibility_bounds, Asset, BatteryModel, BssTargetRule, Bounds, EvModel, GridContext, PvModel};
use crate::bus::{BusError, Client};
use crate::net::Network;
use crate::opf::{self, BranchLimit, CostFactors, FlexKind, Flexibility, OpfOptions, OpfStatus, VoltageBand};
use crate::pf::{branch_flows, PfError};
use crate::se::{self, Location, MeasKind, Measurement, MeasurementSet, MeasurementSpec, SeOptions};

#[derive(Debug, Error)]
pub enum CtrlError {
    #[error("controller configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pf(#[from] PfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageState {
    Within,
    Over,
    Under,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusViolation {
    pub bus: String,
    pub vm: f64,
    pub state: VoltageState,
    /// Distance outside the band, p.u.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchViolation {
    pub branch: String,
    /// Larger of the two end apparent powers, kVA.
    pub loading_kva: f64,
    pub s_max_kva: f64,
    /// Excess over the limit, kVA.
    pub magnitude: f64,
}

impl BranchViolation {
    pub fn violated(&self) -> bool {
        self.magnitude > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub t_s: f64,
    pub buses: Vec<BusViolation>,
    pub branches: Vec<BranchViolation>,
}

impl ViolationReport {
    pub fn has_flow(&self) -> bool {
        self.branches.iter().any(BranchViolation::violated)
    }

    pub fn has_over(&self) -> bool {
        self.buses.iter().any(|b| b.state == VoltageState::Over)
    }

    pub fn has_under(&self) -> bool {
        self.buses.iter().any(|b| b.state == VoltageState::Under)
    }

    pub fn is_clean(&self) -> bool {
        !(self.has_flow() || self.has_over() || self.has_under())
    }
}

/// Checks every non-slack bus against the band and every limited branch
/// against its limit.
pub fn detect(
    net: &Network,
    vm: &[f64],
    va: &[f64],
    limits: &[BranchLimit],
    band: VoltageBand,
    t_s: f64,
) -> Result<ViolationReport, CtrlError> {
    let buses = net
        .buses()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != net.slack())
        .map(|(i, b)| {
            let v = vm[i];
            let (state, magnitude) = if v > band.v_max {
                (VoltageState::Over, v - band.v_max)
            } else if v < band.v_min {
                (VoltageState::Under, band.v_min - v)
            } else {
                (VoltageState::Within, 0.0)
            };
            BusViolation {
                bus: b.id.clone(),
                vm: v,
                state,
                magnitude,
            }
        })
        .collect();
    let flows = branch_flows(net, vm, va)?;
    let mut branches = Vec::with_capacity(limits.len());
    for l in limits {
        let k = net
            .branch_idx(&l.branch)
            .ok_or_else(|| CtrlError::Config(format!("limit on unknown branch `{}`", l.branch)))?;
        let loading = flows[k].0.norm().max(flows[k].1.norm());
        branches.push(BranchViolation {
            branch: l.branch.clone(),
            loading_kva: loading,
            s_max_kva: l.s_max_kva,
            magnitude: (loading - l.s_max_kva).max(0.0),
        });
    }
    Ok(ViolationReport { t_s, buses, branches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapStatus {
    pub position: i32,
    pub min: i32,
    pub max: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    TapStep(i32),
    RunOpf,
    NoAction,
}

/// The cascaded rule: a tap step replaces the optimization when only a
/// voltage violation of one sign is present, the tap did not move in the
/// previous cycle and the new position is within its limits.
pub fn decide(report: &ViolationReport, tap: Option<TapStatus>, stepped_last: bool) -> Action {
    if report.is_clean() {
        return Action::NoAction;
    }
    let (over, under) = (report.has_over(), report.has_under());
    if report.has_flow() || (over && under) || stepped_last {
        return Action::RunOpf;
    }
    let step = if over { -1 } else { 1 };
    match tap {
        Some(t) if (t.min..=t.max).contains(&(t.position + step)) => Action::TapStep(step),
        _ => Action::RunOpf,
    }
}

/// Charging current for an active-power setpoint, rounded down so the
/// realised power never exceeds the allocation.
pub fn quantize_ev(p_kw: f64, v_phase: f64, i_min: i32, i_max: i32) -> i32 {
    let amps = p_kw * 1000.0 / (3.0 * v_phase);
    ((amps + 1e-9).floor() as i32).clamp(i_min, i_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdlePolicy {
    /// Send every flexibility its target when the grid is clean.
    #[default]
    DispatchTargets,
    /// Leave the last setpoints in place.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    V,
    P,
    Q,
}

/// A measurement device and what it reports. Bus meters report the bus
/// injection, branch meters the flow leaving `at` into the branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterConfig {
    pub asset: u8,
    pub location: Location,
    pub quantities: Vec<Quantity>,
    #[serde(default)]
    pub voltage_variance: Option<f64>,
    #[serde(default)]
    pub power_variance: Option<f64>,
}

impl MeterConfig {
    pub fn bus(&self) -> &str {
        match &self.location {
            Location::Bus(b) => b,
            Location::Branch { at, .. } => at,
        }
    }

    pub fn specs(&self) -> Vec<MeasurementSpec> {
        let flow = matches!(self.location, Location::Branch { .. });
        self.quantities
            .iter()
            .map(|q| {
                let (kind, variance) = match (q, flow) {
                    (Quantity::V, _) => (MeasKind::VoltageMagnitude, self.voltage_variance),
                    (Quantity::P, false) => (MeasKind::ActiveInjection, self.power_variance),
                    (Quantity::Q, false) => (MeasKind::ReactiveInjection, self.power_variance),
                    (Quantity::P, true) => (MeasKind::ActiveFlow, self.power_variance),
                    (Quantity::Q, true) => (MeasKind::ReactiveFlow, self.power_variance),
                };
                let location = match kind {
                    MeasKind::VoltageMagnitude => Location::Bus(self.bus().to_string()),
                    _ => self.location.clone(),
                };
                MeasurementSpec {
                    kind,
                    location,
                    variance,
                }
            })
            .collect()
    }
}

/// Register name for a measured quantity.
pub fn meter_register(q: Quantity) -> &'static str {
    match q {
        Quantity::V => "v",
        Quantity::P => "p",
        Quantity::Q => "q",
    }
}

/// Phase-to-ground base voltage in volts.
pub fn phase_base_v(base_kv: f64) -> f64 {
    base_kv * 1000.0 / 3f64.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssConfig {
    pub id: String,
    pub asset: u8,
    pub bus: String,
    pub sin_phi_max: f64,
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
pub struct PvConfig {
    pub id: String,
    pub asset: u8,
    pub bus: String,
    pub model: PvModel,
    #[serde(default)]
    pub costs: Option<CostFactors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvConfig {
    pub id: String,
    pub asset: u8,
    pub bus: String,
    pub v_cs: f64,
    #[serde(default)]
    pub costs: Option<CostFactors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OltcConfig {
    pub id: String,
    pub asset: u8,
    pub branch: String,
}

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub net: Network,
    pub band: VoltageBand,
    pub meters: Vec<MeterConfig>,
    pub bss: Option<BssConfig>,
    pub pv: Option<PvConfig>,
    pub ev: Option<EvConfig>,
    pub oltc: Option<OltcConfig>,
    pub rts: Option<u8>,
    pub idle: IdlePolicy,
    pub se: SeOptions,
    pub opf: OpfOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Power { p_kw: f64, q_kvar: f64 },
    Current { i_a: i32 },
    Tap { position: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchCommand {
    pub target: String,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum CycleOutcome {
    Ok,
    /// Synchronisation bit not yet set.
    Waiting,
    /// Setpoints held; the reason is logged.
    Degraded(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub iterations: usize,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSummary {
    pub status: OpfStatus,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleLog {
    pub cycle: usize,
    pub t_s: f64,
    /// Wall-clock time of the cycle, ms since the epoch. Not part of the
    /// controller's behaviour.
    pub wall_clock_ms: u64,
    pub outcome: CycleOutcome,
    pub tap: Option<TapStatus>,
    pub estimate: Option<EstimateSummary>,
    pub report: Option<ViolationReport>,
    pub action: Option<Action>,
    pub opf: Option<OpfSummary>,
    pub commands: Vec<DispatchCommand>,
}

impl CycleLog {
    /// Copy with the wall-clock field cleared, for comparing runs.
    pub fn without_timestamps(&self) -> CycleLog {
        CycleLog {
            wall_clock_ms: 0,
            ..self.clone()
        }
    }
}

/// Flexibility readings gathered in one cycle.
struct Readings {
    ctx: GridContext,
    bss: Option<(BatteryModel, f64, f64)>,
    pv: Option<(Bounds, f64, f64)>,
    ev: Option<(EvModel, f64)>,
}

pub struct Controller {
    cfg: ControllerConfig,
    stepped_last: bool,
    cycle: usize,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self, CtrlError> {
        let known = |bus: &str| cfg.net.bus_idx(bus).is_some();
        for m in &cfg.meters {
            if !known(m.bus()) {
                return Err(CtrlError::Config(format!("meter {} at unknown bus `{}`", m.asset, m.bus())));
            }
            if let Location::Branch { branch, .. } = &m.location {
                if cfg.net.branch_idx(branch).is_none() {
                    return Err(CtrlError::Config(format!("meter {} on unknown branch `{branch}`", m.asset)));
                }
            }
        }
        for (id, bus) in [
            cfg.bss.as_ref().map(|b| (&b.id, &b.bus)),
            cfg.pv.as_ref().map(|b| (&b.id, &b.bus)),
            cfg.ev.as_ref().map(|b| (&b.id, &b.bus)),
        ]
        .into_iter()
        .flatten()
        {
            if !known(bus) {
                return Err(CtrlError::Config(format!("`{id}` at unknown bus `{bus}`")));
            }
        }
        if let Some(o) = &cfg.oltc {
            let k = cfg
                .net
                .branch_idx(&o.branch)
                .ok_or_else(|| CtrlError::Config(format!("OLTC on unknown branch `{}`", o.branch)))?;
            if cfg.net.branches()[k].tap().is_none() {
                return Err(CtrlError::Config(format!("branch `{}` has no tap changer", o.branch)));
            }
        }
        Ok(Self {
            cfg,
            stepped_last: false,
            cycle: 0,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Measurement specs in the order the controller assembles them.
    pub fn measurement_specs(&self) -> Vec<MeasurementSpec> {
        self.cfg.meters.iter().flat_map(MeterConfig::specs).collect()
    }

    fn read_measurements(&self, client: &mut Client, t_s: f64) -> Result<MeasurementSet, BusError> {
        let s_base_w = self.cfg.net.s_base_kva() * 1000.0;
        let mut out = Vec::new();
        for m in &self.cfg.meters {
            let regs = client.read_all(m.asset)?;
            let bus = &self.cfg.net.buses()[self.cfg.net.bus_idx(m.bus()).expect("checked in new")];
            for (q, spec) in m.quantities.iter().zip(m.specs()) {
                let raw = regs[meter_register(*q)];
                let value = match q {
                    Quantity::V => raw / phase_base_v(bus.base_kv),
                    _ => raw / s_base_w,
                };
                out.push(Measurement {
                    kind: spec.kind,
                    variance: spec.variance(),
                    location: spec.location,
                    value,
                });
            }
        }
        Ok(MeasurementSet {
            timestamp_s: t_s,
            measurements: out,
        })
    }

    fn read_tap(&self, client: &mut Client) -> Result<Option<TapStatus>, BusError> {
        let Some(o) = &self.cfg.oltc else { return Ok(None) };
        let r = client.read_all(o.asset)?;
        Ok(Some(TapStatus {
            position: r["tap"] as i32,
            min: r["tap_min"] as i32,
            max: r["tap_max"] as i32,
        }))
    }

    fn read_flexibilities(&self, client: &mut Client) -> Result<Readings, BusError> {
        let mut ctx = GridContext::default();
        if let Some(rts) = self.cfg.rts {
            let r = client.read_all(rts)?;
            ctx.irradiance = r["irradiance"];
            ctx.temperature = r["temperature"];
        }
        if let Some(ev) = &self.cfg.ev {
            ctx.v_cs = ev.v_cs;
        }
        let bss = match &self.cfg.bss {
            Some(b) => {
                let r = client.read_all(b.asset)?;
                let model = BatteryModel {
                    s_max_kva: r["s_max"] / 1000.0,
                    e_total_kwh: r["e_total"] / 1000.0,
                    e_kwh: r["soc"] / 1000.0,
                    e_min_kwh: r["e_min"] / 1000.0,
                    e_max_kwh: r["e_max"] / 1000.0,
                    sin_phi_max: b.sin_phi_max,
                    roundtrip_efficiency: 1.0,
                };
                Some((model, r["p"] / 1000.0, r["q"] / 1000.0))
            }
            None => None,
        };
        let pv = match &self.cfg.pv {
            Some(p) => {
                let r = client.read_all(p.asset)?;
                let bounds = flexibility_bounds(&Asset::Pv(p.model.clone()), &ctx)
                    .unwrap_or(Bounds {
                        p_min: 0.0,
                        p_max: 0.0,
                        q_min: 0.0,
                        q_max: 0.0,
                    });
                Some((bounds, r["p"] / 1000.0, r["q"] / 1000.0))
            }
            None => None,
        };
        let ev = match &self.cfg.ev {
            Some(e) => {
                let r = client.read_all(e.asset)?;
                let model = EvModel {
                    i_min_a: r["i_min"],
                    i_max_a: r["i_max"],
                    connected: r["state"] >= 2.0,
                    phases: 3,
                };
                Some((model, r["p"] / 1000.0))
            }
            None => None,
        };
        Ok(Readings { ctx, bss, pv, ev })
    }

    fn flexibilities(&self, rd: &Readings) -> Vec<Flexibility> {
        let mut out = Vec::new();
        if let (Some(cfg), Some((model, p, q))) = (&self.cfg.bss, &rd.bss) {
            let bounds = flexibility_bounds(&Asset::Battery(model.clone()), &rd.ctx).expect("battery bounds");
            out.push(Flexibility {
                id: cfg.id.clone(),
                bus: cfg.bus.clone(),
                kind: FlexKind::Battery,
                costs: cfg.costs.unwrap_or(FlexKind::Battery.default_costs()),
                p_target_kw: model.target_power(cfg.horizon_h, cfg.target_rule),
                bounds,
                p_kw: *p,
                q_kvar: *q,
            });
        }
        if let (Some(cfg), Some((bounds, p, q))) = (&self.cfg.pv, &rd.pv) {
            out.push(Flexibility {
                id: cfg.id.clone(),
                bus: cfg.bus.clone(),
                kind: FlexKind::Pv,
                costs: cfg.costs.unwrap_or(FlexKind::Pv.default_costs()),
                p_target_kw: bounds.p_min,
                bounds: *bounds,
                p_kw: *p,
                q_kvar: *q,
            });
        }
        if let (Some(cfg), Some((model, p))) = (&self.cfg.ev, &rd.ev) {
            let bounds = flexibility_bounds(&Asset::Ev(model.clone()), &rd.ctx).expect("ev bounds");
            out.push(Flexibility {
                id: cfg.id.clone(),
                bus: cfg.bus.clone(),
                kind: FlexKind::Ev,
                costs: cfg.costs.unwrap_or(FlexKind::Ev.default_costs()),
                p_target_kw: if model.connected { bounds.p_max } else { 0.0 },
                bounds,
                p_kw: *p,
                q_kvar: 0.0,
            });
        }
        out
    }

    /// Writes power setpoints (clamped to their bounds) and returns the
    /// commands as sent.
    fn dispatch(
        &self,
        client: &mut Client,
        flex: &[Flexibility],
        setpoints: &[(f64, f64)],
        rd: &Readings,
    ) -> Result<Vec<DispatchCommand>, BusError> {
        let mut commands = Vec::new();
        for (f, &(p, q)) in flex.iter().zip(setpoints) {
            let b = &f.bounds;
            let (p, q) = (p.clamp(b.p_min, b.p_max), q.clamp(b.q_min, b.q_max));
            match f.kind {
                FlexKind::Battery | FlexKind::Pv => {
                    let asset = if f.kind == FlexKind::Battery {
                        self.cfg.bss.as_ref().expect("battery configured").asset
                    } else {
                        self.cfg.pv.as_ref().expect("pv configured").asset
                    };
                    // the register resolution is 1 W / 1 var
                    let (mut p, q) = ((p * 1000.0).round() / 1000.0, (q * 1000.0).round() / 1000.0);
                    if f.kind == FlexKind::Pv && p <= b.p_min + 1e-3 {
                        // no curtailment: lift the cap so the inverter follows
                        // irradiance until the next cycle
                        p = -self.cfg.pv.as_ref().expect("pv configured").model.s_max_kva;
                    }
                    client.write(asset, "p_set", p * 1000.0)?;
                    client.write(asset, "q_set", q * 1000.0)?;
                    commands.push(DispatchCommand {
                        target: f.id.clone(),
                        payload: Payload::Power { p_kw: p, q_kvar: q },
                    });
                }
                FlexKind::Ev => {
                    let Some((model, _)) = &rd.ev else { continue };
                    if !model.connected {
                        continue;
                    }
                    let cfg = self.cfg.ev.as_ref().expect("ev configured");
                    let i = quantize_ev(p, cfg.v_cs, model.i_min_a as i32, model.i_max_a as i32);
                    client.write(cfg.asset, "i_set", i as f64)?;
                    commands.push(DispatchCommand {
                        target: f.id.clone(),
                        payload: Payload::Current { i_a: i },
                    });
                }
            }
        }
        Ok(commands)
    }

    /// One control cycle at simulated time `t_s` under the given limits.
    pub fn control_cycle(&mut self, client: &mut Client, t_s: f64, limits: &[BranchLimit]) -> CycleLog {
        let cycle = self.cycle;
        self.cycle += 1;
        let mut log = CycleLog {
            cycle,
            t_s,
            wall_clock_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            outcome: CycleOutcome::Ok,
            tap: None,
            estimate: None,
            report: None,
            action: None,
            opf: None,
            commands: Vec::new(),
        };
        if let Err(reason) = self.run_cycle(client, t_s, limits, &mut log) {
            log::warn!("cycle {cycle} at t = {t_s} s degraded: {reason}");
            log.outcome = CycleOutcome::Degraded(reason);
        }
        self.stepped_last = matches!(log.action, Some(Action::TapStep(_)));
        log
    }

    fn run_cycle(&mut self, client: &mut Client, t_s: f64, limits: &[BranchLimit], log: &mut CycleLog) -> Result<(), String> {
        if let Some(rts) = self.cfg.rts {
            if client.read(rts, "sync").map_err(|e| e.to_string())? < 1.0 {
                log.outcome = CycleOutcome::Waiting;
                return Ok(());
            }
        }
        let tap = self.read_tap(client).map_err(|e| e.to_string())?;
        log.tap = tap;
        let net = match (&self.cfg.oltc, tap) {
            (Some(o), Some(t)) => self.cfg.net.apply_tap(&o.branch, t.position).map_err(|e| e.to_string())?,
            _ => self.cfg.net.clone(),
        };
        let z = self.read_measurements(client, t_s).map_err(|e| e.to_string())?;
        let est = se::estimate(&net, &z, &self.cfg.se).map_err(|e| format!("state estimation: {e}"))?;
        log.estimate = Some(EstimateSummary {
            vm: est.state.vm.clone(),
            va: est.state.va.clone(),
            iterations: est.iterations,
            condition: est.condition,
        });
        let report = detect(&net, &est.state.vm, &est.state.va, limits, self.cfg.band, t_s).map_err(|e| e.to_string())?;
        let action = decide(&report, tap, self.stepped_last);
        log.report = Some(report);
        log.action = Some(action);

        match action {
            Action::TapStep(d) => {
                let o = self.cfg.oltc.as_ref().expect("tap step needs an OLTC");
                let position = tap.expect("tap read").position + d;
                client.write(o.asset, "tap", position as f64).map_err(|e| e.to_string())?;
                log.commands.push(DispatchCommand {
                    target: o.id.clone(),
                    payload: Payload::Tap { position },
                });
            }
            Action::RunOpf => {
                let rd = self.read_flexibilities(client).map_err(|e| e.to_string())?;
                let flex = self.flexibilities(&rd);
                let problem = opf::assemble(&net, &est.state, flex.clone(), limits.to_vec(), self.cfg.band)
                    .map_err(|e| e.to_string())?;
                let sol = problem.solve(&self.cfg.opf).map_err(|e| e.to_string())?;
                if sol.status == OpfStatus::Infeasible {
                    log::info!("t = {t_s} s: OPF infeasible, dispatching least-violation point");
                }
                log.opf = Some(OpfSummary {
                    status: sol.status,
                    objective: sol.objective,
                    iterations: sol.iterations,
                    kkt_residual: sol.kkt_residual,
                });
                let sp: Vec<(f64, f64)> = sol.setpoints.iter().map(|s| (s.p_kw, s.q_kvar)).collect();
                log.commands = self.dispatch(client, &flex, &sp, &rd).map_err(|e| e.to_string())?;
            }
            Action::NoAction => {
                if self.cfg.idle == IdlePolicy::DispatchTargets {
                    let rd = self.read_flexibilities(client).map_err(|e| e.to_string())?;
                    let flex = self.flexibilities(&rd);
                    let sp: Vec<(f64, f64)> = flex.iter().map(|f| (f.p_target_kw, 0.0)).collect();
                    log.commands = self.dispatch(client, &flex, &sp, &rd).map_err(|e| e.to_string())?;
                }
            }
        }
        Ok(())
    }
}
