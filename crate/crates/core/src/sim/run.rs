use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Scenario, Severity, SimError, World};
use crate::bus::tcp::{self, TcpTransport};
use crate::bus::{Client, InProcess, Transport};
use crate::ctrl::{Controller, CycleLog, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No control: setpoints stay at their initial values, tap fixed.
    Reference,
    Controlled,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Reference => "reference",
            Mode::Controlled => "controlled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    InProcess,
    /// One loopback TCP server per asset.
    Tcp,
}

/// Realised asset behaviour in one cycle; zero where an asset is absent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AssetState {
    pub pv_avail_kw: f64,
    pub pv_p_kw: f64,
    pub pv_q_kvar: f64,
    pub bss_p_kw: f64,
    pub bss_q_kvar: f64,
    pub bss_e_kwh: f64,
    pub ev_connected: bool,
    pub ev_i_a: f64,
    pub ev_p_kw: f64,
    pub load_p_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub cycle: usize,
    pub t_s: f64,
    /// False when the power flow failed and the previous state was held.
    pub converged: bool,
    pub tap: Option<i32>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Flow entering each branch at its `from` end.
    pub p_from_kw: Vec<f64>,
    pub q_from_kvar: Vec<f64>,
    /// Larger apparent power of the two branch ends.
    pub loading_kva: Vec<f64>,
    pub assets: AssetState,
    /// Commands issued by the controller after observing this state.
    pub commands: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub mode: Mode,
    pub buses: Vec<String>,
    pub slack: String,
    pub branches: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t_s).collect()
    }
}

pub struct RunOutput {
    pub trace: Trace,
    /// Controller logs, one per cycle; empty in reference mode.
    pub logs: Vec<CycleLog>,
}

/// Per-cycle noise seed; both modes of one scenario share it.
pub fn cycle_seed(seed: u64, cycle: usize) -> u64 {
    seed ^ (cycle as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn summarize(log: &CycleLog) -> String {
    log.commands
        .iter()
        .map(|c| match &c.payload {
            Payload::Power { p_kw, q_kvar } => format!("{}:P={p_kw},Q={q_kvar}", c.target),
            Payload::Current { i_a } => format!("{}:I={i_a}", c.target),
            Payload::Tap { position } => format!("{}:tap={position}", c.target),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Replays the scenario. Each cycle the plant advances to the cycle time
/// and publishes readings; in controlled mode the controller then reads
/// them and writes setpoints that take effect from the next cycle.
pub fn run(scn: &Scenario, mode: Mode, transport: TransportKind) -> Result<RunOutput, SimError> {
    if let Some(issue) = scn.validate().into_iter().find(|i| i.severity == Severity::Error) {
        return Err(SimError::Config(issue.message));
    }
    let mut world = World::new(scn)?;
    let mut servers = Vec::new();
    let mut client = match mode {
        Mode::Reference => None,
        Mode::Controlled => {
            let t: Box<dyn Transport> = match transport {
                TransportKind::InProcess => Box::new(InProcess::new(Arc::new(world.bank()))),
                TransportKind::Tcp => {
                    let mut endpoints: BTreeMap<u8, SocketAddr> = BTreeMap::new();
                    for (id, bank) in world.banks() {
                        let h = tcp::serve(Arc::new(bank), "127.0.0.1:0")?;
                        endpoints.insert(id, h.local_addr());
                        servers.push(h);
                    }
                    Box::new(TcpTransport::new(endpoints))
                }
            };
            Some(Client::new(t, world.kinds()))
        }
    };
    let mut ctrl = match mode {
        Mode::Reference => None,
        Mode::Controlled => Some(Controller::new(scn.controller_config())?),
    };

    world.release()?;
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for t in scn.instants() {
        let mut row = world.step(t)?;
        if let (Some(ctrl), Some(client)) = (&mut ctrl, &mut client) {
            let log = ctrl.control_cycle(client, t, &scn.spec.schedule.limits_at(t));
            row.commands = summarize(&log);
            logs.push(log);
        }
        rows.push(row);
    }
    for s in servers {
        s.stop();
    }
    let net = &scn.net;
    Ok(RunOutput {
        trace: Trace {
            mode,
            buses: net.buses().iter().map(|b| b.id.clone()).collect(),
            slack: net.buses()[net.slack()].id.clone(),
            branches: net.branches().iter().map(|b| b.id.clone()).collect(),
            rows,
        },
        logs,
    })
}
