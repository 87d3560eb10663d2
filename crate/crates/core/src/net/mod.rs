//! Grid topology, per-unit conversion and admittance matrix assembly.

pub mod catalog;
mod file;

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{load_network, parse_network, NetworkFile};

/// Default apparent power base in kVA.
pub const S_BASE_KVA: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("duplicate bus id `{0}`")]
    DuplicateBus(String),
    #[error("duplicate branch id `{0}`")]
    DuplicateBranch(String),
    #[error("branch `{branch}` references unknown bus `{bus}`")]
    UnknownBus { branch: String, bus: String },
    #[error("unknown branch `{0}`")]
    UnknownBranch(String),
    #[error("network must have exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("invalid parameter on `{item}`: {reason}")]
    InvalidParameter { item: String, reason: String },
    #[error("network is not connected: bus `{0}` unreachable from the slack")]
    Disconnected(String),
    #[error("branch `{0}` has zero series impedance")]
    DegenerateBranch(String),
    #[error("tap position {position} on `{branch}` outside [{min}, {max}]")]
    TapLimit {
        branch: String,
        position: i32,
        min: i32,
        max: i32,
    },
    #[error("branch `{0}` is not a transformer")]
    NotATransformer(String),
    #[error("unknown cable type `{0}`")]
    UnknownCable(String),
    #[error("network file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Load,
    Flexibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Line-to-line base voltage in kV.
    pub base_kv: f64,
    pub kind: BusKind,
}

impl Bus {
    pub fn new(id: impl Into<String>, base_kv: f64, kind: BusKind) -> Self {
        Self {
            id: id.into(),
            base_kv,
            kind,
        }
    }
}

/// On-load tap changer state and limits.
///
/// The off-nominal ratio `1 + (position - neutral) * step` scales the
/// voltage seen on the `to` side: at no load `V_to = ratio * V_from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapChanger {
    pub position: i32,
    #[serde(default)]
    pub neutral: i32,
    /// Voltage change per step in p.u.
    pub step: f64,
    pub min: i32,
    pub max: i32,
}

impl TapChanger {
    pub fn ratio(&self) -> f64 {
        self.ratio_at(self.position)
    }

    pub fn ratio_at(&self, position: i32) -> f64 {
        1.0 + f64::from(position - self.neutral) * self.step
    }

    pub fn contains(&self, position: i32) -> bool {
        (self.min..=self.max).contains(&position)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BranchKind {
    Cable,
    Transformer { tap: TapChanger },
}

/// A series branch in π representation. Impedances are physical values;
/// for transformers they are referred to the `to` side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    /// Total shunt susceptance in S, split evenly between both ends.
    pub b_siemens: f64,
    /// Thermal rating in kVA.
    pub rating_kva: f64,
    pub kind: BranchKind,
}

impl Branch {
    pub fn cable(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        r_ohm: f64,
        x_ohm: f64,
        rating_kva: f64,
    ) -> Self {
        Self {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            r_ohm,
            x_ohm,
            b_siemens: 0.0,
            rating_kva,
            kind: BranchKind::Cable,
        }
    }

    pub fn transformer(
        id: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
        r_ohm: f64,
        x_ohm: f64,
        rating_kva: f64,
        tap: TapChanger,
    ) -> Self {
        Self {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            r_ohm,
            x_ohm,
            b_siemens: 0.0,
            rating_kva,
            kind: BranchKind::Transformer { tap },
        }
    }

    pub fn with_shunt(mut self, b_siemens: f64) -> Self {
        self.b_siemens = b_siemens;
        self
    }

    pub fn tap(&self) -> Option<&TapChanger> {
        match &self.kind {
            BranchKind::Transformer { tap } => Some(tap),
            BranchKind::Cable => None,
        }
    }

    /// Off-nominal ratio; 1 for cables.
    pub fn ratio(&self) -> f64 {
        self.tap().map_or(1.0, TapChanger::ratio)
    }
}

/// Two-port admittance stamp of a branch in p.u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchStamp {
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    s_base_kva: f64,
    #[serde(skip)]
    bus_index: HashMap<String, usize>,
    #[serde(skip)]
    branch_index: HashMap<String, usize>,
    #[serde(skip)]
    endpoints: Vec<(usize, usize)>,
    #[serde(skip)]
    slack: usize,
}

impl Network {
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>, s_base_kva: f64) -> Result<Self, NetError> {
        if !(s_base_kva > 0.0) {
            return Err(NetError::InvalidParameter {
                item: "network".into(),
                reason: format!("s_base_kva must be positive, got {s_base_kva}"),
            });
        }
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if bus_index.insert(b.id.clone(), i).is_some() {
                return Err(NetError::DuplicateBus(b.id.clone()));
            }
            if !(b.base_kv > 0.0) {
                return Err(NetError::InvalidParameter {
                    item: b.id.clone(),
                    reason: format!("base_kv must be positive, got {}", b.base_kv),
                });
            }
        }
        let slacks: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(NetError::SlackCount(slacks.len()));
        }

        let mut branch_index = HashMap::with_capacity(branches.len());
        let mut endpoints = Vec::with_capacity(branches.len());
        for (k, br) in branches.iter().enumerate() {
            if branch_index.insert(br.id.clone(), k).is_some() {
                return Err(NetError::DuplicateBranch(br.id.clone()));
            }
            let lookup = |bus: &str| {
                bus_index
                    .get(bus)
                    .copied()
                    .ok_or_else(|| NetError::UnknownBus {
                        branch: br.id.clone(),
                        bus: bus.to_string(),
                    })
            };
            endpoints.push((lookup(&br.from)?, lookup(&br.to)?));
            let invalid = |reason: String| NetError::InvalidParameter {
                item: br.id.clone(),
                reason,
            };
            if !(br.r_ohm >= 0.0) || !br.x_ohm.is_finite() || !br.b_siemens.is_finite() {
                return Err(invalid(format!(
                    "impedance must be finite with r >= 0, got r={} x={}",
                    br.r_ohm, br.x_ohm
                )));
            }
            if !(br.rating_kva > 0.0) {
                return Err(invalid(format!("rating must be positive, got {}", br.rating_kva)));
            }
            if let Some(tap) = br.tap() {
                if tap.min > tap.max || !tap.step.is_finite() {
                    return Err(invalid("tap limits unordered".into()));
                }
                if !tap.contains(tap.position) {
                    return Err(NetError::TapLimit {
                        branch: br.id.clone(),
                        position: tap.position,
                        min: tap.min,
                        max: tap.max,
                    });
                }
                if !(tap.ratio() > 0.0) {
                    return Err(invalid("tap ratio must stay positive".into()));
                }
            }
        }

        Ok(Self {
            buses,
            branches,
            s_base_kva,
            bus_index,
            branch_index,
            endpoints,
            slack: slacks[0],
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn s_base_kva(&self) -> f64 {
        self.s_base_kva
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn bus_idx(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn branch_idx(&self, id: &str) -> Option<usize> {
        self.branch_index.get(id).copied()
    }

    /// Bus indices `(from, to)` of branch `k`.
    pub fn endpoints(&self, k: usize) -> (usize, usize) {
        self.endpoints[k]
    }

    /// Indices of transformer branches.
    pub fn transformers(&self) -> impl Iterator<Item = usize> + '_ {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.tap().is_some())
            .map(|(k, _)| k)
    }

    /// Impedance base in Ω of bus `i`.
    pub fn z_base(&self, i: usize) -> f64 {
        let kv = self.buses[i].base_kv;
        kv * kv * 1000.0 / self.s_base_kva
    }

    /// Series impedance and total shunt susceptance of branch `k` in p.u.
    pub fn branch_pu(&self, k: usize) -> (Complex64, f64) {
        let br = &self.branches[k];
        let (_, to) = self.endpoints[k];
        let zb = self.z_base(to);
        (Complex64::new(br.r_ohm / zb, br.x_ohm / zb), br.b_siemens * zb)
    }

    /// Copy of the network with the tap of `branch_id` moved to `position`.
    pub fn apply_tap(&self, branch_id: &str, position: i32) -> Result<Network, NetError> {
        let k = self
            .branch_idx(branch_id)
            .ok_or_else(|| NetError::UnknownBranch(branch_id.to_string()))?;
        let mut next = self.clone();
        match &mut next.branches[k].kind {
            BranchKind::Transformer { tap } => {
                if !tap.contains(position) {
                    return Err(NetError::TapLimit {
                        branch: branch_id.to_string(),
                        position,
                        min: tap.min,
                        max: tap.max,
                    });
                }
                tap.position = position;
            }
            BranchKind::Cable => return Err(NetError::NotATransformer(branch_id.to_string())),
        }
        Ok(next)
    }

    /// Breadth-first reachability from the slack.
    pub fn check_connected(&self) -> Result<(), NetError> {
        let n = self.n_buses();
        let mut adj = vec![Vec::new(); n];
        for &(f, t) in &self.endpoints {
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = HashSet::with_capacity(n);
        let mut queue = VecDeque::from([self.slack]);
        seen.insert(self.slack);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        match (0..n).find(|i| !seen.contains(i)) {
            Some(i) => Err(NetError::Disconnected(self.buses[i].id.clone())),
            None => Ok(()),
        }
    }

    /// Two-port stamps of every branch, in branch order.
    pub fn branch_stamps(&self) -> Result<Vec<BranchStamp>, NetError> {
        self.check_connected()?;
        (0..self.n_branches())
            .map(|k| {
                let (z, b) = self.branch_pu(k);
                if z.norm() < 1e-12 {
                    return Err(NetError::DegenerateBranch(self.branches[k].id.clone()));
                }
                let ys = z.inv();
                let half_b = Complex64::new(0.0, b / 2.0);
                let n = self.branches[k].ratio();
                let (from, to) = self.endpoints[k];
                Ok(BranchStamp {
                    from,
                    to,
                    yff: (ys + half_b) * (n * n),
                    yft: -ys * n,
                    ytf: -ys * n,
                    ytt: ys + half_b,
                })
            })
            .collect()
    }
}

/// Bus admittance matrix in p.u.
pub fn build_admittance(net: &Network) -> Result<DMatrix<Complex64>, NetError> {
    let stamps = net.branch_stamps()?;
    Ok(assemble(net.n_buses(), &stamps))
}

pub(crate) fn assemble(n: usize, stamps: &[BranchStamp]) -> DMatrix<Complex64> {
    let mut y = DMatrix::zeros(n, n);
    for s in stamps {
        y[(s.from, s.from)] += s.yff;
        y[(s.from, s.to)] += s.yft;
        y[(s.to, s.from)] += s.ytf;
        y[(s.to, s.to)] += s.ytt;
    }
    y
}

/// Per-bus shunt admittance of the π-equivalent, including the shunt
/// branches induced by off-nominal taps.
pub fn shunt_admittance(net: &Network) -> Result<Vec<Complex64>, NetError> {
    let mut sh = vec![Complex64::new(0.0, 0.0); net.n_buses()];
    for k in 0..net.n_branches() {
        let (z, b) = net.branch_pu(k);
        if z.norm() < 1e-12 {
            return Err(NetError::DegenerateBranch(net.branches()[k].id.clone()));
        }
        let ys = z.inv();
        let n = net.branches()[k].ratio();
        let (f, t) = net.endpoints(k);
        let half_b = Complex64::new(0.0, b / 2.0);
        sh[f] += half_b * (n * n) + ys * (n * (n - 1.0));
        sh[t] += half_b + ys * (1.0 - n);
    }
    Ok(sh)
}
