//! Persistence-based violation counts and magnitudes.
//!
//! A node (branch) counts as violated at step `t` only if it is outside its
//! band (above its limit) at both `t - 1` and `t`. Magnitudes come in two
//! flavours: the excess beyond the band or limit summed over the counted
//! steps, which scores a single run on its own, and the distance between the
//! controlled and the reference trajectory summed over the counted steps,
//! which needs both runs.

use serde::{Deserialize, Serialize};

use super::run::Trace;
use super::{LimitSchedule, SimError};

/// Per-element, per-step flags; outer index is the element, inner the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationFlags {
    pub t_s: Vec<f64>,
    /// Non-slack buses.
    pub buses: Vec<String>,
    /// Branches that have a limit schedule.
    pub branches: Vec<String>,
    pub v_raw: Vec<Vec<bool>>,
    pub s_raw: Vec<Vec<bool>>,
    /// Persistence flags; step 0 is always false.
    pub n_v: Vec<Vec<bool>>,
    pub n_s: Vec<Vec<bool>>,
    /// Distance outside the band, p.u.
    pub v_excess: Vec<Vec<f64>>,
    /// Apparent power above the limit, kVA.
    pub s_excess: Vec<Vec<f64>>,
}

impl ViolationFlags {
    /// System-level flag: any node persistently violated at step `t`.
    pub fn any_v(&self, t: usize) -> bool {
        self.n_v.iter().any(|f| f[t])
    }

    pub fn any_s(&self, t: usize) -> bool {
        self.n_s.iter().any(|f| f[t])
    }
}

fn persist(raw: &[bool]) -> Vec<bool> {
    (0..raw.len()).map(|t| t > 0 && raw[t - 1] && raw[t]).collect()
}

/// Flags for one trace. Branch limits are taken from the schedule interval
/// active at each step; steps without a limit are never violated.
pub fn violation_series(trace: &Trace, schedule: &LimitSchedule) -> ViolationFlags {
    let band = schedule.band;
    let t_s = trace.times();
    let mut out = ViolationFlags {
        t_s: t_s.clone(),
        buses: Vec::new(),
        branches: Vec::new(),
        v_raw: Vec::new(),
        s_raw: Vec::new(),
        n_v: Vec::new(),
        n_s: Vec::new(),
        v_excess: Vec::new(),
        s_excess: Vec::new(),
    };
    for (i, bus) in trace.buses.iter().enumerate() {
        if *bus == trace.slack {
            continue;
        }
        let excess: Vec<f64> = trace
            .rows
            .iter()
            .map(|r| (r.vm[i] - band.v_max).max(band.v_min - r.vm[i]).max(0.0))
            .collect();
        let raw: Vec<bool> = excess.iter().map(|&e| e > 0.0).collect();
        out.buses.push(bus.clone());
        out.n_v.push(persist(&raw));
        out.v_raw.push(raw);
        out.v_excess.push(excess);
    }
    for b in &schedule.branches {
        let Some(k) = trace.branches.iter().position(|x| *x == b.branch) else {
            continue;
        };
        let excess: Vec<f64> = trace
            .rows
            .iter()
            .map(|r| {
                schedule
                    .limit_at(&b.branch, r.t_s)
                    .map_or(0.0, |lim| (r.loading_kva[k] - lim).max(0.0))
            })
            .collect();
        let raw: Vec<bool> = excess.iter().map(|&e| e > 0.0).collect();
        out.branches.push(b.branch.clone());
        out.n_s.push(persist(&raw));
        out.s_raw.push(raw);
        out.s_excess.push(excess);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Score {
    /// Number of persistently violated steps.
    pub n: usize,
    /// Excess beyond band or limit over the counted steps.
    pub a_excess: f64,
    /// Distance to the counterpart run over the counted steps; absent when
    /// the run is scored alone.
    pub a_literal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub bus: String,
    pub reference: Score,
    pub controlled: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchMetrics {
    pub branch: String,
    pub reference: Score,
    pub controlled: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nodes: Vec<NodeMetrics>,
    pub branches: Vec<BranchMetrics>,
}

/// Sums over all monitored nodes and branches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub n_v_reference: usize,
    pub n_v_controlled: usize,
    pub a_v_reference: f64,
    pub a_v_controlled: f64,
    pub a_v_literal: f64,
    pub n_s_reference: usize,
    pub n_s_controlled: usize,
    pub a_s_reference: f64,
    pub a_s_controlled: f64,
    pub a_s_literal: f64,
}

/// Percent reduction from reference to controlled; undefined for a zero
/// reference.
pub fn reduction_pct(reference: f64, controlled: f64) -> Option<f64> {
    (reference > 0.0).then(|| 100.0 * (reference - controlled) / reference)
}

#[derive(Serialize)]
struct Reduction<'a> {
    element: &'a str,
    n_pct: Option<f64>,
    a_excess_pct: Option<f64>,
}

#[derive(Serialize)]
struct ReportView<'a> {
    #[serde(flatten)]
    report: &'a MetricsReport,
    totals: Totals,
    node_reductions: Vec<Reduction<'a>>,
    branch_reductions: Vec<Reduction<'a>>,
}

impl MetricsReport {
    pub fn totals(&self) -> Totals {
        let mut t = Totals::default();
        for n in &self.nodes {
            t.n_v_reference += n.reference.n;
            t.n_v_controlled += n.controlled.n;
            t.a_v_reference += n.reference.a_excess;
            t.a_v_controlled += n.controlled.a_excess;
            t.a_v_literal += n.controlled.a_literal.unwrap_or(0.0);
        }
        for b in &self.branches {
            t.n_s_reference += b.reference.n;
            t.n_s_controlled += b.controlled.n;
            t.a_s_reference += b.reference.a_excess;
            t.a_s_controlled += b.controlled.a_excess;
            t.a_s_literal += b.controlled.a_literal.unwrap_or(0.0);
        }
        t
    }

    pub fn node(&self, bus: &str) -> Option<&NodeMetrics> {
        self.nodes.iter().find(|n| n.bus == bus)
    }

    pub fn branch(&self, branch: &str) -> Option<&BranchMetrics> {
        self.branches.iter().find(|b| b.branch == branch)
    }

    /// Pretty JSON with totals and reduction percentages derived on output.
    pub fn to_json(&self) -> String {
        let red = |element, r: &Score, c: &Score| Reduction {
            element,
            n_pct: reduction_pct(r.n as f64, c.n as f64),
            a_excess_pct: reduction_pct(r.a_excess, c.a_excess),
        };
        let view = ReportView {
            report: self,
            totals: self.totals(),
            node_reductions: self.nodes.iter().map(|n| red(&n.bus, &n.reference, &n.controlled)).collect(),
            branch_reductions: self
                .branches
                .iter()
                .map(|b| red(&b.branch, &b.reference, &b.controlled))
                .collect(),
        };
        serde_json::to_string_pretty(&view).expect("report serializes")
    }
}

fn score(n: &[bool], excess: &[f64], delta: Option<&[f64]>) -> Score {
    let counted = || n.iter().enumerate().filter(|(_, &f)| f).map(|(t, _)| t);
    Score {
        n: counted().count(),
        a_excess: counted().map(|t| excess[t]).sum(),
        a_literal: delta.map(|d| counted().map(|t| d[t]).sum()),
    }
}

/// Scores one run on its own, as `(node scores, branch scores)`.
pub fn score_run(trace: &Trace, schedule: &LimitSchedule) -> (Vec<(String, Score)>, Vec<(String, Score)>) {
    let f = violation_series(trace, schedule);
    let nodes = f
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.clone(), score(&f.n_v[i], &f.v_excess[i], None)))
        .collect();
    let branches = f
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| (b.clone(), score(&f.n_s[i], &f.s_excess[i], None)))
        .collect();
    (nodes, branches)
}

/// Compares a controlled run with its reference. Counts are taken on each
/// run's own flags; the literal magnitude of a run sums `|x_ctrl - x_ref|`
/// over the steps that run has flagged.
pub fn compute_metrics(controlled: &Trace, reference: &Trace, schedule: &LimitSchedule) -> Result<MetricsReport, SimError> {
    let (tc, tr) = (controlled.times(), reference.times());
    if tc != tr {
        let at = tc.iter().zip(&tr).position(|(a, b)| a != b).unwrap_or(tc.len().min(tr.len()));
        return Err(SimError::Mismatch(format!(
            "timestamps differ at step {at} ({} vs {} steps)",
            tc.len(),
            tr.len()
        )));
    }
    if controlled.buses != reference.buses || controlled.branches != reference.branches {
        return Err(SimError::Mismatch("traces describe different networks".into()));
    }
    let fc = violation_series(controlled, schedule);
    let fr = violation_series(reference, schedule);

    let mut nodes = Vec::new();
    for (j, bus) in fc.buses.iter().enumerate() {
        let i = controlled.buses.iter().position(|b| b == bus).expect("same buses");
        let d: Vec<f64> = controlled
            .rows
            .iter()
            .zip(&reference.rows)
            .map(|(c, r)| (c.vm[i] - r.vm[i]).abs())
            .collect();
        nodes.push(NodeMetrics {
            bus: bus.clone(),
            reference: score(&fr.n_v[j], &fr.v_excess[j], Some(&d)),
            controlled: score(&fc.n_v[j], &fc.v_excess[j], Some(&d)),
        });
    }
    let mut branches = Vec::new();
    for (j, br) in fc.branches.iter().enumerate() {
        let k = controlled.branches.iter().position(|b| b == br).expect("same branches");
        let d: Vec<f64> = controlled
            .rows
            .iter()
            .zip(&reference.rows)
            .map(|(c, r)| (c.loading_kva[k] - r.loading_kva[k]).abs())
            .collect();
        branches.push(BranchMetrics {
            branch: br.clone(),
            reference: score(&fr.n_s[j], &fr.s_excess[j], Some(&d)),
            controlled: score(&fc.n_s[j], &fc.s_excess[j], Some(&d)),
        });
    }
    Ok(MetricsReport { nodes, branches })
}
