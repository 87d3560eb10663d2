//! Redispatch optimal power flow with time-variant branch limits.
//!
//! Decision vector: angles and magnitudes of all non-slack buses plus the
//! active and reactive setpoints of every flexibility. The objective keeps
//! each flexibility close to its active-power target and penalises
//! reactive power:
//!
//! ```txt
//!   f = Σ_i c_i^P (P_i − P_i^target)² + c_i^Q Q_i²      (P, Q in p.u.)
//! ```
//!
//! subject to nodal power balance at every non-slack bus, squared apparent
//! power limits at both ends of every limited branch, the voltage band,
//! the angle box and the flexibility bounds. Non-flexible injections are
//! held at their estimated values.

mod ipm;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::Bounds;
use crate::net::{NetError, Network};
use crate::pf::{complex_voltage, GridModel, InjectionSpec};
use crate::se::SystemState;

use ipm::{IpmOptions, Nlp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpfError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("OPF configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlexKind {
    Battery,
    Pv,
    Ev,
}

/// Cost factors per flexibility class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFactors {
    pub c_p: f64,
    pub c_q: f64,
}

impl FlexKind {
    /// Battery cheapest, then PV curtailment, then EV charging. Reactive
    /// power is cheaper than active power everywhere; the EV has no
    /// reactive control (fixed through its bounds).
    pub fn default_costs(self) -> CostFactors {
        match self {
            FlexKind::Battery => CostFactors { c_p: 100.0, c_q: 1.0 },
            FlexKind::Pv => CostFactors { c_p: 1000.0, c_q: 10.0 },
            FlexKind::Ev => CostFactors { c_p: 10000.0, c_q: 1.0 },
        }
    }
}

/// One controllable asset as seen by the optimizer. Powers in kW / kVar,
/// consumer counting system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flexibility {
    pub id: String,
    pub bus: String,
    pub kind: FlexKind,
    pub costs: CostFactors,
    pub p_target_kw: f64,
    pub bounds: Bounds,
    /// Present operating point, used to split estimated bus injections.
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchLimit {
    pub branch: String,
    pub s_max_kva: f64,
}

/// Voltage band in p.u. applied to every non-slack bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageBand {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VoltageBand {
    fn default() -> Self {
        Self { v_min: 0.9, v_max: 1.1 }
    }
}

/// The angle box; never binding in practice.
pub fn angle_bounds() -> (f64, f64) {
    (-2.0 * PI, 2.0 * PI)
}

#[derive(Debug, Clone, Serialize)]
pub struct OpfProblem {
    pub net: Network,
    /// Fixed non-flexible injections, kW / kVar.
    pub base: InjectionSpec,
    pub flex: Vec<Flexibility>,
    pub limits: Vec<BranchLimit>,
    pub band: VoltageBand,
    /// Warm start and slack voltage.
    pub vm0: Vec<f64>,
    pub va0: Vec<f64>,
    #[serde(skip)]
    flex_bus: Vec<usize>,
    #[serde(skip)]
    limit_idx: Vec<(usize, f64)>,
}

/// Builds an OPF problem around an estimated state.
pub fn assemble(
    net: &Network,
    state: &SystemState,
    flex: Vec<Flexibility>,
    limits: Vec<BranchLimit>,
    band: VoltageBand,
) -> Result<OpfProblem, OpfError> {
    let n = net.n_buses();
    if state.vm.len() != n || state.p.len() != n {
        return Err(OpfError::Config(format!("state has {} buses, network {n}", state.vm.len())));
    }
    if !(band.v_min > 0.0 && band.v_min < band.v_max) {
        return Err(OpfError::Config(format!("voltage band {band:?} is not ordered")));
    }
    let base_kva = net.s_base_kva();
    let mut base = InjectionSpec {
        p_kw: state.p.iter().map(|p| p * base_kva).collect(),
        q_kvar: state.q.iter().map(|q| q * base_kva).collect(),
    };
    let mut flex_bus = Vec::with_capacity(flex.len());
    for f in &flex {
        let i = net
            .bus_idx(&f.bus)
            .ok_or_else(|| OpfError::Config(format!("flexibility `{}` at unknown bus `{}`", f.id, f.bus)))?;
        if i == net.slack() {
            return Err(OpfError::Config(format!("flexibility `{}` sits on the slack bus", f.id)));
        }
        let b = &f.bounds;
        if !(b.p_min <= b.p_max && b.q_min <= b.q_max) {
            return Err(OpfError::Config(format!("flexibility `{}` has unordered bounds", f.id)));
        }
        if !(f.costs.c_p > 0.0 && f.costs.c_q > 0.0) {
            return Err(OpfError::Config(format!("flexibility `{}` needs positive costs", f.id)));
        }
        base.p_kw[i] -= f.p_kw;
        base.q_kvar[i] -= f.q_kvar;
        flex_bus.push(i);
    }
    let s = net.slack();
    base.p_kw[s] = 0.0;
    base.q_kvar[s] = 0.0;

    let mut limit_idx = Vec::with_capacity(limits.len());
    for l in &limits {
        let k = net
            .branch_idx(&l.branch)
            .ok_or_else(|| OpfError::Config(format!("limit on unknown branch `{}`", l.branch)))?;
        if !(l.s_max_kva > 0.0) {
            return Err(OpfError::Config(format!("limit on `{}` must be positive", l.branch)));
        }
        limit_idx.push((k, l.s_max_kva / base_kva));
    }
    Ok(OpfProblem {
        net: net.clone(),
        base,
        flex,
        limits,
        band,
        vm0: state.vm.clone(),
        va0: state.va.clone(),
        flex_bus,
        limit_idx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpfStatus {
    Optimal,
    FeasibleSuboptimal,
    Infeasible,
}

/// Largest violation per constraint class, p.u.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub balance: f64,
    pub flow: f64,
    pub voltage: f64,
    pub angle: f64,
    pub bounds: f64,
}

impl FeasibilityReport {
    pub fn max_inequality(&self) -> f64 {
        self.flow.max(self.voltage).max(self.angle).max(self.bounds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub id: String,
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub setpoints: Vec<Setpoint>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Objective in p.u. with the unscaled cost factors.
    pub objective: f64,
    pub status: OpfStatus,
    pub feasibility: FeasibilityReport,
    /// Scaled KKT stationarity residual of the accepted iterate.
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpfOptions {
    pub tol_eq: f64,
    pub tol_ineq: f64,
    pub max_iter: usize,
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self {
            tol_eq: 1e-6,
            tol_ineq: 1e-4,
            max_iter: 100,
        }
    }
}

/// Penalty on the elastic slacks when the hard problem has no solution.
const ELASTIC_PENALTY: f64 = 1e3;

/// Variable bounds fixed to a single value are enforced as equalities.
const FIXED_SPAN: f64 = 1e-12;

struct Formulation<'a> {
    p: &'a OpfProblem,
    model: GridModel,
    pq: Vec<usize>,
    /// Position of each bus in the angle/magnitude blocks.
    pos: Vec<Option<usize>>,
    slack_vm: f64,
    cost_scale: f64,
    elastic: bool,
    /// `(variable, value)` pairs fixed by equal bounds.
    fixed: Vec<(usize, f64)>,
    /// `(variable, lower, upper)` for the remaining boxes, p.u.
    boxes: Vec<(usize, f64, f64)>,
    n_soft: usize,
}

impl<'a> Formulation<'a> {
    fn new(p: &'a OpfProblem, elastic: bool) -> Result<Self, OpfError> {
        let model = GridModel::new(&p.net)?;
        let pq = model.pq();
        let mut pos = vec![None; model.n()];
        for (c, &i) in pq.iter().enumerate() {
            pos[i] = Some(c);
        }
        let cost_scale = p
            .flex
            .iter()
            .map(|f| f.costs.c_p.max(f.costs.c_q))
            .fold(1e-300, f64::max);
        let base = p.net.s_base_kva();
        let mut this = Self {
            slack_vm: p.vm0[model.slack],
            p,
            pq,
            pos,
            cost_scale: if p.flex.is_empty() { 1.0 } else { cost_scale },
            elastic,
            fixed: Vec::new(),
            boxes: Vec::new(),
            n_soft: 0,
            model,
        };
        for (j, f) in p.flex.iter().enumerate() {
            let b = &f.bounds;
            for (var, lo, hi) in [
                (this.p_var(j), b.p_min / base, b.p_max / base),
                (this.q_var(j), b.q_min / base, b.q_max / base),
            ] {
                if hi - lo <= FIXED_SPAN {
                    this.fixed.push((var, 0.5 * (lo + hi)));
                } else {
                    this.boxes.push((var, lo, hi));
                }
            }
        }
        this.n_soft = 2 * p.limit_idx.len() + 2 * this.m();
        Ok(this)
    }

    fn m(&self) -> usize {
        self.pq.len()
    }

    fn nf(&self) -> usize {
        self.p.flex.len()
    }

    fn va_var(&self, c: usize) -> usize {
        c
    }

    fn vm_var(&self, c: usize) -> usize {
        self.m() + c
    }

    fn p_var(&self, j: usize) -> usize {
        2 * self.m() + j
    }

    fn q_var(&self, j: usize) -> usize {
        2 * self.m() + self.nf() + j
    }

    fn n_core(&self) -> usize {
        2 * self.m() + 2 * self.nf()
    }

    fn slack_var(&self, s: usize) -> usize {
        self.n_core() + s
    }

    fn voltages(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = self.model.n();
        let mut vm = vec![self.slack_vm; n];
        let mut va = vec![0.0; n];
        for (c, &i) in self.pq.iter().enumerate() {
            va[i] = x[self.va_var(c)];
            vm[i] = x[self.vm_var(c)];
        }
        (vm, va)
    }

    fn initial_point(&self) -> DVector<f64> {
        let base = self.p.net.s_base_kva();
        let mut x = DVector::zeros(self.dim());
        for (c, &i) in self.pq.iter().enumerate() {
            x[self.va_var(c)] = self.p.va0[i];
            x[self.vm_var(c)] = self.p.vm0[i];
        }
        for (j, f) in self.p.flex.iter().enumerate() {
            let b = &f.bounds;
            x[self.p_var(j)] = f.p_kw.clamp(b.p_min, b.p_max) / base;
            x[self.q_var(j)] = f.q_kvar.clamp(b.q_min, b.q_max) / base;
        }
        if self.elastic {
            // slacks are still zero here, so the soft rows hold the raw violation
            let (h, _) = self.inequalities(&x);
            for s in 0..self.n_soft {
                x[self.slack_var(s)] = h[s].max(0.0) + 1.0;
            }
        }
        x
    }

    /// Unscaled objective in p.u.
    fn cost(&self, x: &DVector<f64>) -> f64 {
        let base = self.p.net.s_base_kva();
        self.p
            .flex
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let dp = x[self.p_var(j)] - f.p_target_kw / base;
                let q = x[self.q_var(j)];
                f.costs.c_p * dp * dp + f.costs.c_q * q * q
            })
            .sum()
    }
}

impl Nlp for Formulation<'_> {
    fn dim(&self) -> usize {
        self.n_core() + if self.elastic { self.n_soft } else { 0 }
    }

    fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.dim();
        let base = self.p.net.s_base_kva();
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for (j, f) in self.p.flex.iter().enumerate() {
            let (cp, cq) = (f.costs.c_p / self.cost_scale, f.costs.c_q / self.cost_scale);
            let (pv, qv) = (self.p_var(j), self.q_var(j));
            grad[pv] = 2.0 * cp * (x[pv] - f.p_target_kw / base);
            grad[qv] = 2.0 * cq * x[qv];
            hess[(pv, pv)] = 2.0 * cp;
            hess[(qv, qv)] = 2.0 * cq;
        }
        let mut value = self.cost(x) / self.cost_scale;
        if self.elastic {
            for s in 0..self.n_soft {
                let v = self.slack_var(s);
                grad[v] = ELASTIC_PENALTY;
                value += ELASTIC_PENALTY * x[v];
            }
        }
        (value, grad, hess)
    }

    fn equalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.m();
        let n = self.dim();
        let base = self.p.net.s_base_kva();
        let (vm, va) = self.voltages(x);
        let v = complex_voltage(&vm, &va);
        let s = self.model.bus_power(&v);
        let (ds_dva, ds_dvm) = self.model.dsbus_dv(&v);

        let rows = 2 * m + self.fixed.len();
        let mut g = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, n);
        for (r, &i) in self.pq.iter().enumerate() {
            g[r] = self.p.base.p_kw[i] / base + s[i].re;
            g[m + r] = self.p.base.q_kvar[i] / base + s[i].im;
            for (c, &k) in self.pq.iter().enumerate() {
                jac[(r, self.va_var(c))] = ds_dva[(i, k)].re;
                jac[(r, self.vm_var(c))] = ds_dvm[(i, k)].re;
                jac[(m + r, self.va_var(c))] = ds_dva[(i, k)].im;
                jac[(m + r, self.vm_var(c))] = ds_dvm[(i, k)].im;
            }
        }
        for (j, &bus) in self.p.flex_bus.iter().enumerate() {
            let r = self.pos[bus].expect("flexibility on slack bus");
            g[r] += x[self.p_var(j)];
            g[m + r] += x[self.q_var(j)];
            jac[(r, self.p_var(j))] = 1.0;
            jac[(m + r, self.q_var(j))] = 1.0;
        }
        for (e, &(var, val)) in self.fixed.iter().enumerate() {
            g[2 * m + e] = x[var] - val;
            jac[(2 * m + e, var)] = 1.0;
        }
        (g, jac)
    }

    fn inequalities(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.m();
        let n = self.dim();
        let (vm, va) = self.voltages(x);
        let v = complex_voltage(&vm, &va);
        let (a_min, a_max) = angle_bounds();
        let band = self.p.band;

        // soft rows first: flows, then voltage band
        let rows = self.n_soft + 2 * m + 2 * self.boxes.len() + if self.elastic { self.n_soft } else { 0 };
        let mut h = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, n);
        let mut r = 0;
        for &(k, s_max) in &self.p.limit_idx {
            for at_from in [true, false] {
                let d = self.model.dsbr_dv(k, at_from, &v);
                let inv = 1.0 / (s_max * s_max);
                h[r] = d.s.norm_sqr() * inv - 1.0;
                let grad = |c: num_complex::Complex64| 2.0 * (d.s.re * c.re + d.s.im * c.im) * inv;
                for (bus, dva, dvm) in [(d.from, d.dva_from, d.dvm_from), (d.to, d.dva_to, d.dvm_to)] {
                    if let Some(c) = self.pos[bus] {
                        jac[(r, self.va_var(c))] += grad(dva);
                        jac[(r, self.vm_var(c))] += grad(dvm);
                    }
                }
                r += 1;
            }
        }
        for c in 0..m {
            let var = self.vm_var(c);
            h[r] = band.v_min - x[var];
            jac[(r, var)] = -1.0;
            h[r + 1] = x[var] - band.v_max;
            jac[(r + 1, var)] = 1.0;
            r += 2;
        }
        debug_assert_eq!(r, self.n_soft);
        if self.elastic {
            for s in 0..self.n_soft {
                let v = self.slack_var(s);
                h[s] -= x[v];
                jac[(s, v)] = -1.0;
            }
        }
        for c in 0..m {
            let var = self.va_var(c);
            h[r] = a_min - x[var];
            jac[(r, var)] = -1.0;
            h[r + 1] = x[var] - a_max;
            jac[(r + 1, var)] = 1.0;
            r += 2;
        }
        for &(var, lo, hi) in &self.boxes {
            h[r] = lo - x[var];
            jac[(r, var)] = -1.0;
            h[r + 1] = x[var] - hi;
            jac[(r + 1, var)] = 1.0;
            r += 2;
        }
        if self.elastic {
            for s in 0..self.n_soft {
                let v = self.slack_var(s);
                h[r] = -x[v];
                jac[(r, v)] = -1.0;
                r += 1;
            }
        }
        (h, jac)
    }
}

impl OpfProblem {
    /// Re-evaluates all constraint classes at a candidate point using the
    /// power-flow primitives.
    pub fn feasibility(&self, vm: &[f64], va: &[f64], setpoints: &[Setpoint]) -> Result<FeasibilityReport, OpfError> {
        let model = GridModel::new(&self.net)?;
        let base = self.net.s_base_kva();
        let v = complex_voltage(vm, va);
        let s = model.bus_power(&v);
        let mut inj = self.base.clone();
        for (sp, &bus) in setpoints.iter().zip(&self.flex_bus) {
            inj.add(bus, sp.p_kw, sp.q_kvar);
        }
        let mut rep = FeasibilityReport::default();
        for i in model.pq() {
            rep.balance = rep
                .balance
                .max((inj.p_kw[i] / base + s[i].re).abs())
                .max((inj.q_kvar[i] / base + s[i].im).abs());
            rep.voltage = rep
                .voltage
                .max(self.band.v_min - vm[i])
                .max(vm[i] - self.band.v_max);
            let (a_min, a_max) = angle_bounds();
            rep.angle = rep.angle.max(a_min - va[i]).max(va[i] - a_max);
        }
        let (sf, st) = model.branch_power(&v);
        for &(k, s_max) in &self.limit_idx {
            rep.flow = rep.flow.max(sf[k].norm() - s_max).max(st[k].norm() - s_max);
        }
        for (f, sp) in self.flex.iter().zip(setpoints) {
            let b = &f.bounds;
            let excess = (b.p_min - sp.p_kw)
                .max(sp.p_kw - b.p_max)
                .max(b.q_min - sp.q_kvar)
                .max(sp.q_kvar - b.q_max);
            rep.bounds = rep.bounds.max(excess / base);
        }
        Ok(rep)
    }

    pub fn solve(&self, opts: &OpfOptions) -> Result<OpfSolution, OpfError> {
        let ipm_opts = IpmOptions {
            max_iter: opts.max_iter,
            ..IpmOptions::default()
        };
        let hard = Formulation::new(self, false)?;
        let res = ipm::solve(&hard, hard.initial_point(), &ipm_opts);
        let (form, res, status) = if res.converged {
            (hard, res, OpfStatus::Optimal)
        } else {
            log::debug!("OPF hard problem not solved in {} iterations; trying elastic", res.iterations);
            let elastic = Formulation::new(self, true)?;
            let eres = ipm::solve(&elastic, elastic.initial_point(), &ipm_opts);
            (elastic, eres, OpfStatus::Infeasible)
        };
        let base = self.net.s_base_kva();
        let (vm, va) = form.voltages(&res.x);
        let setpoints: Vec<Setpoint> = self
            .flex
            .iter()
            .enumerate()
            .map(|(j, f)| Setpoint {
                id: f.id.clone(),
                p_kw: res.x[form.p_var(j)] * base,
                q_kvar: res.x[form.q_var(j)] * base,
            })
            .collect();
        let feasibility = self.feasibility(&vm, &va, &setpoints)?;
        let feasible = feasibility.balance <= opts.tol_eq && feasibility.max_inequality() <= opts.tol_ineq;
        let status = match status {
            OpfStatus::Optimal if feasible => OpfStatus::Optimal,
            _ if feasible => OpfStatus::FeasibleSuboptimal,
            _ => OpfStatus::Infeasible,
        };
        Ok(OpfSolution {
            objective: form.cost(&res.x),
            setpoints,
            vm,
            va,
            status,
            feasibility,
            kkt_residual: res.grad_cond,
            iterations: res.iterations,
        })
    }
}
