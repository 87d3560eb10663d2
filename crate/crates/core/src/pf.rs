//! Newton–Raphson AC power flow in polar coordinates.
//!
//! All injections use the consumer counting system: consumption is
//! positive, feed-in negative. Internally the network equations are written
//! in generator convention, `S_i = V_i conj(sum_j Y_ij V_j)`, so the balance
//! at bus `i` reads `P_i + Re(S_i) = 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{assemble, BranchStamp, NetError, Network};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("power flow diverged after {iterations} iterations, max mismatch {mismatch:.3e} p.u.")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("invalid injection: {0}")]
    InvalidInjection(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Nodal injections per bus in kW / kVar, consumer counting system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

impl InjectionSpec {
    pub fn zeros(n: usize) -> Self {
        Self {
            p_kw: vec![0.0; n],
            q_kvar: vec![0.0; n],
        }
    }

    pub fn add(&mut self, bus: usize, p_kw: f64, q_kvar: f64) {
        self.p_kw[bus] += p_kw;
        self.q_kvar[bus] += q_kvar;
    }

    fn check(&self, net: &Network) -> Result<(), PfError> {
        let n = net.n_buses();
        for len in [self.p_kw.len(), self.q_kvar.len()] {
            if len != n {
                return Err(PfError::Dimension {
                    expected: n,
                    got: len,
                });
            }
        }
        if let Some(i) = (0..n).find(|&i| !self.p_kw[i].is_finite() || !self.q_kvar[i].is_finite()) {
            return Err(PfError::InvalidInjection(format!(
                "non-finite value at bus `{}`",
                net.buses()[i].id
            )));
        }
        let s = net.slack();
        if self.p_kw[s] != 0.0 || self.q_kvar[s] != 0.0 {
            return Err(PfError::InvalidInjection(format!(
                "slack bus `{}` cannot carry a specified injection",
                net.buses()[s].id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Voltage magnitude held at the slack bus.
    pub slack_vm: f64,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 30,
            slack_vm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Complex power entering each branch at its `from` end, kVA.
    pub s_from: Vec<Complex64>,
    /// Complex power entering each branch at its `to` end, kVA.
    pub s_to: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PfSolution {
    /// Larger of the two end apparent powers of branch `k`, kVA.
    pub fn loading_kva(&self, k: usize) -> f64 {
        self.s_from[k].norm().max(self.s_to[k].norm())
    }
}

/// Admittance data cached for repeated evaluation on one network.
#[derive(Debug, Clone)]
pub struct GridModel {
    pub ybus: DMatrix<Complex64>,
    pub stamps: Vec<BranchStamp>,
    pub slack: usize,
    pub s_base_kva: f64,
}

impl GridModel {
    pub fn new(net: &Network) -> Result<Self, NetError> {
        let stamps = net.branch_stamps()?;
        Ok(Self {
            ybus: assemble(net.n_buses(), &stamps),
            stamps,
            slack: net.slack(),
            s_base_kva: net.s_base_kva(),
        })
    }

    pub fn n(&self) -> usize {
        self.ybus.nrows()
    }

    /// Non-slack bus indices in ascending order.
    pub fn pq(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| i != self.slack).collect()
    }

    /// Net complex power injected into the network at every bus
    /// (generator convention), p.u.
    pub fn bus_power(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let i = &self.ybus * v;
        v.zip_map(&i, |vi, ii| vi * ii.conj())
    }

    /// `(dS/dVa, dS/dVm)` of [`Self::bus_power`].
    pub fn dsbus_dv(&self, v: &DVector<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let n = self.n();
        let ibus = &self.ybus * v;
        let vnorm = v.map(|x| x / x.norm());
        let mut ds_dva = DMatrix::zeros(n, n);
        let mut ds_dvm = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let y = self.ybus[(i, k)];
                ds_dva[(i, k)] = -J * v[i] * (y * v[k]).conj();
                ds_dvm[(i, k)] = v[i] * (y * vnorm[k]).conj();
            }
            ds_dva[(i, i)] += J * v[i] * ibus[i].conj();
            ds_dvm[(i, i)] += ibus[i].conj() * vnorm[i];
        }
        (ds_dva, ds_dvm)
    }

    /// Branch end powers `(S_from, S_to)` in p.u.
    pub fn branch_power(&self, v: &DVector<Complex64>) -> (Vec<Complex64>, Vec<Complex64>) {
        self.stamps
            .iter()
            .map(|s| {
                let (vf, vt) = (v[s.from], v[s.to]);
                let i_f = s.yff * vf + s.yft * vt;
                let i_t = s.ytf * vf + s.ytt * vt;
                (vf * i_f.conj(), vt * i_t.conj())
            })
            .unzip()
    }

    /// Partial derivatives of one branch end power with respect to the
    /// angle and magnitude of the `from` and `to` buses.
    pub fn dsbr_dv(&self, k: usize, at_from: bool, v: &DVector<Complex64>) -> BranchEndDerivs {
        let s = &self.stamps[k];
        // Express both ends as "near" (where power is measured) and "far".
        let (near, far, y_nn, y_nf) = if at_from {
            (s.from, s.to, s.yff, s.yft)
        } else {
            (s.to, s.from, s.ytt, s.ytf)
        };
        let (vn, vf) = (v[near], v[far]);
        let (un, uf) = (vn / vn.norm(), vf / vf.norm());
        let i = y_nn * vn + y_nf * vf;
        let s_end = vn * i.conj();
        let dva_near = J * (i.conj() * vn - vn * (y_nn * vn).conj());
        let dva_far = -J * vn * (y_nf * vf).conj();
        let dvm_near = vn * (y_nn * un).conj() + i.conj() * un;
        let dvm_far = vn * (y_nf * uf).conj();
        let (dva_from, dva_to, dvm_from, dvm_to) = if at_from {
            (dva_near, dva_far, dvm_near, dvm_far)
        } else {
            (dva_far, dva_near, dvm_far, dvm_near)
        };
        BranchEndDerivs {
            s: s_end,
            from: s.from,
            to: s.to,
            dva_from,
            dva_to,
            dvm_from,
            dvm_to,
        }
    }
}

/// Complex end power of one branch and its sensitivities.
#[derive(Debug, Clone, Copy)]
pub struct BranchEndDerivs {
    pub s: Complex64,
    pub from: usize,
    pub to: usize,
    pub dva_from: Complex64,
    pub dva_to: Complex64,
    pub dvm_from: Complex64,
    pub dvm_to: Complex64,
}

pub fn complex_voltage(vm: &[f64], va: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(
        vm.len(),
        vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)),
    )
}

/// Solves the power flow from a flat start.
pub fn solve_pf(net: &Network, inj: &InjectionSpec, opts: &PfOptions) -> Result<PfSolution, PfError> {
    let n = net.n_buses();
    let mut vm = vec![1.0; n];
    vm[net.slack()] = opts.slack_vm;
    solve_pf_from(net, inj, opts, &vm, &vec![0.0; n])
}

/// Solves the power flow starting from the given voltage profile.
pub fn solve_pf_from(
    net: &Network,
    inj: &InjectionSpec,
    opts: &PfOptions,
    vm0: &[f64],
    va0: &[f64],
) -> Result<PfSolution, PfError> {
    inj.check(net)?;
    let n = net.n_buses();
    for len in [vm0.len(), va0.len()] {
        if len != n {
            return Err(PfError::Dimension { expected: n, got: len });
        }
    }
    let model = GridModel::new(net)?;
    let base = net.s_base_kva();
    let pq = model.pq();
    let m = pq.len();
    let p_spec: Vec<f64> = inj.p_kw.iter().map(|p| p / base).collect();
    let q_spec: Vec<f64> = inj.q_kvar.iter().map(|q| q / base).collect();

    let mut vm = vm0.to_vec();
    let mut va = va0.to_vec();
    vm[model.slack] = opts.slack_vm;
    va[model.slack] = 0.0;

    let mismatch = |vm: &[f64], va: &[f64]| -> (DVector<Complex64>, DVector<f64>) {
        let v = complex_voltage(vm, va);
        let s = model.bus_power(&v);
        let mut f = DVector::zeros(2 * m);
        for (r, &i) in pq.iter().enumerate() {
            f[r] = p_spec[i] + s[i].re;
            f[m + r] = q_spec[i] + s[i].im;
        }
        (v, f)
    };

    let (mut v, mut f) = mismatch(&vm, &va);
    let mut norm = f.amax();
    let mut iterations = 0;
    while norm > opts.tol {
        if iterations >= opts.max_iter || !norm.is_finite() {
            return Err(PfError::Diverged {
                iterations,
                mismatch: norm,
            });
        }
        let (ds_dva, ds_dvm) = model.dsbus_dv(&v);
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                jac[(r, c)] = ds_dva[(i, k)].re;
                jac[(r, m + c)] = ds_dvm[(i, k)].re;
                jac[(m + r, c)] = ds_dva[(i, k)].im;
                jac[(m + r, m + c)] = ds_dvm[(i, k)].im;
            }
        }
        let dx = jac.lu().solve(&(-&f)).ok_or(PfError::Diverged {
            iterations,
            mismatch: norm,
        })?;
        for (r, &i) in pq.iter().enumerate() {
            va[i] += dx[r];
            vm[i] += dx[m + r];
        }
        iterations += 1;
        (v, f) = mismatch(&vm, &va);
        norm = f.amax();
    }

    let (sf, st) = model.branch_power(&v);
    Ok(PfSolution {
        vm,
        va,
        s_from: sf.into_iter().map(|s| s * base).collect(),
        s_to: st.into_iter().map(|s| s * base).collect(),
        converged: true,
        iterations,
        max_mismatch: norm,
    })
}

/// Branch end flows `(S_ij, S_ji)` in kVA for a given voltage profile.
pub fn branch_flows(net: &Network, vm: &[f64], va: &[f64]) -> Result<Vec<(Complex64, Complex64)>, PfError> {
    let n = net.n_buses();
    for len in [vm.len(), va.len()] {
        if len != n {
            return Err(PfError::Dimension { expected: n, got: len });
        }
    }
    let model = GridModel::new(net)?;
    let (sf, st) = model.branch_power(&complex_voltage(vm, va));
    let base = net.s_base_kva();
    Ok(sf.into_iter().zip(st).map(|(f, t)| (f * base, t * base)).collect())
}

/// Consumer-convention nodal injections `(P, Q)` in kW / kVar implied by a
/// voltage profile.
pub fn implied_injections(model: &GridModel, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s = model.bus_power(&complex_voltage(vm, va));
    s.iter()
        .map(|x| (-x.re * model.s_base_kva, -x.im * model.s_base_kva))
        .unzip()
}
