//! Weighted-least-squares state estimation.
//!
//! The state vector is `[δ_i (non-slack), V_i (all)]`; the estimator runs
//! Gauss–Newton on `J(x) = Σ w_k (z_k − h_k(x))²` from a flat start.
//! Injection measurements use the consumer counting system; flow
//! measurements are the power entering a branch at the named end bus.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{NetError, Network};
use crate::pf::{complex_voltage, GridModel, PfSolution};

pub const DEFAULT_VOLTAGE_VARIANCE: f64 = 1e-6;
pub const DEFAULT_POWER_VARIANCE: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("system is unobservable: {0}")]
    Unobservable(String),
    #[error("state estimation diverged after {iterations} iterations (gradient {gradient:.3e})")]
    Diverged { iterations: usize, gradient: f64 },
    #[error("invalid measurement #{index}: {reason}")]
    InvalidMeasurement { index: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasKind {
    VoltageMagnitude,
    ActiveInjection,
    ReactiveInjection,
    ActiveFlow,
    ReactiveFlow,
}

impl MeasKind {
    pub fn is_flow(self) -> bool {
        matches!(self, MeasKind::ActiveFlow | MeasKind::ReactiveFlow)
    }

    pub fn default_variance(self) -> f64 {
        match self {
            MeasKind::VoltageMagnitude => DEFAULT_VOLTAGE_VARIANCE,
            _ => DEFAULT_POWER_VARIANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Bus(String),
    /// Branch end; `at` names the bus at which the flow is metered.
    Branch { branch: String, at: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub kind: MeasKind,
    pub location: Location,
    /// Value in p.u.
    pub value: f64,
    /// Variance in p.u.².
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub timestamp_s: f64,
    pub measurements: Vec<Measurement>,
}

/// Placement of one sensor, without a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub kind: MeasKind,
    pub location: Location,
    #[serde(default)]
    pub variance: Option<f64>,
}

impl MeasurementSpec {
    pub fn variance(&self) -> f64 {
        self.variance.unwrap_or_else(|| self.kind.default_variance())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Consumer-convention injections in p.u.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub state: SystemState,
    pub iterations: usize,
    /// Weighted residual `J(x)` before each iteration and at the end.
    pub objective: Vec<f64>,
    /// Infinity norm of the normalised gradient at the returned point.
    pub gradient: f64,
    /// 2-norm condition number of the (normalised) gain matrix.
    pub condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 25 }
    }
}

#[derive(Debug, Clone, Copy)]
enum Site {
    Bus(usize),
    Branch { k: usize, at_from: bool },
}

fn resolve(net: &Network, index: usize, loc: &Location, kind: MeasKind) -> Result<Site, SeError> {
    let bad = |reason: String| SeError::InvalidMeasurement { index, reason };
    match (loc, kind.is_flow()) {
        (Location::Bus(id), false) => net
            .bus_idx(id)
            .map(Site::Bus)
            .ok_or_else(|| bad(format!("unknown bus `{id}`"))),
        (Location::Branch { branch, at }, true) => {
            let k = net
                .branch_idx(branch)
                .ok_or_else(|| bad(format!("unknown branch `{branch}`")))?;
            let (f, t) = net.endpoints(k);
            match net.bus_idx(at) {
                Some(b) if b == f => Ok(Site::Branch { k, at_from: true }),
                Some(b) if b == t => Ok(Site::Branch { k, at_from: false }),
                _ => Err(bad(format!("`{at}` is not an end of branch `{branch}`"))),
            }
        }
        _ => Err(bad(format!("{kind:?} cannot be located at {loc:?}"))),
    }
}

struct Evaluator<'a> {
    model: &'a GridModel,
    sites: Vec<(MeasKind, Site)>,
    /// Column of each bus angle in the state vector; `None` for the slack.
    va_col: Vec<Option<usize>>,
    n: usize,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a GridModel, sites: Vec<(MeasKind, Site)>) -> Self {
        let n = model.n();
        let mut va_col = vec![None; n];
        for (c, i) in model.pq().into_iter().enumerate() {
            va_col[i] = Some(c);
        }
        Self { model, sites, va_col, n }
    }

    fn n_state(&self) -> usize {
        2 * self.n - 1
    }

    fn vm_col(&self, i: usize) -> usize {
        self.n - 1 + i
    }

    fn split(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut va = vec![0.0; self.n];
        for (i, c) in self.va_col.iter().enumerate() {
            if let Some(c) = c {
                va[i] = x[*c];
            }
        }
        let vm = (0..self.n).map(|i| x[self.vm_col(i)]).collect();
        (vm, va)
    }

    /// Measurement function values and Jacobian at `x`.
    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (vm, va) = self.split(x);
        let v = complex_voltage(&vm, &va);
        let s = self.model.bus_power(&v);
        let (ds_dva, ds_dvm) = self.model.dsbus_dv(&v);
        let m = self.sites.len();
        let mut h = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, self.n_state());
        for (r, &(kind, site)) in self.sites.iter().enumerate() {
            // (value, d/dva row, d/dvm row) as complex pieces; real/imag
            // part picked by the measurement kind.
            let pick = |c: Complex64| match kind {
                MeasKind::ActiveInjection => -c.re,
                MeasKind::ReactiveInjection => -c.im,
                MeasKind::ActiveFlow => c.re,
                MeasKind::ReactiveFlow => c.im,
                MeasKind::VoltageMagnitude => unreachable!(),
            };
            match (kind, site) {
                (MeasKind::VoltageMagnitude, Site::Bus(i)) => {
                    h[r] = vm[i];
                    jac[(r, self.vm_col(i))] = 1.0;
                }
                (_, Site::Bus(i)) => {
                    h[r] = pick(s[i]);
                    for k in 0..self.n {
                        if let Some(c) = self.va_col[k] {
                            jac[(r, c)] = pick(ds_dva[(i, k)]);
                        }
                        jac[(r, self.vm_col(k))] = pick(ds_dvm[(i, k)]);
                    }
                }
                (_, Site::Branch { k, at_from }) => {
                    let d = self.model.dsbr_dv(k, at_from, &v);
                    h[r] = pick(d.s);
                    for (bus, dva, dvm) in [(d.from, d.dva_from, d.dvm_from), (d.to, d.dva_to, d.dvm_to)] {
                        if let Some(c) = self.va_col[bus] {
                            jac[(r, c)] += pick(dva);
                        }
                        jac[(r, self.vm_col(bus))] += pick(dvm);
                    }
                }
            }
        }
        (h, jac)
    }
}

/// Number of state variables `2n − 1` and the redundancy check `m ≥ 2n − 1`.
///
/// The observability ratio is commonly quoted both as `m / (2n − 1)` and
/// its inverse; this implementation requires at least as many measurements
/// as states.
pub fn observability(net: &Network, m: usize) -> (usize, bool) {
    let states = 2 * net.n_buses() - 1;
    (states, m >= states)
}

pub fn estimate(net: &Network, z: &MeasurementSet, opts: &SeOptions) -> Result<Estimate, SeError> {
    let (states, ok) = observability(net, z.measurements.len());
    if !ok {
        return Err(SeError::Unobservable(format!(
            "{} measurements for {states} states",
            z.measurements.len()
        )));
    }
    if !z
        .measurements
        .iter()
        .any(|m| m.kind == MeasKind::VoltageMagnitude)
    {
        return Err(SeError::Unobservable("no voltage magnitude measurement".into()));
    }
    let mut sites = Vec::with_capacity(z.measurements.len());
    for (index, m) in z.measurements.iter().enumerate() {
        if !(m.variance > 0.0) || !m.value.is_finite() {
            return Err(SeError::InvalidMeasurement {
                index,
                reason: format!("variance {} / value {}", m.variance, m.value),
            });
        }
        sites.push((m.kind, resolve(net, index, &m.location, m.kind)?));
    }

    let model = GridModel::new(net)?;
    let eval = Evaluator::new(&model, sites);
    let zv = DVector::from_iterator(z.measurements.len(), z.measurements.iter().map(|m| m.value));
    let w_raw: Vec<f64> = z.measurements.iter().map(|m| 1.0 / m.variance).collect();
    let w_max = w_raw.iter().cloned().fold(0.0, f64::max);
    // Normalised weights keep the iteration invariant to a common scaling
    // of all variances.
    let w = DVector::from_iterator(w_raw.len(), w_raw.iter().map(|w| w / w_max));

    let mut x = DVector::zeros(eval.n_state());
    for i in 0..eval.n {
        x[eval.vm_col(i)] = 1.0;
    }

    let mut objective = Vec::new();
    let mut iterations = 0;
    loop {
        let (h, jac) = eval.eval(&x);
        let r = &zv - &h;
        objective.push(r.iter().zip(&w).map(|(ri, wi)| wi * w_max * ri * ri).sum());
        let wh = DMatrix::from_fn(jac.nrows(), jac.ncols(), |i, j| jac[(i, j)] * w[i]);
        let grad = wh.transpose() * &r;
        let gnorm = grad.amax();
        let gain = jac.transpose() * &wh;
        let sv = gain.clone().singular_values();
        let condition = sv.max() / sv.min();
        if !(sv.min() > sv.max() * 1e-14) {
            return Err(SeError::Unobservable(format!("gain matrix condition {condition:.3e}")));
        }
        if gnorm <= opts.tol {
            let (vm, va) = eval.split(&x);
            let v = complex_voltage(&vm, &va);
            let s = model.bus_power(&v);
            let state = SystemState {
                p: s.iter().map(|c| -c.re).collect(),
                q: s.iter().map(|c| -c.im).collect(),
                vm,
                va,
            };
            let worst = objective.iter().cloned().fold(0.0, f64::max);
            if objective.last().copied().unwrap_or(0.0) > objective[0] {
                log::warn!("WLS objective increased: {:?} (max {worst})", objective);
            }
            return Ok(Estimate {
                state,
                iterations,
                objective,
                gradient: gnorm,
                condition,
            });
        }
        if iterations >= opts.max_iter || !gnorm.is_finite() {
            return Err(SeError::Diverged {
                iterations,
                gradient: gnorm,
            });
        }
        let dx = gain
            .cholesky()
            .ok_or_else(|| SeError::Unobservable("gain matrix is not positive definite".into()))?
            .solve(&grad);
        x += dx;
        iterations += 1;
    }
}

/// Exact value of a sensor for a given voltage profile, in p.u.
pub fn exact_value(net: &Network, model: &GridModel, vm: &[f64], va: &[f64], spec: &MeasurementSpec) -> Result<f64, SeError> {
    let site = resolve(net, 0, &spec.location, spec.kind)?;
    let eval = Evaluator::new(model, vec![(spec.kind, site)]);
    let mut x = DVector::zeros(eval.n_state());
    for i in 0..eval.n {
        if let Some(c) = eval.va_col[i] {
            x[c] = va[i];
        }
        x[eval.vm_col(i)] = vm[i];
    }
    Ok(eval.eval(&x).0[0])
}

/// Sensor readings for a power-flow solution. Each value gets independent
/// Gaussian noise with standard deviation `noise_scale * sqrt(variance)`.
pub fn synthesize_measurements(
    net: &Network,
    truth: &PfSolution,
    specs: &[MeasurementSpec],
    seed: u64,
    noise_scale: f64,
    timestamp_s: f64,
) -> Result<MeasurementSet, SeError> {
    let model = GridModel::new(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let measurements = specs
        .iter()
        .map(|spec| {
            let exact = exact_value(net, &model, &truth.vm, &truth.va, spec)?;
            let variance = spec.variance();
            let eps: f64 = StandardNormal.sample(&mut rng);
            Ok(Measurement {
                kind: spec.kind,
                location: spec.location.clone(),
                value: exact + noise_scale * variance.sqrt() * eps,
                variance,
            })
        })
        .collect::<Result<Vec<_>, SeError>>()?;
    Ok(MeasurementSet {
        timestamp_s,
        measurements,
    })
}

/// Measurement function values and Jacobian at a given voltage profile.
pub fn measurement_jacobian(net: &Network, z: &MeasurementSet, vm: &[f64], va: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), SeError> {
    let model = GridModel::new(net)?;
    let sites = z
        .measurements
        .iter()
        .enumerate()
        .map(|(i, m)| resolve(net, i, &m.location, m.kind).map(|s| (m.kind, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let eval = Evaluator::new(&model, sites);
    let mut x = DVector::zeros(eval.n_state());
    for i in 0..eval.n {
        if let Some(c) = eval.va_col[i] {
            x[c] = va[i];
        }
        x[eval.vm_col(i)] = vm[i];
    }
    let (h, jac) = eval.eval(&x);
    Ok((h.iter().copied().collect(), jac))
}
