//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver paths it is used to check.

#![allow(dead_code)]

use gridcure::net::{Branch, Bus, BusKind, Network, S_BASE_KVA};
use gridcure::pf::InjectionSpec;
use gridcure::se::{Location, MeasKind, MeasurementSpec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod ctrl;
pub mod frames;
pub mod metrics;
pub mod opf;

pub const Z_BASE_LV: f64 = 1.6;

/// Random radial LV network with 2..=max_n buses and a random load pattern.
pub fn random_radial(seed: u64, max_n: usize) -> (Network, InjectionSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_n);
    let mut buses = vec![Bus::new("b0", 0.4, BusKind::Slack)];
    let mut branches = Vec::new();
    for i in 1..n {
        buses.push(Bus::new(format!("b{i}"), 0.4, BusKind::Load));
        let parent = rng.random_range(0..i);
        let r = rng.random_range(0.005..0.04) * Z_BASE_LV;
        let x = rng.random_range(0.002..0.03) * Z_BASE_LV;
        let mut br = Branch::cable(format!("l{i}"), format!("b{parent}"), format!("b{i}"), r, x, 200.0);
        if rng.random_bool(0.3) {
            br = br.with_shunt(rng.random_range(0.0..0.02) / Z_BASE_LV);
        }
        branches.push(br);
    }
    let net = Network::new(buses, branches, S_BASE_KVA).unwrap();
    let mut inj = InjectionSpec::zeros(n);
    for i in 1..n {
        inj.p_kw[i] = rng.random_range(-25.0..25.0);
        inj.q_kvar[i] = rng.random_range(-8.0..8.0);
    }
    (net, inj)
}

/// Hand-assembled admittance matrix: sums series and shunt admittances
/// directly from the branch list. Only valid for cable-only networks.
pub fn hand_ybus(net: &Network) -> Vec<Vec<Complex64>> {
    let n = net.n_buses();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in net.branches() {
        let f = net.bus_idx(&br.from).unwrap();
        let t = net.bus_idx(&br.to).unwrap();
        let zb = net.z_base(t);
        let ys = Complex64::new(br.r_ohm / zb, br.x_ohm / zb).inv();
        let sh = Complex64::new(0.0, br.b_siemens * zb / 2.0);
        y[f][f] += ys + sh;
        y[t][t] += ys + sh;
        y[f][t] -= ys;
        y[t][f] -= ys;
    }
    y
}

/// Fixed-point Gauss–Seidel power flow. Returns complex bus voltages.
pub fn gauss_seidel(net: &Network, inj: &InjectionSpec, tol: f64) -> Vec<Complex64> {
    let y = hand_ybus(net);
    let n = net.n_buses();
    let slack = net.slack();
    let s_gen: Vec<Complex64> = (0..n)
        .map(|i| -Complex64::new(inj.p_kw[i], inj.q_kvar[i]) / net.s_base_kva())
        .collect();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    for _ in 0..2_000_000 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            if i == slack {
                continue;
            }
            let mut acc = s_gen[i].conj() / v[i].conj();
            for j in 0..n {
                if j != i {
                    acc -= y[i][j] * v[j];
                }
            }
            let next = acc / y[i][i];
            delta = delta.max((next - v[i]).norm());
            v[i] = next;
        }
        if delta < tol {
            return v;
        }
    }
    panic!("Gauss-Seidel oracle did not converge");
}

/// Two-bus closed form: slack at 1 p.u., series z, consumer load S at bus 2.
/// |V2|^4 + (2(P r + Q x) - 1)|V2|^2 + |S|^2 |z|^2 = 0, upper root.
pub fn two_bus_vm(p: f64, q: f64, r: f64, x: f64) -> f64 {
    let b = 2.0 * (p * r + q * x) - 1.0;
    let c = (p * p + q * q) * (r * r + x * x);
    ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

/// Same root found by bisection on the scalar residual.
pub fn two_bus_vm_bisect(p: f64, q: f64, r: f64, x: f64) -> f64 {
    let g = |u: f64| u * u + (2.0 * (p * r + q * x) - 1.0) * u + (p * p + q * q) * (r * r + x * x);
    // upper root of the quadratic in u = |V|^2 lies in [vertex, 1.5]
    let vertex = (1.0 - 2.0 * (p * r + q * x)) / 2.0;
    let (mut lo, mut hi) = (vertex, 1.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (0.5 * (lo + hi)).sqrt()
}

/// Central finite-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let m = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; m];
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..m {
            jac[r][c] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Max relative deviation with an absolute floor for near-zero entries.
pub fn max_rel_dev(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

pub fn repo_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shipped_scenario() -> gridcure::sim::Scenario {
    gridcure::sim::Scenario::load(&repo_root().join("scenarios/sgtl/sgtl.json")).unwrap()
}

/// Slack, transformer, a load bus and a feeder end with PV, battery and a
/// charging station. Sized so that large irradiance pushes the far end
/// over 1.1 p.u.
pub fn feeder_scenario(load_kw: f64, irradiance: f64, seed: u64, limit_kva: f64) -> gridcure::sim::Scenario {
    let tap = gridcure::net::TapChanger {
        position: 0,
        neutral: 0,
        step: 0.025,
        min: -2,
        max: 2,
    };
    let net = Network::new(
        vec![
            Bus::new("MV", 10.0, BusKind::Slack),
            Bus::new("A", 0.4, BusKind::Load),
            Bus::new("B", 0.4, BusKind::Flexibility),
        ],
        vec![
            Branch::transformer("T", "MV", "A", 0.0077, 0.0244, 250.0, tap),
            Branch::cable("L", "A", "B", 0.08, 0.03, 200.0),
        ],
        S_BASE_KVA,
    )
    .unwrap();
    let spec = serde_json::from_value(serde_json::json!({
        "name": "feeder",
        "network": "unused",
        "t_end_s": 90,
        "seed": seed,
        "slack_vm": 1.03,
        "schedule": {"branches": [{"branch": "L", "intervals": [{"from_s": 0, "to_s": 90, "s_max_kva": limit_kva}]}]},
        "oltc": {"id": "oltc", "asset": 1, "branch": "T"},
        "pv": {"id": "pv", "asset": 2, "bus": "B",
               "model": {"p_ref_kw": 60, "alpha": 0.00273, "eta_inverter": 0.9262, "s_max_kva": 60, "sin_phi_max": 0.44},
               "irradiance": [[0, irradiance * 0.8], [90, irradiance]], "temperature": 30},
        "bss": {"id": "bss", "asset": 3, "bus": "B",
                "model": {"s_max_kva": 30, "e_total_kwh": 100, "e_kwh": 40, "e_min_kwh": 10, "e_max_kwh": 90, "sin_phi_max": 0.44}},
        "ev": {"id": "ev", "asset": 4, "bus": "A", "i_min_a": 6, "i_max_a": 16, "connected": true},
        "rts": 5,
        "loads": [{"bus": "A", "p_kw": load_kw}],
        "meters": [
            {"asset": 10, "location": {"bus": "MV"}, "quantities": ["v"]},
            {"asset": 11, "location": {"branch": {"branch": "T", "at": "MV"}}, "quantities": ["p", "q"]},
            {"asset": 12, "location": {"bus": "A"}, "quantities": ["v", "p", "q"]},
            {"asset": 13, "location": {"bus": "B"}, "quantities": ["v", "p", "q"]},
            {"asset": 14, "location": {"branch": {"branch": "L", "at": "A"}}, "quantities": ["p", "q"]}
        ]
    }))
    .unwrap();
    gridcure::sim::Scenario::from_spec(spec, net, std::path::Path::new(".")).unwrap()
}

/// Voltage at every bus, injections at every non-slack bus and both flows
/// at the `from` end of every branch.
pub fn full_placement(net: &Network, variance: Option<f64>) -> Vec<MeasurementSpec> {
    let mut specs = Vec::new();
    for (i, b) in net.buses().iter().enumerate() {
        specs.push(MeasurementSpec {
            kind: MeasKind::VoltageMagnitude,
            location: Location::Bus(b.id.clone()),
            variance,
        });
        if i != net.slack() {
            for kind in [MeasKind::ActiveInjection, MeasKind::ReactiveInjection] {
                specs.push(MeasurementSpec {
                    kind,
                    location: Location::Bus(b.id.clone()),
                    variance,
                });
            }
        }
    }
    for br in net.branches() {
        for kind in [MeasKind::ActiveFlow, MeasKind::ReactiveFlow] {
            specs.push(MeasurementSpec {
                kind,
                location: Location::Branch {
                    branch: br.id.clone(),
                    at: br.from.clone(),
                },
                variance,
            });
        }
    }
    specs
}
