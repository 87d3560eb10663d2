//! Optimal power flow fixtures and grid-search oracles.

use gridcure::assets::Bounds;
use gridcure::net::{Branch, Bus, BusKind, Network, S_BASE_KVA};
use gridcure::opf::{assemble, BranchLimit, FlexKind, Flexibility, OpfOptions, OpfProblem, OpfSolution, OpfStatus, VoltageBand};
use gridcure::pf::{implied_injections, solve_pf, GridModel, InjectionSpec, PfOptions};
use gridcure::se::SystemState;

use super::{two_bus_vm, Z_BASE_LV};

pub const R_PU: f64 = 0.1;
pub const X_PU: f64 = 0.02;

pub fn two_bus() -> Network {
    Network::new(
        vec![Bus::new("s", 0.4, BusKind::Slack), Bus::new("b", 0.4, BusKind::Flexibility)],
        vec![Branch::cable("sb", "s", "b", R_PU * Z_BASE_LV, X_PU * Z_BASE_LV, 170.0)],
        S_BASE_KVA,
    )
    .unwrap()
}

pub fn three_bus() -> Network {
    Network::new(
        vec![
            Bus::new("s", 0.4, BusKind::Slack),
            Bus::new("a", 0.4, BusKind::Load),
            Bus::new("b", 0.4, BusKind::Flexibility),
        ],
        vec![
            Branch::cable("sa", "s", "a", 0.05, 0.02, 170.0),
            Branch::cable("ab", "a", "b", 0.12, 0.01, 100.0),
        ],
        S_BASE_KVA,
    )
    .unwrap()
}

pub fn state_for(net: &Network, inj: &InjectionSpec) -> SystemState {
    let sol = solve_pf(net, inj, &PfOptions::default()).unwrap();
    let model = GridModel::new(net).unwrap();
    let (p, q) = implied_injections(&model, &sol.vm, &sol.va);
    SystemState {
        p: p.iter().map(|v| v / S_BASE_KVA).collect(),
        q: q.iter().map(|v| v / S_BASE_KVA).collect(),
        vm: sol.vm,
        va: sol.va,
    }
}

pub fn pv(bus: &str, avail: f64, q_max: f64) -> Flexibility {
    Flexibility {
        id: "pv".into(),
        bus: bus.into(),
        kind: FlexKind::Pv,
        costs: FlexKind::Pv.default_costs(),
        p_target_kw: -avail,
        bounds: Bounds {
            p_min: -avail,
            p_max: 0.0,
            q_min: -q_max,
            q_max,
        },
        p_kw: -avail,
        q_kvar: 0.0,
    }
}

pub fn opts() -> OpfOptions {
    OpfOptions::default()
}

/// Independent feasibility re-check with the power-flow solver.
pub fn check_with_pf(p: &OpfProblem, sol: &OpfSolution, band: VoltageBand, limits: &[(usize, f64)]) {
    let mut inj = p.base.clone();
    for (f, sp) in p.flex.iter().zip(&sol.setpoints) {
        inj.add(p.net.bus_idx(&f.bus).unwrap(), sp.p_kw, sp.q_kvar);
    }
    let pf = solve_pf(&p.net, &inj, &PfOptions { tol: 1e-12, ..PfOptions::default() }).unwrap();
    for i in 0..p.net.n_buses() {
        // the NLP state must itself satisfy the balance equations
        assert!((pf.vm[i] - sol.vm[i]).abs() <= 1e-6, "bus {i}: {} vs {}", pf.vm[i], sol.vm[i]);
        assert!(pf.vm[i] >= band.v_min - 1e-4 && pf.vm[i] <= band.v_max + 1e-4);
    }
    for &(k, s_max) in limits {
        let worst = pf.s_from[k].norm().max(pf.s_to[k].norm());
        assert!(worst <= s_max + 1e-4 * S_BASE_KVA, "branch {k}: {worst} > {s_max}");
    }
    for (f, sp) in p.flex.iter().zip(&sol.setpoints) {
        assert!(f.bounds.contains(sp.p_kw, sp.q_kvar, 1e-4 * S_BASE_KVA));
    }
}

pub fn pu_cost(f: &Flexibility, p_kw: f64, q_kvar: f64) -> f64 {
    let dp = (p_kw - f.p_target_kw) / S_BASE_KVA;
    let q = q_kvar / S_BASE_KVA;
    f.costs.c_p * dp * dp + f.costs.c_q * q * q
}

/// Closed-form 2-bus grid search over the PV setpoint.
pub fn two_bus_oracle(load_kw: f64, f: &Flexibility, limit_kva: f64, band: VoltageBand) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    let steps = |lo: f64, hi: f64| ((hi - lo) / 0.1).round() as i64;
    let (np, nq) = (steps(f.bounds.p_min, f.bounds.p_max), steps(f.bounds.q_min, f.bounds.q_max));
    for a in 0..=np {
        let p_kw = f.bounds.p_min + 0.1 * a as f64;
        for b in 0..=nq {
            let q_kvar = f.bounds.q_min + 0.1 * b as f64;
            let p = (load_kw + p_kw) / S_BASE_KVA;
            let q = q_kvar / S_BASE_KVA;
            let vm = two_bus_vm(p, q, R_PU, X_PU);
            if !(vm >= band.v_min && vm <= band.v_max) {
                continue;
            }
            let s2 = p * p + q * q;
            let i2 = s2 / (vm * vm);
            let s_from = ((p + i2 * R_PU).powi(2) + (q + i2 * X_PU).powi(2)).sqrt();
            if s2.sqrt().max(s_from) * S_BASE_KVA > limit_kva {
                continue;
            }
            let c = pu_cost(f, p_kw, q_kvar);
            if best.is_none_or(|(bc, _, _)| c < bc) {
                best = Some((c, p_kw, q_kvar));
            }
        }
    }
    best
}

pub fn two_bus_problem(load_kw: f64, f: &Flexibility, limit_kva: f64, band: VoltageBand) -> OpfProblem {
    let net = two_bus();
    let mut inj = InjectionSpec::zeros(2);
    inj.add(1, load_kw + f.p_kw, f.q_kvar);
    let state = state_for(&net, &inj);
    assemble(
        &net,
        &state,
        vec![f.clone()],
        vec![BranchLimit {
            branch: "sb".into(),
            s_max_kva: limit_kva,
        }],
        band,
    )
    .unwrap()
}

/// Grid search over the PV setpoint on the three-bus fixture, each point
/// checked with a full power flow.
pub fn three_bus_oracle(f: &Flexibility, band: VoltageBand, limit_kva: f64) -> f64 {
    let net = three_bus();
    let mut base = InjectionSpec::zeros(3);
    base.add(1, 4.0, 1.0);
    let mut oracle = f64::INFINITY;
    let pf_opts = PfOptions::default();
    let bd = f.bounds;
    let np = ((bd.p_max - bd.p_min) / 0.1).round() as i64;
    let nq = ((bd.q_max - bd.q_min) / 0.1).round() as i64;
    for a in 0..=np {
        let p_kw = bd.p_min + 0.1 * a as f64;
        for b in 0..=nq {
            let q_kvar = bd.q_min + 0.1 * b as f64;
            let c = pu_cost(f, p_kw, q_kvar);
            if c >= oracle {
                continue;
            }
            let mut inj = base.clone();
            inj.add(2, p_kw, q_kvar);
            let Ok(pf) = solve_pf(&net, &inj, &pf_opts) else { continue };
            let ok_v = pf.vm[1..].iter().all(|&v| v >= band.v_min && v <= band.v_max);
            let ok_s = pf.s_from[0].norm().max(pf.s_to[0].norm()) <= limit_kva;
            if ok_v && ok_s {
                oracle = c;
            }
        }
    }
    oracle
}

pub fn ev_fixture(c_ev: f64, scale: f64) -> OpfSolution {
    let net = three_bus();
    let band = VoltageBand { v_min: 0.95, v_max: 1.1 };
    let ev = Flexibility {
        id: "ev".into(),
        bus: "b".into(),
        kind: FlexKind::Ev,
        costs: gridcure::opf::CostFactors { c_p: c_ev * scale, c_q: scale },
        p_target_kw: 11.04,
        bounds: Bounds {
            p_min: 4.14,
            p_max: 11.04,
            q_min: 0.0,
            q_max: 0.0,
        },
        p_kw: 11.04,
        q_kvar: 0.0,
    };
    let bss = Flexibility {
        id: "bss".into(),
        bus: "b".into(),
        kind: FlexKind::Battery,
        costs: gridcure::opf::CostFactors {
            c_p: 100.0 * scale,
            c_q: scale,
        },
        p_target_kw: 0.0,
        bounds: Bounds {
            p_min: -8.0,
            p_max: 8.0,
            q_min: -3.5,
            q_max: 3.5,
        },
        p_kw: 0.0,
        q_kvar: 0.0,
    };
    let mut inj = InjectionSpec::zeros(3);
    inj.add(1, 25.0, 5.0);
    inj.add(2, 30.0 + 11.04, 4.0);
    let state = state_for(&net, &inj);
    let p = assemble(&net, &state, vec![ev, bss], vec![], band).unwrap();
    let sol = p.solve(&opts()).unwrap();
    assert_ne!(sol.status, OpfStatus::Infeasible);
    check_with_pf(&p, &sol, band, &[]);
    sol
}


/// Least-cost feasible setpoint of a curtailable PV unit whose target is
/// full feed-in. Feasibility is monotone in P for these fixtures, so for
/// each Q on a grid the cheapest P is the feasibility boundary, found by
/// bisection. Q is scanned at 0.1 kVar, then at 0.001 around the winner.
pub fn boundary_search(f: &Flexibility, mut feasible: impl FnMut(f64, f64) -> bool) -> Option<(f64, f64, f64)> {
    let bd = f.bounds;
    let mut cheapest_p = |q: f64| -> Option<f64> {
        if feasible(bd.p_min, q) {
            return Some(bd.p_min);
        }
        if !feasible(bd.p_max, q) {
            return None;
        }
        let (mut lo, mut hi) = (bd.p_min, bd.p_max);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid, q) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };
    let mut best: Option<(f64, f64, f64)> = None;
    let mut scan = |q_lo: f64, q_hi: f64, h: f64, best: &mut Option<(f64, f64, f64)>| {
        let n = ((q_hi - q_lo) / h).round() as i64;
        for k in 0..=n {
            let q = (q_lo + h * k as f64).min(q_hi);
            if let Some(p) = cheapest_p(q) {
                let c = pu_cost(f, p, q);
                if best.is_none_or(|(bc, _, _)| c < bc) {
                    *best = Some((c, p, q));
                }
            }
        }
    };
    scan(bd.q_min, bd.q_max, 0.1, &mut best);
    let (_, _, q0) = best?;
    scan((q0 - 0.2).max(bd.q_min), (q0 + 0.2).min(bd.q_max), 0.001, &mut best);
    best
}

/// Feasibility of a PV setpoint on the two-bus fixture, closed form.
pub fn two_bus_point(load_kw: f64, limit_kva: f64, band: VoltageBand, p_kw: f64, q_kvar: f64) -> bool {
    let p = (load_kw + p_kw) / S_BASE_KVA;
    let q = q_kvar / S_BASE_KVA;
    let vm = two_bus_vm(p, q, R_PU, X_PU);
    if !(vm >= band.v_min && vm <= band.v_max) {
        return false;
    }
    let s2 = p * p + q * q;
    let i2 = s2 / (vm * vm);
    let s_from = ((p + i2 * R_PU).powi(2) + (q + i2 * X_PU).powi(2)).sqrt();
    s2.sqrt().max(s_from) * S_BASE_KVA <= limit_kva
}

/// Feasibility of a PV setpoint on the three-bus fixture, by power flow.
pub fn three_bus_point(band: VoltageBand, limit_kva: f64, p_kw: f64, q_kvar: f64) -> bool {
    let net = three_bus();
    let mut inj = InjectionSpec::zeros(3);
    inj.add(1, 4.0, 1.0);
    inj.add(2, p_kw, q_kvar);
    let Ok(pf) = solve_pf(&net, &inj, &PfOptions::default()) else {
        return false;
    };
    let ok_v = pf.vm[1..].iter().all(|&v| v >= band.v_min && v <= band.v_max);
    ok_v && pf.s_from[0].norm().max(pf.s_to[0].norm()) <= limit_kva
}
