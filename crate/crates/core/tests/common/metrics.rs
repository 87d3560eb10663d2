//! Hand-built traces for the metric tests.

use gridcure::sim::{AssetState, BranchSchedule, LimitInterval, LimitSchedule, Mode, Trace, TraceRow};
use gridcure::VoltageBand;

pub fn fixture(vm: &[f64], s: &[f64]) -> Trace {
    Trace {
        mode: Mode::Reference,
        buses: vec!["S".into(), "X".into()],
        slack: "S".into(),
        branches: vec!["L".into()],
        rows: vm
            .iter()
            .zip(s)
            .enumerate()
            .map(|(k, (&v, &s))| TraceRow {
                cycle: k,
                t_s: 15.0 * k as f64,
                converged: true,
                tap: None,
                vm: vec![1.0, v],
                va: vec![0.0, 0.0],
                p_from_kw: vec![s],
                q_from_kvar: vec![0.0],
                loading_kva: vec![s],
                assets: AssetState::default(),
                commands: String::new(),
            })
            .collect(),
    }
}

pub fn stepped_limit() -> LimitSchedule {
    LimitSchedule {
        branches: vec![BranchSchedule {
            branch: "L".into(),
            intervals: vec![
                LimitInterval { from_s: 0.0, to_s: 15.0, s_max_kva: 40.0 },
                LimitInterval { from_s: 30.0, to_s: 45.0, s_max_kva: 50.0 },
            ],
        }],
        band: VoltageBand { v_min: 0.9, v_max: 1.1 },
    }
}

