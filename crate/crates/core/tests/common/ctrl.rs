//! Decision-rule oracle for the controller.

use gridcure::ctrl::{Action, BranchViolation, BusViolation, TapStatus, ViolationReport, VoltageState};

pub fn report(flow: bool, over: bool, under: bool) -> ViolationReport {
    let bus = |id: &str, state, vm| BusViolation {
        bus: id.into(),
        vm,
        state,
        magnitude: 0.01,
    };
    let mut buses = vec![bus("ok", VoltageState::Within, 1.0)];
    if over {
        buses.push(bus("hi", VoltageState::Over, 1.11));
    }
    if under {
        buses.push(bus("lo", VoltageState::Under, 0.89));
    }
    ViolationReport {
        t_s: 0.0,
        buses,
        branches: vec![BranchViolation {
            branch: "l".into(),
            loading_kva: if flow { 50.0 } else { 30.0 },
            s_max_kva: 40.0,
            magnitude: if flow { 10.0 } else { 0.0 },
        }],
    }
}

/// The rule written out case by case: a tap step replaces the
/// optimization only for a pure single-sided voltage problem with a tap
/// that did not move last cycle and has room to move.
pub fn expected(flow: bool, over: bool, under: bool, tap: Option<TapStatus>, stepped_last: bool) -> Action {
    match (flow, over, under) {
        (false, false, false) => Action::NoAction,
        (true, _, _) | (false, true, true) => Action::RunOpf,
        (false, over, _) => {
            let step = if over { -1 } else { 1 };
            match tap {
                _ if stepped_last => Action::RunOpf,
                None => Action::RunOpf,
                Some(t) if t.position + step < t.min || t.position + step > t.max => Action::RunOpf,
                Some(_) => Action::TapStep(step),
            }
        }
    }
}

