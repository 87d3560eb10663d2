//! Benchmark fixtures: the shipped feeder at a high-feed-in operating point.

use std::path::PathBuf;

use gridcure::net::{load_network, Network};
use gridcure::pf::InjectionSpec;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/sgtl")
}

pub fn feeder() -> Network {
    load_network(&scenario_dir().join("network.json")).expect("shipped network loads")
}

/// PV feeding 50 kW at the feeder end, 20 kW resistive load mid-feeder.
pub fn midday(net: &Network) -> InjectionSpec {
    let mut inj = InjectionSpec::zeros(net.n_buses());
    inj.add(net.bus_idx("PV").expect("PV bus"), -50.0, 0.0);
    inj.add(net.bus_idx("B008").expect("B008 bus"), 20.0, 2.0);
    inj
}
