//! The simulated plant: assets behind register stores and the true grid
//! state from the power flow.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::run::{AssetState, TraceRow};
use super::{EventKind, Scenario, SimError};
use crate::assets::BatteryModel;
use crate::bus::{AssetBank, AssetKind, RegisterStore};
use crate::ctrl::{meter_register, phase_base_v, MeterConfig, Quantity};
use crate::pf::{solve_pf_from, InjectionSpec, PfOptions, PfSolution};
use crate::se::synthesize_measurements;

pub struct World {
    scn: Scenario,
    stores: BTreeMap<u8, Arc<RegisterStore>>,
    battery: Option<BatteryModel>,
    bss_p_kw: f64,
    last_t: Option<f64>,
    last: Option<PfSolution>,
    cycle: usize,
}

impl World {
    /// Builds the asset stores with their initial registers. Setpoints
    /// start at the uncontrolled behaviour: PV uncapped, EV at maximum
    /// current, battery idle. The synchronisation bit is 0.
    pub fn new(scn: &Scenario) -> Result<Self, SimError> {
        let s = &scn.spec;
        let mut stores = BTreeMap::new();
        let mut add = |id: u8, kind: AssetKind| {
            let store = Arc::new(RegisterStore::new(kind));
            stores.insert(id, store.clone());
            store
        };
        if let Some(o) = &s.oltc {
            let st = add(o.asset, AssetKind::Oltc);
            let k = scn.net.branch_idx(&o.branch).expect("checked on load");
            let tap = scn.net.branches()[k].tap().expect("checked on load");
            let (_, to) = scn.net.endpoints(k);
            st.set("tap", tap.position.into())?;
            st.set("tap_min", tap.min.into())?;
            st.set("tap_max", tap.max.into())?;
            st.set("v_step", tap.step * phase_base_v(scn.net.buses()[to].base_kv))?;
        }
        if let Some(pv) = &s.pv {
            let st = add(pv.asset, AssetKind::Pv);
            st.set("p_max", pv.model.s_max_kva * 1000.0)?;
            st.set("p_set", -pv.model.s_max_kva * 1000.0)?;
        }
        if let Some(b) = &s.bss {
            let st = add(b.asset, AssetKind::Bss);
            st.set("s_max", b.model.s_max_kva * 1000.0)?;
            st.set("e_total", b.model.e_total_kwh * 1000.0)?;
            st.set("e_min", b.model.e_min_kwh * 1000.0)?;
            st.set("e_max", b.model.e_max_kwh * 1000.0)?;
            st.set("cos_phi", 1.0)?;
        }
        if let Some(ev) = &s.ev {
            let st = add(ev.asset, AssetKind::Cs);
            st.set("i_min", ev.i_min_a)?;
            st.set("i_max", ev.i_max_a)?;
            st.set("i_set", ev.i_max_a)?;
            st.set("state", 1.0)?;
        }
        if let Some(id) = s.rts {
            add(id, AssetKind::Rts);
        }
        for m in &s.meters {
            add(m.asset, AssetKind::Meter);
        }
        Ok(Self {
            battery: s.bss.as_ref().map(|b| b.model),
            scn: scn.clone(),
            stores,
            bss_p_kw: 0.0,
            last_t: None,
            last: None,
            cycle: 0,
        })
    }

    pub fn store(&self, asset: u8) -> Option<&Arc<RegisterStore>> {
        self.stores.get(&asset)
    }

    pub fn bank(&self) -> AssetBank {
        let mut bank = AssetBank::new();
        for (&id, st) in &self.stores {
            bank.insert(id, st.clone());
        }
        bank
    }

    /// One bank per asset, for serving each asset on its own endpoint.
    pub fn banks(&self) -> Vec<(u8, AssetBank)> {
        self.stores
            .iter()
            .map(|(&id, st)| {
                let mut bank = AssetBank::new();
                bank.insert(id, st.clone());
                (id, bank)
            })
            .collect()
    }

    pub fn kinds(&self) -> BTreeMap<u8, AssetKind> {
        self.stores.iter().map(|(&id, st)| (id, st.kind())).collect()
    }

    /// Sets the synchronisation bit so controllers may start.
    pub fn release(&self) -> Result<(), SimError> {
        if let Some(id) = self.scn.spec.rts {
            self.stores[&id].set("sync", 1.0)?;
        }
        Ok(())
    }

    fn ev_connected(&self, t: f64) -> bool {
        let Some(ev) = &self.scn.spec.ev else { return false };
        let mut events: Vec<_> = self.scn.spec.events.iter().filter(|e| e.t_s < t).collect();
        events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
        events.iter().fold(ev.connected, |_, e| e.kind == EventKind::EvPlugIn)
    }

    /// Advances to time `t`: applies the setpoints found in the registers,
    /// solves the grid and publishes readings. If the power flow fails the
    /// previous solution is carried forward and the row is flagged.
    pub fn step(&mut self, t: f64) -> Result<TraceRow, SimError> {
        let scn = &self.scn;
        let s = &scn.spec;
        let net0 = &scn.net;
        if let (Some(b), Some(t0)) = (&mut self.battery, self.last_t) {
            *b = b.integrate(self.bss_p_kw, (t - t0) / 3600.0);
        }

        let mut st = AssetState::default();
        let mut inj = InjectionSpec::zeros(net0.n_buses());
        for (i, p, q) in &scn.loads {
            let (p, q) = (p.value(t), q.value(t));
            inj.add(*i, p, q);
            st.load_p_kw += p;
        }

        let mut tap = None;
        let net = match &s.oltc {
            Some(o) => {
                let pos = self.stores[&o.asset].get("tap")? as i32;
                tap = Some(pos);
                net0.apply_tap(&o.branch, pos)?
            }
            None => net0.clone(),
        };

        let (mut irr, mut temp) = (0.0, 25.0);
        if let (Some(pv), Some(e), Some(tm)) = (&s.pv, &scn.irradiance, &scn.temperature) {
            (irr, temp) = (e.value(t), tm.value(t));
            let reg = &self.stores[&pv.asset];
            let avail = pv.model.available_power(irr, temp).map_err(|e| SimError::Config(e.to_string()))?;
            let p = reg.get("p_set")? / 1000.0;
            let p = p.min(0.0).max(-avail);
            let q_cap = (pv.model.s_max_kva * pv.model.sin_phi_max).min((pv.model.s_max_kva.powi(2) - p * p).max(0.0).sqrt());
            let q = (reg.get("q_set")? / 1000.0).clamp(-q_cap, q_cap);
            inj.add(net.bus_idx(&pv.bus).expect("checked"), p, q);
            (st.pv_avail_kw, st.pv_p_kw, st.pv_q_kvar) = (avail, p, q);
        }
        if let (Some(b), Some(model)) = (&s.bss, &self.battery) {
            let reg = &self.stores[&b.asset];
            let mut p = (reg.get("p_set")? / 1000.0).clamp(-model.s_max_kva, model.s_max_kva);
            if (p > 0.0 && model.e_kwh >= model.e_max_kwh) || (p < 0.0 && model.e_kwh <= model.e_min_kwh) {
                p = 0.0;
            }
            let q_max = model.s_max_kva * model.sin_phi_max;
            let q = (reg.get("q_set")? / 1000.0).clamp(-q_max, q_max);
            inj.add(net.bus_idx(&b.bus).expect("checked"), p, q);
            (st.bss_p_kw, st.bss_q_kvar, st.bss_e_kwh) = (p, q, model.e_kwh);
            self.bss_p_kw = p;
        }
        if let Some(ev) = &s.ev {
            st.ev_connected = self.ev_connected(t);
            if st.ev_connected {
                let i = self.stores[&ev.asset].get("i_set")?.round().clamp(ev.i_min_a, ev.i_max_a);
                st.ev_i_a = i;
                st.ev_p_kw = 3.0 * ev.v_cs * i / 1000.0;
                inj.add(net.bus_idx(&ev.bus).expect("checked"), st.ev_p_kw, 0.0);
            }
        }

        let n = net.n_buses();
        let opts = PfOptions {
            slack_vm: s.slack_vm,
            ..PfOptions::default()
        };
        let (vm0, va0) = match &self.last {
            Some(l) => (l.vm.clone(), l.va.clone()),
            None => (vec![s.slack_vm; n], vec![0.0; n]),
        };
        let (sol, converged) = match solve_pf_from(&net, &inj, &opts, &vm0, &va0) {
            Ok(sol) => (sol, true),
            Err(e) => match &self.last {
                Some(last) => {
                    log::warn!("t = {t} s: {e}; holding the previous grid state");
                    (last.clone(), false)
                }
                None => return Err(e.into()),
            },
        };

        self.publish(&net, &sol, &st, t, irr, temp)?;

        let row = TraceRow {
            cycle: self.cycle,
            t_s: t,
            converged,
            tap,
            vm: sol.vm.clone(),
            va: sol.va.clone(),
            p_from_kw: sol.s_from.iter().map(|s| s.re).collect(),
            q_from_kvar: sol.s_from.iter().map(|s| s.im).collect(),
            loading_kva: (0..net.n_branches()).map(|k| sol.loading_kva(k)).collect(),
            assets: st,
            commands: String::new(),
        };
        self.last = Some(sol);
        self.last_t = Some(t);
        self.cycle += 1;
        Ok(row)
    }

    fn publish(
        &self,
        net: &crate::net::Network,
        sol: &PfSolution,
        st: &AssetState,
        t: f64,
        irr: f64,
        temp: f64,
    ) -> Result<(), SimError> {
        let s = &self.scn.spec;
        let v_at = |bus: &str| {
            let i = net.bus_idx(bus).expect("checked");
            sol.vm[i] * phase_base_v(net.buses()[i].base_kv)
        };
        if let Some(o) = &s.oltc {
            let (_, to) = net.endpoints(net.branch_idx(&o.branch).expect("checked"));
            self.stores[&o.asset].set("v", v_at(&net.buses()[to].id))?;
        }
        if let Some(pv) = &s.pv {
            let r = &self.stores[&pv.asset];
            r.set("v", v_at(&pv.bus))?;
            r.set("p", st.pv_p_kw * 1000.0)?;
            r.set("q", st.pv_q_kvar * 1000.0)?;
        }
        if let (Some(b), Some(model)) = (&s.bss, &self.battery) {
            let r = &self.stores[&b.asset];
            let v = v_at(&b.bus);
            let sa = st.bss_p_kw.hypot(st.bss_q_kvar);
            r.set("soc", model.e_kwh * 1000.0)?;
            r.set("v", v)?;
            r.set("i", sa * 1000.0 / (3.0 * v))?;
            r.set("p", st.bss_p_kw * 1000.0)?;
            r.set("q", st.bss_q_kvar * 1000.0)?;
            r.set("s", sa * 1000.0)?;
            r.set("cos_phi", if sa > 0.0 { st.bss_p_kw.abs() / sa } else { 1.0 })?;
        }
        if let Some(ev) = &s.ev {
            let r = &self.stores[&ev.asset];
            r.set("p", st.ev_p_kw * 1000.0)?;
            let state = match (st.ev_connected, st.ev_p_kw > 0.0) {
                (false, _) => 1.0,
                (true, false) => 2.0,
                (true, true) => 3.0,
            };
            r.set("state", state)?;
        }
        if let Some(id) = s.rts {
            let r = &self.stores[&id];
            r.set("irradiance", irr)?;
            r.set("temperature", temp)?;
        }

        let specs: Vec<_> = s.meters.iter().flat_map(MeterConfig::specs).collect();
        let z = synthesize_measurements(net, sol, &specs, super::cycle_seed(s.seed, self.cycle), s.noise_scale, t)
            .map_err(|e| SimError::Config(e.to_string()))?;
        let s_base_w = net.s_base_kva() * 1000.0;
        let mut values = z.measurements.iter();
        for m in &s.meters {
            let r = &self.stores[&m.asset];
            let vph = phase_base_v(net.buses()[net.bus_idx(m.bus()).expect("checked")].base_kv);
            let (mut v, mut p, mut q) = (v_at(m.bus()), None, None);
            for quantity in &m.quantities {
                let x = values.next().expect("one value per spec").value;
                let raw = match quantity {
                    Quantity::V => {
                        v = x * vph;
                        v
                    }
                    Quantity::P => {
                        p = Some(x * s_base_w);
                        x * s_base_w
                    }
                    Quantity::Q => {
                        q = Some(x * s_base_w);
                        x * s_base_w
                    }
                };
                r.set(meter_register(*quantity), raw)?;
            }
            if let (Some(p), Some(q)) = (p, q) {
                let sa = p.hypot(q);
                r.set("s", sa)?;
                r.set("i", sa / (3.0 * v))?;
                r.set("cos_phi", if sa > 0.0 { p.abs() / sa } else { 1.0 })?;
            }
        }
        Ok(())
    }
}
