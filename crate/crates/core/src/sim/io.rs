//! CSV and JSON artifacts of a run.

use std::io::{BufRead, BufReader, Read, Write};

use super::metrics::violation_series;
use super::run::{AssetState, Mode, Trace, TraceRow};
use super::{LimitSchedule, SimError};
use crate::ctrl::CycleLog;

const ASSET_COLUMNS: [&str; 10] = [
    "pv_avail_kw",
    "pv_p_kw",
    "pv_q_kvar",
    "bss_p_kw",
    "bss_q_kvar",
    "bss_e_kwh",
    "ev_connected",
    "ev_i_a",
    "ev_p_kw",
    "load_p_kw",
];

fn csv_err(e: csv::Error) -> SimError {
    SimError::Config(format!("csv: {e}"))
}

fn asset_values(a: &AssetState) -> [String; 10] {
    [
        a.pv_avail_kw.to_string(),
        a.pv_p_kw.to_string(),
        a.pv_q_kvar.to_string(),
        a.bss_p_kw.to_string(),
        a.bss_q_kvar.to_string(),
        a.bss_e_kwh.to_string(),
        u8::from(a.ev_connected).to_string(),
        a.ev_i_a.to_string(),
        a.ev_p_kw.to_string(),
        a.load_p_kw.to_string(),
    ]
}

/// Writes one row per cycle. A leading `#` line records the mode and the
/// slack bus; floats are written in shortest round-trip form.
pub fn write_trace_csv(trace: &Trace, mut w: impl Write) -> Result<(), SimError> {
    writeln!(w, "# mode={} slack={}", trace.mode.label(), trace.slack)?;
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["cycle", "t_s", "converged", "tap"].map(String::from).to_vec();
    for prefix in ["vm", "va"] {
        header.extend(trace.buses.iter().map(|b| format!("{prefix}:{b}")));
    }
    for prefix in ["p_from", "q_from", "s"] {
        header.extend(trace.branches.iter().map(|b| format!("{prefix}:{b}")));
    }
    header.extend(ASSET_COLUMNS.map(String::from));
    header.push("commands".into());
    out.write_record(&header).map_err(csv_err)?;
    for r in &trace.rows {
        let mut rec = vec![
            r.cycle.to_string(),
            r.t_s.to_string(),
            u8::from(r.converged).to_string(),
            r.tap.map(|t| t.to_string()).unwrap_or_default(),
        ];
        for v in [&r.vm, &r.va, &r.p_from_kw, &r.q_from_kvar, &r.loading_kva] {
            rec.extend(v.iter().map(f64::to_string));
        }
        rec.extend(asset_values(&r.assets));
        rec.push(r.commands.clone());
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`].
pub fn read_trace_csv(r: impl Read) -> Result<Trace, SimError> {
    let mut r = BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let meta = first
        .strip_prefix("# ")
        .ok_or_else(|| SimError::Config("trace: missing `# mode=… slack=…` line".into()))?;
    let (mut mode, mut slack) = (None, None);
    for kv in meta.split_whitespace() {
        match kv.split_once('=') {
            Some(("mode", "reference")) => mode = Some(Mode::Reference),
            Some(("mode", "controlled")) => mode = Some(Mode::Controlled),
            Some(("slack", s)) => slack = Some(s.to_string()),
            _ => {}
        }
    }
    let (Some(mode), Some(slack)) = (mode, slack) else {
        return Err(SimError::Config(format!("trace: bad header line `{}`", first.trim())));
    };
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let cols = |prefix: &str| -> Vec<(usize, String)> {
        header
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(prefix).map(|id| (i, id.to_string())))
            .collect()
    };
    let (vm, va) = (cols("vm:"), cols("va:"));
    let (pf, qf, s) = (cols("p_from:"), cols("q_from:"), cols("s:"));
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SimError::Config(format!("trace: missing column `{name}`")))
    };
    let fixed = [col("cycle")?, col("t_s")?, col("converged")?, col("tap")?];
    let assets: Vec<usize> = ASSET_COLUMNS.iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let commands = col("commands")?;

    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64, SimError> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| SimError::Config(format!("trace row {}: column `{}`: {e}", line + 1, header[i])))
        };
        let many = |c: &[(usize, String)]| c.iter().map(|(i, _)| num(*i)).collect::<Result<Vec<f64>, _>>();
        let a: Vec<f64> = assets.iter().map(|&i| num(i)).collect::<Result<_, _>>()?;
        rows.push(TraceRow {
            cycle: num(fixed[0])? as usize,
            t_s: num(fixed[1])?,
            converged: num(fixed[2])? != 0.0,
            tap: if rec[fixed[3]].is_empty() { None } else { Some(num(fixed[3])? as i32) },
            vm: many(&vm)?,
            va: many(&va)?,
            p_from_kw: many(&pf)?,
            q_from_kvar: many(&qf)?,
            loading_kva: many(&s)?,
            assets: AssetState {
                pv_avail_kw: a[0],
                pv_p_kw: a[1],
                pv_q_kvar: a[2],
                bss_p_kw: a[3],
                bss_q_kvar: a[4],
                bss_e_kwh: a[5],
                ev_connected: a[6] != 0.0,
                ev_i_a: a[7],
                ev_p_kw: a[8],
                load_p_kw: a[9],
            },
            commands: rec[commands].to_string(),
        });
    }
    Ok(Trace {
        mode,
        buses: vm.into_iter().map(|c| c.1).collect(),
        slack,
        branches: s.into_iter().map(|c| c.1).collect(),
        rows,
    })
}

/// Side-by-side voltages of monitored nodes and loadings of limited
/// branches, with the active limit, for plotting.
pub fn write_comparison_csv(controlled: &Trace, reference: &Trace, schedule: &LimitSchedule, w: impl Write) -> Result<(), SimError> {
    if controlled.times() != reference.times() {
        return Err(SimError::Mismatch("timestamps differ".into()));
    }
    let flags = violation_series(controlled, schedule);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t_s".to_string(), "v_min".into(), "v_max".into()];
    for b in &flags.buses {
        header.push(format!("vm_ref:{b}"));
        header.push(format!("vm_ctrl:{b}"));
    }
    for b in &flags.branches {
        header.push(format!("s_ref:{b}"));
        header.push(format!("s_ctrl:{b}"));
        header.push(format!("s_max:{b}"));
    }
    out.write_record(&header).map_err(csv_err)?;
    let bus_idx: Vec<usize> = flags
        .buses
        .iter()
        .map(|b| controlled.buses.iter().position(|x| x == b).expect("from trace"))
        .collect();
    let br_idx: Vec<usize> = flags
        .branches
        .iter()
        .map(|b| controlled.branches.iter().position(|x| x == b).expect("from trace"))
        .collect();
    for (c, r) in controlled.rows.iter().zip(&reference.rows) {
        let mut rec = vec![c.t_s.to_string(), schedule.band.v_min.to_string(), schedule.band.v_max.to_string()];
        for &i in &bus_idx {
            rec.push(r.vm[i].to_string());
            rec.push(c.vm[i].to_string());
        }
        for (j, &k) in br_idx.iter().enumerate() {
            rec.push(r.loading_kva[k].to_string());
            rec.push(c.loading_kva[k].to_string());
            rec.push(
                schedule
                    .limit_at(&flags.branches[j], c.t_s)
                    .map(|x| x.to_string())
                    .unwrap_or_default(),
            );
        }
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// One JSON object per line. Wall-clock stamps are cleared when
/// `strip_time` is set so that repeated runs give identical files.
pub fn write_cycle_logs(logs: &[CycleLog], strip_time: bool, mut w: impl Write) -> Result<(), SimError> {
    for log in logs {
        let log = if strip_time { log.without_timestamps() } else { log.clone() };
        serde_json::to_writer(&mut w, &log).map_err(|e| SimError::Config(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}
