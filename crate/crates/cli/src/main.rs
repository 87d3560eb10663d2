use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use gridcure::bus::{register_table_markdown, tcp};
use gridcure::ctrl::CycleOutcome;
use gridcure::sim::{self, Mode, RunOutput, Scenario, Severity, SimError, TransportKind, World};

/// Curative congestion management experiments on a simulated LV feeder.
#[derive(Parser)]
#[command(name = "gridcure", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a scenario and write traces, logs and metrics.
    Run(RunArgs),
    /// Check a scenario file for gaps, coverage and observability.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Serve the scenario's assets over TCP until interrupted.
    ServeAssets(ServeArgs),
    /// Recompute metrics from stored traces.
    Metrics {
        /// Scenario providing the limit schedule and voltage band.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        controlled: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value = "metrics.json")]
        out: PathBuf,
    },
    /// Print the register map as a markdown table.
    Registers {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Bus,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Only the uncontrolled run.
    #[arg(long, conflicts_with_all = ["controlled", "both"])]
    reference: bool,
    /// Only the controlled run.
    #[arg(long, conflicts_with = "both")]
    controlled: bool,
    /// Both runs plus metrics (default).
    #[arg(long)]
    both: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "inproc")]
    transport: TransportArg,
    #[arg(long)]
    se_tol: Option<f64>,
    #[arg(long)]
    opf_tol_eq: Option<f64>,
    #[arg(long)]
    opf_tol_ineq: Option<f64>,
    #[arg(long)]
    opf_max_iter: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// `ID=HOST:PORT`; overrides the scenario's endpoint for that asset.
    #[arg(long = "endpoint", value_parser = parse_endpoint)]
    endpoints: Vec<(u8, String)>,
    /// Simulated time of the published state.
    #[arg(long, default_value_t = 0.0)]
    at: f64,
    /// Stop after this many seconds instead of waiting for a signal.
    #[arg(long)]
    duration_s: Option<f64>,
}

fn parse_endpoint(s: &str) -> Result<(u8, String), String> {
    let (id, addr) = s.split_once('=').ok_or("expected ID=HOST:PORT")?;
    let id = id.parse().map_err(|e| format!("asset id `{id}`: {e}"))?;
    Ok((id, addr.to_string()))
}

enum Failure {
    Config(String),
    Solver(String),
    Protocol(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Protocol(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::Protocol(m) | Failure::Other(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let m = e.to_string();
        match e {
            SimError::Config(_) | SimError::Net(_) => Failure::Config(m),
            SimError::Pf(_) => Failure::Solver(m),
            SimError::Bus(_) => Failure::Protocol(m),
            SimError::Mismatch(_) | SimError::Io(_) => Failure::Other(m),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Other(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    if !path.exists() {
        return Err(Failure::Config(format!("scenario `{}` not found", path.display())));
    }
    Ok(Scenario::load(path)?)
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let mut scn = load(&a.scenario)?;
    if let Some(seed) = a.seed {
        scn.spec.seed = seed;
    }
    let c = &mut scn.spec.controller;
    if let Some(t) = a.se_tol {
        c.se.tol = t;
    }
    if let Some(t) = a.opf_tol_eq {
        c.opf.tol_eq = t;
    }
    if let Some(t) = a.opf_tol_ineq {
        c.opf.tol_ineq = t;
    }
    if let Some(n) = a.opf_max_iter {
        c.opf.max_iter = n;
    }
    let transport = match a.transport {
        TransportArg::Inproc => TransportKind::InProcess,
        TransportArg::Bus => TransportKind::Tcp,
    };
    let modes: Vec<Mode> = match (a.reference, a.controlled, a.both) {
        (true, _, _) => vec![Mode::Reference],
        (_, true, _) => vec![Mode::Controlled],
        _ => vec![Mode::Reference, Mode::Controlled],
    };
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    eprintln!(
        "running `{}`: {} cycles, {}",
        scn.spec.name,
        scn.instants().len(),
        modes.iter().map(|m| m.label()).collect::<Vec<_>>().join(" + ")
    );

    let started = Instant::now();
    let outputs: Vec<(Mode, Result<RunOutput, SimError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&m| {
                let scn = &scn;
                (m, s.spawn(move || sim::run(scn, m, transport)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(m, h)| (m, h.join().expect("run thread panicked")))
            .collect()
    });
    let mut traces = Vec::new();
    for (mode, out) in outputs {
        let out = out?;
        let path = a.out.join(format!("trace_{}.csv", mode.label()));
        sim::write_trace_csv(&out.trace, create(&path)?)?;
        eprintln!("wrote {}", path.display());
        if mode == Mode::Controlled {
            let degraded = out
                .logs
                .iter()
                .filter(|l| matches!(l.outcome, CycleOutcome::Degraded(_)))
                .count();
            if degraded > 0 {
                eprintln!("warning: {degraded} degraded cycles, see the cycle log");
            }
            let path = a.out.join("cycles_controlled.jsonl");
            sim::write_cycle_logs(&out.logs, false, create(&path)?)?;
            eprintln!("wrote {}", path.display());
        }
        let held = out.trace.rows.iter().filter(|r| !r.converged).count();
        if held > 0 {
            eprintln!("warning: power flow failed in {held} {} cycles; previous state held", mode.label());
        }
        traces.push(out.trace);
    }
    let schedule = &scn.spec.schedule;
    if let [reference, controlled] = &traces[..] {
        let report = sim::compute_metrics(controlled, reference, schedule)?;
        let path = a.out.join("metrics.json");
        let mut w = create(&path)?;
        writeln!(w, "{}", report.to_json()).map_err(io_err(&path))?;
        eprintln!("wrote {}", path.display());
        let path = a.out.join("comparison.csv");
        sim::write_comparison_csv(controlled, reference, schedule, create(&path)?)?;
        eprintln!("wrote {}", path.display());
        let t = report.totals();
        eprintln!(
            "N_v {} -> {}, A_v {:.4} -> {:.4} p.u.; N_s {} -> {}, A_s {:.2} -> {:.2} kVA",
            t.n_v_reference,
            t.n_v_controlled,
            t.a_v_reference,
            t.a_v_controlled,
            t.n_s_reference,
            t.n_s_controlled,
            t.a_s_reference,
            t.a_s_controlled
        );
    } else {
        let trace = &traces[0];
        let (nodes, branches) = sim::score_run(trace, schedule);
        let json = serde_json::json!({ "nodes": nodes, "branches": branches });
        let path = a.out.join(format!("score_{}.json", trace.mode.label()));
        let mut w = create(&path)?;
        writeln!(w, "{}", serde_json::to_string_pretty(&json).expect("scores serialize")).map_err(io_err(&path))?;
        eprintln!("wrote {}", path.display());
    }
    eprintln!("done in {:.2} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let scn = load(path)?;
    let issues = scn.validate();
    let specs: usize = scn.spec.meters.iter().map(|m| m.specs().len()).sum();
    println!(
        "{}: {} buses, {} branches, {} cycles, {specs} measurements for {} states",
        scn.spec.name,
        scn.net.n_buses(),
        scn.net.n_branches(),
        scn.instants().len(),
        2 * scn.net.n_buses() - 1
    );
    if issues.is_empty() {
        println!("clean");
    }
    for i in issues {
        let tag = match i.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        println!("{tag}: {}", i.message);
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<(), Failure> {
    let scn = load(&a.scenario)?;
    let mut world = World::new(&scn)?;
    world.step(a.at)?;
    world.release()?;
    let mut endpoints = scn.spec.endpoints.clone();
    endpoints.extend(a.endpoints.iter().cloned());
    let mut servers = Vec::new();
    for (id, bank) in world.banks() {
        let addr = endpoints
            .get(&id)
            .ok_or_else(|| Failure::Config(format!("no endpoint for asset {id}; add `endpoints.{id}` or --endpoint {id}=HOST:PORT")))?;
        let h = tcp::serve(Arc::new(bank), addr.as_str())
            .map_err(|e| Failure::Protocol(format!("asset {id}: cannot bind {addr}: {e}")))?;
        eprintln!("asset {id} ({}) on {}", world.kinds()[&id].label(), h.local_addr());
        servers.push((id, h));
    }
    eprintln!("serving; interrupt to stop");

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed))
            .map_err(|e| Failure::Other(format!("signal handler: {e}")))?;
    }
    let deadline = a.duration_s.map(|s| Instant::now() + Duration::from_secs_f64(s));
    while !stop.load(Ordering::Relaxed) && deadline.is_none_or(|d| Instant::now() < d) {
        std::thread::sleep(Duration::from_millis(50));
    }
    for (id, h) in servers {
        h.stop();
        for w in world.store(id).expect("served").write_log() {
            eprintln!("asset {id}: write #{} addr {} by {} = {:?}", w.seq, w.addr, w.origin, w.words);
        }
    }
    eprintln!("stopped");
    Ok(())
}

fn cmd_metrics(scenario: &Path, controlled: &Path, reference: &Path, out: &Path) -> Result<(), Failure> {
    let scn = load(scenario)?;
    let read = |p: &Path| -> Result<sim::Trace, Failure> {
        let f = File::open(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
        sim::read_trace_csv(f).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))
    };
    let report = sim::compute_metrics(&read(controlled)?, &read(reference)?, &scn.spec.schedule)?;
    let mut w = create(out)?;
    writeln!(w, "{}", report.to_json()).map_err(io_err(out))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_registers(out: Option<&Path>) -> Result<(), Failure> {
    let md = register_table_markdown();
    match out {
        Some(p) => fs::write(p, md).map_err(io_err(p)),
        None => {
            print!("{md}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDCURE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Validate { scenario } => cmd_validate(&scenario),
        Cmd::ServeAssets(a) => cmd_serve(a),
        Cmd::Metrics {
            scenario,
            controlled,
            reference,
            out,
        } => cmd_metrics(&scenario, &controlled, &reference, &out),
        Cmd::Registers { out } => cmd_registers(out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
