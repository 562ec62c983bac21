//! `jackflow`: analyses of Jackson networks from a JSON description.
//!
//! Exit codes: 0 on success, 1 when a computation or invariant check fails,
//! 2 on malformed input or invalid usage.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use jackflow_core::checks::{run_checks, Fault, Level};
use jackflow_core::export::{
    fluid_rows, fmt_sig, optimal_path_rows, round_sig, write_sim_json, write_sim_paths_csv, write_trajectory_csv,
    TrajectoryRow,
};
use jackflow_core::fluid::{path_cost, reverse_to_optimal, solve_dual_fluid};
use jackflow_core::momenta::{MomentaTable, MATERIALIZE_MAX_K};
use jackflow_core::simulate::{lln_check, simulate_ctmc, SimConfig};
use jackflow_core::{build_dual, Matrix, Network, ValidatedNetwork};

#[derive(Parser)]
#[command(name = "jackflow", version, about = "Most probable overflow paths of Jackson networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Throughputs, loads, C, theta* and the dual network.
    Analyze {
        network: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Node momenta theta^(m) and theta*.
    Momenta {
        network: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every face with its loads, slacks and essential flag.
    Faces {
        network: PathBuf,
        /// Allow enumerating up to this many faces when K > 16.
        #[arg(long)]
        faces_limit: Option<u128>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal path to a target and the dual fluid path it reverses.
    Trajectory {
        network: PathBuf,
        #[arg(long, value_parser = parse_target)]
        target: Target,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Event-driven simulation; with `--target`, runs the dual network from
    /// `n r` and measures the distance to the dual fluid path.
    Simulate {
        network: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[arg(long, default_value_t = 4)]
        replicas: usize,
        /// Model time without `--target`; scaled time otherwise (default: the
        /// fluid path's duration).
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, value_parser = parse_target)]
        target: Option<Target>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Runs the invariant suite against the network.
    Check {
        network: PathBuf,
        #[arg(long, value_enum, default_value_t = CheckLevel::Fast)]
        level: CheckLevel,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckLevel {
    Fast,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    CorruptC,
}

#[derive(Clone, Debug)]
struct Target(Vec<f64>);

fn parse_target(s: &str) -> std::result::Result<Target, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(format!("target components must be finite and nonnegative, got {bad}"));
    }
    Ok(Target(v))
}

/// Failure carrying the process exit code.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(Exit(code)) = e.downcast_ref::<Exit>() {
                return ExitCode::from(*code);
            }
            eprintln!("error: {e:#}");
            let input = e.chain().any(|c| {
                c.downcast_ref::<jackflow_core::Error>().is_some_and(|e| e.is_input_error())
                    || c.downcast_ref::<UsageError>().is_some()
            });
            ExitCode::from(if input { 2 } else { 1 })
        }
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load(path: &Path) -> Result<ValidatedNetwork> {
    let net = Network::from_json_file(path)?;
    net.validate().with_context(|| format!("validating {}", path.display()))
}

fn check_dim(target: &[f64], k: usize) -> Result<()> {
    if target.len() != k {
        return Err(UsageError(format!("target has {} components for a network with K = {k}", target.len())).into());
    }
    Ok(())
}

fn vec_json(v: &[f64]) -> Value {
    json!(v.iter().map(|&x| round_sig(x)).collect::<Vec<_>>())
}

fn matrix_json(m: &Matrix) -> Value {
    json!(m.to_rows().iter().map(|r| vec_json(r)).collect::<Vec<_>>())
}

fn fmt_vec(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|&x| fmt_sig(x)).collect();
    format!("[{}]", cells.join(", "))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(path: &Path, doc: &Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { network, out } => analyze(&network, out.as_deref()),
        Command::Momenta { network, out } => momenta(&network, out.as_deref()),
        Command::Faces { network, faces_limit, out } => faces(&network, faces_limit, out.as_deref()),
        Command::Trajectory { network, target, out, format } => trajectory(&network, &target.0, out.as_deref(), format),
        Command::Simulate { network, seed, n, replicas, horizon, target, out, format } => {
            simulate(&network, seed, n, replicas, horizon, target.map(|t| t.0), out.as_deref(), format)
        }
        Command::Check { network, level, seed, out, inject_fault } => {
            let level = match level {
                CheckLevel::Fast => Level::Fast,
                CheckLevel::Full => Level::Full,
            };
            let fault = inject_fault.map(|FaultArg::CorruptC| Fault::CorruptC);
            check(&network, level, seed, fault, out.as_deref())
        }
    }
}

fn analyze(path: &Path, out: Option<&Path>) -> Result<()> {
    let net = load(path)?;
    let traffic = net.solve_traffic()?;
    let dual = build_dual(&net, &traffic);
    let theta = traffic.theta_star();
    let h0 = jackflow_core::hamiltonian::h0(&theta, &net)?;
    println!("K         {}", net.k());
    println!("nu        {}", fmt_vec(&traffic.nu));
    println!("rho       {}", fmt_vec(&traffic.rho));
    println!("theta*    {}", fmt_vec(&theta));
    println!("H0(theta*) {}", fmt_sig(h0));
    println!("C");
    for row in traffic.c.to_rows() {
        println!("  {}", fmt_vec(&row));
    }
    println!("dual lambda {}", fmt_vec(dual.lambda_bar()));
    println!("dual P");
    for row in dual.p_bar().to_rows() {
        println!("  {}", fmt_vec(&row));
    }
    if let Some(out) = out {
        write_json(
            out,
            &json!({
                "k": net.k(),
                "nu": vec_json(&traffic.nu),
                "rho": vec_json(&traffic.rho),
                "C": matrix_json(&traffic.c),
                "theta_star": vec_json(&theta),
                "h0_residual": round_sig(h0),
                "traffic_residual": round_sig(traffic.residual(&net)),
                "dual": {
                    "lambda": vec_json(dual.lambda_bar()),
                    "mu": vec_json(dual.mu()),
                    "P": matrix_json(dual.p_bar()),
                },
            }),
        )?;
    }
    Ok(())
}

fn momenta(path: &Path, out: Option<&Path>) -> Result<()> {
    let net = load(path)?;
    let traffic = net.solve_traffic()?;
    let table = MomentaTable::build(&net, &traffic)?;
    println!("theta*  {}", fmt_vec(&table.theta_star));
    for n in &table.node_momenta {
        println!("theta^({}) {}", n.m + 1, fmt_vec(&n.theta));
    }
    if let Some(out) = out {
        let nodes: Vec<Value> = table
            .node_momenta
            .iter()
            .map(|n| json!({ "node": n.m + 1, "theta": vec_json(&n.theta), "a": vec_json(&n.a_row) }))
            .collect();
        write_json(out, &json!({ "theta_star": vec_json(&table.theta_star), "nodes": nodes }))?;
    }
    Ok(())
}

fn faces(path: &Path, limit: Option<u128>, out: Option<&Path>) -> Result<()> {
    let net = load(path)?;
    let traffic = net.solve_traffic()?;
    let table = MomentaTable::build(&net, &traffic)?;
    let limit = limit.unwrap_or(1u128 << MATERIALIZE_MAX_K);
    let all = table.all_faces(limit)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "face,essential,marginal,rho_tilde,phi")?;
    let mut docs = Vec::with_capacity(all.len());
    for f in &all {
        writeln!(
            stdout,
            "{},{},{},\"{}\",\"{}\"",
            f.face,
            f.essential,
            f.marginal,
            fmt_vec(&f.rho_tilde),
            fmt_vec(&f.phi)
        )?;
        if out.is_some() {
            docs.push(json!({
                "face": f.face.to_vec().iter().map(|i| i + 1).collect::<Vec<_>>(),
                "label": f.face.to_string(),
                "essential": f.essential,
                "marginal": f.marginal,
                "rho_tilde": vec_json(&f.rho_tilde),
                "theta_tilde": vec_json(&f.theta_tilde),
                "phi": vec_json(&f.phi),
                "alpha": vec_json(&f.alpha),
            }));
        }
    }
    if let Some(out) = out {
        write_json(out, &json!(docs))?;
    }
    Ok(())
}

/// `out.csv` becomes `out.dual.csv`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn trajectory(path: &Path, target: &[f64], out: Option<&Path>, format: Format) -> Result<()> {
    let net = load(path)?;
    check_dim(target, net.k())?;
    let traffic = net.solve_traffic()?;
    let table = MomentaTable::build(&net, &traffic)?;
    let fluid = solve_dual_fluid(target, &table)?;
    let opt = reverse_to_optimal(&fluid, &table)?;
    let integral = path_cost(&opt, &net)?;
    let residual = (integral - opt.cost).abs();
    println!("cost      {}", fmt_sig(opt.cost));
    println!("residual  {}", fmt_sig(residual));
    println!("time      {}", fmt_sig(opt.total_time));
    println!("segments  {}", opt.segments.len());
    if residual > 1e-6 * (1.0 + opt.cost.abs()) {
        bail!("path cost {} disagrees with theta*.r = {}", fmt_sig(integral), fmt_sig(opt.cost));
    }
    let opt_rows = optimal_path_rows(&opt);
    let dual_rows = fluid_rows(&fluid, &table)?;
    match (out, format) {
        (None, _) => {
            let mut stdout = io::stdout().lock();
            write_trajectory_csv(&mut stdout, net.k(), &opt_rows)?;
        }
        (Some(out), Format::Csv) => {
            write_rows_csv(out, net.k(), &opt_rows)?;
            write_rows_csv(&sibling(out, "dual"), net.k(), &dual_rows)?;
        }
        (Some(out), Format::Json) => write_json(
            out,
            &json!({
                "target": vec_json(target),
                "cost": round_sig(opt.cost),
                "cost_residual": round_sig(residual),
                "total_time": round_sig(opt.total_time),
                "optimal_path": serde_json::to_value(&opt_rows)?,
                "dual_fluid": serde_json::to_value(&dual_rows)?,
            }),
        )?,
    }
    Ok(())
}

fn write_rows_csv(path: &Path, k: usize, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = create(path)?;
    write_trajectory_csv(&mut w, k, rows)?;
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    path: &Path,
    seed: u64,
    n: u64,
    replicas: usize,
    horizon: Option<f64>,
    target: Option<Vec<f64>>,
    out: Option<&Path>,
    format: Format,
) -> Result<()> {
    let net = load(path)?;
    let k = net.k();
    if n == 0 || replicas == 0 {
        return Err(UsageError("--n and --replicas must be positive".into()).into());
    }
    if let Some(h) = horizon {
        if !(h.is_finite() && h >= 0.0) {
            return Err(UsageError(format!("--horizon must be finite and nonnegative, got {h}")).into());
        }
    }
    let res = match target {
        Some(r) => {
            check_dim(&r, k)?;
            let traffic = net.solve_traffic()?;
            let table = MomentaTable::build(&net, &traffic)?;
            let dual = build_dual(&net, &traffic);
            let reference = solve_dual_fluid(&r, &table)?;
            let mut cfg = SimConfig::new(seed, horizon.unwrap_or(reference.t_star), vec![0; k]);
            cfg.n = n;
            cfg.replicas = replicas;
            cfg.path_step = Some(reference.t_star.max(1e-3) / 200.0);
            let res = lln_check(&dual, &r, &cfg, &reference)?;
            let d = res.sup_distances();
            println!("sup distances {}", fmt_vec(&d));
            res
        }
        None => {
            let mut cfg = SimConfig::new(seed, horizon.unwrap_or(1000.0), vec![0; k]);
            cfg.n = n;
            cfg.replicas = replicas;
            cfg.path_step = Some(cfg.horizon / n as f64 / 200.0);
            let res = simulate_ctmc(&net, &cfg)?;
            println!("throughputs {}", fmt_vec(&res.throughputs()));
            res
        }
    };
    if let Some(out) = out {
        let mut w = create(out)?;
        match format {
            Format::Json => write_sim_json(&mut w, &res)?,
            Format::Csv => write_sim_paths_csv(&mut w, &res)?,
        }
        w.flush()?;
    }
    Ok(())
}

fn check(path: &Path, level: Level, seed: u64, fault: Option<Fault>, out: Option<&Path>) -> Result<()> {
    let net = load(path)?;
    let report = run_checks(&net, level, fault, seed)?;
    let doc = json!({
        "passed": report.passed,
        "checks": report.checks.iter().map(|c| json!({
            "name": c.name,
            "passed": c.passed,
            "value": if c.value.is_finite() { json!(round_sig(c.value)) } else { Value::Null },
            "tolerance": round_sig(c.tolerance),
            "detail": c.detail,
        })).collect::<Vec<_>>(),
    });
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &doc)?;
    writeln!(stdout)?;
    drop(stdout);
    if let Some(out) = out {
        write_json(out, &doc)?;
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} (value {}, tolerance {}) {}", c.name, fmt_sig(c.value), fmt_sig(c.tolerance), c.detail);
    }
    if !report.passed {
        return Err(Exit(1).into());
    }
    Ok(())
}
