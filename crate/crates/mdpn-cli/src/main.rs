//! Command-line front end: model validation, average-reward solving,
//! capacity queries, simulation experiments, fluid integration, and the
//! canned reproduction experiments.
//!
//! Exit codes: 0 success / PASS, 1 validation failure or FAIL, 2 usage.
//! Set `MDPN_LOG=info` (or `debug`) for progress logging.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mdpn::builders::{
    build_decoherence_net, build_rotation3, p0_policy, DecoherenceNetParams, Rotation3Params,
};
use mdpn::capacity::{capacity_margin, classify};
use mdpn::experiments;
use mdpn::fluid::{check_drift_inequality, default_dt, empty_time_bound, integrate_fluid};
use mdpn::markov::AgnosticPolicy;
use mdpn::model::{load_model, save_model, validate, MdpnModel};
use mdpn::sim::{
    lyapunov_drift, replications, timescale_diagnostic, ControllerSpec, ReplicationConfig,
    SlopeSummary, Trace, WarpConfig,
};
use mdpn::solver::{relative_value_iteration, QueueWeights, SolverConfig};

#[derive(Parser)]
#[command(
    name = "mdpn",
    version,
    about = "Queueing networks with decision-dependent service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelSource {
    /// Path to a model document.
    #[arg(long, conflicts_with = "builder")]
    model: Option<PathBuf>,
    /// Built-in model family: rotation3 | decoherence.
    #[arg(long)]
    builder: Option<String>,
    /// Builder parameter, repeatable (e.g. --param lambda=0.4,0.4,0.4).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model document against every invariant.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Solve the average-reward control problem for fixed queue weights.
    Solve {
        #[command(flatten)]
        source: ModelSource,
        /// Weight per request class, comma separated.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Directory for the solution sidecar document.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide capacity-region membership of an arrival-rate vector.
    Capacity {
        #[command(flatten)]
        source: ModelSource,
        /// Per-slot arrival rate per class, comma separated.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        /// Sweep two classes over a grid, e.g. --grid 0,2; margins go to CSV.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 20)]
        grid_steps: usize,
        /// Upper end of both grid axes.
        #[arg(long, default_value_t = 0.5)]
        grid_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate under a controller and report stability diagnostics.
    Simulate {
        #[command(flatten)]
        source: ModelSource,
        /// maxweight | warp | p0 | uniform | fixed (with --policy).
        #[arg(long)]
        controller: String,
        /// Policy document for --controller fixed: a JSON array of
        /// per-state action probability rows.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        horizon: u64,
        /// Base seed; replications use seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of independent replications.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Initial queue vector (defaults to empty queues).
        #[arg(long, value_delimiter = ',')]
        q0: Option<Vec<u64>>,
        /// Initial server state id.
        #[arg(long, default_value_t = 0)]
        z0: usize,
        #[arg(long, default_value_t = 0.05)]
        burn_in: f64,
        #[arg(long, default_value_t = 50.0)]
        compact_threshold: f64,
        /// Directory for trace CSVs, metadata, drift series, and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the fluid model and check the emptying-time bound.
    Fluid {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        q0: Vec<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a canned experiment and print PASS or FAIL.
    Reproduce {
        /// One of: rotation3-maxweight-unstable, rotation3-warp-stable,
        /// appendixC-conditions, appendixC-p0-vs-maxweight,
        /// timescale-separation.
        name: String,
    },
}

/// Twelve significant digits, scientific notation; CSV output stays
/// unrounded so reports diff cleanly while data stays exact.
fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("usage error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes, like any Unix filter.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::new().filter("MDPN_LOG")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { model } => cmd_validate(&model),
        Command::Solve {
            source,
            weights,
            tol,
            out,
        } => cmd_solve(&source, &weights, tol, out.as_deref()),
        Command::Capacity {
            source,
            lambda,
            grid,
            grid_steps,
            grid_max,
            out,
        } => cmd_capacity(
            &source,
            &lambda,
            grid.as_deref(),
            grid_steps,
            grid_max,
            out.as_deref(),
        ),
        Command::Simulate {
            source,
            controller,
            policy,
            horizon,
            seed,
            seeds,
            q0,
            z0,
            burn_in,
            compact_threshold,
            out,
        } => cmd_simulate(
            &source,
            &controller,
            policy.as_deref(),
            horizon,
            seed,
            seeds,
            q0,
            z0,
            burn_in,
            compact_threshold,
            out.as_deref(),
        ),
        Command::Fluid {
            source,
            lambda,
            q0,
            dt,
            tmax,
            out,
        } => cmd_fluid(&source, &lambda, &q0, dt, tmax, out.as_deref()),
        Command::Reproduce { name } => cmd_reproduce(&name),
    }
}

// ---------------------------------------------------------------------------
// Model sourcing

fn parse_param_list(params: &[String]) -> Result<Vec<(String, String)>, String> {
    params
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("parameter {p:?} is not KEY=VALUE"))
        })
        .collect()
}

fn parse_f64_list(v: &str, expected: usize, key: &str) -> Result<Vec<f64>, String> {
    let vals: Result<Vec<f64>, _> = v.split(',').map(str::parse).collect();
    let vals = vals.map_err(|e| format!("{key}: {e}"))?;
    if vals.len() != expected {
        return Err(format!("{key}: expected {expected} comma-separated values"));
    }
    Ok(vals)
}

fn resolve_model(source: &ModelSource) -> Result<MdpnModel, String> {
    if let Some(path) = &source.model {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        return load_model(&text).map_err(|e| e.to_string());
    }
    let Some(builder) = &source.builder else {
        return Err("either --model or --builder is required".into());
    };
    let params = parse_param_list(&source.params)?;
    match builder.as_str() {
        "rotation3" => {
            let mut p = Rotation3Params::stochastic();
            for (k, v) in params {
                match k.as_str() {
                    "lambda" => {
                        let vals = parse_f64_list(&v, 3, "lambda")?;
                        p.lambda_cycle = [vals[0], vals[1], vals[2]];
                    }
                    "d" => {
                        let vals = parse_f64_list(&v, 2, "d")?;
                        p.decoherence = [vals[0], vals[1]];
                    }
                    "gamma" => p.r3_success = v.parse().map_err(|e| format!("gamma: {e}"))?,
                    other => return Err(format!("unknown rotation3 parameter {other:?}")),
                }
            }
            build_rotation3(&p).map_err(|e| e.to_string())
        }
        "decoherence" => {
            let mut p = DecoherenceNetParams::paper(0.01);
            for (k, v) in params {
                match k.as_str() {
                    "h" => {
                        let h: f64 = v.parse().map_err(|e| format!("h: {e}"))?;
                        p = DecoherenceNetParams { h, ..p };
                    }
                    "lambda" => {
                        let vals = parse_f64_list(&v, 3, "lambda")?;
                        p.lambda = [vals[0], vals[1], vals[2]];
                    }
                    "mu" => {
                        let vals = parse_f64_list(&v, 3, "mu")?;
                        p.mu = [vals[0], vals[1], vals[2]];
                    }
                    other => return Err(format!("unknown decoherence parameter {other:?}")),
                }
            }
            build_decoherence_net(&p).map_err(|e| e.to_string())
        }
        other => Err(format!(
            "unknown builder {other:?} (expected rotation3 or decoherence)"
        )),
    }
}

/// Creates the output directory and drops the canonical model document
/// into it, so every result directory is self-contained.
fn prepare_out_dir(out: &Path, model: &MdpnModel) -> Result<(), String> {
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    write_out(&out.join("model.json"), &save_model(model))
}

fn write_out(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_validate(path: &Path) -> ExitCode {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    match load_model(&text) {
        Ok(model) => {
            let report = validate(&model);
            println!(
                "valid: {} states, {} actions, {} classes, {} kernel rows",
                model.num_states(),
                model.num_actions(),
                model.num_classes(),
                model.kernel.len()
            );
            for w in &report.warnings {
                println!("warning: {w}");
            }
            println!("model hash: {}", model.hash());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("invalid model:\n{e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_solve(source: &ModelSource, weights: &[f64], tol: f64, out: Option<&Path>) -> ExitCode {
    let model = match resolve_model(source) {
        Ok(m) => m,
        Err(e) => return usage_error(e),
    };
    if weights.len() != model.num_classes() {
        return usage_error(format!(
            "--weights needs {} entries for this model",
            model.num_classes()
        ));
    }
    let cfg = SolverConfig {
        tol,
        ..Default::default()
    };
    let gb = match relative_value_iteration(&model, &QueueWeights(weights.to_vec()), &cfg) {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    println!("gain: {}", sig12(gb.gain));
    println!(
        "residual: {} ({} iterations)",
        sig12(gb.residual),
        gb.iterations
    );
    println!("state  action  bias");
    for (z, (&a, &b)) in gb.policy.iter().zip(gb.bias.iter()).enumerate() {
        println!("{z:>5}  {:<14} {}", model.actions[a], sig12(b));
    }
    if let Some(dir) = out {
        if let Err(e) = prepare_out_dir(dir, &model) {
            return fail(e);
        }
        let doc = serde_json::json!({
            "model_hash": model.hash(),
            "weights": weights,
            "gain": gb.gain,
            "bias": gb.bias,
            "policy": gb.policy,
            "residual": gb.residual,
            "iterations": gb.iterations,
        });
        let path = dir.join("solution.json");
        if let Err(e) = write_out(&path, &format!("{:#}\n", doc)) {
            return fail(e);
        }
        info!("wrote {}", path.display());
    }
    ExitCode::SUCCESS
}

fn cmd_capacity(
    source: &ModelSource,
    lambda: &[f64],
    grid: Option<&str>,
    grid_steps: usize,
    grid_max: f64,
    out: Option<&Path>,
) -> ExitCode {
    let model = match resolve_model(source) {
        Ok(m) => m,
        Err(e) => return usage_error(e),
    };
    if lambda.len() != model.num_classes() {
        return usage_error(format!("--lambda needs {} entries", model.num_classes()));
    }
    let result = match capacity_margin(&model, lambda) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    println!("margin: {}", sig12(result.margin));
    println!("classification: {}", result.classification);
    println!("certified service rates:");
    for (cls, (&rate, label)) in result
        .rates
        .iter()
        .zip(model.requests.labels.iter())
        .enumerate()
    {
        println!("  {label} (class {cls}): {}", sig12(rate));
    }
    println!("witness policy (nonzero action probabilities per state):");
    for (z, row) in result.witness.probs.iter().enumerate() {
        let mut parts = Vec::new();
        for (a, &p) in row.iter().enumerate() {
            if p > 1e-12 {
                parts.push(format!("{}={}", model.actions[a], sig12(p)));
            }
        }
        println!(
            "  {} ({z}): {}",
            model.server_states[z].label,
            parts.join(", ")
        );
    }

    if let Some(dir) = out {
        if let Err(e) = prepare_out_dir(dir, &model) {
            return fail(e);
        }
        let x: Vec<serde_json::Value> = result
            .measure
            .x
            .iter()
            .map(|(&(z, a), &v)| serde_json::json!({"z": z, "a": a, "x": v}))
            .collect();
        let doc = serde_json::json!({
            "model_hash": model.hash(),
            "lambda": lambda,
            "margin": result.margin,
            "classification": result.classification.to_string(),
            "rates": result.rates,
            "occupation_measure": x,
            "witness": result.witness.probs,
        });
        let path = dir.join("capacity.json");
        if let Err(e) = write_out(&path, &format!("{:#}\n", doc)) {
            return fail(e);
        }
        info!("wrote {}", path.display());
    }

    if let Some(axes) = grid {
        let Some(dir) = out else {
            return usage_error("--grid requires --out for the CSV");
        };
        let parts: Vec<usize> = match axes.split(',').map(str::parse).collect() {
            Ok(p) => p,
            Err(e) => return usage_error(format!("--grid: {e}")),
        };
        if parts.len() != 2 || parts.iter().any(|&i| i >= model.num_classes()) {
            return usage_error("--grid needs two valid class indices, e.g. 0,2");
        }
        let (i, j) = (parts[0], parts[1]);
        let mut csv = format!("lambda_{i},lambda_{j},margin,classification\n");
        for a in 0..=grid_steps {
            for b in 0..=grid_steps {
                let mut probe = lambda.to_vec();
                probe[i] = grid_max * a as f64 / grid_steps as f64;
                probe[j] = grid_max * b as f64 / grid_steps as f64;
                let m = match capacity_margin(&model, &probe) {
                    Ok(r) => r.margin,
                    Err(e) => return fail(e),
                };
                let _ = writeln!(csv, "{},{},{},{}", probe[i], probe[j], m, classify(m));
            }
        }
        let path = dir.join(format!("capacity_grid_{i}_{j}.csv"));
        if let Err(e) = write_out(&path, &csv) {
            return fail(e);
        }
        println!("grid written to {}", path.display());
    }
    ExitCode::SUCCESS
}

fn parse_controller(
    model: &MdpnModel,
    name: &str,
    policy_path: Option<&Path>,
) -> Result<ControllerSpec, String> {
    match name {
        "maxweight" => Ok(ControllerSpec::MaxWeight),
        "warp" => Ok(ControllerSpec::Warp(WarpConfig::default())),
        "p0" => p0_policy(model).map_err(|e| e.to_string()),
        "uniform" => Ok(ControllerSpec::FixedAgnostic(AgnosticPolicy::uniform(
            model,
        ))),
        "fixed" => {
            let path = policy_path.ok_or("--controller fixed requires --policy <path>")?;
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let probs: Vec<Vec<f64>> =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let policy = AgnosticPolicy { probs };
            policy.validate(model).map_err(|e| e.to_string())?;
            Ok(ControllerSpec::FixedAgnostic(policy))
        }
        other => Err(format!(
            "unknown controller {other:?} (expected maxweight, warp, p0, uniform, or fixed)"
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    source: &ModelSource,
    controller: &str,
    policy_path: Option<&Path>,
    horizon: u64,
    seed: u64,
    seeds: u64,
    q0: Option<Vec<u64>>,
    z0: usize,
    burn_in: f64,
    compact_threshold: f64,
    out: Option<&Path>,
) -> ExitCode {
    let model = match resolve_model(source) {
        Ok(m) => m,
        Err(e) => return usage_error(e),
    };
    let spec = match parse_controller(&model, controller, policy_path) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let initial_q = q0.unwrap_or_else(|| vec![0; model.num_classes()]);
    if initial_q.len() != model.num_classes() {
        return usage_error(format!("--q0 needs {} entries", model.num_classes()));
    }
    if seeds == 0 {
        return usage_error("--seeds must be at least 1");
    }

    let seed_list: Vec<u64> = (0..seeds).map(|k| seed + k).collect();
    let mut cfg = ReplicationConfig::new(horizon, seed_list.clone(), model.num_classes());
    cfg.burn_in = burn_in;
    cfg.compact_threshold = compact_threshold;
    cfg.initial_q = initial_q.clone();
    cfg.initial_z = z0;
    info!("running {} replication(s) of {} slots", seeds, horizon);
    let rep = replications(&model, &spec, &cfg);

    let mut report = String::new();
    let _ = writeln!(report, "controller: {spec}");
    let _ = writeln!(report, "model hash: {}", model.hash());
    let _ = writeln!(report, "horizon: {horizon}, seeds: {seed_list:?}");
    let _ = writeln!(
        report,
        "burn-in fraction: {}, compact threshold: {}",
        sig12(burn_in),
        sig12(compact_threshold)
    );
    for outcome in &rep.per_seed {
        match outcome {
            Ok(d) => {
                let _ = writeln!(
                    report,
                    "seed {}: total slope {} (se {}), max {}, visits<=thr {}, verdict {}",
                    d.seed,
                    sig12(d.total.slope),
                    sig12(d.total.slope_se),
                    sig12(d.total.max_post),
                    d.total.returns_to_compact,
                    d.total.verdict
                );
                for (cls, r) in d.per_class.iter().enumerate() {
                    let _ = writeln!(
                        report,
                        "  class {cls}: slope {} (se {}), max {}, verdict {}",
                        sig12(r.slope),
                        sig12(r.slope_se),
                        sig12(r.max_post),
                        r.verdict
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(report, "seed failed: {e}");
            }
        }
    }
    let fmt_summary = |label: &str, s: &SlopeSummary, rep: &mut String| {
        let _ = writeln!(
            rep,
            "aggregate {label}: mean slope {} sd {} ci [{}, {}]",
            sig12(s.mean),
            sig12(s.sd),
            sig12(s.ci_low),
            sig12(s.ci_high)
        );
    };
    if let Some(s) = &rep.total {
        fmt_summary("total", s, &mut report);
    }
    for (cls, s) in rep.per_class.iter().enumerate() {
        if let Some(s) = s {
            fmt_summary(&format!("class {cls}"), s, &mut report);
        }
    }

    if let Some(dir) = out {
        if let Err(e) = prepare_out_dir(dir, &model) {
            return fail(e);
        }
        // Re-run per seed to export traces; runs are deterministic per seed.
        for &s in &seed_list {
            let trace = match mdpn::sim::run_from(&model, &spec, z0, &initial_q, horizon, s) {
                Ok(t) => t,
                Err(e) => return fail(e),
            };
            if let Err(e) = export_trace(dir, &model, &trace, s, &mut report) {
                return fail(e);
            }
        }
        if let Err(e) = write_out(&dir.join("report.txt"), &report) {
            return fail(e);
        }
        let _ = writeln!(report, "outputs written to {}", dir.display());
    }
    print!("{report}");
    ExitCode::SUCCESS
}

fn export_trace(
    dir: &Path,
    model: &MdpnModel,
    trace: &Trace,
    seed: u64,
    report: &mut String,
) -> Result<(), String> {
    write_out(&dir.join(format!("trace_{seed}.csv")), &trace.to_csv())?;
    write_out(
        &dir.join(format!("trace_{seed}.meta.json")),
        &trace.metadata_json(),
    )?;

    let window = (trace.len() / 200).max(1);
    let drift = lyapunov_drift(trace, window);
    let mut csv = String::from("window,delta_L\n");
    for (k, d) in drift.iter().enumerate() {
        let _ = writeln!(csv, "{k},{d}");
    }
    write_out(&dir.join(format!("drift_{seed}.csv")), &csv)?;

    // Per-epoch mixing distances for epoch-based runs: first few complete
    // epochs plus their mean.
    if !trace.epoch_marks.is_empty() {
        let mut tvs = Vec::new();
        for mark in &trace.epoch_marks {
            if mark.start + mark.planned_len > trace.len() as u64 {
                break;
            }
            match timescale_diagnostic(model, trace, mark.epoch) {
                Ok(tv) => tvs.push((mark.epoch, tv)),
                Err(_) => break,
            }
            if tvs.len() >= 5 {
                break;
            }
        }
        if !tvs.is_empty() {
            let mean: f64 = tvs.iter().map(|(_, tv)| tv).sum::<f64>() / tvs.len() as f64;
            let _ = writeln!(
                report,
                "seed {seed}: epoch-tail TV {} (mean over {} epochs)",
                sig12(mean),
                tvs.len()
            );
        }
    }
    Ok(())
}

fn cmd_fluid(
    source: &ModelSource,
    lambda: &[f64],
    q0: &[f64],
    dt: Option<f64>,
    tmax: Option<f64>,
    out: Option<&Path>,
) -> ExitCode {
    let model = match resolve_model(source) {
        Ok(m) => m,
        Err(e) => return usage_error(e),
    };
    if lambda.len() != model.num_classes() || q0.len() != model.num_classes() {
        return usage_error(format!(
            "--lambda and --q0 need {} entries",
            model.num_classes()
        ));
    }
    let cfg = SolverConfig::default();
    let margin = match capacity_margin(&model, lambda) {
        Ok(r) => r.margin,
        Err(e) => return fail(e),
    };
    println!("capacity margin: {} ({})", sig12(margin), classify(margin));

    let dt = dt.unwrap_or_else(|| default_dt(lambda));
    let t_max = match tmax {
        Some(t) => t,
        None => {
            if margin > 0.0 {
                empty_time_bound(q0, margin).unwrap_or(10.0) + 10.0 * dt
            } else {
                // No drain guarantee; integrate a fixed window.
                (q0.iter().sum::<f64>() * 4.0).max(10.0)
            }
        }
    };
    let traj = match integrate_fluid(&model, lambda, q0, Some(dt), t_max, &cfg) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    match traj.empty_time {
        Some(t) => println!("empty time: {}", sig12(t)),
        None => println!("empty time: not reached by t = {}", sig12(t_max)),
    }
    if margin > 0.0 {
        let bound = empty_time_bound(q0, margin).expect("positive margin");
        println!("emptying bound: {}", sig12(bound));
        let ok = traj.empty_time.is_some_and(|t| t <= bound + 2.0 * dt);
        println!(
            "emptied within bound + 2dt: {}",
            if ok { "yes" } else { "NO" }
        );
        match check_drift_inequality(&traj, margin) {
            Ok(check) => {
                let lam_total: f64 = lambda.iter().sum();
                let tol = 5.0 * dt * (lam_total + model.schedule_bound as f64);
                println!(
                    "drift inequality worst slack: {} (tolerance {}, {} samples): {}",
                    sig12(check.worst_slack),
                    sig12(tol),
                    check.samples_checked,
                    if check.worst_slack <= tol {
                        "pass"
                    } else {
                        "FAIL"
                    }
                );
            }
            Err(e) => return fail(e),
        }
    }
    if let Some(dir) = out {
        if let Err(e) = prepare_out_dir(dir, &model) {
            return fail(e);
        }
        let path = dir.join("fluid.csv");
        if let Err(e) = write_out(&path, &traj.to_csv()) {
            return fail(e);
        }
        println!("trajectory written to {}", path.display());
    }
    ExitCode::SUCCESS
}

fn cmd_reproduce(name: &str) -> ExitCode {
    let Some(outcome) = experiments::run_by_name(name) else {
        return usage_error(format!(
            "unknown experiment {name:?}; expected one of: {}",
            experiments::EXPERIMENT_NAMES.join(", ")
        ));
    };
    println!("experiment: {}", outcome.name);
    for line in &outcome.lines {
        println!("  {line}");
    }
    if outcome.pass {
        println!("PASS");
        ExitCode::SUCCESS
    } else {
        println!("FAIL");
        ExitCode::from(1)
    }
}
