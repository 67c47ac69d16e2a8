//! Command-line front end: validate interaction graphs and gains, run
//! scenarios, recompute metrics from trajectories, emit scenario files.
//!
//! Machine-readable JSON goes to stdout; human summaries and warnings go to
//! stderr. Exit codes: 0 success, 1 validation/runtime failure, 2 usage or
//! configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use formctl::config::{self, ScenarioFile};
use formctl::sim::{self, SimConfig};
use formctl::trajectory::TrajectoryLog;

/// Default output directory env var consulted when `--out-dir` is absent.
const OUT_DIR_ENV: &str = "FORMCTL_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "formctl",
    version,
    about = "Leader-following formation control simulator",
    after_help = "Unless --seed is given, scenarios use their configured seed \
                  (the bundled pentagon scenario uses 42)."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Source {
    /// Scenario TOML file.
    #[arg(long, value_name = "FILE", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Bundled scenario name (currently: pentagon).
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the trajectory CSV plus a metadata sidecar.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Integrator step override, seconds.
        #[arg(long)]
        dt: Option<f64>,
        /// Simulated duration override, seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// RNG seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Log every Nth step.
        #[arg(long)]
        stride: Option<usize>,
        /// Output directory (default: $FORMCTL_OUT_DIR, then `.`).
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        /// Also write the final NN weight matrices as JSON.
        #[arg(long, value_name = "FILE")]
        dump_weights: Option<PathBuf>,
    },
    /// Check the interaction graph: connectivity, M-matrix and spectral
    /// certificates. Exits 1 when certification fails.
    ValidateGraph {
        #[command(flatten)]
        source: Source,
    },
    /// Report gain thresholds and pass/fail for the configured gains
    /// (informational; simulation is never blocked).
    Gains {
        #[command(flatten)]
        source: Source,
    },
    /// Recompute the cost indices from a trajectory CSV.
    Metrics {
        /// Trajectory CSV produced by `simulate`.
        #[arg(long, value_name = "FILE")]
        csv: PathBuf,
    },
    /// Print a bundled scenario as TOML.
    Scenario {
        /// Scenario to emit (currently: pentagon).
        #[arg(long, value_name = "NAME")]
        emit: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Simulate { source, dt, duration, seed, stride, out_dir, dump_weights } => {
            let mut cfg = load(&source)?;
            if let Some(dt) = dt {
                cfg.dt = dt;
            }
            if let Some(duration) = duration {
                cfg.duration = duration;
            }
            if let Some(seed) = seed {
                cfg.rng_seed = seed;
            }
            if let Some(stride) = stride {
                cfg.log_stride = stride;
            }
            simulate(cfg, out_dir, dump_weights)
        }
        Command::ValidateGraph { source } => validate_graph(&load(&source)?),
        Command::Gains { source } => gains_report(&load(&source)?),
        Command::Metrics { csv } => metrics_report(&csv),
        Command::Scenario { emit } => {
            let cfg = builtin(&emit)?;
            print!("{}", ScenarioFile::from_config(&cfg).to_toml_string());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn builtin(name: &str) -> anyhow::Result<SimConfig> {
    match name {
        "pentagon" => Ok(sim::pentagon_scenario()),
        other => anyhow::bail!("unknown bundled scenario {other:?} (available: pentagon)"),
    }
}

fn load(source: &Source) -> anyhow::Result<SimConfig> {
    match (&source.config, &source.scenario) {
        (Some(path), None) => Ok(config::load(path)?),
        (None, Some(name)) => builtin(name),
        (None, None) => anyhow::bail!("one of --config or --scenario is required"),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    }
}

fn simulate(
    cfg: SimConfig,
    out_dir: Option<PathBuf>,
    dump_weights: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let out_dir = out_dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    let name = cfg.name.clone();
    let started = Instant::now();
    let run = match sim::run(cfg) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("simulation failed: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let wall = started.elapsed().as_secs_f64();
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }

    let csv_path = out_dir.join(format!("{name}_trajectory.csv"));
    let meta_path = out_dir.join(format!("{name}_meta.json"));
    let file = std::fs::File::create(&csv_path)?;
    run.log.write_csv(std::io::BufWriter::new(file))?;
    std::fs::write(&meta_path, serde_json::to_string_pretty(&run.metadata)?)?;
    if let Some(weights_path) = &dump_weights {
        let payload: Vec<_> = run.weight_snapshots.iter().collect();
        std::fs::write(weights_path, serde_json::to_string(&payload)?)?;
    }

    let (nu, vartheta) = sim::metrics(&run.log);
    let final_vartheta = vartheta.last().copied().unwrap_or(f64::NAN);
    let peak_nu = nu.iter().copied().fold(0.0f64, f64::max);
    eprintln!(
        "{name}: {} rows, final formation-error index {final_vartheta:.6}, \
         peak control index {peak_nu:.3}, wall {wall:.2} s",
        run.log.rows.len()
    );
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{}",
        json!({
            "scenario": name,
            "csv": csv_path.display().to_string(),
            "meta": meta_path.display().to_string(),
            "rows": run.log.rows.len(),
            "final_vartheta": final_vartheta,
            "peak_nu": peak_nu,
            "wall_seconds": wall,
        })
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Row-major copy of a dense matrix for JSON output.
fn matrix_json(m: &formctl::nalgebra::DMatrix<f64>) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    json!(rows)
}

fn validate_graph(cfg: &SimConfig) -> anyhow::Result<ExitCode> {
    match cfg.graph.certify() {
        Ok(c) => {
            let report = json!({
                "ok": true,
                "n_agents": cfg.graph.n_agents(),
                "strongly_connected": c.strongly_connected,
                "leader_rooted": true,
                "m_matrix": {
                    "offdiagonal_nonpositive": c.m_matrix_offdiag_ok,
                    "symmetric_part_pd": c.m_matrix_sym_pd,
                },
                "q": c.q.iter().copied().collect::<Vec<_>>(),
                "p_diag": c.p_diag.iter().copied().collect::<Vec<_>>(),
                "pi_positive_definite": true,
                "pi_eig_min": c.pi_eig_min,
                "pi_eig_max": c.pi_eig_max,
                "sigma_min_plb": c.sigma_min_plb,
                "sigma_max_plb": c.sigma_max_plb,
                "laplacian": matrix_json(&c.laplacian),
            });
            println!("{report}");
            eprintln!("graph certificates verified");
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            println!("{}", json!({ "ok": false, "error": e.to_string() }));
            eprintln!("graph certification failed: {e}");
            Ok(ExitCode::from(1))
        }
    }
}

fn gains_report(cfg: &SimConfig) -> anyhow::Result<ExitCode> {
    match cfg.graph.certify() {
        Ok(c) => {
            let th = c.gain_thresholds();
            let g = &cfg.gains;
            let check = th.check(g.k1, g.k2, g.k3, g.k4);
            let report = json!({
                "ok": true,
                "thresholds": {
                    "k1_min": th.k1_min,
                    "k2_min": th.k2_min,
                    "k3_min_at_configured_k2": th.k3_min(g.k2),
                    "k4_min": th.k4_min,
                },
                "configured": { "k1": g.k1, "k2": g.k2, "k3": g.k3, "k4": g.k4 },
                "pass": {
                    "k1": check.k1_ok,
                    "k2": check.k2_ok,
                    "k3": check.k3_ok,
                    "k4": check.k4_ok,
                    "all": check.all_ok(),
                },
                "sigma_min_plb": th.sigma_min_plb,
                "sigma_max_plb": th.sigma_max_plb,
            });
            println!("{report}");
            if !check.all_ok() {
                eprintln!("note: configured gains fall below the certified thresholds");
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            println!("{}", json!({ "ok": false, "error": e.to_string() }));
            eprintln!("cannot compute thresholds: {e}");
            Ok(ExitCode::from(1))
        }
    }
}

fn metrics_report(csv: &Path) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(csv)?;
    let log = TrajectoryLog::from_csv_str(&text).map_err(|e| anyhow::anyhow!(e))?;
    let na = log.n_agents;
    let n = log.state_dim;
    let mut nu = Vec::with_capacity(log.rows.len());
    let mut vartheta = Vec::with_capacity(log.rows.len());
    // recompute from the per-agent u and e blocks
    let u_cols: Vec<Vec<usize>> = (1..=na)
        .map(|i| (1..=n).map(|k| log.col(&format!("a{i}_u{k}")).unwrap()).collect())
        .collect();
    let e_cols: Vec<Vec<usize>> = (1..=na)
        .map(|i| (1..=n).map(|k| log.col(&format!("a{i}_e{k}")).unwrap()).collect())
        .collect();
    for row in &log.rows {
        let mut nu_acc = 0.0;
        let mut th_acc = 0.0;
        for i in 0..na {
            for k in 0..n {
                let u = row[u_cols[i][k]];
                nu_acc += u * u;
                th_acc += row[e_cols[i][k]].abs();
            }
        }
        let scale = 1.0 / (2.0 * na as f64);
        nu.push(nu_acc * scale);
        vartheta.push(th_acc * scale);
    }
    let report = json!({
        "rows": log.rows.len(),
        "t_final": log.rows.last().map(|r| r[0]),
        "final_vartheta": vartheta.last(),
        "peak_nu": nu.iter().copied().fold(0.0f64, f64::max),
        "final_nu": nu.last(),
    });
    println!("{report}");
    Ok(ExitCode::SUCCESS)
}
