// SPDX-License-Identifier: Apache-2.0

//! `driftbranch`: simulate, analyse and cross-check the drift-fission-death
//! particle model.
//!
//! Exit status: 0 on success, 1 on invalid input, 2 when a numerical
//! method fails to converge.
//!
//! # JSON schemas
//!
//! Run spec (`--spec`); only `model` and `init` are required:
//!
//! ```json
//! {
//!   "model": {
//!     "m": 1.0,
//!     "kernel": {"type": "product_gamma", "k": 0, "a": 1.0},
//!     "horizon": 10.0,
//!     "cap": 1000000,
//!     "record_grid": [1.0, 10.0],
//!     "branching": true,
//!     "weights": [{"type": "power_moment", "l": 1}]
//!   },
//!   "init": {"type": "poisson", "intensity": {"type": "exponential", "rate": 1.0, "mass": 1.0}},
//!   "replicas": 1000,
//!   "seed": 42,
//!   "renewal_dt": null
//! }
//! ```
//!
//! Kernels, tagged by `type`:
//! `{"type":"product_gamma","k":0,"a":1.0}`,
//! `{"type":"product_general","p":{"type":"uniform","lo":0.5,"hi":2.0}}`
//! (profiles `exponential{rate}`, `uniform{lo,hi}`, `gamma{shape,rate}`,
//! `tabulated{grid,values}`),
//! `{"type":"phi_envelope","sigma":3.0}` and
//! `{"type":"tabulated","grid":[..],"values":[[..],..]}` (row `i` holds
//! `b(grid[i], grid[j])`, bilinear in between).
//!
//! Intensities: `exponential{rate,mass}`, `uniform{lo,hi,mass}`,
//! `gamma{shape,rate,mass}`, `tabulated{grid,values}`. `mass` is optional:
//! it defaults to the integral of the values for tables and to one otherwise.
//! Initial states: `{"type":"poisson","intensity":{..}}` or
//! `{"type":"fixed","traits":[0.5,1.0]}`.
//! Weights: `h_m{m}`, `h_varsigma_alpha{varsigma,alpha}`, `power_moment{l}`,
//! `phi_sigma_product{sigma}`.
//!
//! Every result file carrying Monte Carlo output echoes the base seed in
//! its header. Existing files are kept unless `--force` is given.

mod output;
mod spec;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use driftbranch::output::{csv_table, fmt_num, svg_line_plot, Series};
use driftbranch::renewal::{growth_rate, solve, RenewalOptions, DEFAULT_REL_TOL};
use driftbranch::simulator::run_ensemble_member;
use driftbranch::soluble::{evolve, moment_bound_check};
use driftbranch::thresholds::{build_report, scan_sigma};
use driftbranch::validate::run_property_suite;
use driftbranch::{
    run_ensemble, CycleKernel, EventKind, InitialStateSpec, Intensity, ModelParams, ReplicaEnsemble,
    WeightFunction,
};
use output::Sink;
use spec::{json_arg, parse_grid, read_json, RunSpec};

#[derive(Parser)]
#[command(name = "driftbranch", version, about = "Drift-fission-death particle populations")]
struct Cli {
    /// Directory for result files; without it results go to stdout.
    #[arg(long, global = true, env = "DRIFTBRANCH_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Replace existing result files.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo ensemble; summary per grid time.
    Simulate(SimulateArgs),
    /// Mortality thresholds of a kernel.
    Threshold(ThresholdArgs),
    /// Mean population size from the renewal equations.
    Renewal(RenewalArgs),
    /// Branch-free drift model: evolved intensity and moment checks.
    Soluble(SolubleArgs),
    /// Property suite over the kernel catalog, as a JSON report.
    Validate(ValidateArgs),
    /// Monte Carlo mean next to the renewal solution.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

/// Run description: a JSON spec file, overridden by individual flags.
#[derive(Args)]
struct RunArgs {
    /// JSON run spec: {"model": {...}, "init": {...}, "replicas", "seed"}.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Kernel JSON (or @file), e.g. '{"type":"product_gamma","k":0,"a":1.0}'.
    #[arg(long)]
    kernel: Option<String>,
    /// Death rate per particle.
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Population cap per replica.
    #[arg(long)]
    cap: Option<usize>,
    /// Comma-separated observation times.
    #[arg(long)]
    grid: Option<String>,
    /// Initial state JSON (or @file); default Poisson with intensity e^{-x}.
    #[arg(long)]
    init: Option<String>,
    /// Weight functions to record, as a JSON array (or @file).
    #[arg(long)]
    weights: Option<String>,
    /// Particles reaching the boundary vanish instead of dividing.
    #[arg(long)]
    no_branching: bool,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Also write an SVG plot of the mean population size.
    #[arg(long)]
    emit_svg: bool,
    /// Write the event log of this replica index as CSV.
    #[arg(long, value_name = "INDEX")]
    event_log: Option<u64>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Kernel JSON (or @file).
    #[arg(long)]
    kernel: String,
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    /// Value of β̂(α) defining α and ς = 1 − target.
    #[arg(long, default_value_t = 0.5)]
    target: f64,
    /// Also report b* and m₁ for σ = 3, 3.5, …, 8.
    #[arg(long)]
    scan: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct RenewalArgs {
    /// JSON run spec; its model and Poisson initial intensity are used.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Initial intensity JSON (or @file); default e^{-x}.
    #[arg(long)]
    intensity: Option<String>,
    /// Time step; default 0.01 / sup β.
    #[arg(long)]
    dt: Option<f64>,
    /// Accepted relative change when halving the step.
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    rel_tol: f64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    emit_svg: bool,
}

#[derive(Args)]
struct SolubleArgs {
    /// Initial intensity JSON (or @file); default e^{-x}.
    #[arg(long)]
    intensity: Option<String>,
    /// Elapsed time.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Right end of the sampling grid for κ(t, ·).
    #[arg(long, default_value_t = 10.0)]
    x_max: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random configurations per kernel in the Lyapunov checks.
    #[arg(long, default_value_t = 10_000)]
    configs: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Renewal time step; default 0.01 / sup β.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    emit_svg: bool,
}

/// Error type carrying the exit status.
fn exit_code(err: &anyhow::Error) -> u8 {
    let non_convergence = err
        .chain()
        .any(|c| matches!(c.downcast_ref::<driftbranch::Error>(), Some(driftbranch::Error::NonConvergence(_))));
    if non_convergence {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let sink = Sink::new(cli.out_dir.clone(), cli.force)?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cli.jobs {
            if j == 0 {
                bail!("--jobs must be at least 1");
            }
            b = b.num_threads(j);
        }
        b.build().context("starting worker threads")?
    };
    pool.install(|| match cli.command {
        Command::Simulate(a) => simulate(a, &sink),
        Command::Threshold(a) => threshold(a, &sink),
        Command::Renewal(a) => renewal(a, &sink),
        Command::Soluble(a) => soluble(a, &sink),
        Command::Validate(a) => validate(a, &sink),
        Command::Compare(a) => compare(a, &sink),
    })
}

fn default_intensity() -> Intensity {
    Intensity::exponential(1.0, 1.0).expect("valid intensity")
}

/// Flags > spec file > defaults.
fn resolve_run(a: &RunArgs) -> Result<RunSpec> {
    let mut spec = match &a.spec {
        Some(path) => read_json::<RunSpec>(path, "run spec")?,
        None => {
            let Some(kernel) = &a.kernel else {
                bail!("either --spec or --kernel is required");
            };
            let kernel: CycleKernel = json_arg(kernel, "kernel")?;
            let (Some(m), Some(horizon)) = (a.m, a.horizon) else {
                bail!("--m and --horizon are required without --spec");
            };
            RunSpec {
                model: ModelParams::new(m, kernel, horizon),
                init: InitialStateSpec::Poisson {
                    intensity: default_intensity(),
                },
                replicas: 1000,
                seed: 0,
                renewal_dt: None,
            }
        }
    };
    if a.spec.is_some() {
        if let Some(k) = &a.kernel {
            spec.model.kernel = json_arg(k, "kernel")?;
        }
        if let Some(m) = a.m {
            spec.model.m = m;
        }
        if let Some(h) = a.horizon {
            spec.model.horizon = h;
        }
    }
    if let Some(cap) = a.cap {
        spec.model.cap = cap;
    }
    if let Some(g) = &a.grid {
        spec.model.record_grid = parse_grid(g)?;
    }
    if spec.model.record_grid.is_empty() {
        spec.model.record_grid = vec![spec.model.horizon];
    }
    if let Some(init) = &a.init {
        spec.init = json_arg(init, "initial state")?;
    }
    if let Some(w) = &a.weights {
        spec.model.weights = json_arg::<Vec<WeightFunction>>(w, "weights")?;
    }
    if a.no_branching {
        spec.model.branching = false;
    }
    if let Some(r) = a.replicas {
        spec.replicas = r;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if spec.replicas == 0 {
        bail!("replicas must be at least 1");
    }
    spec.model.validate()?;
    Ok(spec)
}

fn summary_table(ens: &ReplicaEnsemble) -> String {
    let mut out = format!("# base_seed={}\n", ens.base_seed);
    let _ = writeln!(
        out,
        "{:>10} {:>14} {:>12} {:>14} {:>12} {:>8} {:>8}",
        "time", "mean_N", "se_N", "mean_h", "se_h", "capped", "extinct"
    );
    for s in &ens.summary {
        let (mh, sh) = (s.mean_weights.first().copied(), s.se_weights.first().copied());
        let _ = writeln!(
            out,
            "{:>10.4} {:>14.6e} {:>12.4e} {:>14.6e} {:>12.4e} {:>8.4} {:>8.4}",
            s.time,
            s.mean_size,
            s.se_size,
            mh.unwrap_or(f64::NAN),
            sh.unwrap_or(f64::NAN),
            s.capped_fraction(),
            s.extinct_fraction()
        );
    }
    out
}

#[derive(serde::Serialize)]
struct SimulateReport<'a> {
    spec: &'a RunSpec,
    seeds: &'a [u64],
    capped: usize,
    summary: &'a [driftbranch::simulator::GridSummary],
}

fn simulate(a: SimulateArgs, sink: &Sink) -> Result<()> {
    let spec = resolve_run(&a.run)?;
    let ens = run_ensemble(&spec.model, &spec.init, spec.replicas, spec.seed)?;
    match a.format {
        Format::Csv => sink.emit("simulate.csv", &ens.to_csv())?,
        Format::Table => sink.emit("simulate.txt", &summary_table(&ens))?,
        Format::Json => {
            let report = SimulateReport {
                spec: &spec,
                seeds: &ens.seeds,
                capped: ens.capped_count(),
                summary: &ens.summary,
            };
            sink.emit("simulate.json", &(serde_json::to_string_pretty(&report)? + "\n"))?
        }
    }
    if a.emit_svg {
        let t: Vec<f64> = ens.summary.iter().map(|s| s.time).collect();
        let n: Vec<f64> = ens.summary.iter().map(|s| s.mean_size).collect();
        let svg = svg_line_plot(
            &format!("mean N(t), m = {}, seed = {}", spec.model.m, spec.seed),
            &[Series { label: "Monte Carlo mean N(t)", x: &t, y: &n }],
            true,
        );
        sink.emit_file_only("simulate.svg", &svg)?;
    }
    if let Some(index) = a.event_log {
        if index >= spec.replicas as u64 {
            bail!("--event-log index {index} out of range (replicas = {})", spec.replicas);
        }
        let mut rows = Vec::new();
        let traj = run_ensemble_member(&spec.model, &spec.init, spec.seed, index, &mut |e| {
            let (kind, a, b) = match e.kind {
                EventKind::Fission { left, right } => ("fission", left, right),
                EventKind::Absorption => ("absorption", f64::NAN, f64::NAN),
                EventKind::Death { trait_value } => ("death", trait_value, f64::NAN),
                EventKind::Cap => ("cap", f64::NAN, f64::NAN),
            };
            rows.push(format!("{},{kind},{},{},{}", fmt_num(e.time), e.size, fmt_num(a), fmt_num(b)));
        })?;
        let mut csv = format!(
            "# base_seed={} replica={index} replica_seed={} initial_size={}\ntime,kind,size_after,trait_a,trait_b\n",
            spec.seed, traj.seed, traj.initial_size
        );
        for r in rows {
            csv.push_str(&r);
            csv.push('\n');
        }
        sink.emit(&format!("events_{index}.csv"), &csv)?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct ScanRow {
    sigma: f64,
    b_star: f64,
    m1: f64,
}

#[derive(serde::Serialize)]
struct ThresholdOutput<'a> {
    #[serde(flatten)]
    report: &'a driftbranch::ThresholdReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sigma_scan: Vec<ScanRow>,
}

fn threshold(a: ThresholdArgs, sink: &Sink) -> Result<()> {
    let kernel: CycleKernel = json_arg(&a.kernel, "kernel")?;
    let report = build_report(&kernel, a.sigma, a.target)?;
    match a.format {
        Format::Json | Format::Csv => {
            let scan = if a.scan {
                scan_sigma(&kernel)
                    .into_iter()
                    .map(|(sigma, b_star, m1)| ScanRow { sigma, b_star, m1 })
                    .collect()
            } else {
                Vec::new()
            };
            let out = ThresholdOutput { report: &report, sigma_scan: scan };
            sink.emit("threshold.json", &(serde_json::to_string_pretty(&out)? + "\n"))
        }
        Format::Table => {
            let mut out = report.to_table();
            if a.scan {
                let _ = writeln!(out, "\n{:>6} {:>16} {:>16}", "sigma", "b_star", "m1");
                for (sigma, b_star, m1) in scan_sigma(&kernel) {
                    let _ = writeln!(out, "{sigma:>6.1} {b_star:>16.6e} {m1:>16.6e}");
                }
            }
            sink.emit("threshold.txt", &out)
        }
    }
}

fn renewal(a: RenewalArgs, sink: &Sink) -> Result<()> {
    let (mut kernel, mut m, mut horizon, mut intensity, mut dt) = (None, None, None, None, a.dt);
    if let Some(path) = &a.spec {
        let spec: RunSpec = read_json(path, "run spec")?;
        kernel = Some(spec.model.kernel);
        m = Some(spec.model.m);
        horizon = Some(spec.model.horizon);
        intensity = Some(poisson_intensity(&spec.init)?);
        dt = dt.or(spec.renewal_dt);
    }
    if let Some(k) = &a.kernel {
        kernel = Some(json_arg(k, "kernel")?);
    }
    if let Some(i) = &a.intensity {
        intensity = Some(json_arg(i, "intensity")?);
    }
    let kernel = kernel.context("either --spec or --kernel is required")?;
    let m = a.m.or(m).context("--m is required without --spec")?;
    let horizon = a.horizon.or(horizon).context("--horizon is required without --spec")?;
    let intensity = intensity.unwrap_or_else(default_intensity);
    let sol = solve(&kernel, m, &intensity, horizon, RenewalOptions { dt, rel_tol: a.rel_tol })?;
    let growth = growth_rate(&sol);
    match a.format {
        Format::Json => {
            let value = serde_json::json!({
                "kernel": kernel,
                "intensity": intensity,
                "solution": sol,
                "growth": growth,
            });
            sink.emit("renewal.json", &(serde_json::to_string_pretty(&value)? + "\n"))?;
        }
        Format::Csv | Format::Table => {
            let comment = format!(
                "m={} dt={} richardson_error={} growth_slope={} growth_se={} verdict={:?}",
                fmt_num(m),
                fmt_num(sol.dt),
                fmt_num(sol.richardson_error),
                fmt_num(growth.slope),
                fmt_num(growth.std_error),
                growth.verdict
            );
            let rows: Vec<Vec<f64>> = (0..sol.times.len())
                .map(|i| vec![sol.times[i], sol.flux[i], sol.mean_size[i]])
                .collect();
            sink.emit("renewal.csv", &csv_table(&comment, &["t", "u", "M"], &rows))?;
        }
    }
    if a.emit_svg {
        let svg = svg_line_plot(
            &format!("renewal M(t), m = {m}"),
            &[Series { label: "M(t)", x: &sol.times, y: &sol.mean_size }],
            true,
        );
        sink.emit_file_only("renewal.svg", &svg)?;
    }
    Ok(())
}

fn poisson_intensity(init: &InitialStateSpec) -> Result<Intensity> {
    match init {
        InitialStateSpec::Poisson { intensity } => Ok(intensity.clone()),
        InitialStateSpec::Fixed { .. } => {
            bail!("the renewal solver needs a Poisson initial state (an intensity), not fixed traits")
        }
    }
}

fn soluble(a: SolubleArgs, sink: &Sink) -> Result<()> {
    let intensity: Intensity = match &a.intensity {
        Some(s) => json_arg(s, "intensity")?,
        None => default_intensity(),
    };
    if a.points < 2 || !(a.x_max > 0.0) {
        bail!("need --points ≥ 2 and --x-max > 0");
    }
    let state = evolve(&intensity, a.t)?;
    let checks = (0..=2)
        .map(|l| moment_bound_check(&intensity, a.t, l))
        .collect::<driftbranch::Result<Vec<_>>>()?;
    let xs: Vec<f64> = (0..a.points).map(|i| a.x_max * i as f64 / (a.points - 1) as f64).collect();
    match a.format {
        Format::Json => {
            let value = serde_json::json!({
                "state": state,
                "mean_size": state.mean_size(),
                "kappa": xs.iter().map(|&x| [x, state.kappa(x)]).collect::<Vec<_>>(),
                "moment_checks": checks,
            });
            sink.emit("soluble.json", &(serde_json::to_string_pretty(&value)? + "\n"))
        }
        Format::Csv | Format::Table => {
            let comment = format!("t={} mean_size={}", fmt_num(a.t), fmt_num(state.mean_size()));
            let kappa: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x, state.kappa(x)]).collect();
            let moments: Vec<Vec<f64>> = checks
                .iter()
                .map(|c| vec![f64::from(c.l), c.t, c.initial, c.evolved, f64::from(u8::from(c.pass))])
                .collect();
            let kappa_csv = csv_table(&comment, &["x", "kappa"], &kappa);
            let moments_csv = csv_table(&comment, &["l", "t", "N_l_0", "N_l_t", "pass"], &moments);
            if sink.dir().is_some() {
                sink.emit("soluble_kappa.csv", &kappa_csv)?;
                sink.emit("soluble_moments.csv", &moments_csv)
            } else {
                sink.emit("", &format!("{kappa_csv}\n{moments_csv}"))
            }
        }
    }
}

fn validate(a: ValidateArgs, sink: &Sink) -> Result<()> {
    let report = run_property_suite(a.seed, a.configs);
    let failed = report.properties.iter().filter(|p| !p.pass).count();
    eprintln!("{} properties, {failed} failed", report.properties.len());
    sink.emit("validate.json", &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn compare(a: CompareArgs, sink: &Sink) -> Result<()> {
    let spec = resolve_run(&a.run)?;
    let intensity = poisson_intensity(&spec.init)?;
    let sol = solve(
        &spec.model.kernel,
        spec.model.m,
        &intensity,
        spec.model.horizon,
        RenewalOptions {
            dt: a.dt.or(spec.renewal_dt),
            rel_tol: DEFAULT_REL_TOL,
        },
    )?;
    let ens = run_ensemble(&spec.model, &spec.init, spec.replicas, spec.seed)?;
    let rows: Vec<Vec<f64>> = ens
        .summary
        .iter()
        .map(|s| vec![s.time, s.mean_size, s.se_size, sol.mean_at(s.time)])
        .collect();
    let comment = format!(
        "base_seed={} replicas={} m={} capped={}",
        spec.seed,
        spec.replicas,
        fmt_num(spec.model.m),
        ens.capped_count()
    );
    sink.emit("compare.csv", &csv_table(&comment, &["t", "mc_mean", "mc_se", "renewal_M"], &rows))?;
    if a.emit_svg {
        let t: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mc: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let svg = svg_line_plot(
            &format!("Monte Carlo vs renewal, m = {}, seed = {}", spec.model.m, spec.seed),
            &[
                Series { label: "renewal M(t)", x: &sol.times, y: &sol.mean_size },
                Series { label: "Monte Carlo mean N(t)", x: &t, y: &mc },
            ],
            true,
        );
        sink.emit_file_only("compare.svg", &svg)?;
    }
    Ok(())
}
