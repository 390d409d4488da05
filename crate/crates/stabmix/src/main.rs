//! Command-line front end: `run` executes a sweep spec, `fit` and
//! `collapse` re-analyze an existing `points.csv`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stabmix::analysis::{
    data_collapse, extrapolate_thermo, fit_scaling, read_points_csv, CollapsePoint,
    EnsemblePoint, FitModel, QPoint, ThermoPoint, DEFAULT_FIT_WINDOW,
};
use stabmix::experiment::{
    parse_observable, run_experiment, ExperimentError, ExperimentSpec, Observable,
    RunOptions,
};

#[derive(Parser)]
#[command(name = "stabmix", version, about = "noisy hybrid Clifford circuit sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML spec and write CSV/SVG artifacts.
    Run(RunArgs),
    /// Fit the q-dependence of observables in a points.csv.
    Fit(FitArgs),
    /// Finite-size data collapse of a points.csv.
    Collapse(CollapseArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment spec (TOML).
    spec: PathBuf,
    /// Output directory for points.csv and friends
    /// (default: the spec's out_dir, then "out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: spec value, then STABMIX_WORKERS, then 1).
    #[arg(long)]
    workers: Option<usize>,
    /// Replay every trajectory against the dense oracle (requires L <= 8).
    #[arg(long)]
    oracle_check: bool,
    /// Override the spec's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    /// points.csv produced by `run`.
    points: PathBuf,
    /// Fit model: pow13, powfree, or log.
    #[arg(long, default_value = "pow13")]
    model: FitModel,
    /// Only points with q <= qmax enter the fit.
    #[arg(long)]
    qmax: Option<f64>,
}

#[derive(Args)]
struct CollapseArgs {
    /// points.csv produced by `run`.
    points: PathBuf,
    /// Search range for the critical rate, as "lo:hi".
    #[arg(long, value_parser = parse_range)]
    qc_range: (f64, f64),
    /// Search range for the correlation-length exponent, as "lo:hi".
    #[arg(long, value_parser = parse_range)]
    nu_range: (f64, f64),
    /// Observable to collapse: i or en.
    #[arg(long, default_value = "en")]
    observable: String,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("want \"lo:hi\", got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    Ok((lo, hi))
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe like any Unix filter: `stabmix fit | head`
    // must not panic when the reader goes away.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version exit cleanly; genuine parse errors do not.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Collapse(args) => cmd_collapse(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Configuration and input problems exit 1; runtime failures (oracle
/// divergence, i/o on outputs) exit 2.
fn exit_code_for(e: &anyhow::Error) -> u8 {
    if let Some(xe) = e.downcast_ref::<ExperimentError>() {
        match xe {
            ExperimentError::Spec(_)
            | ExperimentError::Config { .. }
            | ExperimentError::OracleTooLarge { .. }
            | ExperimentError::Analysis(_) => 1,
            ExperimentError::OracleCheck { .. } | ExperimentError::Io { .. } => 2,
        }
    } else {
        1
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| anyhow::anyhow!("cannot read spec {}: {e}", args.spec.display()))?;
    let spec = ExperimentSpec::from_toml(&text)?;
    let out_dir = args
        .out
        .or_else(|| spec.run.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions {
        out_dir,
        workers: args.workers,
        oracle_check: args.oracle_check,
        seed_override: args.seed,
        quiet: false,
    };
    let summary = run_experiment(&spec, &opts)?;
    println!("{} sweep cells", summary.points.len());
    for file in &summary.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

/// Key of one fit group inside a points file: everything except q.
fn fit_group_key(pt: &EnsemblePoint) -> (String, String, usize, String, usize, usize) {
    (
        pt.model.to_string(),
        pt.boundary.to_string(),
        pt.l,
        format!("{:.16e}", pt.p),
        pt.t_noise,
        pt.depth,
    )
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.points)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", args.points.display()))?;
    let points = read_points_csv(&text)?;
    let mut groups: BTreeMap<_, Vec<&EnsemblePoint>> = BTreeMap::new();
    for pt in &points {
        groups.entry(fit_group_key(pt)).or_default().push(pt);
    }
    println!(
        "fit model {} (window q <= {})",
        args.model,
        args.qmax.unwrap_or(DEFAULT_FIT_WINDOW)
    );
    for ((model, boundary, l, p, t_noise, depth), pts) in &groups {
        for observable in [Observable::MutualInformation, Observable::LogNegativity] {
            let qpoints: Vec<QPoint> = pts
                .iter()
                .map(|pt| QPoint {
                    q: pt.q,
                    value: observable.mean_of(pt),
                    stderr: observable.stderr_of(pt),
                })
                .collect();
            let fit = match fit_scaling(&qpoints, args.model, args.qmax) {
                Ok(fit) => fit,
                Err(e) => {
                    eprintln!(
                        "skipping {model} {boundary} L={l} p={p} t_noise={t_noise} \
depth={depth} {}: {e}",
                        observable.label()
                    );
                    continue;
                }
            };
            let exp = fit
                .exponent
                .map(|e| format!(", exponent = {e:.4}"))
                .unwrap_or_default();
            println!(
                "{model} {boundary} L={l} p={} t_noise={t_noise} depth={depth} {}: \
a = {:.4}, b = {:.4}{exp}, rss = {:.4e} ({} points)",
                trim_float(p),
                observable.label(),
                fit.a,
                fit.b,
                fit.rss,
                fit.n_used,
            );
        }
    }

    // Thermodynamic extrapolation for every (model, boundary, p, q, t_noise)
    // group observed at two or more sizes.
    let mut thermo: BTreeMap<_, Vec<&EnsemblePoint>> = BTreeMap::new();
    for pt in &points {
        thermo
            .entry((
                pt.model.to_string(),
                pt.boundary.to_string(),
                format!("{:.16e}", pt.p),
                format!("{:.16e}", pt.q),
                pt.t_noise,
            ))
            .or_default()
            .push(pt);
    }
    for ((model, boundary, p, q, t_noise), pts) in &thermo {
        let sizes: std::collections::BTreeSet<usize> = pts.iter().map(|pt| pt.l).collect();
        if sizes.len() < 2 {
            continue;
        }
        let tp: Vec<ThermoPoint> = pts
            .iter()
            .map(|pt| ThermoPoint { l: pt.l, value: pt.i_mean, stderr: pt.i_stderr })
            .collect();
        match extrapolate_thermo(&tp) {
            Ok(fit) => println!(
                "thermo {model} {boundary} p={} q={} t_noise={t_noise}: \
I(inf) = {:.4} +- {:.4}",
                trim_float(p),
                trim_float(q),
                fit.s_inf,
                fit.s_inf_stderr
            ),
            Err(e) => eprintln!(
                "thermo {model} {boundary} p={} q={} t_noise={t_noise}: {e}",
                trim_float(p),
                trim_float(q)
            ),
        }
    }
    Ok(())
}

fn cmd_collapse(args: CollapseArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.points)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", args.points.display()))?;
    let points = read_points_csv(&text)?;
    let observable = parse_observable(&args.observable)?;
    let cpoints: Vec<CollapsePoint> = points
        .iter()
        .map(|pt| CollapsePoint { l: pt.l, q: pt.q, value: observable.mean_of(pt) })
        .collect();
    let res = data_collapse(&cpoints, args.qc_range, args.nu_range)?;
    println!(
        "collapse of {}: q_c = {:.6}, nu = {:.4}, cost = {:.6e}",
        observable.label(),
        res.q_c,
        res.nu,
        res.cost
    );
    Ok(())
}

/// Render a 17-digit float key back to a short human-readable number.
fn trim_float(s: &str) -> String {
    s.parse::<f64>().map(|v| format!("{v}")).unwrap_or_else(|_| s.to_string())
}
