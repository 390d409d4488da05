//! Batch experiment driver: a TOML spec describing a sweep, a deterministic
//! parallel runner, and the CSV/SVG artifacts.
//!
//! Determinism contract: a fixed spec and master seed produce byte-identical
//! `points.csv` (and `trajectories.csv`) regardless of worker count or
//! scheduling, because every trajectory owns a stream keyed by its global
//! index and records are folded in index order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::analysis::{
    aggregate, data_collapse, fit_scaling, AnalysisError, CollapsePoint, EnsemblePoint,
    FitModel, QPoint, write_points_csv,
};
use crate::circuit::{
    run_trajectory, run_trajectory_logged, Boundary, CircuitConfig, ConfigError,
    NoiseModel, TrajectoryRecord,
};
use crate::entanglement::Bipartition;
use crate::oracle::{DenseState, OracleError, MAX_DENSE_SITES};
use crate::plot::{linear_plot, loglog_plot, Series};

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV: &str = "STABMIX_WORKERS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("spec parse error: {0}")]
    Spec(String),
    #[error("sweep cell {cell}: {source}")]
    Config { cell: String, source: ConfigError },
    #[error("oracle check requires L <= {MAX_DENSE_SITES}, got L = {l}")]
    OracleTooLarge { l: usize },
    #[error("oracle check failed on cell {cell}, trajectory {index}: {source}")]
    OracleCheck { cell: String, index: u64, source: OracleError },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

// ---------------------------------------------------------------------------
// Spec (TOML)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub sweep: SweepSection,
    pub run: RunSection,
    #[serde(default)]
    pub analysis: Option<AnalysisSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub model: Vec<NoiseModel>,
    pub boundary: Vec<Boundary>,
    pub l: Vec<usize>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Late-window lengths; only meaningful for `boundary_plus_late_bulk`.
    #[serde(default = "default_t_noise")]
    pub t_noise: Vec<usize>,
    /// One fixed depth for every cell; omitted means `8 * L` per cell.
    #[serde(default)]
    pub depth: Option<usize>,
}

fn default_t_noise() -> Vec<usize> {
    vec![0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trajectories: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub write_trajectories: bool,
    /// Default output directory; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Fit models to run per sweep group: any of "pow13", "powfree", "log".
    #[serde(default)]
    pub fit_models: Vec<String>,
    #[serde(default)]
    pub q_max: Option<f64>,
    /// Observable the collapse runs on: "i" or "en" (default "en").
    #[serde(default)]
    pub observable: Option<String>,
    #[serde(default)]
    pub qc_range: Option<[f64; 2]>,
    #[serde(default)]
    pub nu_range: Option<[f64; 2]>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| ExperimentError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.run.trajectories == 0 {
            return Err(ExperimentError::Spec("run.trajectories must be >= 1".into()));
        }
        for axis in [
            ("sweep.model", self.sweep.model.is_empty()),
            ("sweep.boundary", self.sweep.boundary.is_empty()),
            ("sweep.l", self.sweep.l.is_empty()),
            ("sweep.p", self.sweep.p.is_empty()),
            ("sweep.q", self.sweep.q.is_empty()),
            ("sweep.t_noise", self.sweep.t_noise.is_empty()),
        ] {
            if axis.1 {
                return Err(ExperimentError::Spec(format!("{} must not be empty", axis.0)));
            }
        }
        if let Some(a) = &self.analysis {
            for m in &a.fit_models {
                parse_fit_model(m)?;
            }
            if let Some(obs) = &a.observable {
                parse_observable(obs)?;
            }
            if a.qc_range.is_some() != a.nu_range.is_some() {
                return Err(ExperimentError::Spec(
                    "collapse needs both qc_range and nu_range".into(),
                ));
            }
        }
        // Validate every sweep cell up front so a bad cell is reported
        // before any work starts.
        for (cfg, _) in self.cells(None)? {
            cfg.validate().map_err(|source| ExperimentError::Config {
                cell: cell_name(&cfg),
                source,
            })?;
        }
        Ok(())
    }

    /// Sweep cells in their canonical order: model, boundary, L, p, q,
    /// t_noise, each axis in spec order. The second tuple element is the
    /// cell index.
    fn cells(&self, seed_override: Option<u64>) -> Result<Vec<(CircuitConfig, usize)>, ExperimentError> {
        let mut out = Vec::new();
        let mut idx = 0usize;
        let seed = seed_override.unwrap_or(self.run.master_seed);
        for &model in &self.sweep.model {
            for &boundary in &self.sweep.boundary {
                for &l in &self.sweep.l {
                    for &p in &self.sweep.p {
                        for &q in &self.sweep.q {
                            for &t_noise in &self.sweep.t_noise {
                                out.push((
                                    CircuitConfig {
                                        model,
                                        n_qubits: l,
                                        measure_rate: p,
                                        reset_rate: q,
                                        t_noise,
                                        boundary,
                                        depth: self
                                            .sweep
                                            .depth
                                            .unwrap_or_else(|| CircuitConfig::default_depth(l)),
                                        master_seed: seed,
                                        trajectory_index: 0,
                                    },
                                    idx,
                                ));
                                idx += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn parse_fit_model(s: &str) -> Result<FitModel, ExperimentError> {
    s.parse().map_err(ExperimentError::Spec)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    MutualInformation,
    LogNegativity,
}

impl Observable {
    pub fn label(self) -> &'static str {
        match self {
            Observable::MutualInformation => "i",
            Observable::LogNegativity => "en",
        }
    }

    pub fn mean_of(self, pt: &EnsemblePoint) -> f64 {
        match self {
            Observable::MutualInformation => pt.i_mean,
            Observable::LogNegativity => pt.en_mean,
        }
    }

    pub fn stderr_of(self, pt: &EnsemblePoint) -> f64 {
        match self {
            Observable::MutualInformation => pt.i_stderr,
            Observable::LogNegativity => pt.en_stderr,
        }
    }
}

pub fn parse_observable(s: &str) -> Result<Observable, ExperimentError> {
    match s {
        "i" => Ok(Observable::MutualInformation),
        "en" => Ok(Observable::LogNegativity),
        _ => Err(ExperimentError::Spec(format!("unknown observable {s:?} (want i or en)"))),
    }
}

fn cell_name(cfg: &CircuitConfig) -> String {
    format!(
        "model={} boundary={} L={} p={} q={} t_noise={}",
        cfg.model, cfg.boundary, cfg.n_qubits, cfg.measure_rate, cfg.reset_rate, cfg.t_noise
    )
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Overrides spec and environment when set.
    pub workers: Option<usize>,
    pub oracle_check: bool,
    pub seed_override: Option<u64>,
    /// Suppress progress lines on stderr.
    pub quiet: bool,
}

#[derive(Debug)]
pub struct RunSummary {
    pub points: Vec<EnsemblePoint>,
    pub files: Vec<PathBuf>,
}

/// Resolution order for the worker count: explicit option, spec value,
/// `STABMIX_WORKERS`, then 1.
pub fn resolve_workers(option: Option<usize>, spec: Option<usize>) -> usize {
    option
        .or(spec)
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Run the whole sweep and write every artifact into `opts.out_dir`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    opts: &RunOptions,
) -> Result<RunSummary, ExperimentError> {
    spec.validate()?;
    let cells = spec.cells(opts.seed_override)?;
    let n_traj = spec.run.trajectories as u64;
    let workers = resolve_workers(opts.workers, spec.run.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Spec(format!("thread pool: {e}")))?;

    if opts.oracle_check {
        if let Some((cfg, _)) = cells.iter().find(|(c, _)| c.n_qubits > MAX_DENSE_SITES) {
            return Err(ExperimentError::OracleTooLarge { l: cfg.n_qubits });
        }
    }

    fs::create_dir_all(&opts.out_dir).map_err(|source| ExperimentError::Io {
        path: opts.out_dir.clone(),
        source,
    })?;

    let mut points: Vec<EnsemblePoint> = Vec::with_capacity(cells.len());
    let mut traj_rows: Vec<String> = Vec::new();
    for (base, cell_idx) in &cells {
        let indices: Vec<u64> =
            (0..n_traj).map(|k| (*cell_idx as u64) * n_traj + k).collect();
        let records: Vec<Result<TrajectoryRecord, ExperimentError>> = pool.install(|| {
            indices
                .par_iter()
                .map(|&index| {
                    let mut cfg = base.clone();
                    cfg.trajectory_index = index;
                    if opts.oracle_check {
                        let (rec, log) = run_trajectory_logged(&cfg)
                            .map_err(|source| ExperimentError::Config {
                                cell: cell_name(&cfg),
                                source,
                            })?;
                        let bp = Bipartition::half_chain(cfg.n_qubits);
                        DenseState::replay(cfg.n_qubits, &log)
                            .and_then(|d| d.verify_report(&rec.report, &bp, 1e-9))
                            .map_err(|source| ExperimentError::OracleCheck {
                                cell: cell_name(&cfg),
                                index,
                                source,
                            })?;
                        Ok(rec)
                    } else {
                        run_trajectory(&cfg).map_err(|source| ExperimentError::Config {
                            cell: cell_name(&cfg),
                            source,
                        })
                    }
                })
                .collect()
        });
        let mut cell_records = Vec::with_capacity(records.len());
        for r in records {
            cell_records.push(r?);
        }
        let point = aggregate(&cell_records)?;
        if !opts.quiet {
            eprintln!(
                "cell {}/{}: {} -> I = {:.3} +- {:.3}, EN = {:.3} +- {:.3}",
                cell_idx + 1,
                cells.len(),
                cell_name(base),
                point.i_mean,
                point.i_stderr,
                point.en_mean,
                point.en_stderr,
            );
        }
        if spec.run.write_trajectories {
            for rec in &cell_records {
                traj_rows.push(format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    rec.config.model,
                    rec.config.boundary,
                    rec.config.n_qubits,
                    format!("{:.16e}", rec.config.measure_rate),
                    format!("{:.16e}", rec.config.reset_rate),
                    rec.config.t_noise,
                    rec.config.depth,
                    rec.config.trajectory_index,
                    rec.report.mutual_information,
                    format!("{:.16e}", rec.report.log_negativity),
                    rec.report.s_a,
                    rec.report.s_b,
                    rec.report.s_ab,
                    rec.report.purity_exponent,
                    rec.stream,
                ));
            }
        }
        points.push(point);
    }

    let mut files = Vec::new();
    let points_path = opts.out_dir.join("points.csv");
    write_file(&points_path, &write_points_csv(&points))?;
    files.push(points_path);

    if spec.run.write_trajectories {
        let path = opts.out_dir.join("trajectories.csv");
        let mut text = String::from(
            "model,boundary,L,p,q,t_noise,depth,trajectory_index,I,EN,SA,SB,SAB,\
purity_exp,stream\n",
        );
        for row in &traj_rows {
            text.push_str(row);
            text.push('\n');
        }
        write_file(&path, &text)?;
        files.push(path);
    }

    if let Some(analysis) = &spec.analysis {
        if !analysis.fit_models.is_empty() {
            let path = opts.out_dir.join("fits.csv");
            write_file(&path, &fits_csv(&points, analysis)?)?;
            files.push(path);
        }
        if let (Some(qc), Some(nu)) = (analysis.qc_range, analysis.nu_range) {
            let observable = parse_observable(
                analysis.observable.as_deref().unwrap_or("en"),
            )?;
            let cpoints: Vec<CollapsePoint> = points
                .iter()
                .map(|pt| CollapsePoint { l: pt.l, q: pt.q, value: observable.mean_of(pt) })
                .collect();
            let res = data_collapse(&cpoints, (qc[0], qc[1]), (nu[0], nu[1]))?;
            let path = opts.out_dir.join("collapse.csv");
            let text = format!(
                "observable,q_c,nu,cost,n_sizes,n_points\n{},{:.16e},{:.16e},{:.16e},{},{}\n",
                observable.label(),
                res.q_c,
                res.nu,
                res.cost,
                cpoints.iter().map(|p| p.l).collect::<std::collections::BTreeSet<_>>().len(),
                cpoints.len(),
            );
            write_file(&path, &text)?;
            files.push(path);
        }
    }

    // Plots: observables vs q (log-log, with the -1/3 guide) and vs L.
    let path = opts.out_dir.join("s_vs_q.svg");
    write_file(&path, &plot_vs_q(&points))?;
    files.push(path);
    let path = opts.out_dir.join("s_vs_l.svg");
    write_file(&path, &plot_vs_l(&points))?;
    files.push(path);

    Ok(RunSummary { points, files })
}

/// Key identifying a fit group: everything but `q`.
fn group_key(pt: &EnsemblePoint) -> (String, String, usize, String, usize, usize) {
    (
        pt.model.to_string(),
        pt.boundary.to_string(),
        pt.l,
        format!("{:.16e}", pt.p),
        pt.t_noise,
        pt.depth,
    )
}

fn fits_csv(
    points: &[EnsemblePoint],
    analysis: &AnalysisSection,
) -> Result<String, ExperimentError> {
    let mut groups: BTreeMap<(String, String, usize, String, usize, usize), Vec<&EnsemblePoint>> =
        BTreeMap::new();
    for pt in points {
        groups.entry(group_key(pt)).or_default().push(pt);
    }
    let mut out = String::from(
        "model,boundary,L,p,t_noise,depth,observable,fit_model,q_max,a,b,exponent,rss,\
n_points\n",
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
            for name in &analysis.fit_models {
                let model_tag = parse_fit_model(name)?;
                let fit = fit_scaling(&qpoints, model_tag, analysis.q_max)?;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{:.16e},{:.16e},{:.16e},{},{:.16e},{}\n",
                    model,
                    boundary,
                    l,
                    p,
                    t_noise,
                    depth,
                    observable.label(),
                    fit.model,
                    fit.q_max,
                    fit.a,
                    fit.b,
                    fit.exponent.map(|e| format!("{e:.16e}")).unwrap_or_default(),
                    fit.rss,
                    fit.n_used,
                ));
            }
        }
    }
    Ok(out)
}

fn plot_vs_q(points: &[EnsemblePoint]) -> String {
    let mut groups: BTreeMap<(String, String, usize, String, usize, usize), Vec<&EnsemblePoint>> =
        BTreeMap::new();
    for pt in points {
        groups.entry(group_key(pt)).or_default().push(pt);
    }
    let mut series = Vec::new();
    for ((model, boundary, l, _, t_noise, _), pts) in &groups {
        let tag = format!("{model} {boundary} L={l} tn={t_noise}");
        series.push(Series {
            name: format!("I {tag}"),
            points: pts.iter().map(|pt| (pt.q, pt.i_mean)).collect(),
        });
        series.push(Series {
            name: format!("EN {tag}"),
            points: pts.iter().map(|pt| (pt.q, pt.en_mean)).collect(),
        });
    }
    loglog_plot(
        "entanglement vs reset rate",
        "q",
        "bits",
        &series,
        Some(-1.0 / 3.0),
    )
}

fn plot_vs_l(points: &[EnsemblePoint]) -> String {
    // Group by everything but L.
    let mut groups: BTreeMap<(String, String, String, String, usize), Vec<&EnsemblePoint>> =
        BTreeMap::new();
    for pt in points {
        groups
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
    let mut series = Vec::new();
    for ((model, boundary, _, _, t_noise), pts) in &groups {
        series.push(Series {
            name: format!("I {model} {boundary} q={} tn={t_noise}", tick(pts[0].q)),
            points: pts.iter().map(|pt| (pt.l as f64, pt.i_mean)).collect(),
        });
    }
    linear_plot("mutual information vs size", "L", "I (bits)", &series)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
