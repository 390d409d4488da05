//! Ensemble statistics and scaling analysis.
//!
//! This module is pure arithmetic: aggregation of trajectory records into
//! [`EnsemblePoint`]s (with the CSV schema used by the CLI), thermodynamic
//! `1/L` extrapolation, the three `S(q)` fit models, and the finite-size
//! data collapse estimating `(q_c, nu)`. Everything is deterministic: the
//! same inputs produce bit-identical outputs, independent of thread count,
//! because records are folded in trajectory-index order and all searches
//! are fixed grids plus golden-section refinement.

use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::circuit::{Boundary, NoiseModel, TrajectoryRecord};

/// Fit window default: points with `q` above this are excluded unless the
/// caller overrides the window (the large-`q` regime departs from the
/// scaling form).
pub const DEFAULT_FIT_WINDOW: f64 = 0.125;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no records to aggregate")]
    NoRecords,
    #[error("records mix different configurations")]
    MixedConfigs,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("need at least {need} distinct {what} values, got {got}")]
    TooFewDistinct { what: &'static str, need: usize, got: usize },
    #[error("q = {q} is not positive")]
    NonPositiveQ { q: f64 },
    #[error("no points inside the fit window q <= {q_max}")]
    EmptyWindow { q_max: f64 },
    #[error("system size {l} has {got} distinct q values, need {need}")]
    TooFewQPerSize { l: usize, need: usize, got: usize },
    #[error("duplicate q = {q} for system size {l}")]
    DuplicateQ { l: usize, q: f64 },
    #[error("search range [{lo}, {hi}] is invalid or outside the data support")]
    BadRange { lo: f64, hi: f64 },
    #[error("csv line {line}: {why}")]
    Csv { line: usize, why: String },
}

// ---------------------------------------------------------------------------
// Ensemble aggregation and the points.csv schema
// ---------------------------------------------------------------------------

/// Aggregated statistics of one sweep cell, i.e. one row of `points.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePoint {
    pub model: NoiseModel,
    pub boundary: Boundary,
    pub l: usize,
    pub p: f64,
    pub q: f64,
    pub t_noise: usize,
    pub depth: usize,
    pub n_traj: usize,
    pub i_mean: f64,
    pub i_stderr: f64,
    pub en_mean: f64,
    pub en_stderr: f64,
    pub sa_mean: f64,
    pub sab_mean: f64,
    pub purity_exp_mean: f64,
}

pub const POINTS_HEADER: &str = "model,boundary,L,p,q,t_noise,depth,n_traj,I_mean,\
I_stderr,EN_mean,EN_stderr,SA_mean,SAB_mean,purity_exp_mean";

/// 17 significant digits: enough to round-trip any f64 exactly.
fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// Fold trajectory records (one sweep cell) into an [`EnsemblePoint`].
/// Records are sorted by trajectory index first, so the floating-point fold
/// is identical no matter the order workers finished in.
pub fn aggregate(records: &[TrajectoryRecord]) -> Result<EnsemblePoint, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::NoRecords);
    }
    let mut sorted: Vec<&TrajectoryRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.config.trajectory_index);
    let head = &sorted[0].config;
    for r in &sorted {
        let mut c = r.config.clone();
        c.trajectory_index = head.trajectory_index;
        if &c != head {
            return Err(AnalysisError::MixedConfigs);
        }
    }
    let collect = |f: fn(&TrajectoryRecord) -> f64| -> Vec<f64> {
        sorted.iter().map(|r| f(r)).collect()
    };
    let (i_mean, i_stderr) = mean_and_stderr(&collect(|r| r.report.mutual_information as f64));
    let (en_mean, en_stderr) = mean_and_stderr(&collect(|r| r.report.log_negativity));
    let (sa_mean, _) = mean_and_stderr(&collect(|r| r.report.s_a as f64));
    let (sab_mean, _) = mean_and_stderr(&collect(|r| r.report.s_ab as f64));
    let (purity_exp_mean, _) = mean_and_stderr(&collect(|r| r.report.purity_exponent as f64));
    Ok(EnsemblePoint {
        model: head.model,
        boundary: head.boundary,
        l: head.n_qubits,
        p: head.measure_rate,
        q: head.reset_rate,
        t_noise: head.t_noise,
        depth: head.depth,
        n_traj: sorted.len(),
        i_mean,
        i_stderr,
        en_mean,
        en_stderr,
        sa_mean,
        sab_mean,
        purity_exp_mean,
    })
}

impl EnsemblePoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.boundary,
            self.l,
            fmt_float(self.p),
            fmt_float(self.q),
            self.t_noise,
            self.depth,
            self.n_traj,
            fmt_float(self.i_mean),
            fmt_float(self.i_stderr),
            fmt_float(self.en_mean),
            fmt_float(self.en_stderr),
            fmt_float(self.sa_mean),
            fmt_float(self.sab_mean),
            fmt_float(self.purity_exp_mean),
        )
    }

    pub fn from_csv_row(line: &str, lineno: usize) -> Result<Self, AnalysisError> {
        let err = |why: String| AnalysisError::Csv { line: lineno, why };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(err(format!("expected 15 fields, got {}", fields.len())));
        }
        fn int(s: &str, name: &str, lineno: usize) -> Result<usize, AnalysisError> {
            s.parse().map_err(|_| AnalysisError::Csv {
                line: lineno,
                why: format!("bad integer {name}: {s:?}"),
            })
        }
        fn float(s: &str, name: &str, lineno: usize) -> Result<f64, AnalysisError> {
            s.parse().map_err(|_| AnalysisError::Csv {
                line: lineno,
                why: format!("bad float {name}: {s:?}"),
            })
        }
        Ok(EnsemblePoint {
            model: fields[0].parse().map_err(|e| err(format!("{e}")))?,
            boundary: fields[1].parse().map_err(|e| err(format!("{e}")))?,
            l: int(fields[2], "L", lineno)?,
            p: float(fields[3], "p", lineno)?,
            q: float(fields[4], "q", lineno)?,
            t_noise: int(fields[5], "t_noise", lineno)?,
            depth: int(fields[6], "depth", lineno)?,
            n_traj: int(fields[7], "n_traj", lineno)?,
            i_mean: float(fields[8], "I_mean", lineno)?,
            i_stderr: float(fields[9], "I_stderr", lineno)?,
            en_mean: float(fields[10], "EN_mean", lineno)?,
            en_stderr: float(fields[11], "EN_stderr", lineno)?,
            sa_mean: float(fields[12], "SA_mean", lineno)?,
            sab_mean: float(fields[13], "SAB_mean", lineno)?,
            purity_exp_mean: float(fields[14], "purity_exp_mean", lineno)?,
        })
    }
}

pub fn write_points_csv(points: &[EnsemblePoint]) -> String {
    let mut out = String::from(POINTS_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&p.csv_row());
        out.push('\n');
    }
    out
}

pub fn read_points_csv(text: &str) -> Result<Vec<EnsemblePoint>, AnalysisError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, head)) if head == POINTS_HEADER => {}
        Some((_, head)) => {
            return Err(AnalysisError::Csv {
                line: 1,
                why: format!("bad header {head:?}"),
            })
        }
        None => return Err(AnalysisError::Csv { line: 1, why: "empty file".into() }),
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        points.push(EnsemblePoint::from_csv_row(line, idx + 1)?);
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Thermodynamic extrapolation
// ---------------------------------------------------------------------------

/// One observable value at one system size; `stderr = 0` marks an
/// unweighted point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermoPoint {
    pub l: usize,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermoFit {
    pub s_inf: f64,
    pub c: f64,
    pub s_inf_stderr: f64,
    pub c_stderr: f64,
    pub rss: f64,
}

/// Weighted least squares of `S(L) = c / L + S_inf`. Weights are
/// `1/stderr^2` when every point carries a positive stderr, otherwise the
/// fit is unweighted and uncertainties are scaled by the residual variance.
pub fn extrapolate_thermo(points: &[ThermoPoint]) -> Result<ThermoFit, AnalysisError> {
    let mut ls: Vec<usize> = points.iter().map(|p| p.l).collect();
    ls.sort_unstable();
    ls.dedup();
    if ls.len() < 2 {
        return Err(AnalysisError::TooFewDistinct { what: "L", need: 2, got: ls.len() });
    }
    let weighted = points.iter().all(|p| p.stderr > 0.0);
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let w = if weighted { 1.0 / (p.stderr * p.stderr) } else { 1.0 };
        let x = 1.0 / p.l as f64;
        sw += w;
        sx += w * x;
        sy += w * p.value;
        sxx += w * x * x;
        sxy += w * x * p.value;
    }
    let delta = sw * sxx - sx * sx;
    let s_inf = (sxx * sy - sx * sxy) / delta;
    let c = (sw * sxy - sx * sy) / delta;
    let rss: f64 = points
        .iter()
        .map(|p| {
            let w = if weighted { 1.0 / (p.stderr * p.stderr) } else { 1.0 };
            let r = p.value - (s_inf + c / p.l as f64);
            w * r * r
        })
        .sum();
    // Parameter variances: exact for weighted input; scaled by the residual
    // variance (zero when the fit is exact or n = 2) otherwise.
    let scale = if weighted {
        1.0
    } else if points.len() > 2 {
        rss / (points.len() as f64 - 2.0)
    } else {
        0.0
    };
    Ok(ThermoFit {
        s_inf,
        c,
        s_inf_stderr: (scale * sxx / delta).max(0.0).sqrt(),
        c_stderr: (scale * sw / delta).max(0.0).sqrt(),
        rss,
    })
}

// ---------------------------------------------------------------------------
// S(q) scaling fits
// ---------------------------------------------------------------------------

/// One observable value at one noise rate; `stderr = 0` marks an unweighted
/// point (a single zero stderr switches the whole fit to unweighted).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QPoint {
    pub q: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// `S = a q^(-1/3) + b` — the KPZ prediction, linear in (a, b).
    PowerFixedThird,
    /// `S = a q^e + b` with the exponent `e` free (profiled nonlinear LS).
    PowerFree,
    /// `S = a ln(q) + b`.
    LogLinear,
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitModel::PowerFixedThird => "pow13",
            FitModel::PowerFree => "powfree",
            FitModel::LogLinear => "log",
        })
    }
}

impl std::str::FromStr for FitModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pow13" => Ok(FitModel::PowerFixedThird),
            "powfree" => Ok(FitModel::PowerFree),
            "log" => Ok(FitModel::LogLinear),
            _ => Err(format!("unknown fit model {s:?} (want pow13, powfree, or log)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub a: f64,
    pub b: f64,
    /// Signed exponent of `q` (about `-1/3` in the scaling regime); present
    /// only for [`FitModel::PowerFree`].
    pub exponent: Option<f64>,
    /// Weighted residual sum of squares over the fit window.
    pub rss: f64,
    /// Raw residuals `value - prediction`, in windowed input order.
    pub residuals: Vec<f64>,
    pub n_used: usize,
    pub q_max: f64,
}

/// Linear least squares of `y = a f + b` with weights; returns
/// `(a, b, rss)`.
fn linear_two_param(f: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let (mut sw, mut sf, mut sy, mut sff, mut sfy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..f.len() {
        sw += w[i];
        sf += w[i] * f[i];
        sy += w[i] * y[i];
        sff += w[i] * f[i] * f[i];
        sfy += w[i] * f[i] * y[i];
    }
    let delta = sw * sff - sf * sf;
    let a = (sw * sfy - sf * sy) / delta;
    let b = (sff * sy - sf * sfy) / delta;
    let rss = (0..f.len())
        .map(|i| {
            let r = y[i] - a * f[i] - b;
            w[i] * r * r
        })
        .sum();
    (a, b, rss)
}

/// RSS of `S = a q^(-e_mag) + b` with (a, b) profiled out at fixed
/// exponent magnitude.
fn profiled_rss(q: &[f64], y: &[f64], w: &[f64], e_mag: f64) -> (f64, f64, f64) {
    let f: Vec<f64> = q.iter().map(|&qi| qi.powf(-e_mag)).collect();
    let (a, b, rss) = linear_two_param(&f, y, w);
    (rss, a, b)
}

/// Fit the `q` dependence of an observable over the window `q <= q_max`
/// (default [`DEFAULT_FIT_WINDOW`]).
pub fn fit_scaling(
    points: &[QPoint],
    model: FitModel,
    q_max: Option<f64>,
) -> Result<FitResult, AnalysisError> {
    let q_max = q_max.unwrap_or(DEFAULT_FIT_WINDOW);
    for p in points {
        if p.q <= 0.0 {
            return Err(AnalysisError::NonPositiveQ { q: p.q });
        }
    }
    let win: Vec<&QPoint> = points.iter().filter(|p| p.q <= q_max).collect();
    if win.is_empty() {
        return Err(AnalysisError::EmptyWindow { q_max });
    }
    let need = if model == FitModel::PowerFree { 4 } else { 3 };
    if win.len() < need {
        return Err(AnalysisError::TooFewPoints { need, got: win.len() });
    }
    let mut qs: Vec<f64> = win.iter().map(|p| p.q).collect();
    let distinct = {
        let mut s = qs.clone();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s.len()
    };
    let need_distinct = if model == FitModel::PowerFree { 3 } else { 2 };
    if distinct < need_distinct {
        return Err(AnalysisError::TooFewDistinct {
            what: "q",
            need: need_distinct,
            got: distinct,
        });
    }
    let y: Vec<f64> = win.iter().map(|p| p.value).collect();
    let weighted = win.iter().all(|p| p.stderr > 0.0);
    let w: Vec<f64> = win
        .iter()
        .map(|p| if weighted { 1.0 / (p.stderr * p.stderr) } else { 1.0 })
        .collect();
    qs.shrink_to_fit();

    let (a, b, exponent, rss) = match model {
        FitModel::PowerFixedThird => {
            let f: Vec<f64> = qs.iter().map(|&q| q.powf(-1.0 / 3.0)).collect();
            let (a, b, rss) = linear_two_param(&f, &y, &w);
            (a, b, None, rss)
        }
        FitModel::LogLinear => {
            let f: Vec<f64> = qs.iter().map(|&q| q.ln()).collect();
            let (a, b, rss) = linear_two_param(&f, &y, &w);
            (a, b, None, rss)
        }
        FitModel::PowerFree => {
            // Grid over the exponent magnitude, then golden-section on the
            // profiled RSS inside the bracketing interval.
            const LO: f64 = 0.1;
            const HI: f64 = 0.6;
            const GRID: usize = 51;
            let at = |k: usize| LO + (HI - LO) * k as f64 / (GRID - 1) as f64;
            let mut best_k = 0;
            let mut best = f64::INFINITY;
            for k in 0..GRID {
                let (rss, _, _) = profiled_rss(&qs, &y, &w, at(k));
                if rss < best {
                    best = rss;
                    best_k = k;
                }
            }
            let mut lo = at(best_k.saturating_sub(1));
            let mut hi = at((best_k + 1).min(GRID - 1));
            let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
            let mut m1 = hi - phi * (hi - lo);
            let mut m2 = lo + phi * (hi - lo);
            let mut r1 = profiled_rss(&qs, &y, &w, m1).0;
            let mut r2 = profiled_rss(&qs, &y, &w, m2).0;
            for _ in 0..200 {
                if hi - lo < 1e-12 {
                    break;
                }
                if r1 <= r2 {
                    hi = m2;
                    m2 = m1;
                    r2 = r1;
                    m1 = hi - phi * (hi - lo);
                    r1 = profiled_rss(&qs, &y, &w, m1).0;
                } else {
                    lo = m1;
                    m1 = m2;
                    r1 = r2;
                    m2 = lo + phi * (hi - lo);
                    r2 = profiled_rss(&qs, &y, &w, m2).0;
                }
            }
            let e_mag = 0.5 * (lo + hi);
            let (rss, a, b) = profiled_rss(&qs, &y, &w, e_mag);
            (a, b, Some(-e_mag), rss)
        }
    };
    let predict = |q: f64| -> f64 {
        match model {
            FitModel::PowerFixedThird => a * q.powf(-1.0 / 3.0) + b,
            FitModel::LogLinear => a * q.ln() + b,
            FitModel::PowerFree => a * q.powf(exponent.unwrap()) + b,
        }
    };
    let residuals: Vec<f64> = win.iter().map(|p| p.value - predict(p.q)).collect();
    Ok(FitResult { model, a, b, exponent, rss, residuals, n_used: win.len(), q_max })
}

// ---------------------------------------------------------------------------
// Finite-size data collapse
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapsePoint {
    pub l: usize,
    pub q: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseResult {
    pub q_c: f64,
    pub nu: f64,
    /// Minimized collapse cost: mean squared deviation of the rescaled
    /// points from the pooled smoothing spline.
    pub cost: f64,
    /// Every `(q_c, nu, cost)` evaluation, in search order.
    pub trace: Vec<(f64, f64, f64)>,
}

/// Monotone cubic (Fritsch-Carlson) interpolant through `(xs, ys)`.
struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl Pchip {
    fn new(xs: Vec<f64>, ys: Vec<f64>) -> Pchip {
        let n = xs.len();
        debug_assert!(n >= 2);
        let h: Vec<f64> = (0..n - 1).map(|i| xs[i + 1] - xs[i]).collect();
        let d: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ms = vec![0.0; n];
        for i in 1..n - 1 {
            if d[i - 1] * d[i] <= 0.0 {
                ms[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                ms[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        ms[0] = endpoint_slope(h[0], h.get(1).copied().unwrap_or(h[0]), d[0], d.get(1).copied().unwrap_or(d[0]));
        ms[n - 1] = endpoint_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            d[n - 2],
            if n >= 3 { d[n - 3] } else { d[n - 2] },
        );
        Pchip { xs, ys, ms }
    }

    /// Cubic Hermite evaluation; `x` must lie inside the knot range.
    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        debug_assert!(x >= self.xs[0] && x <= self.xs[n - 1]);
        let mut k = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        k = k.min(n - 2);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[k]
            + (t3 - 2.0 * t2 + t) * h * self.ms[k]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[k + 1]
            + (t3 - t2) * h * self.ms[k + 1]
    }
}

/// One-sided three-point slope estimate with the Fritsch-Carlson clamps
/// that keep the interpolant monotone.
fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Cubic B-spline basis row (clamped uniform knots) at `x`.
fn bspline_row(knots: &[f64], nbasis: usize, x: f64) -> Vec<f64> {
    const DEG: usize = 3;
    let t_end = *knots.last().unwrap();
    let n0 = knots.len() - 1;
    let mut n = vec![0.0_f64; n0];
    for i in 0..n0 {
        let in_half_open = knots[i] <= x && x < knots[i + 1];
        let at_end = x == t_end && knots[i] < knots[i + 1] && knots[i + 1] == t_end;
        n[i] = if in_half_open || at_end { 1.0 } else { 0.0 };
    }
    for d in 1..=DEG {
        for i in 0..n0 - d {
            let left = {
                let den = knots[i + d] - knots[i];
                if den > 0.0 { (x - knots[i]) / den * n[i] } else { 0.0 }
            };
            let right = {
                let den = knots[i + d + 1] - knots[i + 1];
                if den > 0.0 { (knots[i + d + 1] - x) / den * n[i + 1] } else { 0.0 }
            };
            n[i] = left + right;
        }
    }
    n.truncate(nbasis);
    n
}

/// Mean squared deviation of the point cloud from a least-squares cubic
/// B-spline with 8 uniform interior knots (tiny ridge for stability).
fn pooled_spline_cost(xs: &[f64], ys: &[f64]) -> f64 {
    const INTERIOR: usize = 8;
    const NBASIS: usize = INTERIOR + 4;
    let npts = xs.len();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in xs {
        x0 = x0.min(x);
        x1 = x1.max(x);
    }
    if x1 - x0 < 1e-12 {
        let mean = ys.iter().sum::<f64>() / npts as f64;
        return ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / npts as f64;
    }
    let mut knots = vec![x0; 4];
    for k in 1..=INTERIOR {
        knots.push(x0 + (x1 - x0) * k as f64 / (INTERIOR + 1) as f64);
    }
    knots.extend([x1; 4]);
    let mut design = DMatrix::<f64>::zeros(npts, NBASIS);
    for (r, &x) in xs.iter().enumerate() {
        for (c, v) in bspline_row(&knots, NBASIS, x).into_iter().enumerate() {
            design[(r, c)] = v;
        }
    }
    let mut normal = design.transpose() * &design;
    let ridge = 1e-9 * (normal.trace() / NBASIS as f64 + 1.0);
    for k in 0..NBASIS {
        normal[(k, k)] += ridge;
    }
    let rhs = design.transpose() * DMatrix::from_column_slice(npts, 1, ys);
    let beta = normal
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| normal.lu().solve(&rhs).expect("ridge keeps the system regular"));
    let fitted = design * beta;
    (0..npts).map(|i| (ys[i] - fitted[(i, 0)]).powi(2)).sum::<f64>() / npts as f64
}

/// Estimate `(q_c, nu)` by collapsing `g(q, L)` onto a single scaling curve:
/// minimize the pooled-spline cost of `(x, y) = ((q - q_c) L^(1/nu),
/// g(q, L) - g(q_c, L))` over a 21x21 grid with three zoom-in passes.
/// `g(q_c, L)` comes from per-size monotone cubic interpolation, so every
/// candidate `q_c` must lie inside each size's sampled `q` range.
pub fn data_collapse(
    points: &[CollapsePoint],
    qc_range: (f64, f64),
    nu_range: (f64, f64),
) -> Result<CollapseResult, AnalysisError> {
    // Group by system size, sorted so iteration order is deterministic.
    let mut sizes: Vec<usize> = points.iter().map(|p| p.l).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(AnalysisError::TooFewDistinct { what: "L", need: 3, got: sizes.len() });
    }
    let mut groups: Vec<(usize, Pchip, Vec<(f64, f64)>)> = Vec::new();
    for &l in &sizes {
        let mut qv: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.l == l)
            .map(|p| (p.q, p.value))
            .collect();
        qv.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in qv.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(AnalysisError::DuplicateQ { l, q: pair[0].0 });
            }
        }
        if qv.len() < 5 {
            return Err(AnalysisError::TooFewQPerSize { l, need: 5, got: qv.len() });
        }
        let xs: Vec<f64> = qv.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = qv.iter().map(|p| p.1).collect();
        groups.push((l, Pchip::new(xs, ys), qv));
    }
    let (qc_lo0, qc_hi0) = qc_range;
    let (nu_lo0, nu_hi0) = nu_range;
    if !(qc_lo0 < qc_hi0) || !(nu_lo0 < nu_hi0) || nu_lo0 <= 0.0 {
        return Err(AnalysisError::BadRange {
            lo: qc_lo0.min(nu_lo0),
            hi: qc_hi0.max(nu_hi0),
        });
    }
    // Interpolation support: every size must cover the whole q_c range.
    for (_, _, qv) in &groups {
        if qc_lo0 < qv[0].0 || qc_hi0 > qv[qv.len() - 1].0 {
            return Err(AnalysisError::BadRange { lo: qc_lo0, hi: qc_hi0 });
        }
    }

    let cost_at = |q_c: f64, nu: f64| -> f64 {
        let mut xs = Vec::with_capacity(points.len());
        let mut ys = Vec::with_capacity(points.len());
        for (l, interp, qv) in &groups {
            let g_c = interp.eval(q_c);
            let scale = (*l as f64).powf(1.0 / nu);
            for &(q, g) in qv {
                xs.push((q - q_c) * scale);
                ys.push(g - g_c);
            }
        }
        pooled_spline_cost(&xs, &ys)
    };

    const GRID: usize = 21;
    const PASSES: usize = 4;
    let mut trace = Vec::with_capacity(GRID * GRID * PASSES);
    let (mut qc_lo, mut qc_hi) = (qc_lo0, qc_hi0);
    let (mut nu_lo, mut nu_hi) = (nu_lo0, nu_hi0);
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY);
    for _pass in 0..PASSES {
        for i in 0..GRID {
            let q_c = qc_lo + (qc_hi - qc_lo) * i as f64 / (GRID - 1) as f64;
            for j in 0..GRID {
                let nu = nu_lo + (nu_hi - nu_lo) * j as f64 / (GRID - 1) as f64;
                let cost = cost_at(q_c, nu);
                trace.push((q_c, nu, cost));
                if cost < best.2 {
                    best = (q_c, nu, cost);
                }
            }
        }
        // Zoom to +-2 grid cells around the incumbent, clamped to the
        // original ranges.
        let wq = (qc_hi - qc_lo) / 5.0;
        let wn = (nu_hi - nu_lo) / 5.0;
        qc_lo = (best.0 - wq / 2.0).max(qc_lo0);
        qc_hi = (best.0 + wq / 2.0).min(qc_hi0);
        nu_lo = (best.1 - wn / 2.0).max(nu_lo0);
        nu_hi = (best.1 + wn / 2.0).min(nu_hi0);
    }
    Ok(CollapseResult { q_c: best.0, nu: best.1, cost: best.2, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitConfig;
    use crate::entanglement::EntanglementReport;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(i: u32, en: f64, index: u64) -> TrajectoryRecord {
        let config = CircuitConfig {
            model: NoiseModel::BulkNoise,
            n_qubits: 8,
            measure_rate: 0.1,
            reset_rate: 0.05,
            t_noise: 0,
            boundary: Boundary::Pbc,
            depth: 64,
            master_seed: 7,
            trajectory_index: index,
        };
        TrajectoryRecord {
            stream: config.stream_id(),
            report: EntanglementReport {
                s_a: i,
                s_b: i,
                s_ab: 0,
                mutual_information: i,
                log_negativity: en,
                purity_exponent: -1,
            },
            wall_time_s: 0.0,
            config,
        }
    }

    #[test]
    fn aggregate_mean_and_stderr() {
        let identical = vec![record(3, 1.5, 0), record(3, 1.5, 1), record(3, 1.5, 2)];
        let pt = aggregate(&identical).unwrap();
        assert_eq!(pt.i_mean, 3.0);
        assert_eq!(pt.i_stderr, 0.0);
        assert_eq!(pt.en_mean, 1.5);
        assert_eq!(pt.en_stderr, 0.0);
        assert_eq!(pt.n_traj, 3);
        assert_eq!(pt.purity_exp_mean, -1.0);

        // Two-sample formula: values {0, 2} -> mean 1, stderr 1.
        let two = vec![record(0, 0.0, 0), record(2, 2.0, 1)];
        let pt = aggregate(&two).unwrap();
        assert_eq!(pt.i_mean, 1.0);
        assert_eq!(pt.i_stderr, 1.0);
        assert_eq!(pt.en_stderr, 1.0);
    }

    #[test]
    fn aggregate_is_order_independent() {
        let fwd: Vec<TrajectoryRecord> = (0..9).map(|k| record(k as u32, 0.5 * k as f64, k)).collect();
        let mut rev = fwd.clone();
        rev.reverse();
        assert_eq!(aggregate(&fwd).unwrap(), aggregate(&rev).unwrap());
    }

    #[test]
    fn aggregate_rejects_bad_input() {
        assert_eq!(aggregate(&[]).unwrap_err(), AnalysisError::NoRecords);
        let mut other = record(1, 0.0, 1);
        other.config.reset_rate = 0.9;
        let mixed = vec![record(1, 0.0, 0), other];
        assert_eq!(aggregate(&mixed).unwrap_err(), AnalysisError::MixedConfigs);
    }

    #[test]
    fn aggregate_stderr_matches_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records: Vec<TrajectoryRecord> = (0..10_000)
            .map(|k| {
                let hit = rng.random::<f64>() < 0.3;
                record(if hit { 1 } else { 0 }, 0.0, k)
            })
            .collect();
        let pt = aggregate(&records).unwrap();
        let analytic = (0.3_f64 * 0.7 / 10_000.0).sqrt();
        assert!(
            (pt.i_stderr - analytic).abs() / analytic < 0.1,
            "stderr {} vs analytic {analytic}",
            pt.i_stderr
        );
    }

    #[test]
    fn points_csv_round_trips_exactly() {
        let records = vec![record(3, 1.25, 0), record(5, 0.75, 1)];
        let a = aggregate(&records).unwrap();
        let mut b = a.clone();
        b.q = 1.0 / 3.0; // awkward float on purpose
        b.en_mean = std::f64::consts::PI;
        let text = write_points_csv(&[a.clone(), b.clone()]);
        let back = read_points_csv(&text).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn points_csv_rejects_garbage() {
        assert!(matches!(
            read_points_csv("nope\n1,2,3"),
            Err(AnalysisError::Csv { line: 1, .. })
        ));
        let mut text = String::from(POINTS_HEADER);
        text.push_str("\nbulk_noise,pbc,8,x,0,0,64,1,0,0,0,0,0,0,0\n");
        assert!(matches!(read_points_csv(&text), Err(AnalysisError::Csv { line: 2, .. })));
    }

    #[test]
    fn thermo_extrapolation_is_exact_on_linear_data() {
        let points: Vec<ThermoPoint> = [32, 64, 128]
            .iter()
            .map(|&l| ThermoPoint { l, value: 3.0 + 5.0 / l as f64, stderr: 0.0 })
            .collect();
        let fit = extrapolate_thermo(&points).unwrap();
        assert!((fit.s_inf - 3.0).abs() < 1e-9, "s_inf {}", fit.s_inf);
        assert!((fit.c - 5.0).abs() < 1e-9, "c {}", fit.c);
        assert!(fit.rss < 1e-18);

        let flat: Vec<ThermoPoint> = [16, 32, 64]
            .iter()
            .map(|&l| ThermoPoint { l, value: 2.0, stderr: 0.0 })
            .collect();
        let fit = extrapolate_thermo(&flat).unwrap();
        assert!((fit.s_inf - 2.0).abs() < 1e-12);
        assert!(fit.c.abs() < 1e-9);
    }

    #[test]
    fn thermo_extrapolation_noisy_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut gauss = move || {
            // Box-Muller from two uniforms.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let sigma = 0.01;
        let points: Vec<ThermoPoint> = [16usize, 24, 32, 48, 64, 96, 128]
            .iter()
            .map(|&l| ThermoPoint {
                l,
                value: 3.0 + 5.0 / l as f64 + sigma * gauss(),
                stderr: sigma,
            })
            .collect();
        let fit = extrapolate_thermo(&points).unwrap();
        assert!(
            (fit.s_inf - 3.0).abs() <= 3.0 * fit.s_inf_stderr,
            "s_inf {} +- {}",
            fit.s_inf,
            fit.s_inf_stderr
        );
    }

    #[test]
    fn thermo_needs_two_sizes() {
        let one = vec![
            ThermoPoint { l: 32, value: 1.0, stderr: 0.0 },
            ThermoPoint { l: 32, value: 1.1, stderr: 0.0 },
        ];
        assert_eq!(
            extrapolate_thermo(&one).unwrap_err(),
            AnalysisError::TooFewDistinct { what: "L", need: 2, got: 1 }
        );
    }

    fn power_third_points() -> Vec<QPoint> {
        [1.0 / 256.0, 1.0 / 128.0, 1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0]
            .iter()
            .map(|&q| QPoint { q, value: 2.0 * q.powf(-1.0 / 3.0), stderr: 0.0 })
            .collect()
    }

    #[test]
    fn power_fixed_third_is_exact_on_its_own_model() {
        let fit = fit_scaling(&power_third_points(), FitModel::PowerFixedThird, Some(0.25))
            .unwrap();
        assert!((fit.a - 2.0).abs() < 1e-9, "a = {}", fit.a);
        assert!(fit.b.abs() < 1e-9, "b = {}", fit.b);
        assert!(fit.rss < 1e-12);
        assert_eq!(fit.n_used, 7);
        assert_eq!(fit.exponent, None);
    }

    #[test]
    fn power_free_recovers_the_third() {
        let fit = fit_scaling(&power_third_points(), FitModel::PowerFree, Some(0.25)).unwrap();
        let e = fit.exponent.unwrap();
        assert!((e + 1.0 / 3.0).abs() < 1e-6, "exponent {e}");
        assert!((fit.a - 2.0).abs() < 1e-4, "a = {}", fit.a);
    }

    #[test]
    fn profiled_rss_at_third_matches_fixed_model() {
        let pts = power_third_points();
        let fixed = fit_scaling(&pts, FitModel::PowerFixedThird, Some(0.25)).unwrap();
        let win: Vec<&QPoint> = pts.iter().filter(|p| p.q <= 0.25).collect();
        let qs: Vec<f64> = win.iter().map(|p| p.q).collect();
        let ys: Vec<f64> = win.iter().map(|p| p.value).collect();
        let ws = vec![1.0; win.len()];
        let (rss, _, _) = profiled_rss(&qs, &ys, &ws, 1.0 / 3.0);
        assert!((rss - fixed.rss).abs() < 1e-9, "{rss} vs {}", fixed.rss);
    }

    #[test]
    fn log_linear_is_exact_on_its_own_model() {
        let pts: Vec<QPoint> = [0.004, 0.01, 0.02, 0.05, 0.1]
            .iter()
            .map(|&q: &f64| QPoint { q, value: -0.7 * q.ln() + 0.3, stderr: 0.0 })
            .collect();
        let fit = fit_scaling(&pts, FitModel::LogLinear, None).unwrap();
        assert!((fit.a + 0.7).abs() < 1e-9);
        assert!((fit.b - 0.3).abs() < 1e-9);
        assert!(fit.rss < 1e-18);
    }

    #[test]
    fn power_law_data_prefers_the_power_model() {
        let pts = power_third_points();
        let pow = fit_scaling(&pts, FitModel::PowerFixedThird, Some(0.25)).unwrap();
        let log = fit_scaling(&pts, FitModel::LogLinear, Some(0.25)).unwrap();
        assert!(
            pow.rss < log.rss,
            "power rss {} should beat log rss {}",
            pow.rss,
            log.rss
        );
    }

    #[test]
    fn residuals_are_consistent_with_rss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<QPoint> = (1..10)
            .map(|k| QPoint {
                q: k as f64 / 100.0,
                value: 1.7 * ((k as f64 / 100.0) as f64).powf(-1.0 / 3.0)
                    + 0.2
                    + 0.05 * rng.random::<f64>(),
                stderr: 0.03,
            })
            .collect();
        for model in [FitModel::PowerFixedThird, FitModel::PowerFree, FitModel::LogLinear] {
            let fit = fit_scaling(&pts, model, None).unwrap();
            let w = 1.0 / (0.03_f64 * 0.03);
            let recomputed: f64 = fit.residuals.iter().map(|r| w * r * r).sum();
            assert!(
                (recomputed - fit.rss).abs() < 1e-12 * (1.0 + fit.rss),
                "{model:?}: {recomputed} vs {}",
                fit.rss
            );
        }
    }

    #[test]
    fn fit_window_and_input_validation() {
        let pts = power_third_points();
        // Default window keeps q <= 1/8: drops the 1/4 point.
        let fit = fit_scaling(&pts, FitModel::PowerFixedThird, None).unwrap();
        assert_eq!(fit.n_used, 6);

        let bad = vec![QPoint { q: 0.0, value: 1.0, stderr: 0.0 }];
        assert!(matches!(
            fit_scaling(&bad, FitModel::LogLinear, None),
            Err(AnalysisError::NonPositiveQ { .. })
        ));
        let same_q: Vec<QPoint> =
            (0..5).map(|_| QPoint { q: 0.05, value: 1.0, stderr: 0.0 }).collect();
        assert!(matches!(
            fit_scaling(&same_q, FitModel::LogLinear, None),
            Err(AnalysisError::TooFewDistinct { .. })
        ));
        let far: Vec<QPoint> =
            (1..6).map(|k| QPoint { q: 0.3 + k as f64 / 10.0, value: 1.0, stderr: 0.0 }).collect();
        assert!(matches!(
            fit_scaling(&far, FitModel::LogLinear, None),
            Err(AnalysisError::EmptyWindow { .. })
        ));
        assert!(matches!(
            fit_scaling(&pts[..3], FitModel::PowerFree, Some(0.25)),
            Err(AnalysisError::TooFewPoints { need: 4, .. })
        ));
    }

    #[test]
    fn pchip_interpolates_monotonically() {
        let xs = vec![0.0, 1.0, 2.0, 4.0, 5.0];
        let ys = vec![0.0, 0.1, 0.9, 1.0, 3.0];
        let interp = Pchip::new(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert!((interp.eval(*x) - y).abs() < 1e-12);
        }
        let mut prev = interp.eval(0.0);
        for k in 1..=500 {
            let x = 5.0 * k as f64 / 500.0;
            let v = interp.eval(x);
            assert!(v >= prev - 1e-12, "not monotone at x = {x}");
            prev = v;
        }
    }

    #[test]
    fn bspline_basis_partitions_unity() {
        let knots = {
            let mut k = vec![0.0; 4];
            for i in 1..=8 {
                k.push(i as f64 / 9.0);
            }
            k.extend([1.0; 4]);
            k
        };
        for j in 0..=100 {
            let x = j as f64 / 100.0;
            let row = bspline_row(&knots, 12, x);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} at x = {x}");
            assert!(row.iter().all(|&v| v >= -1e-12));
        }
    }

    fn synthetic_collapse(q_c: f64, nu: f64, sizes: &[usize]) -> Vec<CollapsePoint> {
        let mut pts = Vec::new();
        for &l in sizes {
            for k in 0..13 {
                let q = 0.020 + 0.0025 * k as f64;
                let x = (q - q_c) * (l as f64).powf(1.0 / nu);
                pts.push(CollapsePoint { l, q, value: x.tanh() });
            }
        }
        pts
    }

    #[test]
    fn collapse_recovers_generating_parameters() {
        let pts = synthetic_collapse(0.035, 0.94, &[32, 64, 128, 256]);
        let res = data_collapse(&pts, (0.025, 0.045), (0.7, 1.3)).unwrap();
        assert!((res.q_c - 0.035).abs() <= 0.005, "q_c = {}", res.q_c);
        assert!((res.nu - 0.94).abs() <= 0.05, "nu = {}", res.nu);
        // The trace holds every evaluation and contains the reported optimum.
        assert_eq!(res.trace.len(), 4 * 21 * 21);
        assert!(res.trace.iter().any(|t| t.2 == res.cost));
        // Cost at the optimum beats displaced grid points by a wide margin.
        let off = res
            .trace
            .iter()
            .filter(|t| (t.0 - res.q_c).abs() > 0.005)
            .map(|t| t.2)
            .fold(f64::INFINITY, f64::min);
        assert!(res.cost < off, "cost {} vs displaced {off}", res.cost);
    }

    #[test]
    fn collapse_argmin_is_invariant_under_size_rescaling() {
        let base = synthetic_collapse(0.035, 0.94, &[32, 64, 128]);
        let doubled: Vec<CollapsePoint> = base
            .iter()
            .map(|p| CollapsePoint { l: 2 * p.l, ..*p })
            .collect();
        let a = data_collapse(&base, (0.025, 0.045), (0.7, 1.3)).unwrap();
        let b = data_collapse(&doubled, (0.025, 0.045), (0.7, 1.3)).unwrap();
        assert_eq!(a.q_c, b.q_c);
    }

    #[test]
    fn collapse_rejects_degenerate_input() {
        let one_size = synthetic_collapse(0.035, 0.94, &[64]);
        assert!(matches!(
            data_collapse(&one_size, (0.025, 0.045), (0.7, 1.3)),
            Err(AnalysisError::TooFewDistinct { what: "L", .. })
        ));
        let pts = synthetic_collapse(0.035, 0.94, &[32, 64, 128]);
        // q_c range pokes outside the sampled q interval [0.020, 0.050].
        assert!(matches!(
            data_collapse(&pts, (0.01, 0.045), (0.7, 1.3)),
            Err(AnalysisError::BadRange { .. })
        ));
        assert!(matches!(
            data_collapse(&pts, (0.045, 0.025), (0.7, 1.3)),
            Err(AnalysisError::BadRange { .. })
        ));
    }
}
