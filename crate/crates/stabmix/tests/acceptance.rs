//! Acceptance suite: each test is one criterion and prints exactly one
//! pass/fail line through the harness (`test criterion_... ... ok`).
//!
//! Criteria 5, 6 and 9 share one expensive ensemble (L = 128, six reset
//! rates, 300 trajectories each), built once behind a `OnceLock`.

use std::fs;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use stabmix::analysis::{
    data_collapse, extrapolate_thermo, fit_scaling, CollapsePoint, EnsemblePoint,
    FitModel, QPoint, ThermoPoint,
};
use stabmix::circuit::{
    run_trajectory, run_trajectory_logged, Boundary, CircuitConfig, NoiseModel,
    TrajectoryRecord,
};
use stabmix::entanglement::Bipartition;
use stabmix::experiment::{
    run_experiment, ExperimentSpec, RunOptions, RunSection, SweepSection,
};
use stabmix::oracle::DenseState;

fn tmpdir(tag: &str) -> PathBuf {
    let dir =
        std::env::temp_dir().join(format!("stabmix-accept-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn base_config(l: usize, p: f64, q: f64, boundary: Boundary) -> CircuitConfig {
    CircuitConfig {
        model: NoiseModel::BulkNoise,
        n_qubits: l,
        measure_rate: p,
        reset_rate: q,
        t_noise: 0,
        boundary,
        depth: CircuitConfig::default_depth(l),
        master_seed: 0xacce97,
        trajectory_index: 0,
    }
}

// ---------------------------------------------------------------------------
// Shared ensembles
// ---------------------------------------------------------------------------

/// Criterion-1 ensemble: 200 verified trajectories, alternating boundaries.
static REPLAY_RECORDS: OnceLock<Vec<TrajectoryRecord>> = OnceLock::new();

fn replay_records() -> &'static [TrajectoryRecord] {
    REPLAY_RECORDS.get_or_init(|| {
        let bp = Bipartition::half_chain(6);
        (0..200u64)
            .map(|k| {
                let mut cfg = base_config(6, 0.2, 0.1, Boundary::Pbc);
                if k % 2 == 1 {
                    cfg.boundary = Boundary::Obc;
                }
                cfg.depth = 20;
                cfg.trajectory_index = k;
                let (rec, log) = run_trajectory_logged(&cfg).unwrap();
                let dense = DenseState::replay(6, &log).unwrap();
                dense.verify_report(&rec.report, &bp, 1e-9).unwrap();
                rec
            })
            .collect()
    })
}

const SCALING_Q: [f64; 6] = [
    1.0 / 64.0,
    1.0 / 48.0,
    1.0 / 32.0,
    1.0 / 24.0,
    1.0 / 16.0,
    1.0 / 8.0,
];

fn scaling_spec() -> ExperimentSpec {
    ExperimentSpec {
        sweep: SweepSection {
            model: vec![NoiseModel::BulkNoise],
            boundary: vec![Boundary::Pbc],
            l: vec![128],
            p: vec![0.1],
            q: SCALING_Q.to_vec(),
            t_noise: vec![0],
            depth: None, // 8 L per cell
        },
        run: RunSection {
            trajectories: 300,
            master_seed: 0x5ca11e,
            workers: None,
            write_trajectories: false,
            out_dir: None,
        },
        analysis: None,
    }
}

fn scaling_run(workers: usize, tag: &str) -> (Vec<u8>, Vec<EnsemblePoint>) {
    let dir = tmpdir(tag);
    let opts = RunOptions {
        out_dir: dir.clone(),
        workers: Some(workers),
        quiet: true,
        ..Default::default()
    };
    let summary = run_experiment(&scaling_spec(), &opts).unwrap();
    let bytes = fs::read(dir.join("points.csv")).unwrap();
    let _ = fs::remove_dir_all(&dir);
    (bytes, summary.points)
}

/// Criterion-5 ensemble: L = 128, p = 0.1, six reset rates, 300 trajectories.
static SCALING: OnceLock<(Vec<u8>, Vec<EnsemblePoint>)> = OnceLock::new();

fn scaling() -> &'static (Vec<u8>, Vec<EnsemblePoint>) {
    SCALING.get_or_init(|| scaling_run(2, "scaling-shared"))
}

fn mean_i(records: &[TrajectoryRecord]) -> (f64, f64) {
    let vals: Vec<f64> =
        records.iter().map(|r| r.report.mutual_information as f64).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

/// 200 mixed-boundary trajectories at L = 6 agree with the dense oracle on
/// every observable (tolerance 1e-9, purity exact) in under 30 s.
#[test]
fn criterion_1_dense_oracle_replay() {
    let start = Instant::now();
    let records = replay_records();
    assert_eq!(records.len(), 200);
    let pbc = records.iter().filter(|r| r.config.boundary == Boundary::Pbc).count();
    assert_eq!(pbc, 100, "boundaries alternate");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!(
        "criterion 1 PASS: 200 trajectories replayed against the dense oracle in {:.2?}",
        elapsed
    );
}

/// Reset rate 1 pins the product state (I = EN = 0 exactly); with neither
/// measurements nor resets the purity exponent stays 0 at every depth.
/// Under 5 s.
#[test]
fn criterion_2_limiting_cases() {
    let start = Instant::now();
    for k in 0..20u64 {
        let mut cfg = base_config(16, 0.2, 1.0, Boundary::Pbc);
        cfg.trajectory_index = k;
        let rec = run_trajectory(&cfg).unwrap();
        assert_eq!(rec.report.mutual_information, 0, "q = 1 must pin I to zero");
        assert_eq!(rec.report.log_negativity, 0.0, "q = 1 must pin EN to zero");
        assert_eq!(rec.report.purity_exponent, 0, "product state is pure");
    }
    // "At all times": read out after every depth from 1 to 24.
    for depth in 1..=24usize {
        let mut cfg = base_config(16, 0.0, 0.0, Boundary::Pbc);
        cfg.depth = depth;
        cfg.trajectory_index = depth as u64;
        let rec = run_trajectory(&cfg).unwrap();
        assert_eq!(
            rec.report.purity_exponent, 0,
            "unitary circuit must stay pure at depth {depth}"
        );
        assert_eq!(rec.report.s_ab, 0, "global state stays pure at depth {depth}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!("criterion 2 PASS: pinned and unitary limits exact in {elapsed:.2?}");
}

/// Logarithmic negativity never exceeds half the mutual information on the
/// criterion-1 ensemble.
#[test]
fn criterion_3_negativity_bound() {
    let mut worst = f64::NEG_INFINITY;
    for rec in replay_records() {
        let slack =
            rec.report.log_negativity - rec.report.mutual_information as f64 / 2.0;
        worst = worst.max(slack);
        assert!(
            slack <= 1e-12,
            "EN = {} exceeds I/2 = {} (stream {})",
            rec.report.log_negativity,
            rec.report.mutual_information as f64 / 2.0,
            rec.stream
        );
    }
    println!("criterion 3 PASS: EN <= I/2 on all 200 trajectories (max slack {worst:.2e})");
}

/// Without reset noise the mutual information grows strongly with system
/// size at p = 0.1 (I doubles twice from L = 16 to 64) and saturates at
/// p = 0.6 (area law: L = 32 and 64 agree within 3 combined stderr).
#[test]
fn criterion_4_measurement_phases() {
    let runs = |l: usize, p: f64| -> (f64, f64) {
        let records: Vec<TrajectoryRecord> = (0..200u64)
            .map(|k| {
                let mut cfg = base_config(l, p, 0.0, Boundary::Pbc);
                cfg.trajectory_index = k;
                run_trajectory(&cfg).unwrap()
            })
            .collect();
        mean_i(&records)
    };
    let (i16, _) = runs(16, 0.1);
    let (i64v, _) = runs(64, 0.1);
    assert!(
        i64v / i16 >= 3.0,
        "volume phase: I(64) / I(16) = {:.2} < 3",
        i64v / i16
    );

    let (a32, s32) = runs(32, 0.6);
    let (a64, s64) = runs(64, 0.6);
    let gap = (a64 - a32).abs();
    let sigma = (s32 * s32 + s64 * s64).sqrt();
    assert!(
        gap <= 3.0 * sigma,
        "area phase: |I(64) - I(32)| = {gap:.3} > 3 sigma = {:.3}",
        3.0 * sigma
    );
    println!(
        "criterion 4 PASS: I(64)/I(16) = {:.2} at p = 0.1; |dI| = {gap:.3} <= {:.3} at p = 0.6",
        i64v / i16,
        3.0 * sigma
    );
}

/// At p = 0.1, L = 128 the mean logarithmic negativity follows q^(-1/3):
/// the free power-law exponent lands in [-0.41, -0.25] and the fixed -1/3
/// power law beats the logarithmic model on residuals.
///
/// The exponent is extracted from the means alone (unweighted). The
/// absolute error of EN shrinks as the reset rate grows, so 1/sigma^2
/// weights would hand the largest-q points — the ones entering the pinned
/// crossover — control of a three-parameter fit on six points.
#[test]
fn criterion_5_reset_rate_scaling() {
    let (_, points) = scaling();
    let qpoints: Vec<QPoint> = points
        .iter()
        .map(|pt| QPoint { q: pt.q, value: pt.en_mean, stderr: 0.0 })
        .collect();
    let free = fit_scaling(&qpoints, FitModel::PowerFree, None).unwrap();
    let e = free.exponent.unwrap();
    assert!(
        (-0.41..=-0.25).contains(&e),
        "free exponent {e:.4} outside [-0.41, -0.25]"
    );
    let pow = fit_scaling(&qpoints, FitModel::PowerFixedThird, None).unwrap();
    let log = fit_scaling(&qpoints, FitModel::LogLinear, None).unwrap();
    assert!(
        pow.rss < log.rss,
        "q^(-1/3) must beat log: rss {} vs {}",
        pow.rss,
        log.rss
    );
    println!(
        "criterion 5 PASS: free exponent {e:.3}, rss(pow13) = {:.3} < rss(log) = {:.3}",
        pow.rss, log.rss
    );
}

/// With two entanglement channels instead of one, periodic boundaries carry
/// about twice the mutual information of open ones at q = 1/16.
#[test]
fn criterion_6_boundary_ratio() {
    let (_, points) = scaling();
    let q = 1.0 / 16.0;
    let pbc = points
        .iter()
        .find(|pt| (pt.q - q).abs() < 1e-12)
        .expect("shared ensemble holds q = 1/16");

    let records: Vec<TrajectoryRecord> = (0..300u64)
        .map(|k| {
            let mut cfg = base_config(128, 0.1, q, Boundary::Obc);
            cfg.master_seed = 0x5ca11e;
            cfg.trajectory_index = k;
            run_trajectory(&cfg).unwrap()
        })
        .collect();
    let (obc_mean, _) = mean_i(&records);
    let ratio = pbc.i_mean / obc_mean;
    assert!(
        (1.5..=2.5).contains(&ratio),
        "I_pbc / I_obc = {ratio:.3} outside [1.5, 2.5]"
    );
    println!("criterion 6 PASS: I_pbc / I_obc = {ratio:.2} at q = 1/16");
}

/// The thermodynamic extrapolation and all three scaling fitters recover
/// exact synthetic laws to 1e-6 in under a second.
#[test]
fn criterion_7_fitter_exactness() {
    let start = Instant::now();

    let thermo: Vec<ThermoPoint> = [16usize, 32, 64, 128]
        .iter()
        .map(|&l| ThermoPoint { l, value: 3.25 - 7.5 / l as f64, stderr: 0.0 })
        .collect();
    let fit = extrapolate_thermo(&thermo).unwrap();
    assert!((fit.s_inf - 3.25).abs() < 1e-6, "s_inf = {}", fit.s_inf);
    assert!((fit.c + 7.5).abs() < 1e-6, "c = {}", fit.c);

    let qs: Vec<f64> = (1..=8).map(|k| 0.01 * k as f64).collect();

    let power: Vec<QPoint> = qs
        .iter()
        .map(|&q| QPoint { q, value: 2.5 * q.powf(-1.0 / 3.0) + 0.7, stderr: 0.0 })
        .collect();
    let fit = fit_scaling(&power, FitModel::PowerFixedThird, Some(0.1)).unwrap();
    assert!((fit.a - 2.5).abs() < 1e-6, "a = {}", fit.a);
    assert!((fit.b - 0.7).abs() < 1e-6, "b = {}", fit.b);
    assert!(fit.rss < 1e-12);

    let fit = fit_scaling(&power, FitModel::PowerFree, Some(0.1)).unwrap();
    assert!((fit.exponent.unwrap() + 1.0 / 3.0).abs() < 1e-6);
    assert!((fit.a - 2.5).abs() < 1e-4, "a = {}", fit.a);

    let logd: Vec<QPoint> = qs
        .iter()
        .map(|&q| QPoint { q, value: -1.25 * q.ln() + 0.3, stderr: 0.0 })
        .collect();
    let fit = fit_scaling(&logd, FitModel::LogLinear, Some(0.1)).unwrap();
    assert!((fit.a + 1.25).abs() < 1e-6, "a = {}", fit.a);
    assert!((fit.b - 0.3).abs() < 1e-6, "b = {}", fit.b);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("criterion 7 PASS: exact law recovery to 1e-6 in {elapsed:.2?}");
}

/// Finite-size data collapse recovers the critical point of synthetic
/// tanh-shaped data: q_c = 0.035 within 0.005 and nu = 0.94 within 0.05,
/// in under a minute.
#[test]
fn criterion_8_data_collapse() {
    let start = Instant::now();
    let (q_c, nu) = (0.035, 0.94);
    let mut pts = Vec::new();
    for &l in &[32usize, 64, 128, 256] {
        for k in 0..13 {
            let q = 0.020 + 0.0025 * k as f64;
            let x = (q - q_c) * (l as f64).powf(1.0 / nu);
            pts.push(CollapsePoint { l, q, value: 2.0 - (1.4 * x).tanh() });
        }
    }
    let res = data_collapse(&pts, (0.025, 0.045), (0.7, 1.3)).unwrap();
    assert!(
        (res.q_c - q_c).abs() <= 0.005,
        "q_c = {:.4} not within 0.005 of {q_c}",
        res.q_c
    );
    assert!((res.nu - nu).abs() <= 0.05, "nu = {:.3} not within 0.05 of {nu}", res.nu);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    println!(
        "criterion 8 PASS: collapse at q_c = {:.4}, nu = {:.3} in {elapsed:.2?}",
        res.q_c, res.nu
    );
}

/// The criterion-5 ensemble's points.csv is byte-identical when recomputed
/// with a different worker count.
#[test]
fn criterion_9_byte_determinism() {
    let (bytes_a, _) = scaling();
    let (bytes_b, _) = scaling_run(5, "scaling-rerun");
    assert_eq!(
        bytes_a, &bytes_b,
        "points.csv differs between 2-worker and 5-worker runs"
    );
    println!(
        "criterion 9 PASS: {} byte points.csv identical across worker counts",
        bytes_b.len()
    );
}
