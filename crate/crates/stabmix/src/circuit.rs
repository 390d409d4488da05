//! The two hybrid-circuit geometries: brick-wall random Clifford layers with
//! rate-`p` projective measurements and rate-`q` reset noise.
//!
//! One time step is four layers, in this order: even-bond gates, odd-bond
//! gates (plus the wrap bond under periodic boundaries), resets, then
//! measurements. Readout happens after the last complete step. Under
//! [`NoiseModel::BoundaryPlusLateBulk`] the chain ends at sites `0` and
//! `L-1` are reset deterministically every step, and bulk sites become
//! eligible for rate-`q` resets only during the final `t_noise` steps.
//!
//! Every trajectory owns a private ChaCha8 stream keyed by
//! `(master_seed, trajectory_index)`, so runs are reproducible bit for bit
//! and trajectories never share randomness. Within a step, per-site noise
//! draws are consumed in fixed site order `0..L`; a deterministically reset
//! site consumes no draw.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entanglement::{Bipartition, EntanglementReport};
use crate::event::{Event, EventLog};
use crate::gate::CliffordGate;
use crate::tableau::Tableau;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Rate-`q` resets on every site at every step.
    BulkNoise,
    /// Deterministic resets at both chain ends every step; bulk resets only
    /// during the last `t_noise` steps.
    BoundaryPlusLateBulk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Pbc,
    Obc,
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseModel::BulkNoise => "bulk_noise",
            NoiseModel::BoundaryPlusLateBulk => "boundary_plus_late_bulk",
        })
    }
}

impl FromStr for NoiseModel {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "bulk_noise" => Ok(NoiseModel::BulkNoise),
            "boundary_plus_late_bulk" => Ok(NoiseModel::BoundaryPlusLateBulk),
            _ => Err(ConfigError::BadToken { kind: "noise model", token: s.to_string() }),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Pbc => "pbc",
            Boundary::Obc => "obc",
        })
    }
}

impl FromStr for Boundary {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "pbc" => Ok(Boundary::Pbc),
            "obc" => Ok(Boundary::Obc),
            _ => Err(ConfigError::BadToken { kind: "boundary", token: s.to_string() }),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("chain length {l} is not an even number >= 2")]
    BadLength { l: usize },
    #[error("{name} = {value} is outside [0, 1]")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("depth must be >= 1")]
    ZeroDepth,
    #[error("t_noise = {t_noise} exceeds depth = {depth}")]
    NoiseWindowTooLong { t_noise: usize, depth: usize },
    #[error("unknown {kind} {token:?}")]
    BadToken { kind: &'static str, token: String },
}

/// Complete description of one trajectory. Two equal configs produce
/// bit-identical histories.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitConfig {
    pub model: NoiseModel,
    pub n_qubits: usize,
    pub measure_rate: f64,
    pub reset_rate: f64,
    /// Length of the late bulk-noise window; unused under `BulkNoise`.
    pub t_noise: usize,
    pub boundary: Boundary,
    pub depth: usize,
    pub master_seed: u64,
    pub trajectory_index: u64,
}

impl CircuitConfig {
    /// The conventional circuit depth for a chain of `l` sites.
    pub fn default_depth(l: usize) -> usize {
        8 * l
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_qubits < 2 || self.n_qubits % 2 != 0 {
            return Err(ConfigError::BadLength { l: self.n_qubits });
        }
        for (name, value) in [
            ("measure_rate", self.measure_rate),
            ("reset_rate", self.reset_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::RateOutOfRange { name, value });
            }
        }
        if self.depth == 0 {
            return Err(ConfigError::ZeroDepth);
        }
        if self.model == NoiseModel::BoundaryPlusLateBulk && self.t_noise > self.depth {
            return Err(ConfigError::NoiseWindowTooLong {
                t_noise: self.t_noise,
                depth: self.depth,
            });
        }
        Ok(())
    }

    /// The trajectory's private random stream: ChaCha8 keyed by the two ids
    /// plus a fixed domain tag, so distinct trajectories never overlap.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.trajectory_index.to_le_bytes());
        key[16..].copy_from_slice(b"stabmix.traj.v1\0");
        ChaCha8Rng::from_seed(key)
    }

    /// Stable identifier of the stream feeding this trajectory.
    pub fn stream_id(&self) -> String {
        format!("chacha8/{:016x}/{:016x}", self.master_seed, self.trajectory_index)
    }
}

/// Is `(site, time)` eligible for a rate-`q` reset draw?
pub fn noise_schedule(cfg: &CircuitConfig, _site: usize, time: usize) -> bool {
    match cfg.model {
        NoiseModel::BulkNoise => true,
        NoiseModel::BoundaryPlusLateBulk => time >= cfg.depth - cfg.t_noise,
    }
}

/// Is `site` reset deterministically (probability 1) every step?
pub fn fixed_reset(cfg: &CircuitConfig, site: usize) -> bool {
    cfg.model == NoiseModel::BoundaryPlusLateBulk
        && (site == 0 || site == cfg.n_qubits - 1)
}

/// Uniform two-qubit Clifford gate (11,520 elements modulo phase): a uniform
/// binary symplectic matrix by the transvection construction plus uniform
/// signs.
pub fn sample_two_qubit_clifford<R: Rng + ?Sized>(rng: &mut R) -> CliffordGate {
    CliffordGate::sample(rng)
}

fn step_inner(
    t: &mut Tableau,
    cfg: &CircuitConfig,
    time: usize,
    rng: &mut ChaCha8Rng,
    mut log: Option<&mut EventLog>,
    fixed_resets: bool,
) {
    let l = cfg.n_qubits;
    let mut bonds: Vec<(usize, usize)> = (0..l - 1).step_by(2).map(|i| (i, i + 1)).collect();
    bonds.extend((1..l - 1).step_by(2).map(|i| (i, i + 1)));
    if cfg.boundary == Boundary::Pbc {
        bonds.push((l - 1, 0));
    }
    for (i, j) in bonds {
        let gate = sample_two_qubit_clifford(rng);
        t.apply_gate(&gate, i, j).expect("bond sites are in range");
        if let Some(log) = log.as_deref_mut() {
            log.push(Event::Gate { i, j, gate });
        }
    }
    for site in 0..l {
        let reset_now = if fixed_resets && fixed_reset(cfg, site) {
            true
        } else if noise_schedule(cfg, site, time) {
            rng.random::<f64>() < cfg.reset_rate
        } else {
            false
        };
        if reset_now {
            t.reset(site).expect("site is in range");
            if let Some(log) = log.as_deref_mut() {
                log.push(Event::Reset { site });
            }
        }
    }
    for site in 0..l {
        if rng.random::<f64>() < cfg.measure_rate {
            let outcome = t.measure_z(site, rng).expect("site is in range");
            if let Some(log) = log.as_deref_mut() {
                log.push(Event::Measure { site, outcome });
            }
        }
    }
}

/// Advance the state by one full time step (gates, resets, measurements).
pub fn step(t: &mut Tableau, cfg: &CircuitConfig, time: usize, rng: &mut ChaCha8Rng) {
    step_inner(t, cfg, time, rng, None, true);
}

/// Result of one complete trajectory. `wall_time_s` is diagnostic only;
/// every other field is a deterministic function of the config.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub config: CircuitConfig,
    pub report: EntanglementReport,
    pub wall_time_s: f64,
    pub stream: String,
}

fn run_inner(
    cfg: &CircuitConfig,
    fixed_resets: bool,
    mut log: Option<&mut EventLog>,
) -> Result<TrajectoryRecord, ConfigError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = cfg.rng();
    let mut t = Tableau::new_product_state(cfg.n_qubits).expect("validated length");
    for time in 0..cfg.depth {
        step_inner(&mut t, cfg, time, &mut rng, log.as_deref_mut(), fixed_resets);
    }
    let bp = Bipartition::half_chain(cfg.n_qubits);
    let report = EntanglementReport::compute(&t, &bp).expect("half-chain split is valid");
    Ok(TrajectoryRecord {
        config: cfg.clone(),
        report,
        wall_time_s: start.elapsed().as_secs_f64(),
        stream: cfg.stream_id(),
    })
}

/// Run one trajectory from `|0...0>` and read out the half-chain
/// entanglement report after the final step.
pub fn run_trajectory(cfg: &CircuitConfig) -> Result<TrajectoryRecord, ConfigError> {
    run_inner(cfg, true, None)
}

/// Same as [`run_trajectory`], also returning the event log that lets the
/// dense oracle replay the identical history.
pub fn run_trajectory_logged(
    cfg: &CircuitConfig,
) -> Result<(TrajectoryRecord, EventLog), ConfigError> {
    let mut log = EventLog::new();
    let record = run_inner(cfg, true, Some(&mut log))?;
    Ok((record, log))
}

/// Test hook: run with the deterministic boundary resets suppressed, leaving
/// only the probabilistic schedule. With `t_noise = depth` this consumes the
/// exact same draw sequence as `BulkNoise`.
#[cfg(test)]
pub(crate) fn run_trajectory_without_fixed_resets(
    cfg: &CircuitConfig,
) -> Result<TrajectoryRecord, ConfigError> {
    run_inner(cfg, false, None)
}
