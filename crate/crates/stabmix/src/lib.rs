//! Mixed-state stabilizer simulator for noisy hybrid Clifford circuits.
//!
//! The crate simulates brick-wall random Clifford circuits interleaved with
//! projective Z measurements (rate `p`) and single-site reset noise
//! (rate `q`), tracking the state as a stabilizer group that is allowed to
//! shrink below full rank. On top of the simulator sit:
//!
//! * entanglement diagnostics for mixed stabilizer states (entropies,
//!   mutual information, logarithmic negativity),
//! * a dense density-matrix oracle (≤ 8 sites) that replays recorded event
//!   logs and cross-checks every observable,
//! * scaling analysis: thermodynamic extrapolation, power-law/logarithmic
//!   fits of the noise-rate dependence, and finite-size data collapse,
//! * an experiment driver with a CLI (`run` / `fit` / `collapse`) producing
//!   deterministic CSV tables and SVG plots.

pub mod gf2;
pub mod pauli;
pub mod gate;
pub mod tableau;
pub mod event;
pub mod entanglement;
pub mod oracle;
pub mod circuit;
pub mod analysis;
pub mod plot;
pub mod experiment;

pub use analysis::{
    aggregate, data_collapse, extrapolate_thermo, fit_scaling, AnalysisError,
    CollapsePoint, CollapseResult, EnsemblePoint, FitModel, FitResult, QPoint,
    ThermoFit, ThermoPoint,
};
pub use circuit::{
    run_trajectory, run_trajectory_logged, sample_two_qubit_clifford, Boundary,
    CircuitConfig, ConfigError, NoiseModel, TrajectoryRecord,
};
pub use entanglement::{Bipartition, EntanglementReport};
pub use event::{Event, EventLog};
pub use experiment::{
    run_experiment, ExperimentError, ExperimentSpec, RunOptions, RunSummary,
};
pub use plot::{linear_plot, loglog_plot, Series};
pub use oracle::{DenseState, OracleError};
pub use gate::{CliffordGate, TwoQubitPauli};
pub use pauli::PauliString;
pub use tableau::{set_channel_validation, Tableau, TableauError};
