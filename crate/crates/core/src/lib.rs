//! Trajectory-ensemble simulation of a finite-time quantum Otto engine.
//!
//! The work medium is a single (an)harmonic oscillator coupled to two thermal
//! reservoirs through time-controlled couplings. Each trajectory propagates a
//! density matrix driven by colored Gaussian noise plus deterministic
//! friction/decoherence terms; ensemble averages give the physical state and
//! the per-cycle work/heat ledger, including the coupling work spent switching
//! the reservoir contact on and off.
//!
//! Natural units throughout: ħ = m = 1, frequencies in ω₀, times in 1/ω₀,
//! inverse temperatures as dimensionless ħω₀β.

pub mod analysis;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod noise;
pub mod output;
pub mod protocol;
pub mod reservoir;
pub mod thermo;

pub use config::RunConfig;
pub use ensemble::{run, sweep, RunResult};
pub use error::{Result, SimError};
pub use gaussian::{GaussianPropagator, GaussianState};
pub use grid::{DensityGrid, GridParams, GridPropagator};
pub use noise::NoisePath;
pub use protocol::{Controls, CycleSchedule, RampShape, StrokeBoundaries};
pub use reservoir::{BathLabel, ReservoirPair, ReservoirSpec};
pub use thermo::{CycleLedger, EngineReport, OperatingPhase};
