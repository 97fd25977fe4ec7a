//! Spin-dependent Bohmian arrival times in a harmonic waveguide, and the
//! spin-POVM machinery that tests whether such arrival-time statistics can be
//! the outcome statistics of any experiment.

pub mod binning;
pub mod ensemble;
pub mod error;
pub mod guidance;
pub mod integrator;
pub mod povm;
pub mod rng;
pub mod signaling;
pub mod spin;
pub mod stats;
pub mod svg;
pub mod toymeasure;
pub mod waveguide;

mod par;
mod sine;

pub use binning::{ArrivalDistribution, DistributionLabel, TimeBinning};
pub use ensemble::{arrival_distribution, ArrivalRecord, ArrivalStatus, EnsembleConfig, EnsembleRun, Simulation};
pub use error::{Error, Result};
pub use guidance::DynamicsSpec;
pub use povm::{FitReport, SpinPovm};
pub use signaling::DistributionFamily;
pub use spin::{direction_from_spinor, spinor_from_direction, PhysicalParams, SpinDirection, Spinor};
pub use waveguide::{LongitudinalField, LongitudinalGrid, PacketConfig, StateTable, WaveState};
