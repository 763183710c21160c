//! Event-driven simulation and adiabatic transport theory for slowly driven
//! mushroom billiards.
//!
//! A mushroom billiard (semicircular cap over a tilted trapezoidal stem) has
//! a sharply divided phase space: orbits with high angular momentum stay in
//! the cap forever (the integrable component), everything else is chaotic.
//! When the walls move slowly and periodically, chaotic orbits are captured
//! into and released from the integrable component once per cycle, and the
//! resulting exchange pumps energy into the ensemble at an exponential rate.
//!
//! The crate has two independent halves that are meant to be compared
//! against each other:
//!
//! * [`dynamics`] + [`ensemble`] — an exact event-driven simulator for
//!   particles bouncing between the moving walls, and deterministic
//!   parallel Monte-Carlo ensembles built on it;
//! * [`theory`] — the adiabatic transport prediction: capture
//!   probabilities, per-cycle energy multipliers, and the distribution of
//!   post-cycle energies, all computed by quadrature from the wall-motion
//!   protocol alone.
//!
//! [`geometry`] and [`protocol`] supply the shared vocabulary: shapes,
//! phase-space volumes, and periodic wall-motion laws.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod protocol;
pub mod theory;

pub use dynamics::{
    simulate, AbortReason, CaptureEvent, CollisionEvent, EventSink, HoleCrossing, NullSink,
    ParticleState, RecordingSink, SimulationResult, Simulator, StopReason, WallId,
};
pub use ensemble::{
    capture_time_gof, chi_square_gof, run as run_ensemble, sample_initial, EnsembleConfig,
    EnsembleRun, EnsembleStats, GofReport, Histogram, ParticleRecord,
};
pub use error::{Error, Result};
pub use geometry::{MushroomShape, PhaseVolumes, Region, ShapeRates};
pub use protocol::{Direction, FrozenProtocol, Protocol, ProtocolSpec, RectangleCycle, SinusoidalCycle};
pub use theory::{predict, CaptureWindow, FluxProfile, TheoryDistribution, TheoryPrediction};
