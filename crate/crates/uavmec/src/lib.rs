//! Planner for a rotary-wing UAV that serves ground equipment as a relay and
//! edge computer while flying between fixed endpoints.
//!
//! The crate computes operating plans that minimize the weighted sum of the
//! energy drawn by the user equipment and by the UAV over a finite mission
//! horizon. A plan consists of four coupled pieces:
//!
//! * a [`model::Schedule`]: per-slot CPU frequencies and offload/forward/
//!   download bit allocations for every user,
//! * a [`model::BandwidthPlan`]: the per-slot split of the shared band across
//!   the three radio streams of every user,
//! * a [`model::Trajectory`]: the UAV waypoints, and
//! * an [`model::EnergyReport`] accounting for every energy component.
//!
//! [`orchestrator::solve`] alternates three inner solvers until the objective
//! stalls: a dual-decomposition scheduler ([`scheduler`]), closed-form
//! bandwidth allocation driven by Lambert-W evaluations ([`bandwidth`]), and
//! a successive-convexification trajectory solver ([`trajectory`]). Four
//! reference schemes (direct trajectory, offloading only, equal bandwidth,
//! local computing) share the same machinery for comparison studies.

pub mod bandwidth;
pub mod error;
pub mod model;
pub mod numerics;
pub mod orchestrator;
pub mod report;
pub mod scenario_file;
pub mod scheduler;
pub mod trajectory;

pub use error::{ModelError, NumericsError};
pub use model::{BandwidthPlan, EnergyReport, Scenario, Schedule, Trajectory, UserEquipment};
pub use orchestrator::{solve, Scheme, SolveConfig, SolveResult};
