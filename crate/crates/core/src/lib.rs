//! Grid pedestrian simulation with a parallel planning phase and a
//! sequential movement phase, plus the harness used to measure how it scales.
//!
//! - [`world`]: geometry, scenario files, the static floor field, line tracing
//! - [`agents`]: agents, parameters, random streams, desired-cell choice
//! - [`engine`]: the two-phase step and timed runs
//! - [`scenario_io`]: spawning, standard geometries, timing CSV
//! - [`bench`]: sweeps, speed factors, real-time capacity, density-speed runs

pub mod agents;
pub mod bench;
pub mod engine;
pub mod scenario_io;
pub mod world;

pub use agents::{Agent, SimParams};
pub use engine::{ScheduleParams, SimState};
pub use world::{Boundary, CellKind, Coord, Grid, Potential, StaticField};
