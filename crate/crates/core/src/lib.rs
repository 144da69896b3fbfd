//! Mixed-criticality DAG scheduling toolkit.
//!
//! - [`model`]: MC-DAG systems and their validation.
//! - [`gen`]: random system generation (UUniFast, UUniFast-discard, random topologies).
//! - [`sched`]: ALAP/ASAP scheduling-table synthesis under G-EDF or G-LLF, and checkers.
//! - [`pdq`]: periodic-delayed communication and its lock-free index arithmetic.
//! - [`bench`]: acceptance-rate experiments.

pub mod bench;
pub mod gen;
pub mod model;
pub mod pdq;
pub mod sched;

pub use model::{Criticality, McDag, McSystem, PeriodicTask, Time, Vertex};
pub use sched::{Policy, ScheduleTable};
