//! Frequency-constrained microgrid scheduling.
//!
//! A case ([`netdata`]) and a scenario set are turned into a mixed-integer
//! second-order cone program ([`sched`], [`drcc`], [`conic`]), solved by
//! branch-and-bound ([`solver`]) and the resulting schedule is certified
//! against the post-islanding frequency dynamics ([`freqdyn`]).

pub mod conic;
pub mod drcc;
pub mod freqdyn;
pub mod netdata;
pub mod sched;
pub mod solver;
