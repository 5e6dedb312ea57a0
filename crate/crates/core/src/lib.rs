//! Black-box, model-based mutation testing for network protocols.
//!
//! Specifications are mutated, bound to attacker models, driven through a
//! simulated network against systems under test, and the resulting traces are
//! analysed for crashes, spec violations, silence and loops.

pub mod spec;
pub mod wire;
pub mod minip;
pub mod mutation;
pub mod protocol;
pub mod seed;
pub mod attacker;
pub mod scenario;
pub mod analysis;
pub mod campaign;
pub mod maxip;
pub mod netsim;
pub mod solver;
pub mod trace;
