//! Oracles, the synthetic testbed, statistics and the scaling sweep.

pub mod oracle;
pub mod stats;
pub mod sweep;
pub mod testbed;

pub use oracle::brute_force_optimum;
pub use sweep::{run_sweep, Algorithm, SweepResult, SweepRow, SweepSpec};
pub use testbed::{Instance, Testbed, TestbedSpec};
