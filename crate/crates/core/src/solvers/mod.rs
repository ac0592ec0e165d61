//! Critical points of `S_k`: minimization above the critical value and
//! mountain-pass saddles below it.

mod config;
pub(crate) mod descent;
mod newton;
pub mod diagnostics;
pub mod minimize;
pub mod mountain_pass;
pub mod sweep;

pub use config::SolverConfig;
pub use diagnostics::{ps_monitor, PSDiagnostics, PsConstants, PsRecord, PsReport};
pub use minimize::{minimize, MinimizeResult};
pub use mountain_pass::{mountain_pass, probe_saddle, MountainPassResult, SaddleProbe};
pub use sweep::{energy_sweep, sweep_from_results, SweepEntry, SweepResult};
