//! Closed orbits of magnetic flows on model surfaces.
//!
//! Loops are discretized in cover coordinates and the free-period action
//! `S_k(x, T) = ∫ |ẋ|²/2T + kT − ∫_C σ` is minimized (above the Mañé critical
//! value) or searched for mountain-pass saddles (below it). Critical points are
//! checked against the magnetic flow by direct integration.

pub mod action;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod loopspace;
pub mod mane;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{make_model, FreeHomotopyClass, ModelKind, ModelSpec, SurfaceModel, Vec2};
pub use loopspace::{DiscreteLoop, LoopTangent, Orientation, TimedLoop};
