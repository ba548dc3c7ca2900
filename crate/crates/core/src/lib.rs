//! Semiclassical Loschmidt echo, return probability and wavepacket revivals
//! computed from classical flow data, with an exact one-dimensional grid
//! propagator to check them against.
//!
//! Phase-space points are `z = (q, p)` with `J = [[0, I], [−I, 0]]` and
//! `σ(X, Y) = X·JY`. Coherent states are `φ_z = T̂(z)φ₀` with
//! `T̂(z) = exp(i(p·Q̂ − q·P̂)/ħ)`.

pub mod action;
pub mod echo;
pub mod error;
pub mod flow;
pub mod gaussian;
pub mod models;
pub mod oracle;
pub mod phase;
pub mod quadrature;
pub mod revivals;
pub mod symplectic;

pub use error::{EchoError, Result};
pub use models::{BaseModel, HamiltonianModel, Observable, Perturbation, PositionBump};
pub use phase::PhaseVector;
pub use symplectic::{BranchedRoot, ComplexMat, SympMatrix};
