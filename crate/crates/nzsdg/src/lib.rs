//! Solver and statistical verifier for two-player nonzero-sum stochastic
//! differential games of bang-bang type.
//!
//! The state is a one-dimensional diffusion whose drift both players steer
//! through bounded control intervals. Because payoffs are of terminal type,
//! the equilibrium feedback is bang-bang: each player jumps between the
//! endpoints of their (transformed) control set according to the sign of a
//! gradient field. This crate
//!
//! * solves the coupled backward value system for those gradient fields,
//!   both through a Lipschitz-smoothed approximation indexed by a level `n`
//!   and through the discontinuous limit generator ([`pde`]),
//! * extracts the bang-bang feedback pair and adversarial deviation
//!   strategies ([`strategy`]),
//! * estimates payoffs by forward Monte Carlo in the strong formulation and
//!   by exponential-martingale reweighting of uncontrolled paths ([`mc`]),
//! * certifies the equilibrium property statistically: analytic oracles, a
//!   pointwise maximization sweep, and a unilateral-deviation suite with
//!   common random numbers ([`verify`]).
//!
//! The `nzsdg` binary exposes all of this behind a JSON-configured batch CLI
//! ([`cli`]).
//!
//! Hot loops (path simulation, sample sweeps) run data-parallel under rayon
//! when the default `parallel` feature is enabled and fall back to plain
//! iterators without it; results are bit-identical either way.

pub mod cli;
pub mod exec;
pub mod hamiltonian;
pub mod mc;
pub mod model;
pub mod pde;
pub mod strategy;
pub mod verify;

pub use model::{Player, ProblemSpec, ValidationReport};
