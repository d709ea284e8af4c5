//! Thick points of planar simple random walk.
//!
//! A walk with jump rate one is run in a discretised planar domain until it
//! first hits the discrete boundary.  Sites whose accumulated local time
//! exceeds `g * a * log^2 N` are *a-thick*; weighting each of them by
//! `log N / N^(2-a)` yields a random measure whose large-`N` behaviour is
//! governed by classical potential theory (Green function, harmonic measure,
//! conformal radius).  This crate provides
//!
//! * exact continuum evaluators for discs and Möbius images of the disc
//!   ([`continuum`]),
//! * lattice domain construction and a matrix-free conjugate-gradient solver
//!   for the discrete Dirichlet problem ([`lattice`], [`solver`]),
//! * walk samplers, plain and conditioned on the exit site ([`walk`]),
//! * thick-point measures and their sample-exact Markov decomposition
//!   ([`measure`]),
//! * a seeded, reproducible Monte-Carlo harness with statistical tests
//!   ([`harness`]),
//! * the strip martingale approximation of the conditioned measure
//!   ([`martingale`]),
//! * a batch CLI ([`cli`]).

pub mod cli;
pub mod constants;
pub mod continuum;
pub mod harness;
pub mod lattice;
pub mod martingale;
pub mod measure;
pub mod quad;
pub mod report;
pub mod solver;
pub mod walk;

pub use constants::{C0, G};
pub use continuum::{NiceDomain, SimplexSpec, TripleDxz};
pub use lattice::{DomainSpec, LatticeDomain, Site};
pub use measure::ThickPointMeasure;
pub use solver::PotentialField;
pub use walk::WalkSample;
