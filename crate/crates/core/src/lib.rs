//! Simulation and verification toolkit for a fast-slow stochastic
//! Galerkin-Navier-Stokes type system.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectrum`]: eigenvalue ladder, model parameters, observables, cone geometry
//!   and scalar budget functions.
//! * [`fields`]: the quadratic Galerkin drift, the stirring family and their
//!   diagnostics.
//! * [`polytope`]: fibre polytopes, exact volume/centroid, samplers and the
//!   averaged coefficients `q_l(u, v)`.
//! * [`sde`]: integrators for the full system, the fast-only flow and a Heun
//!   reference.
//! * [`effective`]: the limiting two-dimensional cone diffusion.
//! * [`experiments`]: stationary estimation and the pass/fail checks.
//!
//! Ensemble work goes through [`exec`], which runs on rayon when the
//! `parallel` feature is enabled and sequentially otherwise.

pub mod effective;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod fields;
pub mod numerics;
pub mod polytope;
pub mod rng;
pub mod sde;
pub mod spectrum;

pub use error::{Error, Result};
pub use spectrum::{
    ConePoint, ForcingBudgets, ModelParams, Observables, Spectrum, SpectrumSource, StateClass,
    StateVector,
};
