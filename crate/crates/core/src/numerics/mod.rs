//! Deterministic numeric kernels: dense/sparse linear algebra, parameter
//! storage with Adam state, seeded counter-based randomness, and the
//! finite-difference gradient oracle used by the test suites.

pub mod dense;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod sparse;
pub mod threading;
