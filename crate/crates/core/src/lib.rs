//! Distributed Nash equilibrium seeking over directed communication
//! networks.
//!
//! Agents play a game but cannot observe each other's strategies directly;
//! each one keeps a local estimate of the full strategy profile and refines
//! it by mixing neighbor messages with row-stochastic weights while taking
//! projected pseudo-gradient steps on its own decision. This crate provides
//! the network model and its spectral analysis, quadratic and Cournot game
//! builders, step-size certificates with linear-rate guarantees, the
//! synchronous dynamics themselves (with exact or online-estimated
//! eigenvector weighting), and a centralized oracle that computes reference
//! equilibria for verification.
//!
//! Everything is generic over the floating-point type via [`Scalar`];
//! `f64` aliases are exported at the crate root for the common case.

pub mod cournot;
pub mod dynamics;
pub mod games;
pub mod graph;
pub mod linalg;
pub mod oracle;
pub mod rates;
pub mod scalar;

pub use scalar::Scalar;

/// Validated communication network over `f64`.
pub type Graph64 = graph::Graph<f64>;
/// Spectral data (eigenvector, contraction factor) over `f64`.
pub type SpectralData64 = graph::SpectralData<f64>;
/// Affine pseudo-gradient game over `f64`.
pub type QuadraticGame64 = games::QuadraticGame<f64>;
/// Cournot instance over `f64`.
pub type CournotSpec64 = cournot::CournotSpec<f64>;
/// Step-size certificate over `f64`.
pub type StepCertificate64 = rates::StepCertificate<f64>;
/// Recorded trajectory over `f64`.
pub type Trace64 = dynamics::Trace<f64>;
/// Solved equilibrium over `f64`.
pub type NESolution64 = oracle::NESolution<f64>;
