//! Exact and asymptotic analysis of dimer models (perfect matchings) on
//! contracting square-hexagon lattices.
//!
//! The crate is organized in layers:
//!
//! * [`partitions`] — signatures (weakly decreasing integer vectors), strip
//!   relations between Young diagrams, and exact counting measures.
//! * [`schur`] — numerically robust evaluation of rational Schur functions,
//!   staircase product formulas, and the closed-form partition function.
//! * [`lattice`] — construction of the finite lattice, the bijection between
//!   perfect matchings and interlacing signature chains, brute-force
//!   enumeration, and height fields on the dual graph.
//! * [`kasteleyn`] — signed adjacency matrices whose determinant equals the
//!   partition function, exact determinantal sampling, and the torus spectral
//!   curve.
//! * [`sampler`] — exact Markov-kernel sampling of the signature chain and
//!   power-sum observables.
//! * [`asymptotics`] — limit-shape machinery for uniform (staircase)
//!   boundaries: contour-integral moments, liquid-region root solving,
//!   density, and the complex Burgers equation residual.
//! * [`fluctuations`] — central-limit covariance kernels, Monte Carlo
//!   covariance estimation, and Gaussian-free-field pullback checks.
//! * [`piecewise`] — piecewise boundary conditions via free-probability
//!   transforms (power series, R-transform) and their limit formulas.

pub mod asymptotics;
pub mod error;
pub mod fluctuations;
pub mod kasteleyn;
pub mod lattice;
pub mod partitions;
pub mod piecewise;
pub mod sampler;
pub mod schur;

pub use error::SqhexError;
