//! Batch Bayesian optimisation by Thompson sampling from sparse variational
//! Gaussian-process posteriors.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`]: SE and Matérn kernels, Mercer eigen-expansions and random
//!   Fourier features.
//! * [`exact_gp`]: the exact posterior, information gain and confidence radii.
//! * [`svgp`]: sparse variational posteriors with inducing points or inducing
//!   features, fitted in closed form.
//! * [`sampler`]: decoupled posterior sampling and candidate grids.
//! * [`engine`]: the batch loop, exploration schedules and regret calculators.
//! * [`benchmarks`]: objectives, noise and the random-search baseline.
//! * [`verify`]: self-check suites driven by the command-line tool.

pub mod benchmarks;
pub mod config;
pub mod engine;
pub mod error;
pub mod exact_gp;
pub mod kernels;
pub mod linalg;
pub mod sampler;
pub mod seeding;
pub mod svgp;
pub mod verify;

pub use error::{Error, Result};
