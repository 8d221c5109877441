//! Desk-scale numerical laboratory for the parabolic Anderson model (PAM)
//! on lattice boxes,
//!
//! ```text
//!     du/dt = kappa * Laplacian(u) + xi * u       on Q_R in Z^d,
//! ```
//!
//! with an i.i.d. random potential `xi` drawn from heavy-but-integrable
//! tail families (Weibull and friends). The crate provides
//!
//! * lattice boxes and the Anderson Hamiltonian `kappa*Delta + xi` under
//!   free and zero boundary conditions ([`lattice`]),
//! * the tail calculus for the potential marginal: survival functions,
//!   cumulant generating function, Legendre points and diagnostics
//!   ([`tails`]),
//! * reproducible potential sampling, order statistics and window
//!   censuses ([`potential`]),
//! * principal eigenpairs, the exit functional and the
//!   eigenvalue-potential root identity ([`spectral`]),
//! * deterministic PAM solvers (adaptive ODE and spectral expansion)
//!   ([`evolve`]),
//! * continuous-time random walk sampling and Feynman-Kac Monte Carlo
//!   ([`feynman_kac`]),
//! * closed-form asymptotic predictions: moment expansions, intermittency
//!   windows, Bernoulli peak intensities and ageing criteria
//!   ([`asymptotics`]),
//! * a harness of named, seeded, reproducible verification experiments
//!   with JSON/CSV reports ([`harness`]).

pub mod asymptotics;
pub mod error;
pub mod evolve;
pub mod feynman_kac;
pub mod harness;
pub mod lattice;
pub mod numerics;
pub mod potential;
pub mod rng;
pub mod spectral;
pub mod tails;

pub use error::{PamError, Result};
