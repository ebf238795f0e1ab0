//! Multi-type Galton-Watson population models fitted to life tables by exact
//! Dirichlet-multinomial conjugate inference.
//!
//! The crate is organised along the pipeline a viability study follows:
//!
//! - [`model`]: types, life tables, population states and offspring-law draws.
//! - [`inference`]: prior construction, the conjugate posterior update,
//!   posterior means, credible intervals and quantile scenarios.
//! - [`spectral`]: mean matrix, Perron root with left/right eigenvectors, and
//!   deterministic projection.
//! - [`extinction`]: generating function, extinction probabilities, survival
//!   bounds and extinction-time bounds for a single parameter draw.
//! - [`sampling`]: seeded streams, Dirichlet draws and the forward simulator.
//! - [`montecarlo`]: posterior-integrated quantities over shared draws.
//! - [`extensions`]: sex-ratio thinning, Poisson-Gamma offspring,
//!   survival/reproduction composition and joint-offspring Dirichlet priors.
//! - [`baseline`]: log-growth moments and the log-linear regression interval.
//! - [`io`]: CSV and JSON formats plus report assembly.
//! - [`datasets`]: the synthetic decline table and the brown bear counts.

pub mod baseline;
pub mod datasets;
pub mod error;
pub mod extensions;
pub mod extinction;
pub mod inference;
pub mod io;
pub mod matrix;
pub mod model;
pub mod montecarlo;
pub mod sampling;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
