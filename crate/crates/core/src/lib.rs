//! Large-deviations analysis of stochastic gradient descent on smooth,
//! strongly convex objectives.
//!
//! * [`model`]: objectives, Hessian spectra at the minimizer, Taylor residuals
//! * [`noise`]: gradient-noise samplers and their log-moment generating functions
//! * [`sgd`]: the SGD recursion, step schedules and step-product bounds
//! * [`rates`]: limiting scaled log-MGFs, their conjugate rate functions,
//!   Gaussian closed forms and the high-probability exponent
//! * [`montecarlo`]: tail-probability estimation and empirical rate fits

pub mod error;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod quadrature;
pub mod rates;
pub mod rng;
pub mod sgd;

pub use error::{Error, Result};
