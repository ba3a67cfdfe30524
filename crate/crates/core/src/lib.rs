//! Identification of unknown nonlinearities in single-degree-of-freedom
//! dynamic systems from noisy input/output records.
//!
//! The nonlinear restoring force is modelled as a Gaussian process in time,
//! converted to a linear SDE and appended to the state-space form of the
//! underlying linear oscillator. Square-root Kalman filtering and RTS
//! smoothing recover the unmeasured states together with the force signal;
//! MCMC handles the linear parameters and GP hyperparameters; a static
//! polynomial regression with BIC order selection then identifies the
//! nonlinearity from the extracted samples.
//!
//! Module map:
//! - [`ssm`]: oscillator state-space forms, GP augmentation, discretization
//! - [`kernels`]: Matern kernels and their SDE companion forms
//! - [`filter`]: square-root Kalman filter, RTS smoother, backward sampler
//! - [`mcmc`]: Metropolis-Hastings parameter inference
//! - [`polyfit`]: Bayesian linear regression, BIC scan, stiffness bias correction
//! - [`sim`]: Newmark time integration and JONSWAP multisine excitation
//! - [`diagnostics`]: NMSE, residual normality test, Welch periodogram

pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod kernels;
pub mod linalg;
pub mod mcmc;
pub mod polyfit;
pub mod sim;
pub mod ssm;

pub use error::{Error, Result};
