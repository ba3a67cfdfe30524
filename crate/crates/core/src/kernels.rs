//! Matern covariance functions and their linear SDE companion forms.
//!
//! A zero-mean stationary GP in time can be represented as the output of a
//! linear time-invariant SDE driven by white noise,
//!
//! ```text
//! df/dt = F f + L nu(t),   nu ~ white noise with spectral density q,
//! ```
//!
//! where the process value is `H f` and the stationary covariance `P_inf`
//! solves `F P + P F^T + L q L^T = 0`. For the half-integer Matern family the
//! companion form is available in closed form, which is what makes Kalman
//! inference over the GP possible.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Matern smoothness values with a closed-form companion representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternSmoothness {
    /// nu = 1/2, the Ornstein-Uhlenbeck / exponential kernel.
    #[serde(rename = "matern12")]
    Half,
    /// nu = 3/2, once-differentiable sample paths.
    #[serde(rename = "matern32")]
    ThreeHalves,
}

impl MaternSmoothness {
    /// Dimension of the companion state.
    pub fn state_dim(self) -> usize {
        match self {
            MaternSmoothness::Half => 1,
            MaternSmoothness::ThreeHalves => 2,
        }
    }
}

/// A stationary Matern kernel `k(tau)` parameterized by signal variance and
/// length scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub smoothness: MaternSmoothness,
    /// Signal variance sigma_f^2 (squared units of the modelled signal).
    pub sigma_f2: f64,
    /// Length scale in seconds.
    pub ell: f64,
}

impl KernelSpec {
    pub fn new(smoothness: MaternSmoothness, sigma_f2: f64, ell: f64) -> Result<Self> {
        if !(sigma_f2 >= 0.0) || !sigma_f2.is_finite() {
            return Err(Error::invalid(format!("signal variance must be >= 0, got {sigma_f2}")));
        }
        if !(ell > 0.0) || !ell.is_finite() {
            return Err(Error::invalid(format!("length scale must be > 0, got {ell}")));
        }
        Ok(KernelSpec { smoothness, sigma_f2, ell })
    }
}

/// Companion-form SDE of a stationary GP.
#[derive(Debug, Clone)]
pub struct GpSde {
    /// d x d state matrix (Hurwitz stable).
    pub f: DMatrix<f64>,
    /// d x 1 white-noise loading.
    pub l: DVector<f64>,
    /// Scalar spectral density of the driving white noise.
    pub q: f64,
    /// 1 x d selector of the process value.
    pub h: RowDVector<f64>,
    /// Stationary state covariance.
    pub p_inf: DMatrix<f64>,
}

impl GpSde {
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }
}

/// Convert a Matern kernel into its exact SDE companion form.
///
/// nu = 1/2: `F = [-1/ell]`, `q = 2 sigma^2 / ell`.
/// nu = 3/2: with `lambda = sqrt(3)/ell`, `F = [[0, 1], [-lambda^2, -2 lambda]]`,
/// `q = 4 sigma^2 lambda^3`.
pub fn matern_to_sde(kernel: &KernelSpec) -> Result<GpSde> {
    let sigma2 = kernel.sigma_f2;
    let ell = kernel.ell;
    if !(ell > 0.0) || sigma2 < 0.0 {
        return Err(Error::invalid("kernel parameters out of range"));
    }
    let (f, l, q, h) = match kernel.smoothness {
        MaternSmoothness::Half => (
            DMatrix::from_element(1, 1, -1.0 / ell),
            DVector::from_element(1, 1.0),
            2.0 * sigma2 / ell,
            RowDVector::from_element(1, 1.0),
        ),
        MaternSmoothness::ThreeHalves => {
            let lambda = 3.0_f64.sqrt() / ell;
            (
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lambda * lambda, -2.0 * lambda]),
                DVector::from_vec(vec![0.0, 1.0]),
                4.0 * sigma2 * lambda.powi(3),
                RowDVector::from_vec(vec![1.0, 0.0]),
            )
        }
    };
    let p_inf = stationary_covariance(&f, &l, q)?;
    Ok(GpSde { f, l, q, h, p_inf })
}

/// Stationary covariance of `dx = F x dt + L dW`, i.e. the solution of the
/// continuous Lyapunov equation `F P + P F^T + L q L^T = 0`.
pub fn stationary_covariance(f: &DMatrix<f64>, l: &DVector<f64>, q: f64) -> Result<DMatrix<f64>> {
    if l.len() != f.nrows() {
        return Err(Error::dims("noise loading length must match state dimension"));
    }
    if q < 0.0 {
        return Err(Error::invalid("spectral density must be >= 0"));
    }
    let w = l * l.transpose() * q;
    linalg::solve_lyapunov(f, &w)
}

/// Evaluate the kernel at lag `tau`.
pub fn kernel_eval(kernel: &KernelSpec, tau: f64) -> f64 {
    let t = tau.abs();
    match kernel.smoothness {
        MaternSmoothness::Half => kernel.sigma_f2 * (-t / kernel.ell).exp(),
        MaternSmoothness::ThreeHalves => {
            let a = 3.0_f64.sqrt() * t / kernel.ell;
            kernel.sigma_f2 * (1.0 + a) * (-a).exp()
        }
    }
}
