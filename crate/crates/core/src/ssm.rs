//! Continuous-time state-space models of SDOF oscillators, augmentation with
//! GP force states, observation models and exact discretization.
//!
//! The oscillator `m z'' + c z' + k z + f_hat = u(t)` is written with state
//! `x = [z, z']`:
//!
//! ```text
//! A = [[0, 1], [-k/m, -c/m]],   B = [[0], [1/m]].
//! ```
//!
//! Appending the GP companion states `f` of the unknown force gives a block
//! upper-triangular system; the force opposes the applied input, so it enters
//! the acceleration row with coefficient `-1/m`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GpSde;
use crate::linalg;

/// Physical parameters of an SDOF mass-spring-damper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdofParams {
    /// Mass, kg.
    pub m: f64,
    /// Linear stiffness, N/m.
    pub k: f64,
    /// Viscous damping, N s/m.
    pub c: f64,
}

impl SdofParams {
    pub fn new(m: f64, k: f64, c: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::invalid(format!("mass must be > 0, got {m}")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::invalid(format!("stiffness must be > 0, got {k}")));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::invalid(format!("damping must be >= 0, got {c}")));
        }
        Ok(SdofParams { m, k, c })
    }
}

/// Observed quantity of the oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    Acceleration,
    Velocity,
    Displacement,
}

/// Continuous-time linear state-space model with white-noise input:
///
/// ```text
/// dx/dt = A_c x + B_c u + L nu(t),   nu ~ white noise, density q
/// y     = C x + D u
/// ```
#[derive(Debug, Clone)]
pub struct ContinuousStateSpace {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl ContinuousStateSpace {
    pub fn new(
        a_c: DMatrix<f64>,
        b_c: DMatrix<f64>,
        l: DMatrix<f64>,
        q: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a_c.nrows();
        if a_c.ncols() != n {
            return Err(Error::dims("A_c must be square"));
        }
        if b_c.nrows() != n {
            return Err(Error::dims("B_c row count must match state dimension"));
        }
        if l.nrows() != n {
            return Err(Error::dims("L row count must match state dimension"));
        }
        let w = l.ncols();
        if q.nrows() != w || q.ncols() != w {
            return Err(Error::dims("q must be w x w for L of width w"));
        }
        if (&q - q.transpose()).norm() > 1e-12 * q.norm().max(1.0) {
            return Err(Error::invalid("q must be symmetric"));
        }
        if w > 0 && !q.clone().symmetric_eigen().eigenvalues.iter().all(|&e| e >= -1e-12 * q.norm().max(1.0)) {
            return Err(Error::invalid("q must be positive semi-definite"));
        }
        if c.nrows() > 0 && c.ncols() != n {
            return Err(Error::dims("C column count must match state dimension"));
        }
        if d.nrows() != c.nrows() || (d.nrows() > 0 && d.ncols() != b_c.ncols()) {
            return Err(Error::dims("D must be p x m"));
        }
        Ok(ContinuousStateSpace { a_c, b_c, l, q, c, d })
    }

    pub fn state_dim(&self) -> usize {
        self.a_c.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_c.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Zero-order-hold discretization of a [`ContinuousStateSpace`].
#[derive(Debug, Clone)]
pub struct DiscreteStateSpace {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub q_d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dt: f64,
}

impl DiscreteStateSpace {
    pub fn state_dim(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_d.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Continuous state-space form of the linear SDOF oscillator.
///
/// No noise loading and no observation row yet; those are attached by
/// [`augment`] and [`build_observation`].
pub fn build_sdof(params: &SdofParams) -> Result<ContinuousStateSpace> {
    if !(params.m > 0.0) || !(params.k > 0.0) {
        return Err(Error::invalid("mass and stiffness must be positive"));
    }
    let a_c = DMatrix::from_row_slice(
        2,
        2,
        &[0.0, 1.0, -params.k / params.m, -params.c / params.m],
    );
    let b_c = DMatrix::from_column_slice(2, 1, &[0.0, 1.0 / params.m]);
    ContinuousStateSpace::new(
        a_c,
        b_c,
        DMatrix::zeros(2, 0),
        DMatrix::zeros(0, 0),
        DMatrix::zeros(0, 2),
        DMatrix::zeros(0, 1),
    )
}

/// Append GP force states to a 2-state SDOF system.
///
/// The joint state matrix is block upper triangular: the physical block in
/// the top-left, the GP companion matrix in the bottom-right, and a coupling
/// block whose only nonzero entry is `-1/m` (the GP models the force that
/// opposes the applied input in the equation of motion). The white noise of
/// the GP enters on the last appended state.
pub fn augment(sys: &ContinuousStateSpace, gp: &GpSde) -> Result<ContinuousStateSpace> {
    if sys.state_dim() != 2 || sys.input_dim() != 1 {
        return Err(Error::dims(
            "augment expects a 2-state single-input SDOF system",
        ));
    }
    let d = gp.state_dim();
    let n = 2 + d;
    let inv_m = sys.b_c[(1, 0)];

    let mut a_c = DMatrix::zeros(n, n);
    a_c.view_mut((0, 0), (2, 2)).copy_from(&sys.a_c);
    a_c.view_mut((2, 2), (d, d)).copy_from(&gp.f);
    // Coupling block B_cf: force value state drives the acceleration row.
    a_c[(1, 2)] = -inv_m;

    let mut b_c = DMatrix::zeros(n, 1);
    b_c.view_mut((0, 0), (2, 1)).copy_from(&sys.b_c);

    let mut l = DMatrix::zeros(n, 1);
    l.view_mut((2, 0), (d, 1)).copy_from(&gp.l);
    let q = DMatrix::from_element(1, 1, gp.q);

    ContinuousStateSpace::new(a_c, b_c, l, q, DMatrix::zeros(0, n), DMatrix::zeros(0, 1))
}

/// Attach the observation row for the chosen sensing modality.
///
/// For acceleration the measurement is the equation of motion solved for
/// `z''`, so on an augmented system `C = [-k/m, -c/m, -1/m, 0, ...]` and
/// `D = [1/m]`.
pub fn build_observation(
    sys: &ContinuousStateSpace,
    mode: ObservationMode,
    params: &SdofParams,
) -> Result<ContinuousStateSpace> {
    let n = sys.state_dim();
    if n < 2 {
        return Err(Error::dims("observation model expects at least 2 states"));
    }
    let mut c = DMatrix::zeros(1, n);
    let mut d = DMatrix::zeros(1, sys.input_dim());
    match mode {
        ObservationMode::Acceleration => {
            c[(0, 0)] = -params.k / params.m;
            c[(0, 1)] = -params.c / params.m;
            if n > 2 {
                c[(0, 2)] = -1.0 / params.m;
            }
            if sys.input_dim() > 0 {
                d[(0, 0)] = 1.0 / params.m;
            }
        }
        ObservationMode::Velocity => c[(0, 1)] = 1.0,
        ObservationMode::Displacement => c[(0, 0)] = 1.0,
    }
    ContinuousStateSpace::new(
        sys.a_c.clone(),
        sys.b_c.clone(),
        sys.l.clone(),
        sys.q.clone(),
        c,
        d,
    )
}

/// Exact discretization at step `dt`.
///
/// `A_d = exp(A_c dt)`; the process-noise covariance is the matrix-fraction
/// (block-exponential) evaluation of
/// `Q_d = int_0^dt exp(A_c s) L q L^T exp(A_c^T s) ds`,
/// and `B_d` applies a zero-order hold on the input.
pub fn discretize(sys: &ContinuousStateSpace, dt: f64) -> Result<DiscreteStateSpace> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let n = sys.state_dim();
    let m = sys.input_dim();

    let a_d = linalg::expm(&(&sys.a_c * dt));
    if a_d.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix exponential produced non-finite entries"));
    }

    // Van Loan block exponential for the noise integral:
    //   exp([[ -A, W ], [ 0, A^T ]] dt) = [[ ., F12 ], [ 0, F22 ]],
    //   A_d = F22^T, Q_d = F22^T F12.
    let q_d = if sys.l.ncols() == 0 {
        DMatrix::zeros(n, n)
    } else {
        let w = &sys.l * &sys.q * sys.l.transpose();
        let mut block = DMatrix::zeros(2 * n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&(-&sys.a_c));
        block.view_mut((0, n), (n, n)).copy_from(&w);
        block.view_mut((n, n), (n, n)).copy_from(&sys.a_c.transpose());
        let e = linalg::expm(&(block * dt));
        let f12 = e.view((0, n), (n, n)).into_owned();
        let f22 = e.view((n, n), (n, n)).into_owned();
        let q = f22.transpose() * f12;
        // Symmetrize away roundoff.
        0.5 * (&q + q.transpose())
    };
    if q_d.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("noise discretization produced non-finite entries"));
    }

    // Zero-order hold: exp([[A, B], [0, 0]] dt) = [[A_d, B_d], [0, I]].
    let b_d = if m == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let mut block = DMatrix::zeros(n + m, n + m);
        block.view_mut((0, 0), (n, n)).copy_from(&sys.a_c);
        block.view_mut((0, n), (n, m)).copy_from(&sys.b_c);
        let e = linalg::expm(&(block * dt));
        e.view((0, n), (n, m)).into_owned()
    };
    if b_d.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("input discretization produced non-finite entries"));
    }

    Ok(DiscreteStateSpace {
        a_d,
        b_d,
        q_d,
        c: sys.c.clone(),
        d: sys.d.clone(),
        dt,
    })
}

/// Direct state-space form of a GP companion SDE observed through its value
/// selector. Useful for filtering a GP that is measured directly.
pub fn from_gp(gp: &GpSde) -> Result<ContinuousStateSpace> {
    let d = gp.state_dim();
    ContinuousStateSpace::new(
        gp.f.clone(),
        DMatrix::zeros(d, 0),
        DMatrix::from_column_slice(d, 1, gp.l.as_slice()),
        DMatrix::from_element(1, 1, gp.q),
        DMatrix::from_row_slice(1, d, gp.h.transpose().as_slice()),
        DMatrix::zeros(1, 0),
    )
}
