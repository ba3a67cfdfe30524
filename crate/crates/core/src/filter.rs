//! Square-root Kalman filtering, RTS smoothing and backward sampling for
//! linear Gaussian state-space models.
//!
//! Covariances are carried as upper-triangular factors `S` with `S^T S = P`
//! and every update is an orthogonal triangularization of a stacked
//! pre-array; full covariances are never formed or subtracted, which keeps
//! the recursion positive semi-definite even with near-zero measurement
//! noise.
//!
//! Prediction triangularizes `[S A^T; Q^{1/2}]`. The measurement update
//! triangularizes
//!
//! ```text
//! [ R^{1/2}      0 ]        [ S_y   G      ]
//! [ S_p C^T    S_p ]   ->   [ 0     S_filt ]
//! ```
//!
//! from which the innovation factor `S_y`, the gain information `G` and the
//! filtered factor are read off directly. The marginal log-likelihood
//! accumulates the per-step Gaussian innovation densities.
//!
//! For time-invariant models the factor recursion converges to its steady
//! state after a short transient; once consecutive factors agree to roundoff
//! the triangularizations are frozen and only means are propagated, which is
//! what makes filter-in-the-loop MCMC affordable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ssm::DiscreteStateSpace;

/// Whether a trajectory holds filtered or smoothed beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Filtered,
    Smoothed,
}

/// Gaussian state belief with an upper-triangular covariance factor.
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    /// Upper-triangular `S` with `S^T S = P`.
    pub sqrt_cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, sqrt_cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if sqrt_cov.nrows() != n || sqrt_cov.ncols() != n {
            return Err(Error::dims("sqrt_cov must be n x n"));
        }
        for i in 1..n {
            for j in 0..i {
                if sqrt_cov[(i, j)] != 0.0 {
                    return Err(Error::invalid("sqrt_cov must be upper triangular"));
                }
            }
        }
        Ok(GaussianBelief { mean, sqrt_cov })
    }

    /// Belief from a full covariance matrix (PSD root + triangularization).
    pub fn from_mean_cov(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let root = linalg::upper_tri_psd_root(cov)?;
        GaussianBelief::new(mean, root)
    }

    /// Reconstructed covariance `S^T S`.
    pub fn cov(&self) -> DMatrix<f64> {
        self.sqrt_cov.transpose() * &self.sqrt_cov
    }

    /// Diagonal of the covariance (squared column norms of the factor).
    pub fn variance_diag(&self) -> DVector<f64> {
        let n = self.mean.len();
        DVector::from_fn(n, |j, _| self.sqrt_cov.column(j).norm_squared())
    }
}

/// A sequence of beliefs on a uniform time grid.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub beliefs: Vec<GaussianBelief>,
    pub kind: TrajectoryKind,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    /// Mean of state `idx` over time.
    pub fn mean_series(&self, idx: usize) -> Vec<f64> {
        self.beliefs.iter().map(|b| b.mean[idx]).collect()
    }

    /// Variance of state `idx` over time.
    pub fn variance_series(&self, idx: usize) -> Vec<f64> {
        self.beliefs.iter().map(|b| b.variance_diag()[idx]).collect()
    }
}

/// Filter output: filtered beliefs plus the one-step predictions the
/// smoother and backward sampler consume.
#[derive(Debug, Clone)]
pub struct FilteredTrajectory {
    pub trajectory: StateTrajectory,
    pub predicted: Vec<GaussianBelief>,
    pub log_likelihood: f64,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Consecutive steps the factors must agree to roundoff before the
/// covariance recursion is frozen at steady state.
const FREEZE_AFTER: usize = 8;
const FREEZE_TOL: f64 = 1e-13;

struct StepWorkspace {
    n: usize,
    p: usize,
    a_t: DMatrix<f64>,
    c_t: DMatrix<f64>,
    q_root: DMatrix<f64>,
    r_root: DMatrix<f64>,
    pre_pred: DMatrix<f64>,
    pre_upd: DMatrix<f64>,
    s_pred: DMatrix<f64>,
    s_y: DMatrix<f64>,
    gain_t: DMatrix<f64>,
    s_filt: DMatrix<f64>,
    x: DVector<f64>,
    x_pred: DVector<f64>,
    innov: DVector<f64>,
    white: DVector<f64>,
    frozen: bool,
    stable_count: usize,
    ldet_term: f64,
}

impl StepWorkspace {
    fn new(
        model: &DiscreteStateSpace,
        r: &DMatrix<f64>,
        init: &GaussianBelief,
    ) -> Result<Self> {
        let n = model.state_dim();
        let p = model.output_dim();
        if p == 0 {
            return Err(Error::dims("model has no observation row"));
        }
        if init.mean.len() != n {
            return Err(Error::dims("initial belief dimension mismatch"));
        }
        if r.nrows() != p || r.ncols() != p {
            return Err(Error::dims("R must be p x p"));
        }
        let r_eigs = (0.5 * (r + r.transpose())).symmetric_eigen().eigenvalues;
        if r_eigs.iter().any(|&e| e <= 0.0) {
            return Err(Error::invalid("measurement noise covariance must be positive definite"));
        }
        let q_root = linalg::upper_tri_psd_root(&model.q_d)?;
        let r_root = linalg::upper_tri_psd_root(r)?;
        Ok(StepWorkspace {
            n,
            p,
            a_t: model.a_d.transpose(),
            c_t: model.c.transpose(),
            q_root,
            r_root,
            pre_pred: DMatrix::zeros(2 * n, n),
            pre_upd: DMatrix::zeros(n + p, n + p),
            s_pred: DMatrix::zeros(n, n),
            s_y: DMatrix::zeros(p, p),
            gain_t: DMatrix::zeros(p, n),
            s_filt: init.sqrt_cov.clone(),
            x: init.mean.clone(),
            x_pred: DVector::zeros(n),
            innov: DVector::zeros(p),
            white: DVector::zeros(p),
            frozen: false,
            stable_count: 0,
            ldet_term: 0.0,
        })
    }

    /// One predict+update cycle against observation column `t`.
    fn step(
        &mut self,
        model: &DiscreteStateSpace,
        y: &DMatrix<f64>,
        u: &DMatrix<f64>,
        t: usize,
        first: bool,
    ) -> Result<f64> {
        let (n, p) = (self.n, self.p);
        let has_input = model.input_dim() > 0;

        // Mean prediction. The initial belief is already the prior for the
        // first observation, so no transition is applied at t = 0.
        if first {
            self.x_pred.copy_from(&self.x);
        } else {
            self.x_pred.gemv(1.0, &model.a_d, &self.x, 0.0);
            if has_input {
                self.x_pred.gemv(1.0, &model.b_d, &u.column(t), 1.0);
            }
        }

        if !self.frozen {
            let prev_filt = self.s_filt.clone();
            if first {
                self.s_pred.copy_from(&self.s_filt);
            } else {
                // [S A^T; Q^{1/2}] -> triangularize -> S_pred on top.
                self.pre_pred
                    .view_mut((0, 0), (n, n))
                    .gemm(1.0, &self.s_filt, &self.a_t, 0.0);
                self.pre_pred.view_mut((n, 0), (n, n)).copy_from(&self.q_root);
                linalg::triangularize_in_place(&mut self.pre_pred);
                self.s_pred.copy_from(&self.pre_pred.view((0, 0), (n, n)));
            }

            // Update pre-array.
            self.pre_upd.fill(0.0);
            self.pre_upd.view_mut((0, 0), (p, p)).copy_from(&self.r_root);
            self.pre_upd
                .view_mut((p, 0), (n, p))
                .gemm(1.0, &self.s_pred, &self.c_t, 0.0);
            self.pre_upd.view_mut((p, p), (n, n)).copy_from(&self.s_pred);
            linalg::triangularize_in_place(&mut self.pre_upd);
            self.s_y.copy_from(&self.pre_upd.view((0, 0), (p, p)));
            self.gain_t.copy_from(&self.pre_upd.view((0, p), (p, n)));
            self.s_filt.copy_from(&self.pre_upd.view((p, p), (n, n)));

            let mut ldet = 0.0;
            for i in 0..p {
                let d = self.s_y[(i, i)].abs();
                if d <= 1e-150 {
                    return Err(Error::numerical(format!(
                        "innovation covariance numerically singular at step {t}"
                    )));
                }
                ldet += d.ln();
            }
            self.ldet_term = ldet;

            // Steady-state detection on the filtered factor.
            if !first {
                let mut diff = 0.0_f64;
                let mut scale = 0.0_f64;
                for j in 0..n {
                    for i in 0..=j {
                        diff = diff.max((self.s_filt[(i, j)] - prev_filt[(i, j)]).abs());
                        scale = scale.max(self.s_filt[(i, j)].abs());
                    }
                }
                if diff <= FREEZE_TOL * (1.0 + scale) {
                    self.stable_count += 1;
                    if self.stable_count >= FREEZE_AFTER {
                        self.frozen = true;
                    }
                } else {
                    self.stable_count = 0;
                }
            }
        }

        // Innovation and mean update.
        self.innov.copy_from(&y.column(t));
        self.innov.gemv(-1.0, &model.c, &self.x_pred, 1.0);
        if has_input {
            self.innov.gemv(-1.0, &model.d, &u.column(t), 1.0);
        }
        // Whiten: solve S_y^T w = e, then loglik quad term is |w|^2 and the
        // filtered mean is x_pred + G^T w.
        self.white = linalg::solve_upper_transpose_pseudo(&self.s_y, &self.innov);
        let quad = self.white.norm_squared();
        self.x.copy_from(&self.x_pred);
        self.x.gemv_tr(1.0, &self.gain_t, &self.white, 1.0);

        let ll = -0.5 * (p as f64) * LN_2PI - self.ldet_term - 0.5 * quad;
        if !ll.is_finite() {
            return Err(Error::numerical(format!("non-finite innovation density at step {t}")));
        }
        Ok(ll)
    }
}

fn validate_series(
    model: &DiscreteStateSpace,
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> Result<usize> {
    let p = model.output_dim();
    if y.nrows() != p {
        return Err(Error::dims(format!(
            "observations have {} rows, model outputs {}",
            y.nrows(),
            p
        )));
    }
    let t_len = y.ncols();
    if model.input_dim() > 0 {
        if u.nrows() != model.input_dim() || u.ncols() != t_len {
            return Err(Error::dims(format!(
                "inputs must be {} x {}",
                model.input_dim(),
                t_len
            )));
        }
    }
    Ok(t_len)
}

/// Square-root Kalman filter over a full observation record.
///
/// `y` is p x T, `u` is m x T (ignored when the model has no input), `r` the
/// measurement noise covariance and `init` the prior belief for the first
/// observation time. Returns the filtered trajectory together with the
/// marginal log-likelihood.
pub fn sqrt_kalman_filter(
    model: &DiscreteStateSpace,
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
    r: &DMatrix<f64>,
    init: &GaussianBelief,
) -> Result<FilteredTrajectory> {
    let t_len = validate_series(model, y, u)?;
    let mut ws = StepWorkspace::new(model, r, init)?;
    let mut beliefs = Vec::with_capacity(t_len);
    let mut predicted = Vec::with_capacity(t_len);
    let mut loglik = 0.0;
    for t in 0..t_len {
        loglik += ws.step(model, y, u, t, t == 0)?;
        predicted.push(GaussianBelief {
            mean: ws.x_pred.clone(),
            sqrt_cov: ws.s_pred.clone(),
        });
        beliefs.push(GaussianBelief {
            mean: ws.x.clone(),
            sqrt_cov: ws.s_filt.clone(),
        });
    }
    let times = (0..t_len).map(|i| i as f64 * model.dt).collect();
    Ok(FilteredTrajectory {
        trajectory: StateTrajectory {
            times,
            beliefs,
            kind: TrajectoryKind::Filtered,
        },
        predicted,
        log_likelihood: loglik,
    })
}

/// Marginal log-likelihood only; no trajectory storage.
pub fn kalman_log_likelihood(
    model: &DiscreteStateSpace,
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
    r: &DMatrix<f64>,
    init: &GaussianBelief,
) -> Result<f64> {
    let t_len = validate_series(model, y, u)?;
    let mut ws = StepWorkspace::new(model, r, init)?;
    let mut loglik = 0.0;
    for t in 0..t_len {
        loglik += ws.step(model, y, u, t, t == 0)?;
    }
    Ok(loglik)
}

/// Per-step smoother gain and conditional factor, shared by the RTS backward
/// pass and the backward sampler.
///
/// Triangularizing `[[S_f A^T, S_f], [Q^{1/2}, 0]]` yields blocks R11, R12,
/// R22 with `R11^T R11 = P_pred`, `R11^T R12 = A P_f` and
/// `R22^T R22 = P_f - G P_pred G^T` for the gain `G = R12^T R11^{-T}`.
fn smoother_step_factors(
    s_f: &DMatrix<f64>,
    a_t: &DMatrix<f64>,
    q_root: &DMatrix<f64>,
    work: &mut DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = s_f.nrows();
    work.fill(0.0);
    work.view_mut((0, 0), (n, n)).gemm(1.0, s_f, a_t, 0.0);
    work.view_mut((0, n), (n, n)).copy_from(s_f);
    work.view_mut((n, 0), (n, n)).copy_from(q_root);
    linalg::triangularize_in_place(work);
    let r11 = work.view((0, 0), (n, n)).into_owned();
    let r12 = work.view((0, n), (n, n)).into_owned();
    let r22 = work.view((n, n), (n, n)).into_owned();
    let gain = linalg::right_solve_transpose_pseudo(&r12.transpose(), &r11);
    (gain, r22)
}

/// Square-root Rauch-Tung-Striebel smoother.
///
/// The final smoothed belief equals the final filtered belief; earlier steps
/// combine the filtered factor with the smoothed factor of the next step
/// through stacked triangularizations only.
pub fn sqrt_rts_smoother(
    model: &DiscreteStateSpace,
    filtered: &FilteredTrajectory,
) -> Result<StateTrajectory> {
    let t_len = filtered.trajectory.len();
    if filtered.predicted.len() != t_len {
        return Err(Error::dims("filtered and predicted lengths differ"));
    }
    let n = model.state_dim();
    let mut beliefs: Vec<GaussianBelief> = vec![
        GaussianBelief {
            mean: DVector::zeros(n),
            sqrt_cov: DMatrix::zeros(n, n),
        };
        t_len
    ];
    if t_len == 0 {
        return Ok(StateTrajectory {
            times: vec![],
            beliefs,
            kind: TrajectoryKind::Smoothed,
        });
    }
    beliefs[t_len - 1] = filtered.trajectory.beliefs[t_len - 1].clone();

    let a_t = model.a_d.transpose();
    let q_root = linalg::upper_tri_psd_root(&model.q_d)?;
    let mut work = DMatrix::zeros(2 * n, 2 * n);
    let mut stack = DMatrix::zeros(2 * n, n);

    for t in (0..t_len.saturating_sub(1)).rev() {
        let s_f = &filtered.trajectory.beliefs[t].sqrt_cov;
        let (gain, r22) = smoother_step_factors(s_f, &a_t, &q_root, &mut work);

        let residual = &beliefs[t + 1].mean - &filtered.predicted[t + 1].mean;
        let mean = &filtered.trajectory.beliefs[t].mean + &gain * residual;

        stack.view_mut((0, 0), (n, n)).copy_from(&r22);
        stack
            .view_mut((n, 0), (n, n))
            .gemm(1.0, &beliefs[t + 1].sqrt_cov, &gain.transpose(), 0.0);
        linalg::triangularize_in_place(&mut stack);
        let sqrt_cov = stack.view((0, 0), (n, n)).into_owned();

        beliefs[t] = GaussianBelief { mean, sqrt_cov };
    }

    Ok(StateTrajectory {
        times: filtered.trajectory.times.clone(),
        beliefs,
        kind: TrajectoryKind::Smoothed,
    })
}

/// One joint draw from the smoothing distribution, as a T x n matrix.
///
/// The draw recurses backwards through the conditionals
/// `p(x_t | x_{t+1}, y_{1:t})`, each a Gaussian with mean
/// `m_f + G (x_{t+1} - m_pred)` and covariance factor R22. Degenerate
/// factors (zero process or measurement noise) resolve through the
/// pseudo-inverse triangular solves, so the draw collapses onto the smoothed
/// mean in deterministic directions.
pub fn backward_sample(
    model: &DiscreteStateSpace,
    filtered: &FilteredTrajectory,
    rng_seed: u64,
) -> Result<DMatrix<f64>> {
    let draws = backward_sample_many(model, filtered, 1, rng_seed)?;
    Ok(draws.into_iter().next().unwrap())
}

/// Multiple joint draws sharing one pass of gain/factor computations.
pub fn backward_sample_many(
    model: &DiscreteStateSpace,
    filtered: &FilteredTrajectory,
    n_draws: usize,
    rng_seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    let t_len = filtered.trajectory.len();
    let n = model.state_dim();
    if t_len == 0 {
        return Ok(vec![DMatrix::zeros(0, n); n_draws]);
    }
    let a_t = model.a_d.transpose();
    let q_root = linalg::upper_tri_psd_root(&model.q_d)?;
    let mut work = DMatrix::zeros(2 * n, 2 * n);

    // Gains and conditional factors are data independent; compute once.
    let mut gains = Vec::with_capacity(t_len.saturating_sub(1));
    let mut factors = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 0..t_len.saturating_sub(1) {
        let s_f = &filtered.trajectory.beliefs[t].sqrt_cov;
        let (gain, r22) = smoother_step_factors(s_f, &a_t, &q_root, &mut work);
        gains.push(gain);
        factors.push(r22);
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let mut draws = Vec::with_capacity(n_draws);
    let mut xi = DVector::zeros(n);
    for _ in 0..n_draws {
        let mut path = DMatrix::zeros(t_len, n);
        let last = &filtered.trajectory.beliefs[t_len - 1];
        for i in 0..n {
            xi[i] = StandardNormal.sample(&mut rng);
        }
        let mut x = &last.mean + last.sqrt_cov.transpose() * &xi;
        path.row_mut(t_len - 1).tr_copy_from(&x);
        for t in (0..t_len - 1).rev() {
            for i in 0..n {
                xi[i] = StandardNormal.sample(&mut rng);
            }
            let residual = &x - &filtered.predicted[t + 1].mean;
            x = &filtered.trajectory.beliefs[t].mean
                + &gains[t] * residual
                + factors[t].transpose() * &xi;
            path.row_mut(t).tr_copy_from(&x);
        }
        draws.push(path);
    }
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{matern_to_sde, KernelSpec, MaternSmoothness};
    use crate::ssm::{self, build_sdof, discretize, SdofParams};

    fn scalar_model(a: f64, q: f64, c: f64, dt: f64) -> DiscreteStateSpace {
        DiscreteStateSpace {
            a_d: DMatrix::from_element(1, 1, a),
            b_d: DMatrix::zeros(1, 0),
            q_d: DMatrix::from_element(1, 1, q),
            c: DMatrix::from_element(1, 1, c),
            d: DMatrix::zeros(1, 0),
            dt,
        }
    }

    #[test]
    fn single_observation_loglik_closed_form() {
        // Prior N(0,1), R = 1, y = 0: marginal N(0, 2).
        let model = scalar_model(1.0, 0.0, 1.0, 1.0);
        let y = DMatrix::from_element(1, 1, 0.0);
        let u = DMatrix::zeros(0, 0);
        let r = DMatrix::from_element(1, 1, 1.0);
        let init = GaussianBelief::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let out = sqrt_kalman_filter(&model, &y, &u, &r, &init).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln();
        assert!((out.log_likelihood - want).abs() < 1e-12);
        assert!((want + 1.26551).abs() < 1e-5);
    }

    #[test]
    fn zero_length_record() {
        let model = scalar_model(1.0, 0.0, 1.0, 1.0);
        let y = DMatrix::zeros(1, 0);
        let u = DMatrix::zeros(0, 0);
        let r = DMatrix::from_element(1, 1, 1.0);
        let init = GaussianBelief::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let out = sqrt_kalman_filter(&model, &y, &u, &r, &init).unwrap();
        assert_eq!(out.trajectory.len(), 0);
        assert_eq!(out.log_likelihood, 0.0);
    }

    /// Deterministic oscillator, vanishing noise: the filter must lock onto
    /// the true states and the smoother onto the simulation.
    #[test]
    fn noiseless_deterministic_limit() {
        let p = SdofParams::new(1.0, 25.0, 0.5).unwrap();
        let sys = build_sdof(&p).unwrap();
        let sys = ssm::build_observation(&sys, ssm::ObservationMode::Velocity, &p).unwrap();
        let model = discretize(&sys, 0.01).unwrap();
        let t_len = 300;
        let mut x = DVector::from_vec(vec![1.0, 0.0]);
        let mut xs = Vec::new();
        let mut y = DMatrix::zeros(1, t_len);
        let u = DMatrix::zeros(1, t_len);
        for t in 0..t_len {
            if t > 0 {
                x = &model.a_d * &x;
            }
            xs.push(x.clone());
            y[(0, t)] = (&model.c * &x)[(0, 0)];
        }
        let r = DMatrix::from_element(1, 1, 1e-16);
        let init = GaussianBelief::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let out = sqrt_kalman_filter(&model, &y, &u, &r, &init).unwrap();
        for (b, truth) in out.trajectory.beliefs.iter().zip(&xs) {
            assert!((&b.mean - truth).norm() < 1e-8);
        }
        let smoothed = sqrt_rts_smoother(&model, &out).unwrap();
        for (b, truth) in smoothed.beliefs.iter().zip(&xs) {
            assert!((&b.mean - truth).norm() < 1e-6);
        }
        // Zero process noise, vanishing measurement noise: a joint draw
        // collapses onto the smoothed mean path.
        let draw = backward_sample(&model, &out, 99).unwrap();
        for (t, b) in smoothed.beliefs.iter().enumerate() {
            for i in 0..2 {
                assert!((draw[(t, i)] - b.mean[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn smoother_final_step_equals_filtered() {
        let gp = matern_to_sde(&KernelSpec::new(MaternSmoothness::Half, 1.0, 0.5).unwrap()).unwrap();
        let model = discretize(&ssm::from_gp(&gp).unwrap(), 0.1).unwrap();
        let t_len = 50;
        let y = DMatrix::from_fn(1, t_len, |_, t| (t as f64 * 0.3).sin());
        let u = DMatrix::zeros(0, 0);
        let r = DMatrix::from_element(1, 1, 0.2);
        let init = GaussianBelief::from_mean_cov(DVector::zeros(1), &gp.p_inf).unwrap();
        let out = sqrt_kalman_filter(&model, &y, &u, &r, &init).unwrap();
        let smoothed = sqrt_rts_smoother(&model, &out).unwrap();
        let last_f = &out.trajectory.beliefs[t_len - 1];
        let last_s = &smoothed.beliefs[t_len - 1];
        assert_eq!(last_f.mean, last_s.mean);
        assert_eq!(last_f.sqrt_cov, last_s.sqrt_cov);
    }

    #[test]
    fn smoothed_variance_never_exceeds_filtered() {
        let gp =
            matern_to_sde(&KernelSpec::new(MaternSmoothness::ThreeHalves, 2.0, 0.4).unwrap())
                .unwrap();
        let model = discretize(&ssm::from_gp(&gp).unwrap(), 0.05).unwrap();
        let t_len = 120;
        let y = DMatrix::from_fn(1, t_len, |_, t| (t as f64 * 0.2).cos() * 1.5);
        let u = DMatrix::zeros(0, 0);
        let r = DMatrix::from_element(1, 1, 0.1);
        let init = GaussianBelief::from_mean_cov(DVector::zeros(2), &gp.p_inf).unwrap();
        let out = sqrt_kalman_filter(&model, &y, &u, &r, &init).unwrap();
        let smoothed = sqrt_rts_smoother(&model, &out).unwrap();
        for t in 0..t_len {
            let vf = out.trajectory.beliefs[t].variance_diag();
            let vs = smoothed.beliefs[t].variance_diag();
            for i in 0..2 {
                assert!(vs[i] <= vf[i] + 1e-12, "t={t} state={i}: {} > {}", vs[i], vf[i]);
            }
        }
    }

    #[test]
    fn covariance_factors_imply_psd() {
        let gp = matern_to_sde(&KernelSpec::new(MaternSmoothness::Half, 1.0, 0.2).unwrap()).unwrap();
        let model = discretize(&ssm::from_gp(&gp).unwrap(), 0.02).unwrap();
        let t_len = 200;
        let y = DMatrix::from_fn(1, t_len, |_, t| (t as f64).sin());
        let u = DMatrix::zeros(0, 0);
        let r = DMatrix::from_element(1, 1, 1e-10);
        let init = GaussianBelief::from_mean_cov(DVector::zeros(1), &gp.p_inf).unwrap();
        let out = sqrt_kalman_filter(&model, &y, &u, &r, &init).unwrap();
        for b in &out.trajectory.beliefs {
            let eigs = b.cov().symmetric_eigen().eigenvalues;
            assert!(eigs.iter().all(|&e| e >= -1e-14));
        }
    }

    #[test]
    fn singular_innovation_names_step() {
        // Zero process noise, zero-like measurement noise is rejected by the
        // R > 0 precondition; singular innovation is reached with admissible
        // R only through a broken factor, so drive it via C = 0 and tiny R.
        let mut model = scalar_model(1.0, 0.0, 0.0, 1.0);
        model.c[(0, 0)] = 0.0;
        let y = DMatrix::from_element(1, 3, 1.0);
        let u = DMatrix::zeros(0, 0);
        let r = DMatrix::from_element(1, 1, 1e-305);
        let init = GaussianBelief::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let err = sqrt_kalman_filter(&model, &y, &u, &r, &init).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("step 0"), "{msg}");
    }

    #[test]
    fn deterministic_across_runs() {
        let gp = matern_to_sde(&KernelSpec::new(MaternSmoothness::Half, 0.7, 0.9).unwrap()).unwrap();
        let model = discretize(&ssm::from_gp(&gp).unwrap(), 0.05).unwrap();
        let y = DMatrix::from_fn(1, 400, |_, t| ((t * 7 % 13) as f64 - 6.0) * 0.1);
        let u = DMatrix::zeros(0, 0);
        let r = DMatrix::from_element(1, 1, 0.05);
        let init = GaussianBelief::from_mean_cov(DVector::zeros(1), &gp.p_inf).unwrap();
        let a = kalman_log_likelihood(&model, &y, &u, &r, &init).unwrap();
        let b = kalman_log_likelihood(&model, &y, &u, &r, &init).unwrap();
        assert_eq!(a, b);
        let c = sqrt_kalman_filter(&model, &y, &u, &r, &init).unwrap().log_likelihood;
        assert_eq!(a, c);
    }
}
