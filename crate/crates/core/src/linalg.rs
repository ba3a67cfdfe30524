//! Small dense linear-algebra kernels shared by the filter and model code.
//!
//! Everything here operates on `nalgebra` dynamic matrices. The
//! triangularization routine is written by hand because it sits in the
//! innermost filter loop and must not allocate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold below which a triangular diagonal entry is treated as
/// zero when solving (pseudo-inverse behaviour on degenerate factors).
pub const TRI_SOLVE_EPS: f64 = 1e-12;

/// In-place Householder triangularization.
///
/// Overwrites `m` (r x c, r >= 1) so that its upper triangle holds the R
/// factor of a QR decomposition of the original matrix and everything below
/// the diagonal is zero. Only R is produced; the orthogonal factor is
/// discarded. Since `R^T R = M^T M`, this turns a stacked pre-array of
/// covariance square roots into a triangular square root.
pub fn triangularize_in_place(m: &mut DMatrix<f64>) {
    let (rows, cols) = m.shape();
    if rows < 2 {
        return;
    }
    let kmax = cols.min(rows - 1);
    for k in 0..kmax {
        let mut norm2 = 0.0;
        for i in k..rows {
            let v = m[(i, k)];
            norm2 += v * v;
        }
        if norm2 <= f64::MIN_POSITIVE {
            for i in (k + 1)..rows {
                m[(i, k)] = 0.0;
            }
            continue;
        }
        let norm = norm2.sqrt();
        let alpha = if m[(k, k)] >= 0.0 { -norm } else { norm };
        let v0 = m[(k, k)] - alpha;
        let mut vtv = v0 * v0;
        for i in (k + 1)..rows {
            let v = m[(i, k)];
            vtv += v * v;
        }
        if vtv > f64::MIN_POSITIVE {
            // Reflect the remaining columns: col -= 2 (v . col) / (v . v) * v,
            // where v = (v0, m[k+1.., k]).
            for j in (k + 1)..cols {
                let mut dot = v0 * m[(k, j)];
                for i in (k + 1)..rows {
                    dot += m[(i, k)] * m[(i, j)];
                }
                let s = 2.0 * dot / vtv;
                m[(k, j)] -= s * v0;
                for i in (k + 1)..rows {
                    m[(i, j)] -= s * m[(i, k)];
                }
            }
        }
        m[(k, k)] = alpha;
        for i in (k + 1)..rows {
            m[(i, k)] = 0.0;
        }
    }
}

/// Upper-triangular square root `S` of a symmetric PSD matrix, `S^T S = p`.
///
/// Uses a symmetric eigendecomposition with negative eigenvalues clamped to
/// zero, so it tolerates semi-definite inputs (rank-deficient process noise,
/// zero covariances).
pub fn upper_tri_psd_root(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::dims("matrix must be square"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite matrix entries"));
    }
    let sym = 0.5 * (p + p.transpose());
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let floor = -1e-10 * scale.max(1e-300);
    let mut root = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < floor {
            return Err(Error::numerical(format!(
                "matrix is not positive semi-definite (eigenvalue {lam:.3e})"
            )));
        }
        let s = lam.max(0.0).sqrt();
        // Row i of root = s_i * v_i^T so that root^T root = V diag(lam) V^T.
        for j in 0..n {
            root[(i, j)] = s * eig.eigenvectors[(j, i)];
        }
    }
    triangularize_in_place(&mut root);
    Ok(root)
}

/// Solve the continuous Lyapunov equation `F P + P F^T + W = 0` for P.
///
/// Dense Kronecker formulation; intended for the small companion-form
/// matrices of GP kernels (d <= 8 or so).
pub fn solve_lyapunov(f: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if f.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(Error::dims("Lyapunov operands must be square and conformal"));
    }
    if !is_hurwitz(f) {
        return Err(Error::invalid("state matrix is not Hurwitz stable"));
    }
    let m = n * n;
    let mut lhs = DMatrix::zeros(m, m);
    // vec(F P) = (I (x) F) vec(P); vec(P F^T) = (F (x) I) vec(P).
    for col in 0..n {
        for row in 0..n {
            for k in 0..n {
                lhs[(col * n + row, col * n + k)] += f[(row, k)];
                lhs[(col * n + row, k * n + row)] += f[(col, k)];
            }
        }
    }
    let mut rhs = DVector::zeros(m);
    for col in 0..n {
        for row in 0..n {
            rhs[col * n + row] = -w[(row, col)];
        }
    }
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("singular Lyapunov system"))?;
    let mut p = DMatrix::zeros(n, n);
    for col in 0..n {
        for row in 0..n {
            p[(row, col)] = sol[col * n + row];
        }
    }
    // Enforce exact symmetry.
    let p = 0.5 * (&p + p.transpose());
    Ok(p)
}

/// True when all eigenvalues of `f` have strictly negative real part.
pub fn is_hurwitz(f: &DMatrix<f64>) -> bool {
    if f.is_empty() {
        return true;
    }
    f.clone()
        .complex_eigenvalues()
        .iter()
        .all(|l| l.re < 0.0)
}

/// Solve `S y = b` for upper-triangular `S` by back substitution.
///
/// Diagonal entries whose magnitude falls below `TRI_SOLVE_EPS` times the
/// largest diagonal magnitude are treated as exact zeros and the
/// corresponding solution entries are zeroed (minimum-norm behaviour on
/// degenerate factors).
pub fn solve_upper_pseudo(s: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = s.nrows();
    let dmax = (0..n).fold(0.0_f64, |a, i| a.max(s[(i, i)].abs()));
    let tol = TRI_SOLVE_EPS * dmax.max(f64::MIN_POSITIVE);
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= s[(i, j)] * x[j];
        }
        let d = s[(i, i)];
        x[i] = if d.abs() <= tol { 0.0 } else { acc / d };
    }
    x
}

/// Solve `S^T y = b` for upper-triangular `S` (forward substitution), with
/// the same degenerate-diagonal handling as [`solve_upper_pseudo`].
pub fn solve_upper_transpose_pseudo(s: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = s.nrows();
    let dmax = (0..n).fold(0.0_f64, |a, i| a.max(s[(i, i)].abs()));
    let tol = TRI_SOLVE_EPS * dmax.max(f64::MIN_POSITIVE);
    let mut x = b.clone();
    for i in 0..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= s[(j, i)] * x[j];
        }
        let d = s[(i, i)];
        x[i] = if d.abs() <= tol { 0.0 } else { acc / d };
    }
    x
}

/// Compute `X = B S^{-T}` for upper-triangular `S`, i.e. solve `X S^T = B`
/// row by row with pseudo-inverse handling of zero diagonal entries.
pub fn right_solve_transpose_pseudo(b: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let rows = b.nrows();
    let dmax = (0..n).fold(0.0_f64, |a, i| a.max(s[(i, i)].abs()));
    let tol = TRI_SOLVE_EPS * dmax.max(f64::MIN_POSITIVE);
    let mut x = b.clone();
    // X S^T = B  <=>  for each row r: B[r,i] = sum_{j>=i} X[r,j] S[i,j],
    // so columns of X resolve right to left.
    for i in (0..n).rev() {
        let d = s[(i, i)];
        for r in 0..rows {
            let mut acc = x[(r, i)];
            for j in (i + 1)..n {
                acc -= x[(r, j)] * s[(i, j)];
            }
            x[(r, i)] = if d.abs() <= tol { 0.0 } else { acc / d };
        }
    }
    x
}

/// Matrix exponential (Pade scaling-and-squaring via nalgebra).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}
