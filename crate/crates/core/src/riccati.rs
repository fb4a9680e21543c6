//! Continuous-time algebraic Riccati equation via the matrix sign function.
//!
//! Solves `A^T X + X A - X G X + Q = 0` for the stabilising `X` by
//! computing `sign(H)` of the Hamiltonian `H = [A, -G; -Q, -A^T]` with a
//! determinant-scaled Newton iteration and reading `X` off the stable
//! invariant subspace `null(sign(H) + I)`.

use crate::error::{DuioError, Result};
use crate::linalg::{Mat, RankPolicy};

const MAX_ITER: usize = 100;
const SIGN_TOL: f64 = 1e-13;

pub fn solve_care(a: &Mat, g: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n || g.shape() != (n, n) || q.shape() != (n, n) {
        return Err(DuioError::Dimension("CARE: A, G, Q must be square of equal size".into()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let w = matrix_sign(h)?;
    let w11 = w.view((0, 0), (n, n));
    let w12 = w.view((0, n), (n, n));
    let w21 = w.view((n, 0), (n, n));
    let w22 = w.view((n, n), (n, n));
    let eye = Mat::identity(n, n);

    let mut lhs = Mat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = Mat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));

    let x = RankPolicy::default().pinv(&lhs) * rhs;
    let x = (&x + x.transpose()) * 0.5;
    if !crate::linalg::is_finite(&x) {
        return Err(DuioError::Numerics("CARE solution is not finite".into()));
    }
    let residual = a.transpose() * &x + &x * a - &x * g * &x + q;
    let scale = 1.0 + q.norm() + (a.norm() + g.norm() * x.norm()) * x.norm();
    if residual.norm() > 1e-8 * scale {
        return Err(DuioError::Numerics(format!(
            "CARE residual {:.3e} too large; the Hamiltonian likely has imaginary-axis eigenvalues",
            residual.norm()
        )));
    }
    Ok(x)
}

fn matrix_sign(mut z: Mat) -> Result<Mat> {
    let dim = z.nrows() as f64;
    for _ in 0..MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| DuioError::Numerics("sign iteration hit a singular iterate".into()))?;
        let c = if det.is_finite() && det != 0.0 {
            det.abs().powf(1.0 / dim)
        } else {
            1.0
        };
        let next = (&z / c + inv * c) * 0.5;
        let delta = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if !size.is_finite() {
            return Err(DuioError::Numerics("sign iteration diverged".into()));
        }
        if delta <= SIGN_TOL * size.max(1.0) * 10.0 {
            return Ok(z);
        }
    }
    Err(DuioError::Numerics(format!(
        "sign iteration did not converge in {MAX_ITER} steps"
    )))
}
