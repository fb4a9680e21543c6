//! Dense linear-algebra helpers shared by the design and data modules.
//!
//! Every rank decision in the crate goes through [`RankPolicy`], so the
//! model-based checks and their data-based counterparts agree on what
//! "numerically zero" means.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex<f64>>;

/// Singular values below `max(m, n) * eps * sigma_1 * multiplier` count as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    pub multiplier: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self { multiplier: 1e3 }
    }
}

impl RankPolicy {
    pub fn new(multiplier: f64) -> Self {
        Self { multiplier }
    }

    pub fn threshold(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        rows.max(cols) as f64 * f64::EPSILON * sigma_max * self.multiplier
    }

    pub fn rank(&self, m: &Mat) -> usize {
        self.rank_report(m).rank
    }

    /// Rank with the threshold taken relative to `max(sigma_1, reference)`,
    /// for products whose own scale can collapse to rounding noise.
    pub fn rank_relative(&self, m: &Mat, reference: f64) -> usize {
        let sv = singular_values(m);
        let sigma_max = sv.first().copied().unwrap_or(0.0).max(reference);
        let threshold = self.threshold(m.nrows(), m.ncols(), sigma_max);
        sv.iter().filter(|&&s| s > threshold && s > 0.0).count()
    }

    pub fn rank_report(&self, m: &Mat) -> RankReport {
        let singular_values = singular_values(m);
        let sigma_max = singular_values.first().copied().unwrap_or(0.0);
        let threshold = self.threshold(m.nrows(), m.ncols(), sigma_max);
        let rank = singular_values
            .iter()
            .filter(|&&s| s > threshold && s > 0.0)
            .count();
        RankReport {
            rank,
            threshold,
            singular_values,
        }
    }

    /// Moore-Penrose pseudoinverse with singular values truncated by this policy.
    pub fn pinv(&self, m: &Mat) -> Mat {
        self.pinv_relative(m, 0.0)
    }

    /// Pseudoinverse truncated like [`Self::rank_relative`].
    pub fn pinv_relative(&self, m: &Mat, reference: f64) -> Mat {
        let (r, c) = m.shape();
        if r == 0 || c == 0 {
            return Mat::zeros(c, r);
        }
        let svd = m.clone().svd(true, true);
        let u = svd.u.expect("svd computed with u");
        let v_t = svd.v_t.expect("svd computed with v_t");
        let sigma_max = svd.singular_values.max().max(reference);
        let threshold = self.threshold(r, c, sigma_max);
        let mut out = Mat::zeros(c, r);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > threshold && s > 0.0 {
                out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
            }
        }
        out
    }

    /// Orthonormal basis (as columns) of the left null space `{v : v^T m = 0}`.
    pub fn left_null_space(&self, m: &Mat) -> Mat {
        let (r, c) = m.shape();
        if r == 0 {
            return Mat::zeros(0, 0);
        }
        if c == 0 {
            return Mat::identity(r, r);
        }
        // Pad with zero columns so the thin U factor is square.
        let padded = Mat::from_fn(r, c + r, |i, j| if j < c { m[(i, j)] } else { 0.0 });
        let svd = padded.svd(true, false);
        let u = svd.u.expect("svd computed with u");
        let sigma_max = svd.singular_values.max();
        let threshold = self.threshold(r, c, sigma_max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| !(svd.singular_values[k] > threshold && svd.singular_values[k] > 0.0))
            .collect();
        Mat::from_fn(r, keep.len(), |i, j| u[(i, keep[j])])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub threshold: f64,
    pub singular_values: Vec<f64>,
}

/// Singular values sorted in decreasing order; empty for degenerate shapes.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part of the spectrum; `-inf` for the empty matrix.
pub fn spectral_abscissa(m: &Mat) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Spectral norm of a symmetric matrix as its largest-magnitude eigenvalue.
pub fn symmetric_spectral_norm(m: &Mat) -> f64 {
    symmetric_eigenvalues(m)
        .iter()
        .map(|l| l.abs())
        .fold(0.0, f64::max)
}

pub fn block_diag(blocks: &[Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Stack matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column counts differ");
        out.view_mut((r0, 0), b.shape()).copy_from(b);
        r0 += b.nrows();
    }
    out
}

/// Place matrices with equal row counts side by side.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row counts differ");
        out.view_mut((0, c0), b.shape()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex::new(x, 0.0))
}

/// Settings for the PBH detectability test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbhOptions {
    /// Eigenvalues with real part `>= -margin` are treated as not asymptotically stable.
    pub margin: f64,
    /// Relative singular-value floor for declaring the PBH matrix rank deficient.
    pub rank_tol: f64,
}

impl Default for PbhOptions {
    fn default() -> Self {
        Self {
            margin: 1e-6,
            rank_tol: 1e-7,
        }
    }
}

/// Smallest singular value of `[s I - a; c]`, normalised by its largest.
pub fn pbh_margin(a: &Mat, c: &Mat, s: Complex<f64>) -> f64 {
    let n = a.nrows();
    let mut top = to_complex(a).map(|x| -x);
    for k in 0..n {
        top[(k, k)] += s;
    }
    let stacked = if c.nrows() == 0 {
        top
    } else {
        let cc = to_complex(c);
        let mut out = CMat::zeros(n + c.nrows(), n);
        out.view_mut((0, 0), (n, n)).copy_from(&top);
        out.view_mut((n, 0), cc.shape()).copy_from(&cc);
        out
    };
    let sv = stacked.svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 {
        0.0
    } else {
        min / max.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityReport {
    pub detectable: bool,
    /// Eigenvalues that were PBH-tested, as `(re, im, normalised sigma_min)`.
    pub tested: Vec<(f64, f64, f64)>,
}

/// PBH detectability of `(a, c)` at every eigenvalue of `a` with `Re >= -margin`.
pub fn detectability(a: &Mat, c: &Mat, opts: PbhOptions) -> DetectabilityReport {
    let mut tested = Vec::new();
    let mut detectable = true;
    for l in eigenvalues(a) {
        if l.re < -opts.margin {
            continue;
        }
        let m = pbh_margin(a, c, l);
        if m <= opts.rank_tol {
            detectable = false;
        }
        tested.push((l.re, l.im, m));
    }
    DetectabilityReport { detectable, tested }
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_degenerate_shapes_is_zero() {
        let p = RankPolicy::default();
        assert_eq!(p.rank(&Mat::zeros(0, 4)), 0);
        assert_eq!(p.rank(&Mat::zeros(3, 0)), 0);
        assert_eq!(p.rank(&Mat::zeros(3, 3)), 0);
    }

    #[test]
    fn pinv_of_unit_vector() {
        let e1 = Mat::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let p = RankPolicy::default().pinv(&e1);
        assert_eq!(p.shape(), (1, 3));
        assert!((p - e1.transpose()).norm() < 1e-15);
    }

    #[test]
    fn pinv_satisfies_penrose_identities() {
        let m = Mat::from_row_slice(3, 4, &[1., 2., 3., 4., 2., 4., 6., 8., 0., 1., 0., 1.]);
        let p = RankPolicy::default().pinv(&m);
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        assert!((&p * &m * &p - &p).norm() < 1e-12);
        assert_eq!(RankPolicy::default().rank(&m), 2);
    }

    #[test]
    fn left_null_space_annihilates() {
        let m = Mat::from_row_slice(3, 2, &[1., 0., 0., 1., 1., 1.]);
        let n = RankPolicy::default().left_null_space(&m);
        assert_eq!(n.ncols(), 1);
        assert!((n.transpose() * &m).norm() < 1e-14);
        let tall = Mat::from_row_slice(2, 5, &[1., 2., 3., 4., 5., 2., 4., 6., 8., 10.]);
        let n = RankPolicy::default().left_null_space(&tall);
        assert_eq!(n.ncols(), 1);
        assert!((n.transpose() * &tall).norm() < 1e-13);
    }

    #[test]
    fn pbh_flags_unobservable_unstable_mode() {
        let a = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        let c = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(!detectability(&a, &c, PbhOptions::default()).detectable);
        let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(detectability(&a, &c, PbhOptions::default()).detectable);
    }

    #[test]
    fn block_diag_and_stacks() {
        let a = Mat::identity(2, 2);
        let b = Mat::from_element(1, 3, 2.0);
        let d = block_diag(&[a.clone(), b.clone()]);
        assert_eq!(d.shape(), (3, 5));
        assert_eq!(d[(2, 4)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
        assert_eq!(vstack(&[&a, &a]).shape(), (4, 2));
        assert_eq!(hstack(&[&a, &a]).shape(), (2, 4));
    }
}
