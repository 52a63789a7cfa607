//! Thin helpers over `faer` dense factorizations.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::linalg::solvers::{Llt, PartialPivLu, Solve};
use faer::linalg::triangular_solve;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::qr::no_pivoting::factor::{qr_in_place, qr_in_place_scratch, recommended_block_size};
use faer::{Accum, Mat, MatMut, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pivot ratio above which an LU factorization is treated as singular.
const MAX_PIVOT_RATIO: f64 = 1e15;

pub(crate) fn col_from_slice(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub(crate) fn col_to_vec(m: MatRef<'_, f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// LU with partial pivoting plus a cheap pivot-ratio condition estimate.
pub(crate) fn checked_lu(a: MatRef<'_, f64>, what: &str) -> Result<PartialPivLu<f64>> {
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition.is_finite() && condition < MAX_PIVOT_RATIO) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition,
        });
    }
    Ok(lu)
}

pub(crate) fn checked_lu_complex(
    a: MatRef<'_, Complex64>,
    what: &str,
) -> Result<PartialPivLu<Complex64>> {
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..u.nrows() {
        let d = u[(i, i)].norm();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition.is_finite() && condition < MAX_PIVOT_RATIO) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition,
        });
    }
    Ok(lu)
}

/// Solves `a x = b` for a single right-hand side.
pub(crate) fn lu_solve(a: MatRef<'_, f64>, b: &[f64], what: &str) -> Result<Vec<f64>> {
    let lu = checked_lu(a, what)?;
    let x = lu.solve(col_from_slice(b));
    Ok(col_to_vec(x.as_ref()))
}

pub(crate) fn cholesky(a: MatRef<'_, f64>, what: &str) -> Result<Llt<f64>> {
    a.llt(Side::Lower)
        .map_err(|_| Error::NotPositiveDefinite(what.to_string()))
}

/// Overwrites the lower triangle of `a` with its Cholesky factor and returns
/// `log det a`. The strict upper triangle is neither read nor written.
pub(crate) fn cholesky_lower_in_place(a: MatMut<'_, f64>, what: &str) -> Result<f64> {
    let par = faer::get_global_parallelism();
    let mut buf = MemBuffer::new(cholesky_in_place_scratch::<f64>(a.nrows(), par, Default::default()));
    let mut a = a;
    cholesky_in_place(a.as_mut(), Default::default(), par, MemStack::new(&mut buf), Default::default())
        .map_err(|_| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(2.0 * (0..a.nrows()).map(|i| a[(i, i)].ln()).sum::<f64>())
}

/// Upper-triangular `R` (`k x k`, `k = min(m, n)`) of a Householder QR of
/// `a`, computed in place so that tall inputs are not copied.
pub(crate) fn qr_r_in_place(mut a: Mat<f64>) -> Mat<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let k = m.min(n);
    let par = faer::get_global_parallelism();
    let block = recommended_block_size::<f64>(m, n);
    let mut coeff = Mat::<f64>::zeros(block, k);
    let mut buf = MemBuffer::new(qr_in_place_scratch::<f64>(m, n, block, par, Default::default()));
    qr_in_place(a.as_mut(), coeff.as_mut(), par, MemStack::new(&mut buf), Default::default());
    Mat::from_fn(k, n, |i, j| if i <= j { a[(i, j)] } else { 0.0 })
}

/// `log det` of the matrix factored as `L L^T`.
pub(crate) fn llt_log_det(llt: &Llt<f64>) -> f64 {
    let l = llt.L();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mat_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let y = a * col_from_slice(x);
    col_to_vec(y.as_ref())
}

/// Solves `l x = b` in place for lower-triangular `l`.
pub(crate) fn lower_solve_in_place(l: MatRef<'_, f64>, rhs: &mut Mat<f64>) {
    triangular_solve::solve_lower_triangular_in_place(l, rhs.as_mut(), faer::get_global_parallelism());
}

/// Lower triangle of `a^T a`; the strict upper part is left zero.
pub(crate) fn gram_lower(a: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.ncols(), a.ncols());
    triangular::matmul(
        out.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        a.transpose(),
        BlockStructure::Rectangular,
        a,
        BlockStructure::Rectangular,
        1.0,
        faer::get_global_parallelism(),
    );
    out
}

pub(crate) fn norm_sqr(v: &[f64]) -> f64 {
    dot(v, v)
}
