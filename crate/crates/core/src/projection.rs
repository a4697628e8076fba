//! Dense linear algebra for the measurement operator.
//!
//! A [`SensingSystem`] caches the pseudoinverse `A^+`, the null-space
//! projector `P = I - A^+ A` and the offset `Q = A^+ y`, so that mapping any
//! point onto `{x : Ax = y}` costs one matrix-vector product.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::block::BlockSupport;
use crate::error::{Error, Result};

/// Relative numerical-rank threshold: singular values at or below
/// `DEFAULT_RANK_TOL * sigma_max` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SensingSystem {
    a: DMatrix<f64>,
    y: DVector<f64>,
    a_pinv: DMatrix<f64>,
    p: DMatrix<f64>,
    q: DVector<f64>,
}

impl SensingSystem {
    pub fn build(a: DMatrix<f64>, y: DVector<f64>, rank_tol: f64) -> Result<Self> {
        if y.len() != a.nrows() {
            return Err(Error::Dimension(format!(
                "measurement has {} entries, matrix has {} rows",
                y.len(),
                a.nrows()
            )));
        }
        let a_pinv = pinv(&a, rank_tol)?;
        let n = a.ncols();
        let p = DMatrix::identity(n, n) - &a_pinv * &a;
        let q = &a_pinv * &y;
        Ok(Self { a, y, a_pinv, p, q })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn a_pinv(&self) -> &DMatrix<f64> {
        &self.a_pinv
    }

    pub fn projector(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_cols(&self) -> usize {
        self.a.ncols()
    }

    /// `P z + Q`, the orthogonal projection of `z` onto the solution space.
    pub fn project(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.num_cols() {
            return Err(Error::Dimension(format!(
                "cannot project a length-{} vector in dimension {}",
                z.len(),
                self.num_cols()
            )));
        }
        let mut out = self.q.clone();
        self.project_into(z, &mut out);
        Ok(out)
    }

    /// Allocation-free projection for the solver loop; lengths are trusted.
    pub(crate) fn project_into(&self, z: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.q);
        out.gemv(1.0, &self.p, z, 1.0);
    }

    /// `||A x - y||`.
    pub fn feasibility_residual(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.y).norm()
    }
}

pub fn build_system(a: DMatrix<f64>, y: DVector<f64>, rank_tol: f64) -> Result<SensingSystem> {
    SensingSystem::build(a, y, rank_tol)
}

/// Moore-Penrose pseudoinverse via SVD for a matrix of full rank
/// `min(m, n)`.
pub fn pinv(a: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    if !(rank_tol > 0.0) {
        return Err(Error::Parameter(format!("rank tolerance must be positive, got {rank_tol}")));
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(DMatrix::zeros(n, m));
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > rank_tol * smax) {
        let kind = if m <= n { "row" } else { "column" };
        return Err(Error::RankDeficient(format!(
            "{m}x{n} matrix lacks full {kind} rank: smallest singular value {smin:e} <= {rank_tol:e} * {smax:e}"
        )));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut v_scaled = v_t.transpose();
    for (j, mut col) in v_scaled.column_iter_mut().enumerate() {
        col /= sv[j];
    }
    Ok(v_scaled * u.transpose())
}

/// Left pseudoinverse `(B^T B)^{-1} B^T` of a tall matrix, computed by SVD.
pub fn pinv_tall(b: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    if b.nrows() < b.ncols() {
        return Err(Error::Dimension(format!(
            "left pseudoinverse needs rows >= columns, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    pinv(b, rank_tol)
}

/// Columns of `a` belonging to the blocks of `support`, in block order.
pub fn submatrix_cols(a: &DMatrix<f64>, support: &BlockSupport) -> Result<DMatrix<f64>> {
    if support.structure().total_len() != a.ncols() {
        return Err(Error::Dimension(format!(
            "support covers {} columns, matrix has {}",
            support.structure().total_len(),
            a.ncols()
        )));
    }
    let cols = support.entry_indices();
    Ok(a.select_columns(cols.iter()))
}

/// Largest singular value; zero for empty matrices.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Matrix file: a line `m n`, then `m` rows of `n` space-separated values.
pub fn write_matrix(a: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", a.nrows(), a.ncols());
    for row in a.row_iter() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn read_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| Error::Parse(format!("bad matrix header {header:?}: {e}"))))
        .collect::<Result<_>>()?;
    let [m, n] = dims[..] else {
        return Err(Error::Parse(format!("matrix header must be `m n`, got {header:?}")));
    };
    let mut data = Vec::with_capacity(m * n);
    let mut rows = 0;
    for line in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| Error::Parse(format!("bad value {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::Parse(format!(
                "row {} has {} values, expected {n}",
                rows + 1,
                row.len()
            )));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != m {
        return Err(Error::Parse(format!("expected {m} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(m, n, &data))
}
