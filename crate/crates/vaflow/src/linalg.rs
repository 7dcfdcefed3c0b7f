//! Minimal dense linear algebra for small matrices.
//!
//! Everything here is sized for the Jacobians of this crate (a handful of
//! rows and columns), so the implementations favor determinism and clarity
//! over asymptotics: the SVD is a cyclic one-sided Jacobi iteration, which at
//! these sizes is accurate to close to machine precision and produces the
//! same factorization for the same input on every run.

use crate::error::LinalgError;

/// Relative singular-value cutoff used by [`pinv`] callers that do not have a
/// reason to pick their own: anything at or below `1e-12 * sigma_max` is
/// treated as zero.
pub const DEFAULT_SIGMA_CUTOFF: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Panics if the dimensions do not
    /// match the data length or are zero.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        assert_eq!(data.len(), rows * cols, "data length must be rows * cols");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix::from_row_major(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_row_major(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                context: "matmul",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.get(r, k) * other.get(k, c);
                }
                out.set(r, c, acc);
            }
        }
        Ok(out)
    }

    /// Matrix-vector product. Panics on dimension mismatch.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec: dimension mismatch");
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch {
                context: "sub",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix::from_row_major(self.rows, self.cols, data))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  [")?;
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:.6e}", self.get(r, c))?;
            }
            writeln!(f, "]")?;
        }
        write!(f, "]")
    }
}

/// Thin singular value decomposition `A = U · diag(σ) · Vᵀ`.
///
/// `u` is m×r and `vt` is r×n with r = min(m, n); singular values are sorted
/// in descending order so that rank truncation is a prefix operation.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
    /// Scale below which singular values are indistinguishable from zero for
    /// this input: `max(m, n) * f64::EPSILON * sigma_max`.
    pub rank_tolerance: f64,
}

impl SvdResult {
    /// Number of singular values strictly above `rank_tolerance`.
    pub fn rank(&self) -> usize {
        self.singular_values
            .iter()
            .filter(|&&s| s > self.rank_tolerance)
            .count()
    }
}

// Convergence threshold for the Jacobi sweeps: a column pair counts as
// orthogonal once |dot| <= JACOBI_TOL * ||col_i|| * ||col_j||.
const JACOBI_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 60;

/// Computes the thin SVD of `a`.
///
/// Deterministic: the cyclic sweep order is fixed, so identical inputs give
/// bitwise-identical factors.
pub fn svd(a: &Matrix) -> Result<SvdResult, LinalgError> {
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            if !a.get(r, c).is_finite() {
                return Err(LinalgError::NonFiniteEntry { row: r, col: c });
            }
        }
    }

    // One-sided Jacobi wants at least as many rows as columns; for wide
    // matrices factor the transpose and swap the roles of U and V.
    if a.rows() >= a.cols() {
        let (u, sigma, v) = jacobi_svd_tall(a.clone());
        let rank_tolerance = rank_tol(a, &sigma);
        Ok(SvdResult {
            u,
            singular_values: sigma,
            vt: v.transpose(),
            rank_tolerance,
        })
    } else {
        let (ut, sigma, vt) = jacobi_svd_tall(a.transpose());
        let rank_tolerance = rank_tol(a, &sigma);
        Ok(SvdResult {
            u: vt,
            singular_values: sigma,
            vt: ut.transpose(),
            rank_tolerance,
        })
    }
}

fn rank_tol(a: &Matrix, sigma: &[f64]) -> f64 {
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    a.rows().max(a.cols()) as f64 * f64::EPSILON * sigma_max
}

/// One-sided Jacobi on a p×q matrix with p >= q: rotates column pairs of `b`
/// until they are mutually orthogonal, accumulating the rotations in V.
/// Returns (U: p×q, sigma: q descending, V: q×q).
fn jacobi_svd_tall(mut b: Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let p = b.rows();
    let q = b.cols();
    debug_assert!(p >= q);
    let mut v = Matrix::identity(q);

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q {
            for j in (i + 1)..q {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = 0.0;
                for r in 0..p {
                    let bi = b.get(r, i);
                    let bj = b.get(r, j);
                    aii += bi * bi;
                    ajj += bj * bj;
                    aij += bi * bj;
                }
                if aii == 0.0 || ajj == 0.0 {
                    continue;
                }
                if aij.abs() <= JACOBI_TOL * (aii * ajj).sqrt() {
                    continue;
                }
                // Rutishauser rotation annihilating the (i, j) column dot.
                let zeta = (ajj - aii) / (2.0 * aij);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..p {
                    let bi = b.get(r, i);
                    let bj = b.get(r, j);
                    b.set(r, i, c * bi - s * bj);
                    b.set(r, j, s * bi + c * bj);
                }
                for r in 0..q {
                    let vi = v.get(r, i);
                    let vj = v.get(r, j);
                    v.set(r, i, c * vi - s * vj);
                    v.set(r, j, s * vi + c * vj);
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort them descending and permute
    // the columns of both factors the same way.
    let norms: Vec<f64> = (0..q)
        .map(|c| (0..p).map(|r| b.get(r, c).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());

    let mut u = Matrix::zeros(p, q);
    let mut v_sorted = Matrix::zeros(q, q);
    let mut sigma = vec![0.0; q];
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        for r in 0..q {
            v_sorted.set(r, dst, v.get(r, src));
        }
        if norms[src] > 0.0 {
            for r in 0..p {
                u.set(r, dst, b.get(r, src) / norms[src]);
            }
        }
    }

    // Columns whose singular value is numerically zero carry no direction;
    // replace them with an orthonormal completion so U keeps orthonormal
    // columns even for rank-deficient input.
    let tiny = sigma[0] * (p.max(q) as f64) * f64::EPSILON;
    for (c, &s) in sigma.iter().enumerate() {
        if s <= tiny {
            complete_column(&mut u, c, p);
        }
    }

    (u, sigma, v_sorted)
}

/// Overwrites column `col` of `u` with a unit vector orthogonal to all other
/// columns, chosen deterministically as the coordinate direction with the
/// largest residual after Gram-Schmidt.
fn complete_column(u: &mut Matrix, col: usize, p: usize) {
    let q = u.cols();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in 0..p {
        let mut w = vec![0.0; p];
        w[cand] = 1.0;
        for c in 0..q {
            if c == col {
                continue;
            }
            let proj: f64 = (0..p).map(|r| u.get(r, c) * w[r]).sum();
            for (r, wr) in w.iter_mut().enumerate() {
                *wr -= proj * u.get(r, c);
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, w));
        }
    }
    let (norm, w) = best.expect("at least one candidate direction");
    debug_assert!(norm > 0.0, "no direction orthogonal to existing columns");
    for (r, wr) in w.iter().enumerate() {
        u.set(r, col, wr / norm);
    }
}

/// Moore-Penrose pseudoinverse via SVD truncation.
///
/// Singular values at or below `sigma_cutoff * sigma_max` are treated as
/// zero, so the result is the exact pseudoinverse of the truncated-rank
/// matrix. `sigma_cutoff` must be non-negative.
pub fn pinv(a: &Matrix, sigma_cutoff: f64) -> Result<Matrix, LinalgError> {
    assert!(
        sigma_cutoff >= 0.0 && sigma_cutoff.is_finite(),
        "sigma_cutoff must be a finite non-negative number"
    );
    let SvdResult {
        u,
        singular_values,
        vt,
        ..
    } = svd(a)?;
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let threshold = sigma_cutoff * sigma_max;

    // G = V · diag(1/σ over the kept prefix) · Uᵀ, assembled directly.
    let m = a.rows();
    let n = a.cols();
    let r = singular_values.len();
    let mut g = Matrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for (k, &s) in singular_values.iter().enumerate().take(r) {
                if s > threshold && s > 0.0 {
                    acc += vt.get(k, i) * u.get(j, k) / s;
                }
            }
            g.set(i, j, acc);
        }
    }
    Ok(g)
}

/// Null-space projector `P = I − G·J` for a Jacobian `J` and its
/// pseudoinverse `G`. `P` maps onto parameter motions that the Jacobian
/// annihilates.
pub fn nullspace_projector(j: &Matrix, g: &Matrix) -> Result<Matrix, LinalgError> {
    if g.rows() != j.cols() || g.cols() != j.rows() {
        return Err(LinalgError::DimensionMismatch {
            context: "nullspace_projector",
            left_rows: j.rows(),
            left_cols: j.cols(),
            right_rows: g.rows(),
            right_cols: g.cols(),
        });
    }
    let gj = g.matmul(j)?;
    Matrix::identity(j.cols()).sub(&gj)
}
