//! Decompositions: one-sided Jacobi SVD, pseudo-inverse, nullspace, Cholesky,
//! LU solves and a symmetric Jacobi eigenvalue routine.

use super::matrix::{dot, Mat};
use super::NumericsError;

/// Relative singular-value cutoff used when callers have no better choice.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const JACOBI_EPS: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `M = U diag(s) Vᵀ` from one-sided
/// Jacobi rotations applied to the columns of `M`.
///
/// `v` is the full `n×n` orthogonal factor (so nullspace directions are
/// available), `u` is `m×n` with zero columns where `s` vanishes, and `s` is
/// sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

impl Svd {
    pub fn max_singular(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `tol * σ_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let cut = tol * self.max_singular();
        self.s.iter().filter(|&&s| s > cut && s > 0.0).count()
    }
}

fn check_finite(m: &Mat, what: &str) -> Result<(), NumericsError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(NumericsError::InvalidArgument(format!("{what}: matrix has non-finite entries")))
    }
}

pub fn svd(m: &Mat) -> Result<Svd, NumericsError> {
    check_finite(m, "svd")?;
    let (rows, n) = m.shape();
    let mut w = m.clone();
    let mut v = Mat::identity(n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..rows).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let mut u = Mat::zeros(rows, n);
    let mut vs = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sj = norms[j];
        s.push(sj);
        if sj > 0.0 {
            for i in 0..rows {
                u[(i, k)] = w[(i, j)] / sj;
            }
        }
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
    }
    Ok(Svd { u, s, v: vs })
}

/// Moore–Penrose pseudo-inverse; singular values at or below `tol * σ_max`
/// are treated as zero.
pub fn pseudo_inverse(m: &Mat, tol: f64) -> Result<Mat, NumericsError> {
    if tol < 0.0 || !tol.is_finite() {
        return Err(NumericsError::InvalidArgument(format!("pseudo_inverse: tol = {tol}")));
    }
    check_finite(m, "pseudo_inverse")?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Mat::zeros(cols, rows));
    }
    // Jacobi works on columns; keep the column count at min(rows, cols).
    if rows < cols {
        return Ok(pseudo_inverse(&m.transpose(), tol)?.transpose());
    }
    let d = svd(m)?;
    let cut = tol * d.max_singular();
    let mut out = Mat::zeros(cols, rows);
    for (k, &sk) in d.s.iter().enumerate() {
        if sk <= cut || sk == 0.0 {
            continue;
        }
        let vk = d.v.col(k);
        let uk = d.u.col(k);
        out.add_outer(1.0 / sk, &vk, &uk);
    }
    Ok(out)
}

/// Orthonormal basis of `ker(M)` as the columns of an `n×k` matrix (`k = 0`
/// when `M` has full column rank).
pub fn nullspace_basis(m: &Mat, tol: f64) -> Result<Mat, NumericsError> {
    check_finite(m, "nullspace_basis")?;
    let (rows, cols) = m.shape();
    if rows == 0 {
        return Ok(Mat::identity(cols));
    }
    let d = svd(m)?;
    let r = d.rank(tol);
    Ok(d.v.col_range(r, cols))
}

pub fn rank(m: &Mat, tol: f64) -> Result<usize, NumericsError> {
    if m.is_empty() {
        return Ok(0);
    }
    Ok(svd(m)?.rank(tol))
}

/// Lower-triangular `L` with `L Lᵀ = S`.
pub fn cholesky(s: &Mat) -> Result<Mat, NumericsError> {
    check_finite(s, "cholesky")?;
    if !s.is_square() {
        return Err(NumericsError::InvalidArgument(format!(
            "cholesky: matrix is {}x{}, not square",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(NumericsError::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Cholesky that accepts positive semidefinite input: pivots within
/// `tol * max|S|` of zero produce a zero column.
pub fn cholesky_semidefinite(s: &Mat, tol: f64) -> Result<Mat, NumericsError> {
    check_finite(s, "cholesky_semidefinite")?;
    if !s.is_square() {
        return Err(NumericsError::InvalidArgument("cholesky_semidefinite: not square".into()));
    }
    let n = s.rows();
    let thresh = tol * s.max_abs().max(f64::MIN_POSITIVE);
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -thresh {
            return Err(NumericsError::NotPositiveDefinite { pivot: j, value: d });
        }
        if d <= thresh {
            // The rest of the column must vanish too, otherwise S is indefinite.
            for i in (j + 1)..n {
                let mut v = s[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                if v.abs() > thresh.sqrt().max(thresh) {
                    return Err(NumericsError::NotPositiveDefinite { pivot: j, value: d });
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut v = y[i];
        for k in 0..i {
            v -= l[(i, k)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[(k, i)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    y
}

/// LU factorization with partial pivoting, kept for repeated solves.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorizes a square matrix; a pivot below `rel_tol * max|A|` is
    /// reported as singular with the offending column index.
    pub fn new(a: &Mat, rel_tol: f64) -> Result<Self, NumericsError> {
        check_finite(a, "lu")?;
        if !a.is_square() {
            return Err(NumericsError::InvalidArgument("lu: matrix not square".into()));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let thresh = rel_tol * a.max_abs();
        for k in 0..n {
            let (mut piv, mut best) = (k, lu[(k, k)].abs());
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if !(best > thresh) || best == 0.0 {
                return Err(NumericsError::Singular { index: k });
            }
            if piv != k {
                perm.swap(k, piv);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = tmp;
                }
            }
            let d = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.lu[(i, k)] * x[k];
            }
            x[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v -= self.lu[(i, k)] * x[k];
            }
            x[i] = v / self.lu[(i, i)];
        }
        x
    }
}

/// One-shot dense solve `A x = b`.
pub fn solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if a.rows() != b.len() {
        return Err(NumericsError::DimensionMismatch {
            op: "solve",
            left: a.shape(),
            right: (b.len(), 1),
        });
    }
    Ok(Lu::new(a, 1e-14)?.solve(b))
}

/// Inverse of a small square matrix.
pub fn inverse(a: &Mat) -> Result<Mat, NumericsError> {
    let lu = Lu::new(a, 1e-14)?;
    let n = a.rows();
    let mut out = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        out.set_col(j, &lu.solve(&e));
    }
    Ok(out)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Mat) -> Result<Vec<f64>, NumericsError> {
    check_finite(a, "symmetric_eigenvalues")?;
    if !a.is_square() {
        return Err(NumericsError::InvalidArgument("eigenvalues: not square".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-30 * m.frobenius_norm().powi(2).max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev = m.diag();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Quadratic form `xᵀ S⁻¹ x` for symmetric positive definite `S`.
pub fn inverse_quadratic_form(s: &Mat, x: &[f64]) -> Result<f64, NumericsError> {
    let l = cholesky(s)?;
    let y = cholesky_solve(&l, x);
    Ok(dot(x, &y))
}
