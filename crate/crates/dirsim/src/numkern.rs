//! Dense kernels for the small symmetric and orthogonal matrix problems the
//! samplers depend on: symmetric eigendecomposition, Cholesky, symmetric
//! inverse square root and the signed 3x3 SVD.
//!
//! All routines are pure and deterministic: the same input bits give the same
//! output bits, which is what makes seeded sampling runs reproducible.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before an input is rejected outright.
/// Anything below it is silently symmetrized as (A + A^T)/2.
pub const SYMMETRY_RTOL: f64 = 1e-8;

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
///
/// Column `i` of `eigenvectors` pairs with `eigenvalues[i]`; the matrix of
/// eigenvectors is orthogonal and each column is sign-fixed so that its
/// largest-magnitude entry is positive.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Signed singular value decomposition of a 3x3 matrix: `F = U diag(delta) V^T`
/// with `U`, `V` rotation matrices and `delta[0] >= delta[1] >= |delta[2]|`.
/// `delta[2]` is negative exactly when `det F < 0`.
#[derive(Debug, Clone)]
pub struct SignedSvd3 {
    pub u: Matrix3<f64>,
    pub delta: Vector3<f64>,
    pub v: Matrix3<f64>,
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

/// Checks symmetry within `SYMMETRY_RTOL * max|a|` and returns (A + A^T)/2.
fn symmetrized(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = max_abs(a);
    let tolerance = SYMMETRY_RTOL * scale;
    let mut asymmetry = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asymmetry = asymmetry.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric {
            asymmetry,
            tolerance,
        });
    }
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    Ok(s)
}

/// Symmetric eigendecomposition of a q x q matrix, q >= 2.
///
/// The input is symmetrized before decomposition; asymmetry beyond
/// `SYMMETRY_RTOL * max|a|` is an error. Output ordering and eigenvector
/// signs follow a fixed convention so repeated calls agree bit for bit.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    let q = a.nrows();
    if q < 2 {
        return Err(Error::InvalidParameter(format!(
            "sym_eigen requires q >= 2, got q = {q}"
        )));
    }
    let sym = symmetrized(a)?;
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(Error::ConvergenceFailure)?;

    // Sort ascending; stable on the original column index for ties.
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap()
            .then(i.cmp(&j))
    });

    let mut eigenvalues = DVector::zeros(q);
    let mut eigenvectors = DMatrix::zeros(q, q);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        // Sign convention: the first entry of largest magnitude is positive.
        let mut pivot = 0;
        for i in 1..q {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Lower-triangular Cholesky factor `L` with `L L^T = a`.
///
/// Fails with `NotPositiveDefinite` as soon as a pivot is non-positive.
pub fn chol_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrized(a)?;
    let n = sym.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = sym[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        l[(j, j)] = d.sqrt();
        for i in (j + 1)..n {
            let mut s = sym[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / l[(j, j)];
        }
    }
    Ok(l)
}

/// Symmetric inverse square root: `S = a^{-1/2}` with `S a S = I`.
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 1 {
        let v = a[(0, 0)];
        if v <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        return Ok(DMatrix::from_element(1, 1, 1.0 / v.sqrt()));
    }
    let eig = sym_eigen(a)?;
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| {
        eig.eigenvectors[(i, j)] / eig.eigenvalues[j].sqrt()
    });
    let s = &scaled * eig.eigenvectors.transpose();
    // Kill round-off asymmetry so the result is symmetric by construction.
    Ok(DMatrix::from_fn(n, n, |i, j| {
        0.5 * (s[(i, j)] + s[(j, i)])
    }))
}

/// Signed SVD of a 3x3 matrix (rotations on both sides, sign carried by the
/// smallest singular value). A zero smallest singular value carries sign `+`.
pub fn signed_svd3(f: &Matrix3<f64>) -> Result<SignedSvd3> {
    let svd = f
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or(Error::ConvergenceFailure)?;
    let u_raw = svd.u.ok_or(Error::ConvergenceFailure)?;
    let v_raw = svd.v_t.ok_or(Error::ConvergenceFailure)?.transpose();
    let sv = svd.singular_values;

    // Order descending regardless of what the backend returned.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap().then(i.cmp(&j)));

    let mut u = Matrix3::zeros();
    let mut v = Matrix3::zeros();
    let mut delta = Vector3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &u_raw.column(src).clone_owned());
        v.set_column(dst, &v_raw.column(src).clone_owned());
        delta[dst] = sv[src];
    }

    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        delta[2] = -delta[2];
    }
    if v.determinant() < 0.0 {
        v.column_mut(2).neg_mut();
        delta[2] = -delta[2];
    }
    if delta[2] == 0.0 {
        delta[2] = 0.0; // normalize -0.0 away
    }
    Ok(SignedSvd3 { u, delta, v })
}
