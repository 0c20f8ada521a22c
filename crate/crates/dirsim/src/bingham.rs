//! Bingham sampling on the unit sphere with an angular central Gaussian
//! envelope, plus the envelope-tuning machinery shared by every sampler in
//! this crate.
//!
//! The Bingham density is `f*(x) = exp(-x^T A x)` on `S_p` (q = p + 1). With
//! the eigenvalues of `A` standardized to `0 = l_1 <= ... <= l_q`, the ACG
//! density with `Omega(b) = I + 2A/b` dominates it:
//!
//! ```text
//! exp(-x^T A x) <= e^{-(q-b)/2} (q/b)^{q/2} (x^T Omega(b) x)^{-q/2}
//! ```
//!
//! The tuning constant is chosen where `sum_i 1/(b + 2 l_i) = 1`, the unique
//! minimizer of the resulting bound. Proposals are drawn by normalizing a
//! Gaussian vector and accepted in log space.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::ar::{self, AcceptStats, Envelope};
use crate::error::{Error, Result};
use crate::numkern::{chol_lower, sym_eigen};
use crate::rng::RngStream;

/// Standardized Bingham concentration: `a = basis diag(lambdas) basis^T` with
/// `lambdas` ascending and the smallest exactly zero.
#[derive(Debug, Clone)]
pub struct BinghamParams {
    a: DMatrix<f64>,
    lambdas: DVector<f64>,
    basis: DMatrix<f64>,
    q: usize,
}

impl BinghamParams {
    /// Builds standardized parameters from a raw symmetric matrix: shifts the
    /// spectrum so the smallest eigenvalue is exactly zero (the shift changes
    /// nothing about the distribution) and stores the eigenbasis.
    pub fn standardize(a_raw: &DMatrix<f64>) -> Result<Self> {
        let eig = sym_eigen(a_raw)?;
        let shift = eig.eigenvalues[0];
        let mut lambdas = eig.eigenvalues;
        for l in lambdas.iter_mut() {
            *l -= shift;
        }
        lambdas[0] = 0.0;
        let basis = eig.eigenvectors;
        let a = &basis * DMatrix::from_diagonal(&lambdas) * basis.transpose();
        Ok(BinghamParams {
            a,
            lambdas,
            basis,
            q: a_raw.nrows(),
        })
    }

    /// Builds parameters from eigenvalues that are already standardized
    /// (ascending, first entry zero); the basis is the identity.
    pub fn from_sorted_lambdas(lambdas: &[f64]) -> Result<Self> {
        let q = lambdas.len();
        if q < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 eigenvalues, got {q}"
            )));
        }
        if lambdas[0] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "smallest eigenvalue must be 0, got {}",
                lambdas[0]
            )));
        }
        if lambdas.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter(
                "eigenvalues must be nondecreasing".into(),
            ));
        }
        let lambdas = DVector::from_column_slice(lambdas);
        Ok(BinghamParams {
            a: DMatrix::from_diagonal(&lambdas),
            lambdas,
            basis: DMatrix::identity(q, q),
            q,
        })
    }

    /// The standardized concentration matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Standardized eigenvalues, ascending with `lambdas[0] == 0`.
    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    /// Orthogonal eigenbasis, column `i` paired with `lambdas[i]`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn q(&self) -> usize {
        self.q
    }
}

/// Fitted envelope constants: the tuning value `b0`, the log of the starred
/// bound `M*` and the tangency point `u0 = (q - b0)/2`.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeBound {
    pub b0: f64,
    pub log_mstar: f64,
    pub u0: f64,
}

/// Residual of the tuning equation `sum_i 1/(b + 2 l_i) - 1`.
pub fn b0_residual(lambdas: &DVector<f64>, b: f64) -> f64 {
    lambdas.iter().map(|&l| 1.0 / (b + 2.0 * l)).sum::<f64>() - 1.0
}

/// log M*(b) = -(q-b)/2 + (q/2) log(q/b), the b-dependent starred bound.
pub fn log_mstar(q: usize, b: f64) -> f64 {
    let qf = q as f64;
    -(qf - b) / 2.0 + (qf / 2.0) * (qf / b).ln()
}

/// Solves the tuning equation for standardized eigenvalues.
///
/// The left-hand side decreases from infinity (the `l_1 = 0` term blows up as
/// `b -> 0`) to at most 1 at `b = q`, so the root is bracketed by `(0, q]`.
/// Safeguarded Newton within that bracket; the residual at the returned `b0`
/// is below 1e-10.
pub fn solve_b0(lambdas: &DVector<f64>) -> EnvelopeBound {
    let q = lambdas.len();
    let qf = q as f64;
    debug_assert!(lambdas[0] == 0.0, "eigenvalues must be standardized");

    let mut lo = 1e-12;
    let mut hi = qf;
    let f_hi = b0_residual(lambdas, hi);
    let mut b = if f_hi == 0.0 {
        // All eigenvalues zero: sum = q/b, root exactly at q.
        hi
    } else {
        let mut b = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = b0_residual(lambdas, b);
            if f.abs() <= 1e-12 {
                break;
            }
            if f > 0.0 {
                lo = b;
            } else {
                hi = b;
            }
            let fprime: f64 = lambdas
                .iter()
                .map(|&l| -1.0 / ((b + 2.0 * l) * (b + 2.0 * l)))
                .sum();
            let newton = b - f / fprime;
            b = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * qf {
                break;
            }
        }
        b
    };
    // Clamp to the open-left bracket in case of pathological round-off.
    if !(b > 0.0 && b <= qf) {
        b = qf;
    }
    EnvelopeBound {
        b0: b,
        log_mstar: log_mstar(q, b),
        u0: (qf - b) / 2.0,
    }
}

/// Angular central Gaussian parameters: `Omega` and the lower Cholesky factor
/// of its inverse, which maps iid standard normals onto `N_q(0, Omega^{-1})`.
#[derive(Debug, Clone)]
pub struct AcgParams {
    omega: DMatrix<f64>,
    chol_of_inverse: DMatrix<f64>,
    log_det_omega: f64,
}

impl AcgParams {
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        let q = omega.nrows();
        // Factor Omega both to certify positive definiteness and to invert.
        let l = chol_lower(&omega)?;
        let log_det_omega = 2.0 * (0..q).map(|i| l[(i, i)].ln()).sum::<f64>();
        let inv = invert_from_chol(&l);
        let chol_of_inverse = chol_lower(&inv)?;
        Ok(AcgParams {
            omega,
            chol_of_inverse,
            log_det_omega,
        })
    }

    /// Envelope construction `Omega = I + 2A/b`; positive definite because the
    /// standardized `A` is positive semidefinite.
    pub fn from_bingham(bp: &BinghamParams, b: f64) -> Result<Self> {
        let q = bp.q();
        let omega = DMatrix::identity(q, q) + bp.matrix() * (2.0 / b);
        AcgParams::new(omega)
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Lower-triangular `L` with `L L^T = Omega^{-1}`.
    pub fn chol_of_inverse(&self) -> &DMatrix<f64> {
        &self.chol_of_inverse
    }

    /// `log |Omega|`; `c_ACG = |Omega|^{1/2}`.
    pub fn log_det_omega(&self) -> f64 {
        self.log_det_omega
    }

    /// One draw from `N_q(0, Omega^{-1})`.
    pub fn draw_gaussian(&self, rng: &mut RngStream) -> DVector<f64> {
        let q = self.omega.nrows();
        let z = DVector::from_fn(q, |_, _| rng.next_normal());
        &self.chol_of_inverse * z
    }

    /// One unit vector distributed as ACG(Omega).
    pub fn draw_unit(&self, rng: &mut RngStream) -> DVector<f64> {
        loop {
            let y = self.draw_gaussian(rng);
            let norm = y.norm();
            if norm > 0.0 {
                return y / norm;
            }
        }
    }
}

// Inverse via triangular solves on the Cholesky factor.
fn invert_from_chol(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::identity(n, n);
    for mut col in inv.column_iter_mut() {
        // Solve L y = e, then L^T x = y.
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[(i, k)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
    }
    // Symmetrize round-off.
    let t = inv.transpose();
    0.5 * (inv + t)
}

/// Draws `n` unit vectors from ACG(Omega). Direct sampling, no rejection.
pub fn sample_acg(ap: &AcgParams, rng: &mut RngStream, n: usize) -> Vec<DVector<f64>> {
    (0..n).map(|_| ap.draw_unit(rng)).collect()
}

/// The fitted Bingham/ACG envelope in the eigenbasis of `A`, where both
/// quadratic forms are weighted sums of squares.
pub(crate) struct BinghamEnvelope {
    lambdas: DVector<f64>,
    omega_diag: DVector<f64>,
    inv_sqrt_omega: DVector<f64>,
    log_mstar: f64,
    q: usize,
}

impl BinghamEnvelope {
    pub(crate) fn new(bp: &BinghamParams) -> (Self, EnvelopeBound) {
        let bound = solve_b0(bp.lambdas());
        let omega_diag = bp.lambdas().map(|l| 1.0 + 2.0 * l / bound.b0);
        let inv_sqrt_omega = omega_diag.map(|w| 1.0 / w.sqrt());
        (
            BinghamEnvelope {
                lambdas: bp.lambdas().clone(),
                omega_diag,
                inv_sqrt_omega,
                log_mstar: bound.log_mstar,
                q: bp.q(),
            },
            bound,
        )
    }

    pub(crate) fn log_det_omega(&self) -> f64 {
        self.omega_diag.iter().map(|w| w.ln()).sum()
    }
}

impl Envelope for BinghamEnvelope {
    type Point = DVector<f64>;

    fn propose(&self, rng: &mut RngStream) -> DVector<f64> {
        loop {
            let y = DVector::from_fn(self.q, |i, _| self.inv_sqrt_omega[i] * rng.next_normal());
            let norm = y.norm();
            if norm > 0.0 {
                return y / norm;
            }
        }
    }

    fn log_target_unnorm(&self, z: &DVector<f64>) -> f64 {
        -self
            .lambdas
            .iter()
            .zip(z.iter())
            .map(|(&l, &zi)| l * zi * zi)
            .sum::<f64>()
    }

    fn log_envelope_unnorm(&self, z: &DVector<f64>) -> f64 {
        let quad: f64 = self
            .omega_diag
            .iter()
            .zip(z.iter())
            .map(|(&w, &zi)| w * zi * zi)
            .sum();
        -(self.q as f64 / 2.0) * quad.ln()
    }

    fn log_mstar(&self) -> f64 {
        self.log_mstar
    }
}

/// Draws `n` exact Bingham(A) samples. Sampling happens in the eigenbasis,
/// where the envelope quadratic forms are diagonal, and the draws are rotated
/// back; equivariance under rotations of `A` is therefore exact.
pub fn sample_bingham(
    bp: &BinghamParams,
    rng: &mut RngStream,
    n: usize,
) -> Result<(Vec<DVector<f64>>, AcceptStats)> {
    let (envelope, _) = BinghamEnvelope::new(bp);
    let (z_samples, stats) = ar::ar_sample(&envelope, rng, n)?;
    let samples = z_samples.into_iter().map(|z| bp.basis() * z).collect();
    Ok((samples, stats))
}

/// Fixed-trial acceptance accounting for Bingham(A); used for the efficiency
/// tables where the trial count, not the sample count, is prescribed.
pub fn bingham_run_trials(
    bp: &BinghamParams,
    rng: &mut RngStream,
    trials: u64,
) -> Result<(AcceptStats, EnvelopeBound)> {
    let (envelope, bound) = BinghamEnvelope::new(bp);
    let stats = ar::ar_run_trials(&envelope, rng, trials)?;
    Ok((stats, bound))
}

/// The reference bound for a normal target under a Cauchy envelope in
/// dimension `p`:
///
/// ```text
/// M = sqrt(2 pi e) (q / 2e)^{q/2} / Gamma(q/2),   q = p + 1.
/// ```
///
/// The concentrated Bingham limit attains exactly this bound, so `1/M` is the
/// worst-case efficiency of the sphere sampler in dimension `p`.
pub fn normal_cauchy_bound(p: usize) -> f64 {
    let q = (p + 1) as f64;
    let log_m = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
        + (q / 2.0) * (q / (2.0 * std::f64::consts::E)).ln()
        - ln_gamma(q / 2.0);
    log_m.exp()
}

/// Predicted efficiency `1/M(b0)` given the Bingham normalizing constant
/// (from quadrature on S^1/S^2 or Monte Carlo elsewhere):
///
/// ```text
/// M(b0) = c_Bing M*(b0) |Omega(b0)|^{-1/2}.
/// ```
pub fn predicted_efficiency(bp: &BinghamParams, cbing: f64) -> f64 {
    let bound = solve_b0(bp.lambdas());
    let log_det: f64 = bp
        .lambdas()
        .iter()
        .map(|&l| (1.0 + 2.0 * l / bound.b0).ln())
        .sum();
    (0.5 * log_det - cbing.ln() - bound.log_mstar).exp()
}
