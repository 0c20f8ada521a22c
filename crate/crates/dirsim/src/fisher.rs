//! von Mises-Fisher and Fisher-Bingham sampling on the sphere.
//!
//! The Fisher-Bingham density `f*(x) = exp(kappa x^T mu0 - x^T A x)` is
//! dominated by a Bingham density: from `(1 - x^T mu0)^2 >= 0`,
//!
//! ```text
//! f*(x) <= exp(kappa - x^T A1 x),   A1 = A + (kappa/2)(I - mu0 mu0^T),
//! ```
//!
//! with equality at `x = mu0`. Chaining this with the ACG envelope for the
//! Bingham density of `A1` gives a single collapsed acceptance test: one
//! proposal from ACG(Omega(b0)), one uniform, identical output law to the
//! nested two-stage scheme.

use nalgebra::{DMatrix, DVector};

use crate::ar::{self, AcceptStats, Envelope};
use crate::bingham::{solve_b0, BinghamParams};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tolerance on `mu0` deviating from unit length before construction fails.
/// Anything within it is renormalized to machine precision.
pub const MU0_NORM_TOL: f64 = 1e-6;

/// Tolerance on the eigenvector residual used by the `aligned` flag.
pub const ALIGNMENT_TOL: f64 = 1e-8;

/// Fisher-Bingham parameters with the derived Bingham envelope matrix.
#[derive(Debug, Clone)]
pub struct FisherBinghamParams {
    kappa: f64,
    mu0: DVector<f64>,
    a: DMatrix<f64>,
    a1: DMatrix<f64>,
    aligned: bool,
}

impl FisherBinghamParams {
    /// Builds parameters from a concentration `kappa >= 0`, a unit mean
    /// direction and a symmetric matrix. `a_raw` is standardized so its
    /// smallest eigenvalue is zero, which changes nothing distributionally.
    pub fn new(kappa: f64, mu0: &DVector<f64>, a_raw: &DMatrix<f64>) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be nonnegative, got {kappa}"
            )));
        }
        let q = mu0.len();
        if a_raw.nrows() != q || a_raw.ncols() != q {
            return Err(Error::InvalidParameter(format!(
                "mu0 has length {q} but A is {}x{}",
                a_raw.nrows(),
                a_raw.ncols()
            )));
        }
        let norm = mu0.norm();
        if (norm - 1.0).abs() > MU0_NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "mu0 must be a unit vector; |mu0| = {norm}"
            )));
        }
        let mu0 = mu0 / norm;
        let std = BinghamParams::standardize(a_raw)?;
        let a = std.matrix().clone();

        let a1 = &a + (DMatrix::identity(q, q) - &mu0 * mu0.transpose()) * (kappa / 2.0);
        let aligned = is_aligned(kappa, &mu0, &std);
        Ok(FisherBinghamParams {
            kappa,
            mu0,
            a,
            a1,
            aligned,
        })
    }

    /// Pure von Mises-Fisher parameters (`A = 0`).
    pub fn vmf(kappa: f64, mu0: &DVector<f64>) -> Result<Self> {
        let q = mu0.len();
        FisherBinghamParams::new(kappa, mu0, &DMatrix::zeros(q, q))
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    /// Standardized symmetric part (smallest eigenvalue zero).
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// The Bingham envelope matrix `A + (kappa/2)(I - mu0 mu0^T)`.
    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    /// True when `mu0` is an eigenvector of `A` and the density mode sits at
    /// `mu0`. Reporting only; the sampler is exact either way.
    pub fn aligned(&self) -> bool {
        self.aligned
    }

    pub fn q(&self) -> usize {
        self.mu0.len()
    }

    /// `log f*(x) = kappa x^T mu0 - x^T A x` (standardized `A`).
    pub fn log_density_unnorm(&self, x: &DVector<f64>) -> f64 {
        self.kappa * self.mu0.dot(x) - (x.transpose() * &self.a * x)[(0, 0)]
    }
}

/// `aligned` check: eigenvector residual below tolerance and the density at
/// `mu0` at least as large as at every signed eigenvector candidate.
fn is_aligned(kappa: f64, mu0: &DVector<f64>, std: &BinghamParams) -> bool {
    let a = std.matrix();
    let rayleigh = (mu0.transpose() * a * mu0)[(0, 0)];
    let residual = (a * mu0 - mu0 * rayleigh).norm();
    if residual > ALIGNMENT_TOL {
        return false;
    }
    let at_mu0 = kappa - rayleigh;
    for j in 0..std.q() {
        let v = std.basis().column(j).clone_owned();
        let lambda = std.lambdas()[j];
        let plus = kappa * mu0.dot(&v) - lambda;
        let minus = -kappa * mu0.dot(&v) - lambda;
        if plus > at_mu0 + 1e-12 || minus > at_mu0 + 1e-12 {
            return false;
        }
    }
    true
}

/// The standardized Bingham envelope of a Fisher-Bingham target together with
/// the additive log bound: `log f*(x) <= log_shift - x^T A_std x`.
#[derive(Debug, Clone)]
pub struct FbEnvelopeParts {
    pub bingham: BinghamParams,
    pub log_shift: f64,
}

/// Derives the Bingham envelope `A1 = A + (kappa/2)(I - mu0 mu0^T)`,
/// standardized, and the log shift. Standardization moves the eigenvalue
/// shift `s` of `A1` into the constant, so `log_shift = kappa - s`; in the
/// aligned case `s = 0` and the shift is exactly `kappa`.
pub fn fb_envelope(fp: &FisherBinghamParams) -> Result<FbEnvelopeParts> {
    let eig_shift_before = fp.a1.trace();
    let bingham = BinghamParams::standardize(&fp.a1)?;
    let shift = (eig_shift_before - bingham.matrix().trace()) / fp.q() as f64;
    Ok(FbEnvelopeParts {
        bingham,
        log_shift: fp.kappa - shift,
    })
}

/// Collapsed envelope: propose from ACG(Omega(b0)) fitted to the standardized
/// `A1`; target, envelope and bound all evaluated in the eigenbasis of `A1`.
struct FbCollapsedEnvelope {
    kappa: f64,
    mu_eig: DVector<f64>,      // basis^T mu0
    a_eig: DMatrix<f64>,       // basis^T A basis
    lambda1: DVector<f64>,     // standardized eigenvalues of A1
    omega_diag: DVector<f64>,  // 1 + 2 lambda1 / b0
    inv_sqrt_omega: DVector<f64>,
    log_mstar_total: f64,      // (kappa - s) + log M*_1
    log_mstar_bingham: f64,    // log M*_1 alone, for stage accounting
    q: usize,
}

impl FbCollapsedEnvelope {
    fn new(fp: &FisherBinghamParams) -> Result<Self> {
        let parts = fb_envelope(fp)?;
        let bound = solve_b0(parts.bingham.lambdas());
        let basis = parts.bingham.basis();
        let lambda1 = parts.bingham.lambdas().clone();
        let omega_diag = lambda1.map(|l| 1.0 + 2.0 * l / bound.b0);
        Ok(FbCollapsedEnvelope {
            kappa: fp.kappa,
            mu_eig: basis.transpose() * &fp.mu0,
            a_eig: basis.transpose() * &fp.a * basis,
            lambda1,
            inv_sqrt_omega: omega_diag.map(|w| 1.0 / w.sqrt()),
            omega_diag,
            log_mstar_total: parts.log_shift + bound.log_mstar,
            log_mstar_bingham: bound.log_mstar,
            q: fp.q(),
        })
    }

    fn log_bingham_target(&self, z: &DVector<f64>) -> f64 {
        -self
            .lambda1
            .iter()
            .zip(z.iter())
            .map(|(&l, &zi)| l * zi * zi)
            .sum::<f64>()
    }
}

impl Envelope for FbCollapsedEnvelope {
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
        self.kappa * self.mu_eig.dot(z) - (z.transpose() * &self.a_eig * z)[(0, 0)]
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
        self.log_mstar_total
    }
}

fn fb_sample(
    fp: &FisherBinghamParams,
    rng: &mut RngStream,
    n: usize,
) -> Result<(Vec<DVector<f64>>, AcceptStats)> {
    let envelope = FbCollapsedEnvelope::new(fp)?;
    let parts = fb_envelope(fp)?;
    let (zs, stats) = ar::ar_sample(&envelope, rng, n)?;
    let samples = zs.into_iter().map(|z| parts.bingham.basis() * z).collect();
    Ok((samples, stats))
}

/// Draws `n` exact von Mises-Fisher samples (`kappa >= 0`, unit `mu0`).
pub fn sample_vmf(
    kappa: f64,
    mu0: &DVector<f64>,
    rng: &mut RngStream,
    n: usize,
) -> Result<(Vec<DVector<f64>>, AcceptStats)> {
    let fp = FisherBinghamParams::vmf(kappa, mu0)?;
    fb_sample(&fp, rng, n)
}

/// Draws `n` exact Fisher-Bingham samples.
pub fn sample_fisher_bingham(
    fp: &FisherBinghamParams,
    rng: &mut RngStream,
    n: usize,
) -> Result<(Vec<DVector<f64>>, AcceptStats)> {
    fb_sample(fp, rng, n)
}

/// Stagewise trial accounting for the chained envelope. A trial that passes
/// the ACG-to-Bingham test is counted in `bingham_passes`; of those, the ones
/// surviving the Fisher-to-Bingham factor are `accepts`. With a single
/// uniform per trial, `accepts/bingham_passes` estimates the efficiency of
/// the Bingham-envelope stage exactly as a nested scheme would.
#[derive(Debug, Clone, Copy, Default)]
pub struct FbTrialStats {
    pub trials: u64,
    pub bingham_passes: u64,
    pub accepts: u64,
}

impl FbTrialStats {
    pub fn overall_efficiency(&self) -> f64 {
        self.accepts as f64 / self.trials as f64
    }

    /// Acceptance rate of the ACG proposal against the Bingham envelope.
    pub fn acg_stage_efficiency(&self) -> f64 {
        self.bingham_passes as f64 / self.trials as f64
    }

    /// Acceptance rate of the Bingham envelope against the target.
    pub fn bingham_stage_efficiency(&self) -> f64 {
        self.accepts as f64 / self.bingham_passes as f64
    }
}

/// Runs a fixed number of collapsed trials, splitting the acceptance counts
/// by stage.
pub fn fb_run_trials(
    fp: &FisherBinghamParams,
    rng: &mut RngStream,
    trials: u64,
) -> Result<FbTrialStats> {
    let envelope = FbCollapsedEnvelope::new(fp)?;
    let mut stats = FbTrialStats::default();
    for _ in 0..trials {
        stats.trials += 1;
        let z = envelope.propose(rng);
        let log_g = envelope.log_envelope_unnorm(&z);
        let log_target = envelope.log_target_unnorm(&z);
        let log_ratio = log_target - log_g;
        if log_ratio > envelope.log_mstar_total + ar::BOUND_SLACK {
            return Err(Error::BoundViolation {
                log_ratio,
                log_mstar: envelope.log_mstar_total,
            });
        }
        let log_w = rng.next_uniform().ln();
        if log_w < envelope.log_bingham_target(&z) - envelope.log_mstar_bingham - log_g {
            stats.bingham_passes += 1;
            if log_w < log_ratio - envelope.log_mstar_total {
                stats.accepts += 1;
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e1(q: usize) -> DVector<f64> {
        DVector::from_fn(q, |i, _| if i == 0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn envelope_reduces_to_bingham_at_kappa_zero() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0, 4.0]));
        let fp = FisherBinghamParams::new(0.0, &e1(3), &a).unwrap();
        let parts = fb_envelope(&fp).unwrap();
        assert_eq!(parts.log_shift, 0.0);
        assert!((parts.bingham.matrix() - &a).abs().max() < 1e-12);
    }

    #[test]
    fn envelope_vmf_case() {
        // A = 0, kappa = 2, mu0 = e1: A1 = diag(0, 1, 1), shift 2.
        let fp = FisherBinghamParams::vmf(2.0, &e1(3)).unwrap();
        let parts = fb_envelope(&fp).unwrap();
        assert_abs_diff_eq!(parts.log_shift, 2.0, epsilon = 1e-12);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 1.0]));
        assert!((parts.bingham.matrix() - expected).abs().max() < 1e-10);
    }

    #[test]
    fn envelope_tight_at_mode() {
        // log f*(mu0) equals log_shift - mu0^T A1_std mu0 exactly.
        for (kappa, diag) in [(2.0, vec![0.0, 0.0, 0.0]), (5.0, vec![0.0, 2.0, 4.0])] {
            let a = DMatrix::from_diagonal(&DVector::from_vec(diag));
            let fp = FisherBinghamParams::new(kappa, &e1(3), &a).unwrap();
            let parts = fb_envelope(&fp).unwrap();
            let mu0 = fp.mu0().clone();
            let lhs = fp.log_density_unnorm(&mu0);
            let quad = (mu0.transpose() * parts.bingham.matrix() * &mu0)[(0, 0)];
            assert_abs_diff_eq!(lhs, parts.log_shift - quad, epsilon = 1e-12);
        }
    }

    #[test]
    fn aligned_flag() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0, 4.0]));
        let fp = FisherBinghamParams::new(5.0, &e1(3), &a).unwrap();
        assert!(fp.aligned());

        // mu0 at 45 degrees to the eigenvectors is not aligned.
        let mu = DVector::from_vec(vec![0.5_f64.sqrt(), 0.5_f64.sqrt(), 0.0]);
        let fp = FisherBinghamParams::new(5.0, &mu, &a).unwrap();
        assert!(!fp.aligned());

        // mu0 an eigenvector with a large eigenvalue and tiny kappa: the mode
        // is elsewhere, so not aligned.
        let e3 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let fp = FisherBinghamParams::new(0.5, &e3, &a).unwrap();
        assert!(!fp.aligned());
    }

    #[test]
    fn mu0_normalization_window() {
        let mut almost = e1(3);
        almost[0] = 1.0 + 5e-7;
        let fp = FisherBinghamParams::vmf(1.0, &almost).unwrap();
        assert_abs_diff_eq!(fp.mu0().norm(), 1.0, epsilon = 1e-14);

        let mut wild = e1(3);
        wild[0] = 1.1;
        assert!(FisherBinghamParams::vmf(1.0, &wild).is_err());
        assert!(FisherBinghamParams::vmf(-1.0, &e1(3)).is_err());
    }

    #[test]
    fn vmf_kappa_zero_is_uniform() {
        let mut rng = RngStream::new(40, 0);
        let (samples, stats) = sample_vmf(0.0, &e1(3), &mut rng, 5_000).unwrap();
        assert_eq!(stats.trials, stats.accepts);
        assert_eq!(samples.len(), 5_000);
    }

    #[test]
    fn vmf_mean_direction_and_resultant() {
        // On S^2 the mean resultant length of the Fisher distribution is
        // coth(kappa) - 1/kappa.
        let kappa = 10.0;
        let mut rng = RngStream::new(41, 0);
        let n = 100_000;
        let (samples, _) = sample_vmf(kappa, &e1(3), &mut rng, n).unwrap();
        let mut resultant = DVector::zeros(3);
        for x in &samples {
            resultant += x;
        }
        let mean_resultant_length = resultant.norm() / n as f64;
        let direction = &resultant / resultant.norm();
        let angle = direction.dot(&e1(3)).clamp(-1.0, 1.0).acos();
        assert!(angle < 0.01, "mean direction off by {angle} rad");
        let expected = 1.0 / kappa.tanh() - 1.0 / kappa;
        assert!(
            (mean_resultant_length - expected).abs() < 0.005,
            "resultant {mean_resultant_length} vs {expected}"
        );
    }

    #[test]
    fn fb_reduces_to_bingham_at_kappa_zero() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 10.0]));
        let fp = FisherBinghamParams::new(0.0, &e1(3), &a).unwrap();
        let mut rng = RngStream::new(42, 0);
        let stats = fb_run_trials(&fp, &mut rng, 200_000).unwrap();
        let eff = stats.overall_efficiency();
        assert!((eff - 0.84).abs() < 0.01, "efficiency {eff}");
        // kappa = 0 collapses the Fisher factor: both stages coincide.
        assert_eq!(stats.bingham_passes, stats.accepts);
    }

    #[test]
    fn aligned_grid_efficiency_floor() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0, 4.0]));
        for kappa in [1.0, 10.0, 100.0] {
            let fp = FisherBinghamParams::new(kappa, &e1(3), &a).unwrap();
            assert!(fp.aligned());
            let mut rng = RngStream::new(43, 0);
            let stats = fb_run_trials(&fp, &mut rng, 100_000).unwrap();
            let eff = stats.overall_efficiency();
            assert!(eff >= 0.25, "kappa {kappa}: overall efficiency {eff}");
        }
    }

    #[test]
    fn collapsed_bound_holds_on_grid() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0, 4.0]));
        let mu_tilted = DVector::from_vec(vec![0.5_f64.sqrt(), 0.5_f64.sqrt(), 0.0]);
        let mut rng = RngStream::new(44, 0);
        for kappa in [0.0, 1.0, 10.0, 100.0, 1000.0] {
            for mu in [&e1(3), &mu_tilted] {
                let fp = FisherBinghamParams::new(kappa, mu, &a).unwrap();
                let envelope = FbCollapsedEnvelope::new(&fp).unwrap();
                for _ in 0..50_000 {
                    let z = envelope.propose(&mut rng);
                    let ratio =
                        envelope.log_target_unnorm(&z) - envelope.log_envelope_unnorm(&z);
                    assert!(ratio <= envelope.log_mstar_total + 1e-12);
                }
            }
        }
    }

    #[test]
    fn kappa_to_zero_matches_bingham() {
        // Total-variation distance between binned histograms of the two
        // samplers at kappa = 1e-8 stays inside Monte Carlo noise.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 3.0]));
        let n = 100_000;
        let fp = FisherBinghamParams::new(1e-8, &e1(3), &a).unwrap();
        let (fb_samples, _) = sample_fisher_bingham(&fp, &mut RngStream::new(45, 0), n).unwrap();
        let bp = crate::bingham::BinghamParams::standardize(&a).unwrap();
        let (b_samples, _) =
            crate::bingham::sample_bingham(&bp, &mut RngStream::new(46, 0), n).unwrap();

        let bin_of = |x: &DVector<f64>| -> usize {
            let ct = ((x[2].clamp(-1.0, 1.0) + 1.0) / 2.0 * 16.0).min(15.0) as usize;
            let phi = x[1].atan2(x[0]); // [-pi, pi]
            let p = (((phi + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)) * 16.0)
                .min(15.0) as usize;
            ct * 16 + p
        };
        let mut h1 = vec![0.0f64; 256];
        let mut h2 = vec![0.0f64; 256];
        for x in &fb_samples {
            h1[bin_of(x)] += 1.0 / n as f64;
        }
        for x in &b_samples {
            h2[bin_of(x)] += 1.0 / n as f64;
        }
        let tv: f64 = h1
            .iter()
            .zip(h2.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 2e-2, "total variation {tv}");
    }
}
