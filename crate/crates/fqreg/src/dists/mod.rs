//! Asymmetric Laplace primitives and the samplers used by the Gibbs updates.
//!
//! The working likelihood puts AL(0, tau, sigma) errors on each residual:
//! density tau(1-tau)/sigma * exp(-rho_tau(eps)/sigma) with check loss
//! rho_tau(u) = u (tau - 1{u <= 0}), so the tau-quantile of the error is
//! exactly zero. The sampler exploits the normal-exponential mixture
//! eps = theta xi + sqrt(psi sigma xi) Z with theta = (1-2 tau)/(tau(1-tau)),
//! psi = 2/(tau(1-tau)), xi ~ Exp(mean sigma), Z ~ N(0,1).

pub mod rng;

use faer::linalg::solvers::{Llt, Solve};
use faer::linalg::triangular_solve::solve_upper_triangular_in_place;
use faer::{Mat, Par, Side};
use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, InverseGaussian, StandardNormal};

use crate::error::{Error, Result};
use rng::RngStream;

/// A quantile level tau in (0, 1). The mixture constants are recomputed from
/// tau on demand so they can never drift out of sync with it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 || tau >= 1.0 {
            return Err(Error::config(format!("quantile level must lie in (0,1), got {tau}")));
        }
        Ok(QuantileLevel(tau))
    }

    pub fn tau(&self) -> f64 {
        self.0
    }

    /// Location coefficient of the latent scale in the normal mixture:
    /// theta = (1 - 2 tau) / (tau (1 - tau)).
    pub fn theta(&self) -> f64 {
        let t = self.0;
        (1.0 - 2.0 * t) / (t * (1.0 - t))
    }

    /// Variance coefficient in the normal mixture: psi = 2 / (tau (1 - tau)).
    pub fn psi(&self) -> f64 {
        let t = self.0;
        2.0 / (t * (1.0 - t))
    }
}

/// Check loss rho_tau(u) = u (tau - 1{u <= 0}). Nonnegative, zero only at 0.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

/// Log density of AL(0, tau, sigma) at eps.
pub fn al_logpdf(eps: f64, tau: f64, sigma: f64) -> f64 {
    (tau * (1.0 - tau) / sigma).ln() - check_loss(eps, tau) / sigma
}

/// CDF of AL(0, tau, sigma). Closed form on each side of the mode.
pub fn al_cdf(eps: f64, tau: f64, sigma: f64) -> f64 {
    if eps <= 0.0 {
        tau * ((1.0 - tau) * eps / sigma).exp()
    } else {
        1.0 - (1.0 - tau) * (-tau * eps / sigma).exp()
    }
}

/// Quantile function of AL(0, tau, sigma); the inverse of [`al_cdf`].
pub fn al_quantile(u: f64, tau: f64, sigma: f64) -> f64 {
    if u <= tau {
        sigma / (1.0 - tau) * (u / tau).ln()
    } else {
        -sigma / tau * ((1.0 - u) / (1.0 - tau)).ln()
    }
}

/// Draws from AL(0, tau, sigma) by inversion.
pub fn sample_al(tau: f64, sigma: f64, rng: &mut RngStream) -> f64 {
    let u: f64 = rng.gen();
    al_quantile(u, tau, sigma)
}

/// Draws an exponential with the given mean.
pub fn sample_exponential(mean: f64, rng: &mut RngStream) -> Result<f64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::numerical(format!("exponential mean must be positive, got {mean}")));
    }
    let e: f64 = Exp1.sample(rng);
    Ok(mean * e)
}

/// Draws an inverse gamma with density proportional to
/// x^(-shape-1) exp(-rate / x).
pub fn sample_inverse_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::numerical(format!(
            "inverse gamma parameters must be positive and finite, got shape={shape} rate={rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::numerical(format!("gamma setup: {e}")))?;
    let y: f64 = g.sample(rng);
    if y <= 0.0 {
        // Gamma draws can underflow to zero for tiny shapes; fall back to the
        // smallest positive normal so the reciprocal stays finite.
        return Ok(1.0 / f64::MIN_POSITIVE);
    }
    Ok(1.0 / y)
}

/// Largest mean passed through to the inverse Gaussian sampler. Means beyond
/// this arise only from residuals clamped near zero; capping keeps the
/// internal mu^2 terms finite without affecting any realistic draw.
const INVERSE_GAUSSIAN_MEAN_CAP: f64 = 1e150;

/// Draws an inverse Gaussian with the (mean, shape) parameterization, density
/// proportional to x^(-3/2) exp(-shape (x - mean)^2 / (2 mean^2 x)).
pub fn sample_inverse_gaussian(mean: f64, shape: f64, rng: &mut RngStream) -> Result<f64> {
    if !(mean > 0.0 && shape > 0.0) || !shape.is_finite() {
        return Err(Error::numerical(format!(
            "inverse gaussian parameters must be positive, got mean={mean} shape={shape}"
        )));
    }
    let mean = mean.min(INVERSE_GAUSSIAN_MEAN_CAP);
    let d = InverseGaussian::new(mean, shape)
        .map_err(|e| Error::numerical(format!("inverse gaussian setup: {e}")))?;
    Ok(d.sample(rng))
}

/// How many times the Cholesky factorization is retried with diagonal jitter
/// before giving up.
const JITTER_RETRIES: u32 = 3;

/// Draws from N(M^-1 m, M^-1) given the precision matrix M and linear term m.
///
/// Factors M = L L', solves for the mean, and adds L'^-1 z with z standard
/// normal. If the factorization fails, jitter of 1e-10 * mean(diag) is added
/// to the diagonal (escalating tenfold per retry, up to three retries) before
/// reporting a numerical error. Returns the draw and the number of retries
/// that were needed.
pub fn sample_mvn_precision(
    precision: ArrayView2<'_, f64>,
    linear: &[f64],
    rng: &mut RngStream,
) -> Result<(Vec<f64>, u32)> {
    let k = linear.len();
    if precision.nrows() != k || precision.ncols() != k {
        return Err(Error::numerical(format!(
            "precision matrix is {}x{} but linear term has length {k}",
            precision.nrows(),
            precision.ncols()
        )));
    }
    let mut m = Mat::from_fn(k, k, |i, j| precision[(i, j)]);
    mvn_precision_draw(&mut m, linear, rng)
}

/// In-place variant of [`sample_mvn_precision`] for callers that assemble the
/// precision matrix directly into a `faer` buffer. The matrix may be modified
/// (diagonal jitter on retry).
pub fn mvn_precision_draw(
    precision: &mut Mat<f64>,
    linear: &[f64],
    rng: &mut RngStream,
) -> Result<(Vec<f64>, u32)> {
    let k = linear.len();
    debug_assert_eq!(precision.nrows(), k);
    debug_assert_eq!(precision.ncols(), k);

    let mean_diag = (0..k).map(|i| precision[(i, i)]).sum::<f64>() / k as f64;
    let base_jitter = 1e-10 * mean_diag.max(f64::MIN_POSITIVE);

    let mut retries = 0u32;
    let llt = loop {
        match Llt::new(precision.as_ref(), Side::Lower) {
            Ok(f) => break f,
            Err(_) if retries < JITTER_RETRIES => {
                let eps = base_jitter * 10f64.powi(retries as i32);
                for i in 0..k {
                    precision[(i, i)] += eps;
                }
                retries += 1;
            }
            Err(_) => {
                return Err(Error::numerical(
                    "precision matrix not positive definite after jitter retries".to_string(),
                ))
            }
        }
    };

    let mut rhs = Mat::from_fn(k, 1, |i, _| linear[i]);
    llt.solve_in_place(rhs.as_mut());

    let mut z = Mat::from_fn(k, 1, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    // L'^-1 z has covariance (L L')^-1 = M^-1.
    solve_upper_triangular_in_place(llt.L().transpose(), z.as_mut(), Par::Seq);

    let draw = (0..k).map(|i| rhs[(i, 0)] + z[(i, 0)]).collect();
    Ok((draw, retries))
}

#[cfg(test)]
mod tests {
    use super::rng::{RngStream, SiteKind};
    use super::*;
    use ndarray::Array2;

    fn stream(i: usize) -> RngStream {
        RngStream::at(990_001, 0, SiteKind::Init, i, 0)
    }

    #[test]
    fn quantile_level_rejects_boundary() {
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
        assert!(QuantileLevel::new(f64::NAN).is_err());
        assert!(QuantileLevel::new(0.5).is_ok());
    }

    #[test]
    fn mixture_constants_match_closed_forms() {
        let q = QuantileLevel::new(0.9).unwrap();
        assert!((q.theta() - (1.0 - 1.8) / 0.09).abs() < 1e-12);
        assert!((q.psi() - 2.0 / 0.09).abs() < 1e-12);
        let m = QuantileLevel::new(0.5).unwrap();
        assert_eq!(m.theta(), 0.0);
        assert_eq!(m.psi(), 8.0);
    }

    #[test]
    fn check_loss_basic_values() {
        assert_eq!(check_loss(0.0, 0.3), 0.0);
        assert!((check_loss(2.0, 0.3) - 0.6).abs() < 1e-15);
        assert!((check_loss(-2.0, 0.3) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn al_density_integrates_to_one_and_has_tau_mass_below_zero() {
        // Trapezoid quadrature, split at the mode so each piece is smooth.
        // The left tail at tau=0.9 decays like exp((1-tau) x / sigma), so the
        // range has to be wide.
        let (tau, sigma) = (0.9, 0.7);
        let piece = |lo: f64, hi: f64| {
            let n = 200_000;
            let h = (hi - lo) / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let x = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += al_logpdf(x, tau, sigma).exp() * w * h;
            }
            acc
        };
        let below = piece(-400.0, 0.0);
        let above = piece(0.0, 400.0);
        assert!((below + above - 1.0).abs() < 1e-6, "total mass {}", below + above);
        assert!((below - tau).abs() < 1e-6, "mass below zero {below}");
    }

    #[test]
    fn al_cdf_matches_quadrature_and_inverts() {
        let (tau, sigma) = (0.25, 1.3);
        for &x in &[-3.0, -0.5, 0.0, 0.4, 2.5] {
            // CDF by quadrature from far left.
            let n = 200_000;
            let lo = -80.0;
            let h = (x - lo) / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let t = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += al_logpdf(t, tau, sigma).exp() * w * h;
            }
            assert!((al_cdf(x, tau, sigma) - acc).abs() < 1e-5);
        }
        for &u in &[0.01, 0.25, 0.5, 0.9, 0.99] {
            let x = al_quantile(u, tau, sigma);
            assert!((al_cdf(x, tau, sigma) - u).abs() < 1e-12);
        }
        // The tau-quantile is zero by construction.
        assert!(al_quantile(tau, tau, sigma).abs() < 1e-12);
    }

    #[test]
    fn exponential_sampler_rejects_bad_mean_and_matches_moments() {
        let mut s = stream(0);
        assert!(sample_exponential(0.0, &mut s).is_err());
        assert!(sample_exponential(-1.0, &mut s).is_err());
        let n = 200_000;
        let mean = 3.5;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sample_exponential(mean, &mut s).unwrap();
        }
        let est = acc / n as f64;
        // SE = mean / sqrt(n) ~ 0.008; allow 5 SEs.
        assert!((est - mean).abs() < 0.04, "mean estimate {est}");
    }

    #[test]
    fn inverse_gamma_moments() {
        // shape a=4, rate b=6: mean b/(a-1)=2, var b^2/((a-1)^2 (a-2)) = 2.
        let mut s = stream(1);
        let n = 400_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let x = sample_inverse_gamma(4.0, 6.0, &mut s).unwrap();
            acc += x;
            acc2 += x * x;
        }
        let mean = acc / n as f64;
        let var = acc2 / n as f64 - mean * mean;
        assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
        assert!((var - 2.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn inverse_gaussian_moments() {
        // mean mu, shape lambda: var = mu^3 / lambda.
        let (mu, lambda) = (2.0, 5.0);
        let mut s = stream(2);
        let n = 400_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let x = sample_inverse_gaussian(mu, lambda, &mut s).unwrap();
            assert!(x > 0.0);
            acc += x;
            acc2 += x * x;
        }
        let mean = acc / n as f64;
        let var = acc2 / n as f64 - mean * mean;
        assert!((mean - mu).abs() < 0.02, "mean {mean}");
        assert!((var - mu.powi(3) / lambda).abs() < 0.05, "var {var}");
    }

    #[test]
    fn inverse_gaussian_survives_huge_mean() {
        let mut s = stream(3);
        for _ in 0..1000 {
            let x = sample_inverse_gaussian(1e300, 0.5, &mut s).unwrap();
            assert!(x.is_finite() && x > 0.0);
        }
    }

    #[test]
    fn mvn_precision_matches_mean_and_covariance() {
        // M = [[2, 0.5], [0.5, 1]], m = [1, -1]. Mean = M^-1 m, cov = M^-1.
        let m = Array2::from_shape_vec((2, 2), vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let lin = [1.0, -1.0];
        let det = 2.0 * 1.0 - 0.25;
        let inv = [
            [1.0 / det, -0.5 / det],
            [-0.5 / det, 2.0 / det],
        ];
        let want_mean = [
            inv[0][0] * lin[0] + inv[0][1] * lin[1],
            inv[1][0] * lin[0] + inv[1][1] * lin[1],
        ];
        let mut s = stream(4);
        let n = 200_000;
        let mut sum = [0.0f64; 2];
        let mut sum_sq = [0.0f64; 2];
        let mut sum_xy = 0.0f64;
        for _ in 0..n {
            let (d, retries) = sample_mvn_precision(m.view(), &lin, &mut s).unwrap();
            assert_eq!(retries, 0);
            sum[0] += d[0];
            sum[1] += d[1];
            sum_sq[0] += d[0] * d[0];
            sum_sq[1] += d[1] * d[1];
            sum_xy += d[0] * d[1];
        }
        let nf = n as f64;
        let mean = [sum[0] / nf, sum[1] / nf];
        let var = [
            sum_sq[0] / nf - mean[0] * mean[0],
            sum_sq[1] / nf - mean[1] * mean[1],
        ];
        let cov = sum_xy / nf - mean[0] * mean[1];
        assert!((mean[0] - want_mean[0]).abs() < 0.01, "mean0 {}", mean[0]);
        assert!((mean[1] - want_mean[1]).abs() < 0.01, "mean1 {}", mean[1]);
        assert!((var[0] - inv[0][0]).abs() < 0.01, "var0 {}", var[0]);
        assert!((var[1] - inv[1][1]).abs() < 0.02, "var1 {}", var[1]);
        assert!((cov - inv[0][1]).abs() < 0.01, "cov {cov}");
    }

    #[test]
    fn mvn_precision_jitters_semidefinite_matrix() {
        // Rank-deficient: [[1,1],[1,1]]. Jitter makes it factorable.
        let m = Array2::from_shape_vec((2, 2), vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut s = stream(5);
        let (d, retries) = sample_mvn_precision(m.view(), &[0.0, 0.0], &mut s).unwrap();
        assert!(retries >= 1);
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mvn_precision_rejects_indefinite_matrix() {
        let m = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, -5.0]).unwrap();
        let mut s = stream(6);
        assert!(sample_mvn_precision(m.view(), &[0.0, 0.0], &mut s).is_err());
    }
}
