//! Geweke convergence scores for recorded traces.

use ndarray::{Array2, Array3};

use super::GewekeChain;

/// Bartlett-window estimate of the spectral density at frequency zero,
/// with bandwidth floor(sqrt(n)).
fn spectral_variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let bw = ((n as f64).sqrt().floor() as usize).min(n - 1);
    let gamma = |k: usize| -> f64 {
        let mut acc = 0.0;
        for t in 0..n - k {
            acc += (x[t] - mean) * (x[t + k] - mean);
        }
        acc / n as f64
    };
    let mut s = gamma(0);
    for k in 1..=bw {
        s += 2.0 * (1.0 - k as f64 / (bw + 1) as f64) * gamma(k);
    }
    s.max(0.0)
}

/// Geweke z-score comparing the first 10% of a trace to the last 50%,
/// standardized by spectral variances. Returns 0 for traces too short to
/// split or with no variation and no mean difference.
pub fn geweke_z(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 10 {
        return 0.0;
    }
    let n_a = (n / 10).max(1);
    let n_b = (n / 2).max(1);
    let a = &trace[..n_a];
    let b = &trace[n - n_b..];
    let mean_a = a.iter().sum::<f64>() / n_a as f64;
    let mean_b = b.iter().sum::<f64>() / n_b as f64;
    let var = spectral_variance(a) / n_a as f64 + spectral_variance(b) / n_b as f64;
    let diff = mean_a - mean_b;
    if var <= 0.0 {
        return if diff == 0.0 { 0.0 } else { f64::INFINITY * diff.signum() };
    }
    diff / var.sqrt()
}

/// Scores every recorded scalar of one chain: each coefficient-function value
/// `b[., a, l]` and each scale `sigma[., l]`.
pub fn geweke_chain(chain_id: u64, b: &Array3<f64>, sigma: &Array2<f64>) -> GewekeChain {
    let (g, p, t) = b.dim();
    let mut b_z = Array2::zeros((p, t));
    let mut buf = vec![0.0; g];
    for a in 0..p {
        for l in 0..t {
            for gi in 0..g {
                buf[gi] = b[(gi, a, l)];
            }
            b_z[(a, l)] = geweke_z(&buf);
        }
    }
    let mut sigma_z = vec![0.0; t];
    for l in 0..t {
        for gi in 0..g {
            buf[gi] = sigma[(gi, l)];
        }
        sigma_z[l] = geweke_z(&buf);
    }
    GewekeChain { chain_id, b_z, sigma_z }
}
