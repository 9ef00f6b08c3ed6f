//! Synthetic two-group functional data and scoring metrics.
//!
//! Curves are sums of seven Gaussian-density-shaped peaks with random
//! per-subject magnitudes plus a stationary Gaussian AR(1) error process:
//! `y(t) = sum_k c_k f(t | mu_k, sigma_k) + e(t)`, with `f` the normal pdf.
//! Two settings differ only in the magnitude laws: a symmetric heavy-tailed
//! design (scaled Student-t with 2 df at peaks 3 and 6) and a right-skewed
//! design (shifted mean-free inverse-gamma at peaks 2 and 6). In both, the
//! groups share medians at the perturbed peaks but differ in spread or tail,
//! so group contrasts appear only away from the median quantile.
//!
//! True quantile effect curves have no closed form (quantiles of a convolved
//! sum); they come from a seeded Monte Carlo oracle over the marginal law of
//! `y(t)` at each grid point, cached per (setting, level, seed, sample count).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FunctionalDataset;
use crate::dists::rng::{RngStream, SiteKind};
use crate::error::{Error, Result};

/// Observation grid: 501 equispaced points on [0, 15].
pub const GRID_LEN: usize = 501;
pub const GRID_MAX: f64 = 15.0;
/// Curves per group in a standard replicate.
pub const N_PER_GROUP: usize = 200;
/// Lag-1 autocorrelation of the error process.
pub const AR_RHO: f64 = 0.8;
/// Marginal standard deviation of the error process (marginal N(0, 9)).
pub const AR_MARGINAL_SD: f64 = 3.0;
/// Practical-significance threshold for detection scoring.
pub const DETECTION_DELTA: f64 = 0.3;
/// Monte Carlo sample count for the quantile truth oracle.
pub const TRUTH_MC_SAMPLES: usize = 1_000_000;

/// The two synthetic designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimSetting {
    /// Groups differ in spread via scaled Student-t (2 df) magnitudes.
    SymmetricHeavyTailed,
    /// Groups differ in the upper tail via shifted inverse-gamma magnitudes.
    RightSkewed,
}

impl SimSetting {
    pub fn name(&self) -> &'static str {
        match self {
            SimSetting::SymmetricHeavyTailed => "symmetric_heavy_tailed",
            SimSetting::RightSkewed => "right_skewed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "symmetric_heavy_tailed" => Ok(SimSetting::SymmetricHeavyTailed),
            "right_skewed" => Ok(SimSetting::RightSkewed),
            other => Err(Error::config(format!(
                "unknown simulation setting {other:?}; expected symmetric_heavy_tailed or right_skewed"
            ))),
        }
    }
}

/// Law of a per-subject peak magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MagnitudeLaw {
    Normal { mean: f64, sd: f64 },
    /// `shift + scale * t_df`.
    ScaledStudentT { scale: f64, df: f64, shift: f64 },
    /// `shift + scale / Exp(1)`: a shape-1 inverse-gamma (no finite mean).
    ShiftedInverseGamma { scale: f64, shift: f64 },
}

impl MagnitudeLaw {
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            MagnitudeLaw::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            MagnitudeLaw::ScaledStudentT { scale, df, shift } => {
                let t: f64 = StudentT::new(df).expect("positive df").sample(rng);
                shift + scale * t
            }
            MagnitudeLaw::ShiftedInverseGamma { scale, shift } => {
                let e: f64 = Exp1.sample(rng);
                shift + scale / e.max(f64::MIN_POSITIVE)
            }
        }
    }
}

/// One Gaussian-density peak with per-group magnitude laws.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    pub mu: f64,
    pub sigma: f64,
    /// Magnitude law for group 1 (index 0) and group 2 (index 1).
    pub laws: [MagnitudeLaw; 2],
}

const PEAK_LOCATIONS: [(f64, f64); 7] = [
    (1.209, 0.145),
    (2.938, 0.150),
    (4.700, 0.155),
    (7.267, 0.160),
    (9.013, 0.165),
    (10.545, 0.170),
    (13.200, 0.175),
];

/// Peak table for a setting (seven peaks, both groups).
pub fn peaks(setting: SimSetting) -> [Peak; 7] {
    use MagnitudeLaw::*;
    let base = Normal { mean: 30.0, sd: 1.5 };
    let heavy = ScaledStudentT { scale: 1.75, df: 2.0, shift: 30.0 };
    let skew = ShiftedInverseGamma { scale: 0.35, shift: 30.0 };
    let mut out = [Peak { mu: 0.0, sigma: 0.0, laws: [base, base] }; 7];
    for (k, &(mu, sigma)) in PEAK_LOCATIONS.iter().enumerate() {
        out[k].mu = mu;
        out[k].sigma = sigma;
    }
    match setting {
        SimSetting::SymmetricHeavyTailed => {
            out[2].laws = [heavy, Normal { mean: 30.0, sd: 1.0 }];
            out[5].laws = [Normal { mean: 30.0, sd: 1.0 }, heavy];
        }
        SimSetting::RightSkewed => {
            out[1].laws = [skew, Normal { mean: 30.6, sd: 0.4 }];
            out[5].laws = [Normal { mean: 30.5, sd: 0.4 }, skew];
        }
    }
    out
}

/// The standard observation grid.
pub fn sim_grid() -> Vec<f64> {
    (0..GRID_LEN)
        .map(|l| GRID_MAX * l as f64 / (GRID_LEN - 1) as f64)
        .collect()
}

fn normal_pdf(t: f64, mu: f64, sigma: f64) -> f64 {
    let z = (t - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Peak shape values on a grid: row k holds `f(t_l | mu_k, sigma_k)`.
fn peak_matrix(setting: SimSetting, grid: &[f64]) -> Array2<f64> {
    let pk = peaks(setting);
    Array2::from_shape_fn((7, grid.len()), |(k, l)| {
        normal_pdf(grid[l], pk[k].mu, pk[k].sigma)
    })
}

/// Fills `out` with a stationary Gaussian AR(1) path: marginal N(0, 9),
/// lag-1 autocorrelation 0.8, started from the stationary law.
pub fn ar1_noise_into(rng: &mut RngStream, out: &mut [f64]) {
    let innovation_sd = AR_MARGINAL_SD * (1.0 - AR_RHO * AR_RHO).sqrt();
    let mut prev = 0.0;
    for (l, v) in out.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        prev = if l == 0 { AR_MARGINAL_SD * z } else { AR_RHO * prev + innovation_sd * z };
        *v = prev;
    }
}

/// Generates `n` curves for one group (0 or 1) on the standard grid.
///
/// Each subject has its own counter-derived stream keyed by (seed, group,
/// subject index), so generation is order- and batch-independent.
pub fn generate_curves(setting: SimSetting, group: usize, n: usize, seed: u64) -> Array2<f64> {
    assert!(group < 2, "group index must be 0 or 1");
    let grid = sim_grid();
    let f = peak_matrix(setting, &grid);
    let pk = peaks(setting);
    let mut curves = Array2::zeros((n, GRID_LEN));
    curves
        .axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut rng = RngStream::at(seed, group as u64, SiteKind::Subject, i, 0);
            let mut c = [0.0; 7];
            for k in 0..7 {
                c[k] = pk[k].laws[group].sample(&mut rng);
            }
            let mut noise = [0.0; GRID_LEN];
            ar1_noise_into(&mut rng, &mut noise);
            for l in 0..GRID_LEN {
                let mut v = noise[l];
                for k in 0..7 {
                    v += c[k] * f[(k, l)];
                }
                row[l] = v;
            }
        });
    curves
}

/// Generates a full replicate: 200 curves per group on the 501-point grid,
/// plus the design matrix [1, +1] for group 1 rows and [1, -1] for group 2.
pub fn generate_dataset(setting: SimSetting, seed: u64) -> (FunctionalDataset, Array2<f64>) {
    let g1 = generate_curves(setting, 0, N_PER_GROUP, seed);
    let g2 = generate_curves(setting, 1, N_PER_GROUP, seed);
    let n = 2 * N_PER_GROUP;
    let mut curves = Array2::zeros((n, GRID_LEN));
    curves.slice_mut(ndarray::s![..N_PER_GROUP, ..]).assign(&g1);
    curves.slice_mut(ndarray::s![N_PER_GROUP.., ..]).assign(&g2);
    let design = Array2::from_shape_fn((n, 2), |(i, j)| {
        if j == 0 {
            1.0
        } else if i < N_PER_GROUP {
            1.0
        } else {
            -1.0
        }
    });
    let data = FunctionalDataset::new(sim_grid(), curves).expect("generated data is valid");
    (data, design)
}

/// True quantile curves for one level: per-group marginal quantiles of
/// `y(t)` at every grid point, and the group effect under +/-1 coding.
#[derive(Debug, Clone)]
pub struct TruthCurves {
    pub tau: f64,
    /// `quantiles[g][l]` = tau-quantile of a group-(g+1) curve at `t_l`.
    pub group_quantiles: [Vec<f64>; 2],
    /// `(Q_1(t) - Q_2(t)) / 2`: the group-covariate coefficient.
    pub effect: Vec<f64>,
}

type TruthKey = (SimSetting, u64, u64, usize);

fn truth_cache() -> &'static Mutex<HashMap<TruthKey, Arc<TruthCurves>>> {
    static CACHE: OnceLock<Mutex<HashMap<TruthKey, Arc<TruthCurves>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Lower empirical quantile: ascending order statistic at rank ceil(tau n).
fn quantile_rank(tau: f64, n: usize) -> usize {
    ((tau * n as f64).ceil() as usize).clamp(1, n) - 1
}

/// Monte Carlo quantile truth oracle for several levels in one pass.
///
/// At each grid point the marginal law of a curve value is
/// `sum_k c_k f_k(t) + e` with `e ~ N(0, 9)`; this draws `n_samples`
/// realizations per group (shared across grid points) and takes empirical
/// quantiles. Results are cached by (setting, level, seed, sample count).
pub fn true_effect_curves(
    setting: SimSetting,
    taus: &[f64],
    seed: u64,
    n_samples: usize,
) -> Result<Vec<Arc<TruthCurves>>> {
    for &tau in taus {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::config(format!("quantile level must lie in (0,1), got {tau}")));
        }
    }
    let mut out: Vec<Option<Arc<TruthCurves>>> = vec![None; taus.len()];
    let mut missing: Vec<(usize, f64)> = Vec::new();
    {
        let cache = truth_cache().lock().expect("truth cache lock");
        for (i, &tau) in taus.iter().enumerate() {
            match cache.get(&(setting, tau.to_bits(), seed, n_samples)) {
                Some(hit) => out[i] = Some(hit.clone()),
                None => missing.push((i, tau)),
            }
        }
    }
    if !missing.is_empty() {
        let computed = truth_mc(setting, &missing, seed, n_samples);
        let mut cache = truth_cache().lock().expect("truth cache lock");
        for ((i, tau), curves) in missing.into_iter().zip(computed) {
            let arc = Arc::new(curves);
            cache.insert((setting, tau.to_bits(), seed, n_samples), arc.clone());
            out[i] = Some(arc);
        }
    }
    Ok(out.into_iter().map(|o| o.expect("filled")).collect())
}

/// Single-level convenience wrapper around [`true_effect_curves`].
pub fn true_effect_curve(
    setting: SimSetting,
    tau: f64,
    seed: u64,
    n_samples: usize,
) -> Result<Arc<TruthCurves>> {
    Ok(true_effect_curves(setting, &[tau], seed, n_samples)?.remove(0))
}

fn truth_mc(
    setting: SimSetting,
    taus: &[(usize, f64)],
    seed: u64,
    n: usize,
) -> Vec<TruthCurves> {
    let grid = sim_grid();
    let f = peak_matrix(setting, &grid);
    let pk = peaks(setting);

    // Ascending levels so quantile extraction can partition progressively.
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| taus[a].1.partial_cmp(&taus[b].1).expect("finite levels"));

    // quantiles[g][j][l] for the j-th requested level (input order).
    let mut quantiles = [
        vec![vec![0.0; GRID_LEN]; taus.len()],
        vec![vec![0.0; GRID_LEN]; taus.len()],
    ];
    for group in 0..2 {
        // One contiguous counter-derived stream per (group, source).
        let mut cs: Vec<Vec<f64>> = Vec::with_capacity(7);
        for k in 0..7 {
            let mut rng = RngStream::at(seed, 0, SiteKind::Truth, group * 8 + k, 0);
            cs.push((0..n).map(|_| pk[k].laws[group].sample(&mut rng)).collect());
        }
        let mut rng = RngStream::at(seed, 0, SiteKind::Truth, group * 8 + 7, 0);
        let e: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                AR_MARGINAL_SD * z
            })
            .collect();

        let per_point: Vec<Vec<f64>> = (0..GRID_LEN)
            .into_par_iter()
            .map(|l| {
                let mut buf = e.clone();
                for k in 0..7 {
                    let w = f[(k, l)];
                    // Peaks are effectively zero a few sd away; skipping
                    // exact zeros costs nothing and keeps the sum exact.
                    if w == 0.0 {
                        continue;
                    }
                    let ck = &cs[k];
                    for (b, c) in buf.iter_mut().zip(ck) {
                        *b += w * c;
                    }
                }
                // Progressive selection over ascending levels: each
                // selection leaves smaller elements behind, so later
                // (larger) ranks are found in the remaining tail.
                let mut vals = vec![0.0; taus.len()];
                let mut offset = 0usize;
                let mut last: Option<(usize, f64)> = None;
                for &j in &order {
                    let rank = quantile_rank(taus[j].1, n);
                    if let Some((r, v)) = last {
                        if r == rank {
                            vals[j] = v;
                            continue;
                        }
                    }
                    let (_, picked, _) = buf[offset..]
                        .select_nth_unstable_by(rank - offset, |a, b| {
                            a.partial_cmp(b).expect("finite values")
                        });
                    vals[j] = *picked;
                    last = Some((rank, *picked));
                    offset = rank + 1;
                }
                vals
            })
            .collect();
        for l in 0..GRID_LEN {
            for j in 0..taus.len() {
                quantiles[group][j][l] = per_point[l][j];
            }
        }
    }

    (0..taus.len())
        .map(|j| {
            let q1 = quantiles[0][j].clone();
            let q2 = quantiles[1][j].clone();
            let effect = q1.iter().zip(&q2).map(|(a, b)| (a - b) / 2.0).collect();
            TruthCurves { tau: taus[j].1, group_quantiles: [q1, q2], effect }
        })
        .collect()
}

/// Trapezoidal quadrature of `values` over `grid`.
pub fn trapezoid(values: &[f64], grid: &[f64]) -> f64 {
    assert_eq!(values.len(), grid.len());
    let mut acc = 0.0;
    for l in 1..grid.len() {
        acc += 0.5 * (values[l] + values[l - 1]) * (grid[l] - grid[l - 1]);
    }
    acc
}

/// Integrated squared error of an estimate against the truth.
pub fn imse(estimate: &[f64], truth: &[f64], grid: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() || estimate.len() != grid.len() {
        return Err(Error::config(format!(
            "length mismatch: estimate {}, truth {}, grid {}",
            estimate.len(),
            truth.len(),
            grid.len()
        )));
    }
    let sq: Vec<f64> = estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).collect();
    Ok(trapezoid(&sq, grid))
}

/// Integrated posterior variance: mean over draws of the integrated squared
/// deviation from the posterior mean curve.
pub fn ivar(draws: ArrayView2<'_, f64>, grid: &[f64]) -> Result<f64> {
    let (g, t) = draws.dim();
    if t != grid.len() {
        return Err(Error::config(format!(
            "length mismatch: draws have {t} locations, grid {}",
            grid.len()
        )));
    }
    if g == 0 {
        return Err(Error::config("no draws".to_string()));
    }
    let mut mean = vec![0.0; t];
    for row in draws.rows() {
        for l in 0..t {
            mean[l] += row[l];
        }
    }
    for m in mean.iter_mut() {
        *m /= g as f64;
    }
    let mut acc = 0.0;
    let mut sq = vec![0.0; t];
    for row in draws.rows() {
        for l in 0..t {
            sq[l] = (row[l] - mean[l]).powi(2);
        }
        acc += trapezoid(&sq, grid);
    }
    Ok(acc / g as f64)
}

/// Sensitivity and false positive rate of a flagging rule. `None` when the
/// corresponding ground-truth set is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRates {
    pub sensitivity: Option<f64>,
    pub fpr: Option<f64>,
}

/// Scores detection of true effects of magnitude at least `delta`:
/// ground-truth positives are locations with `|truth| >= delta`; a location
/// is flagged when its band exclusion score is at most `alpha` and the
/// estimated effect magnitude reaches `delta`.
pub fn sensitivity_fpr(
    scores: &[f64],
    estimate: &[f64],
    truth: &[f64],
    alpha: f64,
    delta: f64,
) -> DetectionRates {
    assert_eq!(scores.len(), estimate.len());
    assert_eq!(scores.len(), truth.len());
    let (mut tp, mut fp, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for l in 0..scores.len() {
        let is_pos = truth[l].abs() >= delta;
        let flagged = scores[l] <= alpha && estimate[l].abs() >= delta;
        if is_pos {
            pos += 1;
            if flagged {
                tp += 1;
            }
        } else {
            neg += 1;
            if flagged {
                fp += 1;
            }
        }
    }
    DetectionRates {
        sensitivity: (pos > 0).then(|| tp as f64 / pos as f64),
        fpr: (neg > 0).then(|| fp as f64 / neg as f64),
    }
}

/// Metrics for one replicate of one method at one level.
#[derive(Debug, Clone)]
pub struct ReplicateMetrics {
    pub imse: f64,
    pub ivar: f64,
    /// One entry per alpha, aligned with the alpha list used to score.
    pub rates: Vec<DetectionRates>,
}

/// Scores a single fitted replicate for one coefficient function.
pub fn score_replicate(
    draws: ArrayView2<'_, f64>,
    scores: &[f64],
    truth: &[f64],
    grid: &[f64],
    alphas: &[f64],
    delta: f64,
) -> Result<ReplicateMetrics> {
    let (g, t) = draws.dim();
    if g == 0 || t != grid.len() {
        return Err(Error::config("draw matrix does not match grid".to_string()));
    }
    let mut mean = vec![0.0; t];
    for row in draws.rows() {
        for l in 0..t {
            mean[l] += row[l];
        }
    }
    for m in mean.iter_mut() {
        *m /= g as f64;
    }
    let rates = alphas
        .iter()
        .map(|&a| sensitivity_fpr(scores, &mean, truth, a, delta))
        .collect();
    Ok(ReplicateMetrics { imse: imse(&mean, truth, grid)?, ivar: ivar(draws, grid)?, rates })
}

/// One row of a metric report: a (method, level, alpha) cell averaged over
/// replicates. `sensitivity`/`fpr` are `None` when undefined in every
/// replicate.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub method: String,
    pub tau: f64,
    pub alpha: f64,
    pub sensitivity: Option<f64>,
    pub fpr: Option<f64>,
    pub imse: f64,
    pub ivar: f64,
    pub n_replicates: usize,
}

/// Averages replicate metrics into report rows, one per alpha. Undefined
/// rates are skipped in the average (and reported as `None` if undefined
/// everywhere).
pub fn aggregate_metrics(
    method: &str,
    tau: f64,
    alphas: &[f64],
    reps: &[ReplicateMetrics],
) -> Vec<MetricRow> {
    assert!(!reps.is_empty());
    let mean_imse = reps.iter().map(|r| r.imse).sum::<f64>() / reps.len() as f64;
    let mean_ivar = reps.iter().map(|r| r.ivar).sum::<f64>() / reps.len() as f64;
    let mean_opt = |vals: Vec<Option<f64>>| -> Option<f64> {
        let defined: Vec<f64> = vals.into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| MetricRow {
            method: method.to_string(),
            tau,
            alpha,
            sensitivity: mean_opt(reps.iter().map(|r| r.rates[j].sensitivity).collect()),
            fpr: mean_opt(reps.iter().map(|r| r.rates[j].fpr).collect()),
            imse: mean_imse,
            ivar: mean_ivar,
            n_replicates: reps.len(),
        })
        .collect()
}

/// Standard alpha grid for detection scoring.
pub const REPORT_ALPHAS: [f64; 4] = [0.001, 0.01, 0.05, 0.10];
