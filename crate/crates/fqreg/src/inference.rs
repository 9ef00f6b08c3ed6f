//! Posterior summaries: simultaneous credible bands, band exclusion scores,
//! and flagged effect regions.
//!
//! Everything is built from the same standardized deviations. For draws
//! `B_g(l)` with pointwise mean `m_l` and standard deviation `sd_l`
//! (divisor `G-1`), each draw's sup-deviation is
//! `z_g = max_l |B_g(l) - m_l| / sd_l` over locations with `sd_l > 0`.
//!
//! * The level-`alpha` simultaneous band is `m_l +/- q_alpha sd_l` with
//!   `q_alpha` the `(floor(alpha G) + 1)`-th largest `z_g`.
//! * The band score at `l` is the fraction of draws with `z_g >= |m_l|/sd_l`:
//!   the smallest level at which the band excludes zero there.
//!
//! With these conventions the two are exactly dual, ties included: zero lies
//! outside the level-`alpha` band at `l` if and only if the band score at `l`
//! is at most `alpha` (for `alpha >= 1/G`, the Monte Carlo resolution).

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;

/// Default practical-significance threshold on the coefficient scale: half
/// of log2(1.5), i.e. a 1.5-fold change between groups coded as +/-1.
pub fn default_effect_threshold() -> f64 {
    0.5 * 1.5f64.log2()
}

/// Default minimum run length (in grid locations) for a flagged region.
pub const DEFAULT_MIN_RUN: usize = 3;

fn check_draws(draws: &ArrayView2<'_, f64>) -> Result<(usize, usize)> {
    let (g, t) = draws.dim();
    if g < 2 {
        return Err(Error::config(format!("need at least 2 draws, got {g}")));
    }
    if t == 0 {
        return Err(Error::config("draws have no grid locations".to_string()));
    }
    Ok((g, t))
}

fn mean_sd(draws: &ArrayView2<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let (g, t) = draws.dim();
    let mut mean = vec![0.0; t];
    for row in draws.rows() {
        for l in 0..t {
            mean[l] += row[l];
        }
    }
    for m in mean.iter_mut() {
        *m /= g as f64;
    }
    let mut sd = vec![0.0; t];
    for row in draws.rows() {
        for l in 0..t {
            sd[l] += (row[l] - mean[l]).powi(2);
        }
    }
    for s in sd.iter_mut() {
        *s = (*s / (g as f64 - 1.0)).sqrt();
    }
    (mean, sd)
}

/// Sup-deviation of each draw over locations with positive spread.
fn sup_deviations(draws: &ArrayView2<'_, f64>, mean: &[f64], sd: &[f64]) -> Vec<f64> {
    let (g, t) = draws.dim();
    let mut z = vec![0.0; g];
    for (gi, row) in draws.rows().into_iter().enumerate() {
        let mut m = 0.0f64;
        for l in 0..t {
            if sd[l] > 0.0 {
                m = m.max((row[l] - mean[l]).abs() / sd[l]);
            }
        }
        z[gi] = m;
    }
    z
}

/// A simultaneous credible band.
#[derive(Debug, Clone)]
pub struct BandResult {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// The sup-deviation multiplier defining the band.
    pub q: f64,
}

/// Level-`alpha` simultaneous credible band for one coefficient function.
pub fn simultaneous_band(draws: ArrayView2<'_, f64>, alpha: f64) -> Result<BandResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("band level must lie in (0,1), got {alpha}")));
    }
    let (g, t) = check_draws(&draws)?;
    let (mean, sd) = mean_sd(&draws);
    let mut z = sup_deviations(&draws, &mean, &sd);
    z.sort_by(|a, b| b.partial_cmp(a).expect("finite deviations"));
    let idx = ((alpha * g as f64).floor() as usize).min(g - 1);
    let q = z[idx];
    let mut lo = vec![0.0; t];
    let mut hi = vec![0.0; t];
    for l in 0..t {
        lo[l] = mean[l] - q * sd[l];
        hi[l] = mean[l] + q * sd[l];
    }
    Ok(BandResult { lo, hi, q })
}

/// Band exclusion score at every location: the smallest band level at which
/// zero falls outside the simultaneous band there. Locations with zero
/// spread score 1 when the mean is zero (never excluded) and `1/G` (the
/// Monte Carlo resolution) otherwise.
pub fn simbas(draws: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let (g, t) = check_draws(&draws)?;
    let (mean, sd) = mean_sd(&draws);
    let z = sup_deviations(&draws, &mean, &sd);
    let gf = g as f64;
    let mut out = vec![0.0; t];
    for l in 0..t {
        if sd[l] == 0.0 {
            out[l] = if mean[l] == 0.0 { 1.0 } else { 1.0 / gf };
            continue;
        }
        let u = mean[l].abs() / sd[l];
        out[l] = z.iter().filter(|&&zz| zz >= u).count() as f64 / gf;
    }
    Ok(out)
}

/// A maximal run of flagged grid locations, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlaggedRegion {
    pub start: usize,
    pub end: usize,
}

impl FlaggedRegion {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Flags regions where the band score stays at or below `alpha` and the
/// posterior mean effect is practically significant (`|mean| >=
/// effect_threshold`), keeping only runs of at least `min_run` consecutive
/// locations.
pub fn flag_regions(
    scores: &[f64],
    means: &[f64],
    alpha: f64,
    effect_threshold: f64,
    min_run: usize,
) -> Vec<FlaggedRegion> {
    assert_eq!(scores.len(), means.len());
    let min_run = min_run.max(1);
    let mut regions = Vec::new();
    let mut run_start: Option<usize> = None;
    for l in 0..=scores.len() {
        let on = l < scores.len() && scores[l] <= alpha && means[l].abs() >= effect_threshold;
        match (on, run_start) {
            (true, None) => run_start = Some(l),
            (false, Some(s)) => {
                if l - s >= min_run {
                    regions.push(FlaggedRegion { start: s, end: l });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    regions
}

/// Pointwise posterior summary: mean, standard deviation, and equal-tailed
/// `alpha`-level interval (lower empirical quantiles, ascending order
/// statistic at index `ceil(q G)`).
#[derive(Debug, Clone)]
pub struct PointwiseSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn pointwise_summary(draws: ArrayView2<'_, f64>, alpha: f64) -> Result<PointwiseSummary> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("interval level must lie in (0,1), got {alpha}")));
    }
    let (g, t) = check_draws(&draws)?;
    let (mean, sd) = mean_sd(&draws);
    let mut lo = vec![0.0; t];
    let mut hi = vec![0.0; t];
    let mut col = vec![0.0; g];
    let q_idx = |q: f64| -> usize { ((q * g as f64).ceil() as usize).clamp(1, g) - 1 };
    let (lo_i, hi_i) = (q_idx(alpha / 2.0), q_idx(1.0 - alpha / 2.0));
    for l in 0..t {
        for gi in 0..g {
            col[gi] = draws[(gi, l)];
        }
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        lo[l] = col[lo_i];
        hi[l] = col[hi_i];
    }
    Ok(PointwiseSummary { mean, sd, lo, hi })
}

/// Full inference for one coefficient function.
#[derive(Debug, Clone)]
pub struct CovariateInference {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub band: BandResult,
    pub scores: Vec<f64>,
    pub regions: Vec<FlaggedRegion>,
    /// Per-location membership in a kept region.
    pub flagged: Vec<bool>,
}

/// Inference across all covariates of a fit.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub tau: f64,
    pub alpha: f64,
    pub effect_threshold: f64,
    pub min_run: usize,
    pub grid: Vec<f64>,
    pub covariates: Vec<CovariateInference>,
}

/// Summarizes posterior draws: level-`alpha` simultaneous band, band scores,
/// and flagged regions for every covariate.
pub fn summarize_draws(
    draws: &PosteriorDraws,
    alpha: f64,
    effect_threshold: f64,
    min_run: usize,
) -> Result<InferenceResult> {
    let (_, p, t) = draws.b.dim();
    let mut covariates = Vec::with_capacity(p);
    for a in 0..p {
        let view = draws.b.index_axis(ndarray::Axis(1), a);
        let (mean, sd) = mean_sd(&view);
        let band = simultaneous_band(view, alpha)?;
        let scores = simbas(view)?;
        let regions = flag_regions(&scores, &mean, alpha, effect_threshold, min_run);
        let mut flagged = vec![false; t];
        for r in &regions {
            for f in flagged[r.start..r.end].iter_mut() {
                *f = true;
            }
        }
        covariates.push(CovariateInference { mean, sd, band, scores, regions, flagged });
    }
    Ok(InferenceResult {
        tau: draws.tau,
        alpha,
        effect_threshold,
        min_run,
        grid: draws.grid.clone(),
        covariates,
    })
}
