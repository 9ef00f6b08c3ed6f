//! Simultaneous bands, pointwise scores, and region flagging — standalone.
//!
//! The inference toolkit works on any matrix of posterior draws, not just
//! ones produced by the sampler. Here we construct draws from a known
//! posterior (a Gaussian process around a bump-shaped mean) to show:
//!
//! * how simultaneous 95% bands differ from pointwise 95% intervals,
//! * what the per-location score means (the smallest band level at which
//!   zero is excluded -- a multiplicity-adjusted local p-value analogue),
//! * the exact duality between bands and scores, and
//! * how scores combine with an effect-size threshold into flagged regions.
//!
//! Run with: `cargo run --release --example credible_bands`

use fqreg::inference::{
    default_effect_threshold, flag_regions, pointwise_summary, simbas, simultaneous_band,
};
use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = 4000; // posterior draws
    let t = 101; // grid points
    let grid: Vec<f64> = (0..t).map(|l| l as f64 / (t - 1) as f64).collect();

    // True posterior mean: one strong bump, one weak bump that is "real"
    // but too small to matter practically.
    let mean: Vec<f64> = grid
        .iter()
        .map(|&tv| {
            0.8 * (-((tv - 0.3) / 0.06).powi(2)).exp()
                + 0.2 * (-((tv - 0.75) / 0.05).powi(2)).exp()
        })
        .collect();

    // Draws: mean + smooth correlated noise (random low-frequency waves),
    // mimicking what a posterior over smooth functions looks like.
    let mut rng = StdRng::seed_from_u64(3);
    let mut draws = Array2::zeros((g, t));
    for i in 0..g {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        for (l, &tv) in grid.iter().enumerate() {
            let smooth = 0.04 * a + 0.04 * b * (2.5 * tv + phase).sin();
            let rough: f64 = rng.sample::<f64, _>(StandardNormal) * 0.015;
            draws[(i, l)] = mean[l] + smooth + rough;
        }
    }

    let alpha = 0.05;
    let band = simultaneous_band(draws.view(), alpha)?;
    let pw = pointwise_summary(draws.view(), alpha)?;
    let scores = simbas(draws.view())?;

    // Simultaneous bands are wider than pointwise intervals: they must hold
    // for the whole curve at once.
    let mut sim_width = 0.0;
    let mut pw_width = 0.0;
    for l in 0..t {
        sim_width += band.hi[l] - band.lo[l];
        pw_width += pw.hi[l] - pw.lo[l];
    }
    println!(
        "mean width: simultaneous {:.4} vs pointwise {:.4} (ratio {:.2})",
        sim_width / t as f64,
        pw_width / t as f64,
        sim_width / pw_width
    );

    // Duality: a location's score is <= alpha exactly when the level-alpha
    // simultaneous band excludes zero there.
    for l in 0..t {
        let outside = band.lo[l] > 0.0 || band.hi[l] < 0.0;
        assert_eq!(outside, scores[l] <= alpha, "duality must hold at every location");
    }
    println!("band/score duality verified at all {t} locations");

    // Flagging: statistically nonzero AND practically large. The weak bump
    // is detected by the scores but filtered by the effect threshold.
    let threshold = default_effect_threshold();
    let means: Vec<f64> = (0..t)
        .map(|l| draws.column(l).sum() / g as f64)
        .collect();
    let stat_only = flag_regions(&scores, &means, alpha, 0.0, 3);
    let practical = flag_regions(&scores, &means, alpha, threshold, 3);
    println!("\nregions with score <= {alpha} (no size filter):");
    for r in &stat_only {
        println!("  t in [{:.2}, {:.2}]", grid[r.start], grid[r.end - 1]);
    }
    println!("regions also exceeding the effect threshold {threshold:.3}:");
    for r in &practical {
        println!("  t in [{:.2}, {:.2}]", grid[r.start], grid[r.end - 1]);
    }
    assert!(practical.len() < stat_only.len(), "the weak bump should be filtered out");
    Ok(())
}
