//! Why quantile regression: groups that differ only in the tails.
//!
//! Two groups share the same median response everywhere. At one peak,
//! though, one group's peak heights are heavy-tailed (scaled Student-t)
//! while the other's are Gaussian -- same center, very different upper
//! tail. Mean- or median-based models see nothing; fitting the 0.9
//! quantile exposes the difference. We fit both levels and compare the
//! flagged regions.
//!
//! Run with: `cargo run --release --example tail_versus_median`

use fqreg::data::FunctionalDataset;
use fqreg::dists::QuantileLevel;
use fqreg::gibbs::{run_chain, McmcSpec, ModelSpec};
use fqreg::inference::{default_effect_threshold, summarize_draws};
use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{StandardNormal, StudentT};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 120;
    let t_len = 65;
    let grid: Vec<f64> = (0..t_len).map(|l| l as f64 / (t_len - 1) as f64).collect();
    let bump = |tv: f64| (-((tv - 0.4) / 0.07).powi(2)).exp();

    let mut rng = StdRng::seed_from_u64(88);
    let t2 = StudentT::new(2.0).unwrap();
    let mut curves = Array2::zeros((n, t_len));
    let mut design = Array2::zeros((n, 2));
    for i in 0..n {
        let heavy = i < n / 2; // group +1 gets the heavy-tailed peak
        let x = if heavy { 1.0 } else { -1.0 };
        design[(i, 0)] = 1.0;
        design[(i, 1)] = x;
        // Peak height: same median (1.0) in both groups, heavier tail in one.
        let height = if heavy {
            1.0 + 0.8 * rng.sample::<f64, _>(t2)
        } else {
            1.0 + 0.3 * rng.sample::<f64, _>(StandardNormal)
        };
        for (l, &tv) in grid.iter().enumerate() {
            let noise: f64 = 0.25 * rng.sample::<f64, _>(StandardNormal);
            curves[(i, l)] = (2.0 * tv).sin() + height * bump(tv) + noise;
        }
    }
    let data = FunctionalDataset::new(grid.clone(), curves)?;

    for tau in [0.5, 0.9] {
        let mut model = ModelSpec::default_for(QuantileLevel::new(tau)?, t_len);
        model.mcmc = McmcSpec { n_iter: 2500, burn_in: 1000, thin: 3, n_chains: 1, seed: 5 };
        println!("fitting tau = {tau} ...");
        let fit = run_chain(&data, &design, &model)?;
        let inf = summarize_draws(&fit.draws, 0.05, default_effect_threshold(), 3)?;
        let contrast = &inf.covariates[1];

        let peak_l = grid.iter().position(|&g| g >= 0.4).unwrap();
        println!(
            "  contrast at the peak: mean {:+.3}, 95% band [{:+.3}, {:+.3}], score {:.3}",
            contrast.mean[peak_l],
            contrast.band.lo[peak_l],
            contrast.band.hi[peak_l],
            contrast.scores[peak_l]
        );
        if contrast.regions.is_empty() {
            println!("  flagged regions: none (the groups agree at this quantile)\n");
        } else {
            for r in &contrast.regions {
                println!(
                    "  flagged region: t in [{:.2}, {:.2}] ({} locations)",
                    grid[r.start],
                    grid[r.end - 1],
                    r.len()
                );
            }
            println!();
        }
    }

    println!(
        "The median fit finds nothing to flag while the 0.9-quantile fit isolates \
         the heavy-tailed peak; this is the comparison `fqreg simulate` runs at scale."
    );
    Ok(())
}
