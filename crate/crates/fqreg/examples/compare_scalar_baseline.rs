//! Functional model vs per-location quantile regression on one dataset.
//!
//! The functional model shares information across the grid through its
//! wavelet basis and shrinkage prior; the baseline fits an independent
//! Bayesian quantile regression at every grid point. On curve data the
//! baseline is noisy -- each location only sees N scalar observations --
//! while the functional fit borrows strength from neighbors. This example
//! fits both to the same heavy-tailed dataset and compares integrated
//! squared error and integrated posterior variance against the known truth.
//!
//! Run with: `cargo run --release --example compare_scalar_baseline`

use fqreg::data::FunctionalDataset;
use fqreg::dists::QuantileLevel;
use fqreg::gibbs::bayes_qr::{run_scalar_qr, ScalarQrSpec};
use fqreg::gibbs::{run_chain, McmcSpec, ModelSpec, PosteriorDraws};
use fqreg::simgen::{imse, ivar};
use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StudentT;

fn effect(t: f64) -> f64 {
    1.2 * (-((t - 0.4) / 0.08).powi(2)).exp()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 80;
    let t_len = 65;
    let tau = 0.5;
    let grid: Vec<f64> = (0..t_len).map(|l| l as f64 / (t_len - 1) as f64).collect();

    // Heavy-tailed noise makes the median the natural target and stresses
    // the per-location baseline.
    let mut rng = StdRng::seed_from_u64(2024);
    let t3 = StudentT::new(3.0).unwrap();
    let mut curves = Array2::zeros((n, t_len));
    let mut design = Array2::zeros((n, 2));
    for i in 0..n {
        let x = if i < n / 2 { 1.0 } else { -1.0 };
        design[(i, 0)] = 1.0;
        design[(i, 1)] = x;
        for (l, &tv) in grid.iter().enumerate() {
            let baseline = 0.5 * (2.0 * tv).cos();
            let noise: f64 = rng.sample::<f64, _>(t3) * 0.5;
            curves[(i, l)] = baseline + x * effect(tv) + noise;
        }
    }
    let data = FunctionalDataset::new(grid.clone(), curves)?;

    // Symmetric noise in both groups: the true tau = 0.5 contrast is the
    // bump itself.
    let truth: Vec<f64> = grid.iter().map(|&tv| effect(tv)).collect();
    let mcmc = McmcSpec { n_iter: 2000, burn_in: 500, thin: 3, n_chains: 1, seed: 31 };

    let mut model = ModelSpec::default_for(QuantileLevel::new(tau)?, t_len);
    model.mcmc = mcmc;
    println!("fitting the functional model ...");
    let fqr = run_chain(&data, &design, &model)?.draws;

    println!("fitting the per-location baseline ...");
    let spec = ScalarQrSpec::new(QuantileLevel::new(tau)?, mcmc);
    let qr = run_scalar_qr(&data, &design, &spec)?;

    let report = |name: &str, draws: &PosteriorDraws| -> Result<(), Box<dyn std::error::Error>> {
        let contrast = draws.b.index_axis(ndarray::Axis(1), 1);
        let g = contrast.dim().0 as f64;
        let mean: Vec<f64> = (0..t_len).map(|l| contrast.column(l).sum() / g).collect();
        let e = imse(&mean, &truth, &grid)?;
        let v = ivar(contrast, &grid)?;
        println!("  {name:<11}  IMSE {e:>7.4}   IVar {v:>7.4}");
        Ok(())
    };
    println!("\ngroup-contrast error against the known truth:");
    report("functional", &fqr)?;
    report("per-point", &qr)?;

    println!(
        "\nThe functional fit is both closer to the truth and tighter; \
         `fqreg simulate` repeats this comparison over many replicates with \
         sensitivity and false-positive summaries."
    );
    Ok(())
}
