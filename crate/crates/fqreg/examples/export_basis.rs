//! Build the wavelet basis used by the functional model and inspect it.
//!
//! The model represents each coefficient function in a periodized Daubechies
//! basis on a dyadic zero-padding of the observed grid. This example builds
//! that basis for a 200-point grid, shows the multiresolution block
//! structure the shrinkage prior works on, and verifies the two properties
//! the sampler relies on: exact round-trips and energy preservation.
//!
//! Run with: `cargo run --release --example export_basis`

use fqreg::wavelet::{next_pow2, BasisTransform, WaveletSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = 200; // observed grid length
    let padded = next_pow2(t);
    let spec = WaveletSpec::new(4, WaveletSpec::default_levels(padded));
    println!(
        "grid length {t} pads to {padded}; Daubechies-{} with {} levels",
        spec.vanishing_moments, spec.levels
    );

    let basis = BasisTransform::build(t, spec)?;

    // The coefficient vector is partitioned into one scaling block plus one
    // detail block per level; the prior shrinks each block with its own
    // scale, so coarse trends and fine wiggles are regularized separately.
    println!("\ncoefficient blocks (half-open index ranges):");
    for g in basis.groups() {
        println!(
            "  {:>9}  level {}  [{:>4}, {:>4})  {} coefficients",
            g.name,
            g.level,
            g.range.start,
            g.range.end,
            g.range.len()
        );
    }

    // Round-trip: because the transform is orthonormal on the padded grid
    // and the padding is zeros, mapping a curve to coefficients (adjoint)
    // and back (synthesis, truncated to the grid) recovers it exactly.
    let curve: Vec<f64> = (0..t)
        .map(|l| {
            let x = l as f64 / (t - 1) as f64;
            (6.0 * x).sin() + 0.3 * (25.0 * x).cos()
        })
        .collect();
    let coeffs = basis.grid_adjoint(&curve);
    let back = basis.coeff_to_grid(&coeffs);
    let max_err = curve
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("\nround-trip max error: {max_err:.3e}");

    // Energy is preserved (Parseval), which keeps the Gibbs coefficient
    // updates well conditioned.
    let grid_energy: f64 = curve.iter().map(|v| v * v).sum();
    let coeff_energy: f64 = coeffs.iter().map(|v| v * v).sum();
    println!("energy on the grid {grid_energy:.6}, in coefficients {coeff_energy:.6}");

    // How sparse is a smooth curve in this basis? Count the coefficients
    // needed to hold 99.99% of the energy -- this concentration is exactly
    // what the shrinkage prior exploits.
    let mut mags: Vec<f64> = coeffs.iter().map(|v| v * v).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut needed = 0;
    for (i, m) in mags.iter().enumerate() {
        acc += m;
        if acc >= 0.9999 * coeff_energy {
            needed = i + 1;
            break;
        }
    }
    println!("{needed} of {} coefficients hold 99.99% of the energy", basis.k());

    // The synthesis matrix is what `fqreg basis --export` writes; column l
    // reconstructs the curve value at grid point l.
    let phi = basis.phi();
    println!("\nbasis matrix: {} coefficients x {} grid points", phi.nrows(), phi.ncols());
    Ok(())
}
