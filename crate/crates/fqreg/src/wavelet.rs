//! Periodized Daubechies wavelet transforms and the wavelet design basis.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * Scaling (low-pass) taps `h` are stored so that `h[0]` is the largest
//!   leading coefficient (for two vanishing moments, `h[0] = 0.4829...`).
//! * The detail filter is the quadrature mirror `g[m] = (-1)^m h[L-1-m]`.
//! * Analysis at one level maps a signal of even length `n` to `n/2`
//!   approximation and `n/2` detail coefficients via
//!   `a[k] = sum_m h[m] x[(2k+m) mod n]`, `d[k] = sum_m g[m] x[(2k+m) mod n]`.
//! * Synthesis is the exact transpose, so each level is orthonormal and the
//!   round trip is the identity.
//! * A full decomposition with `J` levels stores coefficients as
//!   `[a_J | d_J | d_{J-1} | ... | d_1]` (coarse to fine).
//!
//! Signals of non-dyadic length are zero-padded to the next power of two
//! before analysis; the design basis below keeps only the columns that touch
//! observed grid points.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};

const DB1: [f64; 2] = [0.70710678118654752, 0.70710678118654752];
const DB2: [f64; 4] = [
    0.48296291314453414, 0.83651630373780791, 0.22414386804201338, -0.12940952255126038,
];
const DB3: [f64; 6] = [
    0.33267055295008262, 0.80689150931109258, 0.45987750211849157, -0.13501102001025459,
    -0.085441273882026662, 0.035226291885709537,
];
const DB4: [f64; 8] = [
    0.23037781330889650, 0.71484657055291565, 0.63088076792985891, -0.027983769416859854,
    -0.18703481171909308, 0.030841381835560764, 0.032883011666885200, -0.010597401785069032,
];
const DB5: [f64; 10] = [
    0.16010239797419291, 0.60382926979718967, 0.72430852843777293, 0.13842814590132073,
    -0.24229488706638203, -0.032244869584638375, 0.077571493840045714, -0.0062414902127982743,
    -0.012580751999081999, 0.0033357252854737713,
];
const DB6: [f64; 12] = [
    0.11154074335010946, 0.49462389039845309, 0.75113390802109535, 0.31525035170919763,
    -0.22626469396543982, -0.12976686756726194, 0.097501605587323049, 0.027522865530305729,
    -0.031582039317486030, 0.00055384220116149614, 0.0047772575109455106, -0.0010773010853084796,
];
const DB7: [f64; 14] = [
    0.077852054085009179, 0.39653931948191731, 0.72913209084623512, 0.46978228740519312,
    -0.14390600392856498, -0.22403618499387498, 0.071309219266830265, 0.080612609151083072,
    -0.038029936935014414, -0.016574541630666881, 0.012550998556099841, 0.00042957797292136652,
    -0.0018016407040474909, 0.00035371379997452025,
];
const DB8: [f64; 16] = [
    0.054415842243104010, 0.31287159091429997, 0.67563073629728981, 0.58535468365420671,
    -0.015829105256349306, -0.28401554296154693, 0.00047248457391328277, 0.12874742662047846,
    -0.017369301001807546, -0.044088253930794752, 0.013981027917398282, 0.0087460940474057767,
    -0.0048703529934515743, -0.00039174037337694705, 0.00067544940645056937, -0.00011747678412476953,
];
const DB9: [f64; 18] = [
    0.038077947363878347, 0.24383467461259035, 0.60482312369011111, 0.65728807805130054,
    0.13319738582500758, -0.29327378327917491, -0.096840783222976461, 0.14854074933810638,
    0.030725681479333379, -0.067632829061329974, 0.00025094711483145196, 0.022361662123679097,
    -0.0047232047577513973, -0.0042815036824634298, 0.0018476468830562265, 0.00023038576352319597,
    -0.00025196318894271014, 3.9347320316271599e-5,
];
const DB10: [f64; 20] = [
    0.026670057900555554, 0.18817680007769149, 0.52720118893172559, 0.68845903945360357,
    0.28117234366057746, -0.24984642432731538, -0.19594627437737704, 0.12736934033579326,
    0.093057364603572351, -0.071394147166397087, -0.029457536821875813, 0.033212674059341002,
    0.0036065535669561697, -0.010733175483330575, 0.0013953517470529012, 0.0019924052951850561,
    -0.00068585669495971163, -0.00011646685512928545, 9.3588670320069591e-5, -1.3264202894521245e-5,
];

/// Scaling filter taps for the Daubechies family with `p` vanishing moments,
/// `p` in 1..=10 (filter length `2p`). The taps were computed by spectral
/// factorization of the Daubechies half-band polynomial in 60-digit
/// arithmetic and rounded once to f64, so orthonormality holds to machine
/// precision.
pub fn daubechies_taps(p: usize) -> Result<&'static [f64]> {
    Ok(match p {
        1 => &DB1,
        2 => &DB2,
        3 => &DB3,
        4 => &DB4,
        5 => &DB5,
        6 => &DB6,
        7 => &DB7,
        8 => &DB8,
        9 => &DB9,
        10 => &DB10,
        _ => {
            return Err(Error::config(format!(
                "vanishing moments must be in 1..=10, got {p}"
            )))
        }
    })
}

/// Quadrature mirror of a scaling filter: `g[m] = (-1)^m h[L-1-m]`.
pub fn quadrature_mirror(h: &[f64]) -> Vec<f64> {
    let l = h.len();
    (0..l)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * h[l - 1 - m]
        })
        .collect()
}

/// Boundary handling for the transform. Only periodization is provided: it
/// keeps every level orthonormal at dyadic lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
}

/// How non-dyadic grid lengths are extended before analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Append zeros up to the next power of two.
    ZeroToDyadic,
}

/// Wavelet transform specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletSpec {
    /// Vanishing moments `p` of the Daubechies filter (length `2p`).
    pub vanishing_moments: usize,
    /// Number of decomposition levels `J`.
    pub levels: usize,
    pub boundary: Boundary,
    pub padding: Padding,
}

impl WaveletSpec {
    pub fn new(vanishing_moments: usize, levels: usize) -> Self {
        WaveletSpec {
            vanishing_moments,
            levels,
            boundary: Boundary::Periodic,
            padding: Padding::ZeroToDyadic,
        }
    }

    /// Default decomposition depth for a padded length: as deep as possible
    /// while keeping at least four scaling coefficients, capped at eight
    /// levels (512 -> 7 levels, 2048 -> 8).
    pub fn default_levels(padded_len: usize) -> usize {
        let log2 = padded_len.trailing_zeros() as usize;
        log2.saturating_sub(2).clamp(1, 8)
    }
}

/// Next power of two at or above `n`.
pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// A periodized filter-bank pyramid for signals of one fixed length.
#[derive(Debug, Clone)]
pub struct Pyramid {
    h: &'static [f64],
    g: Vec<f64>,
    levels: usize,
    len: usize,
}

impl Pyramid {
    pub fn new(len: usize, spec: &WaveletSpec) -> Result<Self> {
        let h = daubechies_taps(spec.vanishing_moments)?;
        if spec.levels == 0 {
            return Err(Error::config("decomposition levels must be at least 1".to_string()));
        }
        if len == 0 || len % (1 << spec.levels) != 0 {
            return Err(Error::config(format!(
                "signal length {len} is not divisible by 2^levels = {}",
                1usize << spec.levels
            )));
        }
        Ok(Pyramid { h, g: quadrature_mirror(h), levels: spec.levels, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Full analysis. `x` and `out` have length `len`; `scratch` is a caller
    /// buffer of the same length.
    pub fn analyze_into(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(x.len(), self.len);
        debug_assert_eq!(out.len(), self.len);
        debug_assert!(scratch.len() >= self.len);
        out.copy_from_slice(x);
        let mut n = self.len;
        for _ in 0..self.levels {
            analyze_level(&out[..n], self.h, &self.g, &mut scratch[..n]);
            out[..n].copy_from_slice(&scratch[..n]);
            n /= 2;
        }
    }

    /// Full synthesis (the transpose of [`Self::analyze_into`], which is also
    /// its inverse since each level is orthonormal).
    pub fn synthesize_into(&self, coeffs: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.len);
        debug_assert_eq!(out.len(), self.len);
        debug_assert!(scratch.len() >= self.len);
        out.copy_from_slice(coeffs);
        let mut n = self.len >> (self.levels - 1);
        for _ in 0..self.levels {
            synthesize_level(&out[..n], self.h, &self.g, &mut scratch[..n]);
            out[..n].copy_from_slice(&scratch[..n]);
            n *= 2;
        }
    }
}

/// One analysis level: even-shifted periodized correlations with `h` and `g`.
fn analyze_level(x: &[f64], h: &[f64], g: &[f64], out: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        let mut idx = 2 * k;
        for m in 0..h.len() {
            let v = x[idx];
            a += h[m] * v;
            d += g[m] * v;
            idx += 1;
            if idx >= n {
                idx -= n;
                // For filters longer than the signal the index wraps more
                // than once per step only when n < 2, which new() excludes.
            }
        }
        out[k] = a;
        out[half + k] = d;
    }
}

/// One synthesis level: the exact transpose of [`analyze_level`].
fn synthesize_level(c: &[f64], h: &[f64], g: &[f64], out: &mut [f64]) {
    let n = c.len();
    let half = n / 2;
    out.fill(0.0);
    for k in 0..half {
        let a = c[k];
        let d = c[half + k];
        let mut idx = 2 * k;
        for m in 0..h.len() {
            out[idx] += h[m] * a + g[m] * d;
            idx += 1;
            if idx >= n {
                idx -= n;
            }
        }
    }
}

/// Full discrete wavelet transform of a signal whose length is divisible by
/// `2^levels`. Coefficients come back as `[a_J | d_J | ... | d_1]`.
pub fn dwt(signal: &[f64], spec: &WaveletSpec) -> Result<Vec<f64>> {
    let pyr = Pyramid::new(signal.len(), spec)?;
    let mut out = vec![0.0; signal.len()];
    let mut scratch = vec![0.0; signal.len()];
    pyr.analyze_into(signal, &mut out, &mut scratch);
    Ok(out)
}

/// Inverse of [`dwt`].
pub fn idwt(coeffs: &[f64], spec: &WaveletSpec) -> Result<Vec<f64>> {
    let pyr = Pyramid::new(coeffs.len(), spec)?;
    let mut out = vec![0.0; coeffs.len()];
    let mut scratch = vec![0.0; coeffs.len()];
    pyr.synthesize_into(coeffs, &mut out, &mut scratch);
    Ok(out)
}

/// One coefficient group (the scaling block or one detail level), used to tie
/// shrinkage scales to resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleGroup {
    /// "scaling" for the coarse block, "detail_j" for level-j details.
    pub name: String,
    /// Decomposition level the block belongs to (`levels` for the scaling
    /// block and the coarsest details, 1 for the finest details).
    pub level: usize,
    /// Index range within the coefficient vector.
    pub range: Range<usize>,
}

/// Reusable buffers for the basis maps, so the sampler's hot loop does not
/// allocate.
#[derive(Debug, Clone)]
pub struct BasisWorkspace {
    padded: Vec<f64>,
    scratch: Vec<f64>,
}

impl BasisWorkspace {
    pub fn new(padded_len: usize) -> Self {
        BasisWorkspace { padded: vec![0.0; padded_len], scratch: vec![0.0; padded_len] }
    }
}

/// The wavelet design basis for a fixed observation grid.
///
/// With `T` grid points zero-padded to `T' = 2^q`, the orthonormal analysis
/// map `W` on length-`T'` signals induces the `K x T` design matrix
/// `Phi = W[:, 0..T]` with `K = T'`. A coefficient vector `b` evaluates on
/// the grid as `Phi' b` (synthesis then truncation); the adjoint `Phi v`
/// zero-pads `v` and analyzes it.
#[derive(Debug, Clone)]
pub struct BasisTransform {
    spec: WaveletSpec,
    grid_len: usize,
    padded_len: usize,
    pyramid: Pyramid,
    /// `K x T'` synthesis rows: row `k` is the full inverse transform of the
    /// `k`-th coordinate vector. The design matrix is its first `T` columns.
    synth: Array2<f64>,
    groups: Vec<ScaleGroup>,
}

impl BasisTransform {
    pub fn build(grid_len: usize, spec: WaveletSpec) -> Result<Self> {
        if grid_len == 0 {
            return Err(Error::config("grid length must be positive".to_string()));
        }
        let padded_len = next_pow2(grid_len);
        let max_levels = padded_len.trailing_zeros() as usize;
        if spec.levels > max_levels {
            return Err(Error::config(format!(
                "levels {} exceeds log2 of padded length {padded_len}",
                spec.levels
            )));
        }
        let pyramid = Pyramid::new(padded_len, &spec)?;

        let mut synth = Array2::zeros((padded_len, padded_len));
        let mut unit = vec![0.0; padded_len];
        let mut scratch = vec![0.0; padded_len];
        for k in 0..padded_len {
            unit.fill(0.0);
            unit[k] = 1.0;
            let mut row = synth.row_mut(k);
            pyramid.synthesize_into(&unit, row.as_slice_mut().expect("row is contiguous"), &mut scratch);
        }

        let groups = make_groups(padded_len, spec.levels);
        Ok(BasisTransform { spec, grid_len, padded_len, pyramid, synth, groups })
    }

    pub fn spec(&self) -> &WaveletSpec {
        &self.spec
    }

    /// Number of basis coefficients `K` (equals the padded length).
    pub fn k(&self) -> usize {
        self.padded_len
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    /// The `K x T` design matrix `Phi` as a view (no copy).
    pub fn phi(&self) -> ArrayView2<'_, f64> {
        self.synth.slice(s![.., ..self.grid_len])
    }

    /// Full `K x T'` synthesis rows, including padding columns.
    pub fn synthesis_rows(&self) -> ArrayView2<'_, f64> {
        self.synth.view()
    }

    pub fn groups(&self) -> &[ScaleGroup] {
        &self.groups
    }

    pub fn workspace(&self) -> BasisWorkspace {
        BasisWorkspace::new(self.padded_len)
    }

    /// Evaluates a coefficient vector on the observed grid: `out = Phi' b`.
    pub fn coeff_to_grid_into(&self, coeffs: &[f64], out: &mut [f64], ws: &mut BasisWorkspace) {
        debug_assert_eq!(coeffs.len(), self.padded_len);
        debug_assert_eq!(out.len(), self.grid_len);
        self.pyramid.synthesize_into(coeffs, &mut ws.padded, &mut ws.scratch);
        out.copy_from_slice(&ws.padded[..self.grid_len]);
    }

    pub fn coeff_to_grid(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid_len];
        let mut ws = self.workspace();
        self.coeff_to_grid_into(coeffs, &mut out, &mut ws);
        out
    }

    /// Adjoint map `out = Phi v` for a grid vector `v` (zero-pad, analyze).
    pub fn grid_adjoint_into(&self, grid: &[f64], out: &mut [f64], ws: &mut BasisWorkspace) {
        debug_assert_eq!(grid.len(), self.grid_len);
        debug_assert_eq!(out.len(), self.padded_len);
        ws.padded[..self.grid_len].copy_from_slice(grid);
        ws.padded[self.grid_len..].fill(0.0);
        let padded = std::mem::take(&mut ws.padded);
        self.pyramid.analyze_into(&padded, out, &mut ws.scratch);
        ws.padded = padded;
    }

    pub fn grid_adjoint(&self, grid: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.padded_len];
        let mut ws = self.workspace();
        self.grid_adjoint_into(grid, &mut out, &mut ws);
        out
    }
}

fn make_groups(padded_len: usize, levels: usize) -> Vec<ScaleGroup> {
    let mut groups = Vec::with_capacity(levels + 1);
    let coarse = padded_len >> levels;
    groups.push(ScaleGroup { name: "scaling".to_string(), level: levels, range: 0..coarse });
    let mut start = coarse;
    for j in (1..=levels).rev() {
        let size = padded_len >> j;
        groups.push(ScaleGroup {
            name: format!("detail_{j}"),
            level: j,
            range: start..start + size,
        });
        start += size;
    }
    debug_assert_eq!(start, padded_len);
    groups
}
