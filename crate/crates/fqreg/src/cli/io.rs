//! File formats: curves/design CSVs, the binary posterior-draws file,
//! summary/metric CSVs, and the run manifest.
//!
//! Text outputs begin with a `# run <id>` comment tying the file to its run
//! manifest; readers skip `#` comment lines. Floating-point values are
//! written with Rust's shortest round-trip formatting, so re-parsing yields
//! bit-identical numbers and determinism checks can compare bytes.
//!
//! Binary draws layout (little-endian): magic `FQRD`, u32 format version,
//! u64 draw count G, u64 covariate count p, u64 location count T, f64
//! quantile level, then `G*p*T` coefficient values in (draw, covariate,
//! location) order, then `G*T` scale values in (draw, location) order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read as _, Write as _};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::FunctionalDataset;
use crate::error::{Error, Result};
use crate::gibbs::{DrawsMeta, GewekeChain, PosteriorDraws};
use crate::inference::{BandResult, InferenceResult};
use crate::simgen::MetricRow;

pub const DRAWS_MAGIC: [u8; 4] = *b"FQRD";
pub const DRAWS_FORMAT_VERSION: u32 = 1;

/// Shortest round-trip decimal form of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// `NA` for missing rates, round-trip decimal otherwise.
pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => fmt_f64(x),
        None => "NA".to_string(),
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        // Row lengths are validated by the callers, which name the offending
        // row instead of surfacing a raw parser error.
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Parses one CSV record into floats, naming the file, 1-based row, and
/// 1-based column of any non-numeric or non-finite cell.
fn parse_row(rec: &csv::StringRecord, row_1based: usize, label: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rec.len());
    for (j, cell) in rec.iter().enumerate() {
        let v: f64 = cell.parse().map_err(|_| {
            Error::data(format!(
                "{label} row {row_1based}, column {}: cannot parse {cell:?} as a number",
                j + 1
            ))
        })?;
        if !v.is_finite() {
            return Err(Error::data(format!(
                "{label} row {row_1based}, column {}: non-finite value {cell}",
                j + 1
            )));
        }
        out.push(v);
    }
    Ok(out)
}

/// Reads a curves CSV: first data row is the grid, each later row one
/// subject's curve.
pub fn read_curves(path: &Path) -> Result<FunctionalDataset> {
    let label = file_label(path);
    let mut rdr = open_csv(path)?;
    let mut grid: Option<Vec<f64>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("{label}: {e}")))?;
        let row = parse_row(&rec, idx + 1, &label)?;
        match &grid {
            None => {
                for l in 1..row.len() {
                    if row[l] <= row[l - 1] {
                        return Err(Error::data(format!(
                            "{label}: grid must be strictly increasing, but grid[{}] = {} does not exceed grid[{}] = {}",
                            l + 1,
                            row[l],
                            l,
                            row[l - 1]
                        )));
                    }
                }
                grid = Some(row);
            }
            Some(g) => {
                if row.len() != g.len() {
                    return Err(Error::data(format!(
                        "{label} row {}: expected {} values (grid length), found {}",
                        idx + 1,
                        g.len(),
                        row.len()
                    )));
                }
                rows.push(row);
            }
        }
    }
    let grid = grid.ok_or_else(|| Error::data(format!("{label}: empty file")))?;
    if rows.is_empty() {
        return Err(Error::data(format!("{label}: no subject rows after the grid row")));
    }
    let t = grid.len();
    let n = rows.len();
    let mut curves = Array2::zeros((n, t));
    for (i, row) in rows.into_iter().enumerate() {
        for (l, v) in row.into_iter().enumerate() {
            curves[(i, l)] = v;
        }
    }
    FunctionalDataset::new(grid, curves)
}

/// Reads a design CSV (no header, one row per subject) and checks that its
/// subject count matches the curves file it accompanies.
pub fn read_design(path: &Path, n_subjects: usize, curves_label: &str) -> Result<Array2<f64>> {
    let label = file_label(path);
    let mut rdr = open_csv(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("{label}: {e}")))?;
        let row = parse_row(&rec, idx + 1, &label)?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::data(format!(
                    "{label} row {}: expected {} values like the first row, found {}",
                    idx + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.len() != n_subjects {
        return Err(Error::data(format!(
            "{label} has {} rows but {curves_label} has {n_subjects} subject rows",
            rows.len()
        )));
    }
    let p = rows[0].len();
    let mut design = Array2::zeros((n_subjects, p));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            design[(i, j)] = v;
        }
    }
    Ok(design)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::data(format!("cannot create {}: {e}", path.display()))
    })?))
}

fn join_floats(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter().map(fmt_f64).collect::<Vec<_>>().join(",")
}

/// Writes a curves CSV (grid row first, then one row per subject).
pub fn write_curves(path: &Path, data: &FunctionalDataset, run_id: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    writeln!(w, "{}", join_floats(data.grid().iter().copied()))?;
    for row in data.curves().rows() {
        writeln!(w, "{}", join_floats(row.iter().copied()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a design CSV (no header, one row per subject).
pub fn write_design(path: &Path, design: &Array2<f64>, run_id: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    for row in design.rows() {
        writeln!(w, "{}", join_floats(row.iter().copied()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a single-row grid CSV.
pub fn write_grid(path: &Path, grid: &[f64], run_id: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    writeln!(w, "{}", join_floats(grid.iter().copied()))?;
    w.flush()?;
    Ok(())
}

/// Reads a single-row grid CSV.
pub fn read_grid(path: &Path) -> Result<Vec<f64>> {
    let label = file_label(path);
    let mut rdr = open_csv(path)?;
    let rec = rdr
        .records()
        .next()
        .ok_or_else(|| Error::data(format!("{label}: empty file")))?
        .map_err(|e| Error::data(format!("{label}: {e}")))?;
    parse_row(&rec, 1, &label)
}

/// Persists posterior draws in the binary format described at module level.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(&DRAWS_MAGIC)?;
    w.write_all(&DRAWS_FORMAT_VERSION.to_le_bytes())?;
    let (g, p, t) = draws.b.dim();
    for dim in [g as u64, p as u64, t as u64] {
        w.write_all(&dim.to_le_bytes())?;
    }
    w.write_all(&draws.tau.to_le_bytes())?;
    for &v in draws.b.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in draws.sigma.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary draws file. The grid is not stored in the file; the
/// returned draws carry location indices (0, 1, ...) until a grid is
/// attached, and neutral provenance metadata.
pub fn read_draws(path: &Path) -> Result<PosteriorDraws> {
    let label = file_label(path);
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    let header = 4 + 4 + 3 * 8 + 8;
    if bytes.len() < header {
        return Err(Error::data(format!("{label}: truncated header")));
    }
    if bytes[..4] != DRAWS_MAGIC {
        return Err(Error::data(format!("{label}: not a draws file (bad magic)")));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DRAWS_FORMAT_VERSION {
        return Err(Error::data(format!(
            "{label}: unsupported draws format version {version} (expected {DRAWS_FORMAT_VERSION})"
        )));
    }
    let dim = |i: usize| -> usize {
        u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize
    };
    let (g, p, t) = (dim(0), dim(1), dim(2));
    let tau = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::data(format!("{label}: quantile level {tau} outside (0,1)")));
    }
    let expect = header + 8 * (g * p * t + g * t);
    if bytes.len() != expect {
        return Err(Error::data(format!(
            "{label}: payload is {} bytes, expected {} for G={g}, p={p}, T={t}",
            bytes.len() - header,
            expect - header
        )));
    }
    let mut vals = bytes[header..].chunks_exact(8).map(|c| {
        f64::from_le_bytes(c.try_into().unwrap())
    });
    let b = Array3::from_shape_fn((g, p, t), |_| vals.next().unwrap());
    let sigma = Array2::from_shape_fn((g, t), |_| vals.next().unwrap());
    for (i, v) in b.iter().chain(sigma.iter()).enumerate() {
        if !v.is_finite() {
            return Err(Error::data(format!("{label}: non-finite value at payload index {i}")));
        }
    }
    Ok(PosteriorDraws {
        tau,
        grid: (0..t).map(|l| l as f64).collect(),
        b,
        sigma,
        meta: DrawsMeta {
            seed: 0,
            n_chains: 0,
            n_iter: 0,
            burn_in: 0,
            thin: 0,
            jitter_retries: 0,
            wall_secs: 0.0,
        },
    })
}

/// CSV mirror of a binary draws file: one row per (draw, covariate) pair of
/// coefficient values, then one row per draw of scale values.
pub fn write_draws_csv(path: &Path, draws: &PosteriorDraws, run_id: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    writeln!(w, "quantity,draw,covariate,values...")?;
    let (g, p, _) = draws.b.dim();
    for gi in 0..g {
        for a in 0..p {
            let row = draws.b.index_axis(ndarray::Axis(0), gi);
            writeln!(w, "b,{},{},{}", gi + 1, a + 1, join_floats(row.row(a).iter().copied()))?;
        }
    }
    for gi in 0..g {
        writeln!(w, "sigma,{},,{}", gi + 1, join_floats(draws.sigma.row(gi).iter().copied()))?;
    }
    w.flush()?;
    Ok(())
}

/// Per-location inference summary at the configured band level.
pub fn write_summary(path: &Path, inf: &InferenceResult, run_id: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    writeln!(w, "covariate,grid_value,mean,sd,lo95,hi95,simbas,flagged")?;
    for (a, cov) in inf.covariates.iter().enumerate() {
        for l in 0..inf.grid.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                a + 1,
                fmt_f64(inf.grid[l]),
                fmt_f64(cov.mean[l]),
                fmt_f64(cov.sd[l]),
                fmt_f64(cov.band.lo[l]),
                fmt_f64(cov.band.hi[l]),
                fmt_f64(cov.scores[l]),
                cov.flagged[l]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-level simultaneous bands for plotting: one row per (covariate,
/// level, location).
pub fn write_bands(
    path: &Path,
    grid: &[f64],
    bands: &[(usize, f64, BandResult)],
    run_id: &str,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    writeln!(w, "covariate,grid_value,alpha,lo,hi")?;
    for (covariate, alpha, band) in bands {
        for l in 0..grid.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                covariate + 1,
                fmt_f64(grid[l]),
                fmt_f64(*alpha),
                fmt_f64(band.lo[l]),
                fmt_f64(band.hi[l])
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Flagged regions: 1-based inclusive location ranges with grid endpoints.
pub fn write_flags(path: &Path, inf: &InferenceResult, run_id: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    writeln!(w, "covariate,start_index,end_index,start_t,end_t,n_locations")?;
    for (a, cov) in inf.covariates.iter().enumerate() {
        for r in &cov.regions {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                a + 1,
                r.start + 1,
                r.end,
                fmt_f64(inf.grid[r.start]),
                fmt_f64(inf.grid[r.end - 1]),
                r.len()
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-chain Geweke z-scores for the coefficient functions and scales.
pub fn write_geweke(path: &Path, geweke: &[GewekeChain], grid: &[f64], run_id: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    writeln!(w, "chain,quantity,covariate,grid_value,z")?;
    for chain in geweke {
        let (p, t) = chain.b_z.dim();
        for a in 0..p {
            for l in 0..t {
                writeln!(
                    w,
                    "{},b,{},{},{}",
                    chain.chain_id,
                    a + 1,
                    fmt_f64(grid[l]),
                    fmt_f64(chain.b_z[(a, l)])
                )?;
            }
        }
        for l in 0..chain.sigma_z.len() {
            writeln!(
                w,
                "{},sigma,,{},{}",
                chain.chain_id,
                fmt_f64(grid[l]),
                fmt_f64(chain.sigma_z[l])
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Replicate-averaged metric table: one row per (method, level, alpha).
pub fn write_metrics(path: &Path, rows: &[MetricRow], run_id: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# run {run_id}")?;
    writeln!(w, "method,tau,alpha,sensitivity,fpr,imse,ivar,n_replicates")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.method,
            fmt_f64(r.tau),
            fmt_f64(r.alpha),
            fmt_opt(r.sensitivity),
            fmt_opt(r.fpr),
            fmt_f64(r.imse),
            fmt_f64(r.ivar),
            r.n_replicates
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Deterministic provenance record for one command invocation. Contains no
/// timing; wall-clock measurements go to `run.log`, which is excluded from
/// byte-for-byte reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    /// Hash of the command name plus the canonical effective configuration;
    /// every text output carries it in its `# run` header line.
    pub run_id: String,
    pub package: String,
    pub version: String,
    pub draws_format_version: u32,
    pub seed: u64,
    /// Relative output path -> SHA-256 of the file's bytes.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, run_id: &str, seed: u64) -> Self {
        Manifest {
            command: command.to_string(),
            run_id: run_id.to_string(),
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            draws_format_version: DRAWS_FORMAT_VERSION,
            seed,
            files: BTreeMap::new(),
        }
    }

    /// Hashes `path` (relative to `root`) into the file table.
    pub fn add_file(&mut self, root: &Path, rel: &str) -> Result<()> {
        let hash = file_sha256(&root.join(rel))?;
        self.files.insert(rel.to_string(), hash);
        Ok(())
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let mut w = create(&root.join("manifest.json"))?;
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("manifest: {e}")))?;
        writeln!(w, "{body}")?;
        w.flush()?;
        Ok(())
    }
}
