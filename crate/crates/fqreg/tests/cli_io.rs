//! End-to-end tests of the `fqreg` binary: output layout, byte-for-byte
//! reproducibility across reruns and thread counts, report/fit agreement,
//! basis export, and exit codes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::tempdir;

fn fqreg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fqreg"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = fqreg().args(args).output().expect("spawn fqreg");
    assert!(
        out.status.success(),
        "fqreg {:?} failed with {:?}\nstderr: {}",
        args,
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_code(args: &[&str]) -> (i32, String) {
    let out = fqreg().args(args).output().expect("spawn fqreg");
    (out.status.code().expect("exit code"), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// All files under `root` (relative path -> bytes), excluding `run.log`,
/// which holds wall-clock timings and is exempt from reproducibility.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("read_dir") {
            let entry = entry.expect("dir entry");
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                if rel != "run.log" {
                    out.insert(rel, std::fs::read(&path).expect("read file"));
                }
            }
        }
    }
    out
}

fn assert_snapshots_equal(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) {
    let keys_a: Vec<_> = a.keys().collect();
    let keys_b: Vec<_> = b.keys().collect();
    assert_eq!(keys_a, keys_b, "file sets differ");
    for (name, bytes) in a {
        assert_eq!(bytes, &b[name], "{name} differs between runs");
    }
}

/// Writes a small deterministic two-group dataset: 12 subjects on a
/// 33-point grid, group effect concentrated mid-grid.
fn write_small_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let n = 12;
    let t = 33;
    let curves_path = dir.join("curves.csv");
    let design_path = dir.join("design.csv");

    let grid: Vec<f64> = (0..t).map(|l| l as f64 / (t - 1) as f64).collect();
    let mut curves = String::new();
    writeln!(curves, "{}", grid.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","))
        .unwrap();
    let mut design = String::new();
    for i in 0..n {
        let x = if i < n / 2 { 1.0 } else { -1.0 };
        writeln!(design, "1,{x}").unwrap();
        let row: Vec<String> = grid
            .iter()
            .enumerate()
            .map(|(l, &tv)| {
                let bump = (-((tv - 0.5) / 0.1).powi(2)).exp();
                let wiggle = (7.0 * tv + i as f64).sin();
                let y = (tv * 3.0).sin() + 1.5 * x * bump + 0.3 * wiggle;
                let _ = l;
                format!("{y}")
            })
            .collect();
        writeln!(curves, "{}", row.join(",")).unwrap();
    }
    std::fs::write(&curves_path, curves).unwrap();
    std::fs::write(&design_path, design).unwrap();
    (curves_path, design_path)
}

const FAST_MCMC: &[&str] = &[
    "--set",
    "mcmc.iterations=400",
    "--set",
    "mcmc.burn_in=100",
    "--set",
    "mcmc.thin=1",
    "--set",
    "mcmc.seed=11",
    "--set",
    "model.wavelet=2",
];

fn fit_args<'a>(curves: &'a str, design: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["fit", "--curves", curves, "--design", design, "--output", out];
    args.extend_from_slice(FAST_MCMC);
    args.extend_from_slice(extra);
    args
}

#[test]
fn fit_writes_complete_output_and_is_reproducible() {
    let dir = tempdir().unwrap();
    let (curves, design) = write_small_dataset(dir.path());
    let curves = curves.to_str().unwrap();
    let design = design.to_str().unwrap();

    let out1 = dir.path().join("out1");
    run_ok(&fit_args(curves, design, out1.to_str().unwrap(), &[]));

    for rel in [
        "grid.csv",
        "manifest.json",
        "run.log",
        "tau_0.5/draws.bin",
        "tau_0.5/summary.csv",
        "tau_0.5/bands.csv",
        "tau_0.5/flags.csv",
        "tau_0.5/geweke.csv",
    ] {
        assert!(out1.join(rel).exists(), "missing {rel}");
    }

    let manifest = std::fs::read_to_string(out1.join("manifest.json")).unwrap();
    assert!(manifest.contains("tau_0.5/draws.bin"), "{manifest}");
    assert!(manifest.contains("\"command\": \"fit\""), "{manifest}");

    // The summary has one row per location plus the comment and header.
    let summary = std::fs::read_to_string(out1.join("tau_0.5/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2 + 2 * 33, "{summary}");
    assert!(summary.starts_with("# run "), "{summary}");

    // Rerun into a fresh directory: byte-identical apart from run.log.
    let out2 = dir.path().join("out2");
    run_ok(&fit_args(curves, design, out2.to_str().unwrap(), &[]));
    assert_snapshots_equal(&snapshot(&out1), &snapshot(&out2));

    // Thread count must not change any byte either.
    let out4 = dir.path().join("out4");
    run_ok(&fit_args(curves, design, out4.to_str().unwrap(), &["--threads", "4"]));
    assert_snapshots_equal(&snapshot(&out1), &snapshot(&out4));

    // A different seed must change the draws.
    let out_seed = dir.path().join("out_seed");
    run_ok(&fit_args(curves, design, out_seed.to_str().unwrap(), &["--set", "mcmc.seed=12"]));
    assert_ne!(
        std::fs::read(out1.join("tau_0.5/draws.bin")).unwrap(),
        std::fs::read(out_seed.join("tau_0.5/draws.bin")).unwrap()
    );
}

#[test]
fn report_agrees_with_fit_and_is_idempotent() {
    let dir = tempdir().unwrap();
    let (curves, design) = write_small_dataset(dir.path());
    let out = dir.path().join("fit_out");
    run_ok(&fit_args(
        curves.to_str().unwrap(),
        design.to_str().unwrap(),
        out.to_str().unwrap(),
        &[],
    ));

    let draws = out.join("tau_0.5/draws.bin");
    let rep1 = dir.path().join("rep1");
    run_ok(&["report", "--draws", draws.to_str().unwrap(), "--output", rep1.to_str().unwrap()]);

    // Same inference settings => identical bodies behind the run-id line.
    let strip = |p: &Path| {
        let text = std::fs::read_to_string(p).unwrap();
        text.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    for name in ["summary.csv", "bands.csv", "flags.csv"] {
        assert_eq!(
            strip(&out.join("tau_0.5").join(name)),
            strip(&rep1.join(name)),
            "{name} differs between fit and report"
        );
    }
    // The grid column must come from grid.csv, not fall back to indices.
    let summary = std::fs::read_to_string(rep1.join("summary.csv")).unwrap();
    let first_row = summary.lines().nth(2).unwrap();
    assert!(first_row.starts_with("1,0,"), "{first_row}");
    let some_row = summary.lines().nth(4).unwrap();
    let grid_cell: f64 = some_row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(grid_cell > 0.0 && grid_cell < 1.0, "grid not attached: {some_row}");

    // Reports are deterministic including the run id.
    let rep2 = dir.path().join("rep2");
    run_ok(&["report", "--draws", draws.to_str().unwrap(), "--output", rep2.to_str().unwrap()]);
    assert_snapshots_equal(&snapshot(&rep1), &snapshot(&rep2));

    // Optional CSV mirror of the draws.
    let rep3 = dir.path().join("rep3");
    run_ok(&[
        "report",
        "--draws",
        draws.to_str().unwrap(),
        "--output",
        rep3.to_str().unwrap(),
        "--draws-csv",
    ]);
    assert!(rep3.join("draws.csv").exists());
}

#[test]
fn basis_export_has_documented_shape() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("basis");
    run_ok(&[
        "basis",
        "--export",
        "--length",
        "33",
        "--wavelet",
        "2",
        "--output",
        out.to_str().unwrap(),
    ]);

    // 33 locations pad to 64, so the matrix is 64 rows x 33 columns.
    let matrix = std::fs::read_to_string(out.join("basis_matrix.csv")).unwrap();
    let rows: Vec<&str> = matrix.lines().skip(1).collect();
    assert_eq!(rows.len(), 64);
    for row in &rows {
        assert_eq!(row.split(',').count(), 33);
    }

    // Groups partition the 64 coefficients: scaling + one block per level.
    let groups = std::fs::read_to_string(out.join("basis_groups.csv")).unwrap();
    let lines: Vec<&str> = groups.lines().skip(2).collect();
    assert_eq!(lines.len(), 4 + 1); // default levels for 64 is 4
    assert!(lines[0].starts_with("scaling,"), "{groups}");
    let total: usize =
        lines.iter().map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 64);

    let (code, err) = run_code(&["basis", "--length", "33"]);
    assert_eq!(code, 2, "basis without --export must be a usage error: {err}");
    assert!(err.contains("--export"), "{err}");
}

#[test]
fn simulate_smoke_writes_metric_tables() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("sim");
    run_ok(&[
        "simulate",
        "--output",
        out.to_str().unwrap(),
        "--set",
        "simulate.replicates=1",
        "--set",
        "simulate.methods=[\"qr\"]",
        "--set",
        "simulate.truth_samples=20000",
        "--set",
        "mcmc.iterations=80",
        "--set",
        "mcmc.burn_in=40",
        "--set",
        "mcmc.thin=1",
        "--set",
        "inference.alphas=[0.05,0.1]",
    ]);

    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[1], "method,tau,alpha,sensitivity,fpr,imse,ivar,n_replicates");
    assert_eq!(lines.len(), 2 + 2, "one row per alpha: {metrics}");
    for row in &lines[2..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[0], "bayes_qr");
        assert_eq!(cells[1], "0.5");
        let imse: f64 = cells[5].parse().unwrap();
        assert!(imse.is_finite() && imse >= 0.0, "{row}");
        assert_eq!(cells[7], "1");
    }
    assert!(out.join("metrics_replicates.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn failure_modes_use_distinct_exit_codes() {
    let dir = tempdir().unwrap();
    let (curves, design) = write_small_dataset(dir.path());
    let curves = curves.to_str().unwrap();
    let design = design.to_str().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    // Configuration problems exit 2.
    let (code, err) =
        run_code(&["fit", "--curves", "/nonexistent/c.csv", "--design", design, "--output", out]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("does not exist"), "{err}");

    let (code, err) = run_code(&fit_args(curves, design, out, &["--set", "model.taus=[2.0]"]));
    assert_eq!(code, 2, "{err}");

    let (code, err) = run_code(&fit_args(curves, design, out, &["--set", "nosuch.section=1"]));
    assert_eq!(code, 2, "{err}");

    // Malformed data exits 3 and the message names the cell.
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0,1,2\n1,2,nope\n3,4,5\n").unwrap();
    let (code, err) =
        run_code(&["fit", "--curves", bad.to_str().unwrap(), "--design", design, "--output", out]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("row 2, column 3"), "{err}");

    // A truncated draws file is a data error too.
    let fit_out = dir.path().join("fit_ok");
    run_ok(&fit_args(curves, design, fit_out.to_str().unwrap(), &[]));
    let draws_path = fit_out.join("tau_0.5/draws.bin");
    let mut bytes = std::fs::read(&draws_path).unwrap();
    bytes.truncate(bytes.len() - 16);
    std::fs::write(&draws_path, bytes).unwrap();
    let (code, err) = run_code(&["report", "--draws", draws_path.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");

    // Unknown subcommands are clap usage errors (exit 2).
    let (code, _) = run_code(&["frobnicate"]);
    assert_eq!(code, 2);
}

/// Format-level run on spectrometry-scale grids: a handful of synthetic
/// 1659-point curves go through `fit` and `report` end to end, checking
/// output shapes rather than estimation quality (the chain is only a few
/// sweeps long).
#[test]
fn long_spectral_grids_flow_through_fit_and_report() {
    let dir = tempdir().unwrap();
    let t = 1659usize;
    let n = 6usize;
    let curves_path = dir.path().join("curves.csv");
    let design_path = dir.path().join("design.csv");

    // Spectrum-like curves: decaying baseline, three shared peaks, one
    // group-shifted peak, deterministic wiggle.
    let grid: Vec<f64> = (0..t).map(|l| 2000.0 + 10.0 * l as f64).collect();
    let mut curves = String::new();
    writeln!(curves, "{}", grid.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","))
        .unwrap();
    let mut design = String::new();
    for i in 0..n {
        let x = if i < n / 2 { 1.0 } else { -1.0 };
        writeln!(design, "1,{x}").unwrap();
        let row: Vec<String> = grid
            .iter()
            .map(|&m| {
                let peak = |mu: f64, w: f64| (-((m - mu) / w).powi(2)).exp();
                let y = 20.0 * (-m / 8000.0).exp()
                    + 4.0 * peak(5000.0, 60.0)
                    + 3.0 * peak(9000.0, 90.0)
                    + 2.0 * peak(14000.0, 120.0)
                    + 1.5 * x * peak(11000.0, 80.0)
                    + 0.2 * (m / 37.0 + i as f64).sin();
                format!("{y}")
            })
            .collect();
        writeln!(curves, "{}", row.join(",")).unwrap();
    }
    std::fs::write(&curves_path, curves).unwrap();
    std::fs::write(&design_path, design).unwrap();

    let out = dir.path().join("fit");
    run_ok(&[
        "fit",
        "--curves",
        curves_path.to_str().unwrap(),
        "--design",
        design_path.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--set",
        "mcmc.iterations=6",
        "--set",
        "mcmc.burn_in=2",
        "--set",
        "mcmc.thin=2",
    ]);

    // The grid echoes back all 1659 locations (single row).
    let grid_csv = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    let grid_row = grid_csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(grid_row.split(',').count(), t);
    assert!(grid_row.starts_with("2000"));

    // Summary: one row per (covariate, location), eight fields each.
    let summary = std::fs::read_to_string(out.join("tau_0.5/summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "covariate,grid_value,mean,sd,lo95,hi95,simbas,flagged");
    assert_eq!(rows.len() - 1, 2 * t, "one summary row per covariate-location");
    assert!(rows.iter().skip(1).all(|r| r.split(',').count() == 8));

    // Bands: one row per (covariate, level, location) at the default levels.
    let bands = std::fs::read_to_string(out.join("tau_0.5/bands.csv")).unwrap();
    let band_rows = bands.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(band_rows, 2 * 4 * t, "two covariates x four levels x grid");

    // Report on the emitted draws reproduces the same summary body.
    let rep = dir.path().join("rep");
    run_ok(&[
        "report",
        "--draws",
        out.join("tau_0.5/draws.bin").to_str().unwrap(),
        "--output",
        rep.to_str().unwrap(),
    ]);
    let body = |s: &str| -> String {
        s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
    };
    let rep_summary = std::fs::read_to_string(rep.join("summary.csv")).unwrap();
    assert_eq!(body(&summary), body(&rep_summary), "report disagrees with fit on long grids");
}
