//! Functional observations on a common grid.

use ndarray::Array2;

use crate::error::{Error, Result};

/// `N` curves observed at the same `T` grid points.
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    grid: Vec<f64>,
    /// `N x T`, row per subject.
    curves: Array2<f64>,
}

impl FunctionalDataset {
    pub fn new(grid: Vec<f64>, curves: Array2<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::data("grid is empty".to_string()));
        }
        if curves.ncols() != grid.len() {
            return Err(Error::data(format!(
                "curves have {} columns but the grid has {} points",
                curves.ncols(),
                grid.len()
            )));
        }
        if curves.nrows() == 0 {
            return Err(Error::data("dataset has no curves".to_string()));
        }
        for (l, w) in grid.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::data(format!(
                    "grid must be strictly increasing, violated between positions {l} and {}",
                    l + 1
                )));
            }
        }
        if let Some(((i, l), v)) =
            curves.indexed_iter().find(|(_, v)| !v.is_finite()).map(|(ix, v)| (ix, *v))
        {
            return Err(Error::data(format!("non-finite value {v} at curve {i}, grid position {l}")));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite grid value".to_string()));
        }
        Ok(FunctionalDataset { grid, curves })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn curves(&self) -> &Array2<f64> {
        &self.curves
    }

    pub fn n_subjects(&self) -> usize {
        self.curves.nrows()
    }

    pub fn n_locations(&self) -> usize {
        self.curves.ncols()
    }
}

/// Validates an `N x p` design matrix against a dataset.
pub fn validate_design(design: &Array2<f64>, n_subjects: usize) -> Result<()> {
    if design.nrows() != n_subjects {
        return Err(Error::data(format!(
            "design has {} rows but the dataset has {n_subjects} curves",
            design.nrows()
        )));
    }
    if design.ncols() == 0 {
        return Err(Error::data("design has no columns".to_string()));
    }
    if let Some(((i, a), v)) =
        design.indexed_iter().find(|(_, v)| !v.is_finite()).map(|(ix, v)| (ix, *v))
    {
        return Err(Error::data(format!("non-finite design value {v} at row {i}, column {a}")));
    }
    Ok(())
}
