//! Sample data model, CSV ingestion, and the pooled-projection rank
//! machinery every statistic consumes.
//!
//! All rank computation is integer-exact: projections are compared with the
//! native float ordering (no tolerances), and pooled ranks are counts. For
//! the i-th order statistic of one arm the pooled rank is
//! `i + #{other-arm values <= own value}`, with ties across arms counted by
//! `<=` in both directions. Ties are expected by construction at candidate
//! directions and never error.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::directions::Direction;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One arm of the two-sample problem: an `rows x dim` matrix of continuous
/// observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSample<F> {
    rows: usize,
    dim: usize,
    values: Vec<F>,
}

impl<F: Real> MultivariateSample<F> {
    /// Builds a sample from a flat row-major buffer, validating shape and
    /// finiteness.
    pub fn from_flat(rows: usize, dim: usize, values: Vec<F>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::InvalidSample("need at least one observation".into()));
        }
        if dim < 2 {
            return Err(Error::InvalidSample(format!(
                "need at least 2 components per observation, got {dim}"
            )));
        }
        if values.len() != rows * dim {
            return Err(Error::InvalidSample(format!(
                "buffer has {} entries, expected {rows} x {dim} = {}",
                values.len(),
                rows * dim
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!(
                "non-finite entry at row {}, column {}",
                pos / dim + 1,
                pos % dim + 1
            )));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::InvalidSample("need at least one observation".into()));
        }
        let dim = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::InvalidSample(format!(
                    "row {} has {} components, expected {dim}",
                    i + 1,
                    r.len()
                )));
            }
        }
        let values = rows.iter().flatten().copied().collect();
        Self::from_flat(nrows, dim, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[F]> {
        self.values.chunks_exact(self.dim)
    }

    /// First `rows` observations, as used by the sequential procedure.
    pub fn prefix(&self, rows: usize) -> Result<Self> {
        if rows == 0 || rows > self.rows {
            return Err(Error::InvalidSample(format!(
                "prefix of {rows} rows out of {}",
                self.rows
            )));
        }
        Ok(Self {
            rows,
            dim: self.dim,
            values: self.values[..rows * self.dim].to_vec(),
        })
    }

    /// Appends the rows of `group`, checking dimension agreement.
    pub fn append(&mut self, group: &Self) -> Result<()> {
        if group.dim != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: group.dim,
            });
        }
        self.values.extend_from_slice(&group.values);
        self.rows += group.rows;
        Ok(())
    }

    /// Subsample by row indices (used by the resampling power study).
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            if i >= self.rows {
                return Err(Error::InvalidSample(format!(
                    "row index {i} out of range 0..{}",
                    self.rows
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::from_flat(idx.len(), self.dim, values)
    }
}

/// Loads a rectangular numeric CSV: rows are observations, columns are
/// components. A header row is detected by a non-numeric first row and
/// skipped. Comma delimiter, locale-independent decimal point.
pub fn load_sample<F: Real>(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<MultivariateSample<F>> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path_str.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut first_data_row = true;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path_str.clone(),
            source,
        })?;
        let trimmed = line.trim_end_matches(['\r', '\n']).trim();
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<F>, usize> = cells
            .iter()
            .enumerate()
            .map(|(ci, c)| c.parse::<F>().map_err(|_| ci))
            .collect();
        match parsed {
            Err(col) => {
                if first_data_row {
                    // header row
                    first_data_row = false;
                    continue;
                }
                return Err(Error::NonNumericCell {
                    path: path_str,
                    row: line_no + 1,
                    col: col + 1,
                    content: cells[col].to_string(),
                });
            }
            Ok(vals) => {
                first_data_row = false;
                match dim {
                    None => dim = Some(vals.len()),
                    Some(d) if d != vals.len() => {
                        return Err(Error::RaggedRow {
                            path: path_str,
                            row: line_no + 1,
                            expected: d,
                            found: vals.len(),
                        });
                    }
                    _ => {}
                }
                rows.push(vals);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile { path: path_str });
    }
    let dim = dim.unwrap();
    if let Some(expected) = expected_dim {
        if dim != expected {
            return Err(Error::DimMismatch {
                expected,
                found: dim,
            });
        }
    }
    MultivariateSample::from_rows(&rows)
}

/// Linear projection of every observation along `u`, order preserved.
pub fn project<F: Real>(sample: &MultivariateSample<F>, u: &Direction<F>) -> Result<Vec<F>> {
    if u.dim() != sample.dim() {
        return Err(Error::DimMismatch {
            expected: sample.dim(),
            found: u.dim(),
        });
    }
    Ok(sample
        .iter_rows()
        .map(|row| dot(row, u.coords()))
        .collect())
}

fn dot<F: Real>(row: &[F], u: &[F]) -> F {
    row.iter()
        .zip(u)
        .fold(F::zero(), |acc, (&x, &c)| acc + x * c)
}

/// Both arms' projections sorted, with each order statistic's pooled rank.
///
/// `pooled_rank_x[i]` (1-based value) counts pooled observations at or below
/// the (i+1)-th X order statistic: the own-arm contribution is the index
/// itself and the cross-arm contribution is a `<=` indicator count.
#[derive(Debug, Clone)]
pub struct PooledProjection<F> {
    pub x_proj: Vec<F>,
    pub y_proj: Vec<F>,
    pub pooled_rank_x: Vec<usize>,
    pub pooled_rank_y: Vec<usize>,
}

impl<F: Real> PooledProjection<F> {
    pub fn n(&self) -> usize {
        self.x_proj.len()
    }

    pub fn m(&self) -> usize {
        self.y_proj.len()
    }

    pub fn total(&self) -> usize {
        self.x_proj.len() + self.y_proj.len()
    }
}

/// Sorts each arm and computes pooled ranks in a single merge pass.
pub fn pool<F: Real>(x: &[F], y: &[F]) -> PooledProjection<F> {
    let mut scratch = PoolScratch::with_capacity(x.len(), y.len());
    scratch.fill(x, y);
    PooledProjection {
        x_proj: scratch.x_sorted,
        y_proj: scratch.y_sorted,
        pooled_rank_x: scratch.rank_x,
        pooled_rank_y: scratch.rank_y,
    }
}

/// Reusable buffers for the sort-and-merge pass. The Monte Carlo loops pool
/// millions of projections, so the scratch avoids per-call allocation.
#[derive(Debug, Default)]
pub(crate) struct PoolScratch<F> {
    pub x_sorted: Vec<F>,
    pub y_sorted: Vec<F>,
    pub rank_x: Vec<usize>,
    pub rank_y: Vec<usize>,
}

impl<F: Real> PoolScratch<F> {
    pub fn with_capacity(n: usize, m: usize) -> Self {
        Self {
            x_sorted: Vec::with_capacity(n),
            y_sorted: Vec::with_capacity(m),
            rank_x: Vec::with_capacity(n),
            rank_y: Vec::with_capacity(m),
        }
    }

    pub fn fill(&mut self, x: &[F], y: &[F]) {
        assert!(!x.is_empty() && !y.is_empty());
        self.x_sorted.clear();
        self.x_sorted.extend_from_slice(x);
        self.y_sorted.clear();
        self.y_sorted.extend_from_slice(y);
        self.x_sorted
            .sort_unstable_by(|a, b| a.partial_cmp(b).expect("projections must be finite"));
        self.y_sorted
            .sort_unstable_by(|a, b| a.partial_cmp(b).expect("projections must be finite"));

        merge_ranks(&self.x_sorted, &self.y_sorted, &mut self.rank_x);
        merge_ranks(&self.y_sorted, &self.x_sorted, &mut self.rank_y);
    }
}

/// rank[i] = (i+1) + #{other[j] <= own[i]} for sorted inputs.
fn merge_ranks<F: Real>(own: &[F], other: &[F], out: &mut Vec<usize>) {
    out.clear();
    let mut j = 0;
    for (i, &v) in own.iter().enumerate() {
        while j < other.len() && other[j] <= v {
            j += 1;
        }
        out.push(i + 1 + j);
    }
}
