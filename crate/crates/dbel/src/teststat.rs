//! The headline statistic: log TS as the maximum of the per-direction
//! statistic over the candidate set, plus the retrospective accept/reject
//! decision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationTable;
use crate::directions::{
    candidates_multistart, candidates_p2, candidates_recursive, CandidateSet, Direction,
};
use crate::elr::{DbelParams, ElrKernel};
use crate::error::{Error, Result};
use crate::samples::MultivariateSample;
use crate::scalar::Real;

/// Minimum observations per arm so both likelihood windows exist.
pub const MIN_ARM_SIZE: usize = 4;

/// Default number of search starts in approximate mode.
pub const DEFAULT_MULTISTART_STARTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Approx,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Exact => write!(f, "exact"),
            Mode::Approx => write!(f, "approx"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Retain,
}

#[derive(Debug, Clone)]
pub struct TestResult<F> {
    pub log_ts: F,
    pub argmax_direction: Direction<F>,
    pub candidate_count: usize,
    pub exact: bool,
    /// Present when a threshold was supplied.
    pub decision: Option<Decision>,
    pub threshold: Option<F>,
    /// Present when a calibration reference with raw null statistics was
    /// supplied.
    pub p_value: Option<f64>,
}

fn check_sizes<F: Real>(x: &MultivariateSample<F>, y: &MultivariateSample<F>) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    for rows in [x.rows(), y.rows()] {
        if rows < MIN_ARM_SIZE {
            return Err(Error::SampleTooSmall {
                min: MIN_ARM_SIZE,
                got: rows,
            });
        }
    }
    Ok(())
}

/// Candidate set for the requested mode: the exact pairwise construction at
/// p = 2, the recursive enumeration (subject to `budget`) for larger p in
/// exact mode, and the seeded multi-start search in approximate mode.
pub fn select_candidates<F: Real>(
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
    params: &DbelParams<F>,
    mode: Mode,
    budget: u64,
    seed: u64,
) -> Result<CandidateSet<F>> {
    if x.dim() == 2 {
        return candidates_p2(x, y);
    }
    match mode {
        Mode::Exact => candidates_recursive(x, y, budget),
        Mode::Approx => candidates_multistart(x, y, params, DEFAULT_MULTISTART_STARTS, seed),
    }
}

/// log TS = max over candidate directions, with the argmax reported.
///
/// Ties break to the lexicographically smallest direction; the candidate
/// set is canonically ordered, so results do not depend on evaluation order
/// or thread count.
pub fn compute_ts<F: Real>(
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
    params: &DbelParams<F>,
    mode: Mode,
    budget: u64,
    seed: u64,
) -> Result<TestResult<F>> {
    check_sizes(x, y)?;
    let set = select_candidates(x, y, params, mode, budget, seed)?;
    let values: Vec<F> = (0..set.len())
        .into_par_iter()
        .map_init(
            || ElrKernel::new(x.rows(), y.rows(), params).expect("sizes already checked"),
            |kernel, i| {
                kernel.eval_with_ties(x, y, set.directions[i].coords(), set.ties_of(i))
            },
        )
        .collect();
    let (best_idx, best) = argmax(&values);
    Ok(TestResult {
        log_ts: best,
        argmax_direction: set.directions[best_idx].clone(),
        candidate_count: set.len(),
        exact: set.exact,
        decision: None,
        threshold: None,
        p_value: None,
    })
}

/// Sequential evaluation over an existing kernel; used inside Monte Carlo
/// replicates where the parallelism is across replicates.
pub(crate) fn max_log_ts_with_kernel<F: Real>(
    kernel: &mut ElrKernel<F>,
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
    set: &CandidateSet<F>,
) -> F {
    let mut best = F::neg_infinity();
    for i in 0..set.len() {
        let v = kernel.eval_with_ties(x, y, set.directions[i].coords(), set.ties_of(i));
        if v > best {
            best = v;
        }
    }
    best
}

fn argmax<F: Real>(values: &[F]) -> (usize, F) {
    let mut best = F::neg_infinity();
    let mut best_idx = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    (best_idx, best)
}

/// Retrospective test against a plain threshold: reject iff log TS is
/// strictly greater.
pub fn retrospective_test<F: Real>(
    x: &MultivariateSample<F>,
    y: &MultivariateSample<F>,
    params: &DbelParams<F>,
    mode: Mode,
    budget: u64,
    seed: u64,
    threshold: F,
) -> Result<TestResult<F>> {
    let mut result = compute_ts(x, y, params, mode, budget, seed)?;
    result.threshold = Some(threshold);
    result.decision = Some(if result.log_ts > threshold {
        Decision::Reject
    } else {
        Decision::Retain
    });
    Ok(result)
}

/// Retrospective test with the threshold taken from a calibration table.
/// The table key must match (n, m, p, delta, mode) exactly; anything else is
/// refused rather than extrapolated.
pub fn retrospective_test_with_table(
    x: &MultivariateSample<f64>,
    y: &MultivariateSample<f64>,
    params: &DbelParams<f64>,
    table: &CalibrationTable,
    alpha: f64,
    budget: u64,
    seed: u64,
) -> Result<TestResult<f64>> {
    table.check_retrospective_match(x.rows(), y.rows(), x.dim(), params.delta())?;
    let threshold = table.threshold_at(alpha)?;
    retrospective_test(x, y, params, table.mode, budget, seed, threshold)
}
