//! Exact multivariate two-sample density-based empirical likelihood ratio
//! tests, retrospective and group sequential.
//!
//! The test compares two samples of p-variate continuous observations
//! through univariate linear projections: for each candidate direction the
//! pooled projections feed a windowed empirical likelihood ratio per arm,
//! and the statistic is the maximum of the log product over a finite,
//! data-driven direction set. Under the null the statistic is
//! distribution-free, so critical values come from a single Monte Carlo
//! calibration under standard normal vectors and apply to every continuous
//! null law.
//!
//! The statistic kernels are generic over the scalar type (`f32`/`f64`,
//! see [`scalar::Real`]); the simulation, calibration, and reporting layers
//! are pinned to `f64`. The aliases below are the `f64` instantiations used
//! everywhere in this crate's own tooling.

pub mod calibration;
pub mod designs;
pub mod directions;
pub mod elr;
pub mod error;
pub mod power;
pub mod rng;
pub mod samples;
pub mod scalar;
pub mod sequential;
pub mod teststat;

pub use calibration::{
    calibrate_retrospective, distribution_freeness_check, ks_two_sample, load_table, mc_p_value,
    save_table, simulate_stats, CalibrationRun, CalibrationTable, McConfig, TableKind,
};
pub use designs::{null_pair, sample_design_pair, ComponentDist, DesignSpec, NullLaw};
pub use directions::{
    candidates_multistart, candidates_p2, candidates_recursive, CandidateSet, Construction,
    Direction,
};
pub use elr::{elr_arm, log_ts_for_direction, window_bounds, Arm, DbelParams, ElrValue};
pub use error::{Error, Result};
pub use power::{format_power_table, power_study, resampling_power, PowerReport};
pub use samples::{load_sample, pool, project, MultivariateSample, PooledProjection};
pub use scalar::Real;
pub use sequential::{
    calibrate_sequential, run_sequential, SequentialPlan, SequentialReport, SequentialState,
    StageDecision, StageRecord,
};
pub use teststat::{
    compute_ts, retrospective_test, retrospective_test_with_table, Decision, Mode, TestResult,
};

/// Default cap on exact enumeration size, in statistic evaluations.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

pub type Sample = MultivariateSample<f64>;
pub type Pooled = PooledProjection<f64>;
pub type Params = DbelParams<f64>;
pub type Candidates = CandidateSet<f64>;
pub type Outcome = TestResult<f64>;
