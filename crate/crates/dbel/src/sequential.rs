//! The group-sequential procedure: accumulate equal-sized groups per arm,
//! recompute the statistic on all data so far, stop and reject the first
//! time the running log statistic reaches the threshold (note: stage
//! crossings use >=, the retrospective rule uses strict >). Retain only
//! after all K groups stay below.
//!
//! Calibration quantiles the maximum of the stage statistics over a full
//! K-group null trajectory, which realizes the union stopping event.

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{
    entries_from_stats, CalibrationRun, CalibrationTable, McConfig, TableKind, SCHEMA_VERSION,
};
use crate::elr::{DbelParams, ElrKernel};
use crate::error::{Error, Result};
use crate::rng::{arm_rng, ARM_X, ARM_Y};
use crate::samples::MultivariateSample;
use crate::teststat::{
    max_log_ts_with_kernel, select_candidates, Decision, Mode, MIN_ARM_SIZE,
};

#[derive(Debug, Clone)]
pub struct SequentialPlan {
    pub k_max: usize,
    pub m_per_group: usize,
    pub threshold: f64,
    pub params: DbelParams<f64>,
    pub mode: Mode,
    pub budget: u64,
    pub seed: u64,
}

impl SequentialPlan {
    pub fn new(
        k_max: usize,
        m_per_group: usize,
        threshold: f64,
        params: DbelParams<f64>,
        mode: Mode,
        budget: u64,
        seed: u64,
    ) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::InvalidPlan("need at least one group".into()));
        }
        if m_per_group < MIN_ARM_SIZE {
            return Err(Error::InvalidPlan(format!(
                "group size {m_per_group} cannot support the stage-1 likelihood window; \
                 need at least {MIN_ARM_SIZE} per arm per group"
            )));
        }
        Ok(Self {
            k_max,
            m_per_group,
            threshold,
            params,
            mode,
            budget,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageDecision {
    StopReject,
    Continue,
    StopRetain,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    pub log_r: f64,
    pub crossed: bool,
}

/// Accumulating state of one sequential run; mutated only through `step`.
#[derive(Debug, Clone)]
pub struct SequentialState {
    plan: SequentialPlan,
    stage: usize,
    x_accum: Option<MultivariateSample<f64>>,
    y_accum: Option<MultivariateSample<f64>>,
    history: Vec<StageRecord>,
    finished: Option<Decision>,
}

impl SequentialState {
    pub fn new(plan: SequentialPlan) -> Self {
        Self {
            plan,
            stage: 0,
            x_accum: None,
            y_accum: None,
            history: Vec::new(),
            finished: None,
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn history(&self) -> &[StageRecord] {
        &self.history
    }

    pub fn finished(&self) -> Option<Decision> {
        self.finished
    }

    pub fn accumulated(&self) -> Option<(&MultivariateSample<f64>, &MultivariateSample<f64>)> {
        self.x_accum.as_ref().zip(self.y_accum.as_ref())
    }

    /// Appends one group per arm and evaluates the stopping rule on all
    /// accumulated data.
    pub fn step(
        &mut self,
        x_group: &MultivariateSample<f64>,
        y_group: &MultivariateSample<f64>,
    ) -> Result<StageDecision> {
        if self.finished.is_some() {
            return Err(Error::SequentialStep(
                "procedure already stopped; no further stages accepted".into(),
            ));
        }
        if self.stage >= self.plan.k_max {
            return Err(Error::SequentialStep(format!(
                "all {} stages already consumed",
                self.plan.k_max
            )));
        }
        for (arm, group) in [("x", x_group), ("y", y_group)] {
            if group.rows() != self.plan.m_per_group {
                return Err(Error::SequentialStep(format!(
                    "{arm} group has {} rows, expected {}",
                    group.rows(),
                    self.plan.m_per_group
                )));
            }
        }
        // dimension agreement checked before any mutation so a bad group
        // cannot leave the accumulators half-updated
        let expected_dim = self
            .x_accum
            .as_ref()
            .map(MultivariateSample::dim)
            .unwrap_or(x_group.dim());
        for group in [x_group, y_group] {
            if group.dim() != expected_dim {
                return Err(Error::DimMismatch {
                    expected: expected_dim,
                    found: group.dim(),
                });
            }
        }
        match (&mut self.x_accum, &mut self.y_accum) {
            (Some(xa), Some(ya)) => {
                xa.append(x_group)?;
                ya.append(y_group)?;
            }
            _ => {
                self.x_accum = Some(x_group.clone());
                self.y_accum = Some(y_group.clone());
            }
        }
        self.stage += 1;

        let x = self.x_accum.as_ref().unwrap();
        let y = self.y_accum.as_ref().unwrap();
        let stage_seed = self.plan.seed.wrapping_add(self.stage as u64);
        let result = crate::teststat::compute_ts(
            x,
            y,
            &self.plan.params,
            self.plan.mode,
            self.plan.budget,
            stage_seed,
        )?;
        let crossed = result.log_ts >= self.plan.threshold;
        self.history.push(StageRecord {
            stage: self.stage,
            log_r: result.log_ts,
            crossed,
        });
        let decision = if crossed {
            self.finished = Some(Decision::Reject);
            StageDecision::StopReject
        } else if self.stage < self.plan.k_max {
            StageDecision::Continue
        } else {
            self.finished = Some(Decision::Retain);
            StageDecision::StopRetain
        };
        Ok(decision)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SequentialReport {
    pub k_max: usize,
    pub m_per_group: usize,
    pub threshold: f64,
    pub stop_stage: usize,
    pub decision: Decision,
    pub trajectory: Vec<StageRecord>,
}

/// Drives the procedure over per-stage groups until it stops.
pub fn run_sequential(
    plan: SequentialPlan,
    x_groups: &[MultivariateSample<f64>],
    y_groups: &[MultivariateSample<f64>],
) -> Result<SequentialReport> {
    let k_max = plan.k_max;
    let m_per_group = plan.m_per_group;
    let threshold = plan.threshold;
    let mut state = SequentialState::new(plan);
    let mut pairs = x_groups.iter().zip(y_groups.iter());
    loop {
        let (xg, yg) = pairs.next().ok_or_else(|| {
            Error::SequentialStep(format!(
                "group stream exhausted after stage {} of {k_max} with no decision",
                state.stage()
            ))
        })?;
        match state.step(xg, yg)? {
            StageDecision::Continue => continue,
            StageDecision::StopReject | StageDecision::StopRetain => {
                return Ok(SequentialReport {
                    k_max,
                    m_per_group,
                    threshold,
                    stop_stage: state.stage(),
                    decision: state.finished().unwrap(),
                    trajectory: state.history().to_vec(),
                });
            }
        }
    }
}

/// Null statistics of max_k log R_km: one K-group normal trajectory per
/// replicate, statistic recomputed on each accumulated prefix.
#[allow(clippy::too_many_arguments)]
pub fn simulate_sequential_max_stats(
    k_max: usize,
    m_per_group: usize,
    p: usize,
    params: &DbelParams<f64>,
    mode: Mode,
    budget: u64,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    if m_per_group < MIN_ARM_SIZE {
        return Err(Error::InvalidPlan(format!(
            "group size {m_per_group} cannot support the stage-1 likelihood window"
        )));
    }
    let total = k_max * m_per_group;
    (0..reps as u64)
        .into_par_iter()
        .map_init(
            || -> Vec<ElrKernel<f64>> {
                (1..=k_max)
                    .map(|k| {
                        ElrKernel::new(k * m_per_group, k * m_per_group, params)
                            .expect("valid sizes")
                    })
                    .collect()
            },
            |kernels, rep| -> Result<f64> {
                let mut rx = arm_rng(seed, rep, ARM_X);
                let mut ry = arm_rng(seed, rep, ARM_Y);
                let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                    (0..total * p)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect()
                };
                let x_all = MultivariateSample::from_flat(total, p, draw(&mut rx))?;
                let y_all = MultivariateSample::from_flat(total, p, draw(&mut ry))?;
                let mut max_stat = f64::NEG_INFINITY;
                for k in 1..=k_max {
                    let x = x_all.prefix(k * m_per_group)?;
                    let y = y_all.prefix(k * m_per_group)?;
                    let set = select_candidates(
                        &x,
                        &y,
                        params,
                        mode,
                        budget,
                        seed.wrapping_add(rep),
                    )?;
                    let stat = max_log_ts_with_kernel(&mut kernels[k - 1], &x, &y, &set);
                    if stat > max_stat {
                        max_stat = stat;
                    }
                }
                Ok(max_stat)
            },
        )
        .collect()
}

/// Monte Carlo calibration of the sequential threshold.
pub fn calibrate_sequential(
    k_max: usize,
    m_per_group: usize,
    p: usize,
    params: &DbelParams<f64>,
    mode: Mode,
    budget: u64,
    cfg: &McConfig,
) -> Result<CalibrationRun> {
    let stats = simulate_sequential_max_stats(
        k_max,
        m_per_group,
        p,
        params,
        mode,
        budget,
        cfg.reps,
        cfg.seed,
    )?;
    let entries = entries_from_stats(&stats, &cfg.alpha_grid);
    let table = CalibrationTable {
        schema_version: SCHEMA_VERSION,
        kind: TableKind::Sequential,
        n: None,
        m: None,
        k_groups: Some(k_max),
        m_per_group: Some(m_per_group),
        p,
        delta: params.delta(),
        mode,
        reps: cfg.reps,
        seed: cfg.seed,
        quantile_method: cfg.quantile_method,
        entries,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        stat_checksum: crate::calibration::stat_checksum_of(&stats),
        table_checksum: String::new(),
    }
    .seal();
    table.validate()?;
    Ok(CalibrationRun { table, stats })
}
