//! Power harness: empirical rejection frequency of the retrospective test
//! under a design at a calibrated threshold, and the subsampling-based power
//! protocol for a fixed pair of populations.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{simulate_stats, CalibrationTable};
use crate::designs::DesignSpec;
use crate::elr::{DbelParams, ElrKernel};
use crate::error::{Error, Result};
use crate::rng::{arm_rng, ARM_X, ARM_Y};
use crate::samples::MultivariateSample;
use crate::teststat::{max_log_ts_with_kernel, select_candidates};

#[derive(Debug, Clone, Serialize)]
pub struct PowerReport {
    pub design: String,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub reps: usize,
    pub rejections: usize,
    pub power: f64,
    pub threshold: f64,
    pub threshold_provenance: String,
    /// Not serialized: reports must be byte-identical across reruns.
    #[serde(skip)]
    pub wall_clock_secs: Option<f64>,
}

impl PowerReport {
    /// Half-width of the normal-approximation binomial 95% interval.
    pub fn ci_half_width(&self) -> f64 {
        1.96 * (self.power * (1.0 - self.power) / self.reps as f64).sqrt()
    }
}

/// Aligned plain-text table of power results, one row per report, for
/// side-by-side comparison across designs and size pairs.
pub fn format_power_table(reports: &[PowerReport]) -> String {
    let mut out = String::from(
        "design        (n, m)    alpha     power   rejections      threshold\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{:<10} {:>9} {:>8} {:>9.4} {:>7}/{:<6} {:>14.3}\n",
            r.design,
            format!("({},{})", r.n, r.m),
            r.alpha,
            r.power,
            r.rejections,
            r.reps,
            r.threshold,
        ));
    }
    out
}

/// Empirical rejection frequency of the design at level alpha, using a
/// calibration table that must match (n, m, p, delta) exactly.
#[allow(clippy::too_many_arguments)]
pub fn power_study(
    spec: &DesignSpec,
    n: usize,
    m: usize,
    alpha: f64,
    table: &CalibrationTable,
    budget: u64,
    reps: usize,
    seed: u64,
) -> Result<PowerReport> {
    table.check_retrospective_match(n, m, spec.dim(), table.delta)?;
    if spec.dim() != table.p {
        return Err(Error::CalibrationMismatch(format!(
            "design dimension {} vs table p = {}",
            spec.dim(),
            table.p
        )));
    }
    let threshold = table.threshold_at(alpha)?;
    let params = DbelParams::new(table.delta)?;
    let started = Instant::now();
    let stats = simulate_stats(spec, n, m, &params, table.mode, budget, reps, seed)?;
    let rejections = stats.iter().filter(|s| **s > threshold).count();
    Ok(PowerReport {
        design: spec.id(),
        n,
        m,
        alpha,
        reps,
        rejections,
        power: rejections as f64 / reps as f64,
        threshold,
        threshold_provenance: table.provenance(),
        wall_clock_secs: Some(started.elapsed().as_secs_f64()),
    })
}

/// Subsampling power protocol: per replicate, draw n rows without
/// replacement from the X population and m from the Y population, test at
/// level alpha, and aggregate the rejection frequency.
#[allow(clippy::too_many_arguments)]
pub fn resampling_power(
    x_pop: &MultivariateSample<f64>,
    y_pop: &MultivariateSample<f64>,
    n: usize,
    m: usize,
    alpha: f64,
    table: &CalibrationTable,
    budget: u64,
    reps: usize,
    seed: u64,
) -> Result<PowerReport> {
    if n > x_pop.rows() || m > y_pop.rows() {
        return Err(Error::Resampling(format!(
            "subsample sizes ({n}, {m}) exceed population sizes ({}, {})",
            x_pop.rows(),
            y_pop.rows()
        )));
    }
    if x_pop.dim() != y_pop.dim() {
        return Err(Error::DimMismatch {
            expected: x_pop.dim(),
            found: y_pop.dim(),
        });
    }
    table.check_retrospective_match(n, m, x_pop.dim(), table.delta)?;
    let threshold = table.threshold_at(alpha)?;
    let params = DbelParams::new(table.delta)?;
    let mode = table.mode;
    let started = Instant::now();
    let rejections: Result<Vec<bool>> = (0..reps as u64)
        .into_par_iter()
        .map_init(
            || ElrKernel::new(n, m, &params).expect("sizes checked"),
            |kernel, rep| -> Result<bool> {
                let mut rx = arm_rng(seed, rep, ARM_X);
                let mut ry = arm_rng(seed, rep, ARM_Y);
                let ix = rand::seq::index::sample(&mut rx, x_pop.rows(), n).into_vec();
                let iy = rand::seq::index::sample(&mut ry, y_pop.rows(), m).into_vec();
                let x = x_pop.select_rows(&ix)?;
                let y = y_pop.select_rows(&iy)?;
                let set =
                    select_candidates(&x, &y, &params, mode, budget, seed.wrapping_add(rep))?;
                let stat = max_log_ts_with_kernel(kernel, &x, &y, &set);
                Ok(stat > threshold)
            },
        )
        .collect();
    let rejections = rejections?.into_iter().filter(|r| *r).count();
    Ok(PowerReport {
        design: "RESAMPLING".into(),
        n,
        m,
        alpha,
        reps,
        rejections,
        power: rejections as f64 / reps as f64,
        threshold,
        threshold_provenance: table.provenance(),
        wall_clock_secs: Some(started.elapsed().as_secs_f64()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate_retrospective, McConfig};
    use crate::designs::sample_design_pair;
    use crate::teststat::Mode;

    fn quick_table(n: usize, m: usize, reps: usize, seed: u64) -> CalibrationTable {
        let params = DbelParams::default();
        let cfg = McConfig::new(reps, seed, vec![0.1, 0.05]).unwrap();
        calibrate_retrospective(n, m, 2, &params, Mode::Exact, 1_000_000, &cfg)
            .unwrap()
            .table
    }

    #[test]
    fn mismatched_table_is_refused() {
        let table = quick_table(8, 8, 200, 1);
        let err = power_study(&DesignSpec::D4, 8, 9, 0.05, &table, 1_000_000, 10, 2);
        assert!(matches!(err.unwrap_err(), Error::CalibrationMismatch(_)));
    }

    #[test]
    fn null_design_power_sits_near_alpha() {
        let table = quick_table(8, 8, 2_000, 3);
        let report = power_study(
            &DesignSpec::NullNormal { p: 2 },
            8,
            8,
            0.1,
            &table,
            1_000_000,
            2_000,
            7,
        )
        .unwrap();
        // 3 binomial SEs plus a little calibration noise
        let se = (0.1f64 * 0.9 / 2_000.0).sqrt();
        assert!(
            (report.power - 0.1).abs() < 3.0 * se + 0.02,
            "power {}",
            report.power
        );
    }

    #[test]
    fn power_grows_with_effect_size() {
        let table = quick_table(10, 12, 1_200, 5);
        let mut powers = Vec::new();
        for (design, label) in [
            (DesignSpec::NullNormal { p: 2 }, "0"),
            (DesignSpec::D4, "1"),
        ] {
            let r = power_study(&design, 10, 12, 0.05, &table, 1_000_000, 600, 11).unwrap();
            powers.push((label, r.power));
        }
        assert!(powers[1].1 > powers[0].1 + 0.05, "{powers:?}");
    }

    #[test]
    fn resampling_same_population_behaves_like_a_null() {
        // both populations are literally the same rows, so subsamples share
        // a law; the rejection frequency should track alpha
        let (pop, _) = sample_design_pair(&DesignSpec::NullNormal { p: 2 }, 24, 4, 13, 0)
            .unwrap();
        let table = quick_table(8, 8, 2_000, 17);
        let report = resampling_power(
            &pop, &pop, 8, 8, 0.05, &table, 1_000_000, 800, 19,
        )
        .unwrap();
        let se = (0.05f64 * 0.95 / 800.0).sqrt();
        assert!(
            (report.power - 0.05).abs() < 3.0 * se + 0.02,
            "power {}",
            report.power
        );
    }

    #[test]
    fn resampling_detects_strongly_shifted_populations() {
        let (x_pop, _) = sample_design_pair(&DesignSpec::NullNormal { p: 2 }, 30, 4, 23, 0)
            .unwrap();
        let shifted: Vec<Vec<f64>> = x_pop
            .iter_rows()
            .map(|r| r.iter().map(|v| v + 4.0).collect())
            .collect();
        let y_pop = MultivariateSample::from_rows(&shifted).unwrap();
        let table = quick_table(8, 8, 1_000, 29);
        let report = resampling_power(
            &x_pop, &y_pop, 8, 8, 0.05, &table, 1_000_000, 60, 31,
        )
        .unwrap();
        assert!(report.power > 0.9, "power {}", report.power);
    }

    #[test]
    fn single_replicate_is_bernoulli() {
        let (pop, _) = sample_design_pair(&DesignSpec::NullNormal { p: 2 }, 12, 4, 37, 0)
            .unwrap();
        let table = quick_table(8, 8, 200, 41);
        let report = resampling_power(
            &pop, &pop, 8, 8, 0.05, &table, 1_000_000, 1, 43,
        )
        .unwrap();
        assert!(report.power == 0.0 || report.power == 1.0);

        let err = resampling_power(&pop, &pop, 13, 8, 0.05, &table, 1_000_000, 1, 43);
        assert!(matches!(err.unwrap_err(), Error::Resampling(_)));
    }
}
