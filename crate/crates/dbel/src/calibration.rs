//! Monte Carlo null calibration.
//!
//! The statistic is distribution-free in exact mode: its null law does not
//! depend on the (continuous) data law, so one simulation under independent
//! standard normal vectors calibrates every null. Calibration draws the two
//! arms for each replicate from counter-addressed streams, evaluates the
//! statistic, and extracts quantiles of the simulated null distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::designs::{sample_design_pair, DesignSpec};
use crate::directions::projected_recursive_count;
use crate::elr::{DbelParams, ElrKernel};
use crate::error::{Error, Result};
use crate::samples::MultivariateSample;
use crate::teststat::{max_log_ts_with_kernel, select_candidates, Mode};

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_REPS: usize = 100;
pub const DEFAULT_REPS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileMethod {
    /// Linear interpolation between order statistics at h = (N-1)q.
    Type7,
}

/// Type-7 quantile of a sorted slice.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub reps: usize,
    pub seed: u64,
    pub alpha_grid: Vec<f64>,
    pub quantile_method: QuantileMethod,
}

impl McConfig {
    pub fn new(reps: usize, seed: u64, alpha_grid: Vec<f64>) -> Result<Self> {
        if reps < MIN_REPS {
            return Err(Error::InvalidConfig(format!(
                "need at least {MIN_REPS} replicates, got {reps}"
            )));
        }
        if alpha_grid.is_empty() {
            return Err(Error::InvalidConfig("alpha grid is empty".into()));
        }
        for &a in &alpha_grid {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "alpha must lie strictly inside (0, 1), got {a}"
                )));
            }
        }
        Ok(Self {
            reps,
            seed,
            alpha_grid,
            quantile_method: QuantileMethod::Type7,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Retrospective,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub alpha: f64,
    pub c: f64,
}

/// Monte Carlo critical values keyed by (n, m, p, delta) or
/// (k_groups, m_per_group, p, delta), with the provenance needed to
/// reproduce the run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub schema_version: u32,
    pub kind: TableKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_groups: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_per_group: Option<usize>,
    pub p: usize,
    pub delta: f64,
    pub mode: Mode,
    pub reps: usize,
    pub seed: u64,
    pub quantile_method: QuantileMethod,
    /// Sorted by alpha ascending; thresholds nonincreasing in alpha.
    pub entries: Vec<TableEntry>,
    pub software_version: String,
    /// SHA-256 over the raw replicate statistics in replicate order.
    pub stat_checksum: String,
    /// SHA-256 over the canonical serialization of everything above.
    pub table_checksum: String,
}

impl CalibrationTable {
    pub fn threshold_at(&self, alpha: f64) -> Result<f64> {
        self.entries
            .iter()
            .find(|e| e.alpha == alpha)
            .map(|e| e.c)
            .ok_or_else(|| Error::AlphaNotCalibrated {
                alpha,
                available: self
                    .entries
                    .iter()
                    .map(|e| e.alpha.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    pub fn check_retrospective_match(
        &self,
        n: usize,
        m: usize,
        p: usize,
        delta: f64,
    ) -> Result<()> {
        if self.kind != TableKind::Retrospective {
            return Err(Error::CalibrationMismatch(
                "table is for the sequential procedure".into(),
            ));
        }
        let key_ok = self.n == Some(n) && self.m == Some(m) && self.p == p && self.delta == delta;
        if !key_ok {
            return Err(Error::CalibrationMismatch(format!(
                "table key (n={:?}, m={:?}, p={}, delta={}) vs run (n={n}, m={m}, p={p}, delta={delta})",
                self.n, self.m, self.p, self.delta
            )));
        }
        Ok(())
    }

    pub fn check_sequential_match(
        &self,
        k_groups: usize,
        m_per_group: usize,
        p: usize,
        delta: f64,
    ) -> Result<()> {
        if self.kind != TableKind::Sequential {
            return Err(Error::CalibrationMismatch(
                "table is for the retrospective test".into(),
            ));
        }
        let key_ok = self.k_groups == Some(k_groups)
            && self.m_per_group == Some(m_per_group)
            && self.p == p
            && self.delta == delta;
        if !key_ok {
            return Err(Error::CalibrationMismatch(format!(
                "table key (K={:?}, m={:?}, p={}, delta={}) vs run (K={k_groups}, m={m_per_group}, p={p}, delta={delta})",
                self.k_groups, self.m_per_group, self.p, self.delta
            )));
        }
        Ok(())
    }

    pub fn provenance(&self) -> String {
        match self.kind {
            TableKind::Retrospective => format!(
                "retrospective(n={}, m={}, p={}, delta={}, mode={}, reps={}, seed={})",
                self.n.unwrap_or(0),
                self.m.unwrap_or(0),
                self.p,
                self.delta,
                self.mode,
                self.reps,
                self.seed
            ),
            TableKind::Sequential => format!(
                "sequential(K={}, m={}, p={}, delta={}, mode={}, reps={}, seed={})",
                self.k_groups.unwrap_or(0),
                self.m_per_group.unwrap_or(0),
                self.p,
                self.delta,
                self.mode,
                self.reps,
                self.seed
            ),
        }
    }

    fn compute_table_checksum(&self) -> String {
        let mut body = self.clone();
        body.table_checksum = String::new();
        let bytes = serde_json::to_vec(&body).expect("table serializes");
        hex_digest(&bytes)
    }

    pub(crate) fn seal(mut self) -> Self {
        self.table_checksum = self.compute_table_checksum();
        self
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.entries.windows(2) {
            if !(w[0].alpha < w[1].alpha) {
                return Err(Error::InvalidConfig(
                    "table entries must be sorted by alpha ascending".into(),
                ));
            }
            if w[0].c < w[1].c {
                return Err(Error::InvalidConfig(
                    "thresholds must be nonincreasing in alpha".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn stat_checksum_of(stats: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for s in stats {
        hasher.update(s.to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A finished calibration: the persisted table plus the raw null statistics
/// (replicate order), which Monte Carlo p-values need.
#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub table: CalibrationTable,
    pub stats: Vec<f64>,
}

/// Simulates the statistic for `reps` replicates of a design at sizes
/// (n, m); replicate k draws from streams (seed, k, arm). With a null
/// design this is the null distribution the quantiles come from.
#[allow(clippy::too_many_arguments)]
pub fn simulate_stats(
    spec: &DesignSpec,
    n: usize,
    m: usize,
    params: &DbelParams<f64>,
    mode: Mode,
    budget: u64,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let p = spec.dim();
    if p >= 3 && mode == Mode::Exact {
        let required = projected_recursive_count(n, m, p);
        if required > budget as u128 {
            return Err(Error::BudgetExceeded {
                required,
                allowed: budget,
            });
        }
    }
    (0..reps as u64)
        .into_par_iter()
        .map_init(
            || ElrKernel::new(n, m, params).expect("valid sizes"),
            |kernel, rep| {
                let (x, y) = sample_design_pair(spec, n, m, seed, rep)?;
                replicate_max(kernel, &x, &y, params, mode, budget, seed, rep)
            },
        )
        .collect()
}

/// Max statistic for one replicate, sequential over candidates (parallelism
/// lives at the replicate level).
pub(crate) fn replicate_max(
    kernel: &mut ElrKernel<f64>,
    x: &MultivariateSample<f64>,
    y: &MultivariateSample<f64>,
    params: &DbelParams<f64>,
    mode: Mode,
    budget: u64,
    seed: u64,
    rep: u64,
) -> Result<f64> {
    // approximate-mode searches take a per-replicate seed; ChaCha keys are
    // independent across values, so seed+rep gives disjoint search streams
    let set = select_candidates(x, y, params, mode, budget, seed.wrapping_add(rep))?;
    Ok(max_log_ts_with_kernel(kernel, x, y, &set))
}

/// Monte Carlo calibration of the retrospective test at (n, m, p).
pub fn calibrate_retrospective(
    n: usize,
    m: usize,
    p: usize,
    params: &DbelParams<f64>,
    mode: Mode,
    budget: u64,
    cfg: &McConfig,
) -> Result<CalibrationRun> {
    if n < crate::teststat::MIN_ARM_SIZE || m < crate::teststat::MIN_ARM_SIZE {
        return Err(Error::SampleTooSmall {
            min: crate::teststat::MIN_ARM_SIZE,
            got: n.min(m),
        });
    }
    let spec = DesignSpec::NullNormal { p };
    let stats = simulate_stats(&spec, n, m, params, mode, budget, cfg.reps, cfg.seed)?;
    let entries = entries_from_stats(&stats, &cfg.alpha_grid);
    let table = CalibrationTable {
        schema_version: SCHEMA_VERSION,
        kind: TableKind::Retrospective,
        n: Some(n),
        m: Some(m),
        k_groups: None,
        m_per_group: None,
        p,
        delta: params.delta(),
        mode,
        reps: cfg.reps,
        seed: cfg.seed,
        quantile_method: cfg.quantile_method,
        entries,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        stat_checksum: stat_checksum_of(&stats),
        table_checksum: String::new(),
    }
    .seal();
    table.validate()?;
    Ok(CalibrationRun { table, stats })
}

pub(crate) fn entries_from_stats(stats: &[f64], alpha_grid: &[f64]) -> Vec<TableEntry> {
    let mut sorted = stats.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut alphas = alpha_grid.to_vec();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup();
    alphas
        .into_iter()
        .map(|alpha| TableEntry {
            alpha,
            c: quantile_type7(&sorted, 1.0 - alpha),
        })
        .collect()
}

/// Monte Carlo p-value: (1 + #{null >= observed}) / (1 + reps).
pub fn mc_p_value(observed: f64, sorted_null_stats: &[f64]) -> f64 {
    assert!(!sorted_null_stats.is_empty());
    let below = sorted_null_stats.partition_point(|s| *s < observed);
    let geq = sorted_null_stats.len() - below;
    (1 + geq) as f64 / (1 + sorted_null_stats.len()) as f64
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len(), b.len());
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < na && j < nb {
        let t = a[i].min(b[j]);
        while i < na && a[i] <= t {
            i += 1;
        }
        while j < nb && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, ks_tail(lambda))
}

fn ks_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct FreenessReport {
    pub ks_statistic: f64,
    pub p_value: f64,
    pub reps_per_law: usize,
}

/// Simulates the statistic under two generators (normally both null laws)
/// and compares the two statistic samples with a KS test. Under exactness
/// any two continuous null laws give identical statistic distributions, so
/// a small p-value flags a violation, or a deliberately misused non-null
/// generator.
#[allow(clippy::too_many_arguments)]
pub fn distribution_freeness_check(
    n: usize,
    m: usize,
    params: &DbelParams<f64>,
    mode: Mode,
    budget: u64,
    gen_a: &DesignSpec,
    seed_a: u64,
    gen_b: &DesignSpec,
    seed_b: u64,
    reps: usize,
) -> Result<FreenessReport> {
    if gen_a.dim() != gen_b.dim() {
        return Err(Error::DimMismatch {
            expected: gen_a.dim(),
            found: gen_b.dim(),
        });
    }
    let stats_a = simulate_stats(gen_a, n, m, params, mode, budget, reps, seed_a)?;
    let stats_b = simulate_stats(gen_b, n, m, params, mode, budget, reps, seed_b)?;
    let (d, p) = ks_two_sample(&stats_a, &stats_b);
    Ok(FreenessReport {
        ks_statistic: d,
        p_value: p,
        reps_per_law: reps,
    })
}

pub fn save_table(table: &CalibrationTable, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, table.to_json()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_table(path: impl AsRef<std::path::Path>) -> Result<CalibrationTable> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path_str.clone(),
        source,
    })?;
    let table: CalibrationTable =
        serde_json::from_slice(&bytes).map_err(|e| Error::CorruptTable {
            path: path_str.clone(),
            reason: e.to_string(),
        })?;
    if table.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            path: path_str,
            found: table.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if table.compute_table_checksum() != table.table_checksum {
        return Err(Error::CorruptTable {
            path: path_str,
            reason: "checksum mismatch".into(),
        });
    }
    table.validate()?;
    Ok(table)
}
