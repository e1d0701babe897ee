//! Machine-readable report shapes. Every field is deterministic given
//! (flags, input files, seed); wall-clock timing stays out of these structs
//! so reruns are byte-identical.

use serde::Serialize;

use dbel::{Decision, Mode, StageRecord};

#[derive(Debug, Serialize)]
pub struct ThresholdSource {
    /// "table" when loaded from a calibration file, "inline" when freshly
    /// simulated for this run.
    pub kind: String,
    pub provenance: String,
}

#[derive(Debug, Serialize)]
pub struct TestReport {
    pub command: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub delta: f64,
    pub mode: Mode,
    pub alpha: f64,
    pub log_ts: f64,
    pub argmax_direction: Vec<f64>,
    pub candidate_count: usize,
    pub exact: bool,
    pub threshold: f64,
    pub threshold_source: ThresholdSource,
    pub decision: Decision,
    /// Monte Carlo p-value; present only for inline calibration runs, where
    /// the raw null statistics exist.
    pub p_value: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SequentialRunReport {
    pub command: String,
    pub k_max: usize,
    pub m_per_group: usize,
    pub p: usize,
    pub delta: f64,
    pub mode: Mode,
    pub alpha: f64,
    pub threshold: f64,
    pub threshold_source: ThresholdSource,
    pub stages: Vec<StageRecord>,
    pub stop_stage: usize,
    pub decision: Decision,
}

#[derive(Debug, Serialize)]
pub struct PowerRunReport {
    pub command: String,
    pub design: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub delta: f64,
    pub mode: Mode,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    pub rejections: usize,
    pub power: f64,
    pub threshold: f64,
    pub threshold_source: ThresholdSource,
}
