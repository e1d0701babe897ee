//! Command-line front end for the two-sample DBEL test library: retrospective
//! tests, Monte Carlo calibration, the group-sequential procedure, and the
//! power simulation harness.

mod reports;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dbel::power::format_power_table;
use dbel::{
    calibrate_retrospective, calibrate_sequential, load_sample, load_table, mc_p_value,
    power_study, run_sequential, save_table, CalibrationRun, CalibrationTable, Decision,
    DesignSpec, McConfig, Mode, NullLaw, Params, Sample, SequentialPlan, TableKind,
    DEFAULT_BUDGET,
};
use reports::{PowerRunReport, SequentialRunReport, TestReport, ThresholdSource};

#[derive(Parser)]
#[command(
    name = "dbel",
    about = "Exact multivariate two-sample density-based empirical likelihood ratio tests",
    version
)]
struct Cli {
    /// Cap on worker threads (default: all cores). Results are invariant to
    /// this by construction.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonStatArgs {
    /// Window exponent parameter, strictly inside (0, 0.25)
    #[arg(long, default_value_t = 0.1)]
    delta: f64,

    /// Candidate enumeration mode
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,

    /// Cap on exact enumeration size, in statistic evaluations
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,

    /// Emit the machine-readable JSON report on stdout
    #[arg(long)]
    json: bool,

    /// Also write the JSON report to this path
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s.to_ascii_lowercase().as_str() {
        "exact" => Ok(Mode::Exact),
        "approx" => Ok(Mode::Approx),
        other => Err(format!("unknown mode {other:?} (expected exact or approx)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Retrospective two-sample test on a pair of CSV files
    Test {
        /// CSV of the first sample (rows are observations)
        #[arg(long)]
        x: PathBuf,
        /// CSV of the second sample
        #[arg(long)]
        y: PathBuf,
        /// Significance level
        #[arg(long)]
        alpha: f64,
        /// Calibration table file (searched in $DBEL_CALIB_DIR as well)
        #[arg(long, conflicts_with_all = ["reps", "seed"])]
        calib: Option<PathBuf>,
        /// Inline-calibration replicates
        #[arg(long, requires = "seed")]
        reps: Option<usize>,
        /// Inline-calibration seed
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: CommonStatArgs,
    },
    /// Monte Carlo calibration of critical values
    Calibrate {
        /// First-arm size (retrospective table)
        #[arg(long, conflicts_with_all = ["k_groups", "m_per_group"])]
        n: Option<usize>,
        /// Second-arm size (retrospective table)
        #[arg(long)]
        m: Option<usize>,
        /// Number of groups (sequential table)
        #[arg(long, requires = "m_per_group")]
        k_groups: Option<usize>,
        /// Per-arm size of each group (sequential table)
        #[arg(long)]
        m_per_group: Option<usize>,
        /// Dimension of the observations
        #[arg(long, default_value_t = 2)]
        p: usize,
        /// Comma-separated significance levels, e.g. 0.1,0.05,0.01
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 20_000)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        /// Output table path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Print the table JSON on stdout as well
        #[arg(long)]
        json: bool,
    },
    /// Group-sequential procedure over per-stage CSV groups
    Sequential {
        /// Maximum number of groups
        #[arg(long)]
        k: usize,
        /// Per-arm observations in each group
        #[arg(long)]
        m_per_group: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long, conflicts_with_all = ["reps", "seed"])]
        calib: Option<PathBuf>,
        #[arg(long, requires = "seed")]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory with x_1.csv, x_2.csv, ... stage files
        #[arg(long, conflicts_with = "x_file")]
        x_stages: Option<PathBuf>,
        /// Directory with y_1.csv, y_2.csv, ... stage files
        #[arg(long, conflicts_with = "y_file")]
        y_stages: Option<PathBuf>,
        /// Single CSV for the first arm whose first column is the stage index
        #[arg(long)]
        x_file: Option<PathBuf>,
        /// Single CSV for the second arm whose first column is the stage index
        #[arg(long)]
        y_file: Option<PathBuf>,
        #[command(flatten)]
        common: CommonStatArgs,
    },
    /// Empirical power of the test under a named design
    Power {
        /// Design id: D1..D9, S1..S3, NULL_NORMAL, NULL_CUSTOM
        #[arg(long)]
        design: String,
        #[arg(long, required_unless_present = "sizes")]
        n: Option<usize>,
        #[arg(long, required_unless_present = "sizes")]
        m: Option<usize>,
        /// Several size pairs "NxM,NxM,..." for an aligned comparison table
        /// (each pair is calibrated inline)
        #[arg(long, conflicts_with_all = ["n", "m", "calib"])]
        sizes: Option<String>,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        /// Calibration table file; otherwise calibrate inline
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Inline-calibration replicates
        #[arg(long, default_value_t = 20_000)]
        calib_reps: usize,
        /// Inline-calibration seed (default: seed + 1)
        #[arg(long)]
        calib_seed: Option<u64>,
        /// Dimension for NULL_NORMAL
        #[arg(long, default_value_t = 2)]
        p: usize,
        /// Law file for NULL_CUSTOM (JSON)
        #[arg(long)]
        law: Option<PathBuf>,
        #[command(flatten)]
        common: CommonStatArgs,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool initialized before any parallel work");
    }
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

/// Resolve a table path, falling back to $DBEL_CALIB_DIR.
fn resolve_table_path(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var("DBEL_CALIB_DIR") {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn emit_report<T: serde::Serialize>(report: &T, json: bool, out: &Option<PathBuf>) -> Result<()> {
    let body = serde_json::to_string_pretty(report)?;
    if json {
        println!("{body}");
    }
    if let Some(path) = out {
        std::fs::write(path, format!("{body}\n"))
            .with_context(|| format!("writing report to {}", path.display()))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Test {
            x,
            y,
            alpha,
            calib,
            reps,
            seed,
            common,
        } => cmd_test(x, y, alpha, calib, reps, seed, common),
        Command::Calibrate {
            n,
            m,
            k_groups,
            m_per_group,
            p,
            alphas,
            reps,
            seed,
            out,
            delta,
            mode,
            budget,
            json,
        } => cmd_calibrate(
            n, m, k_groups, m_per_group, p, alphas, reps, seed, out, delta, mode, budget, json,
        ),
        Command::Sequential {
            k,
            m_per_group,
            alpha,
            calib,
            reps,
            seed,
            x_stages,
            y_stages,
            x_file,
            y_file,
            common,
        } => cmd_sequential(
            k, m_per_group, alpha, calib, reps, seed, x_stages, y_stages, x_file, y_file, common,
        ),
        Command::Power {
            design,
            n,
            m,
            sizes,
            alpha,
            reps,
            seed,
            calib,
            calib_reps,
            calib_seed,
            p,
            law,
            common,
        } => {
            let pairs = match (n, m, sizes) {
                (Some(n), Some(m), None) => vec![(n, m)],
                (None, None, Some(spec)) => parse_sizes(&spec)?,
                _ => bail!("supply --n and --m, or --sizes NxM,NxM"),
            };
            cmd_power(
                design, pairs, alpha, reps, seed, calib, calib_reps, calib_seed, p, law, common,
            )
        }
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("alpha must lie strictly inside (0, 1), got {alpha}");
    }
    Ok(())
}

/// Mode resolution: an explicit flag wins but must agree with a table.
fn resolve_mode(flag: Option<Mode>, table: Option<&CalibrationTable>) -> Result<Mode> {
    match (flag, table) {
        (Some(mode), Some(t)) if t.mode != mode => bail!(
            "requested mode {mode} but the calibration table was built in {} mode",
            t.mode
        ),
        (Some(mode), _) => Ok(mode),
        (None, Some(t)) => Ok(t.mode),
        (None, None) => Ok(Mode::Exact),
    }
}

fn cmd_test(
    x_path: PathBuf,
    y_path: PathBuf,
    alpha: f64,
    calib: Option<PathBuf>,
    reps: Option<usize>,
    seed: Option<u64>,
    common: CommonStatArgs,
) -> Result<()> {
    validate_alpha(alpha)?;
    let params = Params::new(common.delta)?;
    let x: Sample = load_sample(&x_path, None)?;
    let y: Sample = load_sample(&y_path, Some(x.dim()))?;
    let (n, m, p) = (x.rows(), y.rows(), x.dim());

    let (threshold, source, mode, null_stats) = match (&calib, reps, seed) {
        (Some(path), None, None) => {
            let path = resolve_table_path(path);
            let table = load_table(&path)?;
            let mode = resolve_mode(common.mode, Some(&table))?;
            table.check_retrospective_match(n, m, p, params.delta())?;
            let threshold = table.threshold_at(alpha)?;
            let source = ThresholdSource {
                kind: "table".into(),
                provenance: table.provenance(),
            };
            (threshold, source, mode, None)
        }
        (None, Some(reps), Some(seed)) => {
            let mode = resolve_mode(common.mode, None)?;
            let cfg = McConfig::new(reps, seed, dedup_alphas(alpha))?;
            let run = calibrate_retrospective(n, m, p, &params, mode, common.budget, &cfg)?;
            let threshold = run.table.threshold_at(alpha)?;
            let source = ThresholdSource {
                kind: "inline".into(),
                provenance: run.table.provenance(),
            };
            let mut sorted = run.stats;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (threshold, source, mode, Some(sorted))
        }
        _ => bail!("supply either --calib TABLE or both --reps and --seed"),
    };

    let result = dbel::retrospective_test(&x, &y, &params, mode, common.budget, 0, threshold)?;
    let p_value = null_stats.as_deref().map(|s| mc_p_value(result.log_ts, s));
    let report = TestReport {
        command: "test".into(),
        n,
        m,
        p,
        delta: params.delta(),
        mode,
        alpha,
        log_ts: result.log_ts,
        argmax_direction: result.argmax_direction.coords().to_vec(),
        candidate_count: result.candidate_count,
        exact: result.exact,
        threshold,
        threshold_source: source,
        decision: result.decision.unwrap(),
        p_value,
    };

    if !common.json {
        println!("n = {n}, m = {m}, p = {p}, delta = {}, mode = {mode}", params.delta());
        println!("log TS        = {:.6}", report.log_ts);
        println!("argmax u      = {:?}", report.argmax_direction);
        println!(
            "candidates    = {} (exact = {})",
            report.candidate_count, report.exact
        );
        println!("threshold     = {:.6}  [{}]", threshold, report.threshold_source.provenance);
        match report.p_value {
            Some(pv) => println!("p-value       = {pv:.6}"),
            None => println!("p-value       = n/a (table run; use --reps/--seed for a Monte Carlo p-value)"),
        }
        println!(
            "decision      = {}",
            match report.decision {
                Decision::Reject => "REJECT the null of equal distributions",
                Decision::Retain => "RETAIN the null of equal distributions",
            }
        );
    }
    emit_report(&report, common.json, &common.out)
}

fn dedup_alphas(alpha: f64) -> Vec<f64> {
    let mut alphas = vec![0.1, 0.05, 0.01, alpha];
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup();
    alphas
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(
    n: Option<usize>,
    m: Option<usize>,
    k_groups: Option<usize>,
    m_per_group: Option<usize>,
    p: usize,
    alphas: Vec<f64>,
    reps: usize,
    seed: u64,
    out: PathBuf,
    delta: f64,
    mode: Option<Mode>,
    budget: u64,
    json: bool,
) -> Result<()> {
    let params = Params::new(delta)?;
    let mode = mode.unwrap_or(Mode::Exact);
    let cfg = McConfig::new(reps, seed, alphas)?;
    let run: CalibrationRun = match (n, m, k_groups, m_per_group) {
        (Some(n), Some(m), None, None) => {
            calibrate_retrospective(n, m, p, &params, mode, budget, &cfg)?
        }
        (None, None, Some(k), Some(mg)) => {
            calibrate_sequential(k, mg, p, &params, mode, budget, &cfg)?
        }
        _ => bail!("supply either --n and --m (retrospective) or --k-groups and --m-per-group (sequential)"),
    };
    save_table(&run.table, &out)?;
    if !json {
        println!("{}", run.table.provenance());
        for e in &run.table.entries {
            println!("  alpha {:>6}: C = {:.3}", e.alpha, e.c);
        }
        println!("table written to {}", out.display());
    } else {
        print!("{}", run.table.to_json());
    }
    Ok(())
}

fn load_stage_dir(dir: &Path, prefix: &str, k: usize, dim: Option<usize>) -> Result<Vec<Sample>> {
    let mut groups = Vec::with_capacity(k);
    for stage in 1..=k {
        let path = dir.join(format!("{prefix}_{stage}.csv"));
        if !path.exists() {
            break;
        }
        groups.push(load_sample(&path, dim)?);
    }
    if groups.is_empty() {
        bail!(
            "no stage files found in {} (expected {prefix}_1.csv, {prefix}_2.csv, ...)",
            dir.display()
        );
    }
    Ok(groups)
}

/// Single CSV per arm: first column is a 1-based stage index, remaining
/// columns are the observation components.
fn load_stage_column_file(path: &Path, dim: Option<usize>) -> Result<Vec<Sample>> {
    let raw: Sample = load_sample(path, dim.map(|d| d + 1))?;
    let mut by_stage: std::collections::BTreeMap<u64, Vec<Vec<f64>>> =
        std::collections::BTreeMap::new();
    for row in raw.iter_rows() {
        let stage = row[0];
        if stage.fract() != 0.0 || stage < 1.0 {
            bail!("stage column must hold integers >= 1, found {stage}");
        }
        by_stage
            .entry(stage as u64)
            .or_default()
            .push(row[1..].to_vec());
    }
    let mut groups = Vec::new();
    for (expected, (stage, rows)) in by_stage.into_iter().enumerate() {
        if stage != expected as u64 + 1 {
            bail!(
                "stage indices must be consecutive from 1, missing stage {}",
                expected + 1
            );
        }
        groups.push(Sample::from_rows(&rows)?);
    }
    Ok(groups)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sequential(
    k: usize,
    m_per_group: usize,
    alpha: f64,
    calib: Option<PathBuf>,
    reps: Option<usize>,
    seed: Option<u64>,
    x_stages: Option<PathBuf>,
    y_stages: Option<PathBuf>,
    x_file: Option<PathBuf>,
    y_file: Option<PathBuf>,
    common: CommonStatArgs,
) -> Result<()> {
    validate_alpha(alpha)?;
    let params = Params::new(common.delta)?;

    let x_groups = match (&x_stages, &x_file) {
        (Some(dir), None) => load_stage_dir(dir, "x", k, None)?,
        (None, Some(file)) => load_stage_column_file(file, None)?,
        _ => bail!("supply exactly one of --x-stages DIR or --x-file FILE"),
    };
    let p = x_groups[0].dim();
    let y_groups = match (&y_stages, &y_file) {
        (Some(dir), None) => load_stage_dir(dir, "y", k, Some(p))?,
        (None, Some(file)) => load_stage_column_file(file, Some(p))?,
        _ => bail!("supply exactly one of --y-stages DIR or --y-file FILE"),
    };

    let (threshold, source, mode) = match (&calib, reps, seed) {
        (Some(path), None, None) => {
            let path = resolve_table_path(path);
            let table = load_table(&path)?;
            let mode = resolve_mode(common.mode, Some(&table))?;
            table.check_sequential_match(k, m_per_group, p, params.delta())?;
            let threshold = table.threshold_at(alpha)?;
            let source = ThresholdSource {
                kind: "table".into(),
                provenance: table.provenance(),
            };
            (threshold, source, mode)
        }
        (None, Some(reps), Some(seed)) => {
            let mode = resolve_mode(common.mode, None)?;
            let cfg = McConfig::new(reps, seed, dedup_alphas(alpha))?;
            let run =
                calibrate_sequential(k, m_per_group, p, &params, mode, common.budget, &cfg)?;
            let threshold = run.table.threshold_at(alpha)?;
            let source = ThresholdSource {
                kind: "inline".into(),
                provenance: run.table.provenance(),
            };
            (threshold, source, mode)
        }
        _ => bail!("supply either --calib TABLE or both --reps and --seed"),
    };

    let plan = SequentialPlan::new(k, m_per_group, threshold, params, mode, common.budget, 0)?;
    let outcome = run_sequential(plan, &x_groups, &y_groups)?;
    let report = SequentialRunReport {
        command: "sequential".into(),
        k_max: k,
        m_per_group,
        p,
        delta: params.delta(),
        mode,
        alpha,
        threshold,
        threshold_source: source,
        stages: outcome.trajectory.clone(),
        stop_stage: outcome.stop_stage,
        decision: outcome.decision,
    };
    if !common.json {
        println!("sequential plan: K = {k}, m per group = {m_per_group}, p = {p}, alpha = {alpha}");
        println!(
            "threshold = {threshold:.6}  [{}]",
            report.threshold_source.provenance
        );
        for s in &report.stages {
            println!(
                "  stage {}: log R = {:.6}{}",
                s.stage,
                s.log_r,
                if s.crossed { "  >= threshold, stop" } else { "" }
            );
        }
        println!(
            "decision: {} at stage {}",
            match report.decision {
                Decision::Reject => "REJECT",
                Decision::Retain => "RETAIN",
            },
            report.stop_stage
        );
    }
    emit_report(&report, common.json, &common.out)
}

fn parse_sizes(spec: &str) -> Result<Vec<(usize, usize)>> {
    spec.split(',')
        .map(|cell| {
            let (n, m) = cell
                .trim()
                .split_once(['x', 'X'])
                .with_context(|| format!("size {cell:?} is not of the form NxM"))?;
            Ok((n.trim().parse()?, m.trim().parse()?))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_power(
    design: String,
    pairs: Vec<(usize, usize)>,
    alpha: f64,
    reps: usize,
    seed: u64,
    calib: Option<PathBuf>,
    calib_reps: usize,
    calib_seed: Option<u64>,
    p: usize,
    law: Option<PathBuf>,
    common: CommonStatArgs,
) -> Result<()> {
    validate_alpha(alpha)?;
    let params = Params::new(common.delta)?;
    let custom = law.map(NullLaw::from_file).transpose()?;
    let spec = DesignSpec::from_id(&design, p, custom)?;

    let mut reports = Vec::new();
    let mut raw = Vec::new();
    for (i, (n, m)) in pairs.iter().copied().enumerate() {
        let table = match &calib {
            Some(path) => {
                let path = resolve_table_path(path);
                let table = load_table(&path)?;
                let _ = resolve_mode(common.mode, Some(&table))?;
                if table.kind != TableKind::Retrospective {
                    bail!("power studies need a retrospective calibration table");
                }
                table
            }
            None => {
                let mode = resolve_mode(common.mode, None)?;
                let cfg = McConfig::new(
                    calib_reps,
                    calib_seed.unwrap_or_else(|| seed.wrapping_add(1 + i as u64)),
                    dedup_alphas(alpha),
                )?;
                calibrate_retrospective(n, m, spec.dim(), &params, mode, common.budget, &cfg)?
                    .table
            }
        };
        if table.delta != params.delta() {
            bail!(
                "table delta {} does not match requested delta {}",
                table.delta,
                params.delta()
            );
        }
        let result = power_study(&spec, n, m, alpha, &table, common.budget, reps, seed)?;
        reports.push(PowerRunReport {
            command: "power".into(),
            design: result.design.clone(),
            n,
            m,
            p: spec.dim(),
            delta: params.delta(),
            mode: table.mode,
            alpha,
            reps,
            seed,
            rejections: result.rejections,
            power: result.power,
            threshold: result.threshold,
            threshold_source: ThresholdSource {
                kind: if calib.is_some() { "table" } else { "inline" }.into(),
                provenance: result.threshold_provenance.clone(),
            },
        });
        raw.push(result);
    }

    if !common.json {
        if reports.len() == 1 {
            let report = &reports[0];
            let result = &raw[0];
            println!(
                "design {} at (n, m) = ({}, {}), alpha = {alpha}, mode = {}",
                report.design, report.n, report.m, report.mode
            );
            println!(
                "threshold = {:.6}  [{}]",
                report.threshold, report.threshold_source.provenance
            );
            println!(
                "power = {:.4} ({}/{} rejections, 95% CI half-width {:.4}{})",
                report.power,
                report.rejections,
                report.reps,
                result.ci_half_width(),
                result
                    .wall_clock_secs
                    .map(|s| format!(", {s:.1}s"))
                    .unwrap_or_default()
            );
            if report.mode == Mode::Approx {
                println!("note: approximate candidate search; the statistic may undershoot the exact maximum");
            }
        } else {
            print!("{}", format_power_table(&raw));
        }
    }
    if reports.len() == 1 {
        emit_report(&reports[0], common.json, &common.out)
    } else {
        emit_report(&reports, common.json, &common.out)
    }
}
