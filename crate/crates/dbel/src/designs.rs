//! Random generators for the power-study designs and the null laws, under a
//! deterministic stream contract: draw `(seed, replicate, arm, index)` is
//! reproducible regardless of scheduling.
//!
//! The bivariate designs cover location, scale, shape, and
//! dependence-structure alternatives, including two constructions whose
//! univariate margins match the other arm exactly while the joint laws
//! differ (a random-sign coupling and a uniform normal mixture). The
//! trivariate designs are location/scale shifts of a standard normal.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::elr::Arm;
use crate::error::{Error, Result};
use crate::rng::{arm_rng, ARM_X, ARM_Y};
use crate::samples::MultivariateSample;

/// One component of an iid-components custom law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentDist {
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Exp { rate: f64 },
    Uniform { low: f64, high: f64 },
}

impl ComponentDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ComponentDist::Normal { mean, sd } => {
                mean + sd * rng.sample::<f64, _>(StandardNormal)
            }
            ComponentDist::LogNormal { mu, sigma } => {
                (mu + sigma * rng.sample::<f64, _>(StandardNormal)).exp()
            }
            ComponentDist::Exp { rate } => rng.sample::<f64, _>(Exp1) / rate,
            ComponentDist::Uniform { low, high } => rng.gen_range(low..high),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ComponentDist::Normal { sd, .. } => sd > 0.0,
            ComponentDist::LogNormal { sigma, .. } => sigma > 0.0,
            ComponentDist::Exp { rate } => rate > 0.0,
            ComponentDist::Uniform { low, high } => low < high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Design("invalid component parameters".into()))
        }
    }
}

/// A continuous p-variate law for null simulation: standard normal,
/// independent components, or a full-covariance normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullLaw {
    StandardNormal { p: usize },
    Components(Vec<ComponentDist>),
    MvNormal { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

impl NullLaw {
    pub fn dim(&self) -> usize {
        match self {
            NullLaw::StandardNormal { p } => *p,
            NullLaw::Components(c) => c.len(),
            NullLaw::MvNormal { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NullLaw::StandardNormal { p } => {
                if *p < 2 {
                    return Err(Error::Design("law dimension must be at least 2".into()));
                }
            }
            NullLaw::Components(comps) => {
                if comps.len() < 2 {
                    return Err(Error::Design("law dimension must be at least 2".into()));
                }
                for c in comps {
                    c.validate()?;
                }
            }
            NullLaw::MvNormal { mean, cov } => {
                cholesky(cov, mean.len())?;
            }
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let law: NullLaw = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Design(format!("cannot parse law file: {e}")))?;
        law.validate()?;
        Ok(law)
    }

    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Result<MultivariateSample<f64>> {
        let p = self.dim();
        let mut values = Vec::with_capacity(count * p);
        match self {
            NullLaw::StandardNormal { .. } => {
                for _ in 0..count * p {
                    values.push(rng.sample::<f64, _>(StandardNormal));
                }
            }
            NullLaw::Components(comps) => {
                for _ in 0..count {
                    for c in comps {
                        values.push(c.sample(rng));
                    }
                }
            }
            NullLaw::MvNormal { mean, cov } => {
                let chol = cholesky(cov, mean.len())?;
                for _ in 0..count {
                    values.extend(mvnormal_row(mean, &chol, rng));
                }
            }
        }
        MultivariateSample::from_flat(count, p, values)
    }
}

/// Lower-triangular Cholesky factor; fails on asymmetric or non-positive
/// definite input.
pub(crate) fn cholesky(cov: &[Vec<f64>], p: usize) -> Result<Vec<Vec<f64>>> {
    if cov.len() != p || cov.iter().any(|r| r.len() != p) {
        return Err(Error::Design(format!("covariance must be {p}x{p}")));
    }
    for i in 0..p {
        for j in 0..i {
            if (cov[i][j] - cov[j][i]).abs() > 1e-12 {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = cov[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

fn mvnormal_row<R: Rng>(mean: &[f64], chol: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    let p = mean.len();
    let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    (0..p)
        .map(|i| mean[i] + (0..=i).map(|k| chol[i][k] * z[k]).sum::<f64>())
        .collect()
}

/// Multivariate t with a SCALE matrix (not covariance): a centered normal
/// with that scale, divided by sqrt(chi2_df / df).
fn mvt_row<R: Rng>(chol: &[Vec<f64>], df: f64, rng: &mut R) -> Vec<f64> {
    let p = chol.len();
    let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let normal: Vec<f64> = (0..p)
        .map(|i| (0..=i).map(|k| chol[i][k] * z[k]).sum::<f64>())
        .collect();
    let w: f64 = ChiSquared::new(df).unwrap().sample(rng);
    let scale = (df / w).sqrt();
    normal.into_iter().map(|v| v * scale).collect()
}

/// A named sampling-law pair for the power study, or a null law used for
/// calibration checks.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSpec {
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
    D8,
    D9,
    S1,
    S2,
    S3,
    NullNormal { p: usize },
    NullCustom { law: NullLaw },
}

impl DesignSpec {
    /// Parses a CLI design id such as "D4", "S2", or "NULL_NORMAL".
    pub fn from_id(id: &str, p_for_null: usize, custom: Option<NullLaw>) -> Result<Self> {
        let spec = match id.to_ascii_uppercase().as_str() {
            "D1" => DesignSpec::D1,
            "D2" => DesignSpec::D2,
            "D3" => DesignSpec::D3,
            "D4" => DesignSpec::D4,
            "D5" => DesignSpec::D5,
            "D6" => DesignSpec::D6,
            "D7" => DesignSpec::D7,
            "D8" => DesignSpec::D8,
            "D9" => DesignSpec::D9,
            "S1" => DesignSpec::S1,
            "S2" => DesignSpec::S2,
            "S3" => DesignSpec::S3,
            "NULL_NORMAL" => DesignSpec::NullNormal { p: p_for_null },
            "NULL_CUSTOM" => {
                let law = custom.ok_or_else(|| {
                    Error::Design("NULL_CUSTOM needs a law file (--law)".into())
                })?;
                DesignSpec::NullCustom { law }
            }
            other => {
                return Err(Error::Design(format!(
                    "unknown design id {other:?} (expected D1..D9, S1..S3, NULL_NORMAL, NULL_CUSTOM)"
                )))
            }
        };
        Ok(spec)
    }

    pub fn id(&self) -> String {
        match self {
            DesignSpec::D1 => "D1".into(),
            DesignSpec::D2 => "D2".into(),
            DesignSpec::D3 => "D3".into(),
            DesignSpec::D4 => "D4".into(),
            DesignSpec::D5 => "D5".into(),
            DesignSpec::D6 => "D6".into(),
            DesignSpec::D7 => "D7".into(),
            DesignSpec::D8 => "D8".into(),
            DesignSpec::D9 => "D9".into(),
            DesignSpec::S1 => "S1".into(),
            DesignSpec::S2 => "S2".into(),
            DesignSpec::S3 => "S3".into(),
            DesignSpec::NullNormal { .. } => "NULL_NORMAL".into(),
            DesignSpec::NullCustom { .. } => "NULL_CUSTOM".into(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DesignSpec::S1 | DesignSpec::S2 | DesignSpec::S3 => 3,
            DesignSpec::NullNormal { p } => *p,
            DesignSpec::NullCustom { law } => law.dim(),
            _ => 2,
        }
    }

    /// n iid draws from the specified arm's law.
    pub fn sample_arm<R: Rng>(
        &self,
        arm: Arm,
        count: usize,
        rng: &mut R,
    ) -> Result<MultivariateSample<f64>> {
        let p = self.dim();
        let mut values: Vec<f64> = Vec::with_capacity(count * p);
        let std_normal_rows = |values: &mut Vec<f64>, rng: &mut R, k: usize| {
            for _ in 0..count * k {
                values.push(rng.sample::<f64, _>(StandardNormal));
            }
        };
        match (self, arm) {
            (DesignSpec::D1, Arm::X)
            | (DesignSpec::D4, Arm::X)
            | (DesignSpec::D5, Arm::X)
            | (DesignSpec::D6, Arm::X)
            | (DesignSpec::D7, Arm::X)
            | (DesignSpec::D8, Arm::X)
            | (DesignSpec::D9, Arm::X)
            | (DesignSpec::D3, Arm::Y) => std_normal_rows(&mut values, rng, 2),
            (DesignSpec::S1, Arm::X) | (DesignSpec::S2, Arm::X) | (DesignSpec::S3, Arm::X) => {
                std_normal_rows(&mut values, rng, 3)
            }
            (DesignSpec::D1, Arm::Y) => {
                let chol = cholesky(&scale_rho(0.9), 2)?;
                for _ in 0..count {
                    values.extend(mvt_row(&chol, 7.0, rng));
                }
            }
            (DesignSpec::D2, Arm::X) => {
                for _ in 0..count {
                    values.push(rng.sample::<f64, _>(StandardNormal));
                    values.push(rng.sample::<f64, _>(Exp1));
                }
            }
            (DesignSpec::D2, Arm::Y) => {
                for _ in 0..count {
                    values.push(rng.sample::<f64, _>(StandardNormal));
                    values.push(rng.sample::<f64, _>(StandardNormal).exp());
                }
            }
            (DesignSpec::D3, Arm::X) => {
                for _ in 0..count {
                    values.push(rng.gen_range(-1.0..1.0));
                    values.push(1.5 * rng.sample::<f64, _>(StandardNormal));
                }
            }
            (DesignSpec::D4, Arm::Y) => {
                for _ in 0..count {
                    values.push(0.5 + rng.sample::<f64, _>(StandardNormal));
                    values.push(0.7 + rng.sample::<f64, _>(StandardNormal));
                }
            }
            (DesignSpec::D5, Arm::Y) => {
                let chol = cholesky(&scale_rho(0.5), 2)?;
                for _ in 0..count {
                    values.extend(mvnormal_row(&[0.0, 0.0], &chol, rng));
                }
            }
            (DesignSpec::D6, Arm::Y) => {
                let chol = cholesky(&scale_rho(0.5), 2)?;
                for _ in 0..count {
                    values.extend(mvnormal_row(&[0.5, 0.7], &chol, rng));
                }
            }
            (DesignSpec::D7, Arm::Y) => {
                for _ in 0..count {
                    values.push(rng.sample::<f64, _>(Exp1) - 1.0);
                    values.push(rng.sample::<f64, _>(StandardNormal));
                }
            }
            (DesignSpec::D8, Arm::Y) => {
                for _ in 0..count {
                    let y1: f64 = rng.sample(StandardNormal);
                    let tau = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    values.push(y1);
                    values.push(tau * y1);
                }
            }
            (DesignSpec::D9, Arm::Y) => {
                for _ in 0..count {
                    let xi: f64 = rng.gen_range(0.0..1.0);
                    let (e1, e2, e3): (f64, f64, f64) = (
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    );
                    values.push(xi.sqrt() * e1 + (1.0 - xi).sqrt() * e2);
                    values.push(xi.sqrt() * e3 + (1.0 - xi).sqrt() * e2);
                }
            }
            (DesignSpec::S1, Arm::Y) => {
                for _ in 0..count {
                    let row = mvnormal_row(&[0.5, 0.7, 0.5], &identity_chol(3), rng);
                    values.extend(row);
                }
            }
            (DesignSpec::S2, Arm::Y) => {
                let chol = cholesky(&equicorr3(0.5), 3)?;
                for _ in 0..count {
                    values.extend(mvnormal_row(&[0.0, 0.0, 0.0], &chol, rng));
                }
            }
            (DesignSpec::S3, Arm::Y) => {
                let chol = cholesky(&equicorr3(0.5), 3)?;
                for _ in 0..count {
                    values.extend(mvnormal_row(&[0.5, 0.7, 0.5], &chol, rng));
                }
            }
            (DesignSpec::NullNormal { p }, _) => std_normal_rows(&mut values, rng, *p),
            (DesignSpec::NullCustom { law }, _) => return law.sample(count, rng),
        }
        MultivariateSample::from_flat(count, p, values)
    }
}

fn scale_rho(rho: f64) -> Vec<Vec<f64>> {
    vec![vec![1.0, rho], vec![rho, 1.0]]
}

fn equicorr3(rho: f64) -> Vec<Vec<f64>> {
    (0..3)
        .map(|i| (0..3).map(|j| if i == j { 1.0 } else { rho }).collect())
        .collect()
}

fn identity_chol(p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Draws one (X, Y) replicate for a design, each arm from its own stream.
pub fn sample_design_pair(
    spec: &DesignSpec,
    n: usize,
    m: usize,
    seed: u64,
    replicate: u64,
) -> Result<(MultivariateSample<f64>, MultivariateSample<f64>)> {
    let mut rx = arm_rng(seed, replicate, ARM_X);
    let mut ry = arm_rng(seed, replicate, ARM_Y);
    let x = spec.sample_arm(Arm::X, n, &mut rx)?;
    let y = spec.sample_arm(Arm::Y, m, &mut ry)?;
    Ok((x, y))
}

/// Both arms iid from the same law, on disjoint substreams.
pub fn null_pair(
    law: &NullLaw,
    n: usize,
    m: usize,
    seed: u64,
    replicate: u64,
) -> Result<(MultivariateSample<f64>, MultivariateSample<f64>)> {
    let mut rx = arm_rng(seed, replicate, ARM_X);
    let mut ry = arm_rng(seed, replicate, ARM_Y);
    Ok((law.sample(n, &mut rx)?, law.sample(m, &mut ry)?))
}
