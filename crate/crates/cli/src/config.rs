//! Experiment configuration files and the sources they reference.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dlab_core::numerics::c64;
use dlab_core::tuples::{
    clock, clock_pow, conjugation_perturb, random_directions, random_unitary_tuple, shift, weyl_tuple,
};
use dlab_core::{ComplexMatrix, PhaseMatrix, Truncation, UnitaryTuple};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuple: Option<TupleSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus: Option<TorusConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrange: Option<MrangeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<DemoConfig>,
}

/// Θ given inline in the phase-matrix JSON form or as `{"file": path}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSource {
    File { file: PathBuf },
    Inline(Value),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "camelCase")]
pub enum TupleSource {
    /// Weyl tuple of the (rational) configured Θ.
    Weyl,
    /// `(C_n^p, S_n)`, exactly `e^{2πi p/n}`-commuting.
    WeylPair { n: usize, p: i64 },
    /// `(S, D_r)` on a ring of `ring` sites with `r = e^{2πi p/ring}`.
    ShiftDiagonal { ring: usize, p: i64 },
    Clock { n: usize },
    /// Haar-random unitaries, one draw per seed.
    Random { d: usize, dim: usize },
    /// Weyl tuple of Θ conjugated by `e^{iεH}` with seeded Hermitian `H`.
    Perturbed { eps: f64 },
    /// One `1 x 1` unitary per entry `[re, im]`.
    Scalars { values: Vec<[f64; 2]> },
    /// One diagonal unitary per row of phases (in turns).
    Diagonal { phases: Vec<Vec<f64>> },
    File { path: PathBuf },
    Inline { tuple: UnitaryTuple },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl From<TruncationConfig> for Truncation {
    fn from(t: TruncationConfig) -> Self {
        Truncation { ring: t.ring, window: t.window }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TorusConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Word length of a subgroup ball to estimate against the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "probe", rename_all = "camelCase")]
pub enum MrangeConfig {
    Support { directions: usize },
    W1 { other: TupleSource, directions: usize },
    #[serde(rename_all = "camelCase")]
    Membership {
        target: TargetSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_iter: Option<usize>,
    },
    Dmr { other: TupleSource, level: usize, samples: usize },
    Drd { other: TupleSource },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum TargetSource {
    /// `scale · V* A V` for a seeded random isometry `V`.
    Compression {
        level: usize,
        #[serde(default = "unit")]
        scale: f64,
    },
    Matrices { matrices: Vec<ComplexMatrix> },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DemoConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_gamma")]
    pub gamma: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_approx: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default)]
    pub pair: DemoPair,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            gamma: default_gamma(),
            gamma_approx: None,
            epsilon: default_epsilon(),
            ring: None,
            window: None,
            pair: DemoPair::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DemoPair {
    #[default]
    Weyl,
    ShiftDiagonal,
}

fn default_n() -> usize {
    34
}

fn default_gamma() -> String {
    "golden".into()
}

fn default_epsilon() -> f64 {
    2.0
}

/// Fractional parts of a few named irrationals.
pub fn named_irrational(tag: &str) -> Option<f64> {
    match tag {
        "golden" => Some((5f64.sqrt() - 1.0) / 2.0),
        "silver" => Some(2f64.sqrt() - 1.0),
        "e" => Some(std::f64::consts::E - 2.0),
        "pi" => Some(std::f64::consts::PI - 3.0),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative file references relative to the config's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(ThetaSource::File { file }) = &mut self.theta {
            fix(file);
        }
        if let Some(TupleSource::File { path }) = &mut self.tuple {
            fix(path);
        }
        if let Some(MrangeConfig::W1 { other, .. } | MrangeConfig::Dmr { other, .. } | MrangeConfig::Drd { other }) =
            &mut self.mrange
        {
            if let TupleSource::File { path } = other {
                fix(path);
            }
        }
    }

    pub fn theta(&self) -> Result<PhaseMatrix> {
        let source = self.theta.as_ref().ok_or_else(|| anyhow!("config needs a \"theta\" entry"))?;
        let value = match source {
            ThetaSource::Inline(v) => v.clone(),
            ThetaSource::File { file } => {
                let text = fs::read_to_string(file).with_context(|| format!("reading Θ file {}", file.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing Θ file {}", file.display()))?
            }
        };
        PhaseMatrix::from_json_value(&value).map_err(|e| anyhow!("invalid Θ: {e}"))
    }

    pub fn tuple_source(&self) -> Result<&TupleSource> {
        self.tuple.as_ref().ok_or_else(|| anyhow!("config needs a \"tuple\" entry"))
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation.unwrap_or_default().into()
    }
}

impl TupleSource {
    /// Whether the generator consumes a seed.
    pub fn is_seeded(&self) -> bool {
        matches!(self, Self::Random { .. } | Self::Perturbed { .. })
    }

    pub fn build(&self, theta: Option<&PhaseMatrix>, seed: u64) -> Result<UnitaryTuple> {
        let need_theta = || theta.ok_or_else(|| anyhow!("tuple generator needs a configured Θ"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tuple = match self {
            Self::Weyl => weyl_tuple(need_theta()?)?,
            Self::WeylPair { n, p } => {
                let n = positive(*n, "n")?;
                weyl_tuple(&PhaseMatrix::rational_upper(2, &[(*p, n as i64)])?)?
            }
            Self::ShiftDiagonal { ring, p } => {
                let ring = positive(*ring, "ring")?;
                UnitaryTuple::new(vec![shift(ring), clock_pow(ring, *p)])?
            }
            Self::Clock { n } => UnitaryTuple::new(vec![clock(positive(*n, "n")?)])?,
            Self::Random { d, dim } => random_unitary_tuple(positive(*d, "d")?, positive(*dim, "dim")?, &mut rng),
            Self::Perturbed { eps } => {
                let base = weyl_tuple(need_theta()?)?;
                let dirs = random_directions(base.d(), base.dim(), &mut rng);
                conjugation_perturb(&base, &dirs, *eps)
            }
            Self::Scalars { values } => UnitaryTuple::new(
                values.iter().map(|&[re, im]| ComplexMatrix::scalar(1, c64(re, im))).collect(),
            )?,
            Self::Diagonal { phases } => UnitaryTuple::new(
                phases
                    .iter()
                    .map(|row| {
                        let diag: Vec<_> = row.iter().map(|&t| dlab_core::numerics::cis_turns(t)).collect();
                        ComplexMatrix::from_diag(&diag)
                    })
                    .collect(),
            )?,
            Self::File { path } => {
                let text = fs::read_to_string(path).with_context(|| format!("reading tuple {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing tuple {}", path.display()))?
            }
            Self::Inline { tuple } => tuple.clone(),
        };
        Ok(tuple)
    }
}

fn positive(x: usize, name: &str) -> Result<usize> {
    if x == 0 {
        bail!("\"{name}\" must be positive");
    }
    Ok(x)
}
