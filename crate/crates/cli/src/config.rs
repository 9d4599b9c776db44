//! TOML run configurations and their conversion to library types.

use serde::{Deserialize, Serialize};
use topokinetic::kinetic::KineticState;
use topokinetic::sim::InitialCondition;
use topokinetic::{Metric, RankKernel};

use crate::CliError;

/// Kernel family selection shared by every config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelConfig {
    Constant,
    UniformCutoff {
        theta: f64,
    },
    SmoothCutoff {
        theta: f64,
        eps: f64,
    },
    PowerLaw {
        alpha: f64,
        #[serde(default)]
        mirrored: bool,
    },
}

impl KernelConfig {
    pub fn to_core(&self) -> RankKernel {
        match *self {
            KernelConfig::Constant => RankKernel::Constant,
            KernelConfig::UniformCutoff { theta } => RankKernel::UniformCutoff { theta },
            KernelConfig::SmoothCutoff { theta, eps } => RankKernel::SmoothCutoff { theta, eps },
            KernelConfig::PowerLaw { alpha, mirrored } => RankKernel::PowerLaw { alpha, mirrored },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MetricConfig {
    Euclidean { dim: usize },
    Periodic { length: f64 },
}

impl MetricConfig {
    pub fn to_core(&self) -> Metric {
        match *self {
            MetricConfig::Euclidean { dim } => Metric::Euclidean { dim },
            MetricConfig::Periodic { length } => Metric::PeriodicLine { length },
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            MetricConfig::Euclidean { dim } => dim,
            MetricConfig::Periodic { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    UniformBox {
        x_min: f64,
        x_max: f64,
        v_min: f64,
        v_max: f64,
    },
    Discrete {
        length: f64,
        nx: usize,
        velocities: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl InitConfig {
    pub fn to_core(&self) -> InitialCondition {
        match self {
            InitConfig::UniformBox { x_min, x_max, v_min, v_max } => InitialCondition::UniformBox {
                x_min: *x_min,
                x_max: *x_max,
                v_min: *v_min,
                v_max: *v_max,
            },
            InitConfig::Discrete { length, nx, velocities, probs } => {
                InitialCondition::DiscreteXv {
                    length: *length,
                    nx: *nx,
                    velocities: velocities.clone(),
                    probs: probs.clone(),
                }
            }
        }
    }
}

/// `simulate` config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub t_end: f64,
    pub sample_interval: f64,
    pub seed: Option<u64>,
    pub kernel: KernelConfig,
    pub metric: MetricConfig,
    pub init: InitConfig,
}

/// Initial condition of a kinetic run, built on the solver grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KineticInitConfig {
    /// Spatially flat: `f(x, a) = class_weights[a] / (L * sum(class_weights))`.
    Homogeneous { class_weights: Vec<f64> },
    /// Per-class sine perturbation with a class-dependent phase:
    /// `f(x, a) ∝ class_weights[a] (1 + amplitude sin(2πx/L + aπ/2))`,
    /// normalised to unit mass.
    Sine { class_weights: Vec<f64>, amplitude: f64 },
}

impl KineticInitConfig {
    pub fn build(&self, length: f64, nx: usize, velocities: &[f64]) -> Result<KineticState, CliError> {
        let nv = velocities.len();
        match self {
            KineticInitConfig::Homogeneous { class_weights } => {
                if class_weights.len() != nv {
                    return Err(CliError::Usage(format!(
                        "class_weights has {} entries, expected one per velocity ({nv})",
                        class_weights.len()
                    )));
                }
                Ok(KineticState::homogeneous(length, nx, velocities.to_vec(), class_weights)?)
            }
            KineticInitConfig::Sine { class_weights, amplitude } => {
                if class_weights.len() != nv {
                    return Err(CliError::Usage(format!(
                        "class_weights has {} entries, expected one per velocity ({nv})",
                        class_weights.len()
                    )));
                }
                if amplitude.abs() >= 1.0 {
                    return Err(CliError::Usage(format!(
                        "amplitude {amplitude} must lie in (-1, 1) to keep f nonnegative"
                    )));
                }
                let dx = length / nx as f64;
                let mut f = vec![0.0; nx * nv];
                for m in 0..nx {
                    let x = (m as f64 + 0.5) * dx;
                    for (a, w) in class_weights.iter().enumerate() {
                        let phase = std::f64::consts::PI * (a as f64) / 2.0;
                        let wave = 1.0
                            + amplitude
                                * (2.0 * std::f64::consts::PI * x / length + phase).sin();
                        f[m * nv + a] = w * wave;
                    }
                }
                let mut state = KineticState::new(length, nx, velocities.to_vec(), f)?;
                state.normalise()?;
                Ok(state)
            }
        }
    }
}

/// `solve` config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub velocities: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub sample_interval: Option<f64>,
    pub kernel: KernelConfig,
    pub initial: KineticInitConfig,
}

/// `compare` config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareFileConfig {
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub velocities: Vec<f64>,
    pub n_values: Vec<usize>,
    pub runs: usize,
    pub t: f64,
    pub dt: f64,
    pub chaos_nx: usize,
    pub seed: Option<u64>,
    pub kernel: KernelConfig,
    pub initial: KineticInitConfig,
}

/// Read and parse a TOML config file; both failures are usage errors.
pub fn load<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<(T, String), CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let parsed = toml::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    Ok((parsed, raw))
}
