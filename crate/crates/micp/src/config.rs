//! TOML run configuration. Command-line flags override file values, which
//! override built-in defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use micp_core::mesh::{generate_box_room, generate_sphere};
use micp_core::{MicpParams, SensorRig, SpcParams, TriangleMesh, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh_io::{load_mesh, MeshIoError};
use crate::serial::{read_text, FormatError, ModelJson, PoseJson};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid config")]
    Toml(#[from] toml::de::Error),
    #[error("invalid map spec {0:?}: expected a mesh path, sphere:RADIUS:FACES or box:X:Y:Z")]
    MapSpec(String),
    #[error(transparent)]
    Mesh(#[from] MeshIoError),
    #[error("{0}")]
    Invalid(String),
}

/// A mesh file or one of the built-in generators.
#[derive(Debug, Clone, PartialEq)]
pub enum MapSpec {
    File(PathBuf),
    Sphere { radius: f64, faces: usize },
    BoxRoom { extents: Vec3 },
}

impl FromStr for MapSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::MapSpec(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            ["sphere", r, n] => Ok(MapSpec::Sphere {
                radius: num(r)?,
                faces: n.parse().map_err(|_| bad())?,
            }),
            ["box", x, y, z] => Ok(MapSpec::BoxRoom {
                extents: Vec3::new(num(x)?, num(y)?, num(z)?),
            }),
            ["sphere", ..] | ["box", ..] => Err(bad()),
            _ if s.is_empty() => Err(bad()),
            _ => Ok(MapSpec::File(PathBuf::from(s))),
        }
    }
}

impl MapSpec {
    pub fn load(&self) -> Result<TriangleMesh, ConfigError> {
        match self {
            MapSpec::File(path) => Ok(load_mesh(path)?),
            MapSpec::Sphere { radius, faces } => {
                generate_sphere(*radius, *faces).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
            MapSpec::BoxRoom { extents } => {
                generate_box_room(*extents).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
        }
    }

    /// Relative file paths are taken relative to `base`.
    fn rebase(self, base: &Path) -> MapSpec {
        match self {
            MapSpec::File(p) if p.is_relative() => MapSpec::File(base.join(p)),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelJson,
    #[serde(default)]
    pub sensor_to_base: PoseJson,
    #[serde(default)]
    pub weight: Option<f64>,
    /// Scan file registered with this sensor.
    #[serde(default)]
    pub scan: Option<PathBuf>,
}

impl SensorConfig {
    pub fn rig(&self) -> Result<SensorRig, ConfigError> {
        let rig = SensorRig::new(self.model.to_model()?, self.sensor_to_base.to_transform()?)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match self.weight {
            Some(w) => rig.with_weight(w).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(rig),
        }
    }
}

/// Registration parameters; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicpConfig {
    pub max_iterations: Option<usize>,
    pub translation_epsilon: Option<f64>,
    pub rotation_epsilon: Option<f64>,
    pub min_correspondences: Option<usize>,
    pub max_projective_distance: Option<f64>,
    pub max_range: Option<f64>,
}

impl MicpConfig {
    /// Fields set in `other` win.
    pub fn overlay(&self, other: &MicpConfig) -> MicpConfig {
        MicpConfig {
            max_iterations: other.max_iterations.or(self.max_iterations),
            translation_epsilon: other.translation_epsilon.or(self.translation_epsilon),
            rotation_epsilon: other.rotation_epsilon.or(self.rotation_epsilon),
            min_correspondences: other.min_correspondences.or(self.min_correspondences),
            max_projective_distance: other.max_projective_distance.or(self.max_projective_distance),
            max_range: other.max_range.or(self.max_range),
        }
    }

    pub fn params(&self) -> Result<MicpParams, ConfigError> {
        let d = MicpParams::default();
        let params = MicpParams {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            translation_epsilon: self.translation_epsilon.unwrap_or(d.translation_epsilon),
            rotation_epsilon: self.rotation_epsilon.unwrap_or(d.rotation_epsilon),
            min_correspondences: self.min_correspondences.unwrap_or(d.min_correspondences),
            spc: SpcParams {
                max_projective_distance: self.max_projective_distance.unwrap_or(d.spc.max_projective_distance),
                max_range: self.max_range.unwrap_or(d.spc.max_range),
            },
        };
        params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub face_counts: Option<Vec<usize>>,
    pub poses: Option<usize>,
    pub radius: Option<f64>,
    pub max_translation: Option<f64>,
    pub max_rotation: Option<f64>,
    pub success_tolerance: Option<f64>,
    pub model: Option<ModelJson>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mesh path or generator spec.
    pub map: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub micp: MicpConfig,
    #[serde(default)]
    pub sensors: Vec<SensorConfig>,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.check()?;
        Ok(config)
    }

    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut config = RunConfig::parse(&read_text(path)?)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if let Some(map) = &self.map {
            map.parse::<MapSpec>()?;
        }
        for sensor in &self.sensors {
            sensor.rig()?;
        }
        self.micp.params()?;
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn map_spec(&self) -> Result<Option<MapSpec>, ConfigError> {
        self.map
            .as_deref()
            .map(|m| m.parse::<MapSpec>().map(|s| s.rebase(&self.base_dir)))
            .transpose()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_relative() {
            self.base_dir.join(path)
        } else {
            path.to_path_buf()
        }
    }
}
