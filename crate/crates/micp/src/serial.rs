//! Serde mirrors of core types and the scan and result file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use micp_core::{MicpResult, PhaseTimings, Scan, SensorModel, SensorRig, Transform, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot write {path}")]
    Write { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid JSON")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|source| FormatError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Pose as translation plus unit quaternion in x, y, z, w order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "identity_quaternion")]
    pub quaternion: [f64; 4],
}

fn identity_quaternion() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl Default for PoseJson {
    fn default() -> Self {
        PoseJson {
            translation: [0.0; 3],
            quaternion: identity_quaternion(),
        }
    }
}

impl PoseJson {
    pub fn to_transform(&self) -> Result<Transform, FormatError> {
        let [x, y, z] = self.translation;
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(FormatError::Invalid("pose translation must be finite".into()));
        }
        Transform::from_quaternion(Vec3::new(x, y, z), self.quaternion).map_err(|e| FormatError::Invalid(e.to_string()))
    }
}

impl From<&Transform> for PoseJson {
    fn from(t: &Transform) -> Self {
        let v = t.translation();
        PoseJson {
            translation: [v.x, v.y, v.z],
            quaternion: t.quaternion(),
        }
    }
}

/// Parses `x y z qx qy qz qw` (commas also accepted as separators).
pub fn parse_pose(text: &str) -> Result<Transform, FormatError> {
    let values: Result<Vec<f64>, _> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse::<f64>)
        .collect();
    let values = values.map_err(|_| FormatError::Invalid(format!("pose {text:?} is not numeric")))?;
    let pose = match values.as_slice() {
        [x, y, z] => PoseJson {
            translation: [*x, *y, *z],
            ..PoseJson::default()
        },
        [x, y, z, qx, qy, qz, qw] => PoseJson {
            translation: [*x, *y, *z],
            quaternion: [*qx, *qy, *qz, *qw],
        },
        _ => return Err(FormatError::Invalid(format!("pose {text:?} needs 3 or 7 numbers"))),
    };
    pose.to_transform()
}

/// Sensor model description as it appears in config and scan files.
/// `vlp16` and `planar` are shorthands for common spherical layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelJson {
    Spherical {
        theta_min: f64,
        theta_max: f64,
        n_horizontal: usize,
        phi_min: f64,
        phi_max: f64,
        n_vertical: usize,
        range_min: f64,
        range_max: f64,
    },
    Pinhole {
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        range_min: f64,
        range_max: f64,
    },
    O1dn {
        origin: [f64; 3],
        directions: Vec<[f64; 3]>,
        range_min: f64,
        range_max: f64,
    },
    Ondn {
        origins: Vec<[f64; 3]>,
        directions: Vec<[f64; 3]>,
        range_min: f64,
        range_max: f64,
    },
    Vlp16 {
        n_horizontal: usize,
    },
    Planar {
        n_horizontal: usize,
        range_max: f64,
    },
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn unit(a: &[f64; 3]) -> Vec3 {
    let v = vec3(a);
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl ModelJson {
    /// Directions are normalized; the model is validated.
    pub fn to_model(&self) -> Result<SensorModel, FormatError> {
        let model = match self {
            ModelJson::Spherical {
                theta_min,
                theta_max,
                n_horizontal,
                phi_min,
                phi_max,
                n_vertical,
                range_min,
                range_max,
            } => SensorModel::Spherical {
                theta_min: *theta_min,
                theta_max: *theta_max,
                n_horizontal: *n_horizontal,
                phi_min: *phi_min,
                phi_max: *phi_max,
                n_vertical: *n_vertical,
                range_min: *range_min,
                range_max: *range_max,
            },
            ModelJson::Pinhole {
                width,
                height,
                fx,
                fy,
                cx,
                cy,
                range_min,
                range_max,
            } => SensorModel::Pinhole {
                width: *width,
                height: *height,
                fx: *fx,
                fy: *fy,
                cx: *cx,
                cy: *cy,
                range_min: *range_min,
                range_max: *range_max,
            },
            ModelJson::O1dn {
                origin,
                directions,
                range_min,
                range_max,
            } => SensorModel::O1Dn {
                origin: vec3(origin),
                directions: directions.iter().map(unit).collect(),
                range_min: *range_min,
                range_max: *range_max,
            },
            ModelJson::Ondn {
                origins,
                directions,
                range_min,
                range_max,
            } => SensorModel::OnDn {
                origins: origins.iter().map(vec3).collect(),
                directions: directions.iter().map(unit).collect(),
                range_min: *range_min,
                range_max: *range_max,
            },
            ModelJson::Vlp16 { n_horizontal } => SensorModel::vlp16(*n_horizontal),
            ModelJson::Planar {
                n_horizontal,
                range_max,
            } => SensorModel::planar_lidar(*n_horizontal, *range_max),
        };
        model.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
        Ok(model)
    }
}

impl From<&SensorModel> for ModelJson {
    fn from(model: &SensorModel) -> Self {
        match model {
            SensorModel::Spherical {
                theta_min,
                theta_max,
                n_horizontal,
                phi_min,
                phi_max,
                n_vertical,
                range_min,
                range_max,
            } => ModelJson::Spherical {
                theta_min: *theta_min,
                theta_max: *theta_max,
                n_horizontal: *n_horizontal,
                phi_min: *phi_min,
                phi_max: *phi_max,
                n_vertical: *n_vertical,
                range_min: *range_min,
                range_max: *range_max,
            },
            SensorModel::Pinhole {
                width,
                height,
                fx,
                fy,
                cx,
                cy,
                range_min,
                range_max,
            } => ModelJson::Pinhole {
                width: *width,
                height: *height,
                fx: *fx,
                fy: *fy,
                cx: *cx,
                cy: *cy,
                range_min: *range_min,
                range_max: *range_max,
            },
            SensorModel::O1Dn {
                origin,
                directions,
                range_min,
                range_max,
            } => ModelJson::O1dn {
                origin: arr(origin),
                directions: directions.iter().map(arr).collect(),
                range_min: *range_min,
                range_max: *range_max,
            },
            SensorModel::OnDn {
                origins,
                directions,
                range_min,
                range_max,
            } => ModelJson::Ondn {
                origins: origins.iter().map(arr).collect(),
                directions: directions.iter().map(arr).collect(),
                range_min: *range_min,
                range_max: *range_max,
            },
        }
    }
}

/// Self-describing scan file: the sensor that took it and its ranges.
/// Invalid measurements are stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanFile {
    pub model: ModelJson,
    #[serde(default)]
    pub sensor_to_base: PoseJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub ranges: Vec<Option<f64>>,
}

impl ScanFile {
    pub fn new(rig: &SensorRig, scan: &Scan) -> Self {
        ScanFile {
            model: rig.model().into(),
            sensor_to_base: rig.sensor_to_base().into(),
            weight: rig.weight_override(),
            ranges: scan
                .ranges()
                .iter()
                .zip(scan.valid())
                .map(|(&r, &ok)| ok.then_some(r))
                .collect(),
        }
    }

    pub fn rig(&self) -> Result<SensorRig, FormatError> {
        let model = self.model.to_model()?;
        let rig = SensorRig::new(model, self.sensor_to_base.to_transform()?)
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        match self.weight {
            Some(w) => rig.with_weight(w).map_err(|e| FormatError::Invalid(e.to_string())),
            None => Ok(rig),
        }
    }

    pub fn scan(&self, model: &SensorModel) -> Result<Scan, FormatError> {
        let ranges = self.ranges.iter().map(|r| r.unwrap_or(f64::NAN)).collect();
        Scan::new(model, ranges).map_err(|e| FormatError::Invalid(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(&read_text(path.as_ref())?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        write_text(path.as_ref(), &(serde_json::to_string_pretty(self)? + "\n"))
    }
}

/// `index,range,valid` rows with a header line.
pub fn scan_to_csv(scan: &Scan) -> String {
    let mut out = String::from("index,range,valid\n");
    for (i, (r, ok)) in scan.ranges().iter().zip(scan.valid()).enumerate() {
        writeln!(out, "{i},{r},{}", *ok as u8).unwrap();
    }
    out
}

/// Reads the CSV written by [`scan_to_csv`]; the model supplies range bounds.
pub fn scan_from_csv(text: &str, model: &SensorModel) -> Result<Scan, FormatError> {
    let mut ranges = Vec::new();
    let mut mask = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || (line_no == 1 && line.starts_with("index")) {
            continue;
        }
        let err = |msg: &str| FormatError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [index, range, valid] = fields.as_slice() else {
            return Err(err("expected index,range,valid"));
        };
        let index: usize = index.parse().map_err(|_| err("bad index"))?;
        if index != ranges.len() {
            return Err(err("indices must be consecutive from 0"));
        }
        ranges.push(range.parse::<f64>().map_err(|_| err("bad range"))?);
        mask.push(match *valid {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(err("valid must be 0 or 1")),
        });
    }
    Scan::with_mask(model, ranges, mask).map_err(|e| FormatError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingsJson {
    pub simulation: f64,
    pub reduction: f64,
    pub svd: f64,
    pub total: f64,
}

impl From<&PhaseTimings> for TimingsJson {
    fn from(t: &PhaseTimings) -> Self {
        TimingsJson {
            simulation: t.simulation,
            reduction: t.reduction,
            svd: t.svd,
            total: t.total(),
        }
    }
}

/// Registration outcome. Timing fields are absent when normalized away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub pose: PoseJson,
    pub converged: bool,
    pub rejected: bool,
    pub iterations_run: usize,
    pub final_residual: f64,
    pub correspondence_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_timings: Option<TimingsJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration_timings: Option<Vec<TimingsJson>>,
}

impl ResultJson {
    pub fn new(result: &MicpResult, with_timing: bool) -> Self {
        ResultJson {
            pose: (&result.pose).into(),
            converged: result.converged,
            rejected: result.rejected,
            iterations_run: result.iterations_run,
            final_residual: result.final_residual,
            correspondence_count: result.correspondence_count,
            phase_timings: with_timing.then(|| (&result.phase_timings).into()),
            iteration_timings: with_timing.then(|| result.iteration_timings.iter().map(Into::into).collect()),
        }
    }
}
