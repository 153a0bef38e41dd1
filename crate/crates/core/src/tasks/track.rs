//! Gates, race tracks and the geometric checks used by the racing task.

use crate::geom::Vec3;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::TaskError;

pub const TRACK_SCHEMA: u32 = 1;
const DEFAULT_TRACK: &str = include_str!("../../data/figure8.toml");

/// Rectangular gate. `normal` points in the passing direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub center: Vec3,
    pub normal: Vec3,
    pub up: Vec3,
    pub half_width: f64,
    pub half_height: f64,
}

impl Gate {
    /// Vertical square gate of inner side `size`, facing `yaw` (rad from +x).
    pub fn from_yaw(center: Vec3, yaw: f64, size: f64) -> Self {
        Self {
            center,
            normal: Vec3::new(yaw.cos(), yaw.sin(), 0.0),
            up: Vec3::z(),
            half_width: 0.5 * size,
            half_height: 0.5 * size,
        }
    }

    /// Right-hand direction when looking along `normal`.
    pub fn right(&self) -> Vec3 {
        self.normal.cross(&self.up)
    }

    /// Inner corners ordered top-left, top-right, bottom-right, bottom-left as
    /// seen when looking along `normal`.
    pub fn corners(&self) -> [Vec3; 4] {
        let r = self.right() * self.half_width;
        let u = self.up * self.half_height;
        let c = self.center;
        [c - r + u, c + r + u, c + r - u, c - r - u]
    }

    /// The four frame edges as segments between consecutive corners.
    pub fn edges(&self) -> [(Vec3, Vec3); 4] {
        let k = self.corners();
        [(k[0], k[1]), (k[1], k[2]), (k[2], k[3]), (k[3], k[0])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateCrossing {
    pub passed: bool,
    /// Distance from the plane-crossing point to the gate centre; `NaN` when
    /// the segment does not cross the plane.
    pub gate_error: f64,
}

/// Whether the segment `p_prev → p_curr` crosses the gate plane in the
/// passing direction through the aperture enlarged by `margin`.
///
/// The crossing test is half-open (`before < 0 <= after`) so a segment split
/// exactly on the plane yields a single event.
pub fn gate_pass_check(p_prev: &Vec3, p_curr: &Vec3, gate: &Gate, margin: f64) -> GateCrossing {
    let before = (p_prev - gate.center).dot(&gate.normal);
    let after = (p_curr - gate.center).dot(&gate.normal);
    if !(before < 0.0 && after >= 0.0) {
        return GateCrossing { passed: false, gate_error: f64::NAN };
    }
    let t = before / (before - after);
    let x = p_prev + (p_curr - p_prev) * t;
    let offset = x - gate.center;
    let lateral = offset.dot(&gate.right()).abs();
    let vertical = offset.dot(&gate.up).abs();
    GateCrossing {
        passed: lateral <= gate.half_width + margin && vertical <= gate.half_height + margin,
        gate_error: offset.norm(),
    }
}

/// Minimum distance between segments `[p0, p1]` and `[q0, q1]`.
pub fn segment_distance(p0: &Vec3, p1: &Vec3, q0: &Vec3, q1: &Vec3) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    const EPS: f64 = 1e-12;
    let (s, t) = if a <= EPS && e <= EPS {
        (0.0, 0.0)
    } else if a <= EPS {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s = if denom > EPS { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// Whether a sphere of `radius` swept along `p_prev → p_curr` touches the frame.
pub fn hits_gate_frame(p_prev: &Vec3, p_curr: &Vec3, gate: &Gate, radius: f64) -> bool {
    gate.edges()
        .iter()
        .any(|(a, b)| segment_distance(p_prev, p_curr, a, b) < radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub name: String,
    pub gates: Vec<Gate>,
}

/// On-disk gate entry: centre, facing yaw in degrees and inner side length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub center: [f64; 3],
    pub yaw_deg: f64,
    #[serde(default = "default_gate_size")]
    pub size: f64,
}

fn default_gate_size() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFile {
    pub schema: u32,
    pub name: String,
    pub gates: Vec<GateSpec>,
}

impl Track {
    pub fn from_file_data(file: &TrackFile) -> Result<Self, TaskError> {
        if file.schema != TRACK_SCHEMA {
            return Err(TaskError::Track(format!("unsupported track schema {}", file.schema)));
        }
        if file.gates.is_empty() {
            return Err(TaskError::Track("track needs at least one gate".into()));
        }
        let gates = file
            .gates
            .iter()
            .map(|g| {
                if !(g.size > 0.0) {
                    return Err(TaskError::Track(format!("gate size must be positive, got {}", g.size)));
                }
                Ok(Gate::from_yaw(Vec3::from(g.center), g.yaw_deg.to_radians(), g.size))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { name: file.name.clone(), gates })
    }

    pub fn parse(text: &str) -> Result<Self, TaskError> {
        let file: TrackFile = toml::from_str(text).map_err(|e| TaskError::Track(e.to_string()))?;
        Self::from_file_data(&file)
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaskError::Track(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The bundled six-gate figure-8.
    pub fn figure8() -> Self {
        Self::parse(DEFAULT_TRACK).expect("bundled track is valid")
    }

    pub fn default_file_text() -> &'static str {
        DEFAULT_TRACK
    }

    pub fn gate(&self, index: usize) -> &Gate {
        &self.gates[index % self.gates.len()]
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn translated(&self, t: &Vec3) -> Self {
        let mut out = self.clone();
        for g in &mut out.gates {
            g.center += t;
        }
        out
    }
}
