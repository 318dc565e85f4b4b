//! Typed stripe minutiae: the four structures, their keypoint layout and the
//! canonical stroke geometry used to draw them.
//!
//! Keypoint layouts, by kind:
//!
//! * `Ridge`: `[end_a, end_b]`
//! * `Bifurcation` / `Convergence`: `[junction, stem_end, branch_a, branch_b]`
//! * `Enclosure`: `[terminal_a, bifurcation, apex_upper, convergence, terminal_b, apex_lower]`
//!
//! Angles are degrees measured from +x towards +y (image coordinates, so
//! clockwise on screen), normalized to `[0, 360)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinutiaError {
    #[error("{kind} expects {expected} keypoints, got {got}")]
    WrongKeypointCount {
        kind: MinutiaKind,
        expected: usize,
        got: usize,
    },
    #[error("keypoint {index} ({x}, {y}) is outside the unit square")]
    KeypointOutOfRange { index: usize, x: f64, y: f64 },
    #[error("{which} angle {value} is out of range for {kind}")]
    AngleOutOfRange {
        kind: MinutiaKind,
        which: AngleName,
        value: f64,
    },
    #[error("{kind} requires a {which} angle")]
    MissingAngle { kind: MinutiaKind, which: AngleName },
    #[error("{kind} does not carry a {which} angle")]
    UnexpectedAngle { kind: MinutiaKind, which: AngleName },
    #[error("invalid minutia: {0}")]
    InvalidMinutia(Box<MinutiaError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleName {
    Orientation,
    Branch,
    Convergence,
}

impl fmt::Display for AngleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Orientation => "orientation",
            Self::Branch => "branch",
            Self::Convergence => "convergence",
        })
    }
}

/// A point in normalized texture (or patch) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
}

impl Keypoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn dist(&self, other: &Keypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Keypoint {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Keypoint> for [f64; 2] {
    fn from(k: Keypoint) -> Self {
        [k.x, k.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinutiaKind {
    Ridge,
    Bifurcation,
    Convergence,
    Enclosure,
}

impl MinutiaKind {
    pub const ALL: [MinutiaKind; 4] = [Self::Ridge, Self::Bifurcation, Self::Convergence, Self::Enclosure];

    pub const fn keypoint_count(self) -> usize {
        match self {
            Self::Ridge => 2,
            Self::Bifurcation | Self::Convergence => 4,
            Self::Enclosure => 6,
        }
    }

    pub const fn letter(self) -> char {
        match self {
            Self::Ridge => 'R',
            Self::Bifurcation => 'B',
            Self::Convergence => 'C',
            Self::Enclosure => 'E',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'R' => Self::Ridge,
            'B' => Self::Bifurcation,
            'C' => Self::Convergence,
            'E' => Self::Enclosure,
            _ => return None,
        })
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::Ridge => "ridge",
            Self::Bifurcation => "bifurcation",
            Self::Convergence => "convergence",
            Self::Enclosure => "enclosure",
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    /// Junction-bearing kinds (everything except a plain ridge).
    pub const fn is_junction(self) -> bool {
        !matches!(self, Self::Ridge)
    }

    /// Allowed orientation range, half-open.
    pub const fn orientation_range(self) -> (f64, f64) {
        match self {
            Self::Convergence => (180.0, 360.0),
            _ => (0.0, 360.0),
        }
    }
}

impl fmt::Display for MinutiaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionId {
    Fore,
    Mid,
    Hind,
}

impl RegionId {
    pub const ALL: [RegionId; 3] = [Self::Fore, Self::Mid, Self::Hind];

    pub const fn letter(self) -> char {
        match self {
            Self::Fore => 'F',
            Self::Mid => 'M',
            Self::Hind => 'H',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'F' => Self::Fore,
            'M' => Self::Mid,
            'H' => Self::Hind,
            _ => return None,
        })
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl FromStr for RegionId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fore" | "f" => Ok(Self::Fore),
            "mid" | "m" => Ok(Self::Mid),
            "hind" | "h" => Ok(Self::Hind),
            other => Err(format!("unknown region `{other}`")),
        }
    }
}

/// Display names for the three body regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionLabels {
    pub fore: String,
    pub mid: String,
    pub hind: String,
}

impl Default for RegionLabels {
    fn default() -> Self {
        Self {
            fore: "fore".into(),
            mid: "mid".into(),
            hind: "hind".into(),
        }
    }
}

impl RegionLabels {
    pub fn label(&self, region: RegionId) -> &str {
        match region {
            RegionId::Fore => &self.fore,
            RegionId::Mid => &self.mid,
            RegionId::Hind => &self.hind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Angles {
    pub orientation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<f64>,
}

/// Wraps any finite angle into `[0, 360)`.
pub fn normalize_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Minutia {
    pub kind: MinutiaKind,
    pub keypoints: Vec<Keypoint>,
    pub angles: Angles,
    pub region: RegionId,
}

pub const DEFAULT_BRANCH_DEG: f64 = 40.0;
pub const DEFAULT_CONVERGENCE_DEG: f64 = 40.0;

impl Minutia {
    /// Normalizes angles into `[0, 360)` and validates.
    pub fn new(
        kind: MinutiaKind,
        keypoints: Vec<Keypoint>,
        mut angles: Angles,
        region: RegionId,
    ) -> Result<Self, MinutiaError> {
        if angles.orientation.is_finite() {
            angles.orientation = normalize_deg(angles.orientation);
        }
        angles.branch = angles.branch.map(|a| if a.is_finite() { normalize_deg(a) } else { a });
        angles.convergence = angles
            .convergence
            .map(|a| if a.is_finite() { normalize_deg(a) } else { a });
        let m = Self {
            kind,
            keypoints,
            angles,
            region,
        };
        m.validate()?;
        Ok(m)
    }

    /// Canonical layout for a kind at the given orientation, centred in the unit
    /// square. Used wherever only the symbolic content is known.
    pub fn canonical(kind: MinutiaKind, orientation_deg: f64, region: RegionId) -> Result<Self, MinutiaError> {
        let branch = DEFAULT_BRANCH_DEG;
        let local: Vec<(f64, f64)> = match kind {
            MinutiaKind::Ridge => vec![(-0.35, 0.0), (0.35, 0.0)],
            MinutiaKind::Bifurcation | MinutiaKind::Convergence => {
                let half = (branch / 2.0).to_radians();
                let j = (-0.05, 0.0);
                vec![
                    j,
                    (-0.35, 0.0),
                    (j.0 + 0.35 * half.cos(), -0.35 * half.sin()),
                    (j.0 + 0.35 * half.cos(), 0.35 * half.sin()),
                ]
            }
            MinutiaKind::Enclosure => vec![
                (-0.42, 0.0),
                (-0.2, 0.0),
                (0.0, -0.15),
                (0.2, 0.0),
                (0.42, 0.0),
                (0.0, 0.15),
            ],
        };
        let theta = normalize_deg(orientation_deg).to_radians();
        let (s, c) = theta.sin_cos();
        let keypoints = local
            .into_iter()
            .map(|(x, y)| Keypoint::new(0.5 + x * c - y * s, 0.5 + x * s + y * c))
            .collect();
        let angles = Angles {
            orientation: orientation_deg,
            branch: kind.is_junction().then_some(branch),
            convergence: (kind == MinutiaKind::Enclosure).then_some(DEFAULT_CONVERGENCE_DEG),
        };
        Self::new(kind, keypoints, angles, region)
    }

    pub fn orientation_deg(&self) -> f64 {
        self.angles.orientation
    }

    /// Reports the first violated invariant.
    pub fn validate(&self) -> Result<(), MinutiaError> {
        let kind = self.kind;
        let expected = kind.keypoint_count();
        if self.keypoints.len() != expected {
            return Err(MinutiaError::WrongKeypointCount {
                kind,
                expected,
                got: self.keypoints.len(),
            });
        }
        if let Some((index, k)) = self.keypoints.iter().enumerate().find(|(_, k)| !k.is_valid()) {
            return Err(MinutiaError::KeypointOutOfRange { index, x: k.x, y: k.y });
        }
        let needs_branch = kind.is_junction();
        let needs_convergence = kind == MinutiaKind::Enclosure;
        for (which, value, needed) in [
            (AngleName::Branch, self.angles.branch, needs_branch),
            (AngleName::Convergence, self.angles.convergence, needs_convergence),
        ] {
            match (value, needed) {
                (None, true) => return Err(MinutiaError::MissingAngle { kind, which }),
                (Some(_), false) => return Err(MinutiaError::UnexpectedAngle { kind, which }),
                _ => {}
            }
        }
        let (lo, hi) = kind.orientation_range();
        let o = self.angles.orientation;
        if !(o.is_finite() && o >= lo && o < hi) {
            return Err(MinutiaError::AngleOutOfRange {
                kind,
                which: AngleName::Orientation,
                value: o,
            });
        }
        for (which, value) in [
            (AngleName::Branch, self.angles.branch),
            (AngleName::Convergence, self.angles.convergence),
        ] {
            if let Some(v) = value {
                if !(v.is_finite() && (0.0..360.0).contains(&v)) {
                    return Err(MinutiaError::AngleOutOfRange { kind, which, value: v });
                }
            }
        }
        Ok(())
    }

    /// The junction keypoint, if this kind has one.
    pub fn junction(&self) -> Option<Keypoint> {
        match self.kind {
            MinutiaKind::Ridge => None,
            MinutiaKind::Bifurcation | MinutiaKind::Convergence => self.keypoints.first().copied(),
            MinutiaKind::Enclosure => self.keypoints.get(1).copied(),
        }
    }

    /// Drawable polylines in the minutia's own normalized coordinates.
    ///
    /// A ridge is one segment; a bifurcation or convergence is three segments
    /// leaving the junction; an enclosure is a single closed polyline that runs
    /// out along the first terminal, around both arcs and back along the second
    /// terminal, so it starts and ends at `terminal_a`.
    pub fn stroke_geometry(&self) -> Result<Vec<Vec<Keypoint>>, MinutiaError> {
        self.validate()
            .map_err(|e| MinutiaError::InvalidMinutia(Box::new(e)))?;
        let k = &self.keypoints;
        Ok(match self.kind {
            MinutiaKind::Ridge => vec![vec![k[0], k[1]]],
            MinutiaKind::Bifurcation | MinutiaKind::Convergence => {
                (1..4).map(|i| vec![k[0], k[i]]).collect()
            }
            MinutiaKind::Enclosure => {
                let (ta, bif, up, conv, tb, low) = (k[0], k[1], k[2], k[3], k[4], k[5]);
                vec![vec![ta, bif, up, conv, tb, conv, low, bif, ta]]
            }
        })
    }
}
