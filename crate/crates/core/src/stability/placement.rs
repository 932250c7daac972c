//! Keypoint-anchored placement of the insole grids on the floor plane.
//!
//! Each grid is laid out in a local frame whose +y axis runs from heel
//! to toe, row 0 at the heel. The heel-to-toe keypoint direction sets the
//! in-plane rotation, the ankle keypoint sets the translation, and the
//! long axis is shortened by the cosine of the foot's pitch.

use super::geometry::Point;
use super::StabilityError;
use crate::data::{FootJoints, Skeleton};

/// Fraction of the grid length, from the heel edge, that sits under the
/// ankle keypoint.
pub const ANKLE_ROW_FRACTION: f64 = 0.25;

/// Sensor pitch of the default insole grid, in mm.
pub const DEFAULT_CELL_PITCH_MM: f64 = 5.08;

/// Layout of one foot's grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    /// mm per column and per row.
    pub pitch: (f64, f64),
}

impl GridGeometry {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Center of cell `(r, c)` in the local frame before foreshortening.
    pub fn local_center(&self, r: usize, c: usize) -> Point {
        let length = self.rows as f64 * self.pitch.1;
        [
            (c as f64 + 0.5 - self.cols as f64 / 2.0) * self.pitch.0,
            (r as f64 + 0.5) * self.pitch.1 - ANKLE_ROW_FRACTION * length,
        ]
    }
}

/// Rigid floor-plane placement of one grid plus long-axis foreshortening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootPlacement {
    /// Counterclockwise rotation taking local +y onto the heel-to-toe
    /// direction.
    pub angle: f64,
    pub translation: Point,
    pub foreshortening: f64,
}

impl FootPlacement {
    pub const IDENTITY: FootPlacement = FootPlacement {
        angle: 0.0,
        translation: [0.0, 0.0],
        foreshortening: 1.0,
    };

    pub fn apply(&self, local: Point) -> Point {
        let (s, c) = self.angle.sin_cos();
        let x = local[0];
        let y = local[1] * self.foreshortening;
        [c * x - s * y + self.translation[0], s * x + c * y + self.translation[1]]
    }

    /// Placement from one foot's keypoints, padded to 3D (z = 0 for 2D
    /// input).
    pub fn from_keypoints(ankle: [f64; 3], heel: [f64; 3], toe: [f64; 3]) -> Result<Self, StabilityError> {
        let v = [toe[0] - heel[0], toe[1] - heel[1], toe[2] - heel[2]];
        let planar = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if planar == 0.0 || ![ankle, heel, toe].iter().flatten().all(|x| x.is_finite()) {
            return Err(StabilityError::MissingKeypoint);
        }
        let angle = v[1].atan2(v[0]) - std::f64::consts::FRAC_PI_2;
        let pitch = v[2].abs().atan2(planar);
        Ok(FootPlacement {
            angle,
            translation: [ankle[0], ankle[1]],
            foreshortening: pitch.cos(),
        })
    }
}

fn keypoint(frame: &[f64], features: usize, joint: usize) -> Result<[f64; 3], StabilityError> {
    let start = joint * features;
    let p = frame
        .get(start..start + features)
        .ok_or(StabilityError::MissingJoint(joint))?;
    Ok([p[0], p.get(1).copied().unwrap_or(0.0), p.get(2).copied().unwrap_or(0.0)])
}

fn foot(frame: &[f64], features: usize, j: &FootJoints) -> Result<FootPlacement, StabilityError> {
    FootPlacement::from_keypoints(
        keypoint(frame, features, j.ankle)?,
        keypoint(frame, features, j.heel)?,
        keypoint(frame, features, j.toe)?,
    )
}

/// Placements of the left and right grids for one raw pose frame.
pub fn localize_feet(
    frame: &[f64],
    features: usize,
    skeleton: &Skeleton,
) -> Result<[FootPlacement; 2], StabilityError> {
    if features < 2 {
        return Err(StabilityError::MissingKeypoint);
    }
    Ok([
        foot(frame, features, &skeleton.left)?,
        foot(frame, features, &skeleton.right)?,
    ])
}

/// Floor-plane centers of every cell of both grids, left foot first.
pub fn place_cells(geometry: &GridGeometry, feet: &[FootPlacement; 2]) -> Vec<Point> {
    let mut out = Vec::with_capacity(2 * geometry.cells());
    for f in feet {
        for r in 0..geometry.rows {
            for c in 0..geometry.cols {
                out.push(f.apply(geometry.local_center(r, c)));
            }
        }
    }
    out
}
