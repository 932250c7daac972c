//! Center of pressure, base of support, whole-body CoM and the distances
//! between them.

mod dempster;
mod geometry;
mod placement;

use std::fmt::Write as _;

use thiserror::Error;

use crate::data::{RawRecording, Skeleton, PRESSURE_MAX_KPA};

pub use dempster::{dempster_com, Segment, SegmentTable};
pub use geometry::{convex_hull, intersection_area, point_segment_distance, polygon_iou, Point, Polygon};
pub use placement::{
    localize_feet, place_cells, FootPlacement, GridGeometry, ANKLE_ROW_FRACTION, DEFAULT_CELL_PITCH_MM,
};

/// BoS threshold in kPa.
pub const DEFAULT_BOS_THRESHOLD: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("total pressure is zero")]
    ZeroTotalPressure,
    #[error("fewer than three non-collinear points")]
    DegenerateHull,
    #[error("polygon is not convex and counterclockwise")]
    NotConvex,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("joint {0} is missing or not finite")]
    MissingJoint(usize),
    #[error("foot keypoints do not define a direction")]
    MissingKeypoint,
    #[error("segment table: {0}")]
    Table(String),
    #[error("{0}")]
    Shape(String),
}

/// Pressure-weighted mean of the cell centers.
pub fn compute_cop(values: &[f64], centers: &[Point]) -> Result<Point, StabilityError> {
    if values.len() != centers.len() {
        return Err(StabilityError::Shape(format!(
            "{} pressure values for {} cells",
            values.len(),
            centers.len()
        )));
    }
    let mut total = 0.0;
    let mut acc = [0.0, 0.0];
    for (&p, c) in values.iter().zip(centers) {
        let p = p.max(0.0);
        total += p;
        acc[0] += p * c[0];
        acc[1] += p * c[1];
    }
    if total <= 0.0 {
        return Err(StabilityError::ZeroTotalPressure);
    }
    Ok([acc[0] / total, acc[1] / total])
}

/// Convex hull of the centers of cells whose value exceeds `threshold`.
pub fn compute_bos(values: &[f64], centers: &[Point], threshold: f64) -> Result<Polygon, StabilityError> {
    if values.len() != centers.len() {
        return Err(StabilityError::Shape(format!(
            "{} pressure values for {} cells",
            values.len(),
            centers.len()
        )));
    }
    let active: Vec<Point> = values
        .iter()
        .zip(centers)
        .filter(|(v, _)| **v > threshold)
        .map(|(_, c)| *c)
        .collect();
    convex_hull(&active)
}

pub fn com_cop_distance(com_floor: Point, cop: Point) -> f64 {
    ((com_floor[0] - cop[0]).powi(2) + (com_floor[1] - cop[1]).powi(2)).sqrt()
}

/// Distance from the CoM to the BoS boundary, positive inside.
pub fn com_bos_distance(com_floor: Point, bos: &Polygon) -> f64 {
    bos.signed_distance(com_floor)
}

/// Stability quantities of one frame. CoP and BoS are missing when the
/// frame is airborne or too few cells are loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityFrame {
    pub frame: usize,
    pub cop: Option<Point>,
    pub bos: Option<Polygon>,
    pub com3d: [f64; 3],
    pub com_floor: Point,
    pub com_cop: Option<f64>,
    pub com_bos: Option<f64>,
}

impl StabilityFrame {
    pub fn bos_area(&self) -> Option<f64> {
        self.bos.as_ref().map(Polygon::area)
    }
}

/// Everything needed to put a recording's grids on the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorSetup {
    pub skeleton: Skeleton,
    pub geometry: GridGeometry,
    pub features: usize,
}

impl FloorSetup {
    pub fn of(rec: &RawRecording) -> Self {
        let (rows, cols) = rec.grid_dims();
        FloorSetup {
            skeleton: rec.skeleton.clone(),
            geometry: GridGeometry {
                rows,
                cols,
                pitch: rec.cell_pitch_mm,
            },
            features: rec.features(),
        }
    }

    /// Cell centers of both grids under the raw pose `frame`.
    pub fn cells(&self, frame: &[f64]) -> Result<Vec<Point>, StabilityError> {
        let feet = localize_feet(frame, self.features, &self.skeleton)?;
        Ok(place_cells(&self.geometry, &feet))
    }
}

/// CoP, BoS and their distances to `com3d` for one frame of kPa values on
/// already placed cells.
pub fn analyze_frame(frame: usize, values: &[f64], cells: &[Point], com3d: [f64; 3], threshold: f64) -> StabilityFrame {
    let com_floor = [com3d[0], com3d[1]];
    let cop = compute_cop(values, cells).ok();
    let bos = compute_bos(values, cells, threshold).ok();
    StabilityFrame {
        frame,
        com_cop: cop.map(|c| com_cop_distance(com_floor, c)),
        com_bos: bos.as_ref().map(|b| com_bos_distance(com_floor, b)),
        cop,
        bos,
        com3d,
        com_floor,
    }
}

pub const STABILITY_COLUMNS: &str = "frame,cop_x,cop_y,com_x,com_y,com_z,com_cop,com_bos,bos_area";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV record in [`STABILITY_COLUMNS`] order; undefined values are
/// left empty.
pub fn stability_record(f: &StabilityFrame) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        f.frame,
        opt(f.cop.map(|c| c[0])),
        opt(f.cop.map(|c| c[1])),
        f.com3d[0],
        f.com3d[1],
        f.com3d[2],
        opt(f.com_cop),
        opt(f.com_bos),
        opt(f.bos_area()),
    )
}

/// A header comment with the BoS threshold, the column names, then one
/// record per frame.
pub fn format_stability(frames: &[StabilityFrame], threshold: f64) -> String {
    let mut out = format!("# bos_threshold_kpa={threshold}\n{STABILITY_COLUMNS}\n");
    for f in frames {
        let _ = writeln!(out, "{}", stability_record(f));
    }
    out
}

/// Ground-truth stability of every frame of `rec`, on pressure clipped to
/// the sensor range. The CoM is the recording's label when present,
/// otherwise the Dempster estimate from 3D poses.
pub fn ground_truth_stability(
    rec: &RawRecording,
    table: &SegmentTable,
    threshold: f64,
) -> Result<Vec<StabilityFrame>, StabilityError> {
    let setup = FloorSetup::of(rec);
    (0..rec.frames())
        .map(|t| {
            let cells = setup.cells(rec.pose_frame(t))?;
            let com = match rec.com_frame(t) {
                Some(c) => c,
                None if rec.features() == 3 => dempster_com(rec.pose_frame(t), table)?,
                None => return Err(StabilityError::Shape("CoM needs either labels or 3D poses".into())),
            };
            let kpa: Vec<f64> = rec
                .pressure_frame(t)
                .iter()
                .map(|v| v.clamp(0.0, PRESSURE_MAX_KPA))
                .collect();
            Ok(analyze_frame(t, &kpa, &cells, com, threshold))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cop_examples() {
        let cells = [[0.0, 0.0], [1.0, 0.0]];
        assert_eq!(compute_cop(&[3.0, 1.0], &cells).unwrap(), [0.25, 0.0]);
        assert_eq!(compute_cop(&[0.0, 2.0], &cells).unwrap(), [1.0, 0.0]);
        assert_eq!(compute_cop(&[0.0, 0.0], &cells), Err(StabilityError::ZeroTotalPressure));
        let g = GridGeometry {
            rows: 4,
            cols: 3,
            pitch: (2.0, 3.0),
        };
        let placed = place_cells(&g, &[FootPlacement::IDENTITY, FootPlacement::IDENTITY]);
        let cop = compute_cop(&[1.0; 24], &placed).unwrap();
        assert_abs_diff_eq!(cop[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cop[1], 6.0 - 3.0, epsilon = 1e-12);
    }

    #[test]
    fn bos_of_full_footprint_is_the_corner_rectangle() {
        let g = GridGeometry {
            rows: 4,
            cols: 3,
            pitch: (1.0, 1.0),
        };
        let cells = place_cells(&g, &[FootPlacement::IDENTITY, FootPlacement::IDENTITY]);
        let bos = compute_bos(&[10.0; 24], &cells, 5.0).unwrap();
        assert_eq!(bos.vertices().len(), 4);
        assert_abs_diff_eq!(bos.area(), 2.0 * 3.0, epsilon = 1e-12);
        assert!(matches!(
            compute_bos(&[1.0; 24], &cells, 5.0),
            Err(StabilityError::DegenerateHull)
        ));
    }

    #[test]
    fn distances() {
        assert_eq!(com_cop_distance([3.0, 4.0], [0.0, 0.0]), 5.0);
        assert_eq!(com_cop_distance([1.0, 1.0], [1.0, 1.0]), 0.0);
        let sq = Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(com_bos_distance([0.5, 0.5], &sq), 0.5);
        assert_eq!(com_bos_distance([2.0, 0.5], &sq), -1.0);
    }

    #[test]
    fn record_layout() {
        let f = analyze_frame(3, &[0.0, 0.0], &[[0.0, 0.0], [1.0, 0.0]], [1.0, 2.0, 3.0], 5.0);
        assert_eq!(stability_record(&f), "3,,,1,2,3,,,");
        let text = format_stability(&[f], 5.0);
        assert!(text.starts_with("# bos_threshold_kpa=5\nframe,cop_x"));
    }

    proptest! {
        #[test]
        fn cop_lies_in_hull_of_loaded_cells(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, 0.01f64..100.0), 3..30),
        ) {
            let cells: Vec<Point> = pts.iter().map(|p| [p.0, p.1]).collect();
            let values: Vec<f64> = pts.iter().map(|p| p.2).collect();
            if let Ok(hull) = convex_hull(&cells) {
                let cop = compute_cop(&values, &cells).unwrap();
                prop_assert!(hull.signed_distance(cop) >= -1e-9);
            }
        }

        #[test]
        fn raising_threshold_never_grows_bos(
            values in prop::collection::vec(0.0f64..40.0, 24),
            lo in 0.0f64..20.0,
            dt in 0.0f64..20.0,
        ) {
            let g = GridGeometry { rows: 4, cols: 3, pitch: (5.0, 5.0) };
            let right = FootPlacement { translation: [30.0, 0.0], ..FootPlacement::IDENTITY };
            let cells = place_cells(&g, &[FootPlacement::IDENTITY, right]);
            if let Ok(high) = compute_bos(&values, &cells, lo + dt) {
                let low = compute_bos(&values, &cells, lo).unwrap();
                prop_assert!(high.area() <= low.area() + 1e-9);
            }
        }

        #[test]
        fn com_cop_is_invariant_under_rigid_motion(
            a in (-100.0f64..100.0, -100.0f64..100.0),
            b in (-100.0f64..100.0, -100.0f64..100.0),
            theta in -3.2f64..3.2,
            shift in (-50.0f64..50.0, -50.0f64..50.0),
        ) {
            let m = FootPlacement { angle: theta, translation: [shift.0, shift.1], foreshortening: 1.0 };
            let d0 = com_cop_distance([a.0, a.1], [b.0, b.1]);
            let d1 = com_cop_distance(m.apply([a.0, a.1]), m.apply([b.0, b.1]));
            prop_assert!((d0 - d1).abs() < 1e-9);
        }
    }
}
