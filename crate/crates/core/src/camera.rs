//! Flat-ground pinhole geometry.
//!
//! Maps metric longitudinal distance on the ground plane to image rows and
//! metric object size to pixel extent. All of scene generation, edge-distance
//! estimation and verdict tolerances go through this module.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("distance {0} m is at or behind the camera")]
    DistanceBehindCamera(f64),
    #[error("ground point at {distance} m projects to row {row}, outside the image")]
    RowOutOfImage { distance: f64, row: f64 },
    #[error("row {row} is at or above the horizon row {horizon}")]
    AboveHorizon { row: f64, horizon: f64 },
    #[error("invalid camera model: {0}")]
    InvalidModel(String),
}

/// Pinhole intrinsics plus mounting pose over a flat ground plane.
///
/// Single focal length (square pixels), principal point in pixel
/// coordinates, camera `mount_height` meters above the ground, `pitch` in
/// radians with downward positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal_length: f64,
    pub principal_point: (f64, f64),
    pub image_size: (u32, u32),
    pub mount_height: f64,
    pub pitch: f64,
}

impl Default for CameraModel {
    /// Tele-camera analog: 1920x1080, f = 2000 px, mounted 1.3 m above the
    /// road, zero pitch. Chosen so a 0.5 m object still subtends >= 3 px at
    /// 300 m.
    fn default() -> Self {
        CameraModel {
            focal_length: 2000.0,
            principal_point: (960.0, 540.0),
            image_size: (1920, 1080),
            mount_height: 1.3,
            pitch: 0.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), CameraError> {
        let (w, h) = self.image_size;
        let (cx, cy) = self.principal_point;
        if !(self.focal_length > 0.0) {
            return Err(CameraError::InvalidModel("focal_length must be > 0".into()));
        }
        if !(self.mount_height > 0.0) {
            return Err(CameraError::InvalidModel("mount_height must be > 0".into()));
        }
        if !(0.0..w as f64).contains(&cx) || !(0.0..h as f64).contains(&cy) {
            return Err(CameraError::InvalidModel(
                "principal point outside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.image_size.0
    }

    pub fn height(&self) -> u32 {
        self.image_size.1
    }

    /// Image row of the horizon (ground plane at infinite distance).
    pub fn horizon_row(&self) -> f64 {
        self.principal_point.1 + self.focal_length * self.pitch.tan()
    }

    /// Fractional image row where the ground plane at longitudinal distance
    /// `d` projects. Strictly decreasing in `d`.
    pub fn ground_row_for_distance(&self, d: f64) -> Result<f64, CameraError> {
        if !(d > 0.0) {
            return Err(CameraError::DistanceBehindCamera(d));
        }
        let row = self.principal_point.1
            + self.focal_length * ((self.mount_height / d).atan() + self.pitch).tan();
        if row < 0.0 || row > self.height() as f64 {
            return Err(CameraError::RowOutOfImage { distance: d, row });
        }
        Ok(row)
    }

    /// Exact inverse of [`ground_row_for_distance`](Self::ground_row_for_distance).
    pub fn distance_for_ground_row(&self, row: f64) -> Result<f64, CameraError> {
        let horizon = self.horizon_row();
        if row <= horizon {
            return Err(CameraError::AboveHorizon { row, horizon });
        }
        let angle = ((row - self.principal_point.1) / self.focal_length).atan() - self.pitch;
        Ok(self.mount_height / angle.tan())
    }

    /// Pixel extent of a fronto-parallel object of metric size `size_m`
    /// at distance `d`.
    pub fn pixel_extent_at_distance(&self, size_m: f64, d: f64) -> Result<f64, CameraError> {
        if !(d > 0.0) {
            return Err(CameraError::DistanceBehindCamera(d));
        }
        Ok(self.focal_length * size_m / d)
    }

    /// Pixel column of a ground point `lateral_m` meters left/right of the
    /// optical axis, evaluated at the given ground row.
    pub fn column_for_lateral_offset(&self, lateral_m: f64, row: f64) -> f64 {
        // On the ground plane, lateral scale at a row is (row - cy) / h
        // pixels per meter for zero pitch; go through the distance for the
        // general case.
        match self.distance_for_ground_row(row) {
            Ok(d) => self.principal_point.0 + self.focal_length * lateral_m / d,
            Err(_) => self.principal_point.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraModel {
        CameraModel::default()
    }

    #[test]
    fn row_for_26m_matches_closed_form() {
        // pitch 0: row = cy + f*h/d
        let row = cam().ground_row_for_distance(26.0).unwrap();
        assert!((row - 640.0).abs() < 1e-9, "row = {row}");
        // independent trig evaluation
        let trig = 540.0 + 2000.0 * (1.3f64 / 26.0).atan().tan();
        assert!((row - trig).abs() < 1e-9);
    }

    #[test]
    fn horizon_limit() {
        let row = cam().ground_row_for_distance(1.0e9).unwrap();
        assert!((row - 540.0).abs() < 1e-3);
        assert_eq!(cam().horizon_row(), 540.0);
    }

    #[test]
    fn bottom_edge_distance() {
        // d = f*h / (H - cy) projects exactly onto the bottom edge
        let d = 2000.0 * 1.3 / 540.0;
        let row = cam().ground_row_for_distance(d).unwrap();
        assert!((row - 1080.0).abs() < 1e-9);
        // anything closer projects off-frame
        assert!(matches!(
            cam().ground_row_for_distance(d - 0.1),
            Err(CameraError::RowOutOfImage { .. })
        ));
    }

    #[test]
    fn inverse_identity() {
        for &d in &[5.0, 26.0, 100.0, 300.0, 999.0] {
            let row = cam().ground_row_for_distance(d).unwrap();
            let back = cam().distance_for_ground_row(row).unwrap();
            assert!((back - d).abs() <= 1e-6 * d);
        }
        let d = cam().distance_for_ground_row(640.0).unwrap();
        assert!((d - 26.0).abs() < 1e-9);
    }

    #[test]
    fn horizon_row_has_no_ground_intersection() {
        assert!(matches!(
            cam().distance_for_ground_row(540.0),
            Err(CameraError::AboveHorizon { .. })
        ));
    }

    #[test]
    fn behind_camera_is_rejected() {
        assert!(matches!(
            cam().ground_row_for_distance(0.0),
            Err(CameraError::DistanceBehindCamera(_))
        ));
        assert!(matches!(
            cam().pixel_extent_at_distance(0.5, -1.0),
            Err(CameraError::DistanceBehindCamera(_))
        ));
    }

    #[test]
    fn pixel_extent_similar_triangles() {
        let e = cam().pixel_extent_at_distance(0.5, 100.0).unwrap();
        assert_eq!(e, 10.0);
        assert_eq!(cam().pixel_extent_at_distance(0.0, 100.0).unwrap(), 0.0);
        let far = cam().pixel_extent_at_distance(0.5, 200.0).unwrap();
        assert_eq!(e, 2.0 * far);
    }

    #[test]
    fn pitch_changes_horizon() {
        let mut c = cam();
        c.pitch = 0.03;
        let row = c.ground_row_for_distance(100.0).unwrap();
        let back = c.distance_for_ground_row(row).unwrap();
        assert!((back - 100.0).abs() <= 1e-6 * 100.0);
        assert!(c.horizon_row() > 540.0);
    }
}
