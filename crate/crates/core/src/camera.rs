//! Pinhole camera geometry. The boresight is the camera +z axis.

use serde::{Deserialize, Serialize};

use crate::attitude::{arcsec, UnitVec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub rows: u32,
    pub cols: u32,
    /// Pixel pitch in millimetres.
    pub pixel_pitch: f64,
    /// Focal length in millimetres.
    pub focal_length: f64,
    pub magnitude_threshold: f64,
    /// One-sigma centroid error, radians.
    pub centroid_sigma: f64,
    pub spike_count_max: u32,
}

impl Default for CameraModel {
    /// The virtual star tracker used by every scenario: 1024×1024 detector,
    /// 18 µm pixels, 50.47 mm lens, magnitude 5.0, 10″ 3σ centroid error and
    /// up to five spikes per frame.
    fn default() -> Self {
        Self {
            rows: 1024,
            cols: 1024,
            pixel_pitch: 0.018,
            focal_length: 50.47,
            magnitude_threshold: 5.0,
            centroid_sigma: arcsec(10.0) / 3.0,
            spike_count_max: 5,
        }
    }
}

impl CameraModel {
    /// Half of the tangent-plane extent along x (columns), in focal lengths.
    pub fn half_tan_x(&self) -> f64 {
        0.5 * self.cols as f64 * self.pixel_pitch / self.focal_length
    }

    pub fn half_tan_y(&self) -> f64 {
        0.5 * self.rows as f64 * self.pixel_pitch / self.focal_length
    }

    /// Full field of view along x, radians.
    pub fn fov_x(&self) -> f64 {
        2.0 * self.half_tan_x().atan()
    }

    pub fn fov_y(&self) -> f64 {
        2.0 * self.half_tan_y().atan()
    }

    /// Angle from the boresight to a detector corner.
    pub fn half_diagonal(&self) -> f64 {
        self.half_tan_x().hypot(self.half_tan_y()).atan()
    }

    /// Corner-to-corner field of view; bounds any observable pair separation.
    pub fn fov_diagonal(&self) -> f64 {
        2.0 * self.half_diagonal()
    }

    /// True when a camera-frame direction lands on the detector.
    #[inline]
    pub fn contains(&self, v: &UnitVec3) -> bool {
        let v = v.as_vector();
        if v.z <= 0.0 {
            return false;
        }
        (v.x / v.z).abs() <= self.half_tan_x() && (v.y / v.z).abs() <= self.half_tan_y()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fov_per_axis() {
        let c = CameraModel::default();
        let fov = c.fov_x().to_degrees();
        assert!((fov - 20.7).abs() < 0.05, "{fov}");
        assert!((c.fov_y() - c.fov_x()).abs() < 1e-15);
        assert!(c.contains(&UnitVec3::z_axis()));
        assert!(!c.contains(&UnitVec3::x_axis()));
    }

    #[test]
    fn diagonal_bounds_detector() {
        let c = CameraModel::default();
        let corner = UnitVec3::from_xyz(c.half_tan_x(), c.half_tan_y(), 1.0).unwrap();
        assert!((corner.angle_to(&UnitVec3::z_axis()) - c.half_diagonal()).abs() < 1e-12);
        let beyond = UnitVec3::from_xyz(0.0, (c.half_diagonal() + 1e-3).tan(), 1.0).unwrap();
        assert!(!c.contains(&beyond));
    }
}
