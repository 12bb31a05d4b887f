//! Star identification and angular-velocity estimation for star trackers.
//!
//! The tracking loop identifies the first frames in lost-in-space mode,
//! estimates attitude with the q-method, fits the angular velocity from the
//! recent attitude history, and uses that estimate to predict and match the
//! stars of later frames recursively.

pub mod attitude;
pub mod camera;
pub mod catalog;
pub mod checks;
pub mod harness;
pub mod pipeline;
pub mod pyramid;
pub mod quatera;
pub mod rsi;
pub mod simulator;

pub use attitude::{
    arcsec, delta_c, principal_angle, propagate_quaternion, solve_wahba, AngularVelocity, AttitudeError,
    Quaternion, RotationMatrix, UnitVec3, WahbaSolution,
};
pub use camera::CameraModel;
pub use catalog::{StarDatabase, StarIndex};
pub use pyramid::{pyramid_identify, Assignment, Frame, IdMethod, IdResult, PyramidConfig, PyramidFailure};
