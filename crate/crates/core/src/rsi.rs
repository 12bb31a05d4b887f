//! Recursive star identification. Stars identified in the previous frame are
//! propagated with the current angular-velocity estimate, matched against the
//! new observations, and the match is validated against the attitude solve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{arcsec, delta_c, principal_angle, solve_wahba, RotationMatrix, UnitVec3, WahbaSolution};
use crate::camera::CameraModel;
use crate::catalog::{StarDatabase, StarIndex};
use crate::pyramid::{Frame, IdMethod, IdResult, Matcher, PyramidConfig};
use crate::quatera::OmegaEstimate;

/// How the recurrent-match cone half-angle is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    Fixed(f64),
    /// `(Ω + 3σ_ω)·Δt·motion_fraction + 3σ_c`, not below `floor`.
    Scaled { motion_fraction: f64, floor: f64 },
    /// `sigmas·√(2σ_c² + (σ_ω·Δt)²)`, not below `floor`: the spread of a
    /// predicted direction from centroid noise in both frames and the rate
    /// uncertainty.
    Uncertainty { sigmas: f64, floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsiConfig {
    pub epsilon: EpsilonRule,
    /// Expected stars closer than this to another expected star are dropped.
    pub theta_min: f64,
    /// Rate uncertainty used until the estimator provides one, rad/s.
    pub sigma_omega_prior: f64,
    /// Per-star centroid sigma, radians.
    pub centroid_sigma: f64,
    /// Wahba cost bound is `n·(wahba_sigmas·σ_c)²` for unit weights.
    pub wahba_sigmas: f64,
    /// Principal-angle bound is `3σ_ω·Δt + principal_angle_margin`.
    pub principal_angle_margin: f64,
    pub min_recurrent: usize,
    pub pyramid: PyramidConfig,
}

impl Default for RsiConfig {
    fn default() -> Self {
        Self {
            epsilon: EpsilonRule::Uncertainty {
                sigmas: 3.0,
                floor: 0.0,
            },
            theta_min: arcsec(60.0),
            sigma_omega_prior: arcsec(10.0),
            centroid_sigma: arcsec(10.0) / 3.0,
            wahba_sigmas: 3.0,
            principal_angle_margin: arcsec(60.0),
            min_recurrent: 3,
            pyramid: PyramidConfig::default(),
        }
    }
}

impl RsiConfig {
    pub fn sigma_omega(&self, omega: &OmegaEstimate) -> f64 {
        if omega.degenerate_covariance {
            self.sigma_omega_prior
        } else {
            omega.sigma_rate()
        }
    }

    pub fn epsilon_for(&self, omega: &OmegaEstimate, dt: f64) -> f64 {
        match self.epsilon {
            EpsilonRule::Fixed(e) => e,
            EpsilonRule::Scaled { motion_fraction, floor } => {
                let e = (omega.magnitude + 3.0 * self.sigma_omega(omega)) * dt * motion_fraction
                    + 3.0 * self.centroid_sigma;
                e.max(floor)
            }
            EpsilonRule::Uncertainty { sigmas, floor } => {
                let s_rate = self.sigma_omega(omega) * dt;
                let e = sigmas * (2.0 * self.centroid_sigma.powi(2) + s_rate * s_rate).sqrt();
                e.max(floor)
            }
        }
    }

    pub fn wahba_cost_max(&self, n_stars: usize) -> f64 {
        n_stars as f64 * (self.wahba_sigmas * self.centroid_sigma).powi(2)
    }

    pub fn principal_angle_tol(&self, omega: &OmegaEstimate, dt: f64) -> f64 {
        3.0 * self.sigma_omega(omega) * dt + self.principal_angle_margin
    }
}

/// What the recursion carries from one identified frame to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct RsiState {
    /// Identified observations of the previous frame, camera frame.
    pub stars: Vec<(UnitVec3, StarIndex)>,
    pub prev_attitude: RotationMatrix,
    pub omega: OmegaEstimate,
    pub prev_time: f64,
}

impl RsiState {
    pub fn new(frame: &Frame, id: &IdResult, prev_attitude: RotationMatrix, omega: OmegaEstimate) -> Self {
        let stars = id
            .identified()
            .map(|(o, s)| (frame.observations[o], s))
            .collect();
        Self {
            stars,
            prev_attitude,
            omega,
            prev_time: frame.time,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    #[error("frame time does not follow the previous frame")]
    NonIncreasingTime,
    #[error("too few observations")]
    TooFewObservations,
    #[error("too few recurrent stars")]
    TooFewRecurrent,
    #[error("attitude solve failed")]
    AttitudeSolve,
    #[error("Wahba cost above bound")]
    WahbaCost,
    #[error("principal angle inconsistent with the rate estimate")]
    PrincipalAngle,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("recursive identification aborted: {reason} ({recurrent} recurrent matches)")]
pub struct RsiAbort {
    pub reason: AbortReason,
    pub recurrent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsiOutcome {
    pub id: IdResult,
    pub solution: WahbaSolution,
    pub recurrent: usize,
}

/// Previously identified stars rotated to where they should appear at
/// `t_next`, keeping only those that land on the detector.
pub fn predict_stars(
    state: &RsiState,
    t_next: f64,
    camera: &CameraModel,
) -> Result<Vec<(UnitVec3, StarIndex)>, AbortReason> {
    let dt = t_next - state.prev_time;
    if !(dt > 0.0) {
        return Err(AbortReason::NonIncreasingTime);
    }
    let dc = delta_c(state.omega.axis.as_vector(), state.omega.magnitude * dt)
        .map_err(|_| AbortReason::NonIncreasingTime)?;
    Ok(state
        .stars
        .iter()
        .map(|(b, s)| (dc.apply(b), *s))
        .filter(|(e, _)| camera.contains(e))
        .collect())
}

/// Drops expected stars that have a neighbour closer than `theta_min`.
pub fn drop_crowded(expected: &[(UnitVec3, StarIndex)], theta_min: f64) -> Vec<(UnitVec3, StarIndex)> {
    let c = theta_min.cos();
    let mut crowded = vec![false; expected.len()];
    for (i, (e, _)) in expected.iter().enumerate() {
        for (j, (f, _)) in expected.iter().enumerate().skip(i + 1) {
            if e.dot(f) > c {
                crowded[i] = true;
                crowded[j] = true;
            }
        }
    }
    expected
        .iter()
        .zip(&crowded)
        .filter(|(_, &x)| !x)
        .map(|(e, _)| *e)
        .collect()
}

/// Pairs `(observation index, expected index)`. An observation is recurrent
/// to an expected star when it lies inside that star's ε-cone and no other
/// expected cone. Expected stars claimed by several observations are left
/// unmatched so the result is one-to-one.
pub fn match_recurrent(expected: &[UnitVec3], observed: &[UnitVec3], epsilon: f64) -> Vec<(usize, usize)> {
    let c = epsilon.cos();
    let mut claims: Vec<Option<usize>> = vec![None; observed.len()];
    let mut claim_count = vec![0u32; expected.len()];
    for (j, b) in observed.iter().enumerate() {
        let mut hit = None;
        let mut count = 0;
        for (i, e) in expected.iter().enumerate() {
            if b.dot(e) > c {
                hit = Some(i);
                count += 1;
            }
        }
        if count == 1 {
            let i = hit.unwrap();
            claims[j] = Some(i);
            claim_count[i] += 1;
        }
    }
    claims
        .iter()
        .enumerate()
        .filter_map(|(j, c)| c.filter(|&i| claim_count[i] == 1).map(|i| (j, i)))
        .collect()
}

/// Both acceptance checks on a recursive identification.
/// `match_recurrent` over `drop_crowded(expected)`, with crowding evaluated
/// only for cones an observation actually falls in. Same result, but a frame
/// with no recurrent stars costs a single pass.
pub fn match_uncrowded(
    expected: &[(UnitVec3, StarIndex)],
    observed: &[UnitVec3],
    epsilon: f64,
    theta_min: f64,
) -> Vec<(usize, usize)> {
    let c_eps = epsilon.cos();
    let c_min = theta_min.cos();
    let mut crowded: Vec<Option<bool>> = vec![None; expected.len()];
    let mut is_crowded = |i: usize| {
        *crowded[i].get_or_insert_with(|| {
            let e = &expected[i].0;
            expected
                .iter()
                .enumerate()
                .any(|(j, (f, _))| j != i && e.dot(f) > c_min)
        })
    };
    let mut claims: Vec<Option<usize>> = vec![None; observed.len()];
    let mut claim_count = vec![0u32; expected.len()];
    for (j, b) in observed.iter().enumerate() {
        let mut hit = None;
        let mut count = 0;
        for (i, (e, _)) in expected.iter().enumerate() {
            if b.dot(e) > c_eps && !is_crowded(i) {
                hit = Some(i);
                count += 1;
            }
        }
        if count == 1 {
            let i = hit.unwrap();
            claims[j] = Some(i);
            claim_count[i] += 1;
        }
    }
    claims
        .iter()
        .enumerate()
        .filter_map(|(j, c)| c.filter(|&i| claim_count[i] == 1).map(|i| (j, i)))
        .collect()
}

pub fn validate(
    prev_attitude: &RotationMatrix,
    solution: &WahbaSolution,
    expected_phi: f64,
    cost_max: f64,
    angle_tol: f64,
) -> Result<(), AbortReason> {
    if !(solution.cost <= cost_max) {
        return Err(AbortReason::WahbaCost);
    }
    let phi = principal_angle(prev_attitude, &solution.attitude());
    if (phi - expected_phi).abs() > angle_tol {
        return Err(AbortReason::PrincipalAngle);
    }
    Ok(())
}

pub fn rsi_identify(
    state: &RsiState,
    frame: &Frame,
    cfg: &RsiConfig,
    db: &StarDatabase,
    camera: &CameraModel,
) -> Result<RsiOutcome, RsiAbort> {
    let abort = |reason, recurrent| RsiAbort { reason, recurrent };
    if frame.len() <= 3 {
        return Err(abort(AbortReason::TooFewObservations, 0));
    }
    let dt = frame.time - state.prev_time;
    let predicted = predict_stars(state, frame.time, camera).map_err(|r| abort(r, 0))?;
    let eps = cfg.epsilon_for(&state.omega, dt);
    let matches = match_uncrowded(&predicted, &frame.observations, eps, cfg.theta_min);
    let recurrent = matches.len();
    if recurrent < cfg.min_recurrent.max(3) {
        return Err(abort(AbortReason::TooFewRecurrent, recurrent));
    }

    let fixed: Vec<(usize, StarIndex)> = matches.iter().map(|&(o, e)| (o, predicted[e].1)).collect();
    let base = [fixed[0], fixed[1], fixed[2]];
    let mut m = Matcher::new(db, &frame.observations, &cfg.pyramid);
    let id = m.extend(&base, &fixed, IdMethod::Recursive);

    let (obs, refs): (Vec<UnitVec3>, Vec<UnitVec3>) = id
        .identified()
        .map(|(o, s)| (frame.observations[o], *db.direction(s)))
        .unzip();
    let weights = vec![1.0; obs.len()];
    let solution = solve_wahba(&obs, &refs, &weights).map_err(|_| abort(AbortReason::AttitudeSolve, recurrent))?;
    let phi = state.omega.magnitude * dt;
    validate(
        &state.prev_attitude,
        &solution,
        phi,
        cfg.wahba_cost_max(solution.n_stars),
        cfg.principal_angle_tol(&state.omega, dt),
    )
    .map_err(|r| abort(r, recurrent))?;
    Ok(RsiOutcome {
        id,
        solution,
        recurrent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> UnitVec3 {
        UnitVec3::from_xyz(x, y, z).unwrap()
    }

    #[test]
    fn exact_observations_all_match() {
        let e = vec![v(0.0, 0.0, 1.0), v(0.1, 0.0, 1.0), v(0.0, 0.1, 1.0)];
        let m = match_recurrent(&e, &e, arcsec(30.0));
        assert_eq!(m, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn observation_inside_two_cones_is_unmatched() {
        let eps = arcsec(30.0);
        let e = vec![v(0.0, 0.0, 1.0), UnitVec3::from_xyz(eps.tan(), 0.0, 1.0).unwrap()];
        let b = vec![UnitVec3::from_xyz(0.5 * eps.tan(), 0.0, 1.0).unwrap()];
        assert!(match_recurrent(&e, &b, eps).is_empty());
    }

    #[test]
    fn shared_expected_star_is_unmatched() {
        let eps = arcsec(30.0);
        let e = vec![v(0.0, 0.0, 1.0)];
        let b = vec![
            UnitVec3::from_xyz(arcsec(5.0), 0.0, 1.0).unwrap(),
            UnitVec3::from_xyz(-arcsec(5.0), 0.0, 1.0).unwrap(),
        ];
        assert!(match_recurrent(&e, &b, eps).is_empty());
    }

    #[test]
    fn crowded_expected_stars_are_dropped() {
        let e = vec![
            (v(0.0, 0.0, 1.0), StarIndex(0)),
            (UnitVec3::from_xyz(arcsec(20.0), 0.0, 1.0).unwrap(), StarIndex(1)),
            (v(0.1, 0.0, 1.0), StarIndex(2)),
        ];
        let kept = drop_crowded(&e, arcsec(60.0));
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].1, StarIndex(2));
    }

    #[test]
    fn scaled_epsilon_has_floor() {
        let cfg = RsiConfig {
            epsilon: EpsilonRule::Scaled {
                motion_fraction: 0.05,
                floor: arcsec(30.0),
            },
            ..RsiConfig::default()
        };
        let om = OmegaEstimate {
            axis: UnitVec3::z_axis(),
            magnitude: 0.0,
            phi0: 0.0,
            covariance: [[0.0; 2]; 2],
            window_n: 3,
            degenerate_covariance: false,
            window_at_floor: false,
        };
        assert_eq!(cfg.epsilon_for(&om, 1.0), arcsec(30.0));
        let fast = OmegaEstimate { magnitude: 3f64.to_radians(), ..om };
        let e = cfg.epsilon_for(&fast, 1.0);
        assert!((e - (3f64.to_radians() * 0.05 + arcsec(10.0))).abs() < 1e-15);
    }
}
