//! Angular-velocity estimation from a sliding window of attitude quaternions.
//!
//! Under constant angular velocity the quaternions lie on a great circle of
//! the unit 3-sphere. The plane of that circle gives the rotation axis and
//! the phase along it, regressed on time, gives the rate.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{Quaternion, UnitVec3};

pub const DEFAULT_N_MAX: usize = 50;
pub const DEFAULT_SIGMA3_TOL: f64 = 1e-9;

const AMBIGUOUS_PLANE_RTOL: f64 = 1e-12;
const AOR_SCALAR_TOL: f64 = 1e-6;
const PROJECTION_MIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuateraError {
    #[error("measurement time {t} does not follow {prev}")]
    NonIncreasingTime { prev: f64, t: f64 },
    #[error("window capacity must be at least 2, got {0}")]
    BadCapacity(usize),
    #[error("need at least 2 quaternions, have {0}")]
    InsufficientData(usize),
    #[error("rotation plane is not resolvable (σ2 = {sigma2:e}, σ3 = {sigma3:e})")]
    AmbiguousPlane { sigma2: f64, sigma3: f64 },
    #[error("plane basis does not yield a pure axis quaternion (scalar part {0:e})")]
    InconsistentPlane(f64),
    #[error("quaternion {0} is orthogonal to the fitted plane")]
    DegenerateProjection(usize),
    #[error("regression times are all identical")]
    SingularRegressor,
    #[error("tolerance must be positive and finite")]
    BadTolerance,
    #[error("non-finite quaternion")]
    NonFinite,
}

/// Timestamped, sign-continuous quaternion history.
#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionWindow {
    entries: VecDeque<(f64, Quaternion)>,
    n_max: usize,
}

impl Default for QuaternionWindow {
    fn default() -> Self {
        Self {
            entries: VecDeque::new(),
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl QuaternionWindow {
    pub fn new(n_max: usize) -> Result<Self, QuateraError> {
        if n_max < 2 {
            return Err(QuateraError::BadCapacity(n_max));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(n_max),
            n_max,
        })
    }

    pub fn capacity(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &(f64, Quaternion)> + '_ {
        self.entries.iter()
    }

    pub fn last(&self) -> Option<&(f64, Quaternion)> {
        self.entries.back()
    }

    /// Appends a measurement, flipping its sign if needed to stay on the same
    /// hemisphere as the previous entry, and evicts the oldest past capacity.
    pub fn push(&mut self, t: f64, q: Quaternion) -> Result<(), QuateraError> {
        if !(t.is_finite() && q.to_vector4().iter().all(|c| c.is_finite())) {
            return Err(QuateraError::NonFinite);
        }
        let mut q = q.normalized();
        if let Some(&(prev, last)) = self.entries.back() {
            if t <= prev {
                return Err(QuateraError::NonIncreasingTime { prev, t });
            }
            if q.dot(&last) < 0.0 {
                q = -q;
            }
        }
        self.entries.push_back((t, q));
        while self.entries.len() > self.n_max {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn drop_oldest(&mut self) -> Option<(f64, Quaternion)> {
        self.entries.pop_front()
    }

    /// `Z̄ = Σ qᵢ qᵢᵀ`.
    pub fn scatter(&self) -> Matrix4<f64> {
        let mut z = Matrix4::zeros();
        for (_, q) in &self.entries {
            let v = q.to_vector4();
            z += v * v.transpose();
        }
        z
    }
}

/// Orthonormal basis and scatter-matrix eigenvalues of a window, sorted by
/// decreasing eigenvalue. The first two vectors span the rotation plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub u: [Vector4<f64>; 4],
    pub sigma: [f64; 4],
}

impl PlaneFit {
    /// Cost `J(a, b) = aᵀZ̄a + bᵀZ̄b` for an orthonormal pair.
    pub fn cost(z: &Matrix4<f64>, a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
        a.dot(&(z * a)) + b.dot(&(z * b))
    }
}

/// Left singular vectors of the 4×n data matrix. They are the eigenvectors
/// of the scatter matrix with eigenvalues equal to the squared singular
/// values, but come without squaring the condition number.
fn decompose(window: &QuaternionWindow) -> PlaneFit {
    // Zero columns pad short windows so all four left vectors are returned.
    let cols = window.len().max(4);
    let mut q = DMatrix::zeros(4, cols);
    for (j, (_, v)) in window.entries().enumerate() {
        q.set_column(j, &v.to_vector4());
    }
    let svd = q.svd(true, false);
    let u_all = svd.u.expect("left vectors requested");
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u = order.map(|i| Vector4::from_iterator(u_all.column(i).iter().copied()));
    let sigma = order.map(|i| svd.singular_values[i].powi(2));
    PlaneFit { u, sigma }
}

pub fn fit_plane(window: &QuaternionWindow) -> Result<PlaneFit, QuateraError> {
    if window.len() < 2 {
        return Err(QuateraError::InsufficientData(window.len()));
    }
    let fit = decompose(window);
    let [s1, s2, s3, _] = fit.sigma;
    if s2 - s3 <= AMBIGUOUS_PLANE_RTOL * s1 {
        return Err(QuateraError::AmbiguousPlane { sigma2: s2, sigma3: s3 });
    }
    Ok(fit)
}

/// Rotation axis from the plane basis: the vector part of `u₂ ⊗ u₁⁻¹`.
pub fn extract_aor(fit: &PlaneFit) -> Result<UnitVec3, QuateraError> {
    let u1 = Quaternion::from_vector4(&fit.u[0]);
    let u2 = Quaternion::from_vector4(&fit.u[1]);
    let p = u2.compose(&u1.inverse());
    if p.w.abs() > AOR_SCALAR_TOL {
        return Err(QuateraError::InconsistentPlane(p.w));
    }
    UnitVec3::normalize(p.vector_part()).map_err(|_| QuateraError::InconsistentPlane(p.w))
}

/// Orthogonal projection of `q` onto `span(u₁, u₂)`, renormalized.
pub fn project_onto_plane(q: &Quaternion, fit: &PlaneFit) -> Option<Quaternion> {
    let v = q.to_vector4();
    let a = v.dot(&fit.u[0]);
    let b = v.dot(&fit.u[1]);
    let n = a.hypot(b);
    if n < PROJECTION_MIN {
        return None;
    }
    Some(Quaternion::from_vector4(&((fit.u[0] * a + fit.u[1] * b) / n)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSeries {
    pub times: Vec<f64>,
    pub phis: Vec<f64>,
}

/// Adds multiples of 2π so consecutive samples differ by at most π.
pub fn unwrap_phases(phis: &mut [f64]) {
    for i in 1..phis.len() {
        let d = phis[i] - phis[i - 1];
        phis[i] -= 2.0 * PI * (d / (2.0 * PI)).round();
    }
}

pub fn project_and_phase(window: &QuaternionWindow, fit: &PlaneFit) -> Result<AngleSeries, QuateraError> {
    let mut times = Vec::with_capacity(window.len());
    let mut phis = Vec::with_capacity(window.len());
    for (i, (t, q)) in window.entries().enumerate() {
        let v = q.to_vector4();
        let a = v.dot(&fit.u[0]);
        let b = v.dot(&fit.u[1]);
        if a.hypot(b) < PROJECTION_MIN {
            return Err(QuateraError::DegenerateProjection(i));
        }
        times.push(*t);
        phis.push(2.0 * b.atan2(a));
    }
    unwrap_phases(&mut phis);
    Ok(AngleSeries { times, phis })
}

/// Least-squares line `Φ = Φ₀ + Ω t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit {
    pub phi0: f64,
    pub rate: f64,
    /// Covariance of `(Φ₀, Ω)`.
    pub covariance: Matrix2<f64>,
    /// Fewer than three points leave no residual degrees of freedom.
    pub degenerate: bool,
}

pub fn estimate_avm(series: &AngleSeries) -> Result<PhaseFit, QuateraError> {
    let n = series.times.len();
    if n < 2 || series.phis.len() != n {
        return Err(QuateraError::InsufficientData(n.min(series.phis.len())));
    }
    let nf = n as f64;
    let t_mean = series.times.iter().sum::<f64>() / nf;
    let p_mean = series.phis.iter().sum::<f64>() / nf;
    let mut stt = 0.0;
    let mut stp = 0.0;
    for (t, p) in series.times.iter().zip(&series.phis) {
        let dt = t - t_mean;
        stt += dt * dt;
        stp += dt * (p - p_mean);
    }
    let t_scale = series.times.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(1.0);
    if stt <= (1e-12 * t_scale).powi(2) {
        return Err(QuateraError::SingularRegressor);
    }
    let rate = stp / stt;
    let phi0 = p_mean - rate * t_mean;
    let degenerate = n < 3;
    let s2 = if degenerate {
        0.0
    } else {
        let rss: f64 = series
            .times
            .iter()
            .zip(&series.phis)
            .map(|(t, p)| (p - phi0 - rate * t).powi(2))
            .sum();
        rss / (nf - 2.0)
    };
    let var_rate = s2 / stt;
    let covariance = Matrix2::new(
        s2 / nf + t_mean * t_mean * var_rate,
        -t_mean * var_rate,
        -t_mean * var_rate,
        var_rate,
    );
    Ok(PhaseFit {
        phi0,
        rate,
        covariance,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanarityTest {
    /// Shrink while σ₃ ≥ tolerance.
    Sigma3,
    /// Shrink until both σ₃ and σ₄ are below tolerance.
    Sigma3And4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuateraConfig {
    pub tolerance_sigma3: f64,
    pub planarity: PlanarityTest,
    /// When false the window is used as is.
    pub adaptive: bool,
    /// Replaces the regressed magnitude when the rate is known a priori.
    pub known_rate: Option<f64>,
}

impl Default for QuateraConfig {
    fn default() -> Self {
        Self {
            tolerance_sigma3: DEFAULT_SIGMA3_TOL,
            planarity: PlanarityTest::Sigma3,
            adaptive: true,
            known_rate: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptReport {
    pub dropped: usize,
    /// Shrinking stopped at two measurements without reaching planarity;
    /// the sampling rate is likely too low for the motion.
    pub at_floor: bool,
}

/// Drops the oldest measurements one by one until the window is planar
/// within `tolerance` or only two remain.
pub fn adapt_window(
    window: &mut QuaternionWindow,
    tolerance: f64,
    planarity: PlanarityTest,
) -> Result<AdaptReport, QuateraError> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(QuateraError::BadTolerance);
    }
    let mut dropped = 0;
    loop {
        if window.len() <= 2 {
            let planar = window.len() < 2 || is_planar(&decompose(window), tolerance, planarity);
            return Ok(AdaptReport {
                dropped,
                at_floor: !planar,
            });
        }
        if is_planar(&decompose(window), tolerance, planarity) {
            return Ok(AdaptReport {
                dropped,
                at_floor: false,
            });
        }
        window.drop_oldest();
        dropped += 1;
    }
}

fn is_planar(fit: &PlaneFit, tol: f64, planarity: PlanarityTest) -> bool {
    match planarity {
        PlanarityTest::Sigma3 => fit.sigma[2] < tol,
        PlanarityTest::Sigma3And4 => fit.sigma[2] < tol && fit.sigma[3] < tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaEstimate {
    pub axis: UnitVec3,
    /// Rate magnitude, rad/s, non-negative.
    pub magnitude: f64,
    pub phi0: f64,
    /// Covariance of `(Φ₀, Ω)`, row-major.
    pub covariance: [[f64; 2]; 2],
    pub window_n: usize,
    pub degenerate_covariance: bool,
    pub window_at_floor: bool,
}

impl OmegaEstimate {
    /// One-sigma rate uncertainty from the regression.
    pub fn sigma_rate(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn angular_velocity(&self) -> crate::attitude::AngularVelocity {
        crate::attitude::AngularVelocity::new(self.axis, self.magnitude)
    }
}

/// Adapts `window` in place, then fits the plane, axis and rate.
pub fn quatera_estimate(window: &mut QuaternionWindow, cfg: &QuateraConfig) -> Result<OmegaEstimate, QuateraError> {
    if window.len() < 2 {
        return Err(QuateraError::InsufficientData(window.len()));
    }
    let report = if cfg.adaptive {
        adapt_window(window, cfg.tolerance_sigma3, cfg.planarity)?
    } else {
        AdaptReport {
            dropped: 0,
            at_floor: false,
        }
    };
    estimate_fixed(window, cfg, report.at_floor)
}

/// Estimate from the window exactly as given.
pub fn estimate_fixed(
    window: &QuaternionWindow,
    cfg: &QuateraConfig,
    at_floor: bool,
) -> Result<OmegaEstimate, QuateraError> {
    let fit = fit_plane(window)?;
    let mut axis = extract_aor(&fit)?;
    let series = project_and_phase(window, &fit)?;
    let pf = estimate_avm(&series)?;
    let (mut rate, mut phi0) = (pf.rate, pf.phi0);
    if rate < 0.0 {
        axis = -axis;
        rate = -rate;
        phi0 = -phi0;
    }
    if let Some(known) = cfg.known_rate {
        rate = known.abs();
    }
    let c = pf.covariance;
    let cov01 = if pf.rate < 0.0 { -c[(0, 1)] } else { c[(0, 1)] };
    Ok(OmegaEstimate {
        axis,
        magnitude: rate,
        phi0,
        covariance: [[c[(0, 0)], cov01], [cov01, c[(1, 1)]]],
        window_n: window.len(),
        degenerate_covariance: pf.degenerate,
        window_at_floor: at_floor,
    })
}
