//! Virtual star tracker and the attitude scenarios used for Monte Carlo runs.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{AngularVelocity, Quaternion, RotationMatrix, UnitVec3};
use crate::camera::CameraModel;
use crate::catalog::{StarDatabase, StarIndex};
use crate::pyramid::Frame;

/// Sidereal rotation rate of the Earth, rad/s.
pub const EARTH_RATE: f64 = 2.0 * PI / 86164.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time {t} outside [0, {t_f}]")]
    OutOfDomain { t: f64, t_f: f64 },
    #[error("invalid scenario: {0}")]
    BadConfig(String),
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> UnitVec3 {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if let Ok(u) = UnitVec3::normalize(v) {
            return u;
        }
    }
}

/// Uniformly distributed attitude.
pub fn random_attitude<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    let q = Quaternion::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    q.normalized().to_rotation_matrix()
}

/// Rotates `v` by `|N(0, σ)|` about a random axis perpendicular to it.
pub fn perturb<R: Rng + ?Sized>(v: &UnitVec3, sigma: f64, rng: &mut R) -> UnitVec3 {
    if sigma <= 0.0 {
        return *v;
    }
    let x = v.as_vector();
    let axis = loop {
        let r = random_unit(rng);
        let t = r.as_vector() - x * x.dot(r.as_vector());
        if let Ok(a) = UnitVec3::normalize(t) {
            break a;
        }
    };
    let angle: f64 = Normal::new(0.0, sigma).unwrap().sample(rng).abs();
    let out = x * angle.cos() + axis.as_vector().cross(x) * angle.sin();
    UnitVec3::normalize(out).unwrap_or(*v)
}

/// A false star uniformly distributed over the detector's solid angle.
pub fn random_spike<R: Rng + ?Sized>(camera: &CameraModel, rng: &mut R) -> UnitVec3 {
    let cmin = camera.half_diagonal().cos();
    loop {
        let z: f64 = rng.random_range(cmin..=1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let s = (1.0 - z * z).max(0.0).sqrt();
        let v = UnitVec3::from_xyz(s * phi.cos(), s * phi.sin(), z).unwrap();
        if camera.contains(&v) {
            return v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeCount {
    /// Uniform over `0..=camera.spike_count_max`.
    Uniform,
    Exactly(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameOptions {
    pub noise: bool,
    pub spikes: SpikeCount,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            noise: true,
            spikes: SpikeCount::Uniform,
        }
    }
}

/// A simulated frame with its ground truth. Observation order is shuffled.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub frame: Frame,
    /// Catalog star behind each observation, `None` for spikes.
    pub truth: Vec<Option<StarIndex>>,
    pub attitude: RotationMatrix,
}

impl SimFrame {
    pub fn n_stars(&self) -> usize {
        self.truth.iter().filter(|t| t.is_some()).count()
    }
}

/// Catalog stars on the detector for `attitude`, in the camera frame.
pub fn visible_stars(db: &StarDatabase, camera: &CameraModel, attitude: &RotationMatrix) -> Vec<(UnitVec3, StarIndex)> {
    let cmin = camera.half_diagonal().cos();
    let boresight = attitude.transpose().apply(&UnitVec3::z_axis());
    db.stars()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.direction.dot(&boresight) >= cmin)
        .filter_map(|(i, s)| {
            let b = attitude.apply(&s.direction);
            camera.contains(&b).then_some((b, StarIndex(i as u32)))
        })
        .collect()
}

pub fn generate_frame<R: Rng + ?Sized>(
    db: &StarDatabase,
    camera: &CameraModel,
    attitude: &RotationMatrix,
    t: f64,
    opts: &FrameOptions,
    rng: &mut R,
) -> SimFrame {
    let sigma = if opts.noise { camera.centroid_sigma } else { 0.0 };
    let mut items: Vec<(UnitVec3, Option<StarIndex>)> = visible_stars(db, camera, attitude)
        .into_iter()
        .map(|(b, s)| (perturb(&b, sigma, rng), Some(s)))
        .collect();
    let n_spikes = match opts.spikes {
        SpikeCount::Uniform => rng.random_range(0..=camera.spike_count_max),
        SpikeCount::Exactly(n) => n,
    };
    for _ in 0..n_spikes {
        items.push((random_spike(camera, rng), None));
    }
    items.shuffle(rng);
    let (observations, truth) = items.into_iter().unzip();
    SimFrame {
        frame: Frame::new(t, observations),
        truth,
        attitude: *attitude,
    }
}

/// Rest-to-rest single-axis profile. Returns `(θ, θ̇)` at `t`.
pub fn bang_bang_theta(t: f64, theta_f: f64, theta_dot_max: f64) -> Result<(f64, f64), SimError> {
    let t_f = 2.0 * theta_f / theta_dot_max;
    if !(0.0..=t_f).contains(&t) {
        return Err(SimError::OutOfDomain { t, t_f });
    }
    let u = 4.0 * theta_f / (t_f * t_f);
    if t <= 0.5 * t_f {
        Ok((0.5 * u * t * t, u * t))
    } else {
        Ok((-0.25 * (2.0 * t * t - 4.0 * t * t_f + t_f * t_f) * u, u * (t_f - t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Camera fixed to a rotating planet, boresight at the local zenith of a
    /// random site.
    StellarCompass { rate: f64 },
    /// Random attitude spinning about a random axis.
    Geo { rate: f64 },
    /// Rest-to-rest reorientation about a random axis.
    BangBang { theta_f: f64, theta_dot_max: f64 },
    /// Inertial rate `base` until `switch_time`, then `base + ramp·(t − switch_time)`.
    TimeVarying {
        base: [f64; 3],
        ramp: [f64; 3],
        switch_time: f64,
        integration_step: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub duration: f64,
    pub sample_period: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub frames: FrameOptions,
}

impl ScenarioConfig {
    pub fn stellar_compass(sample_period: f64, duration: f64) -> Self {
        Self {
            scenario: ScenarioKind::StellarCompass { rate: EARTH_RATE },
            duration,
            sample_period,
            seed: 0,
            frames: FrameOptions::default(),
        }
    }

    pub fn geo(sample_period: f64, duration: f64) -> Self {
        Self {
            scenario: ScenarioKind::Geo { rate: EARTH_RATE },
            ..Self::stellar_compass(sample_period, duration)
        }
    }

    /// 10° maneuver at up to 0.15°/s.
    pub fn bang_bang(sample_period: f64) -> Self {
        let theta_f = 10f64.to_radians();
        let theta_dot_max = 0.15f64.to_radians();
        Self {
            scenario: ScenarioKind::BangBang { theta_f, theta_dot_max },
            duration: 2.0 * theta_f / theta_dot_max,
            ..Self::stellar_compass(sample_period, 0.0)
        }
    }

    /// Two minutes: 3°/s about inertial x, ramping off-axis after 30 s.
    pub fn time_varying(sample_period: f64) -> Self {
        let d = 1f64.to_radians();
        Self {
            scenario: ScenarioKind::TimeVarying {
                base: [3.0 * d, 0.0, 0.0],
                ramp: [0.0, 0.003 * d, -0.0015 * d],
                switch_time: 30.0,
                integration_step: 0.01,
            },
            duration: 120.0,
            ..Self::stellar_compass(sample_period, 0.0)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::BadConfig("duration must be positive".into()));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(SimError::BadConfig("sample_period must be positive".into()));
        }
        match self.scenario {
            ScenarioKind::BangBang { theta_f, theta_dot_max } => {
                if !(theta_f > 0.0 && theta_dot_max > 0.0) {
                    return Err(SimError::BadConfig("bang-bang parameters must be positive".into()));
                }
                let t_f = 2.0 * theta_f / theta_dot_max;
                if self.duration > t_f * (1.0 + 1e-12) {
                    return Err(SimError::BadConfig(format!("duration exceeds maneuver time {t_f}")));
                }
            }
            ScenarioKind::TimeVarying { integration_step, .. } if !(integration_step > 0.0) => {
                return Err(SimError::BadConfig("integration_step must be positive".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Sample epochs `0, T, 2T, …` up to the duration.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = (self.duration / self.sample_period + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.sample_period).collect()
    }

    pub fn rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }
}

/// Ground-truth attitude history of one trial.
#[derive(Debug, Clone)]
pub enum Trajectory {
    Spin {
        c0: RotationMatrix,
        omega: AngularVelocity,
    },
    BangBang {
        c0: RotationMatrix,
        axis: UnitVec3,
        theta_f: f64,
        theta_dot_max: f64,
    },
    Integrated {
        /// Attitude at every integration node.
        nodes: Vec<Quaternion>,
        step: f64,
        base: Vector3<f64>,
        ramp: Vector3<f64>,
        switch_time: f64,
    },
}

impl Trajectory {
    pub fn new<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Self {
        match cfg.scenario {
            ScenarioKind::StellarCompass { rate } => {
                // Body frame fixed to the planet; zenith of a uniform random
                // site with random roll about the boresight.
                let zenith = random_unit(rng);
                let c_roll = RotationMatrix::about_axis(&UnitVec3::z_axis(), rng.random_range(0.0..2.0 * PI));
                let c_site = c_roll * site_frame(&zenith);
                let axis = c_site.apply(&UnitVec3::z_axis());
                Trajectory::Spin {
                    c0: c_site,
                    omega: AngularVelocity::new(axis, rate),
                }
            }
            ScenarioKind::Geo { rate } => Trajectory::Spin {
                c0: random_attitude(rng),
                omega: AngularVelocity::new(random_unit(rng), rate),
            },
            ScenarioKind::BangBang { theta_f, theta_dot_max } => Trajectory::BangBang {
                c0: random_attitude(rng),
                axis: random_unit(rng),
                theta_f,
                theta_dot_max,
            },
            ScenarioKind::TimeVarying {
                base,
                ramp,
                switch_time,
                integration_step,
            } => {
                let q0 = random_attitude(rng).to_quaternion();
                let base = Vector3::from(base);
                let ramp = Vector3::from(ramp);
                let n = (cfg.duration / integration_step).ceil() as usize + 1;
                let mut nodes = Vec::with_capacity(n + 1);
                let mut q = q0;
                nodes.push(q);
                for i in 0..n {
                    let t_mid = (i as f64 + 0.5) * integration_step;
                    let w = inertial_rate(base, ramp, switch_time, t_mid);
                    q = q.compose(&exp_map(&(w * integration_step))).normalized();
                    nodes.push(q);
                }
                Trajectory::Integrated {
                    nodes,
                    step: integration_step,
                    base,
                    ramp,
                    switch_time,
                }
            }
        }
    }

    /// True attitude and true angular velocity (camera frame, rad/s).
    pub fn state(&self, t: f64) -> (RotationMatrix, Vector3<f64>) {
        match self {
            Trajectory::Spin { c0, omega } => (
                RotationMatrix::about_axis(&omega.axis, omega.rate * t) * *c0,
                omega.vector(),
            ),
            Trajectory::BangBang {
                c0,
                axis,
                theta_f,
                theta_dot_max,
            } => {
                let t_f = 2.0 * theta_f / theta_dot_max;
                let (th, thd) = bang_bang_theta(t.clamp(0.0, t_f), *theta_f, *theta_dot_max).unwrap();
                (RotationMatrix::about_axis(axis, th) * *c0, axis.as_vector() * thd)
            }
            Trajectory::Integrated {
                nodes,
                step,
                base,
                ramp,
                switch_time,
            } => {
                let i = ((t / step).floor() as usize).min(nodes.len() - 1);
                let rem = t - i as f64 * step;
                let mut q = nodes[i];
                if rem > 1e-12 * step.max(1.0) {
                    let w = inertial_rate(*base, *ramp, *switch_time, i as f64 * step + 0.5 * rem);
                    q = q.compose(&exp_map(&(w * rem))).normalized();
                }
                let c = q.to_rotation_matrix();
                let w_i = inertial_rate(*base, *ramp, *switch_time, t);
                (c, c.matrix() * w_i)
            }
        }
    }
}

fn inertial_rate(base: Vector3<f64>, ramp: Vector3<f64>, switch_time: f64, t: f64) -> Vector3<f64> {
    if t < switch_time {
        base
    } else {
        base + ramp * (t - switch_time)
    }
}

/// Quaternion of the rotation vector `v` (angle `|v|` about `v/|v|`).
fn exp_map(v: &Vector3<f64>) -> Quaternion {
    let a = v.norm();
    if a < 1e-300 {
        return Quaternion::identity();
    }
    let s = (0.5 * a).sin() / a;
    Quaternion::new(v.x * s, v.y * s, v.z * s, (0.5 * a).cos())
}

/// Attitude whose +z axis is `zenith`.
fn site_frame(zenith: &UnitVec3) -> RotationMatrix {
    let z = *zenith.as_vector();
    let helper = if z.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    RotationMatrix::from_matrix_unchecked(nalgebra::Matrix3::from_rows(&[
        x.transpose(),
        y.transpose(),
        z.transpose(),
    ]))
}

#[derive(Debug, Clone)]
pub struct ScenarioSample {
    pub sim: SimFrame,
    /// True camera-frame angular velocity, rad/s.
    pub omega: Vector3<f64>,
}

/// All frames of one trial. Deterministic in `(cfg.seed, trial)`.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    trial: u64,
    db: &StarDatabase,
    camera: &CameraModel,
) -> Result<Vec<ScenarioSample>, SimError> {
    cfg.validate()?;
    let mut rng = cfg.rng(trial);
    let traj = Trajectory::new(cfg, &mut rng);
    Ok(cfg
        .sample_times()
        .into_iter()
        .map(|t| {
            let (c, w) = traj.state(t);
            ScenarioSample {
                sim: generate_frame(db, camera, &c, t, &cfg.frames, &mut rng),
                omega: w,
            }
        })
        .collect())
}
