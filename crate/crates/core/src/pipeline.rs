//! The tracking loop: gate, identify (lost-in-space or recursive), solve
//! attitude, update the quaternion window and the rate estimate.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::attitude::{solve_wahba, Quaternion, UnitVec3, ARCSEC_PER_RAD};
use crate::camera::CameraModel;
use crate::catalog::StarDatabase;
use crate::pyramid::{pyramid_identify, Frame, IdResult, PyramidConfig};
use crate::quatera::{quatera_estimate, OmegaEstimate, QuaternionWindow, QuateraConfig, DEFAULT_N_MAX};
use crate::rsi::{rsi_identify, AbortReason, RsiConfig, RsiState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub camera: CameraModel,
    pub pyramid: PyramidConfig,
    pub rsi: RsiConfig,
    pub quatera: QuateraConfig,
    pub window_capacity: usize,
    /// Frames need strictly more observations than this to be processed.
    pub min_observations: usize,
    /// Clear the window and restart initialization after a recursive abort.
    pub reset_on_abort: bool,
    /// Drop window entries older than this many seconds before appending.
    pub max_window_age: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            pyramid: PyramidConfig::default(),
            rsi: RsiConfig::default(),
            quatera: QuateraConfig::default(),
            window_capacity: DEFAULT_N_MAX,
            min_observations: 3,
            reset_on_abort: false,
            max_window_age: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub pyramid_calls: usize,
    pub pyramid_failures: usize,
    pub rsi_calls: usize,
    pub rsi_aborts: usize,
    pub frames_skipped: usize,
    pub quatera_failures: usize,
    /// Successfully identified frames over the whole run.
    pub valid_frames: usize,
}

impl PipelineStats {
    /// Pyramid calls made because recursive identification aborted.
    pub fn fallback_calls(&self) -> usize {
        self.rsi_aborts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMethod {
    Skipped,
    Pyramid,
    Recursive,
    /// Recursive identification aborted and Pyramid ran on the same frame.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: f64,
    pub method: StepMethod,
    pub success: bool,
    pub abort: Option<AbortReason>,
    pub n_identified: usize,
    pub n_spikes_discarded: usize,
    pub attitude: Option<Quaternion>,
    pub estimate: Option<OmegaEstimate>,
    pub window_n: usize,
    pub k: usize,
    /// Whether Pyramid ran on this frame.
    pub pyramid_called: bool,
    #[serde(skip)]
    pub id: Option<IdResult>,
}

pub struct Pipeline<'a> {
    db: &'a StarDatabase,
    cfg: PipelineConfig,
    k: usize,
    window: QuaternionWindow,
    rsi_state: Option<RsiState>,
    last_estimate: Option<OmegaEstimate>,
    stats: PipelineStats,
}

impl<'a> Pipeline<'a> {
    pub fn new(db: &'a StarDatabase, cfg: PipelineConfig) -> Self {
        let window = QuaternionWindow::new(cfg.window_capacity.max(2)).expect("capacity ≥ 2");
        Self {
            db,
            cfg,
            k: 0,
            window,
            rsi_state: None,
            last_estimate: None,
            stats: PipelineStats::default(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.stats
    }

    pub fn window(&self) -> &QuaternionWindow {
        &self.window
    }

    pub fn last_estimate(&self) -> Option<&OmegaEstimate> {
        self.last_estimate.as_ref()
    }

    pub fn rsi_state(&self) -> Option<&RsiState> {
        self.rsi_state.as_ref()
    }

    fn restart(&mut self) {
        self.k = 0;
        self.window.clear();
        self.rsi_state = None;
        self.last_estimate = None;
    }

    pub fn step(&mut self, frame: &Frame) -> StepReport {
        let mut report = StepReport {
            t: frame.time,
            method: StepMethod::Skipped,
            success: false,
            abort: None,
            n_identified: 0,
            n_spikes_discarded: 0,
            attitude: None,
            estimate: self.last_estimate,
            window_n: self.window.len(),
            k: self.k,
            pyramid_called: false,
            id: None,
        };
        if frame.len() <= self.cfg.min_observations {
            self.stats.frames_skipped += 1;
            return report;
        }

        let mut identified: Option<(IdResult, Option<Quaternion>)> = None;
        let recursive_ready = self.k > 1 && self.rsi_state.is_some();
        if recursive_ready {
            self.stats.rsi_calls += 1;
            report.method = StepMethod::Recursive;
            let state = self.rsi_state.as_ref().unwrap();
            match rsi_identify(state, frame, &self.cfg.rsi, self.db, &self.cfg.camera) {
                Ok(out) => identified = Some((out.id, Some(out.solution.quaternion))),
                Err(a) => {
                    self.stats.rsi_aborts += 1;
                    report.abort = Some(a.reason);
                    report.method = StepMethod::Fallback;
                    if self.cfg.reset_on_abort {
                        self.restart();
                    }
                }
            }
        } else {
            report.method = StepMethod::Pyramid;
        }

        if identified.is_none() {
            report.pyramid_called = true;
            self.stats.pyramid_calls += 1;
            match pyramid_identify(frame, self.db, &self.cfg.pyramid) {
                Ok(id) => identified = Some((id, None)),
                Err(_) => self.stats.pyramid_failures += 1,
            }
        }

        let Some((id, q)) = identified else {
            report.window_n = self.window.len();
            report.k = self.k;
            return report;
        };
        let q = match q {
            Some(q) => Some(q),
            None => self.solve(frame, &id),
        };
        let Some(q) = q else {
            report.window_n = self.window.len();
            report.k = self.k;
            return report;
        };

        if let Some(age) = self.cfg.max_window_age {
            while self.window.entries().next().is_some_and(|(t, _)| frame.time - t > age) {
                self.window.drop_oldest();
            }
        }
        if self.window.push(frame.time, q).is_err() {
            report.window_n = self.window.len();
            report.k = self.k;
            return report;
        }

        if self.window.len() >= 2 {
            match quatera_estimate(&mut self.window, &self.cfg.quatera) {
                Ok(est) => self.last_estimate = Some(est),
                Err(_) => self.stats.quatera_failures += 1,
            }
        }
        let attitude = q.to_rotation_matrix();
        self.rsi_state = self
            .last_estimate
            .map(|om| RsiState::new(frame, &id, attitude, om));

        self.k += 1;
        self.stats.valid_frames += 1;
        report.success = true;
        report.n_identified = id.n_identified;
        report.n_spikes_discarded = id.n_spikes();
        report.attitude = Some(q);
        report.estimate = self.last_estimate;
        report.window_n = self.window.len();
        report.k = self.k;
        report.id = Some(id);
        report
    }

    fn solve(&self, frame: &Frame, id: &IdResult) -> Option<Quaternion> {
        let (obs, refs): (Vec<UnitVec3>, Vec<UnitVec3>) = id
            .identified()
            .map(|(o, s)| (frame.observations[o], *self.db.direction(s)))
            .unzip();
        let w = vec![1.0; obs.len()];
        solve_wahba(&obs, &refs, &w).ok().map(|s| s.quaternion)
    }
}

/// When to stop a run early.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub max_valid_frames: Option<usize>,
    pub max_time: Option<f64>,
}

/// One row of a run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub t: f64,
    pub method: StepMethod,
    pub success: bool,
    pub abort: Option<AbortReason>,
    pub n_identified: usize,
    pub n_spikes_discarded: usize,
    pub axis_err_arcsec: Option<f64>,
    /// `|Ω̂ − |ω||`, rad/s.
    pub rate_err: Option<f64>,
    pub window_n: usize,
    pub pyramid_called: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<FrameRow>,
    pub stats: PipelineStats,
}

impl RunReport {
    /// Percentage of frames on which Pyramid ran because recursion failed,
    /// relative to recursive attempts.
    pub fn fallback_percent(&self) -> f64 {
        if self.stats.rsi_calls == 0 {
            0.0
        } else {
            100.0 * self.stats.rsi_aborts as f64 / self.stats.rsi_calls as f64
        }
    }
}

/// Axis and rate error of `est` against a true camera-frame rate vector.
pub fn estimate_errors(est: &OmegaEstimate, truth: &Vector3<f64>) -> (Option<f64>, f64) {
    let rate = truth.norm();
    let axis_err = UnitVec3::normalize(*truth)
        .ok()
        .map(|a| est.axis.angle_to(&a) * ARCSEC_PER_RAD);
    (axis_err, (est.magnitude - rate).abs())
}

/// Steps through `frames` until exhausted or a stop criterion fires.
/// `truth` supplies the true camera-frame rate per frame when available.
pub fn run<'f>(
    pipeline: &mut Pipeline<'_>,
    frames: impl IntoIterator<Item = (&'f Frame, Option<Vector3<f64>>)>,
    stop: &StopCriteria,
) -> RunReport {
    let mut rows = Vec::new();
    for (frame, truth) in frames {
        if stop.max_time.is_some_and(|t| frame.time > t)
            || stop.max_valid_frames.is_some_and(|n| pipeline.stats().valid_frames >= n)
        {
            break;
        }
        let r = pipeline.step(frame);
        let (axis_err_arcsec, rate_err) = match (r.success.then_some(r.estimate).flatten(), truth) {
            (Some(est), Some(w)) => {
                let (a, e) = estimate_errors(&est, &w);
                (a, Some(e))
            }
            _ => (None, None),
        };
        rows.push(FrameRow {
            t: r.t,
            method: r.method,
            success: r.success,
            abort: r.abort,
            n_identified: r.n_identified,
            n_spikes_discarded: r.n_spikes_discarded,
            axis_err_arcsec,
            rate_err,
            window_n: r.window_n,
            pyramid_called: r.pyramid_called,
        });
    }
    RunReport {
        rows,
        stats: *pipeline.stats(),
    }
}
