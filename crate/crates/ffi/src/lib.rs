//! C ABI over the startrack library.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns an [`StStatus`];
//! on failure [`st_last_error_message`] describes the error for the calling
//! thread. Directions are passed as packed `x, y, z` triples in the camera
//! frame, quaternions as packed `x, y, z, w` with the scalar last.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use startrack::attitude::{Quaternion, UnitVec3};
use startrack::catalog::{open_database, StarDatabase};
use startrack::pipeline::{Pipeline, PipelineConfig, StepMethod};
use startrack::pyramid::{pyramid_identify, Assignment, Frame, PyramidConfig};
use startrack::quatera::{quatera_estimate, QuateraConfig, QuaternionWindow};
use startrack::CameraModel;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    NoIdentification = 4,
    EstimationFailed = 5,
    Panic = 6,
}

/// Catalog id slot value for an observation that could not be identified.
pub const ST_UNIDENTIFIED: i64 = -1;
/// Catalog id slot value for an observation rejected as a false star.
pub const ST_SPIKE: i64 = -2;

/// Identification path taken by a pipeline step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StMethod {
    Skipped = 0,
    Pyramid = 1,
    Recursive = 2,
    Fallback = 3,
}

/// Star catalog and pair database.
pub struct StDatabase {
    db: StarDatabase,
}

/// Tracking loop state. Borrows the database it was created from.
pub struct StPipeline {
    pipeline: Pipeline<'static>,
}

/// Angular-velocity estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct StRateEstimate {
    /// Unit rotation axis in the camera frame.
    pub axis: [f64; 3],
    /// Rate magnitude, rad/s.
    pub rate: f64,
    /// One-sigma rate uncertainty, rad/s; negative when unavailable.
    pub sigma_rate: f64,
    /// Samples used after window adaptation.
    pub window_n: usize,
}

/// Outcome of one pipeline step.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StStepResult {
    /// 1 when the frame was identified and an attitude produced.
    pub success: i32,
    pub method: StMethod,
    pub n_identified: usize,
    pub n_spikes: usize,
    /// Inertial-to-camera attitude, scalar last; zero when `success` is 0.
    pub quaternion: [f64; 4],
    /// 1 when `rate` holds an estimate.
    pub has_rate: i32,
    pub rate: StRateEstimate,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(status: StStatus, msg: impl Into<String>) -> StStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `StStatus::Panic`.
fn guard(f: impl FnOnce() -> StStatus) -> StStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(StStatus::Panic, "internal panic"),
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn st_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `xyz` must point to `3·n` readable doubles.
unsafe fn read_directions(xyz: *const f64, n: usize) -> Result<Vec<UnitVec3>, StStatus> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if xyz.is_null() {
        return Err(fail(StStatus::NullPointer, "observation array is null"));
    }
    let raw = std::slice::from_raw_parts(xyz, 3 * n);
    raw.chunks_exact(3)
        .map(|c| UnitVec3::from_xyz(c[0], c[1], c[2]))
        .collect::<Result<_, _>>()
        .map_err(|e| fail(StStatus::InvalidArgument, format!("observation: {e}")))
}

/// Opens a CSV catalog or binary pair database at `path`, or the bundled
/// catalog when `path` is null, keeping stars brighter than `magnitude`.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_database_open(path: *const c_char, magnitude: f64, out: *mut *mut StDatabase) -> StStatus {
    guard(|| {
        if out.is_null() {
            return fail(StStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = if path.is_null() {
            None
        } else {
            match CStr::from_ptr(path).to_str() {
                Ok(s) => Some(Path::new(s)),
                Err(_) => return fail(StStatus::InvalidArgument, "path is not UTF-8"),
            }
        };
        let fov = CameraModel::default().fov_diagonal();
        match open_database(path, magnitude, fov) {
            Ok(db) => {
                *out = Box::into_raw(Box::new(StDatabase { db }));
                StStatus::Ok
            }
            Err(e) => fail(StStatus::Io, e.to_string()),
        }
    })
}

/// # Safety
/// `db` must be null or a handle from `st_database_open` not yet freed, and
/// no pipeline created from it may still be alive.
#[no_mangle]
pub unsafe extern "C" fn st_database_free(db: *mut StDatabase) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Number of stars in the database, or 0 for a null handle.
///
/// # Safety
/// `db` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_database_star_count(db: *const StDatabase) -> usize {
    db.as_ref().map_or(0, |d| d.db.stars().len())
}

/// Number of catalogued star pairs, or 0 for a null handle.
///
/// # Safety
/// `db` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn st_database_pair_count(db: *const StDatabase) -> usize {
    db.as_ref().map_or(0, |d| d.db.pairs().len())
}

/// Identifies `n` observed directions in lost-in-space mode. `ids_out[i]`
/// receives the catalog id of observation `i`, `ST_SPIKE` or
/// `ST_UNIDENTIFIED`.
///
/// # Safety
/// `db` must be live, `xyz` must hold `3·n` doubles and `ids_out` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn st_pyramid_identify(
    db: *const StDatabase,
    xyz: *const f64,
    n: usize,
    ids_out: *mut i64,
) -> StStatus {
    guard(|| {
        let Some(db) = db.as_ref() else {
            return fail(StStatus::NullPointer, "database is null");
        };
        if ids_out.is_null() && n > 0 {
            return fail(StStatus::NullPointer, "ids_out is null");
        }
        let obs = match read_directions(xyz, n) {
            Ok(o) => o,
            Err(s) => return s,
        };
        let frame = Frame::new(0.0, obs);
        let id = match pyramid_identify(&frame, &db.db, &PyramidConfig::default()) {
            Ok(id) => id,
            Err(e) => return fail(StStatus::NoIdentification, e.to_string()),
        };
        let out = std::slice::from_raw_parts_mut(ids_out, n);
        for (slot, a) in out.iter_mut().zip(&id.ids) {
            *slot = match a {
                Assignment::Star(s) => db.db.star(*s).catalog_id as i64,
                Assignment::Spike => ST_SPIKE,
                Assignment::Unidentified => ST_UNIDENTIFIED,
            };
        }
        StStatus::Ok
    })
}

/// Creates a tracking loop with default settings.
///
/// # Safety
/// `db` must stay alive until the pipeline is freed; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_pipeline_new(db: *const StDatabase, out: *mut *mut StPipeline) -> StStatus {
    guard(|| {
        if out.is_null() {
            return fail(StStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(db) = db.as_ref() else {
            return fail(StStatus::NullPointer, "database is null");
        };
        // The caller guarantees the database outlives the pipeline.
        let db: &'static StarDatabase = &*(&db.db as *const StarDatabase);
        let pipeline = Pipeline::new(db, PipelineConfig::default());
        *out = Box::into_raw(Box::new(StPipeline { pipeline }));
        StStatus::Ok
    })
}

/// # Safety
/// `p` must be null or a handle from `st_pipeline_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn st_pipeline_free(p: *mut StPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Processes one frame taken at time `t` (seconds, increasing).
///
/// # Safety
/// `p` must be live, `xyz` must hold `3·n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_pipeline_step(
    p: *mut StPipeline,
    t: f64,
    xyz: *const f64,
    n: usize,
    out: *mut StStepResult,
) -> StStatus {
    guard(|| {
        let Some(p) = p.as_mut() else {
            return fail(StStatus::NullPointer, "pipeline is null");
        };
        if out.is_null() {
            return fail(StStatus::NullPointer, "out is null");
        }
        if !t.is_finite() {
            return fail(StStatus::InvalidArgument, "time is not finite");
        }
        let obs = match read_directions(xyz, n) {
            Ok(o) => o,
            Err(s) => return s,
        };
        let r = p.pipeline.step(&Frame::new(t, obs));
        let est = r.estimate;
        *out = StStepResult {
            success: r.success as i32,
            method: match r.method {
                StepMethod::Skipped => StMethod::Skipped,
                StepMethod::Pyramid => StMethod::Pyramid,
                StepMethod::Recursive => StMethod::Recursive,
                StepMethod::Fallback => StMethod::Fallback,
            },
            n_identified: r.n_identified,
            n_spikes: r.n_spikes_discarded,
            quaternion: r.attitude.map_or([0.0; 4], |q| {
                let v = q.to_vector4();
                [v[0], v[1], v[2], v[3]]
            }),
            has_rate: est.is_some() as i32,
            rate: est.map_or(StRateEstimate::default(), |e| rate_estimate(&e)),
        };
        StStatus::Ok
    })
}

fn rate_estimate(e: &startrack::quatera::OmegaEstimate) -> StRateEstimate {
    let a = e.axis.as_vector();
    StRateEstimate {
        axis: [a.x, a.y, a.z],
        rate: e.magnitude,
        sigma_rate: if e.degenerate_covariance { -1.0 } else { e.sigma_rate() },
        window_n: e.window_n,
    }
}

/// Estimates the angular velocity from `n` time-tagged quaternions. The
/// window shrinks from the oldest sample until the third singular value
/// falls below `tolerance`; pass 0 for the default tolerance.
///
/// # Safety
/// `times` must hold `n` doubles, `xyzw` `4·n` doubles, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_quatera_estimate(
    times: *const f64,
    xyzw: *const f64,
    n: usize,
    tolerance: f64,
    out: *mut StRateEstimate,
) -> StStatus {
    guard(|| {
        if times.is_null() || xyzw.is_null() || out.is_null() {
            return fail(StStatus::NullPointer, "null argument");
        }
        if n < 2 {
            return fail(StStatus::InvalidArgument, "need at least two quaternions");
        }
        if !(tolerance >= 0.0) {
            return fail(StStatus::InvalidArgument, "tolerance must be non-negative");
        }
        let mut cfg = QuateraConfig::default();
        if tolerance > 0.0 {
            cfg.tolerance_sigma3 = tolerance;
        }
        let ts = std::slice::from_raw_parts(times, n);
        let qs = std::slice::from_raw_parts(xyzw, 4 * n);
        let mut window = match QuaternionWindow::new(n) {
            Ok(w) => w,
            Err(e) => return fail(StStatus::InvalidArgument, e.to_string()),
        };
        for (t, q) in ts.iter().zip(qs.chunks_exact(4)) {
            let q = Quaternion::new(q[0], q[1], q[2], q[3]).normalized();
            if let Err(e) = window.push(*t, q) {
                return fail(StStatus::InvalidArgument, e.to_string());
            }
        }
        match quatera_estimate(&mut window, &cfg) {
            Ok(e) => {
                *out = rate_estimate(&e);
                StStatus::Ok
            }
            Err(e) => fail(StStatus::EstimationFailed, e.to_string()),
        }
    })
}
