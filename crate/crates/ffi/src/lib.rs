//! C ABI over the crashcast engine.
//!
//! An engine is an opaque `CcastEngine*` from `ccast_engine_new`, released
//! with `ccast_engine_free`. Every fallible call returns a `CcastStatus`; on
//! failure `ccast_last_error` describes the problem for the calling thread.
//!
//! Alerts from the most recent `ccast_engine_step` are read by index with
//! `ccast_engine_alert`. The id strings they point at are owned by the engine
//! and stay valid until the next step or free.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crashcast::{
    BBox, ClassLabel, CollisionAlert, Engine, EngineConfig, Gating, ObjectId, ObjectState, PredictorSpec, StepError,
};

pub const CCAST_CLASS_CAR: u32 = 0;
pub const CCAST_CLASS_BUS: u32 = 1;
pub const CCAST_CLASS_PEDESTRIAN: u32 = 2;
pub const CCAST_CLASS_OTHER: u32 = 3;

pub const CCAST_GATING_INTERSECT_ONLY: u32 = 0;
pub const CCAST_GATING_DEVIATION_GATED: u32 = 1;

pub const CCAST_PREDICTOR_CONSTANT_VELOCITY: u32 = 0;
pub const CCAST_PREDICTOR_LEAST_SQUARES: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcastStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidConfig = 2,
    InvalidArgument = 3,
    OutOfOrder = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// Engine settings. Start from `ccast_config_default()` and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcastConfig {
    /// States kept per object.
    pub history: u32,
    /// Frames predicted per round.
    pub horizon: u32,
    /// Predictions run on frames divisible by this.
    pub cadence: u32,
    pub fps: f64,
    /// `CCAST_GATING_*`.
    pub gating: u32,
    pub overlap_margin: f64,
    pub dedup_cooldown: u32,
    /// `CCAST_PREDICTOR_*`.
    pub predictor: u32,
    /// Velocity span for constant velocity, polynomial degree for least squares.
    pub predictor_param: u32,
    pub eps_move: f64,
    pub min_obs: u32,
    pub max_gap: u32,
}

/// Center-size box in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcastBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CcastObservation {
    /// NUL-terminated UTF-8.
    pub object_id: *const c_char,
    /// `CCAST_CLASS_*`; unknown values map to other.
    pub class_label: u32,
    pub bbox: CcastBox,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CcastAlert {
    pub emitted_at: u64,
    pub predicted_frame: u64,
    pub lead_frames: u64,
    /// Pair members in lexicographic order; owned by the engine.
    pub id_a: *const c_char,
    pub id_b: *const c_char,
    pub class_a: u32,
    pub class_b: u32,
    /// Predicted collision location.
    pub cx: f64,
    pub cy: f64,
}

/// Opaque engine handle.
pub struct CcastEngine {
    engine: Engine,
    alerts: Vec<CollisionAlert>,
    ids: Vec<(CString, CString)>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: CcastStatus, msg: impl Into<String>) -> CcastStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CcastStatus) -> CcastStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(CcastStatus::Panic, "internal panic"))
}

fn class_from_u32(v: u32) -> ClassLabel {
    match v {
        CCAST_CLASS_CAR => ClassLabel::Car,
        CCAST_CLASS_BUS => ClassLabel::Bus,
        CCAST_CLASS_PEDESTRIAN => ClassLabel::Pedestrian,
        _ => ClassLabel::Other,
    }
}

fn class_to_u32(c: ClassLabel) -> u32 {
    match c {
        ClassLabel::Car => CCAST_CLASS_CAR,
        ClassLabel::Bus => CCAST_CLASS_BUS,
        ClassLabel::Pedestrian => CCAST_CLASS_PEDESTRIAN,
        ClassLabel::Other => CCAST_CLASS_OTHER,
    }
}

fn engine_config(c: &CcastConfig) -> Result<EngineConfig, String> {
    let gating = match c.gating {
        CCAST_GATING_INTERSECT_ONLY => Gating::IntersectOnly,
        CCAST_GATING_DEVIATION_GATED => Gating::DeviationGated,
        other => return Err(format!("unknown gating mode {other}")),
    };
    let predictor = match c.predictor {
        CCAST_PREDICTOR_CONSTANT_VELOCITY => PredictorSpec::constant_velocity(c.predictor_param as usize),
        CCAST_PREDICTOR_LEAST_SQUARES => PredictorSpec::least_squares(c.predictor_param as usize),
        other => return Err(format!("unknown predictor {other}")),
    };
    let cfg = EngineConfig {
        history: c.history as usize,
        horizon: c.horizon as usize,
        cadence: c.cadence.into(),
        fps: c.fps,
        gating,
        overlap_margin: c.overlap_margin,
        dedup_cooldown: c.dedup_cooldown.into(),
        predictor,
        eps_move: c.eps_move,
        min_obs: c.min_obs as usize,
        max_gap: c.max_gap.into(),
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn to_bbox(b: &CcastBox) -> Result<BBox, String> {
    BBox::new(b.cx, b.cy, b.w, b.h).map_err(|e| e.to_string())
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_id(p: *const c_char) -> Result<ObjectId, String> {
    if p.is_null() {
        return Err("null object id".into());
    }
    CStr::from_ptr(p).to_str().map(ObjectId::new).map_err(|_| "object id is not UTF-8".into())
}

/// Defaults: history 10, horizon 20, cadence 5, 30 fps, intersect-only,
/// constant velocity over 3 steps.
#[no_mangle]
pub extern "C" fn ccast_config_default() -> CcastConfig {
    let d = EngineConfig::default();
    CcastConfig {
        history: d.history as u32,
        horizon: d.horizon as u32,
        cadence: d.cadence as u32,
        fps: d.fps,
        gating: CCAST_GATING_INTERSECT_ONLY,
        overlap_margin: d.overlap_margin,
        dedup_cooldown: d.dedup_cooldown as u32,
        predictor: CCAST_PREDICTOR_CONSTANT_VELOCITY,
        predictor_param: d.predictor.k as u32,
        eps_move: d.eps_move,
        min_obs: d.min_obs as u32,
        max_gap: d.max_gap as u32,
    }
}

/// Message for the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ccast_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `config` must point to a `CcastConfig`; `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ccast_engine_new(config: *const CcastConfig, out: *mut *mut CcastEngine) -> CcastStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return fail(CcastStatus::NullArgument, "config and out must be non-null");
        }
        *out = ptr::null_mut();
        let cfg = match engine_config(&*config) {
            Ok(c) => c,
            Err(m) => return fail(CcastStatus::InvalidConfig, m),
        };
        match Engine::new(cfg) {
            Ok(engine) => {
                *out = Box::into_raw(Box::new(CcastEngine { engine, alerts: Vec::new(), ids: Vec::new() }));
                CcastStatus::Ok
            }
            Err(e) => fail(CcastStatus::InvalidConfig, e.to_string()),
        }
    })
}

/// # Safety
/// `engine` must be null or a handle from `ccast_engine_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ccast_engine_free(engine: *mut CcastEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Feeds one frame. Frames must strictly increase across calls. `n_alerts`
/// (optional) receives the number of alerts raised by this frame.
///
/// # Safety
/// `observations` must point to `len` valid entries (or be null with `len` 0).
#[no_mangle]
pub unsafe extern "C" fn ccast_engine_step(
    engine: *mut CcastEngine,
    frame: u64,
    observations: *const CcastObservation,
    len: usize,
    n_alerts: *mut usize,
) -> CcastStatus {
    guard(|| {
        let Some(h) = engine.as_mut() else {
            return fail(CcastStatus::NullArgument, "null engine");
        };
        if observations.is_null() && len > 0 {
            return fail(CcastStatus::NullArgument, "null observations with non-zero length");
        }
        h.alerts.clear();
        h.ids.clear();
        if !n_alerts.is_null() {
            *n_alerts = 0;
        }
        let raw = if len == 0 { &[][..] } else { std::slice::from_raw_parts(observations, len) };
        let mut states = Vec::with_capacity(len);
        for (i, o) in raw.iter().enumerate() {
            let id = match read_id(o.object_id) {
                Ok(id) => id,
                Err(m) => return fail(CcastStatus::InvalidArgument, format!("observation {i}: {m}")),
            };
            let bbox = match to_bbox(&o.bbox) {
                Ok(b) => b,
                Err(m) => return fail(CcastStatus::InvalidArgument, format!("observation {i}: {m}")),
            };
            states.push(ObjectState::new(frame, id, class_from_u32(o.class_label), bbox));
        }
        match h.engine.step(frame, &states) {
            Ok(alerts) => {
                h.ids = alerts
                    .iter()
                    .map(|a| {
                        let c = |id: &ObjectId| CString::new(id.as_str()).unwrap_or_default();
                        (c(&a.pair.0), c(&a.pair.1))
                    })
                    .collect();
                h.alerts = alerts;
                if !n_alerts.is_null() {
                    *n_alerts = h.alerts.len();
                }
                CcastStatus::Ok
            }
            Err(e @ StepError::Track(_)) => fail(CcastStatus::InvalidArgument, e.to_string()),
            Err(e) => fail(CcastStatus::OutOfOrder, e.to_string()),
        }
    })
}

/// Copies alert `index` of the last step into `out`.
///
/// # Safety
/// `engine` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccast_engine_alert(
    engine: *const CcastEngine,
    index: usize,
    out: *mut CcastAlert,
) -> CcastStatus {
    guard(|| {
        let Some(h) = engine.as_ref() else {
            return fail(CcastStatus::NullArgument, "null engine");
        };
        if out.is_null() {
            return fail(CcastStatus::NullArgument, "null out");
        }
        let Some(a) = h.alerts.get(index) else {
            return fail(CcastStatus::OutOfRange, format!("alert {index} of {}", h.alerts.len()));
        };
        let (ia, ib) = &h.ids[index];
        *out = CcastAlert {
            emitted_at: a.emitted_at,
            predicted_frame: a.predicted_collision_frame,
            lead_frames: a.lead(),
            id_a: ia.as_ptr(),
            id_b: ib.as_ptr(),
            class_a: class_to_u32(a.classes.0),
            class_b: class_to_u32(a.classes.1),
            cx: a.location.0,
            cy: a.location.1,
        };
        CcastStatus::Ok
    })
}

/// Anomaly flag of one object as of the last step: 1 anomalous, 0 not, -1 when
/// the object has no matured residuals.
///
/// # Safety
/// `engine` must be a live handle, `object_id` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccast_engine_anomaly(
    engine: *const CcastEngine,
    object_id: *const c_char,
    out: *mut i32,
) -> CcastStatus {
    guard(|| {
        let Some(h) = engine.as_ref() else {
            return fail(CcastStatus::NullArgument, "null engine");
        };
        if out.is_null() {
            return fail(CcastStatus::NullArgument, "null out");
        }
        let id = match read_id(object_id) {
            Ok(id) => id,
            Err(m) => return fail(CcastStatus::InvalidArgument, m),
        };
        *out = match h.engine.anomaly(&id) {
            Some(true) => 1,
            Some(false) => 0,
            None => -1,
        };
        CcastStatus::Ok
    })
}

/// Inclusive overlap test with `margin` extra pixels per axis. Writes 1 or 0.
///
/// # Safety
/// `a`, `b` must point to boxes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ccast_boxes_overlap(
    a: *const CcastBox,
    b: *const CcastBox,
    margin: f64,
    out: *mut i32,
) -> CcastStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return fail(CcastStatus::NullArgument, "null argument");
        }
        let (ba, bb) = match (to_bbox(&*a), to_bbox(&*b)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(m), _) | (_, Err(m)) => return fail(CcastStatus::InvalidArgument, m),
        };
        if !(margin.is_finite() && margin >= 0.0) {
            return fail(CcastStatus::InvalidArgument, "margin must be >= 0");
        }
        *out = crashcast::boxes_overlap(&ba, &bb, margin) as i32;
        CcastStatus::Ok
    })
}
