use std::ffi::{CStr, CString};
use std::ptr;

use crashcast::{BBox, ClassLabel, Engine, EngineConfig, ObjectState};
use crashcast_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ccast_last_error()) }.to_string_lossy().into_owned()
}

fn new_engine(cfg: &CcastConfig) -> *mut CcastEngine {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ccast_engine_new(cfg, &mut h) }, CcastStatus::Ok);
    assert!(!h.is_null());
    h
}

/// A from (0,100) moving right, B from (100,0) moving down; they meet at frame 17.
fn crossing(frame: u64) -> [(&'static str, f64, f64); 2] {
    let s = 5.0 * (frame - 1) as f64;
    [("A", s, 100.0), ("B", 100.0, s)]
}

#[test]
fn crossing_alerts_match_the_engine() {
    let h = new_engine(&ccast_config_default());
    let mut engine = Engine::new(EngineConfig::default()).unwrap();
    let ids: Vec<CString> = ["A", "B"].iter().map(|s| CString::new(*s).unwrap()).collect();
    let mut seen = 0;
    for f in 1..=40u64 {
        let objs = crossing(f);
        let obs: Vec<CcastObservation> = objs
            .iter()
            .zip(&ids)
            .map(|(&(_, x, y), id)| CcastObservation {
                object_id: id.as_ptr(),
                class_label: CCAST_CLASS_CAR,
                bbox: CcastBox { cx: x, cy: y, w: 20.0, h: 20.0 },
            })
            .collect();
        let mut n = usize::MAX;
        assert_eq!(unsafe { ccast_engine_step(h, f, obs.as_ptr(), obs.len(), &mut n) }, CcastStatus::Ok);

        let states: Vec<ObjectState> = objs
            .iter()
            .map(|&(id, x, y)| ObjectState::new(f, id, ClassLabel::Car, BBox::new(x, y, 20.0, 20.0).unwrap()))
            .collect();
        let want = engine.step(f, &states).unwrap();
        assert_eq!(n, want.len(), "frame {f}");
        for (i, w) in want.iter().enumerate() {
            let mut a = unsafe { std::mem::zeroed::<CcastAlert>() };
            assert_eq!(unsafe { ccast_engine_alert(h, i, &mut a) }, CcastStatus::Ok);
            assert_eq!(a.emitted_at, w.emitted_at);
            assert_eq!(a.predicted_frame, w.predicted_collision_frame);
            assert_eq!(a.lead_frames, w.lead());
            assert_eq!(unsafe { CStr::from_ptr(a.id_a) }.to_str().unwrap(), w.pair.0.as_str());
            assert_eq!(unsafe { CStr::from_ptr(a.id_b) }.to_str().unwrap(), w.pair.1.as_str());
            assert_eq!((a.class_a, a.class_b), (CCAST_CLASS_CAR, CCAST_CLASS_CAR));
            assert_eq!((a.cx, a.cy), w.location);
            seen += 1;
        }
        let mut flag = 2;
        assert_eq!(unsafe { ccast_engine_anomaly(h, ids[0].as_ptr(), &mut flag) }, CcastStatus::Ok);
        assert_eq!(flag, engine.anomaly(&"A".into()).map_or(-1, i32::from));
    }
    assert_eq!(seen, 1);
    unsafe { ccast_engine_free(h) };
}

#[test]
fn invalid_config_is_reported() {
    let mut cfg = ccast_config_default();
    cfg.history = 1;
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ccast_engine_new(&cfg, &mut h) }, CcastStatus::InvalidConfig);
    assert!(h.is_null());
    assert!(last_error().contains("history"), "{}", last_error());

    cfg = ccast_config_default();
    cfg.predictor = 9;
    assert_eq!(unsafe { ccast_engine_new(&cfg, &mut h) }, CcastStatus::InvalidConfig);
    assert_eq!(unsafe { ccast_engine_new(ptr::null(), &mut h) }, CcastStatus::NullArgument);
}

#[test]
fn step_errors() {
    let h = new_engine(&ccast_config_default());
    assert_eq!(unsafe { ccast_engine_step(h, 5, ptr::null(), 0, ptr::null_mut()) }, CcastStatus::Ok);
    assert_eq!(unsafe { ccast_engine_step(h, 5, ptr::null(), 0, ptr::null_mut()) }, CcastStatus::OutOfOrder);
    assert!(last_error().contains("does not follow"), "{}", last_error());
    assert_eq!(unsafe { ccast_engine_step(h, 6, ptr::null(), 3, ptr::null_mut()) }, CcastStatus::NullArgument);

    let id = CString::new("a").unwrap();
    let bad = CcastObservation { object_id: id.as_ptr(), class_label: 0, bbox: CcastBox { cx: 0.0, cy: 0.0, w: -1.0, h: 2.0 } };
    assert_eq!(unsafe { ccast_engine_step(h, 7, &bad, 1, ptr::null_mut()) }, CcastStatus::InvalidArgument);
    let anon = CcastObservation { object_id: ptr::null(), ..bad };
    assert_eq!(unsafe { ccast_engine_step(h, 8, &anon, 1, ptr::null_mut()) }, CcastStatus::InvalidArgument);

    let mut a = unsafe { std::mem::zeroed::<CcastAlert>() };
    assert_eq!(unsafe { ccast_engine_alert(h, 0, &mut a) }, CcastStatus::OutOfRange);
    assert_eq!(unsafe { ccast_engine_alert(ptr::null(), 0, &mut a) }, CcastStatus::NullArgument);
    assert_eq!(unsafe { ccast_engine_step(ptr::null_mut(), 9, ptr::null(), 0, ptr::null_mut()) }, CcastStatus::NullArgument);
    unsafe { ccast_engine_free(h) };
    unsafe { ccast_engine_free(ptr::null_mut()) };
}

#[test]
fn unknown_object_has_no_flag() {
    let h = new_engine(&ccast_config_default());
    let id = CString::new("ghost").unwrap();
    let mut flag = 0;
    assert_eq!(unsafe { ccast_engine_anomaly(h, id.as_ptr(), &mut flag) }, CcastStatus::Ok);
    assert_eq!(flag, -1);
    unsafe { ccast_engine_free(h) };
}

#[test]
fn overlap_touching_edges() {
    let a = CcastBox { cx: 0.0, cy: 0.0, w: 20.0, h: 20.0 };
    let b = CcastBox { cx: 20.0, cy: 0.0, w: 20.0, h: 20.0 };
    let c = CcastBox { cx: 21.0, cy: 0.0, w: 20.0, h: 20.0 };
    let mut out = -1;
    assert_eq!(unsafe { ccast_boxes_overlap(&a, &b, 0.0, &mut out) }, CcastStatus::Ok);
    assert_eq!(out, 1);
    assert_eq!(unsafe { ccast_boxes_overlap(&a, &c, 0.0, &mut out) }, CcastStatus::Ok);
    assert_eq!(out, 0);
    assert_eq!(unsafe { ccast_boxes_overlap(&a, &c, 1.0, &mut out) }, CcastStatus::Ok);
    assert_eq!(out, 1);
    assert_eq!(unsafe { ccast_boxes_overlap(&a, &c, -1.0, &mut out) }, CcastStatus::InvalidArgument);
}
