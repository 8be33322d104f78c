//! Domain types for per-object trajectories and the sliding-window registry
//! that holds the last `P` observations of every object in a scene.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frame index within a stream.
pub type Frame = u64;

/// Opaque object identifier. Ordering is lexicographic on the string form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for ObjectId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ClassLabel {
    Car,
    Bus,
    Pedestrian,
    #[default]
    Other,
}

impl ClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Car => "car",
            Self::Bus => "bus",
            Self::Pedestrian => "pedestrian",
            Self::Other => "other",
        }
    }

    /// Maps a free-form class name onto the tag set; anything unrecognised is `Other`.
    pub fn from_name(name: &str) -> Self {
        name.parse().unwrap_or(Self::Other)
    }
}

impl FromStr for ClassLabel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" => Ok(Self::Car),
            "bus" => Ok(Self::Bus),
            "pedestrian" | "person" => Ok(Self::Pedestrian),
            "other" => Ok(Self::Other),
            _ => Err(()),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned box in pixel space, stored by center and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid box: {0}")]
pub struct BBoxError(pub &'static str);

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, BBoxError> {
        let b = Self { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    /// Builds a box from its left/top corner, as stored in MOT files.
    pub fn from_ltwh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, BBoxError> {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    pub fn validate(&self) -> Result<(), BBoxError> {
        if !(self.cx.is_finite() && self.cy.is_finite() && self.w.is_finite() && self.h.is_finite()) {
            return Err(BBoxError("coordinates must be finite"));
        }
        if self.w <= 0.0 {
            return Err(BBoxError("width must be > 0"));
        }
        if self.h <= 0.0 {
            return Err(BBoxError("height must be > 0"));
        }
        Ok(())
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn center(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { cx: self.cx + dx, cy: self.cy + dy, ..*self }
    }
}

/// One object's box at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub frame: Frame,
    pub object_id: ObjectId,
    pub class_label: ClassLabel,
    pub bbox: BBox,
}

impl ObjectState {
    pub fn new(frame: Frame, object_id: impl Into<ObjectId>, class_label: ClassLabel, bbox: BBox) -> Self {
        Self { frame, object_id: object_id.into(), class_label, bbox }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    Undecided,
    Moving,
    Static,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackError {
    #[error("object {object_id}: frame {got} arrives after frame {last}")]
    OutOfOrder { object_id: ObjectId, last: Frame, got: Frame },
}

/// The last `P` observations of one object, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackWindow {
    object_id: ObjectId,
    states: VecDeque<ObjectState>,
    mobility: Mobility,
    capacity: usize,
}

impl TrackWindow {
    pub fn new(object_id: ObjectId, capacity: usize) -> Self {
        Self { object_id, states: VecDeque::with_capacity(capacity), mobility: Mobility::Undecided, capacity }
    }

    /// Builds a window directly from states, keeping only the newest `capacity`.
    /// States must be sorted by frame.
    pub fn from_states(states: impl IntoIterator<Item = ObjectState>, capacity: usize) -> Result<Self, TrackError> {
        let mut iter = states.into_iter().peekable();
        let id = iter.peek().map(|s| s.object_id.clone()).unwrap_or_else(|| ObjectId::new(""));
        let mut w = Self::new(id, capacity);
        for s in iter {
            w.push(s)?;
        }
        Ok(w)
    }

    pub fn object_id(&self) -> &ObjectId {
        &self.object_id
    }

    pub fn states(&self) -> &VecDeque<ObjectState> {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mobility(&self) -> Mobility {
        self.mobility
    }

    pub fn last(&self) -> Option<&ObjectState> {
        self.states.back()
    }

    pub fn last_frame(&self) -> Option<Frame> {
        self.states.back().map(|s| s.frame)
    }

    /// Overrides the mobility decision. Only `Undecided -> *` transitions are honoured.
    pub fn set_mobility(&mut self, mobility: Mobility) {
        if self.mobility == Mobility::Undecided {
            self.mobility = mobility;
        }
    }

    pub fn push(&mut self, obs: ObjectState) -> Result<(), TrackError> {
        if let Some(last) = self.states.back_mut() {
            if obs.frame < last.frame {
                return Err(TrackError::OutOfOrder {
                    object_id: self.object_id.clone(),
                    last: last.frame,
                    got: obs.frame,
                });
            }
            if obs.frame == last.frame {
                *last = obs;
                return Ok(());
            }
        }
        self.states.push_back(obs);
        while self.states.len() > self.capacity {
            self.states.pop_front();
        }
        Ok(())
    }

    /// Returns a copy with every center shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut w = self.clone();
        for s in w.states.iter_mut() {
            s.bbox = s.bbox.translated(dx, dy);
        }
        w
    }
}

/// Decides whether an object moves, from the spread of its window's centers.
///
/// Stays `Undecided` until `min_obs` states are present; once a window carries
/// a decision it is returned unchanged.
pub fn classify_mobility(window: &TrackWindow, min_obs: usize, eps_move: f64) -> Mobility {
    if window.mobility() != Mobility::Undecided {
        return window.mobility();
    }
    if window.len() < min_obs.max(1) {
        return Mobility::Undecided;
    }
    let first = window.states[0].bbox;
    let max_disp = window
        .states
        .iter()
        .map(|s| s.bbox.center_distance(&first))
        .fold(0.0_f64, f64::max);
    if max_disp < eps_move {
        Mobility::Static
    } else {
        Mobility::Moving
    }
}

/// Short-horizon prediction for one object: `points[l]` is the state expected
/// at `issued_at + l + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrajectory {
    pub object_id: ObjectId,
    pub issued_at: Frame,
    pub points: Vec<ObjectState>,
}

impl PredictedTrajectory {
    pub fn horizon(&self) -> usize {
        self.points.len()
    }

    pub fn point_at(&self, frame: Frame) -> Option<&ObjectState> {
        let offset = frame.checked_sub(self.issued_at + 1)? as usize;
        self.points.get(offset)
    }
}

/// All windows of one scene plus the fixed boxes of objects judged static.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRegistry {
    windows: BTreeMap<ObjectId, TrackWindow>,
    statics: BTreeMap<ObjectId, BBox>,
    history: usize,
    horizon: usize,
}

impl SceneRegistry {
    /// `history` is P (window length), `horizon` is Q. Panics if P < 2 or Q < 1;
    /// callers validate configuration first.
    pub fn new(history: usize, horizon: usize) -> Self {
        assert!(history >= 2, "history window must hold at least 2 states");
        assert!(horizon >= 1, "horizon must be at least 1 frame");
        Self { windows: BTreeMap::new(), statics: BTreeMap::new(), history, horizon }
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn window(&self, id: &ObjectId) -> Option<&TrackWindow> {
        self.windows.get(id)
    }

    pub fn windows(&self) -> impl Iterator<Item = &TrackWindow> {
        self.windows.values()
    }

    pub fn statics(&self) -> &BTreeMap<ObjectId, BBox> {
        &self.statics
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn push_observation(&mut self, obs: ObjectState) -> Result<(), TrackError> {
        let history = self.history;
        self.windows
            .entry(obs.object_id.clone())
            .or_insert_with(|| TrackWindow::new(obs.object_id.clone(), history))
            .push(obs)
    }

    /// Runs [`classify_mobility`] on one window and records a new decision.
    /// A window that turns static donates its newest box to the static set.
    pub fn update_mobility(&mut self, id: &ObjectId, min_obs: usize, eps_move: f64) -> Mobility {
        let Some(w) = self.windows.get_mut(id) else {
            return Mobility::Undecided;
        };
        let decided = classify_mobility(w, min_obs, eps_move);
        if w.mobility() == Mobility::Undecided && decided != Mobility::Undecided {
            w.set_mobility(decided);
            if decided == Mobility::Static {
                if let Some(last) = w.last() {
                    self.statics.insert(id.clone(), last.bbox);
                }
            }
        }
        decided
    }

    /// Drops the object entirely; a later observation re-registers it fresh.
    pub fn forget(&mut self, id: &ObjectId) {
        self.windows.remove(id);
        self.statics.remove(id);
    }
}
