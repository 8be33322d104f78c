//! The per-frame collision forecasting engine.
//!
//! Each call to [`Engine::step`] ingests one frame of observations. On cadence
//! frames every eligible moving object is extrapolated `Q` frames ahead and the
//! predictions are tested pairwise, and against static boxes, for a box overlap
//! at the same future frame.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EngineConfig, Gating};
use crate::deviation::{anomaly_flag, PredictionLedger};
use crate::model::{BBox, ClassLabel, Frame, Mobility, ObjectId, ObjectState, PredictedTrajectory, SceneRegistry, TrackError};
use crate::predictor::{make_predictor, Predictor};

/// Inclusive axis-aligned overlap test with an extra pixel margin per axis.
pub fn boxes_overlap(a: &BBox, b: &BBox, margin: f64) -> bool {
    (a.cx - b.cx).abs() <= (a.w + b.w) / 2.0 + margin && (a.cy - b.cy).abs() <= (a.h + b.h) / 2.0 + margin
}

/// Earliest frame at which both trajectories predict overlapping boxes, with
/// the midpoint of the two centers at that frame.
pub fn pair_intersection(
    a: &PredictedTrajectory,
    b: &PredictedTrajectory,
    margin: f64,
) -> Option<(Frame, (f64, f64))> {
    a.points.iter().find_map(|pa| {
        let pb = b.point_at(pa.frame)?;
        boxes_overlap(&pa.bbox, &pb.bbox, margin)
            .then(|| (pa.frame, ((pa.bbox.cx + pb.bbox.cx) / 2.0, (pa.bbox.cy + pb.bbox.cy) / 2.0)))
    })
}

/// Earliest predicted overlap with a fixed box.
pub fn static_intersection(a: &PredictedTrajectory, fixed: &BBox, margin: f64) -> Option<(Frame, (f64, f64))> {
    a.points.iter().find_map(|pa| {
        boxes_overlap(&pa.bbox, fixed, margin)
            .then(|| (pa.frame, ((pa.bbox.cx + fixed.cx) / 2.0, (pa.bbox.cy + fixed.cy) / 2.0)))
    })
}

/// Unordered object pair, stored lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonicalPair(pub ObjectId, pub ObjectId);

impl CanonicalPair {
    pub fn new(a: ObjectId, b: ObjectId) -> Self {
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionAlert {
    pub emitted_at: Frame,
    pub pair: CanonicalPair,
    pub predicted_collision_frame: Frame,
    /// Midpoint of the two predicted centers at the collision frame.
    pub location: (f64, f64),
    /// Class labels in pair order.
    pub classes: (ClassLabel, ClassLabel),
}

impl CollisionAlert {
    pub fn lead(&self) -> u64 {
        self.predicted_collision_frame - self.emitted_at
    }
}

/// Suppresses repeat alerts for a pair within `cooldown` frames of its last
/// emitted alert.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlertDeduper {
    cooldown: u64,
    last_emitted: BTreeMap<CanonicalPair, Frame>,
}

impl AlertDeduper {
    pub fn new(cooldown: u64) -> Self {
        Self { cooldown, last_emitted: BTreeMap::new() }
    }

    pub fn admit(&mut self, alert: &CollisionAlert) -> bool {
        if let Some(&prev) = self.last_emitted.get(&alert.pair) {
            if alert.emitted_at.saturating_sub(prev) <= self.cooldown {
                return false;
            }
        }
        self.last_emitted.insert(alert.pair.clone(), alert.emitted_at);
        true
    }
}

/// Filters an alert stream ordered by `emitted_at`.
pub fn dedup(alerts: impl IntoIterator<Item = CollisionAlert>, cooldown: u64) -> Vec<CollisionAlert> {
    let mut d = AlertDeduper::new(cooldown);
    alerts.into_iter().filter(|a| d.admit(a)).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("frame {got} does not follow previous frame {previous}")]
    OutOfOrder { previous: Frame, got: Frame },
    #[error("observation for frame {got} inside step for frame {expected}")]
    MixedFrames { expected: Frame, got: Frame },
    #[error(transparent)]
    Track(#[from] TrackError),
}

/// One stream's forecasting state.
pub struct Engine {
    config: EngineConfig,
    predictor: Box<dyn Predictor>,
    registry: SceneRegistry,
    ledger: PredictionLedger,
    deduper: AlertDeduper,
    classes: BTreeMap<ObjectId, ClassLabel>,
    last_frame: Option<Frame>,
    latest: BTreeMap<ObjectId, PredictedTrajectory>,
    seen: BTreeSet<ObjectId>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let predictor = make_predictor(config.predictor)?;
        Ok(Self {
            registry: SceneRegistry::new(config.history, config.horizon),
            ledger: PredictionLedger::new(config.horizon),
            deduper: AlertDeduper::new(config.dedup_cooldown),
            predictor,
            config,
            classes: BTreeMap::new(),
            last_frame: None,
            latest: BTreeMap::new(),
            seen: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn registry(&self) -> &SceneRegistry {
        &self.registry
    }

    pub fn ledger(&self) -> &PredictionLedger {
        &self.ledger
    }

    pub fn last_frame(&self) -> Option<Frame> {
        self.last_frame
    }

    /// Distinct object ids observed so far.
    pub fn objects_seen(&self) -> usize {
        self.seen.len()
    }

    /// Predictions issued in the most recent cadence round.
    pub fn latest_predictions(&self) -> &BTreeMap<ObjectId, PredictedTrajectory> {
        &self.latest
    }

    /// Anomaly gate for one object at the current frame; `None` when it has
    /// no matured residuals.
    pub fn anomaly(&self, id: &ObjectId) -> Option<bool> {
        let at = self.last_frame?;
        anomaly_flag(&self.ledger.collect_deviation_set(id, at)).ok()
    }

    fn gate_passes(&self, id: &ObjectId) -> bool {
        self.anomaly(id).unwrap_or(true)
    }

    pub fn step(&mut self, frame: Frame, observations: &[ObjectState]) -> Result<Vec<CollisionAlert>, StepError> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(StepError::OutOfOrder { previous: prev, got: frame });
            }
        }
        if let Some(bad) = observations.iter().find(|o| o.frame != frame) {
            return Err(StepError::MixedFrames { expected: frame, got: bad.frame });
        }
        self.last_frame = Some(frame);

        let mut ordered: Vec<&ObjectState> = observations.iter().collect();
        ordered.sort_by(|a, b| a.object_id.cmp(&b.object_id));

        // Objects absent longer than max_gap are forgotten; a returning id starts fresh.
        let stale_before = frame.saturating_sub(self.config.max_gap + 1);
        let stale: Vec<ObjectId> = self
            .registry
            .windows()
            .filter(|w| w.last_frame().is_some_and(|f| f < stale_before))
            .map(|w| w.object_id().clone())
            .collect();
        for id in &stale {
            self.registry.forget(id);
            self.ledger.forget(id);
        }

        for obs in &ordered {
            self.registry.push_observation((*obs).clone())?;
            self.ledger.compute_deviation(obs);
            self.classes.insert(obs.object_id.clone(), obs.class_label);
            self.seen.insert(obs.object_id.clone());
            self.registry.update_mobility(&obs.object_id, self.config.min_obs, self.config.eps_move);
        }
        self.ledger.evict_before(frame);

        if !frame.is_multiple_of(self.config.cadence) {
            return Ok(Vec::new());
        }
        self.latest.clear();
        for w in self.registry.windows() {
            if w.mobility() != Mobility::Moving || w.last_frame() != Some(frame) {
                continue;
            }
            // Too little history: skip this object for the round.
            if let Ok(traj) = self.predictor.predict(w, self.config.horizon) {
                self.latest.insert(w.object_id().clone(), traj);
            }
        }
        for traj in self.latest.values() {
            self.ledger.record_prediction(traj);
        }

        let candidates = self.intersections(frame);
        let mut alerts: Vec<CollisionAlert> = candidates
            .into_iter()
            .filter(|(_, moving)| match self.config.gating {
                Gating::IntersectOnly => true,
                Gating::DeviationGated => moving.iter().any(|id| self.gate_passes(id)),
            })
            .map(|(alert, _)| alert)
            .collect();
        alerts.sort_by(|a, b| a.pair.cmp(&b.pair));
        alerts.retain(|a| self.deduper.admit(a));
        Ok(alerts)
    }

    /// Raw intersection candidates for this round, each with the moving
    /// members of its pair (statics are never gated).
    fn intersections(&self, frame: Frame) -> Vec<(CollisionAlert, Vec<ObjectId>)> {
        let margin = self.config.overlap_margin;
        let class_of = |id: &ObjectId| self.classes.get(id).copied().unwrap_or_default();
        let make = |a: &ObjectId, b: &ObjectId, hit: Frame, loc: (f64, f64)| {
            let pair = CanonicalPair::new(a.clone(), b.clone());
            let classes = (class_of(&pair.0), class_of(&pair.1));
            CollisionAlert { emitted_at: frame, pair, predicted_collision_frame: hit, location: loc, classes }
        };

        let mut out = Vec::new();
        let trajs: Vec<(&ObjectId, &PredictedTrajectory)> = self.latest.iter().collect();
        for (i, (ida, ta)) in trajs.iter().enumerate() {
            for (idb, tb) in &trajs[i + 1..] {
                if let Some((hit, loc)) = pair_intersection(ta, tb, margin) {
                    out.push((make(ida, idb, hit, loc), vec![(*ida).clone(), (*idb).clone()]));
                }
            }
            for (sid, sbox) in self.registry.statics() {
                if let Some((hit, loc)) = static_intersection(ta, sbox, margin) {
                    out.push((make(ida, sid, hit, loc), vec![(*ida).clone()]));
                }
            }
        }
        out
    }
}

/// Alert output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub emitted_at: Frame,
    pub id_a: String,
    pub id_b: String,
    pub class_a: ClassLabel,
    pub class_b: ClassLabel,
    pub predicted_frame: Frame,
    pub cx: f64,
    pub cy: f64,
    pub lead_frames: u64,
    /// `lead_frames / fps`, rounded to 4 decimals.
    pub lead_seconds: f64,
}

impl AlertRecord {
    pub fn from_alert(a: &CollisionAlert, fps: f64) -> Self {
        Self {
            emitted_at: a.emitted_at,
            id_a: a.pair.0.to_string(),
            id_b: a.pair.1.to_string(),
            class_a: a.classes.0,
            class_b: a.classes.1,
            predicted_frame: a.predicted_collision_frame,
            cx: a.location.0,
            cy: a.location.1,
            lead_frames: a.lead(),
            lead_seconds: (a.lead() as f64 / fps * 1e4).round() / 1e4,
        }
    }

    pub fn to_alert(&self) -> CollisionAlert {
        CollisionAlert {
            emitted_at: self.emitted_at,
            pair: CanonicalPair::new(self.id_a.as_str().into(), self.id_b.as_str().into()),
            predicted_collision_frame: self.predicted_frame,
            location: (self.cx, self.cy),
            classes: (self.class_a, self.class_b),
        }
    }
}

pub fn write_alerts(alerts: &[CollisionAlert], fps: f64) -> String {
    let mut out = String::new();
    for a in alerts {
        let line = serde_json::to_string(&AlertRecord::from_alert(a, fps)).expect("alert serializes");
        writeln!(out, "{line}").expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_alerts(text: &str) -> Result<Vec<CollisionAlert>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<AlertRecord>(l).map(|r| r.to_alert()).map_err(|e| (i + 1, e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::PredictorSpec;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h).unwrap()
    }

    fn traj(id: &str, issued_at: Frame, pts: &[(f64, f64)]) -> PredictedTrajectory {
        PredictedTrajectory {
            object_id: id.into(),
            issued_at,
            points: pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| ObjectState::new(issued_at + 1 + i as u64, id, ClassLabel::Car, bx(x, y, 10.0, 10.0)))
                .collect(),
        }
    }

    fn alert(at: Frame, a: &str, b: &str) -> CollisionAlert {
        CollisionAlert {
            emitted_at: at,
            pair: CanonicalPair::new(a.into(), b.into()),
            predicted_collision_frame: at + 5,
            location: (0.0, 0.0),
            classes: (ClassLabel::Car, ClassLabel::Car),
        }
    }

    #[test]
    fn overlap_examples() {
        let a = bx(0.0, 0.0, 20.0, 20.0);
        assert!(boxes_overlap(&a, &a, 0.0));
        assert!(!boxes_overlap(&a, &bx(100.0, 0.0, 20.0, 20.0), 0.0));
        assert!(boxes_overlap(&a, &bx(20.0, 0.0, 20.0, 20.0), 0.0));
        assert!(!boxes_overlap(&a, &bx(20.5, 0.0, 20.0, 20.0), 0.0));
        assert!(boxes_overlap(&a, &bx(20.5, 0.0, 20.0, 20.0), 0.5));
    }

    #[test]
    fn converging_trajectories_meet_at_seventh_point() {
        let a: Vec<_> = (1..=10).map(|i| if i < 7 { (1000.0 + i as f64, 0.0) } else { (50.0, 50.0) }).collect();
        let b: Vec<_> = (1..=10).map(|i| if i < 7 { (-1000.0 - i as f64, 0.0) } else { (50.0, 50.0) }).collect();
        let hit = pair_intersection(&traj("a", 0, &a), &traj("b", 0, &b), 0.0);
        assert_eq!(hit, Some((7, (50.0, 50.0))));
    }

    #[test]
    fn parallel_far_apart_never_meet() {
        let a: Vec<_> = (0..20).map(|i| (i as f64 * 5.0, 0.0)).collect();
        let b: Vec<_> = (0..20).map(|i| (i as f64 * 5.0, 500.0)).collect();
        assert_eq!(pair_intersection(&traj("a", 0, &a), &traj("b", 0, &b), 0.0), None);
    }

    #[test]
    fn earliest_overlap_wins() {
        let a: Vec<_> = (1..=6).map(|i| if (4..=5).contains(&i) { (0.0, 0.0) } else { (0.0, 100.0 * i as f64) }).collect();
        let b: Vec<_> = (1..=6).map(|i| if (4..=5).contains(&i) { (2.0, 0.0) } else { (0.0, -100.0 * i as f64) }).collect();
        assert_eq!(pair_intersection(&traj("a", 10, &a), &traj("b", 10, &b), 0.0).map(|h| h.0), Some(14));
    }

    #[test]
    fn intersection_requires_same_frame() {
        // b passes through a's frame-3 position, but only at frame 6.
        let a: Vec<_> = (1..=6).map(|i| (10.0 * i as f64, 0.0)).collect();
        let b: Vec<_> = (1..=6).map(|i| (30.0, 100.0 - 20.0 * i as f64 + 20.0)).collect();
        assert_eq!(pair_intersection(&traj("a", 0, &a), &traj("b", 0, &b), 0.0), None);
    }

    #[test]
    fn dedup_examples() {
        assert_eq!(dedup([alert(40, "a", "b"), alert(42, "a", "b")], 30).len(), 1);
        assert_eq!(dedup([alert(40, "a", "b"), alert(80, "a", "b")], 30).len(), 2);
        assert_eq!(dedup([alert(40, "a", "b"), alert(40, "a", "c")], 30).len(), 2);
        let kept = dedup([alert(40, "b", "a"), alert(45, "a", "b")], 30);
        assert_eq!(kept, vec![alert(40, "a", "b")]);
    }

    #[test]
    fn canonical_pair_is_order_free() {
        assert_eq!(CanonicalPair::new("z".into(), "a".into()), CanonicalPair::new("a".into(), "z".into()));
    }

    fn engine(cfg: EngineConfig) -> Engine {
        Engine::new(cfg).unwrap()
    }

    fn obs(frame: Frame, id: &str, cx: f64, cy: f64) -> ObjectState {
        ObjectState::new(frame, id, ClassLabel::Car, bx(cx, cy, 20.0, 20.0))
    }

    #[test]
    fn single_object_never_alerts() {
        let mut e = engine(EngineConfig::default());
        for f in 1..200 {
            assert!(e.step(f, &[obs(f, "a", 5.0 * f as f64, 0.0)]).unwrap().is_empty());
        }
    }

    #[test]
    fn step_rejects_disorder() {
        let mut e = engine(EngineConfig::default());
        e.step(5, &[]).unwrap();
        assert_eq!(e.step(5, &[]).unwrap_err(), StepError::OutOfOrder { previous: 5, got: 5 });
        assert!(matches!(e.step(6, &[obs(7, "a", 0.0, 0.0)]), Err(StepError::MixedFrames { .. })));
    }

    #[test]
    fn moving_object_into_static_box_alerts() {
        let mut e = engine(EngineConfig::default());
        let mut alerts = Vec::new();
        for f in 1..60 {
            let frame = [obs(f, "car", 5.0 * f as f64, 100.0), obs(f, "pole", 250.0, 100.0)];
            alerts.extend(e.step(f, &frame).unwrap());
        }
        assert!(e.registry().statics().contains_key(&ObjectId::from("pole")));
        let first = &alerts[0];
        assert_eq!(first.pair, CanonicalPair::new("car".into(), "pole".into()));
        // car box reaches the pole once 250 - 5f <= 20, i.e. f = 46.
        assert_eq!(first.predicted_collision_frame, 46);
        assert!(alerts.iter().all(|a| a.lead() >= 1));
    }

    #[test]
    fn gated_mode_requires_anomaly_or_no_history() {
        let cfg = EngineConfig { gating: Gating::DeviationGated, ..EngineConfig::default() };
        let mut gated = engine(cfg);
        let mut plain = engine(EngineConfig::default());
        let (mut g, mut p) = (0, 0);
        for f in 1..120 {
            let frame = [obs(f, "a", 5.0 * f as f64, 300.0), obs(f, "b", 300.0, 5.0 * f as f64)];
            g += gated.step(f, &frame).unwrap().len();
            p += plain.step(f, &frame).unwrap().len();
        }
        assert!(p >= 1);
        // Uniform motion yields all-zero residuals, so the gate stays closed.
        assert_eq!(g, 0);
        assert_eq!(gated.anomaly(&"a".into()), Some(false));
    }

    #[test]
    fn long_absence_restarts_window() {
        let mut e = engine(EngineConfig { max_gap: 2, ..EngineConfig::default() });
        for f in 1..=10 {
            e.step(f, &[obs(f, "a", f as f64 * 5.0, 0.0)]).unwrap();
        }
        e.step(20, &[obs(20, "a", 0.0, 0.0)]).unwrap();
        let w = e.registry().window(&"a".into()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.mobility(), Mobility::Undecided);
    }

    #[test]
    fn alert_records_round_trip() {
        let a = CollisionAlert {
            emitted_at: 83,
            pair: CanonicalPair::new("a".into(), "b".into()),
            predicted_collision_frame: 100,
            location: (12.5, 7.25),
            classes: (ClassLabel::Car, ClassLabel::Bus),
        };
        let text = write_alerts(std::slice::from_ref(&a), 30.0);
        assert!(text.contains("\"lead_seconds\":0.5667"), "{text}");
        assert_eq!(parse_alerts(&text).unwrap(), vec![a]);
    }

    #[test]
    fn least_squares_engine_runs() {
        let cfg = EngineConfig { predictor: PredictorSpec::least_squares(2), ..EngineConfig::default() };
        let mut e = engine(cfg);
        for f in 1..30 {
            e.step(f, &[obs(f, "a", f as f64, 0.0)]).unwrap();
        }
        assert_eq!(e.latest_predictions().len(), 1);
    }
}
