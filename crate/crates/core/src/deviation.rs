//! Prediction residuals and the majority-above-mean anomaly gate.
//!
//! Every prediction round writes its points into a per-object ledger keyed by
//! target frame; a newer round overwrites older predictions for the same frame.
//! When the actual observation for a frame arrives, the distance between the
//! predicted and observed centers becomes a matured residual.

use std::collections::{BTreeMap, VecDeque};

use crate::model::{Frame, ObjectId, ObjectState, PredictedTrajectory};

/// Residual distances for one object, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSet {
    pub object_id: ObjectId,
    pub residuals: Vec<f64>,
    pub as_of_frame: Frame,
}

impl DeviationSet {
    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateUnavailable;

const TIE_BAND: f64 = 1e-12;

/// True when strictly more than half of the residuals lie strictly above
/// their arithmetic mean.
pub fn anomaly_flag(dev: &DeviationSet) -> Result<bool, GateUnavailable> {
    majority_above_mean(&dev.residuals)
}

pub fn majority_above_mean(residuals: &[f64]) -> Result<bool, GateUnavailable> {
    if residuals.is_empty() {
        return Err(GateUnavailable);
    }
    let n = residuals.len();
    let mean = residuals.iter().sum::<f64>() / n as f64;
    // Values within rounding noise of the mean count as ties, so a constant set
    // never flags even when its computed mean is off by an ulp.
    let scale = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let band = TIE_BAND * scale;
    let above = residuals.iter().filter(|&&r| r - mean > band).count();
    Ok(2 * above > n)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ObjectLedger {
    predictions: BTreeMap<Frame, (f64, f64)>,
    matured: VecDeque<(Frame, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLedger {
    horizon: usize,
    objects: BTreeMap<ObjectId, ObjectLedger>,
}

impl PredictionLedger {
    pub fn new(horizon: usize) -> Self {
        Self { horizon: horizon.max(1), objects: BTreeMap::new() }
    }

    pub fn record_prediction(&mut self, traj: &PredictedTrajectory) {
        let entry = self.objects.entry(traj.object_id.clone()).or_default();
        for p in &traj.points {
            entry.predictions.insert(p.frame, p.bbox.center());
        }
    }

    pub fn prediction_for(&self, id: &ObjectId, frame: Frame) -> Option<(f64, f64)> {
        self.objects.get(id)?.predictions.get(&frame).copied()
    }

    pub fn prediction_count(&self, id: &ObjectId) -> usize {
        self.objects.get(id).map_or(0, |o| o.predictions.len())
    }

    /// Compares `actual` with the retained prediction for its frame. A residual,
    /// when produced, is also kept as matured history for the object.
    pub fn compute_deviation(&mut self, actual: &ObjectState) -> Option<f64> {
        let entry = self.objects.get_mut(&actual.object_id)?;
        let (px, py) = entry.predictions.get(&actual.frame).copied()?;
        let residual = (px - actual.bbox.cx).hypot(py - actual.bbox.cy);
        // A repeated observation for the same frame replaces the earlier residual.
        if entry.matured.back().is_some_and(|&(f, _)| f == actual.frame) {
            entry.matured.pop_back();
        }
        entry.matured.push_back((actual.frame, residual));
        while entry.matured.len() > self.horizon {
            entry.matured.pop_front();
        }
        Some(residual)
    }

    /// The last up-to-`Q` matured residuals with frame at or before `at_frame`.
    pub fn collect_deviation_set(&self, id: &ObjectId, at_frame: Frame) -> DeviationSet {
        let residuals = self
            .objects
            .get(id)
            .map(|o| {
                let upto: Vec<f64> = o.matured.iter().filter(|(f, _)| *f <= at_frame).map(|&(_, r)| r).collect();
                upto[upto.len().saturating_sub(self.horizon)..].to_vec()
            })
            .unwrap_or_default();
        DeviationSet { object_id: id.clone(), residuals, as_of_frame: at_frame }
    }

    /// Drops predictions targeting frames older than `current - Q`.
    pub fn evict_before(&mut self, current: Frame) {
        let cutoff = current.saturating_sub(self.horizon as u64);
        for o in self.objects.values_mut() {
            o.predictions = o.predictions.split_off(&cutoff);
        }
    }

    pub fn forget(&mut self, id: &ObjectId) {
        self.objects.remove(id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, ClassLabel};

    fn st(frame: Frame, cx: f64, cy: f64) -> ObjectState {
        ObjectState::new(frame, "a", ClassLabel::Car, BBox::new(cx, cy, 10.0, 10.0).unwrap())
    }

    fn traj(issued_at: Frame, pts: &[(f64, f64)]) -> PredictedTrajectory {
        PredictedTrajectory {
            object_id: "a".into(),
            issued_at,
            points: pts.iter().enumerate().map(|(i, &(x, y))| st(issued_at + 1 + i as u64, x, y)).collect(),
        }
    }

    fn set(residuals: &[f64]) -> DeviationSet {
        DeviationSet { object_id: "a".into(), residuals: residuals.to_vec(), as_of_frame: 0 }
    }

    #[test]
    fn records_and_overwrites_with_newest_vintage() {
        let mut ledger = PredictionLedger::new(5);
        ledger.record_prediction(&traj(5, &[(6.0, 0.0), (7.0, 0.0), (8.0, 0.0)]));
        assert_eq!(ledger.prediction_count(&"a".into()), 3);
        ledger.record_prediction(&traj(7, &[(80.0, 0.0), (90.0, 0.0), (100.0, 0.0)]));
        assert_eq!(ledger.prediction_for(&"a".into(), 8), Some((80.0, 0.0)));
        assert_eq!(ledger.prediction_for(&"a".into(), 6), Some((6.0, 0.0)));
    }

    #[test]
    fn residual_examples() {
        let mut ledger = PredictionLedger::new(5);
        ledger.record_prediction(&traj(4, &[(5.0, 0.0), (5.0, 0.0)]));
        assert_eq!(ledger.compute_deviation(&st(5, 5.0, 0.0)), Some(0.0));
        assert_eq!(ledger.compute_deviation(&st(6, 8.0, 4.0)), Some(5.0));
        assert_eq!(ledger.compute_deviation(&st(9, 8.0, 4.0)), None);
        let dev = ledger.collect_deviation_set(&"a".into(), 9);
        assert_eq!(dev.residuals, vec![0.0, 5.0]);
    }

    #[test]
    fn deviation_set_keeps_last_q() {
        let mut ledger = PredictionLedger::new(3);
        ledger.record_prediction(&traj(0, &[(0.0, 0.0); 6]));
        for f in 1..=6 {
            ledger.compute_deviation(&st(f, f as f64, 0.0));
        }
        assert_eq!(ledger.collect_deviation_set(&"a".into(), 6).residuals, vec![4.0, 5.0, 6.0]);
        assert_eq!(ledger.collect_deviation_set(&"a".into(), 5).residuals, vec![4.0, 5.0]);
    }

    #[test]
    fn eviction_drops_stale_predictions() {
        let mut ledger = PredictionLedger::new(2);
        ledger.record_prediction(&traj(0, &[(0.0, 0.0); 6]));
        ledger.evict_before(5);
        assert_eq!(ledger.prediction_for(&"a".into(), 2), None);
        assert!(ledger.prediction_for(&"a".into(), 3).is_some());
    }

    #[test]
    fn gate_examples() {
        assert_eq!(anomaly_flag(&set(&[0.0, 0.0, 0.0])), Ok(false));
        assert_eq!(anomaly_flag(&set(&[3.0, 3.0, 3.0, 1.0])), Ok(true));
        assert_eq!(anomaly_flag(&set(&[1.0, 1.0, 10.0])), Ok(false));
        assert_eq!(anomaly_flag(&set(&[])), Err(GateUnavailable));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn constant_sets_never_flag(v in 0.0..1e6f64, n in 1usize..40) {
                prop_assert_eq!(majority_above_mean(&vec![v; n]), Ok(false));
            }

            #[test]
            fn residuals_translation_invariant(
                pts in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64), 1..10),
                dx in -1e3..1e3f64, dy in -1e3..1e3f64,
            ) {
                let run = |ox: f64, oy: f64| {
                    let mut l = PredictionLedger::new(pts.len());
                    let preds: Vec<_> = pts.iter().map(|&(px, py, _, _)| (px + ox, py + oy)).collect();
                    l.record_prediction(&traj(0, &preds));
                    pts.iter().enumerate().map(|(i, &(_, _, ax, ay))| {
                        l.compute_deviation(&st(i as u64 + 1, ax + ox, ay + oy)).unwrap()
                    }).collect::<Vec<_>>()
                };
                for (a, b) in run(0.0, 0.0).iter().zip(run(dx, dy)) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }
}
