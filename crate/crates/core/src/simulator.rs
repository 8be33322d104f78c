//! Synthetic annotated scenes.
//!
//! Objects follow piecewise-constant-velocity paths starting at frame 1:
//! `center(f) = start + velocity * (f - 1)`. Ground truth is the first frame at
//! which any two noiseless boxes overlap (margin 0). Gaussian noise is applied
//! to emitted centers only.

use std::collections::BTreeSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{boxes_overlap, CanonicalPair};
use crate::config::EngineConfig;
use crate::ingest::{write_records, FrameGroup, group_by_frame};
use crate::model::{BBox, ClassLabel, Frame, ObjectState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Crossing,
    ParallelNearMiss,
    SuddenTurn,
    PedestrianCross,
    RearEnd,
}

impl ScenarioKind {
    /// `Some(true)` if the kind demands a collision, `Some(false)` if it
    /// forbids one.
    pub fn requires_collision(self) -> Option<bool> {
        match self {
            Self::Crossing | Self::PedestrianCross | Self::RearEnd => Some(true),
            Self::ParallelNearMiss => Some(false),
            Self::SuddenTurn => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Crossing => "crossing",
            Self::ParallelNearMiss => "parallel_near_miss",
            Self::SuddenTurn => "sudden_turn",
            Self::PedestrianCross => "pedestrian_cross",
            Self::RearEnd => "rear_end",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    #[serde(default)]
    pub class: ClassLabel,
    /// Center at frame 1.
    pub start: [f64; 2],
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Width, height.
    pub size: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnSpec {
    pub object: String,
    /// Last frame on the original velocity.
    pub frame: Frame,
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub duration: Frame,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub objects: Vec<ObjectSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<TurnSpec>,
}

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("scenario file: {0}")]
    Parse(String),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SpecError {
    SpecError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collision {
    pub frame: Frame,
    pub pair: CanonicalPair,
}

/// Ground-truth outcome of a scene; `None` for a collision-free scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthEvent(pub Option<Collision>);

impl GroundTruthEvent {
    pub fn collision_frame(&self) -> Option<Frame> {
        self.0.as_ref().map(|c| c.frame)
    }
}

/// GT sidecar file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub kind: ScenarioKind,
    pub collision_frame: Option<Frame>,
    pub pair: Option<[String; 2]>,
    pub fps: f64,
    pub seed: u64,
}

impl GroundTruthFile {
    pub fn event(&self) -> GroundTruthEvent {
        GroundTruthEvent(match (self.collision_frame, &self.pair) {
            (Some(frame), Some([a, b])) => {
                Some(Collision { frame, pair: CanonicalPair::new(a.as_str().into(), b.as_str().into()) })
            }
            _ => None,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("gt serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub frames: Vec<FrameGroup>,
    pub ground_truth: GroundTruthEvent,
}

impl Scenario {
    pub fn track_text(&self) -> String {
        write_records(self.frames.iter().flat_map(|g| g.states.iter()))
    }

    pub fn gt_file(&self) -> GroundTruthFile {
        let gt = self.ground_truth.0.as_ref();
        GroundTruthFile {
            kind: self.spec.kind,
            collision_frame: gt.map(|c| c.frame),
            pair: gt.map(|c| [c.pair.0.to_string(), c.pair.1.to_string()]),
            fps: self.spec.fps,
            seed: self.spec.seed,
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        toml::from_str(text).map_err(|e| SpecError::Parse(e.message().to_owned()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Noiseless center of object `idx` at `frame`.
    pub fn true_center(&self, idx: usize, frame: Frame) -> (f64, f64) {
        let o = &self.objects[idx];
        let at = |start: [f64; 2], v: [f64; 2], steps: f64| (start[0] + v[0] * steps, start[1] + v[1] * steps);
        match &self.turn {
            Some(t) if t.object == o.id && frame > t.frame => {
                let (tx, ty) = at(o.start, o.velocity, (t.frame - 1) as f64);
                at([tx, ty], t.velocity, (frame - t.frame) as f64)
            }
            _ => at(o.start, o.velocity, (frame.max(1) - 1) as f64),
        }
    }

    pub fn true_box(&self, idx: usize, frame: Frame) -> BBox {
        let (cx, cy) = self.true_center(idx, frame);
        let [w, h] = self.objects[idx].size;
        BBox { cx, cy, w, h }
    }

    fn check_fields(&self) -> Result<(), SpecError> {
        if self.duration < 1 {
            return Err(invalid("duration", "must be >= 1"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(invalid("fps", "must be > 0"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma", "must be >= 0"));
        }
        if self.objects.len() < 2 {
            return Err(invalid("objects", "a scene needs at least two objects"));
        }
        let mut ids = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.id.is_empty() {
                return Err(invalid(format!("objects[{i}].id"), "must not be empty"));
            }
            if !ids.insert(o.id.as_str()) {
                return Err(invalid(format!("objects[{i}].id"), format!("duplicate id `{}`", o.id)));
            }
            if !(o.size[0] > 0.0 && o.size[1] > 0.0 && o.size.iter().all(|v| v.is_finite())) {
                return Err(invalid(format!("objects[{i}].size"), "width and height must be > 0"));
            }
            if !o.start.iter().chain(&o.velocity).all(|v| v.is_finite()) {
                return Err(invalid(format!("objects[{i}]"), "start and velocity must be finite"));
            }
        }
        match (&self.turn, self.kind) {
            (None, ScenarioKind::SuddenTurn) => return Err(invalid("turn", "sudden_turn needs a [turn] table")),
            (Some(_), k) if k != ScenarioKind::SuddenTurn => {
                return Err(invalid("turn", format!("only sudden_turn scenes take a turn, not {k}")))
            }
            (Some(t), _) => {
                if t.frame < 1 || t.frame > self.duration {
                    return Err(invalid(
                        "turn.frame",
                        format!("{} lies outside the scene's frames 1..={}", t.frame, self.duration),
                    ));
                }
                if !ids.contains(t.object.as_str()) {
                    return Err(invalid("turn.object", format!("no object `{}`", t.object)));
                }
                if !t.velocity.iter().all(|v| v.is_finite()) {
                    return Err(invalid("turn.velocity", "must be finite"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Checks the scene is long enough for an engine configuration.
    pub fn validate_for(&self, engine: &EngineConfig) -> Result<(), SpecError> {
        let needed = (engine.history + engine.horizon) as u64;
        if self.duration < needed {
            return Err(invalid("duration", format!("must be >= P+Q = {needed} for the engine configuration")));
        }
        Ok(())
    }

    /// First frame and pair of overlap on the noiseless paths.
    pub fn ground_truth(&self) -> GroundTruthEvent {
        let mut order: Vec<usize> = (0..self.objects.len()).collect();
        order.sort_by(|&a, &b| self.objects[a].id.cmp(&self.objects[b].id));
        for frame in 1..=self.duration {
            let boxes: Vec<BBox> = order.iter().map(|&i| self.true_box(i, frame)).collect();
            for i in 0..order.len() {
                for j in i + 1..order.len() {
                    if boxes_overlap(&boxes[i], &boxes[j], 0.0) {
                        let pair = CanonicalPair::new(
                            self.objects[order[i]].id.as_str().into(),
                            self.objects[order[j]].id.as_str().into(),
                        );
                        return GroundTruthEvent(Some(Collision { frame, pair }));
                    }
                }
            }
        }
        GroundTruthEvent(None)
    }
}

pub fn generate(spec: &ScenarioSpec) -> Result<Scenario, SpecError> {
    spec.check_fields()?;
    let gt = spec.ground_truth();
    match (spec.kind.requires_collision(), &gt.0) {
        (Some(true), None) => {
            return Err(invalid("kind", format!("{} requires a collision but the paths never overlap", spec.kind)))
        }
        (Some(false), Some(c)) => {
            return Err(invalid(
                "kind",
                format!("{} forbids a collision but {} and {} overlap at frame {}", spec.kind, c.pair.0, c.pair.1, c.frame),
            ))
        }
        _ => {}
    }

    let mut order: Vec<usize> = (0..spec.objects.len()).collect();
    order.sort_by(|&a, &b| spec.objects[a].id.cmp(&spec.objects[b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated"));
    let mut states = Vec::with_capacity(spec.duration as usize * order.len());
    for frame in 1..=spec.duration {
        for &i in &order {
            let o = &spec.objects[i];
            let mut bbox = spec.true_box(i, frame);
            if let Some(n) = &noise {
                bbox.cx += n.sample(&mut rng);
                bbox.cy += n.sample(&mut rng);
            }
            states.push(ObjectState::new(frame, o.id.as_str(), o.class, bbox));
        }
    }
    Ok(Scenario { spec: spec.clone(), frames: group_by_frame(states), ground_truth: gt })
}

/// [`generate`] restricted to `sudden_turn` scenes.
pub fn gen_sudden_turn(spec: &ScenarioSpec) -> Result<Scenario, SpecError> {
    if spec.kind != ScenarioKind::SuddenTurn {
        return Err(invalid("kind", "expected sudden_turn"));
    }
    generate(spec)
}

fn obj(id: &str, class: ClassLabel, start: [f64; 2], velocity: [f64; 2], size: [f64; 2]) -> ObjectSpec {
    ObjectSpec { id: id.into(), class, start, velocity, size }
}

/// Eight collision scenes covering car-car, car-bus and car-pedestrian cases,
/// each with one bystander that passes near but never touches.
pub fn standard_suite(noise_sigma: f64, seed: u64) -> Vec<(String, ScenarioSpec)> {
    use ClassLabel::*;
    use ScenarioKind::*;
    let scene = |kind, duration, objects, turn, k: u64| ScenarioSpec {
        kind,
        duration,
        fps: 30.0,
        noise_sigma,
        seed: seed.wrapping_add(k),
        objects,
        turn,
    };
    vec![
        (
            "v1".into(),
            scene(Crossing, 120, vec![
                obj("a", Car, [0.0, 300.0], [5.0, 0.0], [40.0, 24.0]),
                obj("b", Car, [300.0, 0.0], [0.0, 5.0], [24.0, 40.0]),
                obj("c", Car, [600.0, 150.0], [-4.0, 0.0], [40.0, 24.0]),
            ], None, 1),
        ),
        (
            "v2".into(),
            scene(Crossing, 120, vec![
                obj("bus", Bus, [0.0, 250.0], [4.0, 0.0], [90.0, 36.0]),
                obj("car", Car, [290.0, 600.0], [0.0, -6.0], [24.0, 40.0]),
                obj("x", Car, [40.0, 80.0], [5.0, 0.0], [40.0, 24.0]),
            ], None, 2),
        ),
        (
            "v3".into(),
            scene(RearEnd, 120, vec![
                obj("lead", Car, [200.0, 200.0], [2.0, 0.0], [40.0, 24.0]),
                obj("tail", Car, [0.0, 200.0], [5.0, 0.0], [40.0, 24.0]),
                obj("z", Car, [0.0, 260.0], [4.0, 0.0], [40.0, 24.0]),
            ], None, 3),
        ),
        (
            "v4".into(),
            scene(PedestrianCross, 120, vec![
                obj("car", Car, [0.0, 300.0], [6.0, 0.0], [40.0, 24.0]),
                obj("ped", Pedestrian, [340.0, 210.0], [0.0, 1.5], [10.0, 24.0]),
                obj("w", Pedestrian, [100.0, 100.0], [1.0, 0.0], [10.0, 24.0]),
            ], None, 4),
        ),
        (
            "v5".into(),
            scene(Crossing, 120, vec![
                obj("a", Car, [0.0, 0.0], [4.0, 4.0], [32.0, 32.0]),
                obj("b", Car, [480.0, 0.0], [-4.0, 4.0], [32.0, 32.0]),
                obj("c", Car, [0.0, 500.0], [3.0, -1.0], [40.0, 24.0]),
            ], None, 5),
        ),
        (
            "v6".into(),
            scene(SuddenTurn, 120, vec![
                obj("car", Car, [0.0, 100.0], [5.0, 0.0], [40.0, 24.0]),
                obj("parked", Car, [250.0, 300.0], [0.0, 0.0], [40.0, 24.0]),
                obj("q", Car, [600.0, 40.0], [-5.0, 0.0], [40.0, 24.0]),
            ], Some(TurnSpec { object: "car".into(), frame: 45, velocity: [0.0, 5.0] }), 6),
        ),
        (
            "v7".into(),
            scene(PedestrianCross, 120, vec![
                obj("car", Car, [600.0, 200.0], [-5.0, 0.0], [40.0, 24.0]),
                obj("ped", Pedestrian, [220.0, 380.0], [0.0, -2.0], [10.0, 24.0]),
                obj("v", Car, [0.0, 420.0], [5.0, 0.0], [40.0, 24.0]),
            ], None, 7),
        ),
        (
            "v8".into(),
            scene(RearEnd, 120, vec![
                obj("front", Car, [300.0, 50.0], [0.0, 1.0], [24.0, 40.0]),
                obj("back", Car, [300.0, -200.0], [0.0, 4.5], [24.0, 40.0]),
                obj("side", Car, [360.0, 0.0], [0.0, 3.0], [24.0, 40.0]),
            ], None, 8),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crossing(duration: Frame) -> ScenarioSpec {
        ScenarioSpec {
            kind: ScenarioKind::Crossing,
            duration,
            fps: 30.0,
            noise_sigma: 0.0,
            seed: 1,
            objects: vec![
                obj("a", ClassLabel::Car, [0.0, 100.0], [5.0, 0.0], [20.0, 20.0]),
                obj("b", ClassLabel::Car, [100.0, 0.0], [0.0, 5.0], [20.0, 20.0]),
            ],
            turn: None,
        }
    }

    /// Independent first-overlap scan for two objects on straight paths.
    fn scan(a: ([f64; 2], [f64; 2]), b: ([f64; 2], [f64; 2]), half: f64, frames: Frame) -> Option<Frame> {
        (1..=frames).find(|&f| {
            let t = (f - 1) as f64;
            let d = |i: usize| ((a.0[i] + a.1[i] * t) - (b.0[i] + b.1[i] * t)).abs();
            d(0) <= 2.0 * half && d(1) <= 2.0 * half
        })
    }

    #[test]
    fn crossing_example_ground_truth() {
        let oracle = scan(([0.0, 100.0], [5.0, 0.0]), ([100.0, 0.0], [0.0, 5.0]), 10.0, 80);
        assert_eq!(oracle, Some(17));
        let sc = generate(&crossing(80)).unwrap();
        let c = sc.ground_truth.0.unwrap();
        assert_eq!(c.frame, 17);
        assert_eq!(c.pair, CanonicalPair::new("a".into(), "b".into()));
    }

    #[test]
    fn near_miss_has_no_ground_truth() {
        let mut spec = crossing(80);
        spec.kind = ScenarioKind::ParallelNearMiss;
        spec.objects = vec![
            obj("a", ClassLabel::Car, [0.0, 100.0], [5.0, 0.0], [20.0, 20.0]),
            obj("b", ClassLabel::Car, [0.0, 160.0], [5.0, 0.0], [20.0, 20.0]),
        ];
        assert_eq!(generate(&spec).unwrap().ground_truth, GroundTruthEvent(None));
    }

    #[test]
    fn identical_spec_identical_output() {
        let mut spec = crossing(80);
        spec.noise_sigma = 1.5;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.track_text(), b.track_text());
        assert_eq!(a.gt_file().to_json(), b.gt_file().to_json());
        spec.seed = 2;
        assert_ne!(generate(&spec).unwrap().track_text(), a.track_text());
    }

    #[test]
    fn contradictory_kinds_are_rejected() {
        let mut spec = crossing(80);
        spec.kind = ScenarioKind::ParallelNearMiss;
        let err = generate(&spec).unwrap_err();
        assert!(err.to_string().contains("forbids a collision"), "{err}");
        spec.kind = ScenarioKind::Crossing;
        spec.objects[1].start = [100.0, -1000.0];
        assert!(generate(&spec).unwrap_err().to_string().contains("requires a collision"));
    }

    fn turn_spec(velocity: [f64; 2], frame: Frame) -> ScenarioSpec {
        ScenarioSpec {
            kind: ScenarioKind::SuddenTurn,
            duration: 100,
            fps: 30.0,
            noise_sigma: 0.0,
            seed: 0,
            objects: vec![
                obj("car", ClassLabel::Car, [0.0, 100.0], [5.0, 0.0], [20.0, 20.0]),
                obj("wall", ClassLabel::Other, [200.0, 300.0], [0.0, 0.0], [40.0, 40.0]),
            ],
            turn: Some(TurnSpec { object: "car".into(), frame, velocity }),
        }
    }

    #[test]
    fn sudden_turn_ground_truth_follows_post_turn_path() {
        // Independent scan: car at (5(f-1), 100) up to frame 40 -> (195, 100), then (195, 100 + 5(f-40)).
        let oracle = (1..=100u64).find(|&f| {
            let (x, y) = if f <= 40 { (5.0 * (f - 1) as f64, 100.0) } else { (195.0, 100.0 + 5.0 * (f - 40) as f64) };
            (x - 200.0).abs() <= 30.0 && (y - 300.0).abs() <= 30.0
        });
        assert_eq!(oracle, Some(74));
        let sc = gen_sudden_turn(&turn_spec([0.0, 5.0], 40)).unwrap();
        assert_eq!(sc.ground_truth.collision_frame(), oracle);

        let away = gen_sudden_turn(&turn_spec([0.0, -5.0], 40)).unwrap();
        assert_eq!(away.ground_truth, GroundTruthEvent(None));
    }

    #[test]
    fn turn_outside_duration_is_rejected() {
        let err = gen_sudden_turn(&turn_spec([0.0, 5.0], 110)).unwrap_err();
        assert!(matches!(&err, SpecError::Invalid { field, .. } if field == "turn.frame"), "{err}");
    }

    #[test]
    fn ground_truth_ignores_noise() {
        let mut spec = crossing(80);
        let clean = generate(&spec).unwrap().ground_truth;
        spec.noise_sigma = 4.0;
        assert_eq!(generate(&spec).unwrap().ground_truth, clean);
    }

    #[test]
    fn spec_toml_round_trips() {
        let spec = turn_spec([0.0, 5.0], 40);
        assert_eq!(ScenarioSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn standard_suite_is_valid() {
        let suite = standard_suite(0.0, 1);
        assert_eq!(suite.len(), 8);
        for (name, spec) in &suite {
            let sc = generate(spec).unwrap_or_else(|e| panic!("{name}: {e}"));
            spec.validate_for(&EngineConfig::default()).unwrap();
            let gt = sc.ground_truth.collision_frame().unwrap_or_else(|| panic!("{name} has no collision"));
            assert!(gt >= 35, "{name}: GT {gt} too early for P+Q+T");
        }
    }
}
