//! Scoring alert streams against ground truth.
//!
//! An alert is a hit when its pair equals the ground-truth pair and it was
//! emitted within `lookahead` frames before the collision. The earliest hit
//! gives the scene's lead; every alert that is not a hit is a false positive.
//! FP% is event based: `100 * false alerts / all alerts`, 0 when no alerts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::collision::CollisionAlert;
use crate::config::EngineConfig;
use crate::ingest::FrameGroup;
use crate::pipeline::{run_stream, RunError};
use crate::predictor::PredictorSpec;
use crate::simulator::GroundTruthEvent;

pub const FP_DEFINITION: &str = "FP (%) = 100 * false alert events / all alert events (event-based; 0 when no alerts)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub video: String,
    pub collision_scene: bool,
    pub tp: bool,
    pub miss: bool,
    pub frames_in_advance: Option<u64>,
    pub time_in_advance: Option<f64>,
    pub fp_events: usize,
    pub total_alert_events: usize,
    pub fp_percent: f64,
}

fn fp_percent(fp: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * fp as f64 / total as f64
    }
}

/// Scores one scene's deduplicated, emission-ordered alerts.
pub fn match_alerts(
    video: &str,
    alerts: &[CollisionAlert],
    gt: &GroundTruthEvent,
    fps: f64,
    lookahead: u64,
) -> SceneEval {
    let is_hit = |a: &CollisionAlert| match &gt.0 {
        Some(c) => a.pair == c.pair && a.emitted_at < c.frame && a.emitted_at >= c.frame.saturating_sub(lookahead),
        None => false,
    };
    let hits: Vec<&CollisionAlert> = alerts.iter().filter(|a| is_hit(a)).collect();
    let earliest = hits.iter().map(|a| a.emitted_at).min();
    let frames_in_advance = match (&gt.0, earliest) {
        (Some(c), Some(at)) => Some(c.frame - at),
        _ => None,
    };
    let fp_events = alerts.len() - hits.len();
    SceneEval {
        video: video.to_owned(),
        collision_scene: gt.0.is_some(),
        tp: earliest.is_some(),
        miss: gt.0.is_some() && earliest.is_none(),
        frames_in_advance,
        time_in_advance: frames_in_advance.map(|f| f as f64 / fps),
        fp_events,
        total_alert_events: alerts.len(),
        fp_percent: fp_percent(fp_events, alerts.len()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenes: usize,
    pub collision_scenes: usize,
    pub hits: usize,
    pub misses: usize,
    /// Mean over hit scenes.
    pub mean_frames_in_advance: f64,
    pub mean_time_in_advance: f64,
    pub fp_events: usize,
    pub total_alert_events: usize,
    pub fp_percent: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub scenes: Vec<SceneEval>,
}

impl EvalReport {
    /// Order-independent summary over all scenes.
    pub fn aggregate(&self) -> Aggregate {
        let hits: Vec<&SceneEval> = self.scenes.iter().filter(|s| s.tp).collect();
        let frames: u64 = hits.iter().filter_map(|s| s.frames_in_advance).sum();
        // Sorted summation keeps the float mean independent of scene order.
        let mut secs: Vec<f64> = hits.iter().filter_map(|s| s.time_in_advance).collect();
        secs.sort_by(f64::total_cmp);
        let n = hits.len();
        let fp: usize = self.scenes.iter().map(|s| s.fp_events).sum();
        let total: usize = self.scenes.iter().map(|s| s.total_alert_events).sum();
        Aggregate {
            scenes: self.scenes.len(),
            collision_scenes: self.scenes.iter().filter(|s| s.collision_scene).count(),
            hits: n,
            misses: self.scenes.iter().filter(|s| s.miss).count(),
            mean_frames_in_advance: if n == 0 { 0.0 } else { frames as f64 / n as f64 },
            mean_time_in_advance: if n == 0 { 0.0 } else { secs.iter().sum::<f64>() / n as f64 },
            fp_events: fp,
            total_alert_events: total,
            fp_percent: fp_percent(fp, total),
        }
    }

    /// Aligned text table: Video, Time-in-Advance, Frames-in-Advance, FP (%).
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# {FP_DEFINITION}").unwrap();
        writeln!(out, "{:<12} {:>22} {:>18} {:>8}", "Video", "Time-in-Advance (sec)", "Frames-in-Advance", "FP (%)")
            .unwrap();
        for s in &self.scenes {
            let (t, f) = match (s.time_in_advance, s.frames_in_advance) {
                (Some(t), Some(f)) => (format!("{t:.2}"), f.to_string()),
                _ if s.miss => ("miss".to_owned(), "miss".to_owned()),
                _ => ("-".to_owned(), "-".to_owned()),
            };
            writeln!(out, "{:<12} {:>22} {:>18} {:>8.1}", s.video, t, f, s.fp_percent).unwrap();
        }
        let agg = self.aggregate();
        writeln!(
            out,
            "{:<12} {:>22.2} {:>18.1} {:>8.1}",
            "aggregate", agg.mean_time_in_advance, agg.mean_frames_in_advance, agg.fp_percent
        )
        .unwrap();
        out
    }

    /// One JSON object per scene, then an aggregate line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.scenes {
            writeln!(out, "{}", serde_json::to_string(s).unwrap()).unwrap();
        }
        let agg = serde_json::json!({ "aggregate": self.aggregate(), "fp_definition": FP_DEFINITION });
        writeln!(out, "{agg}").unwrap();
        out
    }
}

/// A scene ready to be replayed through the engine.
#[derive(Debug, Clone)]
pub struct SceneInput {
    pub name: String,
    pub frames: Vec<FrameGroup>,
    pub ground_truth: GroundTruthEvent,
    pub fps: f64,
}

pub fn evaluate_scenes(
    scenes: &[SceneInput],
    config: &EngineConfig,
    lookahead: impl Fn(f64) -> u64,
) -> Result<EvalReport, RunError> {
    let mut report = EvalReport::default();
    for s in scenes {
        let cfg = EngineConfig { fps: s.fps, ..config.clone() };
        let run = run_stream(&cfg, &s.frames)?;
        report.scenes.push(match_alerts(&s.name, &run.alerts, &s.ground_truth, s.fps, lookahead(s.fps)));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub spec_a: PredictorSpec,
    pub spec_b: PredictorSpec,
    pub a: EvalReport,
    pub b: EvalReport,
}

/// Replays the same scenes under the same engine settings with two predictors.
pub fn compare_predictors(
    scenes: &[SceneInput],
    config: &EngineConfig,
    spec_a: PredictorSpec,
    spec_b: PredictorSpec,
    lookahead: impl Fn(f64) -> u64 + Copy,
) -> Result<Comparison, RunError> {
    let with = |spec| EngineConfig { predictor: spec, ..config.clone() };
    Ok(Comparison {
        spec_a,
        spec_b,
        a: evaluate_scenes(scenes, &with(spec_a), lookahead)?,
        b: evaluate_scenes(scenes, &with(spec_b), lookahead)?,
    })
}

impl Comparison {
    pub fn render_table(&self) -> String {
        fn tia(s: &SceneEval) -> String {
            match s.time_in_advance {
                Some(t) => format!("{t:.2}"),
                None if s.miss => "miss".into(),
                None => "-".into(),
            }
        }
        let (na, nb) = (self.spec_a.to_string(), self.spec_b.to_string());
        let mut out = String::new();
        writeln!(out, "# {FP_DEFINITION}").unwrap();
        writeln!(out, "{:<12} {:^33} {:^33}", "", na, nb).unwrap();
        writeln!(
            out,
            "{:<12} {:>8} {:>24} {:>8} {:>24}",
            "Video", "FP (%)", "Time in Advance (sec)", "FP (%)", "Time in Advance (sec)"
        )
        .unwrap();
        for (a, b) in self.a.scenes.iter().zip(&self.b.scenes) {
            writeln!(out, "{:<12} {:>8.1} {:>24} {:>8.1} {:>24}", a.video, a.fp_percent, tia(a), b.fp_percent, tia(b))
                .unwrap();
        }
        let (ga, gb) = (self.a.aggregate(), self.b.aggregate());
        writeln!(
            out,
            "{:<12} {:>8.1} {:>24.2} {:>8.1} {:>24.2}",
            "aggregate", ga.fp_percent, ga.mean_time_in_advance, gb.fp_percent, gb.mean_time_in_advance
        )
        .unwrap();
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (a, b) in self.a.scenes.iter().zip(&self.b.scenes) {
            let row = serde_json::json!({
                "video": a.video,
                "predictor_a": self.spec_a.to_string(),
                "fp_percent_a": a.fp_percent,
                "time_in_advance_a": a.time_in_advance,
                "predictor_b": self.spec_b.to_string(),
                "fp_percent_b": b.fp_percent,
                "time_in_advance_b": b.time_in_advance,
            });
            writeln!(out, "{row}").unwrap();
        }
        out
    }
}
