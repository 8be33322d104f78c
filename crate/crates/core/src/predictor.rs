//! Deterministic trajectory predictors: extrapolate a track window `Q` frames
//! into the future.
//!
//! Both baselines reproduce uniform motion exactly, so an unperturbed object
//! produces zero prediction residuals downstream.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::model::{BBox, ObjectState, PredictedTrajectory, TrackWindow};

pub const DEFAULT_VELOCITY_SPAN: usize = 3;
pub const DEFAULT_DEGREE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    ConstantVelocity,
    LeastSquares,
}

impl PredictorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ConstantVelocity => "constant_velocity",
            Self::LeastSquares => "least_squares",
        }
    }
}

impl FromStr for PredictorKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "constant_velocity" | "cv" => Ok(Self::ConstantVelocity),
            "least_squares" | "ls" => Ok(Self::LeastSquares),
            other => Err(ConfigError::UnknownPredictor(other.to_owned())),
        }
    }
}

/// Predictor selection plus its numeric settings. `k` only affects
/// `constant_velocity`, `degree` only `least_squares`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
}

fn default_k() -> usize {
    DEFAULT_VELOCITY_SPAN
}

fn default_degree() -> usize {
    DEFAULT_DEGREE
}

impl Default for PredictorSpec {
    fn default() -> Self {
        Self::constant_velocity(DEFAULT_VELOCITY_SPAN)
    }
}

impl PredictorSpec {
    pub fn constant_velocity(k: usize) -> Self {
        Self { kind: PredictorKind::ConstantVelocity, k, degree: DEFAULT_DEGREE }
    }

    pub fn least_squares(degree: usize) -> Self {
        Self { kind: PredictorKind::LeastSquares, k: DEFAULT_VELOCITY_SPAN, degree }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < 1 {
            return Err(ConfigError::invalid("predictor.k", "must be >= 1"));
        }
        if !(1..=2).contains(&self.degree) {
            return Err(ConfigError::invalid("predictor.degree", "must be 1 or 2"));
        }
        Ok(())
    }

    /// Minimum window length the predictor needs.
    pub fn min_history(&self) -> usize {
        match self.kind {
            PredictorKind::ConstantVelocity => 2,
            PredictorKind::LeastSquares => self.degree + 1,
        }
    }
}

/// Compact form used on the command line: `constant_velocity`,
/// `constant_velocity:k=5`, `least_squares:d=2`.
impl FromStr for PredictorSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let kind: PredictorKind = parts.next().unwrap_or_default().parse()?;
        let mut spec = match kind {
            PredictorKind::ConstantVelocity => Self::constant_velocity(DEFAULT_VELOCITY_SPAN),
            PredictorKind::LeastSquares => Self::least_squares(DEFAULT_DEGREE),
        };
        for param in parts.flat_map(|p| p.split(',')) {
            let (key, value) = param
                .split_once('=')
                .ok_or_else(|| ConfigError::invalid("predictor", format!("expected key=value, got `{param}`")))?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| ConfigError::invalid("predictor", format!("`{value}` is not a non-negative integer")))?;
            match key.trim() {
                "k" => spec.k = value,
                "d" | "degree" => spec.degree = value,
                other => return Err(ConfigError::invalid("predictor", format!("unknown parameter `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PredictorKind::ConstantVelocity => write!(f, "constant_velocity:k={}", self.k),
            PredictorKind::LeastSquares => write!(f, "least_squares:d={}", self.degree),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("horizon unavailable: need {needed} states, window holds {have}")]
    HorizonUnavailable { needed: usize, have: usize },
    #[error("horizon must be at least one frame")]
    EmptyHorizon,
}

pub trait Predictor: Send + Sync {
    fn spec(&self) -> PredictorSpec;

    /// Predicts centers for the `horizon` frames following the window's newest
    /// state. Box size and class are carried over from that state.
    fn predict(&self, window: &TrackWindow, horizon: usize) -> Result<PredictedTrajectory, PredictError>;
}

pub fn make_predictor(spec: PredictorSpec) -> Result<Box<dyn Predictor>, ConfigError> {
    spec.validate()?;
    Ok(match spec.kind {
        PredictorKind::ConstantVelocity => Box::new(ConstantVelocity { span: spec.k }),
        PredictorKind::LeastSquares => Box::new(LeastSquares { degree: spec.degree }),
    })
}

fn check_history(window: &TrackWindow, needed: usize, horizon: usize) -> Result<&ObjectState, PredictError> {
    if horizon == 0 {
        return Err(PredictError::EmptyHorizon);
    }
    if window.len() < needed {
        return Err(PredictError::HorizonUnavailable { needed, have: window.len() });
    }
    Ok(window.last().expect("non-empty window"))
}

fn emit(last: &ObjectState, horizon: usize, mut center_at: impl FnMut(f64) -> (f64, f64)) -> PredictedTrajectory {
    let points = (1..=horizon as u64)
        .map(|step| {
            let frame = last.frame + step;
            let (cx, cy) = center_at(frame as f64);
            ObjectState {
                frame,
                object_id: last.object_id.clone(),
                class_label: last.class_label,
                bbox: BBox { cx, cy, ..last.bbox },
            }
        })
        .collect();
    PredictedTrajectory { object_id: last.object_id.clone(), issued_at: last.frame, points }
}

/// Extrapolates the mean of the last `span` displacement vectors, normalised
/// per frame so windows with filled or missing frames stay consistent.
#[derive(Debug, Clone, Copy)]
pub struct ConstantVelocity {
    span: usize,
}

impl Predictor for ConstantVelocity {
    fn spec(&self) -> PredictorSpec {
        PredictorSpec::constant_velocity(self.span)
    }

    fn predict(&self, window: &TrackWindow, horizon: usize) -> Result<PredictedTrajectory, PredictError> {
        let last = check_history(window, 2, horizon)?;
        let states = window.states();
        let span = self.span.min(states.len() - 1);
        let anchor = &states[states.len() - 1 - span];
        let dt = (last.frame - anchor.frame) as f64;
        let vx = (last.bbox.cx - anchor.bbox.cx) / dt;
        let vy = (last.bbox.cy - anchor.bbox.cy) / dt;
        let (x0, y0, t0) = (last.bbox.cx, last.bbox.cy, last.frame as f64);
        Ok(emit(last, horizon, |t| (x0 + vx * (t - t0), y0 + vy * (t - t0))))
    }
}

/// Ordinary least-squares polynomial fit of each center axis against frame
/// index, evaluated at the future frames.
#[derive(Debug, Clone, Copy)]
pub struct LeastSquares {
    degree: usize,
}

impl Predictor for LeastSquares {
    fn spec(&self) -> PredictorSpec {
        PredictorSpec::least_squares(self.degree)
    }

    fn predict(&self, window: &TrackWindow, horizon: usize) -> Result<PredictedTrajectory, PredictError> {
        let last = check_history(window, self.degree + 1, horizon)?;
        let ts: Vec<f64> = window.states().iter().map(|s| s.frame as f64).collect();
        let xs: Vec<f64> = window.states().iter().map(|s| s.bbox.cx).collect();
        let ys: Vec<f64> = window.states().iter().map(|s| s.bbox.cy).collect();
        let fit_x = PolyFit::fit(&ts, &xs, self.degree);
        let fit_y = PolyFit::fit(&ts, &ys, self.degree);
        Ok(emit(last, horizon, |t| (fit_x.eval(t), fit_y.eval(t))))
    }
}

/// Polynomial in the normalised variable `u = (t - origin) / scale`.
#[derive(Debug, Clone)]
struct PolyFit {
    origin: f64,
    scale: f64,
    coeffs: Vec<f64>,
}

impl PolyFit {
    fn fit(ts: &[f64], vs: &[f64], degree: usize) -> Self {
        let n = ts.len() as f64;
        let origin = ts.iter().sum::<f64>() / n;
        let scale = ts.iter().map(|t| (t - origin).abs()).fold(0.0, f64::max).max(1.0);
        let us: Vec<f64> = ts.iter().map(|t| (t - origin) / scale).collect();

        // Normal equations on centred samples: residuals are fitted as offsets
        // from the sample mean, which keeps exact data exact in floating point.
        let mean_v = vs.iter().sum::<f64>() / n;
        let dim = degree + 1;
        let mut a = vec![vec![0.0; dim]; dim];
        let mut b = vec![0.0; dim];
        for (&u, &v) in us.iter().zip(vs) {
            let mut powers = vec![1.0; dim];
            for p in 1..dim {
                powers[p] = powers[p - 1] * u;
            }
            for r in 0..dim {
                for c in 0..dim {
                    a[r][c] += powers[r] * powers[c];
                }
                b[r] += powers[r] * (v - mean_v);
            }
        }
        let mut coeffs = solve(a, b);
        coeffs[0] += mean_v;
        Self { origin, scale, coeffs }
    }

    fn eval(&self, t: f64) -> f64 {
        let u = (t - self.origin) / self.scale;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty column");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        if diag == 0.0 {
            continue;
        }
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            let pivot_row = a[col].clone();
            for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= factor * src;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = if a[row][row] == 0.0 { 0.0 } else { (b[row] - tail) / a[row][row] };
    }
    x
}
