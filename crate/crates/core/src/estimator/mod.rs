//! Estimation of processing time functions from past runs.
//!
//! A finished run reports its objective curve. [`curve`] reduces it to ten
//! parameters (normalized processing times at qualities 0.1, ..., 1.0),
//! which together with the instance features form a training observation.
//! [`regression`] learns one model per quality endpoint and predicts the
//! function of unseen instances.

pub mod curve;
pub mod regression;

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use curve::{approximate, curve_params, ingest_curve, trim_tail, ObjectiveCurve};
pub use regression::{
    ape, apply_zscore, estimate, fit_zscore, linear_estimate, train, Method, RegressionModel, TrainingObservation,
    ZScore,
};

use crate::error::{Error, Result};
use crate::model::{PiecewiseLinearPTF, ENDPOINTS};

/// What the scheduler is told about a task's processing time function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    /// The true function (an oracle, for reference runs).
    Measured,
    /// All ten endpoints are predicted.
    Full,
    /// Only the maximum is predicted; the function is linear.
    Linear,
}

impl EstimationMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimationMode::Measured => "measured",
            EstimationMode::Full => "full",
            EstimationMode::Linear => "linear",
        }
    }
}

impl FromStr for EstimationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measured" => Ok(Self::Measured),
            "full" => Ok(Self::Full),
            "linear" => Ok(Self::Linear),
            other => Err(Error::Parse(format!("unknown estimation mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for EstimationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_RETRAIN_EVERY: usize = 25;

/// A regression model plus the observations it was trained on, optionally
/// refreshed as new observations come in.
#[derive(Debug, Clone)]
pub struct Estimator {
    method: Method,
    floor_ms: f64,
    observations: Vec<TrainingObservation>,
    pending: usize,
    retrain_every: usize,
    model: Option<RegressionModel>,
}

impl Estimator {
    /// Trains on `observations` right away when there are enough of them.
    pub fn new(method: Method, floor_ms: f64, observations: Vec<TrainingObservation>) -> Self {
        let model = train(&observations, method).ok();
        Self { method, floor_ms, observations, pending: 0, retrain_every: DEFAULT_RETRAIN_EVERY, model }
    }

    pub fn with_retrain_every(mut self, n: usize) -> Self {
        self.retrain_every = n.max(1);
        self
    }

    pub fn model(&self) -> Option<&RegressionModel> {
        self.model.as_ref()
    }

    pub fn observations(&self) -> &[TrainingObservation] {
        &self.observations
    }

    pub fn estimate(&self, mode: EstimationMode, features: &[f64], wct: u64) -> Result<PiecewiseLinearPTF> {
        match mode {
            EstimationMode::Linear => linear_estimate(self.model.as_ref(), features, wct, self.floor_ms),
            _ => estimate(self.model.as_ref(), features, wct, self.floor_ms),
        }
    }

    /// Adds an observation; retrains once enough new ones have accumulated.
    /// Returns whether the model was replaced.
    pub fn observe(&mut self, obs: TrainingObservation) -> bool {
        self.observations.push(obs);
        self.pending += 1;
        if self.pending < self.retrain_every {
            return false;
        }
        match train(&self.observations, self.method) {
            Ok(m) => {
                self.model = Some(m);
                self.pending = 0;
                true
            }
            Err(_) => false,
        }
    }
}

/// Writes observations as CSV: the features `x1..xd`, then `psi1..psi10`.
pub fn write_observations<W: Write>(w: W, observations: &[TrainingObservation]) -> Result<()> {
    let d = observations.first().map_or(0, |o| o.features.len());
    let mut out = csv::Writer::from_writer(w);
    let header: Vec<String> =
        (1..=d).map(|j| format!("x{j}")).chain((1..=ENDPOINTS).map(|k| format!("psi{k}"))).collect();
    out.write_record(&header)?;
    for o in observations {
        if o.features.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: o.features.len() });
        }
        out.write_record(o.features.iter().chain(&o.params).map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_observations<R: Read>(r: R) -> Result<Vec<TrainingObservation>> {
    let mut reader = csv::Reader::from_reader(r);
    let width = reader.headers()?.len();
    if width <= ENDPOINTS {
        return Err(Error::Parse(format!(
            "observation table needs feature columns plus {ENDPOINTS} parameter columns, found {width} columns"
        )));
    }
    let d = width - ENDPOINTS;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse(format!("observation row {}: {e}", line + 1)))?;
        let params: [f64; ENDPOINTS] = values[d..].try_into().expect("width checked by the csv reader");
        if params[0] <= 0.0 || params.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse(format!(
                "observation row {}: parameters must be positive and increasing",
                line + 1
            )));
        }
        out.push(TrainingObservation { features: values[..d].to_vec(), params });
    }
    Ok(out)
}

/// Reads an objective curve from CSV rows `time_ms,value` (with header).
pub fn read_curve<R: Read>(r: R) -> Result<ObjectiveCurve> {
    let mut reader = csv::Reader::from_reader(r);
    let points = reader.deserialize::<(f64, f64)>().collect::<std::result::Result<Vec<_>, _>>()?;
    ObjectiveCurve::new(points)
}
