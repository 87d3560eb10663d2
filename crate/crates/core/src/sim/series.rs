use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Piecewise-linear series over time in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    t: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Deserialize)]
struct Row {
    time_s: f64,
    value: f64,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self, SimError> {
        if t.is_empty() || t.len() != v.len() {
            return Err(SimError::Config("series needs matching, non-empty time and value columns".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SimError::Config("series times must be strictly increasing".into()));
        }
        if t.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(SimError::Config("series contains non-finite values".into()));
        }
        Ok(Self { t, v })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            t: vec![f64::NEG_INFINITY],
            v: vec![value],
        }
    }

    pub fn from_reader(r: impl Read, name: &str) -> Result<Self, SimError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let (mut t, mut v) = (Vec::new(), Vec::new());
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| SimError::Config(format!("{name}: row {}: {e}", line + 2)))?;
            t.push(row.time_s);
            v.push(row.value);
        }
        Self::new(t, v).map_err(|e| SimError::Config(format!("{name}: {e}")))
    }

    pub fn from_csv(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_reader(f, &path.display().to_string())
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        self.t[0] <= t0 && (self.t.len() == 1 && self.t[0] == f64::NEG_INFINITY || *self.t.last().unwrap() >= t1)
    }

    /// Linear interpolation; outside the covered range the end values hold.
    pub fn value(&self, t: f64) -> f64 {
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return self.v[0];
        }
        if t >= self.t[n - 1] {
            return self.v[n - 1];
        }
        let k = self.t.partition_point(|&x| x <= t) - 1;
        let w = (t - self.t[k]) / (self.t[k + 1] - self.t[k]);
        self.v[k] + w * (self.v[k + 1] - self.v[k])
    }
}
