use serde::{Deserialize, Serialize};

use super::SimError;
use crate::opf::{BranchLimit, VoltageBand};

/// Closed interval `[from_s, to_s]` with a constant limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitInterval {
    pub from_s: f64,
    pub to_s: f64,
    pub s_max_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSchedule {
    pub branch: String,
    pub intervals: Vec<LimitInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSchedule {
    pub branches: Vec<BranchSchedule>,
    #[serde(default)]
    pub band: VoltageBand,
}

impl LimitSchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        for b in &self.branches {
            for (k, iv) in b.intervals.iter().enumerate() {
                if !(iv.s_max_kva > 0.0) {
                    return Err(SimError::Config(format!("limit {k} of `{}` must be positive", b.branch)));
                }
                if !(iv.from_s <= iv.to_s) {
                    return Err(SimError::Config(format!("limit {k} of `{}` ends before it starts", b.branch)));
                }
            }
            if let Some(w) = b.intervals.windows(2).find(|w| !(w[0].to_s < w[1].from_s)) {
                return Err(SimError::Config(format!(
                    "limits of `{}` overlap or are unsorted at {} s",
                    b.branch, w[1].from_s
                )));
            }
        }
        Ok(())
    }

    pub fn limit_at(&self, branch: &str, t: f64) -> Option<f64> {
        self.branches
            .iter()
            .find(|b| b.branch == branch)?
            .intervals
            .iter()
            .find(|iv| iv.from_s <= t && t <= iv.to_s)
            .map(|iv| iv.s_max_kva)
    }

    pub fn limits_at(&self, t: f64) -> Vec<BranchLimit> {
        self.branches
            .iter()
            .filter_map(|b| {
                self.limit_at(&b.branch, t).map(|s_max_kva| BranchLimit {
                    branch: b.branch.clone(),
                    s_max_kva,
                })
            })
            .collect()
    }

    /// Instants at which a scheduled branch has no limit, as
    /// `(branch, first, last)` runs over consecutive instants.
    pub fn gaps(&self, instants: &[f64]) -> Vec<(String, f64, f64)> {
        let mut out = Vec::new();
        for b in &self.branches {
            let mut run: Option<(f64, f64)> = None;
            for &t in instants {
                if self.limit_at(&b.branch, t).is_none() {
                    run = Some(run.map_or((t, t), |(a, _)| (a, t)));
                } else if let Some((a, z)) = run.take() {
                    out.push((b.branch.clone(), a, z));
                }
            }
            if let Some((a, z)) = run {
                out.push((b.branch.clone(), a, z));
            }
        }
        out
    }
}
