//! Choosing which demonstration image an agent should aim for next.

use mrav_core::tasks::EPS_REWARD;
use mrav_core::GridImage;
use serde::{Deserialize, Serialize};

use crate::error::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NextStepGoal {
    /// Counts rewarded steps so far and serves the image after that many.
    OracleCounter { count: usize },
    /// Serves the image after the one closest to the current observation.
    ImageDistance,
}

impl NextStepGoal {
    pub fn oracle() -> Self {
        NextStepGoal::OracleCounter { count: 0 }
    }

    pub fn reset(&mut self) {
        if let NextStepGoal::OracleCounter { count } = self {
            *count = 0;
        }
    }

    /// Feeds back the reward increment of the step just taken.
    pub fn record(&mut self, delta_reward: f64, sequence_len: usize) {
        if let NextStepGoal::OracleCounter { count } = self {
            if delta_reward > EPS_REWARD {
                *count = (*count + 1).min(sequence_len);
            }
        }
    }

    pub fn select<'a>(&self, v: &'a [GridImage], o: &GridImage) -> Result<&'a GridImage, AgentError> {
        let last = v.len().checked_sub(1).ok_or(AgentError::EmptySequence)?;
        let i = match *self {
            NextStepGoal::OracleCounter { count } => count.min(last),
            NextStepGoal::ImageDistance => {
                let mut best = (0, f64::INFINITY);
                for (i, vi) in v.iter().enumerate() {
                    let d = o.mean_squared_distance(vi).unwrap_or(f64::INFINITY);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                (best.0 + 1).min(last)
            }
        };
        Ok(&v[i])
    }
}
