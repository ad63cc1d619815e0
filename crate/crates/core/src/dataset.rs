use serde::{Deserialize, Serialize};

use crate::voigt::Stiffness6;

/// Phase stiffnesses and the homogenized target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub c_p1: Stiffness6,
    pub c_p2: Stiffness6,
    pub target: Stiffness6,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub oracle: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<TrainingSample>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits off the trailing `round(fraction · len)` samples for validation.
    pub fn split_validation(&self, fraction: f64) -> (Vec<TrainingSample>, Vec<TrainingSample>) {
        let n_val = ((self.len() as f64) * fraction).round() as usize;
        let n_val = n_val.min(self.len());
        let cut = self.len() - n_val;
        (self.samples[..cut].to_vec(), self.samples[cut..].to_vec())
    }
}
