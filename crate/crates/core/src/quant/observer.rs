//! Moving-average min/max observers for activation ranges.

use serde::{Deserialize, Serialize};

use super::params::{qparams_from_minmax, QuantParams};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.99;

/// Exponential moving average of batch minima and maxima. The first batch
/// initializes the range; later batches blend in with weight `1 − momentum`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    pub running_min: f64,
    pub running_max: f64,
    pub momentum: f64,
    pub initialized: bool,
}

impl Default for Observer {
    fn default() -> Self {
        Observer::new(DEFAULT_MOMENTUM)
    }
}

impl Observer {
    pub fn new(momentum: f64) -> Self {
        Observer {
            running_min: 0.0,
            running_max: 0.0,
            momentum,
            initialized: false,
        }
    }

    pub fn update_minmax(&mut self, min: f64, max: f64) {
        if !self.initialized {
            self.running_min = min;
            self.running_max = max;
            self.initialized = true;
        } else {
            let m = self.momentum;
            self.running_min = m * self.running_min + (1.0 - m) * min;
            self.running_max = m * self.running_max + (1.0 - m) * max;
        }
    }

    /// Folds in the batch range of `x`. Empty tensors are ignored.
    pub fn update<R: Real>(&mut self, x: &Tensor<R>) {
        let mut it = x.data().iter().map(|v| v.as_f64());
        let Some(first) = it.next() else { return };
        let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        self.update_minmax(lo, hi);
    }

    /// Unsigned affine 8-bit parameters for the tracked range, if any data
    /// has been seen.
    pub fn qparams(&self) -> Option<QuantParams> {
        self.initialized
            .then(|| qparams_from_minmax(self.running_min, self.running_max, false, false))
    }
}
