//! Per-feature standardization fitted on training traversals.

use serde::{Deserialize, Serialize};

use crate::network::{RoadNetwork, FEATURE_DIM};
use crate::trajectory::Trajectory;

/// Affine map `x ↦ (x − mean) / std` applied to segment features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl FeatureScaler {
    pub fn identity() -> Self {
        FeatureScaler {
            mean: [0.0; FEATURE_DIM],
            std: [1.0; FEATURE_DIM],
        }
    }

    /// Moments over every traversal of the training set, so segments are
    /// weighted by how often they are driven. Constant features keep std 1.
    pub fn fit(network: &RoadNetwork, trajectories: &[Trajectory]) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0; FEATURE_DIM];
        for tr in trajectories {
            for &s in tr.route().segments() {
                let f = &network.segment(s).features;
                for k in 0..FEATURE_DIM {
                    sum[k] += f[k];
                }
                n += 1;
            }
        }
        if n == 0 {
            return Self::identity();
        }
        let mean = sum.map(|s| s / n as f64);
        let mut sq = [0.0; FEATURE_DIM];
        for tr in trajectories {
            for &s in tr.route().segments() {
                let f = &network.segment(s).features;
                for k in 0..FEATURE_DIM {
                    sq[k] += (f[k] - mean[k]).powi(2);
                }
            }
        }
        let std = sq.map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        });
        FeatureScaler { mean, std }
    }

    pub fn apply(&self, features: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            out[k] = (features[k] - self.mean[k]) / self.std[k];
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite())
            && self.std.iter().all(|v| v.is_finite() && *v > 0.0)
    }
}
