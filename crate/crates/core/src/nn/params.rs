//! Trainable weights of the neural prior and their layout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::network::FEATURE_DIM;
use crate::time::{DAYS_PER_WEEK, INTERVALS_PER_DAY};

pub const TIME_EMBED_DIM: usize = 8;
pub const INPUT_DIM: usize = FEATURE_DIM + 2 * TIME_EMBED_DIM;
pub const HIDDEN_DIM: usize = 32;
pub const SKIP_DIM: usize = HIDDEN_DIM + INPUT_DIM;
pub const PRIOR_DIM: usize = 4;

pub const DEFAULT_A: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// GRU cell weights: `w_*` act on the input, `u_*` on the previous state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    pub w_reset: Matrix,
    pub u_reset: Matrix,
    pub b_reset: Matrix,
    pub w_update: Matrix,
    pub u_update: Matrix,
    pub b_update: Matrix,
    pub w_cand: Matrix,
    pub u_cand: Matrix,
    pub b_cand: Matrix,
}

/// Every trainable matrix. Also used as the gradient and optimizer-moment type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w_tod: Matrix,
    pub w_dow: Matrix,
    pub gru: GruWeights,
    /// Prior layer projection, `4 × 64` (rows are μ, κ, α, β).
    pub w_out: Matrix,
}

impl Weights {
    pub fn zeros() -> Self {
        let g = |r, c| Matrix::zeros(r, c);
        Weights {
            w_tod: g(INTERVALS_PER_DAY, TIME_EMBED_DIM),
            w_dow: g(DAYS_PER_WEEK, TIME_EMBED_DIM),
            gru: GruWeights {
                w_reset: g(HIDDEN_DIM, INPUT_DIM),
                u_reset: g(HIDDEN_DIM, HIDDEN_DIM),
                b_reset: g(HIDDEN_DIM, 1),
                w_update: g(HIDDEN_DIM, INPUT_DIM),
                u_update: g(HIDDEN_DIM, HIDDEN_DIM),
                b_update: g(HIDDEN_DIM, 1),
                w_cand: g(HIDDEN_DIM, INPUT_DIM),
                u_cand: g(HIDDEN_DIM, HIDDEN_DIM),
                b_cand: g(HIDDEN_DIM, 1),
            },
            w_out: g(PRIOR_DIM, SKIP_DIM),
        }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // an embedding maps a one-hot of width `rows` to `cols` outputs;
        // a dense layer maps `cols` inputs to `rows` outputs
        let embed = |r: usize, c: usize, rng: &mut ChaCha8Rng| Matrix::glorot(r, c, r, c, rng);
        let w_tod = embed(INTERVALS_PER_DAY, TIME_EMBED_DIM, &mut rng);
        let w_dow = embed(DAYS_PER_WEEK, TIME_EMBED_DIM, &mut rng);
        let mut dense = |r: usize, c: usize| Matrix::glorot(r, c, c, r, &mut rng);
        Weights {
            w_tod,
            w_dow,
            gru: GruWeights {
                w_reset: dense(HIDDEN_DIM, INPUT_DIM),
                u_reset: dense(HIDDEN_DIM, HIDDEN_DIM),
                b_reset: Matrix::zeros(HIDDEN_DIM, 1),
                w_update: dense(HIDDEN_DIM, INPUT_DIM),
                u_update: dense(HIDDEN_DIM, HIDDEN_DIM),
                b_update: Matrix::zeros(HIDDEN_DIM, 1),
                w_cand: dense(HIDDEN_DIM, INPUT_DIM),
                u_cand: dense(HIDDEN_DIM, HIDDEN_DIM),
                b_cand: Matrix::zeros(HIDDEN_DIM, 1),
            },
            w_out: dense(PRIOR_DIM, SKIP_DIM),
        }
    }

    pub fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        let g = &self.gru;
        vec![
            ("w_tod", &self.w_tod),
            ("w_dow", &self.w_dow),
            ("gru.w_reset", &g.w_reset),
            ("gru.u_reset", &g.u_reset),
            ("gru.b_reset", &g.b_reset),
            ("gru.w_update", &g.w_update),
            ("gru.u_update", &g.u_update),
            ("gru.b_update", &g.b_update),
            ("gru.w_cand", &g.w_cand),
            ("gru.u_cand", &g.u_cand),
            ("gru.b_cand", &g.b_cand),
            ("w_out", &self.w_out),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let g = &mut self.gru;
        vec![
            ("w_tod", &mut self.w_tod),
            ("w_dow", &mut self.w_dow),
            ("gru.w_reset", &mut g.w_reset),
            ("gru.u_reset", &mut g.u_reset),
            ("gru.b_reset", &mut g.b_reset),
            ("gru.w_update", &mut g.w_update),
            ("gru.u_update", &mut g.u_update),
            ("gru.b_update", &mut g.b_update),
            ("gru.w_cand", &mut g.w_cand),
            ("gru.u_cand", &mut g.u_cand),
            ("gru.b_cand", &mut g.b_cand),
            ("w_out", &mut self.w_out),
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view in block order.
    pub fn get(&self, mut k: usize) -> f64 {
        for (_, m) in self.blocks() {
            if k < m.data().len() {
                return m.data()[k];
            }
            k -= m.data().len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut k: usize, v: f64) {
        for (_, m) in self.blocks_mut() {
            if k < m.data().len() {
                m.data_mut()[k] = v;
                return;
            }
            k -= m.data().len();
        }
        panic!("parameter index out of range")
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (_, m) in self.blocks_mut() {
            m.scale(k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, m)| m.is_finite())
    }

    /// Rejects any block whose shape differs from the canonical layout.
    pub fn check_shapes(&self) -> Result<()> {
        let reference = Weights::zeros();
        for ((name, m), (_, r)) in self.blocks().into_iter().zip(reference.blocks()) {
            if m.shape() != r.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: r.shape(),
                    found: m.shape(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Weights,
    /// ELU floor constant of the prior layer.
    pub a: f64,
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(weights: Weights, a: f64, epsilon: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidValue(format!("a must be positive, got {a}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidValue(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        weights.check_shapes()?;
        if !weights.is_finite() {
            return Err(Error::NonFinite("model weights".into()));
        }
        Ok(ModelParams {
            weights,
            a,
            epsilon,
        })
    }

    pub fn init(seed: u64, a: f64, epsilon: f64) -> Result<Self> {
        Self::new(Weights::init(seed), a, epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let w = Weights::init(3);
        assert_eq!(w.blocks().len(), 12);
        assert_eq!(w.w_out.shape(), (4, 64));
        assert_eq!(w.gru.w_reset.shape(), (32, 32));
        assert!(w.gru.b_cand.data().iter().all(|&b| b == 0.0));
        let limit = (6.0f64 / 64.0).sqrt();
        assert!(w.gru.u_cand.data().iter().all(|v| v.abs() <= limit));
        assert_eq!(w, Weights::init(3));
        assert_ne!(w, Weights::init(4));
    }

    #[test]
    fn flat_indexing() {
        let mut w = Weights::zeros();
        let n = w.len();
        w.set(n - 1, 2.5);
        assert_eq!(w.w_out.data()[w.w_out.data().len() - 1], 2.5);
        assert_eq!(w.get(n - 1), 2.5);
        w.set(0, -1.0);
        assert_eq!(w.w_tod.data()[0], -1.0);
    }

    #[test]
    fn shape_check() {
        let mut w = Weights::zeros();
        w.w_out = Matrix::zeros(64, 4);
        assert!(matches!(w.check_shapes(), Err(Error::ShapeMismatch { .. })));
        assert!(ModelParams::new(Weights::zeros(), 0.0, 1e-6).is_err());
    }
}
