//! A trained neural prior together with its feature scaling, and the
//! checkpoint file format.
//!
//! Checkpoints are JSON objects with fields `version`, `kind`, `a`,
//! `epsilon`, `scaler`, `blocks` (name → `{rows, cols, data}`) and
//! `config_hash`, a 64-bit FNV-1a hash over the layer sizes, kind, `a` and
//! `epsilon`. Loading rejects unknown versions, wrong block shapes and hash
//! mismatches.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::forward::{forward_route, RouteForward, RouteInput};
use super::matrix::Matrix;
use super::params::{
    ModelParams, Weights, HIDDEN_DIM, INPUT_DIM, PRIOR_DIM, SKIP_DIM, TIME_EMBED_DIM,
};
use super::scaler::FeatureScaler;
use crate::conjugate::NormalGamma;
use crate::error::{Error, Result};
use crate::network::{RoadNetwork, FEATURE_DIM};
use crate::route::Route;
use crate::time::TimeOfWeek;

pub const CHECKPOINT_VERSION: u32 = 1;

/// How the weights were trained: prior-only loss or posterior loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gru,
    UniteDis,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gru => "gru",
            ModelKind::UniteDis => "unite-dis",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(ModelKind::Gru),
            "unite-dis" => Ok(ModelKind::UniteDis),
            other => Err(Error::InvalidValue(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub kind: ModelKind,
    pub params: ModelParams,
    pub scaler: FeatureScaler,
}

/// Standardized features and lengths of a route, ready for the forward pass.
pub struct PreparedRoute {
    pub features: Vec<[f64; FEATURE_DIM]>,
    pub lengths: Vec<f64>,
}

impl NeuralModel {
    pub fn prepare(&self, network: &RoadNetwork, route: &Route) -> PreparedRoute {
        let (features, lengths) = route
            .segments()
            .iter()
            .map(|&s| {
                let seg = network.segment(s);
                (self.scaler.apply(&seg.features), seg.length)
            })
            .unzip();
        PreparedRoute { features, lengths }
    }

    pub fn forward<F>(
        &self,
        prepared: &PreparedRoute,
        arrivals: &[Option<TimeOfWeek>],
        posterior_hook: F,
    ) -> Result<RouteForward>
    where
        F: FnMut(usize, TimeOfWeek, &NormalGamma) -> Result<NormalGamma>,
    {
        let input = RouteInput {
            features: &prepared.features,
            lengths: &prepared.lengths,
            arrivals,
        };
        forward_route(&self.params, &input, posterior_hook)
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let blocks = self
            .params
            .weights
            .blocks()
            .into_iter()
            .map(|(name, m)| {
                (
                    name.to_string(),
                    BlockDump {
                        rows: m.rows(),
                        cols: m.cols(),
                        data: m.data().to_vec(),
                    },
                )
            })
            .collect();
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: self.kind,
            a: self.params.a,
            epsilon: self.params.epsilon,
            scaler: self.scaler.clone(),
            blocks,
            config_hash: format!(
                "{:016x}",
                config_hash(self.kind, self.params.a, self.params.epsilon)
            ),
        };
        serde_json::to_writer_pretty(writer, &ck).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_reader(reader).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let expected = format!("{:016x}", config_hash(ck.kind, ck.a, ck.epsilon));
        if ck.config_hash != expected {
            return Err(Error::Checkpoint(format!(
                "config hash {} does not match {expected}",
                ck.config_hash
            )));
        }
        if !ck.scaler.is_valid() {
            return Err(Error::Checkpoint("invalid feature scaler".into()));
        }
        let mut weights = Weights::zeros();
        let mut blocks = ck.blocks;
        for (name, slot) in weights.blocks_mut() {
            let dump = blocks
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing block `{name}`")))?;
            if (dump.rows, dump.cols) != slot.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: slot.shape(),
                    found: (dump.rows, dump.cols),
                });
            }
            *slot = Matrix::from_vec(dump.rows, dump.cols, dump.data).ok_or_else(|| {
                Error::Checkpoint(format!(
                    "block `{name}` data length does not match its shape"
                ))
            })?;
        }
        if let Some(extra) = blocks.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected block `{extra}`")));
        }
        Ok(NeuralModel {
            kind: ck.kind,
            params: ModelParams::new(weights, ck.a, ck.epsilon)?,
            scaler: ck.scaler,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BlockDump {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    version: u32,
    kind: ModelKind,
    a: f64,
    epsilon: f64,
    scaler: FeatureScaler,
    blocks: BTreeMap<String, BlockDump>,
    config_hash: String,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn config_hash(kind: ModelKind, a: f64, epsilon: f64) -> u64 {
    let text = format!(
        "feature={FEATURE_DIM};embed={TIME_EMBED_DIM};input={INPUT_DIM};hidden={HIDDEN_DIM};skip={SKIP_DIM};prior={PRIOR_DIM};kind={kind};a={:016x};epsilon={:016x}",
        a.to_bits(),
        epsilon.to_bits()
    );
    fnv1a(text.as_bytes())
}
