//! Routes and the segment context windows used for record matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{RoadNetwork, SegmentIdx};

/// A non-empty connected path through the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route(Vec<SegmentIdx>);

impl Route {
    pub fn new(network: &RoadNetwork, segments: Vec<SegmentIdx>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyRoute);
        }
        for (i, pair) in segments.windows(2).enumerate() {
            if !network.connected(pair[0], pair[1]) {
                return Err(Error::DisconnectedRoute { position: i });
            }
        }
        Ok(Route(segments))
    }

    /// Builds a route from segment ids, resolving them against the network.
    pub fn from_ids<S: AsRef<str>>(network: &RoadNetwork, ids: &[S]) -> Result<Self> {
        let segments = ids
            .iter()
            .map(|id| {
                network
                    .index_of(id.as_ref())
                    .ok_or_else(|| Error::UnknownSegment {
                        line: 0,
                        id: id.as_ref().to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Route::new(network, segments)
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(segments: Vec<SegmentIdx>) -> Self {
        Route(segments)
    }

    pub fn segments(&self) -> &[SegmentIdx] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Slot value for positions before the start or past the end of a route.
pub const BOUNDARY: u32 = u32::MAX;

/// The `2c + 1` segments centred on a route position, boundary-padded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Context(Box<[u32]>);

impl Context {
    pub fn from_slots(slots: Vec<u32>) -> Self {
        debug_assert!(slots.len() % 2 == 1);
        Context(slots.into_boxed_slice())
    }

    pub fn width(&self) -> usize {
        self.0.len() / 2
    }

    pub fn slots(&self) -> &[u32] {
        &self.0
    }

    pub fn centre(&self) -> SegmentIdx {
        SegmentIdx(self.0[self.width()])
    }
}

pub fn context_of(segments: &[SegmentIdx], i: usize, c: usize) -> Context {
    assert!(
        i < segments.len(),
        "position {i} outside route of length {}",
        segments.len()
    );
    let slots = (0..=2 * c)
        .map(|k| {
            (i + k)
                .checked_sub(c)
                .and_then(|j| segments.get(j))
                .map_or(BOUNDARY, |s| s.0)
        })
        .collect();
    Context::from_slots(slots)
}

pub fn route_context(route: &Route, i: usize, c: usize) -> Context {
    context_of(route.segments(), i, c)
}
