//! Indexed historical records and context/time-window record selection.
//!
//! Every observed traversal is stored once per context width `0..=c_max`,
//! bucketed by its exact context and sorted by arrival time. A query locates
//! its bucket by hashing, binary-searches the time window, and scans only the
//! records inside it.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::RoadNetwork;
use crate::route::{context_of, Context, Route, BOUNDARY};
use crate::time::{tow_distance, TimeOfWeek, SECONDS_PER_WEEK};
use crate::trajectory::Trajectory;

/// Largest context width in the hyperparameter grid.
pub const DEFAULT_C_MAX: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub c: usize,
    /// Full width of the time window in seconds.
    pub delta: f64,
    pub leave_out_trip: Option<String>,
}

impl SelectionParams {
    pub fn new(c: usize, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0 && delta <= SECONDS_PER_WEEK) {
            return Err(Error::InvalidValue(format!(
                "delta must lie in (0, {SECONDS_PER_WEEK}] seconds, got {delta}"
            )));
        }
        Ok(SelectionParams {
            c,
            delta,
            leave_out_trip: None,
        })
    }

    pub fn from_minutes(c: usize, delta_minutes: f64) -> Result<Self> {
        Self::new(c, delta_minutes * 60.0)
    }

    pub fn leaving_out(mut self, trip: impl Into<String>) -> Self {
        self.leave_out_trip = Some(trip.into());
        self
    }

    pub fn without_leave_out(mut self) -> Self {
        self.leave_out_trip = None;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Bucket {
    arrivals: Vec<f64>,
    speeds: Vec<f64>,
    trips: Vec<u32>,
}

impl Bucket {
    fn len(&self) -> usize {
        self.arrivals.len()
    }

    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.arrivals[a].total_cmp(&self.arrivals[b]));
        self.arrivals = order.iter().map(|&k| self.arrivals[k]).collect();
        self.speeds = order.iter().map(|&k| self.speeds[k]).collect();
        self.trips = order.iter().map(|&k| self.trips[k]).collect();
    }
}

/// Work done by one query, for complexity checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryCost {
    /// Records whose predicate was evaluated.
    pub inspected: usize,
    /// Binary-search probes.
    pub probes: usize,
    /// Size of the matched (segment, context) bucket.
    pub bucket_size: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RecordStore {
    c_max: usize,
    buckets: HashMap<Context, Bucket>,
    trip_ids: Vec<String>,
    trip_index: HashMap<String, u32>,
    n_records: usize,
}

pub fn build_store(trajectories: &[Trajectory], c_max: usize) -> RecordStore {
    let mut store = RecordStore {
        c_max,
        ..RecordStore::default()
    };
    for tr in trajectories {
        let trip = store.intern_trip(tr.id());
        let segs = tr.route().segments();
        for (i, t) in tr.traversals().iter().enumerate() {
            let (Some(arrival), Some(speed)) = (t.arrival, t.speed) else {
                continue;
            };
            store.n_records += 1;
            for c in 0..=c_max {
                let b = store.buckets.entry(context_of(segs, i, c)).or_default();
                b.arrivals.push(arrival.seconds());
                b.speeds.push(speed);
                b.trips.push(trip);
            }
        }
    }
    for b in store.buckets.values_mut() {
        b.sort();
    }
    store
}

/// Half-open index ranges of `sorted` whose values may lie within `radius` of
/// `centre` on the week circle. Slightly wider than exact; callers re-check.
fn candidate_ranges(
    sorted: &[f64],
    centre: f64,
    radius: f64,
    probes: &mut usize,
) -> [(usize, usize); 2] {
    let pad = 1e-6;
    let lo = centre - radius - pad;
    let hi = centre + radius + pad;
    let mut search = |x: f64| {
        let (mut l, mut r) = (0usize, sorted.len());
        while l < r {
            *probes += 1;
            let mid = (l + r) / 2;
            if sorted[mid] < x {
                l = mid + 1;
            } else {
                r = mid;
            }
        }
        l
    };
    let upper = |x: f64, search: &mut dyn FnMut(f64) -> usize| {
        // first index with value > x
        search(f64::from_bits(x.to_bits() + 1).max(x))
    };
    if lo < 0.0 {
        let a = search(lo + SECONDS_PER_WEEK);
        let b = upper(hi, &mut search);
        [(0, b), (a.max(b), sorted.len())]
    } else if hi >= SECONDS_PER_WEEK {
        let a = search(lo);
        let b = upper(hi - SECONDS_PER_WEEK, &mut search);
        [(0, b.min(a)), (a, sorted.len())]
    } else {
        let a = search(lo);
        let b = upper(hi, &mut search);
        [(a, b.max(a)), (0, 0)]
    }
}

impl RecordStore {
    fn intern_trip(&mut self, id: &str) -> u32 {
        if let Some(&k) = self.trip_index.get(id) {
            return k;
        }
        let k = self.trip_ids.len() as u32;
        self.trip_ids.push(id.to_string());
        self.trip_index.insert(id.to_string(), k);
        k
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    /// Number of stored observations (each counted once, not per width).
    pub fn len(&self) -> usize {
        self.n_records
    }

    pub fn is_empty(&self) -> bool {
        self.n_records == 0
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket_len(&self, ctx: &Context) -> usize {
        self.buckets.get(ctx).map_or(0, Bucket::len)
    }

    pub fn select_records(
        &self,
        route: &Route,
        i: usize,
        tau: TimeOfWeek,
        params: &SelectionParams,
    ) -> Vec<f64> {
        self.select_records_counted(route.segments(), i, tau, params)
            .0
    }

    /// Selection over a raw segment sequence, also reporting the query cost.
    pub fn select_records_counted(
        &self,
        segments: &[crate::network::SegmentIdx],
        i: usize,
        tau: TimeOfWeek,
        params: &SelectionParams,
    ) -> (Vec<f64>, QueryCost) {
        assert!(
            params.c <= self.c_max,
            "context width {} exceeds the store's maximum {}",
            params.c,
            self.c_max
        );
        let mut cost = QueryCost::default();
        let ctx = context_of(segments, i, params.c);
        let Some(bucket) = self.buckets.get(&ctx) else {
            return (Vec::new(), cost);
        };
        cost.bucket_size = bucket.len();
        let skip = params
            .leave_out_trip
            .as_deref()
            .and_then(|id| self.trip_index.get(id).copied());
        let radius = params.delta / 2.0;
        let mut out = Vec::new();
        let mut take = |k: usize, cost: &mut QueryCost| {
            cost.inspected += 1;
            if Some(bucket.trips[k]) != skip
                && tow_distance(TimeOfWeek::wrapping(bucket.arrivals[k]), tau) <= radius
            {
                out.push(bucket.speeds[k]);
            }
        };
        if radius >= SECONDS_PER_WEEK / 2.0 {
            for k in 0..bucket.len() {
                take(k, &mut cost);
            }
        } else {
            let ranges =
                candidate_ranges(&bucket.arrivals, tau.seconds(), radius, &mut cost.probes);
            for (a, b) in ranges {
                for k in a..b {
                    take(k, &mut cost);
                }
            }
        }
        (out, cost)
    }

    /// Records available at the ground-truth arrival of traversal `i` under the
    /// least restrictive strategy (`c = 0`, window `delta`), excluding the
    /// trajectory itself.
    pub fn record_count_at_truth(
        &self,
        trajectory: &Trajectory,
        i: usize,
        delta: f64,
    ) -> Result<usize> {
        let tau = trajectory.traversals()[i]
            .arrival
            .ok_or(Error::MissingArrival { index: i })?;
        let params = SelectionParams::new(0, delta)?.leaving_out(trajectory.id());
        Ok(self
            .select_records_counted(trajectory.route().segments(), i, tau, &params)
            .0
            .len())
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"UNITERS1";

/// Binary snapshot, little-endian:
///
/// ```text
/// magic    8 bytes  "UNITERS1"
/// c_max    u32
/// records  u64      observed traversals
/// segments u32, then per segment: u32 byte length + UTF-8 id
/// trips    u32, then per trip:    u32 byte length + UTF-8 id
/// buckets  u64, then per bucket:
///   width  u32 (c), 2c+1 × u32 segment slots (u32::MAX = boundary)
///   n      u32, then n × (f64 arrival seconds, f64 speed m/s, u32 trip)
/// ```
///
/// Buckets are written in sorted context order, entries by arrival.
pub fn write_snapshot<W: Write>(
    store: &RecordStore,
    network: &RoadNetwork,
    mut w: W,
) -> Result<()> {
    let io = |e| Error::io("<snapshot writer>", e);
    let mut buf = Vec::new();
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(store.c_max as u32).to_le_bytes());
    buf.extend_from_slice(&(store.n_records as u64).to_le_bytes());
    let put_str = |buf: &mut Vec<u8>, s: &str| {
        buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
        buf.extend_from_slice(s.as_bytes());
    };
    buf.extend_from_slice(&(network.len() as u32).to_le_bytes());
    for s in network.segments() {
        put_str(&mut buf, &s.id);
    }
    buf.extend_from_slice(&(store.trip_ids.len() as u32).to_le_bytes());
    for t in &store.trip_ids {
        put_str(&mut buf, t);
    }
    let mut keys: Vec<&Context> = store.buckets.keys().collect();
    keys.sort();
    buf.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for ctx in keys {
        let b = &store.buckets[ctx];
        buf.extend_from_slice(&(ctx.width() as u32).to_le_bytes());
        for s in ctx.slots() {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        buf.extend_from_slice(&(b.len() as u32).to_le_bytes());
        for k in 0..b.len() {
            buf.extend_from_slice(&b.arrivals[k].to_le_bytes());
            buf.extend_from_slice(&b.speeds[k].to_le_bytes());
            buf.extend_from_slice(&b.trips[k].to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(io)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Snapshot(format!("truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Snapshot(e.to_string()))
    }
}

/// Loads a snapshot, remapping its segment ids onto `network`.
pub fn read_snapshot<R: Read>(mut r: R, network: &RoadNetwork) -> Result<RecordStore> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)
        .map_err(|e| Error::io("<snapshot reader>", e))?;
    let mut cur = Cursor {
        data: &data,
        pos: 0,
    };
    if cur.take(8)? != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic bytes".into()));
    }
    let c_max = cur.u32()? as usize;
    let n_records = cur.u64()? as usize;
    let n_segments = cur.u32()? as usize;
    let mut remap = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        let id = cur.string()?;
        let idx = network
            .index_of(&id)
            .ok_or_else(|| Error::Snapshot(format!("segment `{id}` not in network")))?;
        remap.push(idx.0);
    }
    let mut store = RecordStore {
        c_max,
        n_records,
        ..RecordStore::default()
    };
    let n_trips = cur.u32()?;
    for _ in 0..n_trips {
        let id = cur.string()?;
        store.intern_trip(&id);
    }
    let n_buckets = cur.u64()?;
    for _ in 0..n_buckets {
        let width = cur.u32()? as usize;
        if width > c_max {
            return Err(Error::Snapshot(format!(
                "context width {width} exceeds c_max {c_max}"
            )));
        }
        let slots = (0..2 * width + 1)
            .map(|_| {
                let s = cur.u32()?;
                if s == BOUNDARY {
                    Ok(BOUNDARY)
                } else {
                    remap
                        .get(s as usize)
                        .copied()
                        .ok_or_else(|| Error::Snapshot(format!("segment slot {s} out of range")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let n = cur.u32()? as usize;
        let mut b = Bucket::default();
        for _ in 0..n {
            b.arrivals.push(cur.f64()?);
            b.speeds.push(cur.f64()?);
            let trip = cur.u32()?;
            if trip >= n_trips {
                return Err(Error::Snapshot(format!("trip index {trip} out of range")));
            }
            b.trips.push(trip);
        }
        if b.arrivals.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Snapshot("bucket not sorted by arrival".into()));
        }
        store.buckets.insert(Context::from_slots(slots), b);
    }
    if cur.pos != data.len() {
        return Err(Error::Snapshot("trailing bytes".into()));
    }
    Ok(store)
}
