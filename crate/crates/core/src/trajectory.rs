//! Map-matched trajectories and the trajectory CSV format.
//!
//! Header: `trip_id,seq,segment_id,arrival_tow_s,speed_mps`. A header using
//! `speed_kmh` in place of `speed_mps` is accepted and converted. Empty
//! arrival or speed cells mean the value was not observed.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{csv_err, kmh_to_mps, parse_f64, RoadNetwork, SegmentIdx};
use crate::route::Route;
use crate::time::TimeOfWeek;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    pub segment: SegmentIdx,
    pub arrival: Option<TimeOfWeek>,
    /// m/s
    pub speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: String,
    traversals: Vec<Traversal>,
    route: Route,
}

impl Trajectory {
    pub fn new(
        network: &RoadNetwork,
        id: impl Into<String>,
        traversals: Vec<Traversal>,
    ) -> Result<Self> {
        let id = id.into();
        match traversals.first() {
            None => return Err(Error::EmptyRoute),
            Some(t) if t.arrival.is_none() => return Err(Error::MissingFirstArrival { trip: id }),
            _ => {}
        }
        for t in &traversals {
            if t.segment.get() >= network.len() {
                return Err(Error::UnknownSegment {
                    line: 0,
                    id: format!("#{}", t.segment.0),
                });
            }
            if let Some(v) = t.speed {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidValue(format!(
                        "trip `{id}`: speed must be positive, got {v}"
                    )));
                }
            }
        }
        let route = Route::new(network, traversals.iter().map(|t| t.segment).collect())?;
        Ok(Trajectory {
            id,
            traversals,
            route,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn traversals(&self) -> &[Traversal] {
        &self.traversals
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn len(&self) -> usize {
        self.traversals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traversals.is_empty()
    }

    pub fn departure(&self) -> TimeOfWeek {
        self.traversals[0]
            .arrival
            .expect("validated: first traversal has an arrival")
    }

    pub fn arrivals(&self) -> Vec<Option<TimeOfWeek>> {
        self.traversals.iter().map(|t| t.arrival).collect()
    }

    /// Ground-truth travel time, defined when every traversal has a speed.
    pub fn travel_time(&self, network: &RoadNetwork) -> Option<f64> {
        self.traversals
            .iter()
            .map(|t| t.speed.map(|v| network.segment(t.segment).length / v))
            .sum()
    }

    pub fn observed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.traversals
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.speed.map(|v| (i, v)))
    }
}

struct Columns {
    trip: usize,
    seq: usize,
    segment: usize,
    arrival: usize,
    speed: usize,
    speed_is_kmh: bool,
}

fn resolve_columns(header: &csv::StringRecord) -> Result<Columns> {
    let find = |name: &str| header.iter().position(|h| h == name);
    let missing = |name: &str| Error::MalformedRow {
        line: 1,
        message: format!("missing column `{name}`"),
    };
    let (speed, speed_is_kmh) = match (find("speed_mps"), find("speed_kmh")) {
        (Some(i), None) => (i, false),
        (None, Some(i)) => (i, true),
        (Some(_), Some(_)) => {
            return Err(Error::MalformedRow {
                line: 1,
                message: "both `speed_mps` and `speed_kmh` present".into(),
            })
        }
        (None, None) => return Err(missing("speed_mps")),
    };
    Ok(Columns {
        trip: find("trip_id").ok_or_else(|| missing("trip_id"))?,
        seq: find("seq").ok_or_else(|| missing("seq"))?,
        segment: find("segment_id").ok_or_else(|| missing("segment_id"))?,
        arrival: find("arrival_tow_s").ok_or_else(|| missing("arrival_tow_s"))?,
        speed,
        speed_is_kmh,
    })
}

pub fn read_trajectories<R: Read>(reader: R, network: &RoadNetwork) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = resolve_columns(rdr.headers().map_err(csv_err)?)?;

    // trips keep the order of their first row
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(u64, Traversal)>> = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let trip = row[cols.trip].to_string();
        let seq: u64 = row[cols.seq]
            .trim()
            .parse()
            .map_err(|_| Error::MalformedRow {
                line,
                message: format!("column `seq`: cannot parse `{}`", &row[cols.seq]),
            })?;
        let segment =
            network
                .index_of(&row[cols.segment])
                .ok_or_else(|| Error::UnknownSegment {
                    line,
                    id: row[cols.segment].to_string(),
                })?;
        let arrival = match row[cols.arrival].trim() {
            "" => None,
            cell => Some(
                TimeOfWeek::new(parse_f64(line, "arrival_tow_s", cell)?).map_err(|e| {
                    Error::MalformedRow {
                        line,
                        message: e.to_string(),
                    }
                })?,
            ),
        };
        let speed = match row[cols.speed].trim() {
            "" => None,
            cell => {
                let v = parse_f64(line, "speed", cell)?;
                if v <= 0.0 {
                    return Err(Error::MalformedRow {
                        line,
                        message: format!("speed must be positive, got {v}"),
                    });
                }
                Some(if cols.speed_is_kmh { kmh_to_mps(v) } else { v })
            }
        };
        let entry = rows.entry(trip.clone()).or_insert_with(|| {
            order.push(trip);
            Vec::new()
        });
        entry.push((
            seq,
            Traversal {
                segment,
                arrival,
                speed,
            },
        ));
    }

    order
        .into_iter()
        .map(|trip| {
            let mut items = rows.remove(&trip).unwrap_or_default();
            items.sort_by_key(|(seq, _)| *seq);
            for (expected, (found, _)) in items.iter().enumerate() {
                if *found != expected as u64 {
                    return Err(Error::NonContiguousSequence {
                        trip,
                        expected: expected as u64,
                        found: *found,
                    });
                }
            }
            Trajectory::new(network, trip, items.into_iter().map(|(_, t)| t).collect())
        })
        .collect()
}

pub fn parse_trajectories(
    path: impl AsRef<Path>,
    network: &RoadNetwork,
) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectories(std::io::BufReader::new(file), network)
}

pub fn write_trajectories<W: Write>(
    trajectories: &[Trajectory],
    network: &RoadNetwork,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trip_id", "seq", "segment_id", "arrival_tow_s", "speed_mps"])
        .map_err(csv_err)?;
    for tr in trajectories {
        for (seq, t) in tr.traversals().iter().enumerate() {
            w.write_record([
                tr.id(),
                &seq.to_string(),
                &network.segment(t.segment).id,
                &t.arrival
                    .map(|a| a.seconds().to_string())
                    .unwrap_or_default(),
                &t.speed.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<trajectory writer>", e))?;
    Ok(())
}
