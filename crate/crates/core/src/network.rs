//! Road network: directed segments with features, and the network CSV format.
//!
//! The CSV header is
//! `segment_id,source,target,length_m,category,speed_limit_kmh,f1,...,f16`
//! optionally followed by `in_city_source,in_city_target` (0/1). Speed limits
//! are read in km/h and held in m/s.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 16;
pub const KMH_PER_MPS: f64 = 3.6;

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / KMH_PER_MPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Motorway,
    Trunk,
    Urban,
    Rural,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Motorway,
        Category::Trunk,
        Category::Urban,
        Category::Rural,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Motorway => "motorway",
            Category::Trunk => "trunk",
            Category::Urban => "urban",
            Category::Rural => "rural",
            Category::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

/// Dense index of a segment inside its [`RoadNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentIdx(pub u32);

impl SegmentIdx {
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub source: String,
    pub target: String,
    pub length: f64,
    pub category: Category,
    pub in_city_source: bool,
    pub in_city_target: bool,
    /// m/s
    pub speed_limit: Option<f64>,
    pub features: [f64; FEATURE_DIM],
}

impl Segment {
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidValue(format!(
                "segment `{}` length must be positive, got {}",
                self.id, self.length
            )));
        }
        if let Some(sl) = self.speed_limit {
            if !(sl.is_finite() && sl > 0.0) {
                return Err(Error::InvalidValue(format!(
                    "segment `{}` speed limit must be positive, got {sl}",
                    self.id
                )));
            }
        }
        if self.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite(format!(
                "features of segment `{}`",
                self.id
            )));
        }
        Ok(())
    }

    pub fn in_city(&self) -> bool {
        self.in_city_source || self.in_city_target
    }
}

#[derive(Debug, Clone, Default)]
pub struct RoadNetwork {
    segments: Vec<Segment>,
    by_id: HashMap<String, SegmentIdx>,
    successors: Vec<Vec<SegmentIdx>>,
}

impl RoadNetwork {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            s.validate()?;
            if by_id.insert(s.id.clone(), SegmentIdx(i as u32)).is_some() {
                return Err(Error::DuplicateSegment {
                    line: i as u64 + 2,
                    id: s.id.clone(),
                });
            }
        }
        let mut leaving: HashMap<&str, Vec<SegmentIdx>> = HashMap::new();
        for (i, s) in segments.iter().enumerate() {
            leaving
                .entry(s.source.as_str())
                .or_default()
                .push(SegmentIdx(i as u32));
        }
        let successors = segments
            .iter()
            .map(|s| leaving.get(s.target.as_str()).cloned().unwrap_or_default())
            .collect();
        Ok(RoadNetwork {
            segments,
            by_id,
            successors,
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, idx: SegmentIdx) -> &Segment {
        &self.segments[idx.get()]
    }

    pub fn index_of(&self, id: &str) -> Option<SegmentIdx> {
        self.by_id.get(id).copied()
    }

    pub fn successors(&self, idx: SegmentIdx) -> &[SegmentIdx] {
        &self.successors[idx.get()]
    }

    pub fn connected(&self, from: SegmentIdx, to: SegmentIdx) -> bool {
        self.segment(from).target == self.segment(to).source
    }
}

const FIXED_COLUMNS: [&str; 6] = [
    "segment_id",
    "source",
    "target",
    "length_m",
    "category",
    "speed_limit_kmh",
];

fn expected_header() -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((1..=FEATURE_DIM).map(|i| format!("f{i}")))
        .collect()
}

fn parse_flag(line: u64, column: &str, cell: &str) -> Result<bool> {
    match cell.trim() {
        "" | "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        other => Err(Error::MalformedRow {
            line,
            message: format!("column `{column}`: expected 0/1, got `{other}`"),
        }),
    }
}

pub(crate) fn parse_f64(line: u64, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::MalformedRow {
        line,
        message: format!("column `{column}`: cannot parse `{cell}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedRow {
            line,
            message: format!("column `{column}`: value must be finite"),
        });
    }
    Ok(v)
}

pub fn read_network<R: Read>(reader: R) -> Result<RoadNetwork> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::MalformedRow {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = expected_header();
    if header.len() < expected.len() || header[..expected.len()] != expected[..] {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("expected header starting with `{}`", expected.join(",")),
        });
    }
    let extra = &header[expected.len()..];
    let city_cols = match extra {
        [] => false,
        [a, b] if a == "in_city_source" && b == "in_city_target" => true,
        _ => {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!("unexpected trailing columns {extra:?}"),
            })
        }
    };

    let mut segments = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != header.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} columns, found {}", header.len(), row.len()),
            });
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty segment id".into(),
            });
        }
        if seen.insert(id.clone(), ()).is_some() {
            return Err(Error::DuplicateSegment { line, id });
        }
        let length = parse_f64(line, "length_m", &row[3])?;
        if length <= 0.0 {
            return Err(Error::NonpositiveLength { line, length });
        }
        let category = row[4]
            .parse::<Category>()
            .map_err(|_| Error::UnknownCategory {
                line,
                token: row[4].to_string(),
            })?;
        let speed_limit = match row[5].trim() {
            "" => None,
            cell => {
                let kmh = parse_f64(line, "speed_limit_kmh", cell)?;
                if kmh <= 0.0 {
                    return Err(Error::MalformedRow {
                        line,
                        message: format!("speed limit must be positive, got {kmh}"),
                    });
                }
                Some(kmh_to_mps(kmh))
            }
        };
        let mut features = [0.0; FEATURE_DIM];
        for (k, f) in features.iter_mut().enumerate() {
            *f = parse_f64(line, &expected[6 + k], &row[6 + k])?;
        }
        let (in_city_source, in_city_target) = if city_cols {
            let n = expected.len();
            (
                parse_flag(line, "in_city_source", &row[n])?,
                parse_flag(line, "in_city_target", &row[n + 1])?,
            )
        } else {
            (false, false)
        };
        segments.push(Segment {
            id,
            source: row[1].to_string(),
            target: row[2].to_string(),
            length,
            category,
            in_city_source,
            in_city_target,
            speed_limit,
            features,
        });
    }
    RoadNetwork::new(segments)
}

pub fn parse_network(path: impl AsRef<Path>) -> Result<RoadNetwork> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_network(std::io::BufReader::new(file))
}

pub fn write_network<W: Write>(network: &RoadNetwork, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = expected_header();
    header.push("in_city_source".into());
    header.push("in_city_target".into());
    w.write_record(&header).map_err(csv_err)?;
    for s in network.segments() {
        let mut rec: Vec<String> = vec![
            s.id.clone(),
            s.source.clone(),
            s.target.clone(),
            s.length.to_string(),
            s.category.to_string(),
            s.speed_limit
                .map(|v| (v * KMH_PER_MPS).to_string())
                .unwrap_or_default(),
        ];
        rec.extend(s.features.iter().map(|f| f.to_string()));
        rec.push(u8::from(s.in_city_source).to_string());
        rec.push(u8::from(s.in_city_target).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<network writer>", e))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::MalformedRow {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}
