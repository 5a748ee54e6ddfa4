//! Synthetic road networks and trajectories with known per-segment speed
//! distributions.
//!
//! Every intersection has two outgoing segments, so random walks never dead
//! end. Segment popularity follows a Zipf law, which gives heavy-tailed
//! record counts. Each segment's ground-truth speed is Gaussian with a mean
//! derived from its features, multiplied by a weekday peak slowdown inside
//! the peak windows. Two multipliers are hidden from the features: a
//! per-segment log-normal effect and a congestion factor on the most
//! popular segments. The most popular segments are chained into a cycle
//! (an arterial) so that walks entering it tend to stay on it.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{csv_err, parse_f64, Category, RoadNetwork, Segment, SegmentIdx, FEATURE_DIM};
use crate::student_t::gaussian_logpdf;
use crate::time::{TimeOfWeek, SECONDS_PER_DAY, SECONDS_PER_WEEK};
use crate::trajectory::{Trajectory, Traversal};

/// Lowest speed a draw can produce, m/s.
pub const MIN_DRAW_SPEED: f64 = 0.5;

/// Smallest allowed distance, in ground-truth standard deviations, between
/// the slowest mean and [`MIN_DRAW_SPEED`]; keeps truncation below 1e-6.
const MIN_TRUNCATION_Z: f64 = 4.8;

/// Lower clamp of the feature-driven share of the speed limit.
const MIN_FEATURE_FACTOR: f64 = 0.55;

/// Clamp, in standard deviations, of the per-segment effect.
const EFFECT_CLAMP: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_segments: usize,
    /// Proportions of motorway, trunk, urban, rural and other segments.
    pub category_mix: [f64; 5],
    pub n_trajectories: usize,
    /// Inclusive range of route lengths in segments.
    pub route_len: (usize, usize),
    /// Probability that a traversal after the first lacks both arrival and speed.
    pub missing_rate: f64,
    /// Multiplier on the mean speed inside the weekday peak windows.
    pub peak_factor: f64,
    /// Weekday windows as (start, end) seconds of day.
    pub peak_windows: Vec<(f64, f64)>,
    /// Share of trips departing around a weekday peak.
    pub peak_departure_share: f64,
    /// Zipf exponent of segment popularity.
    pub popularity_exponent: f64,
    /// Number of top-ranked segments chained into a cycle (0 disables it).
    pub arterial_len: usize,
    /// Share of segments, by popularity rank, that are congested.
    pub congested_share: f64,
    /// Multiplier on the mean speed of congested segments.
    pub congestion_factor: f64,
    /// Standard deviation of a per-segment log-normal speed multiplier that
    /// the features do not reveal; draws are clamped to ±2.5 deviations.
    pub segment_effect_sd: f64,
    /// Range of σ*/μ* per segment.
    pub sigma_fraction: (f64, f64),
    /// Number of weeks the trips are spread over.
    pub weeks: usize,
    /// Chronological split shares of training and validation trips; the
    /// remainder is the test set.
    pub split: (f64, f64),
    /// Probability that a segment carries a recorded speed limit.
    pub speed_limit_share: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_segments: 200,
            category_mix: [0.1, 0.15, 0.45, 0.2, 0.1],
            n_trajectories: 2000,
            route_len: (8, 24),
            missing_rate: 0.1,
            peak_factor: 0.7,
            peak_windows: vec![(7.0 * 3600.0, 9.0 * 3600.0), (16.0 * 3600.0, 18.0 * 3600.0)],
            peak_departure_share: 0.9,
            popularity_exponent: 1.5,
            arterial_len: 12,
            congested_share: 0.2,
            congestion_factor: 0.75,
            segment_effect_sd: 0.15,
            sigma_fraction: (0.05, 0.1),
            weeks: 8,
            split: (0.7, 0.1),
            speed_limit_share: 0.6,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.n_segments < 2 {
            return bad(format!("need at least 2 segments, got {}", self.n_segments));
        }
        if self.n_trajectories == 0 {
            return bad("need at least one trajectory".into());
        }
        let total: f64 = self.category_mix.iter().sum();
        if self
            .category_mix
            .iter()
            .any(|p| !(p.is_finite() && *p >= 0.0))
            || (total - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "category proportions must be nonnegative and sum to 1, got {total}"
            ));
        }
        if self.route_len.0 == 0 || self.route_len.0 > self.route_len.1 {
            return bad(format!("invalid route length range {:?}", self.route_len));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!(
                "missing rate must lie in [0, 1), got {}",
                self.missing_rate
            ));
        }
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.peak_factor) || !unit(self.congestion_factor) {
            return bad("slowdown factors must lie in (0, 1]".into());
        }
        if self
            .peak_windows
            .iter()
            .any(|&(a, b)| !(0.0 <= a && a < b && b <= SECONDS_PER_DAY))
        {
            return bad("peak windows must be increasing ranges within a day".into());
        }
        if !(0.0..=1.0).contains(&self.peak_departure_share)
            || !(0.0..=1.0).contains(&self.congested_share)
            || !(0.0..=1.0).contains(&self.speed_limit_share)
        {
            return bad("shares must lie in [0, 1]".into());
        }
        if self.peak_departure_share > 0.0 && self.peak_windows.is_empty() {
            return bad("peak departures need at least one peak window".into());
        }
        if !(self.popularity_exponent.is_finite() && self.popularity_exponent >= 0.0) {
            return bad("popularity exponent must be nonnegative".into());
        }
        let (lo, hi) = self.sigma_fraction;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!(
                "invalid sigma fraction range {:?}",
                self.sigma_fraction
            ));
        }
        // slowest off-peak mean: lowest limit times the smallest feature factor
        // and the congestion slowdown; σ* is fixed while the peak lowers the mean
        if !(self.segment_effect_sd.is_finite() && self.segment_effect_sd >= 0.0) {
            return bad("segment effect deviation must be nonnegative".into());
        }
        let slowest = 30.0 / 3.6
            * MIN_FEATURE_FACTOR
            * self.congestion_factor
            * (-EFFECT_CLAMP * self.segment_effect_sd).exp();
        if (slowest * self.peak_factor - MIN_DRAW_SPEED) / (hi * slowest) < MIN_TRUNCATION_Z {
            return bad("sigma fraction too wide: draws below 0.5 m/s would exceed 1e-6".into());
        }
        if self.arterial_len == 1 || self.arterial_len > self.n_segments.div_ceil(2) {
            return bad(format!(
                "arterial length must be 0 or between 2 and the number of intersections, got {}",
                self.arterial_len
            ));
        }
        if self.weeks == 0 {
            return bad("weeks must be at least 1".into());
        }
        let (tr, va) = self.split;
        if !(tr > 0.0 && va >= 0.0 && tr + va <= 1.0) {
            return bad(format!("invalid split {:?}", self.split));
        }
        Ok(())
    }
}

/// Ground-truth speed distribution of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub segment_id: String,
    /// Off-peak mean speed, m/s.
    pub mu: f64,
    /// Standard deviation, m/s (time invariant).
    pub sigma: f64,
    /// Multiplier on `mu` inside the peak windows.
    pub peak_factor: f64,
    /// Relative popularity weight used by the route sampler.
    pub popularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Indexed like the network's segments.
    pub segments: Vec<SegmentTruth>,
    pub peak_windows: Vec<(f64, f64)>,
}

impl GroundTruth {
    pub fn in_peak(&self, tau: TimeOfWeek) -> bool {
        let sod = tau.seconds_of_day();
        tau.day() < 5 && self.peak_windows.iter().any(|&(a, b)| a <= sod && sod < b)
    }

    /// Mean and standard deviation of the speed on `segment` at `tau`.
    pub fn distribution(&self, segment: SegmentIdx, tau: TimeOfWeek) -> (f64, f64) {
        let s = &self.segments[segment.get()];
        let mu = if self.in_peak(tau) {
            s.mu * s.peak_factor
        } else {
            s.mu
        };
        (mu, s.sigma)
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub network: RoadNetwork,
    pub train: Vec<Trajectory>,
    pub validation: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub truth: GroundTruth,
}

fn category_base_kmh(category: Category, rng: &mut ChaCha8Rng) -> f64 {
    match category {
        Category::Motorway => [110.0, 130.0][rng.random_range(0..2)],
        Category::Trunk => 80.0,
        Category::Urban => [30.0, 50.0][rng.random_range(0..2)],
        Category::Rural => [70.0, 80.0, 90.0][rng.random_range(0..3)],
        Category::Other => [50.0, 60.0, 80.0][rng.random_range(0..3)],
    }
}

fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Generates a network, chronologically split trajectories and the ground truth.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_nodes = spec.n_segments.div_ceil(2).max(2);

    // Popularity ranking. The arterial takes one segment from each of
    // `arterial_len` distinct intersections; the rest follow in random order.
    let mut nodes: Vec<usize> = (0..n_nodes).collect();
    nodes.shuffle(&mut rng);
    let arterial: Vec<usize> = nodes[..spec.arterial_len].iter().map(|&v| 2 * v).collect();
    let mut rest: Vec<usize> = (0..spec.n_segments)
        .filter(|s| !arterial.contains(s))
        .collect();
    rest.shuffle(&mut rng);
    let ranking: Vec<usize> = arterial.iter().copied().chain(rest).collect();

    // segments: node v owns segments 2v and 2v+1
    let mut segments = Vec::with_capacity(spec.n_segments);
    let mut base = Vec::with_capacity(spec.n_segments);
    let mut sigma_frac = Vec::with_capacity(spec.n_segments);
    let city: Vec<bool> = (0..n_nodes).map(|_| rng.random_bool(0.4)).collect();
    for k in 0..spec.n_segments {
        let source = k / 2;
        let mut target = rng.random_range(0..n_nodes - 1);
        if target >= source {
            target += 1;
        }
        if let Some(r) = arterial.iter().position(|&a| a == k) {
            target = arterial[(r + 1) % arterial.len()] / 2;
        }
        let category = Category::ALL[sample_index(&spec.category_mix, &mut rng)];
        let limit_kmh = category_base_kmh(category, &mut rng);
        let length: f64 = match category {
            Category::Motorway | Category::Trunk => rng.random_range(400.0..2000.0),
            Category::Urban => rng.random_range(50.0..400.0),
            _ => rng.random_range(150.0..1200.0),
        };
        let lanes = match category {
            Category::Motorway => rng.random_range(2..4),
            Category::Trunk => rng.random_range(1..3),
            _ => 1,
        } as f64;
        let curvature: f64 = rng.random_range(0.0..1.0);
        let signals: f64 = if category == Category::Urban {
            rng.random_range(0.0..1.0)
        } else {
            0.0
        };
        let (in_src, in_tgt) = if category == Category::Urban {
            (true, city[target])
        } else {
            (city[source], city[target])
        };

        let mut features = [0.0; FEATURE_DIM];
        features[0] = length.ln();
        features[1 + category.index()] = 1.0;
        features[6] = limit_kmh / 100.0;
        features[7] = lanes;
        features[8] = curvature;
        features[9] = signals;
        features[10] = if in_src || in_tgt { 1.0 } else { 0.0 };
        for f in features.iter_mut().skip(11) {
            *f = rng.random_range(-1.0..1.0);
        }

        // mean speed is a smooth function of the features
        let factor = 0.85 - 0.12 * curvature - 0.2 * signals
            + 0.03 * (lanes - 1.0)
            + 0.04 * (length.ln() - 6.0).clamp(-1.5, 1.5);
        let effect: f64 = Normal::new(0.0, 1.0)
            .map_err(|e| Error::InfeasibleSpec(e.to_string()))?
            .sample(&mut rng);
        let effect = (effect.clamp(-EFFECT_CLAMP, EFFECT_CLAMP) * spec.segment_effect_sd).exp();
        base.push(limit_kmh / 3.6 * factor.clamp(MIN_FEATURE_FACTOR, 1.0) * effect);
        sigma_frac.push(rng.random_range(spec.sigma_fraction.0..=spec.sigma_fraction.1));

        let speed_limit = rng
            .random_bool(spec.speed_limit_share)
            .then(|| limit_kmh / 3.6);
        segments.push(Segment {
            id: format!("s{k}"),
            source: format!("n{source}"),
            target: format!("n{target}"),
            length,
            category,
            in_city_source: in_src,
            in_city_target: in_tgt,
            speed_limit,
            features,
        });
    }
    let network = RoadNetwork::new(segments)?;

    // popularity: Zipf over the ranking
    let mut popularity = vec![0.0; spec.n_segments];
    let mut congested = vec![false; spec.n_segments];
    let n_congested = (spec.congested_share * spec.n_segments as f64).round() as usize;
    for (rank, &s) in ranking.iter().enumerate() {
        popularity[s] = 1.0 / ((rank + 1) as f64).powf(spec.popularity_exponent);
        congested[s] = rank < n_congested;
    }
    let truth = GroundTruth {
        segments: (0..spec.n_segments)
            .map(|s| {
                let mu = base[s]
                    * if congested[s] {
                        spec.congestion_factor
                    } else {
                        1.0
                    };
                SegmentTruth {
                    segment_id: network.segments()[s].id.clone(),
                    mu,
                    sigma: sigma_frac[s] * mu,
                    peak_factor: spec.peak_factor,
                    popularity: popularity[s],
                }
            })
            .collect(),
        peak_windows: spec.peak_windows.clone(),
    };

    // trips in absolute time, then split chronologically
    let mut starts: Vec<f64> = (0..spec.n_trajectories)
        .map(|_| {
            let week = rng.random_range(0..spec.weeks) as f64;
            let tow = if rng.random_bool(spec.peak_departure_share) {
                let day = rng.random_range(0..5) as f64;
                let (a, b) = spec.peak_windows[rng.random_range(0..spec.peak_windows.len())];
                day * SECONDS_PER_DAY + rng.random_range(a..b)
            } else {
                rng.random_range(0.0..SECONDS_PER_WEEK)
            };
            week * SECONDS_PER_WEEK + tow
        })
        .collect();
    starts.sort_by(f64::total_cmp);

    let mut trips = Vec::with_capacity(spec.n_trajectories);
    for (j, &start) in starts.iter().enumerate() {
        let n = rng.random_range(spec.route_len.0..=spec.route_len.1);
        let mut seg = SegmentIdx(sample_index(&popularity, &mut rng) as u32);
        let mut tau = TimeOfWeek::wrapping(start);
        let mut traversals = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                let succ = network.successors(seg);
                let w: Vec<f64> = succ.iter().map(|s| popularity[s.get()]).collect();
                seg = succ[sample_index(&w, &mut rng)];
            }
            let (mu, sigma) = truth.distribution(seg, tau);
            let speed = Normal::new(mu, sigma)
                .map_err(|e| Error::InfeasibleSpec(e.to_string()))?
                .sample(&mut rng)
                .max(MIN_DRAW_SPEED);
            let hidden = i > 0 && rng.random_bool(spec.missing_rate);
            traversals.push(Traversal {
                segment: seg,
                arrival: (!hidden).then_some(tau),
                speed: (!hidden).then_some(speed),
            });
            tau = tau.advance(network.segment(seg).length / speed);
        }
        trips.push(Trajectory::new(&network, format!("t{j:05}"), traversals)?);
    }
    let n_train = ((spec.split.0 * spec.n_trajectories as f64).round() as usize).max(1);
    let n_val = (spec.split.1 * spec.n_trajectories as f64).round() as usize;
    let n_val = n_val.min(spec.n_trajectories - n_train);
    let test = trips.split_off(n_train + n_val);
    let validation = trips.split_off(n_train);
    Ok(SynthData {
        network,
        train: trips,
        validation,
        test,
        truth,
    })
}

/// Mean per-trajectory NLL of observed speeds under the true densities.
pub fn oracle_nll(truth: &GroundTruth, trajectories: &[Trajectory]) -> Result<f64> {
    if trajectories.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for tr in trajectories {
        total += oracle_trajectory_nll(truth, tr)?;
    }
    Ok(total / trajectories.len() as f64)
}

pub fn oracle_trajectory_nll(truth: &GroundTruth, trajectory: &Trajectory) -> Result<f64> {
    let mut sum = 0.0;
    for (i, t) in trajectory.observed() {
        let tr = &trajectory.traversals()[i];
        if tr.segment.get() >= truth.segments.len() {
            return Err(Error::UnknownSegment {
                line: 0,
                id: format!("#{}", tr.segment.0),
            });
        }
        let tau = tr.arrival.ok_or(Error::MissingArrival { index: i })?;
        let (mu, sigma) = truth.distribution(tr.segment, tau);
        sum -= gaussian_logpdf(mu, sigma, t);
    }
    Ok(sum)
}

/// Sidecar CSV with columns
/// `segment_id,mu_mps,sigma_mps,peak_factor,popularity,peak_windows`, where
/// the last column lists `start-end` second ranges separated by `;`.
pub fn write_ground_truth<W: Write>(truth: &GroundTruth, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let windows = truth
        .peak_windows
        .iter()
        .map(|(a, b)| format!("{a}-{b}"))
        .collect::<Vec<_>>()
        .join(";");
    w.write_record([
        "segment_id",
        "mu_mps",
        "sigma_mps",
        "peak_factor",
        "popularity",
        "peak_windows",
    ])
    .map_err(csv_err)?;
    for s in &truth.segments {
        w.write_record([
            s.segment_id.clone(),
            s.mu.to_string(),
            s.sigma.to_string(),
            s.peak_factor.to_string(),
            s.popularity.to_string(),
            windows.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<ground truth>", e))?;
    Ok(())
}

/// Reads a sidecar written by [`write_ground_truth`], aligning rows with
/// the network's segment order.
pub fn read_ground_truth<R: Read>(reader: R, network: &RoadNetwork) -> Result<GroundTruth> {
    let mut r = csv::Reader::from_reader(reader);
    let mut segments: Vec<Option<SegmentTruth>> = vec![None; network.len()];
    let mut windows = Vec::new();
    for (k, row) in r.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = k as u64 + 2;
        if row.len() != 6 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 6 columns, found {}", row.len()),
            });
        }
        let idx = network
            .index_of(&row[0])
            .ok_or_else(|| Error::UnknownSegment {
                line,
                id: row[0].to_string(),
            })?;
        segments[idx.get()] = Some(SegmentTruth {
            segment_id: row[0].to_string(),
            mu: parse_f64(line, "mu_mps", &row[1])?,
            sigma: parse_f64(line, "sigma_mps", &row[2])?,
            peak_factor: parse_f64(line, "peak_factor", &row[3])?,
            popularity: parse_f64(line, "popularity", &row[4])?,
        });
        if k == 0 && !row[5].is_empty() {
            for part in row[5].split(';') {
                let (a, b) = part.split_once('-').ok_or_else(|| Error::MalformedRow {
                    line,
                    message: format!("bad peak window `{part}`"),
                })?;
                windows.push((
                    parse_f64(line, "peak_windows", a)?,
                    parse_f64(line, "peak_windows", b)?,
                ));
            }
        }
    }
    let segments = segments
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            s.ok_or_else(|| {
                Error::Snapshot(format!(
                    "ground truth lacks segment `{}`",
                    network.segments()[k].id
                ))
            })
        })
        .collect::<Result<_>>()?;
    Ok(GroundTruth {
        segments,
        peak_windows: windows,
    })
}
