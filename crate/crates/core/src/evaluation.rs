//! Metrics and analyses: dataset NLL, travel-time MAE and MAPE, robustness
//! by record availability, prior sNLL by segment frequency, and sweeps.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{propagation_speed, ArrivalMode, Estimator, SegmentEstimate};
use crate::network::RoadNetwork;
use crate::store::RecordStore;
use crate::student_t::snll;
use crate::trajectory::Trajectory;

/// Sum of sNLL over the traversals with an observed speed.
pub fn trajectory_nll(estimates: &[SegmentEstimate], trajectory: &Trajectory) -> f64 {
    trajectory
        .observed()
        .map(|(i, t)| estimates[i].predictive.snll(t))
        .sum()
}

/// `Σ lᵢ / μ̂ᵢ` in seconds.
pub fn point_travel_time(lengths: &[f64], speeds: &[f64]) -> Result<f64> {
    if lengths.len() != speeds.len() {
        return Err(Error::LengthMismatch {
            left: lengths.len(),
            right: speeds.len(),
        });
    }
    let mut total = 0.0;
    for (position, (&l, &v)) in lengths.iter().zip(speeds).enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonpositiveSpeed { position, speed: v });
        }
        total += l / v;
    }
    Ok(total)
}

/// Mean absolute error and mean absolute percentage error (in percent).
pub fn mae_mape(estimates: &[f64], truths: &[f64]) -> Result<(f64, f64)> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truths.len(),
        });
    }
    if estimates.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    if let Some(bad) = truths.iter().find(|&&y| y.is_nan() || y <= 0.0) {
        return Err(Error::InvalidValue(format!(
            "ground-truth travel times must be positive, got {bad}"
        )));
    }
    let n = estimates.len() as f64;
    let mae = estimates
        .iter()
        .zip(truths)
        .map(|(e, y)| (e - y).abs())
        .sum::<f64>()
        / n;
    let mape = estimates
        .iter()
        .zip(truths)
        .map(|(e, y)| (e - y).abs() / y)
        .sum::<f64>()
        / n
        * 100.0;
    Ok((mae, mape))
}

/// Estimates of every trajectory, in input order.
pub fn run_estimator(
    estimator: &Estimator<'_>,
    network: &RoadNetwork,
    trajectories: &[Trajectory],
    mode: ArrivalMode,
    parallel: bool,
) -> Result<Vec<Vec<SegmentEstimate>>> {
    let one = |tr: &Trajectory| {
        estimator.estimate_route(network, tr.route(), &mode.arrivals(&tr.arrivals()), None)
    };
    if parallel {
        trajectories.par_iter().map(one).collect()
    } else {
        trajectories.iter().map(one).collect()
    }
}

/// Headline metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub algorithm: String,
    /// Mean per-trajectory NLL.
    pub nll: f64,
    /// Travel-time mean absolute error, seconds.
    pub mae: f64,
    /// Travel-time mean absolute percentage error, percent.
    pub mape: f64,
    pub n_trajectories: usize,
    /// Trajectories with every speed observed, used for MAE and MAPE.
    pub n_travel_times: usize,
    pub n_observed_traversals: usize,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        format!(
            "algorithm      {}\ntrajectories   {}\nNLL            {:.4}\nMAE (s)        {:.3}\nMAPE (%)       {:.3}\n",
            self.algorithm, self.n_trajectories, self.nll, self.mae, self.mape
        )
    }
}

/// Point travel time of a route estimate. Expected speeds are floored at the
/// same minimum that arrival propagation uses.
pub fn estimated_travel_time(network: &RoadNetwork, estimates: &[SegmentEstimate]) -> Result<f64> {
    let lengths: Vec<f64> = estimates
        .iter()
        .map(|e| network.segment(e.segment).length)
        .collect();
    let speeds: Vec<f64> = estimates
        .iter()
        .map(|e| propagation_speed(e.expected_speed))
        .collect();
    point_travel_time(&lengths, &speeds)
}

pub fn metrics(
    algorithm: &str,
    network: &RoadNetwork,
    trajectories: &[Trajectory],
    estimates: &[Vec<SegmentEstimate>],
) -> Result<MetricsReport> {
    if trajectories.len() != estimates.len() {
        return Err(Error::LengthMismatch {
            left: trajectories.len(),
            right: estimates.len(),
        });
    }
    let mut nll = 0.0;
    let mut observed = 0;
    let mut est_tt = Vec::new();
    let mut true_tt = Vec::new();
    for (tr, est) in trajectories.iter().zip(estimates) {
        nll += trajectory_nll(est, tr);
        observed += tr.observed().count();
        if let Some(y) = tr.travel_time(network) {
            est_tt.push(estimated_travel_time(network, est)?);
            true_tt.push(y);
        }
    }
    let (mae, mape) = mae_mape(&est_tt, &true_tt)?;
    Ok(MetricsReport {
        algorithm: algorithm.to_string(),
        nll: if trajectories.is_empty() {
            f64::NAN
        } else {
            nll / trajectories.len() as f64
        },
        mae,
        mape,
        n_trajectories: trajectories.len(),
        n_travel_times: true_tt.len(),
        n_observed_traversals: observed,
    })
}

pub fn evaluate(
    estimator: &Estimator<'_>,
    network: &RoadNetwork,
    trajectories: &[Trajectory],
    mode: ArrivalMode,
    parallel: bool,
) -> Result<MetricsReport> {
    let est = run_estimator(estimator, network, trajectories, mode, parallel)?;
    metrics(estimator.name(), network, trajectories, &est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub count: usize,
    pub mean_snll: f64,
}

/// Mean sNLL by the number of training records available at the
/// ground-truth arrival (`c = 0`, window `delta`, own trip excluded).
/// Counts with no traversals are absent.
pub fn robustness_curve(
    store: &RecordStore,
    trajectories: &[Trajectory],
    estimates: &[Vec<SegmentEstimate>],
    delta: f64,
) -> Result<BTreeMap<usize, BucketStat>> {
    let mut sums: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for (tr, est) in trajectories.iter().zip(estimates) {
        for (i, t) in tr.observed() {
            let count = store.record_count_at_truth(tr, i, delta)?;
            let entry = sums.entry(count).or_insert((0, 0.0));
            entry.0 += 1;
            entry.1 += est[i].predictive.snll(t);
        }
    }
    Ok(sums
        .into_iter()
        .map(|(k, (n, s))| {
            (
                k,
                BucketStat {
                    count: n,
                    mean_snll: s / n as f64,
                },
            )
        })
        .collect())
}

/// Observed training traversals per segment.
pub fn segment_frequencies(n_segments: usize, train: &[Trajectory]) -> Vec<usize> {
    let mut freq = vec![0; n_segments];
    for tr in train {
        for (i, _) in tr.observed() {
            freq[tr.traversals()[i].segment.get()] += 1;
        }
    }
    freq
}

/// Prior sNLL split by the training frequency of the traversed segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyQuartiles {
    /// 25th and 75th percentile of training frequency over evaluated segments.
    pub p25: f64,
    pub p75: f64,
    /// Traversals on segments with frequency ≤ p25.
    pub low: BucketStat,
    /// Traversals on segments with frequency ≥ p75.
    pub high: BucketStat,
}

/// Linear-interpolation percentile of sorted values.
fn percentile(sorted: &[usize], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] as f64 + (pos - lo as f64) * (sorted[hi] as f64 - sorted[lo] as f64)
}

/// Quartile thresholds are taken over the distinct segments with observed
/// traversals in `trajectories`. Estimates must carry a prior.
pub fn prior_snll_by_frequency(
    trajectories: &[Trajectory],
    estimates: &[Vec<SegmentEstimate>],
    frequencies: &[usize],
) -> Result<FrequencyQuartiles> {
    let mut seen: Vec<usize> = trajectories
        .iter()
        .flat_map(|tr| {
            tr.observed()
                .map(move |(i, _)| tr.traversals()[i].segment.get())
        })
        .collect();
    seen.sort_unstable();
    seen.dedup();
    if seen.is_empty() {
        return Err(Error::InvalidValue("no observed traversals".into()));
    }
    let mut freqs: Vec<usize> = seen.iter().map(|&s| frequencies[s]).collect();
    freqs.sort_unstable();
    let p25 = percentile(&freqs, 0.25);
    let p75 = percentile(&freqs, 0.75);
    let (mut low, mut high) = ((0usize, 0.0), (0usize, 0.0));
    for (tr, est) in trajectories.iter().zip(estimates) {
        for (i, t) in tr.observed() {
            let prior = est[i]
                .prior
                .ok_or_else(|| Error::InvalidValue("prior sNLL needs a neural estimator".into()))?;
            let f = frequencies[tr.traversals()[i].segment.get()] as f64;
            let v = snll(&prior, t);
            if f <= p25 {
                low.0 += 1;
                low.1 += v;
            }
            if f >= p75 {
                high.0 += 1;
                high.1 += v;
            }
        }
    }
    let stat = |(n, s): (usize, f64)| BucketStat {
        count: n,
        mean_snll: if n == 0 { f64::NAN } else { s / n as f64 },
    };
    Ok(FrequencyQuartiles {
        p25,
        p75,
        low: stat(low),
        high: stat(high),
    })
}

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.1, 0.2, 0.4, 0.8, 1.0];
pub const GRID_C: [usize; 4] = [0, 1, 2, 4];
pub const GRID_DELTA_MINUTES: [f64; 4] = [15.0, 30.0, 60.0, 120.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionResult {
    pub fraction: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: usize,
    pub delta_minutes: f64,
    pub nll: f64,
}

/// Runs `runner` for every training fraction. The runner is expected to keep
/// the number of optimizer steps fixed across fractions.
pub fn data_efficiency_sweep<F>(
    fractions: &[f64],
    parallel: bool,
    runner: F,
) -> Result<Vec<FractionResult>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if fractions.is_empty() {
        return Err(Error::InvalidValue("empty fraction grid".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidValue(format!(
            "fractions must lie in (0, 1], got {f}"
        )));
    }
    let one = |&fraction: &f64| runner(fraction).map(|nll| FractionResult { fraction, nll });
    if parallel {
        fractions.par_iter().map(one).collect()
    } else {
        fractions.iter().map(one).collect()
    }
}

/// Runs `runner(c, δ minutes)` over the grid in row-major (c, δ) order.
pub fn record_selection_sweep<F>(
    cs: &[usize],
    deltas: &[f64],
    parallel: bool,
    runner: F,
) -> Result<Vec<GridCell>>
where
    F: Fn(usize, f64) -> Result<f64> + Sync,
{
    if cs.is_empty() || deltas.is_empty() {
        return Err(Error::InvalidValue("empty selection grid".into()));
    }
    let cells: Vec<(usize, f64)> = cs
        .iter()
        .flat_map(|&c| deltas.iter().map(move |&d| (c, d)))
        .collect();
    let one = |&(c, delta_minutes): &(usize, f64)| {
        runner(c, delta_minutes).map(|nll| GridCell {
            c,
            delta_minutes,
            nll,
        })
    };
    if parallel {
        cells.par_iter().map(one).collect()
    } else {
        cells.iter().map(one).collect()
    }
}

/// Seeded subset holding `round(fraction · n)` trajectories (at least one),
/// kept in their original order.
pub fn training_fraction(train: &[Trajectory], fraction: f64, seed: u64) -> Vec<Trajectory> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let n = ((fraction * train.len() as f64).round() as usize).clamp(1, train.len().max(1));
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let mut keep = idx[..n.min(train.len())].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|k| train[k].clone()).collect()
}

pub fn write_robustness_csv<W: Write>(
    curve: &BTreeMap<usize, BucketStat>,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "bucket,count,mean_snll")?;
    for (k, s) in curve {
        writeln!(w, "{k},{},{}", s.count, s.mean_snll)?;
    }
    Ok(())
}

pub fn write_fractions_csv<W: Write>(rows: &[FractionResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "fraction,nll")?;
    for r in rows {
        writeln!(w, "{},{}", r.fraction, r.nll)?;
    }
    Ok(())
}

pub fn write_grid_csv<W: Write>(rows: &[GridCell], mut w: W) -> std::io::Result<()> {
    writeln!(w, "c,delta_minutes,nll")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.c, r.delta_minutes, r.nll)?;
    }
    Ok(())
}
