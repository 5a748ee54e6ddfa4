//! The four estimators: the aggregation baseline (AGG), the plain neural
//! prior (GRU), and the unified models that update the neural prior with
//! selected records (UniTE-DIS, trained with the posterior in the loss, and
//! UniTE-GEN, which reuses GRU weights and adds the posterior only when
//! estimating).

use serde::{Deserialize, Serialize};

use crate::conjugate::{posterior_update, sample_stats, NormalGamma};
use crate::error::{Error, Result};
use crate::network::{kmh_to_mps, Category, RoadNetwork, Segment, SegmentIdx};
use crate::nn::forward::MIN_PROPAGATION_SPEED;
use crate::nn::{ModelKind, NeuralModel};
use crate::route::Route;
use crate::store::{RecordStore, SelectionParams};
use crate::student_t::{gaussian_logpdf, posterior_predictive, studentt_logpdf, StudentT};
use crate::time::TimeOfWeek;

/// Smallest standard deviation AGG reports when it has records.
pub const AGG_SIGMA_FLOOR: f64 = 1e-3;

/// Speed used when a segment carries no speed limit, m/s.
pub fn speed_limit_heuristic(segment: &Segment) -> f64 {
    if let Some(limit) = segment.speed_limit {
        return limit;
    }
    let kmh = match segment.category {
        Category::Motorway => 130.0,
        Category::Trunk => 80.0,
        _ if segment.in_city() => 50.0,
        _ => 80.0,
    };
    kmh_to_mps(kmh)
}

/// Predictive distribution over the travel speed of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Predictive {
    StudentT(StudentT),
    Gaussian { mu: f64, sigma: f64 },
}

impl Predictive {
    pub fn logpdf(&self, t: f64) -> f64 {
        match self {
            Predictive::StudentT(d) => studentt_logpdf(d, t),
            Predictive::Gaussian { mu, sigma } => gaussian_logpdf(*mu, *sigma, t),
        }
    }

    /// Negative log-likelihood of an observed speed.
    pub fn snll(&self, t: f64) -> f64 {
        -self.logpdf(t)
    }

    pub fn location(&self) -> f64 {
        match self {
            Predictive::StudentT(d) => d.loc(),
            Predictive::Gaussian { mu, .. } => *mu,
        }
    }
}

/// Output for one segment of a route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentEstimate {
    pub segment: SegmentIdx,
    /// Arrival time used for the estimate (recorded or propagated).
    pub arrival: TimeOfWeek,
    /// Number of records the estimator selected.
    pub records: usize,
    /// Neural prior, absent for AGG.
    pub prior: Option<NormalGamma>,
    /// Posterior after the selected records, absent for AGG.
    pub posterior: Option<NormalGamma>,
    pub predictive: Predictive,
    /// Expected speed `μ̂`, m/s.
    pub expected_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggConfig {
    /// Minimum number of records before the records replace the heuristic.
    pub k: usize,
    pub selection: SelectionParams,
    pub mean_factor: f64,
    pub std_factor: f64,
}

impl AggConfig {
    pub fn new(k: usize, selection: SelectionParams) -> Result<Self> {
        Self::with_factors(k, selection, 0.79, 0.07)
    }

    pub fn with_factors(
        k: usize,
        selection: SelectionParams,
        mean_factor: f64,
        std_factor: f64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidValue(
                "AGG threshold k must be at least 1".into(),
            ));
        }
        if !(mean_factor > 0.0
            && std_factor > 0.0
            && mean_factor.is_finite()
            && std_factor.is_finite())
        {
            return Err(Error::InvalidValue(format!(
                "AGG factors must be positive, got {mean_factor} and {std_factor}"
            )));
        }
        Ok(AggConfig {
            k,
            selection,
            mean_factor,
            std_factor,
        })
    }
}

/// AGG for segment `i` of `route` at arrival `tau`.
pub fn agg_estimate(
    store: &RecordStore,
    network: &RoadNetwork,
    route: &Route,
    i: usize,
    tau: TimeOfWeek,
    cfg: &AggConfig,
) -> SegmentEstimate {
    let segment = route.segments()[i];
    let records = store.select_records(route, i, tau, &cfg.selection);
    let (mu, sigma) = agg_moments(&records, network.segment(segment), cfg);
    SegmentEstimate {
        segment,
        arrival: tau,
        records: records.len(),
        prior: None,
        posterior: None,
        predictive: Predictive::Gaussian { mu, sigma },
        expected_speed: mu,
    }
}

/// Gaussian parameters of AGG given the selected records.
pub fn agg_moments(records: &[f64], segment: &Segment, cfg: &AggConfig) -> (f64, f64) {
    if records.len() >= cfg.k {
        let stats = sample_stats(records);
        let sigma = if stats.m > 1 {
            stats.var_biased.sqrt()
        } else {
            cfg.std_factor * stats.mean
        };
        (stats.mean, sigma.max(AGG_SIGMA_FLOOR))
    } else {
        let mu = cfg.mean_factor * speed_limit_heuristic(segment);
        (mu, cfg.std_factor * mu)
    }
}

/// Speed used to advance an unrecorded arrival time past a segment.
pub fn propagation_speed(expected_speed: f64) -> f64 {
    expected_speed.max(MIN_PROPAGATION_SPEED)
}

/// Which arrival times an estimator may use beyond the departure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalMode {
    /// Only the first arrival is known; later ones are propagated.
    DepartureOnly,
    /// Every recorded arrival is used; missing ones are propagated.
    Recorded,
}

impl ArrivalMode {
    pub fn arrivals(self, recorded: &[Option<TimeOfWeek>]) -> Vec<Option<TimeOfWeek>> {
        match self {
            ArrivalMode::Recorded => recorded.to_vec(),
            ArrivalMode::DepartureOnly => {
                let mut out = vec![None; recorded.len()];
                if let Some(first) = recorded.first() {
                    out[0] = *first;
                }
                out
            }
        }
    }
}

/// A configured estimator borrowing its model and record store.
#[derive(Debug, Clone)]
pub enum Estimator<'a> {
    Agg {
        store: &'a RecordStore,
        config: AggConfig,
    },
    Gru {
        model: &'a NeuralModel,
    },
    UniteDis {
        model: &'a NeuralModel,
        store: &'a RecordStore,
        selection: SelectionParams,
    },
    UniteGen {
        model: &'a NeuralModel,
        store: &'a RecordStore,
        selection: SelectionParams,
    },
}

fn check_width(store: &RecordStore, selection: &SelectionParams) -> Result<()> {
    if selection.c > store.c_max() {
        return Err(Error::InvalidValue(format!(
            "context width c={} exceeds the record store's maximum {}",
            selection.c,
            store.c_max()
        )));
    }
    Ok(())
}

impl<'a> Estimator<'a> {
    pub fn agg(store: &'a RecordStore, config: AggConfig) -> Result<Self> {
        check_width(store, &config.selection)?;
        Ok(Estimator::Agg { store, config })
    }

    pub fn gru(model: &'a NeuralModel) -> Result<Self> {
        if model.kind != ModelKind::Gru {
            return Err(Error::InvalidValue(format!(
                "the GRU estimator needs a model trained as `gru`, got `{}`",
                model.kind
            )));
        }
        Ok(Estimator::Gru { model })
    }

    pub fn unite_dis(
        model: &'a NeuralModel,
        store: &'a RecordStore,
        selection: SelectionParams,
    ) -> Result<Self> {
        if model.kind != ModelKind::UniteDis {
            return Err(Error::InvalidValue(format!(
                "UniTE-DIS needs a model trained as `unite-dis`, got `{}`",
                model.kind
            )));
        }
        check_width(store, &selection)?;
        Ok(Estimator::UniteDis {
            model,
            store,
            selection,
        })
    }

    /// UniTE-GEN reuses the weights of a plain GRU model.
    pub fn unite_gen(
        model: &'a NeuralModel,
        store: &'a RecordStore,
        selection: SelectionParams,
    ) -> Result<Self> {
        if model.kind != ModelKind::Gru {
            return Err(Error::InvalidValue(format!(
                "UniTE-GEN reuses a model trained as `gru`, got `{}`",
                model.kind
            )));
        }
        check_width(store, &selection)?;
        Ok(Estimator::UniteGen {
            model,
            store,
            selection,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Agg { .. } => "agg",
            Estimator::Gru { .. } => "gru",
            Estimator::UniteDis { .. } => "unite-dis",
            Estimator::UniteGen { .. } => "unite-gen",
        }
    }

    /// Estimates every segment of `route`. `arrivals[0]` must be present;
    /// missing later arrivals are propagated from the expected speeds.
    /// `leave_out` excludes one trip's records from selection.
    pub fn estimate_route(
        &self,
        network: &RoadNetwork,
        route: &Route,
        arrivals: &[Option<TimeOfWeek>],
        leave_out: Option<&str>,
    ) -> Result<Vec<SegmentEstimate>> {
        if arrivals.len() != route.len() {
            return Err(Error::LengthMismatch {
                left: route.len(),
                right: arrivals.len(),
            });
        }
        let with_leave_out = |sel: &SelectionParams| {
            let mut sel = sel.clone();
            sel.leave_out_trip = leave_out.map(str::to_string);
            sel
        };
        match self {
            Estimator::Agg { store, config } => {
                let mut cfg = config.clone();
                cfg.selection = with_leave_out(&config.selection);
                agg_route(store, network, route, arrivals, &cfg)
            }
            Estimator::Gru { model } => neural_route(model, None, network, route, arrivals),
            Estimator::UniteDis {
                model,
                store,
                selection,
            }
            | Estimator::UniteGen {
                model,
                store,
                selection,
            } => {
                let sel = with_leave_out(selection);
                neural_route(model, Some((store, &sel)), network, route, arrivals)
            }
        }
    }
}

fn agg_route(
    store: &RecordStore,
    network: &RoadNetwork,
    route: &Route,
    arrivals: &[Option<TimeOfWeek>],
    cfg: &AggConfig,
) -> Result<Vec<SegmentEstimate>> {
    let mut tau = arrivals[0].ok_or(Error::MissingArrival { index: 0 })?;
    let mut out: Vec<SegmentEstimate> = Vec::with_capacity(route.len());
    for i in 0..route.len() {
        if i > 0 {
            tau = match arrivals[i] {
                Some(t) => t,
                None => {
                    let prev = &out[i - 1];
                    let length = network.segment(prev.segment).length;
                    tau.advance(length / propagation_speed(prev.expected_speed))
                }
            };
        }
        out.push(agg_estimate(store, network, route, i, tau, cfg));
    }
    Ok(out)
}

/// Forward pass of a neural model, updating each prior with the records
/// selected at the arrival time the pass reaches. Without a store the
/// posterior is the prior.
pub fn neural_route(
    model: &NeuralModel,
    evidence: Option<(&RecordStore, &SelectionParams)>,
    network: &RoadNetwork,
    route: &Route,
    arrivals: &[Option<TimeOfWeek>],
) -> Result<Vec<SegmentEstimate>> {
    let prepared = model.prepare(network, route);
    let segments = route.segments();
    let mut counts = vec![0usize; route.len()];
    let out = model.forward(&prepared, arrivals, |i, tau, prior| {
        Ok(match evidence {
            None => *prior,
            Some((store, sel)) => {
                let (records, _) = store.select_records_counted(segments, i, tau, sel);
                counts[i] = records.len();
                posterior_update(prior, &sample_stats(&records))
            }
        })
    })?;
    Ok((0..route.len())
        .map(|i| {
            let post = out.posteriors[i];
            SegmentEstimate {
                segment: segments[i],
                arrival: out.arrivals[i],
                records: counts[i],
                prior: Some(out.priors[i]),
                posterior: Some(post),
                predictive: Predictive::StudentT(posterior_predictive(&post)),
                expected_speed: post.mu(),
            }
        })
        .collect())
}
