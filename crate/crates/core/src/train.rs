//! Training of the neural prior as a plain GRU or as UniTE-DIS.
//!
//! The loss of a trajectory is the sum of per-traversal sNLL over observed
//! speeds. For UniTE-DIS the predictive is the posterior after records
//! selected with the trajectory's own trip left out; for GRU it is the prior.
//! A batch loss is the mean over its trajectories. Training uses recorded
//! arrival times where present.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{
    posterior_update, posterior_update_backward, sample_stats, NormalGammaGrad, SampleStats,
};
use crate::error::{Error, Result};
use crate::network::RoadNetwork;
use crate::nn::{
    adam_step, AdamState, FeatureScaler, ModelKind, ModelParams, NeuralModel, Weights,
};
use crate::store::{RecordStore, SelectionParams};
use crate::student_t::snll_with_grad;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub a: f64,
    pub epsilon: f64,
    /// Record selection for UniTE-DIS; ignored for GRU.
    pub selection: SelectionParams,
    /// When set, training stops after exactly this many optimizer steps,
    /// cycling through epochs as needed. `epochs` is then ignored.
    pub total_steps: Option<usize>,
    /// Evaluate per-trajectory gradients on the rayon pool.
    pub parallel: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidValue(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidValue("batch size must be at least 1".into()));
        }
        if self.epochs == 0 && self.total_steps.is_none() {
            return Err(Error::InvalidValue("epochs must be at least 1".into()));
        }
        if self.total_steps == Some(0) {
            return Err(Error::InvalidValue("total steps must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            epochs: 10,
            batch_size: 128,
            seed: 0,
            a: crate::nn::DEFAULT_A,
            epsilon: crate::nn::DEFAULT_EPSILON,
            selection: SelectionParams::from_minutes(1, 120.0).expect("valid default"),
            total_steps: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-trajectory NLL over the epoch's batches, before each update.
    pub train_nll: f64,
    pub val_nll: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the best validation NLL.
    pub model: NeuralModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Loss and weight gradient of one trajectory.
pub fn trajectory_loss(
    model: &NeuralModel,
    network: &RoadNetwork,
    trajectory: &Trajectory,
    evidence: Option<(&RecordStore, &SelectionParams)>,
) -> Result<(f64, Weights)> {
    let prepared = model.prepare(network, trajectory.route());
    let segments = trajectory.route().segments();
    let mut stats = vec![SampleStats::EMPTY; trajectory.len()];
    let out = model.forward(&prepared, &trajectory.arrivals(), |i, tau, prior| {
        Ok(match evidence {
            None => *prior,
            Some((store, sel)) => {
                let (records, _) = store.select_records_counted(segments, i, tau, sel);
                stats[i] = sample_stats(&records);
                posterior_update(prior, &stats[i])
            }
        })
    })?;
    let mut loss = 0.0;
    let mut grad_priors = vec![NormalGammaGrad::default(); trajectory.len()];
    for (i, t) in trajectory.observed() {
        let (value, grad_post) = snll_with_grad(&out.posteriors[i], t);
        loss += value;
        grad_priors[i] = posterior_update_backward(&out.priors[i], &stats[i], &grad_post);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss of trajectory `{}`",
            trajectory.id()
        )));
    }
    Ok((loss, out.tape.backward(&model.params.weights, &grad_priors)))
}

/// Mean per-trajectory NLL under the training protocol.
pub fn mean_loss(
    model: &NeuralModel,
    network: &RoadNetwork,
    trajectories: &[Trajectory],
    evidence: Option<(&RecordStore, &SelectionParams)>,
    parallel: bool,
) -> Result<f64> {
    if trajectories.is_empty() {
        return Ok(f64::NAN);
    }
    let one = |tr: &Trajectory| {
        let sel = evidence.map(|(s, p)| (s, p.clone().leaving_out(tr.id())));
        trajectory_nll_only(model, network, tr, sel.as_ref().map(|(s, p)| (*s, p)))
    };
    let losses: Vec<f64> = if parallel {
        trajectories.par_iter().map(one).collect::<Result<_>>()?
    } else {
        trajectories.iter().map(one).collect::<Result<_>>()?
    };
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn trajectory_nll_only(
    model: &NeuralModel,
    network: &RoadNetwork,
    trajectory: &Trajectory,
    evidence: Option<(&RecordStore, &SelectionParams)>,
) -> Result<f64> {
    let prepared = model.prepare(network, trajectory.route());
    let segments = trajectory.route().segments();
    let out = model.forward(&prepared, &trajectory.arrivals(), |i, tau, prior| {
        Ok(match evidence {
            None => *prior,
            Some((store, sel)) => {
                let (records, _) = store.select_records_counted(segments, i, tau, sel);
                posterior_update(prior, &sample_stats(&records))
            }
        })
    })?;
    Ok(trajectory
        .observed()
        .map(|(i, t)| crate::student_t::snll(&out.posteriors[i], t))
        .sum())
}

/// Trains a model of `kind`. The store should hold the training records;
/// it is only consulted for UniTE-DIS.
pub fn train(
    kind: ModelKind,
    network: &RoadNetwork,
    train_set: &[Trajectory],
    validation: &[Trajectory],
    store: &RecordStore,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidValue("training set is empty".into()));
    }
    if kind == ModelKind::UniteDis && cfg.selection.c > store.c_max() {
        return Err(Error::InvalidValue(format!(
            "context width c={} exceeds the record store's maximum {}",
            cfg.selection.c,
            store.c_max()
        )));
    }
    let mut model = NeuralModel {
        kind,
        params: ModelParams::init(cfg.seed, cfg.a, cfg.epsilon)?,
        scaler: FeatureScaler::fit(network, train_set),
    };
    let evidence = match kind {
        ModelKind::Gru => None,
        ModelKind::UniteDis => Some((store, &cfg.selection)),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng);
    let mut batches: Vec<Vec<usize>> = order
        .chunks(cfg.batch_size)
        .map(<[usize]>::to_vec)
        .collect();

    let mut adam = AdamState::new();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut steps = 0usize;
    let mut epoch = 0usize;
    loop {
        let done = match cfg.total_steps {
            Some(total) => steps >= total,
            None => epoch >= cfg.epochs,
        };
        if done {
            break;
        }
        epoch += 1;
        batches.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for batch in &batches {
            if cfg.total_steps.is_some_and(|total| steps >= total) {
                break;
            }
            let (loss, grads) =
                batch_gradient(&model, network, train_set, batch, evidence, cfg.parallel)?;
            epoch_loss += loss * batch.len() as f64;
            epoch_count += batch.len();
            adam_step(&mut model.params.weights, &grads, &mut adam, cfg.lr);
            steps += 1;
            if !model.params.weights.is_finite() {
                return Err(Error::NonFinite(format!(
                    "weights after step {steps} (epoch {epoch})"
                )));
            }
        }
        let val_nll = if validation.is_empty() {
            f64::NAN
        } else {
            mean_loss(&model, network, validation, evidence, cfg.parallel)?
        };
        history.push(EpochRecord {
            epoch,
            train_nll: epoch_loss / epoch_count.max(1) as f64,
            val_nll,
            steps,
        });
        // without validation data the last epoch is kept
        let better = match &best {
            None => true,
            Some((b, _, _)) => val_nll.is_nan() || val_nll < *b,
        };
        if better {
            best = Some((val_nll, epoch, model.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch runs");
    model.params = params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Mean loss and mean gradient of one batch. Per-trajectory gradients are
/// summed in batch order so the result does not depend on scheduling.
fn batch_gradient(
    model: &NeuralModel,
    network: &RoadNetwork,
    data: &[Trajectory],
    batch: &[usize],
    evidence: Option<(&RecordStore, &SelectionParams)>,
    parallel: bool,
) -> Result<(f64, Weights)> {
    let one = |&k: &usize| {
        let tr = &data[k];
        let sel = evidence.map(|(s, p)| (s, p.clone().leaving_out(tr.id())));
        trajectory_loss(model, network, tr, sel.as_ref().map(|(s, p)| (*s, p)))
    };
    let parts: Vec<(f64, Weights)> = if parallel {
        batch.par_iter().map(one).collect::<Result<_>>()?
    } else {
        batch.iter().map(one).collect::<Result<_>>()?
    };
    let mut loss = 0.0;
    let mut grads = Weights::zeros();
    for (l, g) in &parts {
        loss += l;
        grads.add_assign(g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}
