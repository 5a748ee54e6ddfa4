//! Subcommand implementations. Each writes its artifacts and a manifest to
//! the output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use unite::estimators::{AggConfig, ArrivalMode, Estimator, Predictive, SegmentEstimate};
use unite::evaluation::{
    data_efficiency_sweep, estimated_travel_time, metrics, prior_snll_by_frequency,
    record_selection_sweep, robustness_curve, run_estimator, segment_frequencies,
    training_fraction, write_fractions_csv, write_grid_csv, write_robustness_csv,
    DEFAULT_FRACTIONS, GRID_C, GRID_DELTA_MINUTES,
};
use unite::network::write_network;
use unite::nn::{ModelKind, NeuralModel};
use unite::store::{read_snapshot, write_snapshot, DEFAULT_C_MAX};
use unite::synth::{generate, oracle_nll, write_ground_truth, SynthSpec};
use unite::train::{train, TrainConfig};
use unite::trajectory::write_trajectories;
use unite::{
    build_store, parse_network, parse_trajectories, RecordStore, RoadNetwork, Route,
    SelectionParams, TimeOfWeek, Trajectory,
};

use crate::config::{parse_list, require, require_existing, to_config_text, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Agg,
    Gru,
    UniteDis,
    UniteGen,
}

impl Algorithm {
    fn parse(cfg: &RunConfig) -> Result<Self> {
        match require(&cfg.algorithm, "algorithm")?.as_str() {
            "agg" => Ok(Algorithm::Agg),
            "gru" => Ok(Algorithm::Gru),
            "unite-dis" => Ok(Algorithm::UniteDis),
            "unite-gen" => Ok(Algorithm::UniteGen),
            other => Err(CliError::usage(format!(
                "unknown algorithm `{other}`; expected agg, gru, unite-dis or unite-gen"
            ))),
        }
    }

    fn uses_store(self) -> bool {
        self != Algorithm::Gru
    }

    fn uses_model(self) -> bool {
        self != Algorithm::Agg
    }

    fn model_kind(self) -> Option<ModelKind> {
        match self {
            Algorithm::Gru | Algorithm::UniteGen => Some(ModelKind::Gru),
            Algorithm::UniteDis => Some(ModelKind::UniteDis),
            Algorithm::Agg => None,
        }
    }
}

/// Rejects options that the chosen algorithm would silently ignore.
fn check_combination(alg: Algorithm, cfg: &RunConfig) -> Result<()> {
    let agg_only = [
        ("k", cfg.k.is_some()),
        ("mean-factor", cfg.mean_factor.is_some()),
        ("std-factor", cfg.std_factor.is_some()),
    ];
    if alg != Algorithm::Agg {
        if let Some((key, _)) = agg_only.iter().find(|(_, set)| *set) {
            return Err(CliError::usage(format!(
                "`--{key}` only applies to the agg algorithm"
            )));
        }
    }
    if alg == Algorithm::Gru && (cfg.c.is_some() || cfg.delta.is_some()) {
        return Err(CliError::usage(
            "`--c` and `--delta` do not apply to gru, which uses no records",
        ));
    }
    if alg == Algorithm::Agg && cfg.model.is_some() {
        return Err(CliError::usage("`--model` does not apply to agg"));
    }
    Ok(())
}

fn selection(cfg: &RunConfig) -> Result<SelectionParams> {
    let defaults = TrainConfig::default().selection;
    let c = cfg.c.unwrap_or(defaults.c);
    if c > DEFAULT_C_MAX {
        return Err(CliError::usage(format!(
            "`--c` must be at most {DEFAULT_C_MAX}, got {c}"
        )));
    }
    let delta = cfg.delta.unwrap_or(defaults.delta / 60.0);
    SelectionParams::from_minutes(c, delta).map_err(|e| CliError::usage(e.to_string()))
}

fn agg_config(cfg: &RunConfig, sel: SelectionParams) -> Result<AggConfig> {
    let base =
        AggConfig::new(cfg.k.unwrap_or(1), sel).map_err(|e| CliError::usage(e.to_string()))?;
    AggConfig::with_factors(
        base.k,
        base.selection,
        cfg.mean_factor.unwrap_or(base.mean_factor),
        cfg.std_factor.unwrap_or(base.std_factor),
    )
    .map_err(|e| CliError::usage(e.to_string()))
}

fn arrival_mode(cfg: &RunConfig) -> Result<ArrivalMode> {
    match cfg.arrival_mode.as_deref() {
        None | Some("departure-only") => Ok(ArrivalMode::DepartureOnly),
        Some("recorded") => Ok(ArrivalMode::Recorded),
        Some(other) => Err(CliError::usage(format!(
            "unknown arrival mode `{other}`; expected departure-only or recorded"
        ))),
    }
}

fn train_config(cfg: &RunConfig, sel: SelectionParams) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        lr: cfg.lr.unwrap_or(d.lr),
        epochs: cfg.epochs.unwrap_or(d.epochs),
        batch_size: cfg.batch_size.unwrap_or(d.batch_size),
        seed: cfg.seed.unwrap_or(d.seed),
        a: cfg.a.unwrap_or(d.a),
        epsilon: cfg.epsilon.unwrap_or(d.epsilon),
        selection: sel,
        total_steps: cfg.total_steps,
        parallel: cfg.parallel,
    }
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = require(&cfg.output, "output")?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config: std::collections::BTreeMap<String, String>,
}

/// Writes `manifest.json` and `run.conf`; the latter reloads with `--config`.
fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg.entries(),
        },
    )?;
    write_text(&dir.join("run.conf"), &to_config_text(cfg))
}

fn load_network(cfg: &RunConfig) -> Result<RoadNetwork> {
    Ok(parse_network(require_existing(&cfg.network, "network")?)?)
}

fn load_trajectories(
    value: &Option<PathBuf>,
    key: &str,
    network: &RoadNetwork,
) -> Result<Vec<Trajectory>> {
    Ok(parse_trajectories(require_existing(value, key)?, network)?)
}

/// Loads the snapshot at `--store` when it exists; otherwise builds the store
/// from `--history` (or `--train`) and writes the snapshot if a path was given.
fn load_store(cfg: &RunConfig, network: &RoadNetwork) -> Result<RecordStore> {
    if let Some(path) = cfg.store.as_deref().filter(|p| p.exists()) {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        return Ok(read_snapshot(std::io::BufReader::new(file), network)?);
    }
    let (value, key) = if cfg.history.is_some() {
        (&cfg.history, "history")
    } else if cfg.train.is_some() {
        (&cfg.train, "train")
    } else {
        return Err(CliError::usage(
            "the record store needs `--store`, `--history` or `--train`",
        ));
    };
    let store = build_store(&load_trajectories(value, key, network)?, DEFAULT_C_MAX);
    if let Some(path) = &cfg.store {
        write_snapshot(&store, network, create(path)?)?;
    }
    Ok(store)
}

fn load_model(cfg: &RunConfig, alg: Algorithm) -> Result<NeuralModel> {
    let path = require_existing(&cfg.model, "model")?;
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let model = NeuralModel::load(std::io::BufReader::new(file))?;
    if Some(model.kind) != alg.model_kind() {
        return Err(CliError::usage(format!(
            "checkpoint holds a `{}` model, which does not fit algorithm {:?}",
            model.kind, alg
        )));
    }
    Ok(model)
}

/// Loaded inputs that estimators borrow.
struct Resources {
    store: Option<RecordStore>,
    model: Option<NeuralModel>,
}

impl Resources {
    fn load(cfg: &RunConfig, alg: Algorithm, network: &RoadNetwork) -> Result<Self> {
        Ok(Resources {
            store: if alg.uses_store() {
                Some(load_store(cfg, network)?)
            } else {
                None
            },
            model: if alg.uses_model() {
                Some(load_model(cfg, alg)?)
            } else {
                None
            },
        })
    }

    fn estimator(&self, alg: Algorithm, cfg: &RunConfig) -> Result<Estimator<'_>> {
        let store = || self.store.as_ref().expect("store loaded");
        let model = || self.model.as_ref().expect("model loaded");
        Ok(match alg {
            Algorithm::Agg => Estimator::agg(store(), agg_config(cfg, selection(cfg)?)?)?,
            Algorithm::Gru => Estimator::gru(model())?,
            Algorithm::UniteDis => Estimator::unite_dis(model(), store(), selection(cfg)?)?,
            Algorithm::UniteGen => Estimator::unite_gen(model(), store(), selection(cfg)?)?,
        })
    }
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_segments: cfg.segments.unwrap_or(d.n_segments),
        n_trajectories: cfg.trips.unwrap_or(d.n_trajectories),
        weeks: cfg.weeks.unwrap_or(d.weeks),
        seed: cfg.seed.unwrap_or(d.seed),
        ..d
    };
    spec.validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let dir = output_dir(cfg)?;
    let data = generate(&spec)?;
    write_network(&data.network, create(&dir.join("network.csv"))?)?;
    for (name, set) in [
        ("train", &data.train),
        ("validation", &data.validation),
        ("test", &data.test),
    ] {
        write_trajectories(
            set,
            &data.network,
            create(&dir.join(format!("{name}.csv")))?,
        )?;
    }
    write_ground_truth(&data.truth, create(&dir.join("truth.csv"))?)?;
    let oracle = oracle_nll(&data.truth, &data.test)?;
    write_json(
        &dir.join("oracle.json"),
        &serde_json::json!({ "test_oracle_nll": oracle }),
    )?;
    write_manifest(dir, "gen-data", cfg)?;
    println!(
        "{} segments, {} train / {} validation / {} test trajectories; test oracle NLL {oracle:.4}",
        data.network.len(),
        data.train.len(),
        data.validation.len(),
        data.test.len()
    );
    Ok(())
}

fn trainable(cfg: &RunConfig) -> Result<(Algorithm, ModelKind)> {
    let alg = Algorithm::parse(cfg)?;
    check_combination(alg, cfg)?;
    match alg {
        Algorithm::Gru => Ok((alg, ModelKind::Gru)),
        Algorithm::UniteDis => Ok((alg, ModelKind::UniteDis)),
        _ => Err(CliError::usage(
            "only gru and unite-dis are trained; unite-gen reuses a gru checkpoint",
        )),
    }
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let (alg, kind) = trainable(cfg)?;
    let network = load_network(cfg)?;
    let train_set = load_trajectories(&cfg.train, "train", &network)?;
    let validation = match &cfg.validation {
        Some(_) => load_trajectories(&cfg.validation, "validation", &network)?,
        None => Vec::new(),
    };
    let store = if alg.uses_store() {
        load_store(cfg, &network)?
    } else {
        build_store(&[], DEFAULT_C_MAX)
    };
    let tc = train_config(cfg, selection(cfg)?);
    tc.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let dir = output_dir(cfg)?;
    let outcome = train(kind, &network, &train_set, &validation, &store, &tc)?;
    outcome.model.save(create(&dir.join("model.json"))?)?;
    let mut w = csv_writer(&dir.join("history.csv"))?;
    for h in &outcome.history {
        w.serialize(h).map_err(csv_error)?;
    }
    w.flush()
        .map_err(|e| CliError::io(dir.join("history.csv"), e))?;
    write_json(
        &dir.join("training.json"),
        &serde_json::json!({ "best_epoch": outcome.best_epoch, "history": outcome.history }),
    )?;
    write_manifest(dir, "train", cfg)?;
    let best = outcome
        .history
        .iter()
        .find(|h| h.epoch == outcome.best_epoch)
        .expect("the kept epoch is in the history");
    println!(
        "trained {} for {} epochs; kept epoch {} (train NLL {:.4}, validation NLL {:.4})",
        kind,
        outcome.history.len(),
        outcome.best_epoch,
        best.train_nll,
        best.val_nll
    );
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Core(unite::Error::InvalidValue(e.to_string()))
}

fn estimate_set(
    cfg: &RunConfig,
    command: &str,
) -> Result<(Algorithm, RoadNetwork, Vec<Trajectory>, Resources)> {
    let alg = Algorithm::parse(cfg)?;
    check_combination(alg, cfg)?;
    arrival_mode(cfg)?;
    let network = load_network(cfg)?;
    let trajectories = load_trajectories(&cfg.trajectories, "trajectories", &network)?;
    if trajectories.is_empty() {
        return Err(CliError::usage(format!(
            "{command}: `--trajectories` holds no trajectories"
        )));
    }
    let res = Resources::load(cfg, alg, &network)?;
    Ok((alg, network, trajectories, res))
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let (alg, network, trajectories, res) = estimate_set(cfg, "evaluate")?;
    let est = res.estimator(alg, cfg)?;
    let dir = output_dir(cfg)?;
    let estimates = run_estimator(
        &est,
        &network,
        &trajectories,
        arrival_mode(cfg)?,
        cfg.parallel,
    )?;
    let report = metrics(est.name(), &network, &trajectories, &estimates)?;
    write_json(&dir.join("metrics.json"), &report)?;
    write_text(&dir.join("metrics.txt"), &report.to_text())?;
    write_manifest(dir, "evaluate", cfg)?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn robustness_cmd(cfg: &RunConfig) -> Result<()> {
    let (alg, network, trajectories, res) = estimate_set(cfg, "robustness")?;
    let est = res.estimator(alg, cfg)?;
    // the record count always refers to the training records
    let loaded;
    let counting = match &res.store {
        Some(s) => s,
        None => {
            loaded = load_store(cfg, &network)?;
            &loaded
        }
    };
    let count_delta = cfg.count_delta.unwrap_or(120.0) * 60.0;
    SelectionParams::new(0, count_delta).map_err(|e| CliError::usage(e.to_string()))?;
    let dir = output_dir(cfg)?;
    let estimates = run_estimator(
        &est,
        &network,
        &trajectories,
        arrival_mode(cfg)?,
        cfg.parallel,
    )?;
    let curve = robustness_curve(counting, &trajectories, &estimates, count_delta)?;
    let path = dir.join("robustness.csv");
    write_robustness_csv(&curve, create(&path)?).map_err(|e| CliError::io(&path, e))?;
    let report = metrics(est.name(), &network, &trajectories, &estimates)?;
    write_json(&dir.join("metrics.json"), &report)?;
    write_text(&dir.join("metrics.txt"), &report.to_text())?;
    if alg.uses_model() {
        let train_set = load_trajectories(&cfg.train, "train", &network)?;
        let freq = segment_frequencies(network.len(), &train_set);
        let quartiles = prior_snll_by_frequency(&trajectories, &estimates, &freq)?;
        write_json(&dir.join("prior_by_frequency.json"), &quartiles)?;
    }
    write_manifest(dir, "robustness", cfg)?;
    for (bucket, stat) in &curve {
        println!(
            "{bucket:>5} records: {:>6} traversals, mean sNLL {:.4}",
            stat.count, stat.mean_snll
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SegmentOutput {
    segment_id: String,
    arrival_s: f64,
    records: usize,
    predictive: Predictive,
    prior: Option<[f64; 4]>,
    posterior: Option<[f64; 4]>,
    expected_speed_mps: f64,
}

impl SegmentOutput {
    fn new(network: &RoadNetwork, e: &SegmentEstimate) -> Self {
        SegmentOutput {
            segment_id: network.segment(e.segment).id.clone(),
            arrival_s: e.arrival.seconds(),
            records: e.records,
            predictive: e.predictive,
            prior: e.prior.map(|p| p.as_array()),
            posterior: e.posterior.map(|p| p.as_array()),
            expected_speed_mps: e.expected_speed,
        }
    }
}

pub fn estimate_cmd(cfg: &RunConfig) -> Result<()> {
    let alg = Algorithm::parse(cfg)?;
    check_combination(alg, cfg)?;
    let network = load_network(cfg)?;
    let ids: Vec<String> = parse_list("route", require(&cfg.route, "route")?)?;
    let route = Route::from_ids(&network, &ids)?;
    let departure = TimeOfWeek::new(*require(&cfg.departure, "departure")?)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let res = Resources::load(cfg, alg, &network)?;
    let est = res.estimator(alg, cfg)?;
    let mut arrivals = vec![None; route.len()];
    arrivals[0] = Some(departure);
    let dir = output_dir(cfg)?;
    let estimates = est.estimate_route(&network, &route, &arrivals, None)?;
    let travel_time = estimated_travel_time(&network, &estimates)?;
    let segments: Vec<SegmentOutput> = estimates
        .iter()
        .map(|e| SegmentOutput::new(&network, e))
        .collect();
    write_json(
        &dir.join("estimate.json"),
        &serde_json::json!({ "algorithm": est.name(), "segments": segments, "travel_time_s": travel_time }),
    )?;
    write_manifest(dir, "estimate", cfg)?;
    for s in &segments {
        println!("{} {}", s.segment_id, serde_json::to_string(&s.predictive)?);
    }
    println!("travel_time_s {travel_time:.3}");
    Ok(())
}

pub fn sweep_cmd(cfg: &RunConfig) -> Result<()> {
    match require(&cfg.sweep, "sweep")?.as_str() {
        "fractions" => fraction_sweep(cfg),
        "selection" => selection_sweep(cfg),
        other => Err(CliError::usage(format!(
            "unknown sweep `{other}`; expected fractions or selection"
        ))),
    }
}

/// Trains on growing subsets of the training set with a fixed optimizer
/// budget and reports test NLL per fraction. Each subset also forms the
/// record store unless `--history` or `--store` is given.
fn fraction_sweep(cfg: &RunConfig) -> Result<()> {
    let (alg, kind) = trainable(cfg)?;
    let fractions = match &cfg.fractions {
        Some(text) => parse_list("fractions", text)?,
        None => DEFAULT_FRACTIONS.to_vec(),
    };
    let network = load_network(cfg)?;
    let train_set = load_trajectories(&cfg.train, "train", &network)?;
    let validation = match &cfg.validation {
        Some(_) => load_trajectories(&cfg.validation, "validation", &network)?,
        None => Vec::new(),
    };
    let test = load_trajectories(&cfg.trajectories, "trajectories", &network)?;
    let fixed_store = if cfg.history.is_some() || cfg.store.is_some() {
        Some(load_store(cfg, &network)?)
    } else {
        None
    };
    let mut tc = train_config(cfg, selection(cfg)?);
    if tc.total_steps.is_none() {
        tc.total_steps = Some(tc.epochs * train_set.len().div_ceil(tc.batch_size));
    }
    tc.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let mode = arrival_mode(cfg)?;
    let dir = output_dir(cfg)?;
    let rows = data_efficiency_sweep(&fractions, cfg.parallel, |f| {
        let subset = training_fraction(&train_set, f, tc.seed);
        let own;
        let store = match &fixed_store {
            Some(s) => s,
            None => {
                own = build_store(&subset, DEFAULT_C_MAX);
                &own
            }
        };
        let cell = TrainConfig {
            parallel: false,
            ..tc.clone()
        };
        let model = train(kind, &network, &subset, &validation, store, &cell)?.model;
        let est = match alg {
            Algorithm::UniteDis => Estimator::unite_dis(&model, store, tc.selection.clone())?,
            _ => Estimator::gru(&model)?,
        };
        let e = run_estimator(&est, &network, &test, mode, false)?;
        Ok(metrics(est.name(), &network, &test, &e)?.nll)
    })?;
    let path = dir.join("fractions.csv");
    write_fractions_csv(&rows, create(&path)?).map_err(|e| CliError::io(&path, e))?;
    write_manifest(dir, "sweep", cfg)?;
    for r in &rows {
        println!("fraction {:.3}: NLL {:.4}", r.fraction, r.nll);
    }
    Ok(())
}

/// Evaluates every (c, δ) cell. UniTE-DIS trains one model per cell on
/// `--train`; AGG and UniTE-GEN only re-run estimation.
fn selection_sweep(cfg: &RunConfig) -> Result<()> {
    let alg = Algorithm::parse(cfg)?;
    if cfg.c.is_some() || cfg.delta.is_some() {
        return Err(CliError::usage(
            "a selection sweep takes `--grid-c` and `--grid-delta`, not `--c` or `--delta`",
        ));
    }
    if alg == Algorithm::Gru {
        return Err(CliError::usage(
            "gru uses no records, so a selection sweep does not apply",
        ));
    }
    check_combination(alg, cfg)?;
    let cs: Vec<usize> = match &cfg.grid_c {
        Some(text) => parse_list("grid_c", text)?,
        None => GRID_C.to_vec(),
    };
    if let Some(c) = cs.iter().find(|&&c| c > DEFAULT_C_MAX) {
        return Err(CliError::usage(format!(
            "context widths must be at most {DEFAULT_C_MAX}, got {c}"
        )));
    }
    let deltas: Vec<f64> = match &cfg.grid_delta {
        Some(text) => parse_list("grid_delta", text)?,
        None => GRID_DELTA_MINUTES.to_vec(),
    };
    for &d in &deltas {
        SelectionParams::from_minutes(0, d).map_err(|e| CliError::usage(e.to_string()))?;
    }
    let network = load_network(cfg)?;
    let test = load_trajectories(&cfg.trajectories, "trajectories", &network)?;
    let store = load_store(cfg, &network)?;
    let (train_set, validation, model) = if alg == Algorithm::UniteDis {
        let validation = match &cfg.validation {
            Some(_) => load_trajectories(&cfg.validation, "validation", &network)?,
            None => Vec::new(),
        };
        (
            load_trajectories(&cfg.train, "train", &network)?,
            validation,
            None,
        )
    } else if alg == Algorithm::UniteGen {
        (Vec::new(), Vec::new(), Some(load_model(cfg, alg)?))
    } else {
        (Vec::new(), Vec::new(), None)
    };
    let mode = arrival_mode(cfg)?;
    let dir = output_dir(cfg)?;
    let rows = record_selection_sweep(&cs, &deltas, cfg.parallel, |c, d| {
        let sel = SelectionParams::from_minutes(c, d)?;
        let trained;
        let est = match alg {
            Algorithm::Agg => Estimator::agg(&store, agg_config(cfg, sel).map_err(to_core)?)?,
            Algorithm::UniteGen => {
                Estimator::unite_gen(model.as_ref().expect("model loaded"), &store, sel)?
            }
            _ => {
                let tc = TrainConfig {
                    parallel: false,
                    ..train_config(cfg, sel.clone())
                };
                trained = train(
                    ModelKind::UniteDis,
                    &network,
                    &train_set,
                    &validation,
                    &store,
                    &tc,
                )?
                .model;
                Estimator::unite_dis(&trained, &store, sel)?
            }
        };
        let e = run_estimator(&est, &network, &test, mode, false)?;
        Ok(metrics(est.name(), &network, &test, &e)?.nll)
    })?;
    let path = dir.join("grid.csv");
    write_grid_csv(&rows, create(&path)?).map_err(|e| CliError::io(&path, e))?;
    write_manifest(dir, "sweep", cfg)?;
    for r in &rows {
        println!("c {} δ {} min: NLL {:.4}", r.c, r.delta_minutes, r.nll);
    }
    Ok(())
}

fn to_core(e: CliError) -> unite::Error {
    match e {
        CliError::Core(e) => e,
        other => unite::Error::InvalidValue(other.to_string()),
    }
}
