//! Acceptance checks A1 to A10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if a criterion outside `KNOWN_UNATTAINABLE` fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use unite::estimators::{AggConfig, ArrivalMode, Estimator, SegmentEstimate};
use unite::evaluation::{
    metrics, prior_snll_by_frequency, robustness_curve, run_estimator, segment_frequencies, GRID_C,
    GRID_DELTA_MINUTES,
};
use unite::network::{Category, FEATURE_DIM};
use unite::nn::{FeatureScaler, ModelKind, ModelParams, NeuralModel, DEFAULT_A, DEFAULT_EPSILON};
use unite::route::context_of;
use unite::store::DEFAULT_C_MAX;
use unite::student_t::gaussian_logpdf;
use unite::synth::{generate, oracle_nll, SynthData, SynthSpec};
use unite::time::{tow_distance, TimeOfWeek, SECONDS_PER_WEEK};
use unite::train::{train, trajectory_loss, TrainConfig};
use unite::trajectory::{Trajectory, Traversal};
use unite::{
    build_store, posterior_predictive, posterior_update, sample_stats, studentt_logpdf,
    NormalGamma, RecordStore, RoadNetwork, Segment, SegmentIdx, SelectionParams, StudentT,
};

/// Criteria whose literal statement cannot hold; see the decisions ledger.
const KNOWN_UNATTAINABLE: &[&str] = &["A3"];

/// Window used to count the records available at a traversal.
const ROBUSTNESS_DELTA: f64 = 7200.0;
const HIGH_DENSITY: usize = 100;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

fn a1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let prior = NormalGamma::new(
            rng.random_range(-20.0..20.0),
            rng.random_range(0.05..20.0),
            rng.random_range(0.05..20.0),
            rng.random_range(0.05..20.0),
        )
        .unwrap();
        let m = rng.random_range(0..=64usize);
        let centre = rng.random_range(0.0..30.0);
        let records: Vec<f64> = (0..m)
            .map(|_| centre + rng.random_range(-10.0..10.0))
            .collect();
        let batch = posterior_update(&prior, &sample_stats(&records));
        let mut seq = prior;
        let mut rest = &records[..];
        while !rest.is_empty() {
            let k = rng.random_range(1..=rest.len());
            seq = posterior_update(&seq, &sample_stats(&rest[..k]));
            rest = &rest[k..];
        }
        for (x, y) in batch.as_array().iter().zip(seq.as_array()) {
            worst = worst.max(rel(*x, y));
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "A1",
        pass: worst <= 1e-9 && elapsed < Duration::from_secs(5),
        detail: format!("max relative difference {worst:.2e} over 10000 cases in {elapsed:.2?}"),
    }
}

fn a2() -> Outcome {
    let prior = NormalGamma::new(0.0, 1.0, 1.0, 1.0).unwrap();
    let one = posterior_update(&prior, &sample_stats(&[2.0])).as_array();
    let two = posterior_update(&prior, &sample_stats(&[2.0, 4.0])).as_array();
    let none = posterior_update(&prior, &sample_stats(&[])).as_array();
    let pass =
        one == [1.0, 2.0, 1.5, 2.0] && two == [2.0, 3.0, 2.0, 5.0] && none == prior.as_array();
    Outcome {
        id: "A2",
        pass,
        detail: format!("[2] -> {one:?}, [2,4] -> {two:?}, [] -> {none:?}"),
    }
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn a3() -> Outcome {
    let pt = posterior_predictive(&NormalGamma::new(0.0, 1.0, 1.0, 1.0).unwrap());
    let at_loc = studentt_logpdf(&pt, pt.loc()).exp();
    let density_ok = (at_loc - 0.25).abs() <= 1e-12;
    let mut masses = Vec::new();
    for nu in [1.0, 2.0, 8.0, 64.0] {
        let d = StudentT::new(nu, 3.0, 1.7).unwrap();
        let (lo, hi) = (d.loc() - 50.0 * d.scale(), d.loc() + 50.0 * d.scale());
        masses.push((
            nu,
            simpson(|t| studentt_logpdf(&d, t).exp(), lo, hi, 400_000),
        ));
    }
    let quadrature_ok = masses.iter().all(|(_, m)| (m - 1.0).abs() <= 1e-4);
    let big = StudentT::new(1e6, 3.0, 1.7).unwrap();
    let limit_gap = (0..=200)
        .map(|k| 3.0 + (k as f64 - 100.0) * 0.05 * 1.7)
        .map(|t| (studentt_logpdf(&big, t).exp() - gaussian_logpdf(3.0, 1.7, t).exp()).abs())
        .fold(0.0, f64::max);
    let limit_ok = limit_gap <= 1e-3;
    let masses: Vec<String> = masses
        .iter()
        .map(|(nu, m)| format!("nu={nu}: {m:.6}"))
        .collect();
    Outcome {
        id: "A3",
        pass: density_ok && quadrature_ok && limit_ok,
        detail: format!(
            "density at loc {at_loc:.15} ({}); window masses [{}] ({}); gaussian limit gap {limit_gap:.1e} ({})",
            verdict(density_ok),
            masses.join(", "),
            verdict(quadrature_ok),
            verdict(limit_ok)
        ),
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fails"
    }
}

/// Trained models and their test-set estimates on the synthetic benchmark.
struct Benchmark {
    data: SynthData,
    store: RecordStore,
    gru: NeuralModel,
    dis: NeuralModel,
    dis_selection: SelectionParams,
    agg_config: AggConfig,
    agg_est: Vec<Vec<SegmentEstimate>>,
    gru_est: Vec<Vec<SegmentEstimate>>,
    dis_est: Vec<Vec<SegmentEstimate>>,
    nll: BTreeMap<&'static str, f64>,
    elapsed: Duration,
}

const MODE: ArrivalMode = ArrivalMode::DepartureOnly;

fn validation_nll(est: &Estimator<'_>, data: &SynthData) -> f64 {
    let e = run_estimator(est, &data.network, &data.validation, MODE, true).unwrap();
    metrics(est.name(), &data.network, &data.validation, &e)
        .unwrap()
        .nll
}

fn benchmark() -> Benchmark {
    let start = Instant::now();
    let data = generate(&SynthSpec::default()).unwrap();
    let store = build_store(&data.train, DEFAULT_C_MAX);

    // AGG: (c, δ) chosen on validation
    let mut agg_best: Option<(f64, AggConfig)> = None;
    for &c in &GRID_C {
        for &d in &GRID_DELTA_MINUTES {
            let cfg = AggConfig::new(1, SelectionParams::from_minutes(c, d).unwrap()).unwrap();
            let v = validation_nll(&Estimator::agg(&store, cfg.clone()).unwrap(), &data);
            if agg_best.as_ref().is_none_or(|(b, _)| v < *b) {
                agg_best = Some((v, cfg));
            }
        }
    }
    let agg_config = agg_best.unwrap().1;

    let base = TrainConfig {
        lr: 0.005,
        epochs: 60,
        batch_size: 32,
        seed: 1,
        ..TrainConfig::default()
    };
    let gru = train(
        ModelKind::Gru,
        &data.network,
        &data.train,
        &data.validation,
        &store,
        &base,
    )
    .unwrap()
    .model;

    // UniTE-DIS: a small selection grid, chosen on validation
    let mut dis_best: Option<(f64, NeuralModel, SelectionParams)> = None;
    for d in [60.0, 120.0] {
        let selection = SelectionParams::from_minutes(0, d).unwrap();
        let cfg = TrainConfig {
            selection: selection.clone(),
            ..base.clone()
        };
        let model = train(
            ModelKind::UniteDis,
            &data.network,
            &data.train,
            &data.validation,
            &store,
            &cfg,
        )
        .unwrap()
        .model;
        let v = validation_nll(
            &Estimator::unite_dis(&model, &store, selection.clone()).unwrap(),
            &data,
        );
        if dis_best.as_ref().is_none_or(|(b, _, _)| v < *b) {
            dis_best = Some((v, model, selection));
        }
    }
    let (_, dis, dis_selection) = dis_best.unwrap();

    let run = |e: &Estimator<'_>| run_estimator(e, &data.network, &data.test, MODE, true).unwrap();
    let agg_est = run(&Estimator::agg(&store, agg_config.clone()).unwrap());
    let gru_est = run(&Estimator::gru(&gru).unwrap());
    let dis_est = run(&Estimator::unite_dis(&dis, &store, dis_selection.clone()).unwrap());
    let mut nll = BTreeMap::new();
    for (name, est) in [
        ("agg", &agg_est),
        ("gru", &gru_est),
        ("unite-dis", &dis_est),
    ] {
        nll.insert(
            name,
            metrics(name, &data.network, &data.test, est).unwrap().nll,
        );
    }
    nll.insert("oracle", oracle_nll(&data.truth, &data.test).unwrap());
    Benchmark {
        data,
        store,
        gru,
        dis,
        dis_selection,
        agg_config,
        agg_est,
        gru_est,
        dis_est,
        nll,
        elapsed: start.elapsed(),
    }
}

/// Per-traversal sNLLs with their record counts and the oracle sNLL.
fn traversal_table(b: &Benchmark) -> Vec<(usize, f64, f64, f64)> {
    let mut rows = Vec::new();
    for (k, tr) in b.data.test.iter().enumerate() {
        for (i, t) in tr.observed() {
            let trav = &tr.traversals()[i];
            let count = b
                .store
                .record_count_at_truth(tr, i, ROBUSTNESS_DELTA)
                .unwrap();
            let (mu, sigma) = b
                .data
                .truth
                .distribution(trav.segment, trav.arrival.unwrap());
            rows.push((
                count,
                b.agg_est[k][i].predictive.snll(t),
                b.dis_est[k][i].predictive.snll(t),
                -gaussian_logpdf(mu, sigma, t),
            ));
        }
    }
    rows
}

fn a4(b: &Benchmark) -> Outcome {
    let agg = robustness_curve(&b.store, &b.data.test, &b.agg_est, ROBUSTNESS_DELTA).unwrap();
    let dis = robustness_curve(&b.store, &b.data.test, &b.dis_est, ROBUSTNESS_DELTA).unwrap();
    let zero_gap = match (agg.get(&0), dis.get(&0)) {
        (Some(a), Some(d)) => a.mean_snll - d.mean_snll,
        _ => f64::NAN,
    };
    let rows = traversal_table(b);
    let high: Vec<_> = rows.iter().filter(|r| r.0 >= HIGH_DENSITY).collect();
    let n = high.len() as f64;
    let agg_hi = high.iter().map(|r| r.1).sum::<f64>() / n;
    let dis_hi = high.iter().map(|r| r.2).sum::<f64>() / n;
    let pass = zero_gap >= 0.5 && (dis_hi - agg_hi).abs() <= 0.2;
    Outcome {
        id: "A4",
        pass,
        detail: format!(
            "bucket 0 ({} traversals): AGG - UniTE-DIS = {zero_gap:.3} nats; >= {HIGH_DENSITY} records ({} traversals): \
             AGG {agg_hi:.3}, UniTE-DIS {dis_hi:.3}, |diff| {:.3}; trained in {:.1?}",
            agg.get(&0).map_or(0, |s| s.count),
            high.len(),
            (dis_hi - agg_hi).abs(),
            b.elapsed
        ),
    }
}

fn a5(b: &Benchmark) -> Outcome {
    let (agg, gru, dis) = (b.nll["agg"], b.nll["gru"], b.nll["unite-dis"]);
    let rows = traversal_table(b);
    let high: Vec<_> = rows.iter().filter(|r| r.0 >= HIGH_DENSITY).collect();
    let n = high.len() as f64;
    let gap = high.iter().map(|r| r.2 - r.3).sum::<f64>() / n;
    let pass = dis <= agg.min(gru) - 0.05 && gap <= 0.3;
    Outcome {
        id: "A5",
        pass,
        detail: format!(
            "test NLL: UniTE-DIS {dis:.3} (c={}, δ={} min), GRU {gru:.3}, AGG {agg:.3} (c={}, δ={} min), oracle {:.3}; \
             oracle gap on >= {HIGH_DENSITY} records {gap:.3} nats/traversal",
            b.dis_selection.c,
            b.dis_selection.delta / 60.0,
            b.agg_config.selection.c,
            b.agg_config.selection.delta / 60.0,
            b.nll["oracle"]
        ),
    }
}

fn a6(b: &Benchmark) -> Outcome {
    let selection = SelectionParams::from_minutes(0, 120.0).unwrap();
    let source = b
        .data
        .train
        .iter()
        .find(|tr| {
            tr.len() >= 3
                && tr.traversals()[..3].iter().all(|t| t.speed.is_some())
                && (0..3).all(|i| {
                    b.store
                        .record_count_at_truth(tr, i, selection.delta)
                        .unwrap()
                        > 0
                })
        })
        .expect("a fully observed route prefix with records");
    let short = Trajectory::new(
        &b.data.network,
        source.id(),
        source.traversals()[..3].to_vec(),
    )
    .unwrap();
    let mut model = NeuralModel {
        kind: ModelKind::UniteDis,
        params: ModelParams::init(6, DEFAULT_A, DEFAULT_EPSILON).unwrap(),
        scaler: FeatureScaler::fit(&b.data.network, &b.data.train),
    };
    let sel = selection.leaving_out(short.id());
    let evidence = Some((&b.store, &sel));
    let (_, grad) = trajectory_loss(&model, &b.data.network, &short, evidence).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(0..grad.len());
        let x = model.params.weights.get(k);
        model.params.weights.set(k, x + h);
        let up = trajectory_loss(&model, &b.data.network, &short, evidence)
            .unwrap()
            .0;
        model.params.weights.set(k, x - h);
        let down = trajectory_loss(&model, &b.data.network, &short, evidence)
            .unwrap()
            .0;
        model.params.weights.set(k, x);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad.get(k)).abs() / fd.abs().max(grad.get(k).abs()).max(1e-6));
    }
    Outcome {
        id: "A6",
        pass: worst < 1e-4,
        detail: format!(
            "max relative error {worst:.2e} over 50 parameters (denominator floor 1e-6)"
        ),
    }
}

/// Linear scan over every stored trajectory.
fn brute_force_select(
    history: &[Trajectory],
    segments: &[SegmentIdx],
    i: usize,
    tau: TimeOfWeek,
    params: &SelectionParams,
) -> Vec<f64> {
    let want = context_of(segments, i, params.c);
    let mut out = Vec::new();
    for tr in history {
        if params.leave_out_trip.as_deref() == Some(tr.id()) {
            continue;
        }
        for (j, t) in tr.traversals().iter().enumerate() {
            let (Some(arrival), Some(speed)) = (t.arrival, t.speed) else {
                continue;
            };
            if context_of(tr.route().segments(), j, params.c) == want
                && tow_distance(arrival, tau) <= params.delta / 2.0
            {
                out.push(speed);
            }
        }
    }
    out
}

fn sorted(mut v: Vec<f64>) -> Vec<u64> {
    v.sort_by(f64::total_cmp);
    v.into_iter().map(f64::to_bits).collect()
}

fn a7() -> Outcome {
    let spec = SynthSpec {
        n_trajectories: 50,
        seed: 7,
        ..SynthSpec::default()
    };
    let data = generate(&spec).unwrap();
    let history: Vec<Trajectory> = data
        .train
        .iter()
        .chain(&data.validation)
        .chain(&data.test)
        .cloned()
        .collect();
    let store = build_store(&history, DEFAULT_C_MAX);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut mismatches, mut matched) = (0usize, 0usize, 0usize);
    for _ in 0..200 {
        let tr = &history[rng.random_range(0..history.len())];
        let i = rng.random_range(0..tr.len());
        let tau = match tr.traversals()[i].arrival {
            Some(a) if rng.random_bool(0.7) => a.advance(rng.random_range(-3600.0..3600.0)),
            _ => TimeOfWeek::wrapping(rng.random_range(0.0..SECONDS_PER_WEEK)),
        };
        let leave_out = rng.random_bool(0.5);
        for &c in &GRID_C {
            for &d in &GRID_DELTA_MINUTES {
                let mut params = SelectionParams::from_minutes(c, d).unwrap();
                if leave_out {
                    params = params.leaving_out(tr.id());
                }
                let fast = store.select_records(tr.route(), i, tau, &params);
                let slow = brute_force_select(&history, tr.route().segments(), i, tau, &params);
                checked += 1;
                matched += usize::from(!slow.is_empty());
                if sorted(fast) != sorted(slow) {
                    mismatches += 1;
                }
            }
        }
    }
    Outcome {
        id: "A7",
        pass: mismatches == 0 && checked == 3200,
        detail: format!("{checked} queries, {matched} non-empty, {mismatches} multiset mismatches"),
    }
}

fn a8(b: &Benchmark) -> Outcome {
    let empty = build_store(&[], DEFAULT_C_MAX);
    let run =
        |e: &Estimator<'_>| run_estimator(e, &b.data.network, &b.data.test, MODE, true).unwrap();
    let as_gru = NeuralModel {
        kind: ModelKind::Gru,
        ..b.dis.clone()
    };
    let dis_empty = run(&Estimator::unite_dis(&b.dis, &empty, b.dis_selection.clone()).unwrap());
    let dis_as_gru = run(&Estimator::gru(&as_gru).unwrap());
    let gen_empty = run(&Estimator::unite_gen(&b.gru, &empty, b.dis_selection.clone()).unwrap());
    let identical = |x: &[Vec<SegmentEstimate>], y: &[Vec<SegmentEstimate>]| {
        format!("{x:?}") == format!("{y:?}")
    };
    let dis_ok = identical(&dis_empty, &dis_as_gru);
    let gen_ok = identical(&gen_empty, &b.gru_est);
    Outcome {
        id: "A8",
        pass: dis_ok && gen_ok,
        detail: format!(
            "UniTE-DIS vs its GRU on {} test routes: {}; UniTE-GEN vs source GRU: {}",
            b.data.test.len(),
            if dis_ok { "bit-identical" } else { "differ" },
            if gen_ok { "bit-identical" } else { "differ" }
        ),
    }
}

fn a9(b: &Benchmark) -> Outcome {
    let freq = segment_frequencies(b.data.network.len(), &b.data.train);
    let g = prior_snll_by_frequency(&b.data.test, &b.gru_est, &freq).unwrap();
    let d = prior_snll_by_frequency(&b.data.test, &b.dis_est, &freq).unwrap();
    let low = g.low.mean_snll - d.low.mean_snll;
    let high = g.high.mean_snll - d.high.mean_snll;
    Outcome {
        id: "A9",
        pass: low > 0.0 && low > high,
        detail: format!(
            "prior sNLL GRU - UniTE-DIS: low-frequency quartile {low:.3} ({} traversals), \
             high-frequency quartile {high:.3} ({} traversals)",
            g.low.count, g.high.count
        ),
    }
}

fn plain_segment(k: usize) -> Segment {
    Segment {
        id: format!("s{k}"),
        source: format!("a{k}"),
        target: format!("b{k}"),
        length: 100.0,
        category: Category::Urban,
        in_city_source: true,
        in_city_target: true,
        speed_limit: None,
        features: [0.0; FEATURE_DIM],
    }
}

/// Mean inspected candidates and binary-search probes per query on a store
/// of `n_segments` single-segment routes with `per_segment` records each.
fn query_cost(
    n_segments: usize,
    per_segment: usize,
    rng: &mut ChaCha8Rng,
) -> (usize, f64, f64, bool) {
    let net = RoadNetwork::new((0..n_segments).map(plain_segment).collect()).unwrap();
    let speed = Normal::new(10.0, 1.0).unwrap();
    let mut trips = Vec::with_capacity(n_segments * per_segment);
    for s in 0..n_segments {
        for k in 0..per_segment {
            let t = Traversal {
                segment: SegmentIdx(s as u32),
                arrival: Some(TimeOfWeek::wrapping(
                    rng.random_range(0.0..SECONDS_PER_WEEK),
                )),
                speed: Some(speed.sample(rng)),
            };
            trips.push(Trajectory::new(&net, format!("t{s}-{k}"), vec![t]).unwrap());
        }
    }
    let store = build_store(&trips, 0);
    let params = SelectionParams::from_minutes(0, 60.0).unwrap();
    let queries = 2000;
    let (mut inspected, mut probes, mut bounded) = (0usize, 0usize, true);
    for _ in 0..queries {
        let s = SegmentIdx(rng.random_range(0..n_segments) as u32);
        let tau = TimeOfWeek::wrapping(rng.random_range(0.0..SECONDS_PER_WEEK));
        let (_, cost) = store.select_records_counted(&[s], 0, tau, &params);
        bounded &= cost.inspected <= cost.bucket_size;
        inspected += cost.inspected;
        probes += cost.probes;
    }
    (
        store.len(),
        inspected as f64 / queries as f64,
        probes as f64 / queries as f64,
        bounded,
    )
}

fn a10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let per_segment = 2000;
    let costs: Vec<_> = [50, 100, 200, 400]
        .iter()
        .map(|&s| query_cost(s, per_segment, &mut rng))
        .collect();
    let mut pass = costs.iter().all(|c| c.3);
    let mut steps = Vec::new();
    for w in costs.windows(2) {
        let (n0, i0, p0, _) = w[0];
        let (n1, i1, p1, _) = w[1];
        let bound = 2.0 * (i0 + p0) + (n1 as f64).log2();
        pass &= i1 + p1 <= bound;
        steps.push(format!("N {n0}->{n1}: cost {:.1}->{:.1}", i0 + p0, i1 + p1));
    }
    let first = costs[0].1 + costs[0].2;
    let last = costs[costs.len() - 1].1 + costs[costs.len() - 1].2;
    // eightfold N must not come close to eightfold work
    pass &= last < 2.0 * first;
    Outcome {
        id: "A10",
        pass,
        detail: format!(
            "inspected + probes per query at {per_segment} records per bucket: {}; inspected <= bucket size: {}",
            steps.join(", "),
            costs.iter().all(|c| c.3)
        ),
    }
}

fn main() -> ExitCode {
    let mut outcomes = vec![a1(), a2(), a3(), a7(), a10()];
    let bench = benchmark();
    outcomes.extend([a4(&bench), a5(&bench), a6(&bench), a8(&bench), a9(&bench)]);
    outcomes.sort_by_key(|o| o.id[1..].parse::<u32>().unwrap());
    let mut unexpected = 0;
    for o in &outcomes {
        let note = if !o.pass && KNOWN_UNATTAINABLE.contains(&o.id) {
            " [known unattainable]"
        } else {
            ""
        };
        println!(
            "{} {}{note}: {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass && note.is_empty() {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
