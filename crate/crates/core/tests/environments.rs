use std::collections::HashSet;
use std::sync::Arc;

use lmdb_bandit::catalog::{DistanceMetric, ItemCatalog, MetricMode, PreferenceVector, Slate};
use lmdb_bandit::data::{synthetic_embeddings, uniform_rows};
use lmdb_bandit::env::{
    bernoulli_feedback, run_episode, CandidateMode, ReplayEnvironment, ReplayUser, SimEnvironment, SimInstance,
};
use lmdb_bandit::error::Error;
use lmdb_bandit::hybrid::LmdhConfig;
use lmdb_bandit::policy::{epsilon_greedy_select, EpsilonGreedyPolicy, LmdhPolicy, LogRankPolicy, StaticScorer};
use lmdb_bandit::seed::{rng, Stream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simulated_instance(seed: u64) -> SimInstance {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let features = uniform_rows(20, 10, 0.0, 0.5, &mut r);
    let theta = (0..10).map(|_| r.random_range(0.0..0.2)).collect();
    let beta = vec![r.random_range(0.0..0.2)];
    let catalog = ItemCatalog::new(features, vec![DistanceMetric::Cosine(MetricMode::SlateNormalized { capacity: 5 })]).unwrap();
    SimInstance::new(Arc::new(catalog), PreferenceVector::new(theta, beta), seed, CandidateMode::All).unwrap()
}

#[test]
fn click_rates_match_the_clamped_mean() {
    let inst = simulated_instance(4);
    let slate = Slate::from_items(vec![3, 7, 11, 0, 19], 5).unwrap();
    let means: Vec<f64> = inst
        .catalog
        .prefix_marginals(slate.items())
        .unwrap()
        .iter()
        .map(|g| inst.eta_star.gain(g).clamp(0.0, 1.0))
        .collect();
    let draws = 100_000;
    let mut clicks = [0.0; 5];
    let mut totals = Vec::with_capacity(draws);
    let mut r = rng(1, 0, Stream::Feedback);
    for _ in 0..draws {
        let (w, clamped) = bernoulli_feedback(&slate, &inst, &mut r).unwrap();
        assert_eq!(clamped, 0);
        for (c, v) in clicks.iter_mut().zip(&w) {
            *c += v;
        }
        totals.push(w.iter().sum::<f64>());
    }
    for (c, p) in clicks.iter().zip(&means) {
        let rate = c / draws as f64;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * sigma, "{rate} vs {p}");
    }
    // The expected slate reward is the slate utility.
    let mean = totals.iter().sum::<f64>() / draws as f64;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let utility = inst.catalog.utility(slate.items(), &inst.eta_star).unwrap();
    assert!((mean - utility).abs() <= 3.0 * (var / draws as f64).sqrt());
}

#[test]
fn explore_everything_is_uniform() {
    let inst = simulated_instance(2);
    let scorer = StaticScorer::new(&inst.catalog, inst.eta_star.theta.clone()).unwrap();
    let all: Vec<usize> = (0..20).collect();
    let trials = 10_000;
    let mut counts = [0usize; 20];
    let mut r = rng(9, 0, Stream::Policy);
    for _ in 0..trials {
        for &a in epsilon_greedy_select(&scorer, &inst.catalog, &all, 5, 1.0, &mut r).unwrap().items() {
            counts[a] += 1;
        }
    }
    let p = 5.0 / 20.0;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - trials as f64 * p).abs() <= 3.0 * sigma, "{c}");
    }
}

#[test]
fn uniform_generator_moments() {
    let e = synthetic_embeddings(100_000, 2, 0.0, 0.5, 17).unwrap();
    let sigma = 0.5 / 12f64.sqrt() / (100_000f64).sqrt();
    for j in 0..2 {
        let mean = e.vectors.iter().map(|v| v[j]).sum::<f64>() / 100_000.0;
        assert!((mean - 0.25).abs() <= 3.0 * sigma);
    }
}

fn replay_world(l: usize) -> (Arc<ItemCatalog>, Arc<Vec<usize>>) {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let vectors = uniform_rows(l, 10, -1.0, 1.0, &mut r);
    let catalog = ItemCatalog::new(vectors, vec![DistanceMetric::Cosine(MetricMode::SlateNormalized { capacity: 10 })]).unwrap();
    (Arc::new(catalog), Arc::new((0..l).collect()))
}

#[test]
fn replay_at_dataset_scale_never_repeats_or_exhausts() {
    let (catalog, ground) = replay_world(1447);
    let positives: HashSet<usize> = (0..1447).step_by(7).collect();
    let scorer = StaticScorer::new(&catalog, vec![0.1; 10]).unwrap();
    let mut policy = LogRankPolicy::new(scorer);
    let mut env = ReplayEnvironment::new(catalog.clone(), ground, ReplayUser::new(0, positives.clone()));
    let log = run_episode(&mut policy, &mut env, 30, 10).unwrap();
    assert_eq!(log.len(), 30);
    assert!(log.exhausted_at.is_none());
    let mut seen = HashSet::new();
    for (t, r) in log.rounds.iter().enumerate() {
        assert_eq!(r.candidate_count, 1447 - 10 * t);
        for (&a, &w) in r.slate.iter().zip(&r.rewards) {
            assert!(seen.insert(a));
            assert_eq!(w, if positives.contains(&a) { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn replay_stops_cleanly_when_items_run_out() {
    let (catalog, ground) = replay_world(25);
    let mut policy = LogRankPolicy::new(StaticScorer::new(&catalog, vec![0.0; 10]).unwrap());
    let mut env = ReplayEnvironment::new(catalog, ground, ReplayUser::new(0, HashSet::from([1])));
    let log = run_episode(&mut policy, &mut env, 30, 10).unwrap();
    assert_eq!(log.len(), 2);
    assert_eq!(log.exhausted_at, Some(3));
    assert!(run_episode(&mut policy, &mut env, 0, 10).unwrap().is_empty());
}

fn lmdh_sim_log(seed: u64) -> lmdb_bandit::env::TrialLog {
    let inst = simulated_instance(seed);
    let mut policy = LmdhPolicy::new(LmdhConfig { lambda: 1.0, alpha: 1.0, d: 10, m: 1, k: 5 }).unwrap();
    let mut env = SimEnvironment::new(inst, rng(seed, 0, Stream::Feedback), rng(seed, 0, Stream::Candidates));
    run_episode(&mut policy, &mut env, 50, 5).unwrap()
}

#[test]
fn episodes_are_reproducible() {
    assert_eq!(lmdh_sim_log(3), lmdh_sim_log(3));
    let inst = simulated_instance(3);
    let scorer = StaticScorer::new(&inst.catalog, inst.eta_star.theta.clone()).unwrap();
    let run = || {
        let mut p = EpsilonGreedyPolicy::new(scorer.clone(), 0.3, rng(3, 0, Stream::Policy));
        let mut env = SimEnvironment::new(
            inst.clone(),
            rng(3, 0, Stream::Feedback),
            rng(3, 0, Stream::Candidates),
        );
        run_episode(&mut p, &mut env, 40, 5).unwrap()
    };
    assert_eq!(run(), run());
    let mut a = Vec::new();
    let mut b = Vec::new();
    lmdh_sim_log(3).write_csv(&mut a).unwrap();
    lmdh_sim_log(3).write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulated_log_carries_widths_and_utilities() {
    let log = lmdh_sim_log(6);
    for r in &log.rounds {
        assert_eq!(r.candidate_count, 20);
        assert_eq!(r.widths.as_ref().map(Vec::len), Some(5));
        assert!(r.utility.is_some());
        assert!(r.rewards.iter().all(|w| *w == 0.0 || *w == 1.0));
    }
    let mut csv = Vec::new();
    log.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 50 * 5);
}

#[test]
fn failures_carry_the_round() {
    let inst = simulated_instance(1);
    let mut policy = LmdhPolicy::new(LmdhConfig { lambda: 1.0, alpha: 1.0, d: 3, m: 1, k: 5 }).unwrap();
    let mut env = SimEnvironment::new(inst, rng(0, 0, Stream::Feedback), rng(0, 0, Stream::Candidates));
    match run_episode(&mut policy, &mut env, 5, 5) {
        Err(Error::Round { round: 1, .. }) => {}
        other => panic!("{other:?}"),
    }
}
