//! The block statistics checked against a joint ridge design rebuilt from
//! the raw observation log and inverted by LU.

use lmdb_bandit::catalog::{DistanceMetric, ItemCatalog, MarginalGain, MetricMode, PreferenceVector};
use lmdb_bandit::greedy::greedy_select;
use lmdb_bandit::hybrid::{ucb_score, HybridStatistics, LmdhConfig};
use lmdb_bandit::policy::{LmdhPolicy, Policy};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct RawLog {
    dim: usize,
    lambda: f64,
    rows: Vec<(DVector<f64>, f64)>,
}

impl RawLog {
    fn new(d: usize, m: usize, lambda: f64) -> Self {
        Self { dim: d + m, lambda, rows: Vec::new() }
    }

    fn push(&mut self, g: &MarginalGain, w: f64) {
        self.rows.push((DVector::from_vec(g.joint()), w));
    }

    fn phi(&self) -> DMatrix<f64> {
        let mut phi = DMatrix::identity(self.dim, self.dim) * self.lambda;
        for (zeta, _) in &self.rows {
            phi += zeta * zeta.transpose();
        }
        phi
    }

    fn phi_inv(&self) -> DMatrix<f64> {
        self.phi().lu().try_inverse().expect("ridge design is invertible")
    }

    fn estimate(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim);
        for (zeta, w) in &self.rows {
            b += zeta * *w;
        }
        self.phi_inv() * b
    }
}

fn catalog(rng: &mut ChaCha8Rng, l: usize, d: usize) -> ItemCatalog {
    let relevance: Vec<Vec<f64>> = (0..l).map(|_| (0..d).map(|_| rng.random_range(0.0..0.5) + 0.01).collect()).collect();
    let mut table = vec![0.0; l * l];
    for a in 0..l {
        for b in a + 1..l {
            let v = rng.random_range(0.0..0.3);
            table[a * l + b] = v;
            table[b * l + a] = v;
        }
    }
    ItemCatalog::new(
        relevance,
        vec![DistanceMetric::Cosine(MetricMode::SlateNormalized { capacity: 4 }), DistanceMetric::Table(table)],
    )
    .unwrap()
}

fn probe(rng: &mut ChaCha8Rng, d: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    (
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

fn quad(inv: &DMatrix<f64>, z: &[f64], x: &[f64]) -> f64 {
    let zeta = DVector::from_iterator(z.len() + x.len(), z.iter().chain(x).copied());
    (zeta.transpose() * inv * &zeta)[(0, 0)]
}

#[test]
fn widths_and_estimates_match_the_joint_design() {
    let (d, m, l, k) = (4, 2, 15, 4);
    let lambda = 1.5;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cat = catalog(&mut rng, l, d);
    let mut policy = LmdhPolicy::new(LmdhConfig { lambda, alpha: 0.7, d, m, k }).unwrap();
    let mut log = RawLog::new(d, m, lambda);
    for round in 0..200 {
        let candidates: Vec<usize> = (0..l).filter(|_| rng.random_bool(0.7)).collect();
        if candidates.len() < k {
            continue;
        }
        let sel = policy.select(&cat, &candidates, k).unwrap();
        let rewards: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
        policy.observe(&sel, &rewards).unwrap();
        for (g, w) in sel.features.iter().zip(&rewards) {
            log.push(g, *w);
        }
        if round % 25 == 24 {
            let inv = log.phi_inv();
            for _ in 0..10 {
                let (z, x) = probe(&mut rng, d, m);
                let block = policy.statistics().confidence_width(&z, &x).unwrap();
                assert!((block - quad(&inv, &z, &x)).abs() < 1e-8, "round {round}");
            }
        }
    }
    let stats = policy.statistics();
    let inv = log.phi_inv();
    for _ in 0..100 {
        let (z, x) = probe(&mut rng, d, m);
        assert!((stats.confidence_width(&z, &x).unwrap() - quad(&inv, &z, &x)).abs() < 1e-8);
    }
    assert!((stats.joint_design() - log.phi()).abs().max() < 1e-8);
    let (theta, beta) = stats.estimate();
    let joint = log.estimate();
    for i in 0..d {
        assert!((theta[i] - joint[i]).abs() < 1e-8);
    }
    for i in 0..m {
        assert!((beta[i] - joint[d + i]).abs() < 1e-8);
    }
    let eye_h = stats.h_inv() * stats.h() - DMatrix::identity(d, d);
    let eye_m = stats.m_inv() * stats.m() - DMatrix::identity(m, m);
    assert!(eye_h.norm() < 1e-8 && eye_m.norm() < 1e-8);
    assert!(stats.h().clone().cholesky().is_some() && stats.m().clone().cholesky().is_some());
    assert_eq!(stats.width_clamps(), 0);
}

#[test]
fn widths_shrink_as_data_arrives() {
    let (d, m) = (3, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut stats = HybridStatistics::new(d, m, 1.0).unwrap();
    let probes: Vec<_> = (0..20).map(|_| probe(&mut rng, d, m)).collect();
    let mut last: Vec<f64> = probes.iter().map(|(z, x)| stats.confidence_width(z, x).unwrap()).collect();
    for _ in 0..60 {
        let batch: Vec<MarginalGain> = (0..3)
            .map(|_| {
                let (z, x) = probe(&mut rng, d, m);
                MarginalGain { relevance: z, diversity: x }
            })
            .collect();
        stats.update(&batch, &[1.0, 0.0, 0.5]).unwrap();
        for (i, (z, x)) in probes.iter().enumerate() {
            let now = stats.confidence_width(z, x).unwrap();
            assert!(now <= last[i] + 1e-12);
            last[i] = now;
        }
    }
}

#[test]
fn ucb_grows_with_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut stats = HybridStatistics::new(2, 1, 1.0).unwrap();
    for _ in 0..10 {
        let (z, x) = probe(&mut rng, 2, 1);
        stats.update(&[MarginalGain { relevance: z, diversity: x }], &[1.0]).unwrap();
    }
    let (theta, beta) = stats.estimate();
    let (z, x) = probe(&mut rng, 2, 1);
    let mut prev = f64::NEG_INFINITY;
    for alpha in [0.0, 0.1, 1.0, 3.0, 10.0] {
        let s = ucb_score(&z, &x, &stats, &theta, &beta, alpha).unwrap();
        assert!(s >= prev);
        prev = s;
    }
    let exploit = theta.dot(&DVector::from_vec(z.clone())) + beta.dot(&DVector::from_vec(x.clone()));
    assert!((ucb_score(&z, &x, &stats, &theta, &beta, 0.0).unwrap() - exploit).abs() < 1e-15);
}

#[test]
fn trained_exploitation_reproduces_greedy() {
    let (d, m, l, k) = (4, 1, 12, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let relevance: Vec<Vec<f64>> = (0..l).map(|_| (0..d).map(|_| rng.random_range(0.05..0.5)).collect()).collect();
    let cat = ItemCatalog::new(relevance, vec![DistanceMetric::Cosine(MetricMode::Raw)]).unwrap();
    let eta = PreferenceVector::new(vec![0.3, 0.1, 0.25, 0.15], vec![0.2]);
    let mut stats = HybridStatistics::new(d, m, 1e-3).unwrap();
    // Noiseless rewards equal to the true mean drive the estimate to η*.
    let all: Vec<usize> = (0..l).collect();
    for _ in 0..400 {
        let mut items = all.clone();
        for i in 0..k {
            let j = rng.random_range(i..l);
            items.swap(i, j);
        }
        let gains = cat.prefix_marginals(&items[..k]).unwrap();
        let rewards: Vec<f64> = gains.iter().map(|g| eta.gain(g).clamp(0.0, 1.0)).collect();
        stats.update(&gains, &rewards).unwrap();
    }
    let (theta, beta) = stats.estimate();
    let err: f64 = theta.iter().chain(beta.iter()).zip(eta.joint()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err < 1e-3, "{err}");
    let policy = LmdhPolicy::with_statistics(LmdhConfig { lambda: 1e-3, alpha: 0.0, d, m, k }, stats).unwrap();
    let learned = policy.select_slate(&cat, &all, k).unwrap();
    let oracle = greedy_select(&eta, &cat, &all, k).unwrap();
    assert_eq!(learned.slate, oracle.slate);
}

#[test]
fn snapshot_preserves_behaviour() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut stats = HybridStatistics::new(3, 2, 2.0).unwrap();
    for _ in 0..30 {
        let (z, x) = probe(&mut rng, 3, 2);
        stats.update(&[MarginalGain { relevance: z, diversity: x }], &[rng.random_range(0.0..1.0)]).unwrap();
    }
    let restored = HybridStatistics::from_snapshot(&stats.to_snapshot()).unwrap();
    for _ in 0..20 {
        let (z, x) = probe(&mut rng, 3, 2);
        assert_eq!(stats.confidence_width(&z, &x).unwrap(), restored.confidence_width(&z, &x).unwrap());
    }
    assert_eq!(stats.estimate(), restored.estimate());
}
