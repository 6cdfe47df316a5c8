//! Slate policies: LMDH and the LogRank, MMR and ε-Greedy baselines.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{cosine_similarity, dot, ItemCatalog, ItemId, MarginalGain, Slate};
use crate::error::{Error, Result};
use crate::greedy::validate_candidates;
use crate::hybrid::{HybridStatistics, LmdhConfig};

/// What a policy recommends in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub slate: Slate,
    /// `Δ(a_k | a_1..a_{k-1})` for every position, as computed at selection.
    pub features: Vec<MarginalGain>,
    /// `√v` of each chosen item at selection time (LMDH only).
    pub widths: Option<Vec<f64>>,
}

impl Selection {
    /// Wraps a slate chosen without feature tracking, computing its prefix
    /// marginals.
    pub fn from_slate(catalog: &ItemCatalog, slate: Slate) -> Result<Self> {
        let features = catalog.prefix_marginals(slate.items())?;
        Ok(Self {
            slate,
            features,
            widths: None,
        })
    }
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Chooses exactly `k` distinct items from `candidates`.
    fn select(&mut self, catalog: &ItemCatalog, candidates: &[ItemId], k: usize) -> Result<Selection>;

    /// Receives per-position rewards for the last selection.
    fn observe(&mut self, _selection: &Selection, _rewards: &[f64]) -> Result<()> {
        Ok(())
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn select(&mut self, catalog: &ItemCatalog, candidates: &[ItemId], k: usize) -> Result<Selection> {
        (**self).select(catalog, candidates, k)
    }
    fn observe(&mut self, selection: &Selection, rewards: &[f64]) -> Result<()> {
        (**self).observe(selection, rewards)
    }
}

/// Linear Modular Dispersion Hybrid: greedy slate construction on upper
/// confidence bounds of the hybrid ridge estimate.
#[derive(Debug, Clone)]
pub struct LmdhPolicy {
    config: LmdhConfig,
    stats: HybridStatistics,
}

impl LmdhPolicy {
    pub fn new(config: LmdhConfig) -> Result<Self> {
        config.validate()?;
        let stats = HybridStatistics::new(config.d, config.m, config.lambda)?;
        Ok(Self { config, stats })
    }

    /// Starts from existing statistics (for instance a restored snapshot).
    pub fn with_statistics(config: LmdhConfig, stats: HybridStatistics) -> Result<Self> {
        config.validate()?;
        if stats.relevance_dim() != config.d || stats.diversity_dim() != config.m {
            return Err(Error::Dimension {
                what: "statistics",
                expected: config.d + config.m,
                found: stats.relevance_dim() + stats.diversity_dim(),
            });
        }
        Ok(Self { config, stats })
    }

    pub fn config(&self) -> &LmdhConfig {
        &self.config
    }

    pub fn statistics(&self) -> &HybridStatistics {
        &self.stats
    }

    pub fn statistics_mut(&mut self) -> &mut HybridStatistics {
        &mut self.stats
    }

    /// Greedy construction on UCB scores. At every position the diversity
    /// features of each remaining candidate are taken against the current
    /// partial slate; ties go to the smallest id.
    pub fn select_slate(&self, catalog: &ItemCatalog, candidates: &[ItemId], k: usize) -> Result<Selection> {
        validate_candidates(catalog, candidates, k)?;
        if catalog.relevance_dim() != self.config.d || catalog.diversity_dim() != self.config.m {
            return Err(Error::Dimension {
                what: "catalog features",
                expected: self.config.d + self.config.m,
                found: catalog.relevance_dim() + catalog.diversity_dim(),
            });
        }
        let m = self.config.m;
        let alpha = self.config.alpha;
        let scorer = self.stats.scorer();
        let relevance_width: Vec<f64> = candidates
            .iter()
            .map(|&a| scorer.relevance_width(catalog.relevance(a)))
            .collect();
        let mut diversity = vec![vec![0.0; m]; candidates.len()];
        let mut taken = vec![false; candidates.len()];
        let mut slate = Slate::new(k);
        let mut features = Vec::with_capacity(k);
        let mut widths = Vec::with_capacity(k);

        for _ in 0..k {
            let mut best: Option<(usize, f64, f64)> = None;
            for (idx, &a) in candidates.iter().enumerate() {
                if taken[idx] {
                    continue;
                }
                let z = catalog.relevance(a);
                let x = &diversity[idx];
                let v = scorer.clamp_width(scorer.width_with(relevance_width[idx], z, x));
                let mu = scorer.estimate_score(z, x) + alpha * v.sqrt();
                let better = match best {
                    None => true,
                    Some((b, s, _)) => mu > s || (mu == s && a < candidates[b]),
                };
                if better {
                    best = Some((idx, mu, v));
                }
            }
            let (idx, _, v) = best.expect("at least K candidates");
            let chosen = candidates[idx];
            taken[idx] = true;
            slate.push(chosen)?;
            features.push(MarginalGain {
                relevance: catalog.relevance(chosen).to_vec(),
                diversity: diversity[idx].clone(),
            });
            widths.push(v.sqrt());
            for (j, &a) in candidates.iter().enumerate() {
                if !taken[j] {
                    for (i, acc) in diversity[j].iter_mut().enumerate() {
                        *acc += catalog.distance(i, a, chosen);
                    }
                }
            }
        }
        Ok(Selection {
            slate,
            features,
            widths: Some(widths),
        })
    }
}

impl Policy for LmdhPolicy {
    fn name(&self) -> &'static str {
        "lmdh"
    }

    fn select(&mut self, catalog: &ItemCatalog, candidates: &[ItemId], k: usize) -> Result<Selection> {
        self.select_slate(catalog, candidates, k)
    }

    fn observe(&mut self, selection: &Selection, rewards: &[f64]) -> Result<()> {
        if selection.features.len() != selection.slate.len() {
            return Err(Error::Dimension {
                what: "logged features per slate position",
                expected: selection.slate.len(),
                found: selection.features.len(),
            });
        }
        self.stats.update(&selection.features, rewards)
    }
}

/// Fixed item quality `r_a = 1 / (1 + exp(-ūᵀz_a))`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticScorer {
    u_bar: Vec<f64>,
    quality: Vec<f64>,
}

impl StaticScorer {
    pub fn new(catalog: &ItemCatalog, u_bar: Vec<f64>) -> Result<Self> {
        if u_bar.len() != catalog.relevance_dim() {
            return Err(Error::Dimension {
                what: "mean user vector",
                expected: catalog.relevance_dim(),
                found: u_bar.len(),
            });
        }
        let quality = catalog
            .items()
            .map(|a| 1.0 / (1.0 + (-dot(&u_bar, catalog.relevance(a))).exp()))
            .collect();
        Ok(Self { u_bar, quality })
    }

    pub fn u_bar(&self) -> &[f64] {
        &self.u_bar
    }

    pub fn quality(&self, a: ItemId) -> f64 {
        self.quality[a]
    }

    fn check(&self, catalog: &ItemCatalog) -> Result<()> {
        if self.quality.len() != catalog.len() {
            return Err(Error::Dimension {
                what: "scored items",
                expected: catalog.len(),
                found: self.quality.len(),
            });
        }
        Ok(())
    }

    /// Index into `candidates` of the best-quality untaken item.
    fn best_remaining(&self, candidates: &[ItemId], taken: &[bool]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (idx, &a) in candidates.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            best = match best {
                Some(b) if !self.beats(a, candidates[b]) => Some(b),
                _ => Some(idx),
            };
        }
        best
    }

    fn beats(&self, a: ItemId, b: ItemId) -> bool {
        let (qa, qb) = (self.quality[a], self.quality[b]);
        qa > qb || (qa == qb && a < b)
    }
}

/// The `K` highest-quality candidates in descending order of `r_a`.
pub fn logrank_select(
    scorer: &StaticScorer,
    catalog: &ItemCatalog,
    candidates: &[ItemId],
    k: usize,
) -> Result<Slate> {
    validate_candidates(catalog, candidates, k)?;
    scorer.check(catalog)?;
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| {
        scorer.quality[b]
            .total_cmp(&scorer.quality[a])
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Slate::from_items(order, k)
}

/// Maximal marginal relevance: repeatedly appends the candidate maximising
/// `α r_a - ((1-α)/|A|) Σ_{j∈A} sim(z_a, z_j)`. The penalty is zero while
/// `A` is empty.
pub fn mmr_select(
    scorer: &StaticScorer,
    catalog: &ItemCatalog,
    candidates: &[ItemId],
    k: usize,
    alpha_mmr: f64,
) -> Result<Slate> {
    validate_candidates(catalog, candidates, k)?;
    scorer.check(catalog)?;
    if !(0.0..=1.0).contains(&alpha_mmr) {
        return Err(Error::Config(format!("MMR alpha must lie in [0, 1], got {alpha_mmr}")));
    }
    let mut similarity = vec![0.0; candidates.len()];
    let mut taken = vec![false; candidates.len()];
    let mut slate = Slate::new(k);
    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (idx, &a) in candidates.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            let penalty = if step == 0 {
                0.0
            } else {
                (1.0 - alpha_mmr) / step as f64 * similarity[idx]
            };
            let score = alpha_mmr * scorer.quality[a] - penalty;
            let better = match best {
                None => true,
                Some((b, s)) => score > s || (score == s && a < candidates[b]),
            };
            if better {
                best = Some((idx, score));
            }
        }
        let (idx, _) = best.expect("at least K candidates");
        let chosen = candidates[idx];
        taken[idx] = true;
        slate.push(chosen)?;
        for (j, &a) in candidates.iter().enumerate() {
            if !taken[j] {
                similarity[j] += cosine_similarity(catalog.relevance(a), catalog.relevance(chosen))?;
            }
        }
    }
    Ok(slate)
}

/// Fills each slot independently: with probability `ε` a uniformly random
/// untaken candidate, otherwise the best-quality untaken candidate.
pub fn epsilon_greedy_select<R: Rng + ?Sized>(
    scorer: &StaticScorer,
    catalog: &ItemCatalog,
    candidates: &[ItemId],
    k: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<Slate> {
    validate_candidates(catalog, candidates, k)?;
    scorer.check(catalog)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let mut taken = vec![false; candidates.len()];
    let mut slate = Slate::new(k);
    for _ in 0..k {
        let explore = rng.random::<f64>() < epsilon;
        let idx = if explore {
            let open: Vec<usize> = (0..candidates.len()).filter(|&i| !taken[i]).collect();
            *open.choose(rng).expect("at least K candidates")
        } else {
            scorer.best_remaining(candidates, &taken).expect("at least K candidates")
        };
        taken[idx] = true;
        slate.push(candidates[idx])?;
    }
    Ok(slate)
}

#[derive(Debug, Clone)]
pub struct LogRankPolicy {
    scorer: StaticScorer,
}

impl LogRankPolicy {
    pub fn new(scorer: StaticScorer) -> Self {
        Self { scorer }
    }
}

impl Policy for LogRankPolicy {
    fn name(&self) -> &'static str {
        "logrank"
    }

    fn select(&mut self, catalog: &ItemCatalog, candidates: &[ItemId], k: usize) -> Result<Selection> {
        let slate = logrank_select(&self.scorer, catalog, candidates, k)?;
        Selection::from_slate(catalog, slate)
    }
}

#[derive(Debug, Clone)]
pub struct MmrPolicy {
    scorer: StaticScorer,
    alpha: f64,
}

impl MmrPolicy {
    /// The tuned trade-off used in the replay experiments.
    pub const DEFAULT_ALPHA: f64 = 0.9;

    pub fn new(scorer: StaticScorer, alpha: f64) -> Self {
        Self { scorer, alpha }
    }
}

impl Policy for MmrPolicy {
    fn name(&self) -> &'static str {
        "mmr"
    }

    fn select(&mut self, catalog: &ItemCatalog, candidates: &[ItemId], k: usize) -> Result<Selection> {
        let slate = mmr_select(&self.scorer, catalog, candidates, k, self.alpha)?;
        Selection::from_slate(catalog, slate)
    }
}

#[derive(Debug, Clone)]
pub struct EpsilonGreedyPolicy {
    scorer: StaticScorer,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl EpsilonGreedyPolicy {
    pub const DEFAULT_EPSILON: f64 = 0.05;

    pub fn new(scorer: StaticScorer, epsilon: f64, rng: ChaCha8Rng) -> Self {
        Self { scorer, epsilon, rng }
    }
}

impl Policy for EpsilonGreedyPolicy {
    fn name(&self) -> &'static str {
        "epsilon-greedy"
    }

    fn select(&mut self, catalog: &ItemCatalog, candidates: &[ItemId], k: usize) -> Result<Selection> {
        let slate = epsilon_greedy_select(&self.scorer, catalog, candidates, k, self.epsilon, &mut self.rng)?;
        Selection::from_slate(catalog, slate)
    }
}
