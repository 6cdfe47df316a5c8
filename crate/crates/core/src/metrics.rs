//! Recall, diversity, F-beta and regret series.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::{cosine_distance, ItemCatalog, ItemId};
use crate::env::{SimInstance, TrialLog};
use crate::error::{Error, Result};
use crate::greedy::{exhaustive_optimum, greedy_select, DEFAULT_EXHAUSTIVE_BUDGET};
use crate::theory::GAMMA;

/// One user's episode together with their held-out positives.
#[derive(Debug, Clone)]
pub struct UserOutcome {
    pub user: usize,
    pub log: TrialLog,
    pub positives: HashSet<ItemId>,
}

/// Cumulative hit fraction `Σ_{ℓ≤t} |A_ℓ ∩ I| / |I|` for every logged round.
pub fn recall_curve(log: &TrialLog, positives: &HashSet<ItemId>) -> Vec<f64> {
    let size = positives.len() as f64;
    let mut hits = 0usize;
    log.rounds
        .iter()
        .map(|r| {
            hits += r.slate.iter().filter(|a| positives.contains(a)).count();
            hits as f64 / size
        })
        .collect()
}

/// Mean pairwise raw cosine distance within one slate.
pub fn slate_diversity(catalog: &ItemCatalog, slate: &[ItemId]) -> Result<f64> {
    if slate.len() < 2 {
        return Err(Error::UndefinedDiversity(slate.len()));
    }
    let mut sum = 0.0;
    for (i, &a) in slate.iter().enumerate() {
        for &b in &slate[i + 1..] {
            sum += cosine_distance(catalog.relevance(a), catalog.relevance(b))?;
        }
    }
    let pairs = (slate.len() * (slate.len() - 1) / 2) as f64;
    Ok(sum / pairs)
}

/// Running mean of [`slate_diversity`] over rounds `1..=t`.
pub fn diversity_curve(log: &TrialLog, catalog: &ItemCatalog) -> Result<Vec<f64>> {
    let mut sum = 0.0;
    log.rounds
        .iter()
        .enumerate()
        .map(|(i, r)| {
            sum += slate_diversity(catalog, &r.slate)?;
            Ok(sum / (i + 1) as f64)
        })
        .collect()
}

fn sorted_by_user(outcomes: &[UserOutcome]) -> Vec<&UserOutcome> {
    let mut v: Vec<&UserOutcome> = outcomes.iter().collect();
    v.sort_by_key(|o| o.user);
    v
}

/// Mean over users alive at round `t` (1-based). Users with no positives are
/// skipped; `None` when nobody qualifies.
pub fn recall_at(outcomes: &[UserOutcome], t: usize) -> Option<f64> {
    let values: Vec<f64> = sorted_by_user(outcomes)
        .into_iter()
        .filter(|o| !o.positives.is_empty() && o.log.len() >= t && t > 0)
        .map(|o| recall_curve(&o.log, &o.positives)[t - 1])
        .collect();
    mean(&values)
}

pub fn diversity_at(outcomes: &[UserOutcome], catalog: &ItemCatalog, t: usize) -> Result<Option<f64>> {
    let mut values = Vec::new();
    for o in sorted_by_user(outcomes) {
        if t > 0 && o.log.len() >= t {
            values.push(diversity_curve(&o.log, catalog)?[t - 1]);
        }
    }
    Ok(mean(&values))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// `(1 + β²)·R·D / (β²·D + R)`, taken as 0 when the denominator vanishes.
pub fn f_beta(recall: f64, diversity: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * diversity + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * recall * diversity / denom
    }
}

/// Aggregated replay metrics, one entry per round.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub recall: Vec<f64>,
    pub diversity: Vec<f64>,
    /// `(β, F_β per round)`.
    pub f_beta: Vec<(f64, Vec<f64>)>,
    /// Users contributing at each round.
    pub n_users: Vec<usize>,
    /// Users left out because their positive set was empty.
    pub skipped_users: usize,
}

impl MetricSeries {
    /// Aggregates per-user curves; round `t` averages over users whose
    /// episode reached `t`. Reduction runs in ascending user order.
    pub fn from_outcomes(outcomes: &[UserOutcome], catalog: &ItemCatalog, betas: &[f64]) -> Result<Self> {
        let users = sorted_by_user(outcomes);
        let horizon = users.iter().map(|o| o.log.len()).max().unwrap_or(0);
        let mut recall_sum = vec![0.0; horizon];
        let mut diversity_sum = vec![0.0; horizon];
        let mut n_users = vec![0usize; horizon];
        let mut skipped_users = 0;
        for o in users {
            if o.positives.is_empty() {
                skipped_users += 1;
                continue;
            }
            let recall = recall_curve(&o.log, &o.positives);
            let diversity = diversity_curve(&o.log, catalog)?;
            for t in 0..o.log.len() {
                recall_sum[t] += recall[t];
                diversity_sum[t] += diversity[t];
                n_users[t] += 1;
            }
        }
        let per = |sums: Vec<f64>| -> Vec<f64> {
            sums.into_iter()
                .zip(&n_users)
                .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
                .collect()
        };
        let recall = per(recall_sum);
        let diversity = per(diversity_sum);
        let f_beta = betas
            .iter()
            .map(|&b| (b, recall.iter().zip(&diversity).map(|(&r, &d)| f_beta(r, d, b)).collect()))
            .collect();
        Ok(Self {
            recall,
            diversity,
            f_beta,
            n_users,
            skipped_users,
        })
    }

    pub fn len(&self) -> usize {
        self.recall.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recall.is_empty()
    }

    /// Long-format CSV: `round, metric, beta, value, n_users`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "metric", "beta", "value", "n_users"])?;
        for t in 0..self.len() {
            let round = (t + 1).to_string();
            let n = self.n_users[t].to_string();
            w.write_record([&round, "recall", "", &self.recall[t].to_string(), &n])?;
            w.write_record([&round, "diversity", "", &self.diversity[t].to_string(), &n])?;
            for (beta, values) in &self.f_beta {
                w.write_record([&round, "f_beta", &beta.to_string(), &values[t].to_string(), &n])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// How the per-round best slate `A*_t` is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimumMode {
    Exhaustive,
    /// Greedy under the true preferences; the resulting regret is a lower
    /// bound on the exhaustive one.
    GreedyOracle,
}

impl std::str::FromStr for OptimumMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "greedy-oracle" => Ok(Self::GreedyOracle),
            other => Err(Error::Config(format!("unknown optimum mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretConfig {
    pub gamma: f64,
    pub optimum_mode: OptimumMode,
}

impl Default for RegretConfig {
    fn default() -> Self {
        Self {
            gamma: GAMMA,
            optimum_mode: OptimumMode::Exhaustive,
        }
    }
}

/// Cumulative regret over rounds `1..=n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretSeries {
    /// `Σ F(A*_t) − F(A_t)/γ`.
    pub scaled: Vec<f64>,
    /// `Σ F(A*_t) − F(A_t)`.
    pub raw: Vec<f64>,
}

/// Regret of a simulated episode against the instance's true preferences.
/// Optima are cached per distinct candidate set.
pub fn scaled_regret(log: &TrialLog, instance: &SimInstance, config: &RegretConfig) -> Result<RegretSeries> {
    if !(config.gamma > 0.0 && config.gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", config.gamma)));
    }
    let catalog = &instance.catalog;
    let eta = &instance.eta_star;
    let all: Vec<ItemId> = catalog.items().collect();
    let mut cache: HashMap<Vec<ItemId>, f64> = HashMap::new();
    let mut out = RegretSeries::default();
    let (mut scaled, mut raw) = (0.0, 0.0);
    for r in &log.rounds {
        let mut candidates = r.candidates.clone().unwrap_or_else(|| all.clone());
        candidates.sort_unstable();
        let k = r.slate.len();
        let best = match cache.get(&candidates) {
            Some(&v) => v,
            None => {
                let v = match config.optimum_mode {
                    OptimumMode::Exhaustive => {
                        exhaustive_optimum(eta, catalog, &candidates, k, DEFAULT_EXHAUSTIVE_BUDGET)?.1
                    }
                    OptimumMode::GreedyOracle => {
                        let g = greedy_select(eta, catalog, &candidates, k)?;
                        catalog.utility(g.slate.items(), eta)?
                    }
                };
                cache.insert(candidates, v);
                v
            }
        };
        let achieved = match r.utility {
            Some(u) => u,
            None => catalog.utility(&r.slate, eta)?,
        };
        scaled += best - achieved / config.gamma;
        raw += best - achieved;
        out.scaled.push(scaled);
        out.raw.push(raw);
    }
    Ok(out)
}

/// Per-round rows of `regret.csv`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTable {
    pub scaled: Vec<f64>,
    pub raw: Vec<f64>,
    pub bound: Vec<Option<f64>>,
    pub width_sum: Vec<Option<f64>>,
    pub width_budget: Vec<Option<f64>>,
}

impl RegretTable {
    /// Columns `round, scaled_regret, raw_regret, bound, width_sum,
    /// width_budget`; absent values are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "scaled_regret", "raw_regret", "bound", "width_sum", "width_budget"])?;
        for t in 0..self.scaled.len() {
            w.write_record([
                (t + 1).to_string(),
                self.scaled[t].to_string(),
                self.raw[t].to_string(),
                opt(self.bound[t]),
                opt(self.width_sum[t]),
                opt(self.width_budget[t]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Element-wise mean of equal-length series, summed in input order.
pub fn average_series(series: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    let n = series.len() as f64;
    (0..first.len())
        .map(|t| series.iter().map(|s| s[t]).sum::<f64>() / n)
        .collect()
}
