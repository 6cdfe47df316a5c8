//! Ground set, marginal features and the modular-plus-dispersion utility.
//!
//! An [`ItemCatalog`] holds, for every item `a` in `{0, …, L-1}`, a relevance
//! vector `z_a ∈ ℝ^d` and `m` pairwise distance metrics. The utility of a set
//! `A` under preferences `η = [θ; β]` is
//!
//! ```text
//! F(A | η) = Σ_i θ_i Σ_{a∈A} z_a[i]  +  Σ_i β_i Σ_{{a,b}⊆A} h_i(a, b)
//! ```
//!
//! and the gain from appending `a` to `A` is `ηᵀ Δ(a | A)` with
//! `Δ(a | A) = [z_a ; (Σ_{j∈A} h_i(a, j))_i]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ItemId = usize;

/// Catalogs with at most this many items precompute every pairwise distance.
pub const DEFAULT_TABLE_THRESHOLD: usize = 4096;

/// Scale applied to the cosine distance `1 - sim(z_i, z_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum MetricMode {
    /// `h = 1 - sim`.
    Raw,
    /// `h = (1 - sim) · 2 / (K (K - 1))` for a fixed slate capacity `K`.
    SlateNormalized { capacity: usize },
}

impl MetricMode {
    pub fn scale(&self) -> Result<f64> {
        match *self {
            MetricMode::Raw => Ok(1.0),
            MetricMode::SlateNormalized { capacity } if capacity >= 2 => {
                Ok(2.0 / (capacity as f64 * (capacity as f64 - 1.0)))
            }
            MetricMode::SlateNormalized { capacity } => Err(Error::InvalidMetric(format!(
                "slate-normalized cosine needs capacity >= 2, got {capacity}"
            ))),
        }
    }
}

/// A pairwise distance `h(·,·)` over the ground set.
#[derive(Debug, Clone)]
pub enum DistanceMetric {
    /// Cosine distance between relevance vectors.
    Cosine(MetricMode),
    /// An explicit symmetric `L × L` table, row-major.
    Table(Vec<f64>),
}

#[derive(Debug, Clone)]
enum MetricStore {
    Table(Vec<f64>),
    Cosine { scale: f64 },
}

/// Immutable ground set with relevance vectors and distance metrics.
#[derive(Debug, Clone)]
pub struct ItemCatalog {
    len: usize,
    relevance_dim: usize,
    relevance: Vec<f64>,
    norms: Vec<f64>,
    metrics: Vec<MetricStore>,
}

/// `1 - (z_i · z_j) / (‖z_i‖ ‖z_j‖)`, clamped to `[0, 2]`.
pub fn cosine_distance(zi: &[f64], zj: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(zi, zj)?)
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(zi: &[f64], zj: &[f64]) -> Result<f64> {
    if zi.len() != zj.len() {
        return Err(Error::Dimension {
            what: "cosine operand",
            expected: zi.len(),
            found: zj.len(),
        });
    }
    let ni = norm(zi);
    let nj = norm(zj);
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot(zi, zj) / (ni * nj)).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl ItemCatalog {
    /// Builds a catalog, precomputing distance tables when `L` is at most
    /// [`DEFAULT_TABLE_THRESHOLD`].
    pub fn new(relevance: Vec<Vec<f64>>, metrics: Vec<DistanceMetric>) -> Result<Self> {
        Self::with_table_threshold(relevance, metrics, DEFAULT_TABLE_THRESHOLD)
    }

    pub fn with_table_threshold(
        relevance: Vec<Vec<f64>>,
        metrics: Vec<DistanceMetric>,
        table_threshold: usize,
    ) -> Result<Self> {
        let len = relevance.len();
        if len == 0 {
            return Err(Error::Config("catalog must contain at least one item".into()));
        }
        let relevance_dim = relevance[0].len();
        if relevance_dim == 0 {
            return Err(Error::Config("relevance dimension must be positive".into()));
        }
        if metrics.is_empty() {
            return Err(Error::Config("at least one distance metric is required".into()));
        }
        let mut flat = Vec::with_capacity(len * relevance_dim);
        for row in &relevance {
            if row.len() != relevance_dim {
                return Err(Error::Dimension {
                    what: "relevance vector",
                    expected: relevance_dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("relevance features must be finite".into()));
            }
            flat.extend_from_slice(row);
        }
        let norms: Vec<f64> = relevance.iter().map(|r| norm(r)).collect();

        let mut stores = Vec::with_capacity(metrics.len());
        for metric in metrics {
            let store = match metric {
                DistanceMetric::Table(table) => {
                    validate_table(&table, len)?;
                    MetricStore::Table(table)
                }
                DistanceMetric::Cosine(mode) => {
                    let scale = mode.scale()?;
                    if norms.contains(&0.0) {
                        return Err(Error::UndefinedSimilarity);
                    }
                    let on_demand = MetricStore::Cosine { scale };
                    if len <= table_threshold {
                        let mut table = vec![0.0; len * len];
                        for i in 0..len {
                            for j in (i + 1)..len {
                                let h = cosine_entry(&flat, &norms, relevance_dim, scale, i, j);
                                table[i * len + j] = h;
                                table[j * len + i] = h;
                            }
                        }
                        MetricStore::Table(table)
                    } else {
                        on_demand
                    }
                }
            };
            stores.push(store);
        }

        Ok(Self {
            len,
            relevance_dim,
            relevance: flat,
            norms,
            metrics: stores,
        })
    }

    /// Number of items `L`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Relevance dimension `d`.
    pub fn relevance_dim(&self) -> usize {
        self.relevance_dim
    }

    /// Number of diversity metrics `m`.
    pub fn diversity_dim(&self) -> usize {
        self.metrics.len()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> {
        0..self.len
    }

    pub fn check_item(&self, a: ItemId) -> Result<()> {
        if a < self.len {
            Ok(())
        } else {
            Err(Error::InvalidItem(a))
        }
    }

    /// The relevance vector `z_a`. Panics on an out-of-range id.
    pub fn relevance(&self, a: ItemId) -> &[f64] {
        &self.relevance[a * self.relevance_dim..(a + 1) * self.relevance_dim]
    }

    /// `h_metric(a, b)`. Panics on out-of-range ids or metric index.
    pub fn distance(&self, metric: usize, a: ItemId, b: ItemId) -> f64 {
        match &self.metrics[metric] {
            MetricStore::Table(t) => t[a * self.len + b],
            MetricStore::Cosine { scale } => {
                if a == b {
                    0.0
                } else {
                    cosine_entry(&self.relevance, &self.norms, self.relevance_dim, *scale, a, b)
                }
            }
        }
    }

    /// Whether metric `metric` is backed by a precomputed table.
    pub fn is_tabulated(&self, metric: usize) -> bool {
        matches!(self.metrics[metric], MetricStore::Table(_))
    }

    fn check_marginal_args(&self, a: ItemId, set: &[ItemId]) -> Result<()> {
        self.check_item(a)?;
        for &j in set {
            self.check_item(j)?;
        }
        if set.contains(&a) {
            return Err(Error::DuplicateItem(a));
        }
        Ok(())
    }

    /// `Δ_R(a | A) = z_a`; independent of `A`.
    pub fn relevance_marginal(&self, a: ItemId, set: &[ItemId]) -> Result<Vec<f64>> {
        self.check_marginal_args(a, set)?;
        Ok(self.relevance(a).to_vec())
    }

    /// `Δ_V(a | A)_i = Σ_{j∈A} h_i(a, j)`.
    pub fn diversity_marginal(&self, a: ItemId, set: &[ItemId]) -> Result<Vec<f64>> {
        self.check_marginal_args(a, set)?;
        Ok(self.diversity_sums(a, set))
    }

    fn diversity_sums(&self, a: ItemId, set: &[ItemId]) -> Vec<f64> {
        (0..self.metrics.len())
            .map(|i| set.iter().map(|&j| self.distance(i, a, j)).sum())
            .collect()
    }

    /// `Δ(a | A) = [Δ_R(a | A); Δ_V(a | A)]`.
    pub fn joint_marginal(&self, a: ItemId, set: &[ItemId]) -> Result<MarginalGain> {
        self.check_marginal_args(a, set)?;
        Ok(MarginalGain {
            relevance: self.relevance(a).to_vec(),
            diversity: self.diversity_sums(a, set),
        })
    }

    /// Marginal features of every position of an ordered slate against its
    /// prefix.
    pub fn prefix_marginals(&self, slate: &[ItemId]) -> Result<Vec<MarginalGain>> {
        (0..slate.len())
            .map(|k| self.joint_marginal(slate[k], &slate[..k]))
            .collect()
    }

    /// `V_i(A)` for every metric.
    pub fn dispersion(&self, set: &[ItemId]) -> Result<Vec<f64>> {
        validate_set(self, set)?;
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        Ok((0..self.metrics.len())
            .map(|i| {
                let mut total = 0.0;
                for (p, &a) in sorted.iter().enumerate() {
                    for &b in &sorted[p + 1..] {
                        total += self.distance(i, a, b);
                    }
                }
                total
            })
            .collect())
    }

    /// `F(A | η)`. Summation runs over the items in ascending id order so the
    /// value is bit-identical for every ordering of `A`.
    pub fn utility(&self, set: &[ItemId], eta: &PreferenceVector) -> Result<f64> {
        self.check_preferences(eta)?;
        let dispersion = self.dispersion(set)?;
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        let mut relevance = vec![0.0; self.relevance_dim];
        for &a in &sorted {
            for (acc, v) in relevance.iter_mut().zip(self.relevance(a)) {
                *acc += v;
            }
        }
        Ok(dot(&eta.theta, &relevance) + dot(&eta.beta, &dispersion))
    }

    pub fn check_preferences(&self, eta: &PreferenceVector) -> Result<()> {
        if eta.theta.len() != self.relevance_dim {
            return Err(Error::Dimension {
                what: "theta",
                expected: self.relevance_dim,
                found: eta.theta.len(),
            });
        }
        if eta.beta.len() != self.metrics.len() {
            return Err(Error::Dimension {
                what: "beta",
                expected: self.metrics.len(),
                found: eta.beta.len(),
            });
        }
        Ok(())
    }

    /// Checks the conditions under which greedy selection is a 1/4
    /// approximation: `β ≥ 0` element-wise and `θᵀz_a ≥ 0` for every item.
    pub fn approximation_guarantee(&self, eta: &PreferenceVector) -> Result<GuaranteeCheck> {
        self.check_preferences(eta)?;
        let negative_beta: Vec<usize> = eta
            .beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b < 0.0)
            .map(|(i, _)| i)
            .collect();
        let negative_relevance: Vec<ItemId> = self
            .items()
            .filter(|&a| dot(&eta.theta, self.relevance(a)) < 0.0)
            .collect();
        Ok(GuaranteeCheck {
            negative_beta,
            negative_relevance,
        })
    }
}

fn cosine_entry(flat: &[f64], norms: &[f64], d: usize, scale: f64, i: usize, j: usize) -> f64 {
    let zi = &flat[i * d..(i + 1) * d];
    let zj = &flat[j * d..(j + 1) * d];
    let sim = (dot(zi, zj) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
    (1.0 - sim) * scale
}

fn validate_table(table: &[f64], len: usize) -> Result<()> {
    if table.len() != len * len {
        return Err(Error::Dimension {
            what: "distance table",
            expected: len * len,
            found: table.len(),
        });
    }
    for i in 0..len {
        if table[i * len + i] != 0.0 {
            return Err(Error::InvalidMetric(format!("h({i},{i}) must be 0")));
        }
        for j in 0..len {
            let h = table[i * len + j];
            if !(h.is_finite() && h >= 0.0) {
                return Err(Error::InvalidMetric(format!("h({i},{j}) = {h} is not a non-negative real")));
            }
            if h != table[j * len + i] {
                return Err(Error::InvalidMetric(format!("h({i},{j}) != h({j},{i})")));
            }
        }
    }
    Ok(())
}

fn validate_set(catalog: &ItemCatalog, set: &[ItemId]) -> Result<()> {
    for (p, &a) in set.iter().enumerate() {
        catalog.check_item(a)?;
        if set[..p].contains(&a) {
            return Err(Error::DuplicateItem(a));
        }
    }
    Ok(())
}

/// Result of [`ItemCatalog::approximation_guarantee`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuaranteeCheck {
    pub negative_beta: Vec<usize>,
    pub negative_relevance: Vec<ItemId>,
}

impl GuaranteeCheck {
    pub fn holds(&self) -> bool {
        self.negative_beta.is_empty() && self.negative_relevance.is_empty()
    }
}

/// `η = [θ; β]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceVector {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl PreferenceVector {
    pub fn new(theta: Vec<f64>, beta: Vec<f64>) -> Self {
        Self { theta, beta }
    }

    pub fn zeros(d: usize, m: usize) -> Self {
        Self::new(vec![0.0; d], vec![0.0; m])
    }

    pub fn joint(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.beta).copied().collect()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.joint())
    }

    /// `ηᵀ Δ`.
    pub fn gain(&self, marginal: &MarginalGain) -> f64 {
        dot(&self.theta, &marginal.relevance) + dot(&self.beta, &marginal.diversity)
    }
}

/// The joint marginal feature `Δ(a | A)`, split into its relevance part `z`
/// and diversity part `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalGain {
    pub relevance: Vec<f64>,
    pub diversity: Vec<f64>,
}

impl MarginalGain {
    pub fn joint(&self) -> Vec<f64> {
        self.relevance.iter().chain(&self.diversity).copied().collect()
    }
}

/// An ordered list of distinct items with a fixed capacity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slate {
    items: Vec<ItemId>,
    capacity: usize,
}

impl Slate {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn from_items(items: Vec<ItemId>, capacity: usize) -> Result<Self> {
        let mut slate = Self::new(capacity);
        for a in items {
            slate.push(a)?;
        }
        Ok(slate)
    }

    pub fn push(&mut self, a: ItemId) -> Result<()> {
        if self.items.contains(&a) {
            return Err(Error::DuplicateItem(a));
        }
        if self.items.len() == self.capacity {
            return Err(Error::SlateFull {
                capacity: self.capacity,
            });
        }
        self.items.push(a);
        Ok(())
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, a: ItemId) -> bool {
        self.items.contains(&a)
    }
}
