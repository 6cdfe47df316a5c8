//! Feedback worlds and the episode loop.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ItemCatalog, ItemId, MarginalGain, PreferenceVector, Slate};
use crate::error::{Error, Result};
use crate::policy::Policy;

/// How candidate sets are drawn from the items that remain available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CandidateMode {
    All,
    Sampled { size: usize },
}

/// `E_t`: the ground set minus consumed items, optionally subsampled.
pub fn candidate_set<R: Rng + ?Sized>(
    ground: &[ItemId],
    consumed: &HashSet<ItemId>,
    mode: CandidateMode,
    k: usize,
    rng: &mut R,
) -> Result<Vec<ItemId>> {
    let remaining = remaining_items(ground, consumed, k)?;
    match mode {
        CandidateMode::All => Ok(remaining),
        CandidateMode::Sampled { size } => {
            let size = size.max(k);
            if size >= remaining.len() {
                return Ok(remaining);
            }
            let mut picked: Vec<ItemId> = sample(rng, remaining.len(), size)
                .into_iter()
                .map(|i| remaining[i])
                .collect();
            picked.sort_unstable();
            Ok(picked)
        }
    }
}

fn remaining_items(ground: &[ItemId], consumed: &HashSet<ItemId>, k: usize) -> Result<Vec<ItemId>> {
    let remaining: Vec<ItemId> = ground.iter().copied().filter(|a| !consumed.contains(a)).collect();
    if remaining.len() < k {
        return Err(Error::ExhaustedCandidates {
            remaining: remaining.len(),
            needed: k,
        });
    }
    Ok(remaining)
}

/// A simulated user with hidden preferences `η*`.
#[derive(Debug, Clone)]
pub struct SimInstance {
    pub catalog: Arc<ItemCatalog>,
    pub eta_star: PreferenceVector,
    pub seed: u64,
    pub candidate_mode: CandidateMode,
}

impl SimInstance {
    pub fn new(
        catalog: Arc<ItemCatalog>,
        eta_star: PreferenceVector,
        seed: u64,
        candidate_mode: CandidateMode,
    ) -> Result<Self> {
        catalog.check_preferences(&eta_star)?;
        Ok(Self {
            catalog,
            eta_star,
            seed,
            candidate_mode,
        })
    }
}

/// Per-position Bernoulli rewards with mean `clamp(η*ᵀΔ(a_k | prefix), 0, 1)`.
/// Returns the rewards and the number of positions whose mean was clamped.
pub fn bernoulli_feedback<R: Rng + ?Sized>(
    slate: &Slate,
    instance: &SimInstance,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    let mut clamped = 0;
    let mut rewards = Vec::with_capacity(slate.len());
    for k in 0..slate.len() {
        let gain = instance.eta_star.gain(&instance.catalog.joint_marginal(slate.items()[k], &slate.items()[..k])?);
        let mean = gain.clamp(0.0, 1.0);
        if mean != gain {
            clamped += 1;
        }
        rewards.push(if rng.random::<f64>() < mean { 1.0 } else { 0.0 });
    }
    Ok((rewards, clamped))
}

/// A held-out user: rewards are membership in the positive set.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayUser {
    pub user: usize,
    pub positives: HashSet<ItemId>,
    pub consumed: HashSet<ItemId>,
}

impl ReplayUser {
    pub fn new(user: usize, positives: HashSet<ItemId>) -> Self {
        Self {
            user,
            positives,
            consumed: HashSet::new(),
        }
    }
}

/// Reward 1 at each position whose item is a held-out positive, else 0.
/// The slate is then marked as consumed.
pub fn replay_feedback(slate: &Slate, user: &mut ReplayUser) -> Result<Vec<f64>> {
    if let Some(&a) = slate.items().iter().find(|a| user.consumed.contains(a)) {
        return Err(Error::ProtocolViolation(a));
    }
    let rewards = slate
        .items()
        .iter()
        .map(|a| if user.positives.contains(a) { 1.0 } else { 0.0 })
        .collect();
    user.consumed.extend(slate.items().iter().copied());
    Ok(rewards)
}

pub trait Environment {
    fn catalog(&self) -> &ItemCatalog;

    /// Candidates for `round` (1-based).
    fn candidates(&mut self, round: usize, k: usize) -> Result<Vec<ItemId>>;

    fn feedback(&mut self, slate: &Slate) -> Result<Vec<f64>>;

    /// `F(A | η*)` when the environment knows it.
    fn true_utility(&self, _slate: &Slate) -> Option<f64> {
        None
    }

    /// Whether per-round candidate sets should be kept in the log.
    fn records_candidates(&self) -> bool {
        false
    }
}

/// Bernoulli world. Items are not consumed between rounds: every round draws
/// from the full ground set (or a sample of it).
#[derive(Debug, Clone)]
pub struct SimEnvironment {
    instance: SimInstance,
    ground: Vec<ItemId>,
    feedback_rng: ChaCha8Rng,
    candidate_rng: ChaCha8Rng,
    clamp_hits: usize,
}

impl SimEnvironment {
    pub fn new(instance: SimInstance, feedback_rng: ChaCha8Rng, candidate_rng: ChaCha8Rng) -> Self {
        let ground = instance.catalog.items().collect();
        Self {
            instance,
            ground,
            feedback_rng,
            candidate_rng,
            clamp_hits: 0,
        }
    }

    pub fn instance(&self) -> &SimInstance {
        &self.instance
    }

    /// Positions whose Bernoulli mean had to be clamped into `[0, 1]`.
    pub fn clamp_hits(&self) -> usize {
        self.clamp_hits
    }
}

impl Environment for SimEnvironment {
    fn catalog(&self) -> &ItemCatalog {
        &self.instance.catalog
    }

    fn candidates(&mut self, _round: usize, k: usize) -> Result<Vec<ItemId>> {
        candidate_set(
            &self.ground,
            &HashSet::new(),
            self.instance.candidate_mode,
            k,
            &mut self.candidate_rng,
        )
    }

    fn feedback(&mut self, slate: &Slate) -> Result<Vec<f64>> {
        let (rewards, clamped) = bernoulli_feedback(slate, &self.instance, &mut self.feedback_rng)?;
        self.clamp_hits += clamped;
        Ok(rewards)
    }

    fn true_utility(&self, slate: &Slate) -> Option<f64> {
        self.instance.catalog.utility(slate.items(), &self.instance.eta_star).ok()
    }

    fn records_candidates(&self) -> bool {
        self.instance.candidate_mode != CandidateMode::All
    }
}

/// Offline replay world for one test user.
#[derive(Debug, Clone)]
pub struct ReplayEnvironment {
    catalog: Arc<ItemCatalog>,
    ground: Arc<Vec<ItemId>>,
    user: ReplayUser,
}

impl ReplayEnvironment {
    pub fn new(catalog: Arc<ItemCatalog>, ground: Arc<Vec<ItemId>>, user: ReplayUser) -> Self {
        Self { catalog, ground, user }
    }

    pub fn user(&self) -> &ReplayUser {
        &self.user
    }
}

impl Environment for ReplayEnvironment {
    fn catalog(&self) -> &ItemCatalog {
        &self.catalog
    }

    fn candidates(&mut self, _round: usize, k: usize) -> Result<Vec<ItemId>> {
        remaining_items(&self.ground, &self.user.consumed, k)
    }

    fn feedback(&mut self, slate: &Slate) -> Result<Vec<f64>> {
        replay_feedback(slate, &mut self.user)
    }
}

/// One recommendation round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    pub candidate_count: usize,
    pub candidates: Option<Vec<ItemId>>,
    pub slate: Vec<ItemId>,
    pub rewards: Vec<f64>,
    pub features: Vec<MarginalGain>,
    pub widths: Option<Vec<f64>>,
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialLog {
    pub rounds: Vec<RoundRecord>,
    /// Set when the episode stopped early because candidates ran out.
    pub exhausted_at: Option<usize>,
}

impl TrialLog {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// CSV with columns `t, position, item_id, reward, width`; `width` is
    /// empty for policies that do not report one. Positions are 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "position", "item_id", "reward", "width"])?;
        for r in &self.rounds {
            for (p, (&a, &reward)) in r.slate.iter().zip(&r.rewards).enumerate() {
                let width = r.widths.as_ref().map(|ws| ws[p].to_string()).unwrap_or_default();
                w.write_record([
                    r.t.to_string(),
                    (p + 1).to_string(),
                    a.to_string(),
                    reward.to_string(),
                    width,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `n` rounds of select → feedback → observe. Candidate exhaustion ends
/// the episode early without error; other failures carry the round index.
pub fn run_episode<P, E>(policy: &mut P, env: &mut E, n: usize, k: usize) -> Result<TrialLog>
where
    P: Policy + ?Sized,
    E: Environment + ?Sized,
{
    let mut log = TrialLog::default();
    for t in 1..=n {
        let candidates = match env.candidates(t, k) {
            Ok(c) => c,
            Err(Error::ExhaustedCandidates { .. }) => {
                log.exhausted_at = Some(t);
                break;
            }
            Err(e) => return Err(e.at_round(t)),
        };
        let selection = policy
            .select(env.catalog(), &candidates, k)
            .map_err(|e| e.at_round(t))?;
        let rewards = env.feedback(&selection.slate).map_err(|e| e.at_round(t))?;
        policy.observe(&selection, &rewards).map_err(|e| e.at_round(t))?;
        let utility = env.true_utility(&selection.slate);
        log.rounds.push(RoundRecord {
            t,
            candidate_count: candidates.len(),
            candidates: env.records_candidates().then_some(candidates),
            slate: selection.slate.items().to_vec(),
            rewards,
            features: selection.features,
            widths: selection.widths,
            utility,
        });
    }
    Ok(log)
}
