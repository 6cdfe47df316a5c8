//! Greedy slate construction against a known preference vector, and the
//! exhaustive oracle it is measured against.

use crate::catalog::{dot, ItemCatalog, ItemId, PreferenceVector, Slate};
use crate::error::{Error, Result};

/// Default cap on the number of subsets [`exhaustive_optimum`] will visit.
pub const DEFAULT_EXHAUSTIVE_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult {
    /// Items in the order they were selected.
    pub slate: Slate,
    /// `ηᵀΔ(a_k | A_{k-1})` for each step.
    pub gain_trace: Vec<f64>,
}

pub(crate) fn validate_candidates(catalog: &ItemCatalog, candidates: &[ItemId], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("slate size K must be at least 1".into()));
    }
    let mut seen = vec![false; catalog.len()];
    for &a in candidates {
        catalog.check_item(a)?;
        if std::mem::replace(&mut seen[a], true) {
            return Err(Error::DuplicateItem(a));
        }
    }
    if candidates.len() < k {
        return Err(Error::InsufficientCandidates {
            needed: k,
            available: candidates.len(),
        });
    }
    Ok(())
}

/// Adds, one at a time, the remaining candidate with the largest gain
/// `ηᵀΔ(a | A)` until `K` items are chosen. Ties go to the smallest item id.
/// Negative gains are accepted; the slate is always filled.
pub fn greedy_select(
    eta: &PreferenceVector,
    catalog: &ItemCatalog,
    candidates: &[ItemId],
    k: usize,
) -> Result<GreedyResult> {
    catalog.check_preferences(eta)?;
    validate_candidates(catalog, candidates, k)?;

    let m = catalog.diversity_dim();
    let base: Vec<f64> = candidates
        .iter()
        .map(|&a| dot(&eta.theta, catalog.relevance(a)))
        .collect();
    // Running Σ_{j∈A} h_i(a, j) per candidate, accumulated in selection order.
    let mut diversity = vec![vec![0.0; m]; candidates.len()];
    let mut taken = vec![false; candidates.len()];
    let mut slate = Slate::new(k);
    let mut gain_trace = Vec::with_capacity(k);

    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (idx, &a) in candidates.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            let gain = base[idx] + dot(&eta.beta, &diversity[idx]);
            let better = match best {
                None => true,
                Some((b, g)) => gain > g || (gain == g && a < candidates[b]),
            };
            if better {
                best = Some((idx, gain));
            }
        }
        let (idx, gain) = best.expect("at least K candidates");
        let chosen = candidates[idx];
        taken[idx] = true;
        slate.push(chosen)?;
        gain_trace.push(gain);
        for (j, &a) in candidates.iter().enumerate() {
            if !taken[j] {
                for (i, acc) in diversity[j].iter_mut().enumerate() {
                    *acc += catalog.distance(i, a, chosen);
                }
            }
        }
    }

    Ok(GreedyResult { slate, gain_trace })
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// The `K`-subset of `candidates` maximising `F(A | η)`, found by
/// enumerating subsets in lexicographic order of sorted ids (ties keep the
/// first). Subsets suffice because `F` does not depend on order.
pub fn exhaustive_optimum(
    eta: &PreferenceVector,
    catalog: &ItemCatalog,
    candidates: &[ItemId],
    k: usize,
    budget: u128,
) -> Result<(Vec<ItemId>, f64)> {
    catalog.check_preferences(eta)?;
    validate_candidates(catalog, candidates, k)?;
    let subsets = binomial(candidates.len(), k);
    if subsets > budget {
        return Err(Error::TooLargeInstance { subsets, budget });
    }

    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut current = vec![0; k];
    let mut best: Option<(Vec<ItemId>, f64)> = None;
    loop {
        for (c, &i) in current.iter_mut().zip(&idx) {
            *c = sorted[i];
        }
        let value = catalog.utility(&current, eta)?;
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((current.clone(), value));
        }
        // Advance to the next combination.
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == n - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        for j in pos..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(best.expect("at least one subset"))
}

/// `F(A_greedy | η) / F(A* | η)`.
pub fn approximation_ratio(
    eta: &PreferenceVector,
    catalog: &ItemCatalog,
    candidates: &[ItemId],
    k: usize,
) -> Result<f64> {
    let greedy = greedy_select(eta, catalog, candidates, k)?;
    let (_, optimum) = exhaustive_optimum(eta, catalog, candidates, k, DEFAULT_EXHAUSTIVE_BUDGET)?;
    if optimum <= 0.0 {
        return Err(Error::DegenerateInstance("optimal utility is not positive"));
    }
    Ok(catalog.utility(greedy.slate.items(), eta)? / optimum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::DistanceMetric;

    /// Items a=0, b=1, c=2 with R = (0.5, 0.4, 0.1), h(a,b)=0, h(a,c)=h(b,c)=1.
    fn three_items() -> ItemCatalog {
        let h = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        ItemCatalog::new(vec![vec![0.5], vec![0.4], vec![0.1]], vec![DistanceMetric::Table(h)]).unwrap()
    }

    fn unit() -> PreferenceVector {
        PreferenceVector::new(vec![1.0], vec![1.0])
    }

    #[test]
    fn hand_instance() {
        let cat = three_items();
        let r = greedy_select(&unit(), &cat, &[0, 1, 2], 2).unwrap();
        assert_eq!(r.slate.items(), &[0, 2]);
        assert_eq!(r.gain_trace, vec![0.5, 1.1]);
        // F(ab) = 0.9, F(ac) = 1.6, F(bc) = 1.5.
        let (set, value) = exhaustive_optimum(&unit(), &cat, &[2, 1, 0], 2, 100).unwrap();
        assert_eq!(set, vec![0, 2]);
        assert!((value - 1.6).abs() < 1e-12);
        assert!((approximation_ratio(&unit(), &cat, &[0, 1, 2], 2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn k1_picks_best_relevance() {
        let cat = three_items();
        let r = greedy_select(&unit(), &cat, &[1, 2, 0], 1).unwrap();
        assert_eq!(r.slate.items(), &[0]);
    }

    #[test]
    fn ties_break_to_smallest_id() {
        let cat = ItemCatalog::new(vec![vec![1.0]; 4], vec![DistanceMetric::Table(vec![0.0; 16])]).unwrap();
        let r = greedy_select(&unit(), &cat, &[3, 2, 1, 0], 3).unwrap();
        assert_eq!(r.slate.items(), &[0, 1, 2]);
    }

    #[test]
    fn errors() {
        let cat = three_items();
        assert!(matches!(
            greedy_select(&unit(), &cat, &[0, 1], 3),
            Err(Error::InsufficientCandidates { needed: 3, available: 2 })
        ));
        assert!(matches!(
            exhaustive_optimum(&unit(), &cat, &[0, 1, 2], 2, 2),
            Err(Error::TooLargeInstance { subsets: 3, budget: 2 })
        ));
        assert!(matches!(greedy_select(&unit(), &cat, &[0, 0, 1], 1), Err(Error::DuplicateItem(0))));
        let zero = PreferenceVector::new(vec![0.0], vec![0.0]);
        assert!(matches!(
            approximation_ratio(&zero, &cat, &[0, 1, 2], 2),
            Err(Error::DegenerateInstance(_))
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(20, 5), 15504);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(60, 30), 118264581564861424);
    }
}
