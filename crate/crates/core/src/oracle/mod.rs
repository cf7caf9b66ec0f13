//! Ground-truth engines for validating the analytical modules: exact
//! inclusion/exclusion, exhaustive enumeration over signature assignments,
//! a Monte Carlo sampler of the uniform-allocation law, and an integrated
//! continuous-time Markov simulation.

mod ctmc;
mod mc;

pub use ctmc::{ctmc_simulate, replication_stats, CtmcMetrics};
pub use mc::{mc_avail_dist, McAvailDist};

use crate::error::{Error, Result};
use crate::numeric::{ln_binomial, CompensatedSum};

/// Per-stage population counts: entry `h` is the number of peers owning
/// exactly `h` blocks, for h = 0..=B.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageVector {
    counts: Vec<u32>,
}

impl StageVector {
    /// Build from counts for stages 0..=B; the block count is the length
    /// minus one.
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidParameter(
                "stage vector needs entries for stages 0..=B with B >= 1".into(),
            ));
        }
        Ok(Self { counts })
    }

    /// Counts with only a few occupied stages, e.g. `[(1, 2)]` for two
    /// peers owning one block each.
    pub fn from_pairs(blocks: u32, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut counts = vec![0; blocks as usize + 1];
        for &(stage, count) in pairs {
            if stage > blocks {
                return Err(Error::InvalidParameter(format!(
                    "stage {stage} exceeds block count {blocks}"
                )));
            }
            counts[stage as usize] += count;
        }
        Self::new(counts)
    }

    pub fn blocks(&self) -> u32 {
        self.counts.len() as u32 - 1
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total_users(&self) -> u32 {
        self.counts.iter().sum()
    }
}

const EXACT_MAX_BLOCKS: u32 = 30;

/// Exact probability that all blocks are available for a fixed stage
/// occupancy, by inclusion/exclusion over the excluded block set:
///
/// ```text
/// P(V = B | n) = |Omega|^{-1} sum_i (-1)^i C(B,i) prod_j C(B-i, j)^{n_j}
/// ```
///
/// with `|Omega| = prod_h C(B,h)^{n_h}` the number of equally likely
/// signature assignments. Any seed (stage-B occupant) makes the value one.
pub fn exact_all_available(stage: &StageVector) -> Result<f64> {
    let b = stage.blocks();
    if b > EXACT_MAX_BLOCKS {
        return Err(Error::Capability(format!(
            "inclusion/exclusion is limited to {EXACT_MAX_BLOCKS} blocks, requested {b}"
        )));
    }
    if stage.counts[b as usize] > 0 {
        return Ok(1.0);
    }
    let ln_omega: f64 = stage
        .counts
        .iter()
        .enumerate()
        .map(|(h, &n)| n as f64 * ln_binomial(b as u64, h as u64))
        .sum();
    let mut sum = CompensatedSum::new();
    for i in 0..b {
        let mut ln_term = ln_binomial(b as u64, i as u64) - ln_omega;
        for (j, &n) in stage.counts.iter().enumerate().take(b as usize).skip(1) {
            if n > 0 {
                ln_term += n as f64 * ln_binomial((b - i) as u64, j as u64);
            }
        }
        let term = ln_term.exp();
        sum.add(if i % 2 == 0 { term } else { -term });
    }
    Ok(sum.value().clamp(0.0, 1.0))
}

const ENUMERATION_CAP: f64 = 1e7;

/// Exact conditional distribution of the number of available blocks for a
/// fixed stage occupancy, by exhausting every signature assignment. The
/// state space `|Omega|` is capped at 10^7 assignments.
pub fn enumerate_cond_dist(stage: &StageVector) -> Result<Vec<f64>> {
    let b = stage.blocks();
    if b > 63 {
        return Err(Error::Capability(
            "enumeration uses 64-bit masks; block count must stay below 64".into(),
        ));
    }
    let mut omega = 1.0f64;
    for (h, &n) in stage.counts.iter().enumerate() {
        omega *= ln_binomial(b as u64, h as u64).exp().round().powi(n as i32);
        if omega > ENUMERATION_CAP {
            return Err(Error::Capability(format!(
                "state space exceeds {ENUMERATION_CAP:e} assignments"
            )));
        }
    }

    // Candidate masks per occupied stage.
    let mut per_stage_masks: Vec<Vec<u64>> = Vec::with_capacity(b as usize + 1);
    for h in 0..=b {
        if stage.counts[h as usize] > 0 {
            per_stage_masks.push(subsets_of_size(b, h));
        } else {
            per_stage_masks.push(Vec::new());
        }
    }
    let mut user_stages = Vec::new();
    for (h, &n) in stage.counts.iter().enumerate() {
        user_stages.extend(std::iter::repeat_n(h, n as usize));
    }

    let mut counts = vec![0u64; b as usize + 1];
    fn recurse(
        user_stages: &[usize],
        per_stage_masks: &[Vec<u64>],
        union: u64,
        counts: &mut [u64],
    ) {
        match user_stages {
            [] => counts[union.count_ones() as usize] += 1,
            [first, rest @ ..] => {
                for mask in &per_stage_masks[*first] {
                    recurse(rest, per_stage_masks, union | mask, counts);
                }
            }
        }
    }
    recurse(&user_stages, &per_stage_masks, 0, &mut counts);

    let total: u64 = counts.iter().sum();
    Ok(counts.iter().map(|c| *c as f64 / total as f64).collect())
}

fn subsets_of_size(b: u32, h: u32) -> Vec<u64> {
    if h == 0 {
        return vec![0];
    }
    let mut out = Vec::new();
    let limit = 1u64 << b;
    // Gosper's hack walks h-popcount masks in increasing order.
    let mut mask = (1u64 << h) - 1;
    while mask < limit {
        out.push(mask);
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avail::cond_dist_for_stages;
    use crate::transition::transition_prob;

    #[test]
    fn two_users_one_block_each() {
        // Four equally likely pairs over two blocks; two of them cover both.
        let stage = StageVector::from_pairs(2, &[(1, 2)]).unwrap();
        assert!((exact_all_available(&stage).unwrap() - 0.5).abs() < 1e-15);
        let dist = enumerate_cond_dist(&stage).unwrap();
        assert_eq!(dist[0], 0.0);
        assert!((dist[1] - 0.5).abs() < 1e-15);
        assert!((dist[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_swarm_has_nothing() {
        let stage = StageVector::new(vec![0, 0, 0]).unwrap();
        assert_eq!(exact_all_available(&stage).unwrap(), 0.0);
        let dist = enumerate_cond_dist(&stage).unwrap();
        assert_eq!(dist[0], 1.0);
    }

    #[test]
    fn single_partial_user_cannot_cover() {
        let stage = StageVector::from_pairs(2, &[(1, 1)]).unwrap();
        assert_eq!(exact_all_available(&stage).unwrap(), 0.0);
        let stage = StageVector::from_pairs(3, &[(1, 1)]).unwrap();
        let dist = enumerate_cond_dist(&stage).unwrap();
        assert_eq!(dist[1], 1.0);
    }

    #[test]
    fn seeds_force_full_coverage() {
        let stage = StageVector::from_pairs(3, &[(3, 1), (1, 2)]).unwrap();
        assert_eq!(exact_all_available(&stage).unwrap(), 1.0);
        let dist = enumerate_cond_dist(&stage).unwrap();
        assert_eq!(dist[3], 1.0);
    }

    #[test]
    fn enumeration_matches_transition_mixing() {
        // One user with one block, one with two: the conditional law is the
        // kernel row from availability one.
        let stage = StageVector::from_pairs(3, &[(1, 1), (2, 1)]).unwrap();
        let dist = enumerate_cond_dist(&stage).unwrap();
        for v in 0..=3u32 {
            let expected = transition_prob(3, 2, 1, v).unwrap();
            assert!((dist[v as usize] - expected).abs() < 1e-12, "v={v}");
        }
        // And the general fold agrees too.
        let folded = cond_dist_for_stages(3, stage.counts()).unwrap();
        for (d, f) in dist.iter().zip(&folded) {
            assert!((d - f).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_agrees_with_inclusion_exclusion() {
        for (b, pairs) in [
            (2u32, vec![(1u32, 2u32)]),
            (3, vec![(1, 1), (2, 2)]),
            (4, vec![(2, 2), (3, 1)]),
            (4, vec![(1, 4)]),
        ] {
            let stage = StageVector::from_pairs(b, &pairs).unwrap();
            let dist = enumerate_cond_dist(&stage).unwrap();
            let exact = exact_all_available(&stage).unwrap();
            assert!(
                (dist[b as usize] - exact).abs() < 1e-12,
                "b={b} pairs={pairs:?}"
            );
        }
    }

    #[test]
    fn enumeration_rows_are_probability_vectors() {
        let stage = StageVector::from_pairs(4, &[(1, 2), (2, 1), (3, 1)]).unwrap();
        let dist = enumerate_cond_dist(&stage).unwrap();
        let sum: f64 = dist.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(dist.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn capability_guards() {
        let stage = StageVector::from_pairs(40, &[(1, 1)]).unwrap();
        assert!(matches!(
            exact_all_available(&stage),
            Err(Error::Capability(_))
        ));
        // 20 users in stage 10 of a 20-block file explodes the state space.
        let stage = StageVector::from_pairs(20, &[(10, 20)]).unwrap();
        assert!(matches!(
            enumerate_cond_dist(&stage),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn subsets_enumerator_counts() {
        assert_eq!(subsets_of_size(5, 2).len(), 10);
        assert_eq!(subsets_of_size(5, 0), vec![0]);
        assert_eq!(subsets_of_size(3, 3), vec![0b111]);
    }
}
