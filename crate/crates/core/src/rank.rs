//! Incrementally maintained popularity ranking with rank-power sampling.
//!
//! Items are kept in an array sorted by descending count. Items sharing a
//! count form a contiguous block (a *group*), so every rank is a function of
//! the block boundaries alone:
//!
//! * `MaxRank`: rank = number of items with count `>=` the group's count,
//!   i.e. the block's end offset.
//! * `MinRank`: rank = 1 + number of items with a strictly larger count,
//!   i.e. the block's start offset plus one (standard competition ranking).
//!
//! Incrementing an item with count `c` swaps it to the front of its block and
//! moves the block boundary by one, so only two groups change. Sampling picks
//! a group by its total weight `size * rank^-alpha`, then a member uniformly.

use std::cmp::Reverse;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// The cached total weight is rebuilt from the groups after this many increments.
const REFRESH_PERIOD: u32 = 1 << 16;

/// How tied items are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRankMode {
    /// Rank is the number of items selected at least as many times (counts `[5,5,3]` give `[2,2,3]`).
    #[default]
    MaxRank,
    /// Competition ranking: `k` items tied at rank `r` push the next rank to `r + k` (`[1,1,3]`).
    MinRank,
}

impl TieRankMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TieRankMode::MaxRank => "max_rank",
            TieRankMode::MinRank => "min_rank",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("cannot rank an empty set of items")]
    Empty,
    #[error("item {item} is out of range for {n_items} items")]
    ItemOutOfRange { item: usize, n_items: usize },
    #[error("rank exponent must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone)]
struct Group<S> {
    count: u64,
    start: usize,
    end: usize,
    weight: S,
}

impl<S> Group<S> {
    #[inline]
    fn len(&self) -> usize {
        self.end - self.start
    }
}

/// Popularity counts together with their ranking and rank-power weights.
#[derive(Debug, Clone)]
pub struct RankIndex<S> {
    counts: Vec<u64>,
    /// Items sorted by descending count.
    order: Vec<usize>,
    /// Inverse of `order`.
    position: Vec<usize>,
    /// Descending by count; blocks of `order`.
    groups: Vec<Group<S>>,
    /// `rank_weight[r] = r^-alpha` for `r` in `1..=n`.
    rank_weight: Vec<S>,
    alpha: S,
    mode: TieRankMode,
    total_weight: S,
    since_refresh: u32,
}

impl<S: Scalar> RankIndex<S> {
    pub fn build(counts: &[u64], alpha: S, mode: TieRankMode) -> Result<Self, RankError> {
        if counts.is_empty() {
            return Err(RankError::Empty);
        }
        if !(alpha.is_finite() && alpha >= S::zero()) {
            return Err(RankError::InvalidAlpha(alpha.to_f64_lossy()));
        }
        let n = counts.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| Reverse(counts[i]));
        let mut position = vec![0; n];
        for (pos, &item) in order.iter().enumerate() {
            position[item] = pos;
        }

        let mut groups: Vec<Group<S>> = Vec::new();
        for (pos, &item) in order.iter().enumerate() {
            match groups.last_mut() {
                Some(g) if g.count == counts[item] => g.end = pos + 1,
                _ => groups.push(Group {
                    count: counts[item],
                    start: pos,
                    end: pos + 1,
                    weight: S::zero(),
                }),
            }
        }

        let rank_weight = std::iter::once(S::zero())
            .chain((1..=n).map(|r| S::lit(r as f64).powf(-alpha)))
            .collect();

        let mut index = RankIndex {
            counts: counts.to_vec(),
            order,
            position,
            groups,
            rank_weight,
            alpha,
            mode,
            total_weight: S::zero(),
            since_refresh: 0,
        };
        for g in 0..index.groups.len() {
            index.groups[g].weight = index.group_weight(&index.groups[g]);
        }
        index.refresh_total_weight();
        Ok(index)
    }

    #[inline]
    fn group_rank(&self, group: &Group<S>) -> usize {
        match self.mode {
            TieRankMode::MaxRank => group.end,
            TieRankMode::MinRank => group.start + 1,
        }
    }

    #[inline]
    fn group_weight(&self, group: &Group<S>) -> S {
        S::lit(group.len() as f64) * self.rank_weight[self.group_rank(group)]
    }

    #[inline]
    fn group_of_count(&self, count: u64) -> usize {
        self.groups
            .binary_search_by(|g| count.cmp(&g.count))
            .expect("rank index out of sync with its counts")
    }

    fn refresh_group_weight(&mut self, g: usize) {
        let weight = self.group_weight(&self.groups[g]);
        self.total_weight = self.total_weight - self.groups[g].weight + weight;
        self.groups[g].weight = weight;
    }

    fn refresh_total_weight(&mut self) {
        self.total_weight = self.groups.iter().map(|g| g.weight).sum();
        self.since_refresh = 0;
    }

    /// Adds one selection to `item` and updates ranks and weights.
    pub fn increment(&mut self, item: usize) -> Result<(), RankError> {
        let n_items = self.counts.len();
        if item >= n_items {
            return Err(RankError::ItemOutOfRange { item, n_items });
        }
        let count = self.counts[item];
        let g = self.group_of_count(count);
        let start = self.groups[g].start;

        let pos = self.position[item];
        let front = self.order[start];
        self.order.swap(pos, start);
        self.position[front] = pos;
        self.position[item] = start;
        self.counts[item] = count + 1;
        self.groups[g].start += 1;

        let (upper, lower) = if g > 0 && self.groups[g - 1].count == count + 1 {
            self.groups[g - 1].end += 1;
            (g - 1, g)
        } else {
            self.groups.insert(
                g,
                Group {
                    count: count + 1,
                    start,
                    end: start + 1,
                    weight: S::zero(),
                },
            );
            (g, g + 1)
        };

        self.refresh_group_weight(upper);
        if self.groups[lower].len() == 0 {
            let removed = self.groups.remove(lower);
            self.total_weight = self.total_weight - removed.weight;
        } else {
            self.refresh_group_weight(lower);
        }

        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_PERIOD {
            self.refresh_total_weight();
        }
        Ok(())
    }

    /// Draws an item with probability `r_i^-alpha / sum_j r_j^-alpha`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.alpha == S::zero() {
            return self.order[rng.random_range(0..self.order.len())];
        }
        let mut u = S::sample_unit(rng) * self.total_weight;
        for group in &self.groups {
            if u < group.weight {
                // The leftover mass inside the group is uniform over its members.
                let w = self.rank_weight[self.group_rank(group)];
                let offset = (u / w).to_usize().unwrap_or(0).min(group.len() - 1);
                return self.order[group.start + offset];
            }
            u = u - group.weight;
        }
        // Only reachable when rounding leaves the cached total above the group sum.
        let last = self.groups.last().expect("non-empty index");
        self.order[last.end - 1]
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn mode(&self) -> TieRankMode {
        self.mode
    }

    /// Number of distinct count values.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Cached `sum_i r_i^-alpha`.
    pub fn total_weight(&self) -> S {
        self.total_weight
    }

    pub fn rank(&self, item: usize) -> usize {
        let g = self.group_of_count(self.counts[item]);
        self.group_rank(&self.groups[g])
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.len()];
        for group in &self.groups {
            let rank = self.group_rank(group);
            for &item in &self.order[group.start..group.end] {
                ranks[item] = rank;
            }
        }
        ranks
    }

    /// Selection probability of every item under the rank-power law.
    pub fn probabilities(&self) -> Vec<S> {
        let mut probs = vec![S::zero(); self.len()];
        for group in &self.groups {
            let p = self.rank_weight[self.group_rank(group)] / self.total_weight;
            for &item in &self.order[group.start..group.end] {
                probs[item] = p;
            }
        }
        probs
    }
}

/// Ranks computed from scratch by sorting; the reference for [`RankIndex`].
pub fn naive_ranks(counts: &[u64], mode: TieRankMode) -> Result<Vec<usize>, RankError> {
    if counts.is_empty() {
        return Err(RankError::Empty);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    Ok(counts
        .iter()
        .map(|&c| match mode {
            TieRankMode::MaxRank => sorted.partition_point(|&x| x >= c),
            TieRankMode::MinRank => sorted.partition_point(|&x| x > c) + 1,
        })
        .collect())
}
