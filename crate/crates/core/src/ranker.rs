//! Greedy ranking over preference sums.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{QoSMatrix, ServiceId, UserId};
use crate::preference::PreferenceTable;
use crate::rng;
use crate::similarity::{self, Neighborhood, DEFAULT_K};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub active: UserId,
    /// Best first.
    pub order: Vec<ServiceId>,
}

impl Ranking {
    pub fn top(&self) -> Option<ServiceId> {
        self.order.first().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RankerKind {
    #[serde(rename = "cloudrank1")]
    CloudRank1,
    #[serde(rename = "cloudrank2")]
    CloudRank2,
    #[serde(rename = "random", alias = "random-baseline")]
    RandomBaseline,
}

impl RankerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RankerKind::CloudRank1 => "cloudrank1",
            RankerKind::CloudRank2 => "cloudrank2",
            RankerKind::RandomBaseline => "random",
        }
    }

    /// Whether the greedy pass weights preferences by confidence.
    pub fn weighted(self) -> bool {
        matches!(self, RankerKind::CloudRank2)
    }
}

impl fmt::Display for RankerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cloudrank1" => Ok(RankerKind::CloudRank1),
            "cloudrank2" => Ok(RankerKind::CloudRank2),
            "random" | "random-baseline" => Ok(RankerKind::RandomBaseline),
            other => Err(Error::Config(format!("unknown ranker kind `{other}`"))),
        }
    }
}

/// Preference sums within this fraction of the table's largest initial
/// |sum| are treated as equal, so sums that tie in exact arithmetic do not
/// split on rounding noise.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Greedy permutation maximizing the remaining preference sum at each step.
///
/// Preference sums start as full row sums and are updated by subtracting the
/// picked service's column, so the whole pass is O(n^2). Sums within
/// [`TIE_TOLERANCE`] of the maximum tie; ties go to the smaller service id,
/// or to a seeded random priority when `tie_break_seed` is set.
pub fn greedy_rank(
    table: &PreferenceTable,
    weighted: bool,
    tie_break_seed: Option<u64>,
) -> Ranking {
    let n = table.len();
    let priority: Vec<usize> = match tie_break_seed {
        None => (0..n).collect(),
        Some(seed) => {
            let mut p: Vec<usize> = (0..n).collect();
            rng::shuffle(&mut rng::seeded(seed), &mut p);
            p
        }
    };

    let mut pi: Vec<f64> = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&b| b != a)
                .map(|b| table.term(a, b, weighted))
                .sum()
        })
        .collect();
    let scale = pi.iter().fold(0.0f64, |acc, p| acc.max(p.abs()));
    let tol = TIE_TOLERANCE * if scale > 0.0 { scale } else { 1.0 };

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    while !remaining.is_empty() {
        let max = remaining
            .iter()
            .map(|&a| pi[a])
            .fold(f64::NEG_INFINITY, f64::max);
        let (pos, &best) = remaining
            .iter()
            .enumerate()
            .filter(|(_, &a)| pi[a] >= max - tol)
            .min_by_key(|(_, &a)| priority[a])
            .expect("non-empty");
        remaining.swap_remove(pos);
        order.push(table.candidates()[best]);
        for &a in &remaining {
            pi[a] -= table.term(a, best, weighted);
        }
    }

    Ranking {
        active: table.active(),
        order,
    }
}

/// Reorders the services `u` observed, within the positions they occupy,
/// by `u`'s observed QoS (best first, ties by smaller id).
pub fn correct_observed_order(r: &Ranking, m: &QoSMatrix, u: UserId) -> Result<Ranking> {
    m.check_user(u)?;
    let slots: Vec<usize> = r
        .order
        .iter()
        .enumerate()
        .filter(|(_, &s)| m.get(u, s).is_some())
        .map(|(k, _)| k)
        .collect();
    let mut observed: Vec<(ServiceId, f64)> = slots
        .iter()
        .map(|&k| (r.order[k], m.get(u, r.order[k]).unwrap_or_default()))
        .collect();
    observed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut order = r.order.clone();
    for (&slot, &(s, _)) in slots.iter().zip(&observed) {
        order[slot] = s;
    }
    Ok(Ranking {
        active: r.active,
        order,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOptions {
    pub k: usize,
    /// Apply [`correct_observed_order`] after the greedy pass.
    pub correct_observed: bool,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            k: DEFAULT_K,
            correct_observed: true,
        }
    }
}

/// Full pipeline: neighbors, preference table, greedy pass, correction.
pub fn rank(
    kind: RankerKind,
    m: &QoSMatrix,
    u: UserId,
    candidates: &[ServiceId],
    opts: &RankOptions,
    seed: u64,
) -> Result<Ranking> {
    m.check_user(u)?;
    let nbrs = match kind {
        RankerKind::RandomBaseline => Neighborhood::empty(u),
        _ => similarity::neighborhood(m, u, opts.k)?,
    };
    rank_with_neighbors(kind, m, u, &nbrs, candidates, opts, seed)
}

/// As [`rank`], reusing a precomputed neighborhood.
pub fn rank_with_neighbors(
    kind: RankerKind,
    m: &QoSMatrix,
    u: UserId,
    nbrs: &Neighborhood,
    candidates: &[ServiceId],
    opts: &RankOptions,
    seed: u64,
) -> Result<Ranking> {
    if candidates.is_empty() {
        return Err(Error::domain("empty candidate set"));
    }
    for &s in candidates {
        m.check_service(s)?;
    }
    match kind {
        RankerKind::RandomBaseline => {
            let mut order = candidates.to_vec();
            order.sort();
            order.dedup();
            rng::shuffle(&mut rng::seeded(seed), &mut order);
            Ok(Ranking { active: u, order })
        }
        RankerKind::CloudRank1 | RankerKind::CloudRank2 => {
            let table = PreferenceTable::build(m, u, nbrs, candidates)?;
            let ranking = greedy_rank(&table, kind.weighted(), None);
            if opts.correct_observed {
                correct_observed_order(&ranking, m, u)
            } else {
                Ok(ranking)
            }
        }
    }
}
