//! Pairwise preference values, their confidences, and preference sums.
//!
//! A preference `psi(i, j)` is positive when service `i` is expected to
//! outperform `j` for the active user. It is explicit when the active user
//! observed both services, implicit when it is inferred from neighbors who
//! observed both, and unknown when nobody in the neighborhood did.

use crate::error::{Error, Result};
use crate::matrix::{QoSMatrix, ServiceId, UserId};
use crate::similarity::{observes_pair, Neighborhood};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Explicit,
    Implicit,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceValue {
    pub psi: f64,
    pub confidence: f64,
    pub provenance: Provenance,
}

impl PreferenceValue {
    pub const UNKNOWN: PreferenceValue = PreferenceValue {
        psi: 0.0,
        confidence: 0.0,
        provenance: Provenance::Unknown,
    };

    pub fn explicit(psi: f64) -> Self {
        PreferenceValue {
            psi,
            confidence: 1.0,
            provenance: Provenance::Explicit,
        }
    }

    /// The same preference seen from the other service.
    pub fn reversed(self) -> Self {
        PreferenceValue {
            psi: -self.psi,
            ..self
        }
    }
}

/// Neighbors that observed both services of `pair`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairNeighborhood {
    pub pair: (ServiceId, ServiceId),
    pub members: Vec<(UserId, f64)>,
}

impl PairNeighborhood {
    pub fn new(m: &QoSMatrix, nbrs: &Neighborhood, i: ServiceId, j: ServiceId) -> Self {
        let members = nbrs
            .members
            .iter()
            .copied()
            .filter(|&(v, _)| observes_pair(m, v, i, j))
            .collect();
        PairNeighborhood {
            pair: (i, j),
            members,
        }
    }

    /// Confidence `sum_v w_v * sim_v`, which equals `sum sim^2 / sum sim`.
    pub fn confidence(&self) -> Result<f64> {
        Ok(pair_weights(self)?
            .iter()
            .zip(&self.members)
            .map(|(&(_, w), &(_, s))| w * s)
            .sum())
    }
}

/// Similarity-proportional weights normalized over the pair neighborhood.
pub fn pair_weights(pair_nbrs: &PairNeighborhood) -> Result<Vec<(UserId, f64)>> {
    if pair_nbrs.members.is_empty() {
        return Err(Error::domain(format!(
            "no neighbor observed both {} and {}",
            pair_nbrs.pair.0, pair_nbrs.pair.1
        )));
    }
    let total: f64 = pair_nbrs.members.iter().map(|&(_, s)| s).sum();
    Ok(pair_nbrs
        .members
        .iter()
        .map(|&(v, s)| (v, s / total))
        .collect())
}

/// Preference of `i` over `j` for user `u`.
///
/// Hybrid pairs, where `u` observed only one of the two services, are
/// treated as implicit.
pub fn preference_value(
    m: &QoSMatrix,
    u: UserId,
    nbrs: &Neighborhood,
    i: ServiceId,
    j: ServiceId,
) -> Result<PreferenceValue> {
    if i == j {
        return Err(Error::domain(format!("preference of {i} over itself")));
    }
    m.check_user(u)?;
    m.check_service(i)?;
    m.check_service(j)?;

    if let (Some(qi), Some(qj)) = (m.get(u, i), m.get(u, j)) {
        return Ok(PreferenceValue::explicit(qi - qj));
    }

    let pair = PairNeighborhood::new(m, nbrs, i, j);
    if pair.members.is_empty() {
        return Ok(PreferenceValue::UNKNOWN);
    }
    let weights = pair_weights(&pair)?;
    let mut psi = 0.0;
    let mut confidence = 0.0;
    for (&(v, w), &(_, sim)) in weights.iter().zip(&pair.members) {
        // Members were filtered on observing both services.
        let (qi, qj) = (m.get(v, i).unwrap(), m.get(v, j).unwrap());
        psi += w * (qi - qj);
        confidence += w * sim;
    }
    Ok(PreferenceValue {
        psi,
        confidence,
        provenance: Provenance::Implicit,
    })
}

/// Preference values for every ordered pair of candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTable {
    active: UserId,
    candidates: Vec<ServiceId>,
    values: Vec<PreferenceValue>,
}

impl PreferenceTable {
    /// Builds the table for `candidates` (deduplicated and sorted).
    pub fn build(
        m: &QoSMatrix,
        u: UserId,
        nbrs: &Neighborhood,
        candidates: &[ServiceId],
    ) -> Result<Self> {
        let mut cands = candidates.to_vec();
        cands.sort();
        cands.dedup();
        let n = cands.len();
        let mut values = vec![PreferenceValue::UNKNOWN; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let p = preference_value(m, u, nbrs, cands[a], cands[b])?;
                values[a * n + b] = p;
                values[b * n + a] = p.reversed();
            }
        }
        Ok(PreferenceTable {
            active: u,
            candidates: cands,
            values,
        })
    }

    /// Assembles a table from an explicit value function over candidate
    /// indices `a < b`; `(b, a)` is filled by reversal.
    pub fn from_fn<F>(active: UserId, candidates: Vec<ServiceId>, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> PreferenceValue,
    {
        let mut sorted = candidates.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != candidates {
            return Err(Error::domain("candidates must be strictly ascending"));
        }
        let n = candidates.len();
        let mut values = vec![PreferenceValue::UNKNOWN; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let p = f(a, b);
                values[a * n + b] = p;
                values[b * n + a] = p.reversed();
            }
        }
        Ok(PreferenceTable {
            active,
            candidates,
            values,
        })
    }

    pub fn active(&self) -> UserId {
        self.active
    }

    pub fn candidates(&self) -> &[ServiceId] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn index_of(&self, s: ServiceId) -> Option<usize> {
        self.candidates.binary_search(&s).ok()
    }

    /// Value for candidate indices `(a, b)`; the diagonal is unknown.
    #[inline]
    pub fn at(&self, a: usize, b: usize) -> PreferenceValue {
        self.values[a * self.candidates.len() + b]
    }

    pub fn get(&self, i: ServiceId, j: ServiceId) -> Option<PreferenceValue> {
        Some(self.at(self.index_of(i)?, self.index_of(j)?))
    }

    /// Contribution of pair `(a, b)` to `a`'s preference sum.
    #[inline]
    pub(crate) fn term(&self, a: usize, b: usize, weighted: bool) -> f64 {
        let p = self.at(a, b);
        if weighted {
            p.confidence * p.psi
        } else {
            p.psi
        }
    }
}

/// `sum_{j in remaining, j != i} psi(i, j)`, or the confidence-weighted
/// sum `C(i, j) * psi(i, j)` when `weighted`.
pub fn preference_sum_pi(
    table: &PreferenceTable,
    i: ServiceId,
    remaining: &[ServiceId],
    weighted: bool,
) -> Result<f64> {
    if !remaining.contains(&i) {
        return Err(Error::domain(format!("{i} is not among the remaining services")));
    }
    let a = table.index_of(i).ok_or(Error::UnknownService(i))?;
    remaining
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| {
            table
                .index_of(j)
                .map(|b| table.term(a, b, weighted))
                .ok_or(Error::UnknownService(j))
        })
        .sum()
}
