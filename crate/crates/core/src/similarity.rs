//! Kendall rank correlation between users and Top-K neighbor selection.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::{QoSMatrix, ServiceId, UserId};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub active: UserId,
    pub sims: Vec<(UserId, f64)>,
}

/// Positive-similarity neighbors of `active`, most similar first.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub active: UserId,
    pub members: Vec<(UserId, f64)>,
}

impl Neighborhood {
    pub fn empty(active: UserId) -> Self {
        Neighborhood {
            active,
            members: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Kendall tau-a over the services both users observed.
///
/// Pairs where either user's values tie count as neither concordant nor
/// discordant; the denominator stays `N(N-1)/2`. Fewer than two common
/// services gives 0.
pub fn krcc(m: &QoSMatrix, u: UserId, v: UserId) -> Result<f64> {
    if u == v {
        return Err(Error::domain(format!("self-similarity requested for {u}")));
    }
    let (ru, rv) = (m.row(u)?, m.row(v)?);

    let mut common: Vec<(f64, f64)> = Vec::with_capacity(ru.len().min(rv.len()));
    let (mut a, mut b) = (0, 0);
    while a < ru.len() && b < rv.len() {
        match ru[a].0.cmp(&rv[b].0) {
            Ordering::Less => a += 1,
            Ordering::Greater => b += 1,
            Ordering::Equal => {
                common.push((ru[a].1, rv[b].1));
                a += 1;
                b += 1;
            }
        }
    }
    Ok(tau_a(&common))
}

/// `(C - D) / (n(n-1)/2)` over paired observations; 0 when `n < 2`.
pub(crate) fn tau_a(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    if n < 2 {
        return 0.0;
    }
    let mut score: i64 = 0;
    for i in 0..n {
        let (xi, yi) = pairs[i];
        for &(xj, yj) in &pairs[i + 1..] {
            if xi == xj || yi == yj {
                continue;
            }
            score += if (xi > xj) == (yi > yj) { 1 } else { -1 };
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    score as f64 / total
}

pub fn similarity_row(m: &QoSMatrix, u: UserId) -> Result<SimilarityRow> {
    m.check_user(u)?;
    let sims = m
        .users()
        .filter(|&v| v != u)
        .map(|v| krcc(m, u, v).map(|s| (v, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityRow { active: u, sims })
}

/// The at-most-`k` users with the largest strictly positive similarity.
/// Equal similarities are ordered by smaller user id.
pub fn select_neighbors(row: &SimilarityRow, k: usize) -> Neighborhood {
    let mut members: Vec<(UserId, f64)> = row
        .sims
        .iter()
        .copied()
        .filter(|&(v, s)| s > 0.0 && v != row.active)
        .collect();
    members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    members.truncate(k);
    Neighborhood {
        active: row.active,
        members,
    }
}

/// Convenience: similarity row followed by Top-K selection.
pub fn neighborhood(m: &QoSMatrix, u: UserId, k: usize) -> Result<Neighborhood> {
    Ok(select_neighbors(&similarity_row(m, u)?, k))
}

/// Whether `v` observed both services.
pub(crate) fn observes_pair(m: &QoSMatrix, v: UserId, i: ServiceId, j: ServiceId) -> bool {
    m.get(v, i).is_some() && m.get(v, j).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_users(a: &[f64], b: &[f64]) -> QoSMatrix {
        QoSMatrix::from_dense(&[a.to_vec(), b.to_vec()]).unwrap()
    }

    #[test]
    fn identical_order_is_one() {
        let m = two_users(&[0.1, 0.2, 0.3], &[1.0, 5.0, 9.0]);
        assert_eq!(krcc(&m, UserId(0), UserId(1)).unwrap(), 1.0);
    }

    #[test]
    fn reversed_order_is_minus_one() {
        let m = two_users(&[0.1, 0.2, 0.3], &[0.3, 0.2, 0.1]);
        assert_eq!(krcc(&m, UserId(0), UserId(1)).unwrap(), -1.0);
    }

    #[test]
    fn four_service_example() {
        // pairs: (a,b)+ (a,c)+ (a,d)+ (b,c)+ (b,d)- (c,d)+ -> (5-1)/6
        let m = two_users(&[0.2, 0.5, 0.9, 0.4], &[0.3, 0.4, 0.8, 0.6]);
        let s = krcc(&m, UserId(0), UserId(1)).unwrap();
        assert!((s - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_common_service_is_zero() {
        let m = QoSMatrix::from_entries(
            2,
            3,
            [
                (UserId(0), ServiceId(0), 1.0),
                (UserId(0), ServiceId(1), 2.0),
                (UserId(1), ServiceId(1), 3.0),
                (UserId(1), ServiceId(2), 4.0),
            ],
        )
        .unwrap();
        assert_eq!(krcc(&m, UserId(0), UserId(1)).unwrap(), 0.0);
    }

    #[test]
    fn ties_count_as_neither() {
        let m = two_users(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        // (a,b) tie, (a,c)+, (b,c)+ -> 2/3
        let s = krcc(&m, UserId(0), UserId(1)).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn self_similarity_is_an_error() {
        let m = two_users(&[1.0], &[1.0]);
        assert!(krcc(&m, UserId(0), UserId(0)).is_err());
    }

    #[test]
    fn row_shape_and_consistency() {
        let m = QoSMatrix::from_dense(&[
            vec![1.0, 2.0, 3.0],
            vec![3.0, 2.0, 1.0],
            vec![1.0, 3.0, 2.0],
        ])
        .unwrap();
        let row = similarity_row(&m, UserId(0)).unwrap();
        assert_eq!(row.sims.len(), 2);
        for &(v, s) in &row.sims {
            assert_eq!(s, krcc(&m, UserId(0), v).unwrap());
        }
    }

    #[test]
    fn isolated_user_has_zero_row() {
        let m = QoSMatrix::from_entries(
            3,
            4,
            [
                (UserId(0), ServiceId(0), 1.0),
                (UserId(1), ServiceId(1), 1.0),
                (UserId(1), ServiceId(2), 2.0),
                (UserId(2), ServiceId(2), 1.0),
                (UserId(2), ServiceId(3), 2.0),
            ],
        )
        .unwrap();
        let row = similarity_row(&m, UserId(0)).unwrap();
        assert!(row.sims.iter().all(|&(_, s)| s == 0.0));
        assert!(select_neighbors(&row, 5).is_empty());
    }

    #[test]
    fn selects_positive_top_k() {
        let row = SimilarityRow {
            active: UserId(0),
            sims: vec![
                (UserId(1), 0.9),
                (UserId(2), 0.5),
                (UserId(3), -0.2),
                (UserId(4), 0.7),
            ],
        };
        let n = select_neighbors(&row, 2);
        assert_eq!(n.members, vec![(UserId(1), 0.9), (UserId(4), 0.7)]);
        assert!(select_neighbors(&row, 0).is_empty());

        let negative = SimilarityRow {
            active: UserId(0),
            sims: vec![(UserId(1), -0.1), (UserId(2), 0.0)],
        };
        assert!(select_neighbors(&negative, 3).is_empty());
    }

    #[test]
    fn equal_similarity_prefers_smaller_id() {
        let row = SimilarityRow {
            active: UserId(0),
            sims: vec![(UserId(5), 0.4), (UserId(2), 0.4), (UserId(3), 0.4)],
        };
        let n = select_neighbors(&row, 2);
        assert_eq!(n.members, vec![(UserId(2), 0.4), (UserId(3), 0.4)]);
    }
}
