//! Test-only oracles and generators. Nothing here calls the code paths it
//! is used to check.

#![allow(dead_code)]

use qosrank::preference::PreferenceTable;
use qosrank::rng;
use qosrank::{QoSMatrix, ServiceId, UserId};

/// Random sparse matrix: up to `max_users` × `max_services`, each cell
/// observed with probability `density`. Half the matrices use values
/// rounded to one decimal so ties occur.
pub fn random_matrix(
    seed: u64,
    max_users: usize,
    max_services: usize,
    density: (f64, f64),
) -> QoSMatrix {
    let mut r = rng::seeded(seed);
    let users = 2 + rng::below(&mut r, max_users - 1);
    let services = 2 + rng::below(&mut r, max_services - 1);
    let d = rng::uniform(&mut r, density.0, density.1);
    let coarse = rng::below(&mut r, 2) == 0;
    let mut entries = Vec::new();
    for u in 0..users {
        for s in 0..services {
            if rng::unit(&mut r) < d {
                let mut q = rng::unit(&mut r);
                if coarse {
                    q = (q * 10.0).round() / 10.0;
                }
                entries.push((UserId(u), ServiceId(s), q));
            }
        }
    }
    QoSMatrix::from_entries(users, services, entries).unwrap()
}

/// Kendall tau-a by enumerating every service pair of the whole matrix and
/// keeping those both users observed.
pub fn krcc_oracle(m: &QoSMatrix, u: UserId, v: UserId) -> f64 {
    let mut common = 0usize;
    for s in m.services() {
        if m.get(u, s).is_some() && m.get(v, s).is_some() {
            common += 1;
        }
    }
    if common < 2 {
        return 0.0;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..m.num_services() {
        for j in i + 1..m.num_services() {
            let (i, j) = (ServiceId(i), ServiceId(j));
            if let (Some(ui), Some(uj), Some(vi), Some(vj)) =
                (m.get(u, i), m.get(u, j), m.get(v, i), m.get(v, j))
            {
                let prod = (ui - uj) * (vi - vj);
                if prod > 0.0 {
                    concordant += 1;
                } else if prod < 0.0 {
                    discordant += 1;
                }
            }
        }
    }
    let total = (common * (common - 1) / 2) as f64;
    (concordant - discordant) as f64 / total
}

/// Greedy ranking recomputing every preference sum from scratch each round.
/// Sums within `tie_tolerance` (relative to the largest initial |sum|) of the
/// round's maximum tie, and ties go to the smallest service id.
pub fn greedy_recompute(table: &PreferenceTable, weighted: bool, tie_tolerance: f64) -> Vec<ServiceId> {
    let n = table.len();
    let term = |a: usize, b: usize| {
        let p = table.at(a, b);
        if weighted {
            p.confidence * p.psi
        } else {
            p.psi
        }
    };
    let sum_over = |a: usize, set: &[usize]| -> f64 {
        set.iter().filter(|&&b| b != a).map(|&b| term(a, b)).sum()
    };
    let all: Vec<usize> = (0..n).collect();
    let scale = all.iter().map(|&a| sum_over(a, &all).abs()).fold(0.0, f64::max);
    let tol = tie_tolerance * if scale > 0.0 { scale } else { 1.0 };

    let mut remaining = all;
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let sums: Vec<f64> = remaining.iter().map(|&a| sum_over(a, &remaining)).collect();
        let max = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let k = sums.iter().position(|&p| p >= max - tol).unwrap();
        let best = remaining.remove(k);
        order.push(table.candidates()[best]);
    }
    order
}

/// `sum_{k < l} psi(order[k], order[l])`.
pub fn agreement_score(table: &PreferenceTable, order: &[ServiceId]) -> f64 {
    let idx: Vec<usize> = order.iter().map(|&s| table.index_of(s).unwrap()).collect();
    let mut score = 0.0;
    for k in 0..idx.len() {
        for l in k + 1..idx.len() {
            score += table.at(idx[k], idx[l]).psi;
        }
    }
    score
}

pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// Services of `u` sorted by value, best first, ties by id.
pub fn sort_by_qos(m: &QoSMatrix, u: UserId) -> Vec<ServiceId> {
    let mut row: Vec<(ServiceId, f64)> = m.row(u).unwrap().to_vec();
    row.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    row.into_iter().map(|(s, _)| s).collect()
}

/// A matrix where `active` observed every service and the others are sparse.
pub fn matrix_with_full_user(seed: u64, max_users: usize, max_services: usize) -> (QoSMatrix, UserId) {
    let base = random_matrix(seed, max_users, max_services, (0.3, 1.0));
    let mut r = rng::seeded(seed ^ 0x5eed);
    let active = UserId(rng::below(&mut r, base.num_users()));
    let mut entries: Vec<_> = base.entries().filter(|e| e.0 != active).collect();
    for s in base.services() {
        entries.push((active, s, rng::unit(&mut r)));
    }
    (
        QoSMatrix::from_entries(base.num_users(), base.num_services(), entries).unwrap(),
        active,
    )
}
