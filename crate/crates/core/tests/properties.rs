mod common;

use proptest::prelude::*;

use qosrank::matrix::{read_matrix, split_train_test, write_matrix, SplitSpec};
use qosrank::metrics::kendall_tau_score;
use qosrank::preference::{pair_weights, PairNeighborhood, PreferenceTable, Provenance};
use qosrank::ranker::{correct_observed_order, greedy_rank, rank, RankOptions, RankerKind, TIE_TOLERANCE};
use qosrank::similarity::{krcc, neighborhood, select_neighbors, similarity_row};
use qosrank::{MetricOrientation, QoSMatrix, Ranking, ServiceId, UserId};

use common::*;

fn all_services(m: &QoSMatrix) -> Vec<ServiceId> {
    m.services().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn krcc_matches_oracle_symmetric_and_bounded(seed in any::<u64>()) {
        let m = random_matrix(seed, 10, 10, (0.5, 1.0));
        for u in m.users() {
            for v in m.users().filter(|&v| v != u) {
                let s = krcc(&m, u, v).unwrap();
                prop_assert_eq!(s, krcc_oracle(&m, u, v));
                prop_assert_eq!(s, krcc(&m, v, u).unwrap());
                prop_assert!((-1.0..=1.0).contains(&s));
            }
        }
    }

    #[test]
    fn krcc_ignores_monotone_transforms(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let m = random_matrix(seed, 6, 8, (0.5, 1.0));
        let target = UserId(0);
        let transformed = QoSMatrix::from_entries(
            m.num_users(),
            m.num_services(),
            m.entries().map(|(u, s, q)| {
                if u == target { (u, s, (scale * q + shift).exp()) } else { (u, s, q) }
            }),
        ).unwrap();
        for v in m.users().skip(1) {
            prop_assert_eq!(krcc(&m, target, v).unwrap(), krcc(&transformed, target, v).unwrap());
        }
    }

    #[test]
    fn neighborhoods_are_sound(seed in any::<u64>(), k in 0usize..8) {
        let m = random_matrix(seed, 10, 10, (0.3, 1.0));
        let row = similarity_row(&m, UserId(0)).unwrap();
        let n = select_neighbors(&row, k);
        let mut positive: Vec<(UserId, f64)> =
            row.sims.iter().copied().filter(|&(_, s)| s > 0.0).collect();
        positive.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        prop_assert!(n.members.len() <= k);
        prop_assert!(n.members.iter().all(|&(v, s)| s > 0.0 && v != UserId(0)));
        prop_assert_eq!(&n.members[..], &positive[..n.members.len()]);
        prop_assert_eq!(n.members.len(), k.min(positive.len()));
    }

    #[test]
    fn preference_tables_are_antisymmetric_and_bounded(seed in any::<u64>(), k in 1usize..8) {
        let m = random_matrix(seed, 8, 8, (0.3, 1.0));
        let u = UserId(0);
        let nbrs = neighborhood(&m, u, k).unwrap();
        let max_sim = nbrs.members.first().map_or(0.0, |&(_, s)| s);
        let t = PreferenceTable::build(&m, u, &nbrs, &all_services(&m)).unwrap();
        for a in 0..t.len() {
            for b in 0..t.len() {
                if a == b { continue; }
                let (p, q) = (t.at(a, b), t.at(b, a));
                prop_assert!((p.psi + q.psi).abs() <= 1e-12);
                prop_assert_eq!(p.confidence, q.confidence);
                prop_assert!(p.confidence >= 0.0);
                match p.provenance {
                    Provenance::Explicit => prop_assert_eq!(p.confidence, 1.0),
                    Provenance::Implicit => prop_assert!(p.confidence <= max_sim + 1e-12),
                    Provenance::Unknown => prop_assert_eq!((p.psi, p.confidence), (0.0, 0.0)),
                }
            }
        }
    }

    #[test]
    fn confidence_grows_under_uniform_scaling(sims in prop::collection::vec(0.01f64..0.5, 1..6), factor in 1.0f64..2.0) {
        let members: Vec<(UserId, f64)> = sims.iter().enumerate().map(|(k, &s)| (UserId(k + 1), s)).collect();
        let scaled: Vec<(UserId, f64)> = members.iter().map(|&(v, s)| (v, s * factor)).collect();
        let pn = |members| PairNeighborhood { pair: (ServiceId(0), ServiceId(1)), members };
        let before = pn(members).confidence().unwrap();
        let after = pn(scaled).confidence().unwrap();
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn confidence_lies_between_member_similarities(sims in prop::collection::vec(0.01f64..1.0, 1..8)) {
        let pn = PairNeighborhood {
            pair: (ServiceId(0), ServiceId(1)),
            members: sims.iter().enumerate().map(|(k, &s)| (UserId(k + 1), s)).collect(),
        };
        let c = pn.confidence().unwrap();
        let lo = sims.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
    }

    #[test]
    fn pair_weights_sum_to_one(sims in prop::collection::vec(0.001f64..1.0, 1..12)) {
        let pn = PairNeighborhood {
            pair: (ServiceId(0), ServiceId(1)),
            members: sims.iter().enumerate().map(|(k, &s)| (UserId(k), s)).collect(),
        };
        let total: f64 = pair_weights(&pn).unwrap().iter().map(|&(_, w)| w).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn incremental_greedy_equals_recompute(seed in any::<u64>(), k in 1usize..6) {
        let m = random_matrix(seed, 8, 8, (0.3, 1.0));
        let nbrs = neighborhood(&m, UserId(0), k).unwrap();
        let t = PreferenceTable::build(&m, UserId(0), &nbrs, &all_services(&m)).unwrap();
        for weighted in [false, true] {
            prop_assert_eq!(greedy_rank(&t, weighted, None).order, greedy_recompute(&t, weighted, TIE_TOLERANCE));
        }
    }

    #[test]
    fn rankings_are_permutations_and_respect_observations(seed in any::<u64>(), k in 0usize..6) {
        let m = random_matrix(seed, 8, 10, (0.2, 0.9));
        let cands = all_services(&m);
        for kind in [RankerKind::CloudRank1, RankerKind::CloudRank2, RankerKind::RandomBaseline] {
            let r = rank(kind, &m, UserId(0), &cands, &RankOptions { k, correct_observed: true }, seed).unwrap();
            let mut sorted = r.order.clone();
            sorted.sort();
            prop_assert_eq!(&sorted, &cands);
            if kind == RankerKind::RandomBaseline { continue; }
            let pos = |s: ServiceId| r.order.iter().position(|&x| x == s).unwrap();
            let row = m.row(UserId(0)).unwrap();
            for &(a, qa) in row {
                for &(b, qb) in row {
                    if qa > qb {
                        prop_assert!(pos(a) < pos(b));
                    }
                }
            }
        }
    }

    #[test]
    fn cloudrank1_is_affine_invariant(seed in any::<u64>(), exp in -1i32..3, shift in -3i32..3) {
        // Values on a 2^-10 grid with a power-of-two scale and an integer
        // shift keep every intermediate exact, so equal reals stay equal floats.
        let scale = 2f64.powi(exp);
        let m = random_matrix(seed, 8, 8, (0.3, 1.0));
        let m = QoSMatrix::from_entries(m.num_users(), m.num_services(),
            m.entries().map(|(u, s, q)| (u, s, (q * 1024.0).floor() / 1024.0))).unwrap();
        let t = QoSMatrix::from_entries(m.num_users(), m.num_services(),
            m.entries().map(|(u, s, q)| (u, s, scale * q + shift as f64))).unwrap();
        let cands = all_services(&m);
        let opts = RankOptions { k: 10, correct_observed: false };
        let a = rank(RankerKind::CloudRank1, &m, UserId(0), &cands, &opts, 0).unwrap();
        let b = rank(RankerKind::CloudRank1, &t, UserId(0), &cands, &opts, 0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tau_score_matches_pair_oracle(perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(), values in prop::collection::vec(0u8..5, 8)) {
        let truth = QoSMatrix::from_dense(&[values.iter().map(|&v| v as f64).collect()]).unwrap();
        let ranking = Ranking { active: UserId(0), order: perm.iter().copied().map(ServiceId).collect() };
        let score = kendall_tau_score(&ranking, &truth, UserId(0)).unwrap().unwrap();
        // Position-as-value matrix: the predicted order becomes a second user.
        let mut pos = vec![0.0; 8];
        for (k, &s) in perm.iter().enumerate() { pos[s] = -(k as f64); }
        let both = QoSMatrix::from_dense(&[truth.row(UserId(0)).unwrap().iter().map(|&(_, q)| q).collect(), pos]).unwrap();
        prop_assert_eq!(score.tau, krcc_oracle(&both, UserId(0), UserId(1)));
        prop_assert!((score.accuracy - (score.tau + 1.0) / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn split_partitions_active_rows(seed in any::<u64>(), density in 0.05f64..=1.0) {
        let m = random_matrix(seed, 10, 10, (0.2, 1.0));
        let active: Vec<UserId> = m.users().filter(|u| u.0 % 2 == 0).collect();
        let spec = SplitSpec { density, seed, active_users: active.clone() };
        let split = split_train_test(&m, &spec).unwrap();
        for u in m.users() {
            for s in m.services() {
                let (tr, th) = (split.train.get(u, s), split.truth.get(u, s));
                prop_assert!(!(tr.is_some() && th.is_some()));
                prop_assert_eq!(tr.or(th), m.get(u, s));
                if !active.contains(&u) { prop_assert!(th.is_none()); }
            }
            if active.contains(&u) && !m.row(u).unwrap().is_empty() {
                prop_assert!(!split.train.row(u).unwrap().is_empty());
            }
        }
        let again = split_train_test(&m, &spec).unwrap();
        prop_assert_eq!(again.train, split.train);
        prop_assert_eq!(again.truth, split.truth);
    }

    #[test]
    fn smaller_is_better_round_trips(values in prop::collection::vec(-1e6f64..1e6, 1..20)) {
        let m = QoSMatrix::from_dense(std::slice::from_ref(&values)).unwrap();
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf, MetricOrientation::SmallerIsBetter).unwrap();
        let back = read_matrix(&buf[..], MetricOrientation::SmallerIsBetter).unwrap();
        prop_assert_eq!(&back, &m);
        let source = read_matrix(&buf[..], MetricOrientation::LargerIsBetter).unwrap();
        for (k, &v) in values.iter().enumerate() {
            prop_assert_eq!(source.get(UserId(0), ServiceId(k)), Some(-v));
        }
    }
}

#[test]
fn fully_explicit_greedy_orders_by_value_without_correction() {
    for seed in 0..200u64 {
        let (m, u) = matrix_with_full_user(seed, 6, 9);
        let cands = all_services(&m);
        let opts = RankOptions { k: 5, correct_observed: false };
        for kind in [RankerKind::CloudRank1, RankerKind::CloudRank2] {
            let r = rank(kind, &m, u, &cands, &opts, 0).unwrap();
            assert_eq!(r.order, sort_by_qos(&m, u), "seed {seed}");
        }
    }
}

// Raising one member's similarity can lower the confidence, since it is a
// similarity-weighted mean of similarities; elementwise monotonicity does
// not hold.
#[test]
fn confidence_is_not_elementwise_monotone() {
    let pn = |sims: &[f64]| PairNeighborhood {
        pair: (ServiceId(0), ServiceId(1)),
        members: sims.iter().enumerate().map(|(k, &s)| (UserId(k + 1), s)).collect(),
    };
    let before = pn(&[0.01, 0.01, 0.936]).confidence().unwrap();
    let after = pn(&[0.01, 0.6, 0.936]).confidence().unwrap();
    assert!(after < before);
}

#[test]
fn correction_is_identity_on_already_sorted_ranking() {
    let (m, u) = matrix_with_full_user(3, 5, 7);
    let r = Ranking { active: u, order: sort_by_qos(&m, u) };
    assert_eq!(correct_observed_order(&r, &m, u).unwrap(), r);
}
