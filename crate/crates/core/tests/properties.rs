use std::collections::BTreeMap;

use fedmf::data::{
    filter_min_interactions, sample_negatives, split_leave_one_out, InteractionDataset, SplitMode,
};
use fedmf::eval::{hit_ratio, rank_test_item, RankingTask};
use fedmf::ldp::{clip_to_unit, MechanismParams, PerturbedReport};
use fedmf::mf::{Matrix, UserEmbedding};
use fedmf::proxy::{strip_and_shuffle, AnonymousReportBatch, ClientMessage};
use fedmf::rng::stream;
use fedmf::server::aggregate;
use fedmf::Error;
use proptest::prelude::*;

fn triples(
    max_user: u64,
    max_item: u64,
    max_len: usize,
) -> impl Strategy<Value = Vec<(u64, u64, i64)>> {
    prop::collection::vec((0..max_user, 0..max_item, 0i64..1000), 1..max_len)
}

fn counts_ok(ds: &InteractionDataset, t: usize) -> bool {
    ds.user_counts().iter().all(|&c| c >= t) && ds.item_counts().iter().all(|&c| c >= t)
}

proptest! {
    #[test]
    fn filter_reaches_fixpoint(t in triples(30, 20, 300), threshold in 1usize..6) {
        let ds = InteractionDataset::from_triples(t).unwrap();
        match filter_min_interactions(&ds, threshold) {
            Ok(f) => {
                prop_assert!(counts_ok(&f, threshold));
                prop_assert_eq!(filter_min_interactions(&f, threshold).unwrap(), f.clone());
                // survivors keep all of their surviving-item interactions
                for u in 0..f.n_users() {
                    let orig = ds.user_index(f.user_id(u)).unwrap();
                    let kept = ds.items_of(orig).into_iter()
                        .filter(|&i| f.item_index(ds.item_id(i)).is_some())
                        .count();
                    prop_assert_eq!(kept, f.interactions(u).len());
                }
            }
            Err(Error::Vanished { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn split_partitions_each_row(t in triples(15, 30, 200), seed in any::<u64>(), latest in any::<bool>()) {
        // pad every user to at least two interactions
        let mut t = t;
        let users: Vec<u64> = t.iter().map(|x| x.0).collect();
        for u in users {
            t.push((u, 1000 + u, 0));
            t.push((u, 2000 + u, 1));
        }
        let ds = InteractionDataset::from_triples(t).unwrap();
        let mode = if latest { SplitMode::LatestLeaveOneOut } else { SplitMode::RandomLeaveOneOut };
        let s = split_leave_one_out(&ds, mode, seed).unwrap();
        for u in 0..ds.n_users() {
            let full = ds.items_of(u);
            let mut train = s.train.items_of(u);
            prop_assert!(!train.contains(&s.test_items[u]));
            prop_assert!(full.contains(&s.test_items[u]));
            train.push(s.test_items[u]);
            train.sort_unstable();
            prop_assert_eq!(train, full);
        }
    }

    #[test]
    fn aggregate_ignores_order(
        reports in prop::collection::vec((0u32..12, any::<bool>()), 6..=6 * 4),
        perm_seed in any::<u64>(),
    ) {
        let n = reports.len();
        let (users, k) = if n % 2 == 0 { (n / 2, 2) } else { (n, 1) };
        let mech = MechanismParams::new(1.3, 4, 3, k).unwrap();
        let batch = AnonymousReportBatch {
            epoch: 0,
            reports: reports.iter().map(|&(c, s)| PerturbedReport { cell_index: c, sign: s }).collect(),
        };
        let a = aggregate(&batch, users, &mech).unwrap();
        let mut shuffled = batch.clone();
        use rand::seq::SliceRandom;
        shuffled.reports.shuffle(&mut stream(perm_seed, &[]));
        let b = aggregate(&shuffled, users, &mech).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn clip_is_bounded_and_idempotent(vals in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let m = Matrix::from_vec(vals.len(), 1, vals.clone()).unwrap();
        let c = clip_to_unit(&m);
        prop_assert!(c.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert_eq!(clip_to_unit(&c), c.clone());
        for (x, y) in vals.iter().zip(c.as_slice()) {
            if x.abs() <= 1.0 { prop_assert_eq!(x, y); }
        }
    }

    #[test]
    fn wire_format_round_trips(cell in any::<u32>(), sign in any::<bool>()) {
        let r = PerturbedReport { cell_index: cell, sign };
        prop_assert_eq!(PerturbedReport::from_bytes(r.to_bytes()).unwrap(), r);
    }

    #[test]
    fn shuffle_conserves_multiset(
        msgs in prop::collection::vec(prop::collection::vec((0u32..50, any::<bool>()), 0..8), 1..10),
        seed in any::<u64>(),
    ) {
        let messages: Vec<ClientMessage> = msgs.iter().enumerate().map(|(i, rs)| ClientMessage {
            client_id: i as u64,
            epoch: 3,
            reports: rs.iter().map(|&(c, s)| PerturbedReport { cell_index: c, sign: s }).collect(),
        }).collect();
        let mut before: Vec<PerturbedReport> = messages.iter().flat_map(|m| m.reports.clone()).collect();
        let batch = strip_and_shuffle(messages, &mut stream(seed, &[])).unwrap();
        let mut after = batch.reports.clone();
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
        prop_assert_eq!(batch.epoch, 3);
    }

    #[test]
    fn rank_matches_sort_oracle(scores in prop::collection::vec(-5i32..5, 100), test in 0usize..100) {
        // integer scores make ties common
        let v = Matrix::from_vec(100, 1, scores.iter().map(|&s| s as f64).collect()).unwrap();
        let task = RankingTask {
            user: 0,
            test_item: test,
            negatives: (0..100).filter(|&i| i != test).collect(),
        };
        let mut order: Vec<usize> = (0..100).collect();
        order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
        let oracle = order.iter().position(|&i| i == test).unwrap() + 1;
        let x = UserEmbedding(vec![1.0]);
        prop_assert_eq!(rank_test_item(&x, &v, &task), oracle);
        let m = hit_ratio(&[task], &[x], &v, &[1, 2, 5, 10, 50]).unwrap();
        let hr: Vec<f64> = m.hr.values().copied().collect();
        prop_assert!(hr.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn negatives_are_fresh_and_distinct(t in triples(5, 300, 200), n in 1usize..50, seed in any::<u64>()) {
        let ds = InteractionDataset::from_triples(t).unwrap();
        for u in 0..ds.n_users() {
            match sample_negatives(&ds, u, n, seed, &[0]) {
                Ok(neg) => {
                    let mut seen = BTreeMap::new();
                    for &i in &neg {
                        prop_assert!(!ds.contains(u, i) && i != 0);
                        prop_assert!(seen.insert(i, ()).is_none());
                    }
                    prop_assert_eq!(neg.len(), n);
                }
                Err(Error::Insufficient(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
