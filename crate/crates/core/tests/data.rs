mod common;

use std::collections::BTreeSet;

use common::oracle_tv;
use proptest::prelude::*;
use sparsyfed::data::{batches, lda_partition, load_csv, make_synthetic, mean_pairwise_tv, total_variation, Split};

#[test]
fn split_arithmetic_and_balance() {
    let (train, test) = make_synthetic(4, 5, 10, 2.0, 3).unwrap();
    assert_eq!((train.len(), test.len()), (32, 8));
    assert_eq!(train.class_histogram(&(0..32).collect::<Vec<_>>()), vec![8; 4]);
    assert_eq!(test.class_histogram(&(0..8).collect::<Vec<_>>()), vec![2; 4]);
    assert_eq!((train.split(), test.split()), (Split::Train, Split::Test));
    assert_eq!(train.dim(), 5);
}

#[test]
fn synthetic_is_deterministic() {
    let a = make_synthetic(3, 4, 20, 1.0, 11).unwrap();
    let b = make_synthetic(3, 4, 20, 1.0, 11).unwrap();
    let c = make_synthetic(3, 4, 20, 1.0, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0.inputs(), c.0.inputs());
}

#[test]
fn synthetic_rejects_bad_arguments() {
    assert!(make_synthetic(1, 4, 10, 1.0, 0).is_err());
    assert!(make_synthetic(2, 4, 1, 1.0, 0).is_err());
    assert!(make_synthetic(2, 4, 10, 0.0, 0).is_err());
    assert!(make_synthetic(2, 4, 10, -1.0, 0).is_err());
}

#[test]
fn large_margin_is_linearly_separable() {
    // Nearest class mean is a linear rule; fit it on train, score on test.
    let (train, test) = make_synthetic(2, 16, 500, 12.0, 7).unwrap();
    let d = train.dim();
    let mut means = vec![vec![0.0; d]; 2];
    let mut counts = [0usize; 2];
    for (row, &y) in train.inputs().data().chunks(d).zip(train.labels()) {
        for (m, x) in means[y].iter_mut().zip(row) {
            *m += x;
        }
        counts[y] += 1;
    }
    for (m, n) in means.iter_mut().zip(counts) {
        m.iter_mut().for_each(|v| *v /= n as f64);
    }
    let dist = |row: &[f64], m: &[f64]| row.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let correct = test
        .inputs()
        .data()
        .chunks(d)
        .zip(test.labels())
        .filter(|(row, &y)| {
            let guess = usize::from(dist(row, &means[1]) < dist(row, &means[0]));
            guess == y
        })
        .count();
    assert!(correct as f64 / test.len() as f64 >= 0.99);
}

#[test]
fn iid_partition_is_close_to_global() {
    // 500 samples per client, the per-client size of a 100-way split of a
    // 50k-image training set.
    let (train, _) = make_synthetic(10, 4, 6250, 1.0, 1).unwrap();
    let all: Vec<usize> = (0..train.len()).collect();
    let global = train.class_histogram(&all);
    for seed in [1337, 1, 2] {
        let p = lda_partition(train.labels(), 100, 1e3, seed).unwrap();
        let close = p
            .clients
            .iter()
            .filter(|c| total_variation(&train.class_histogram(c), &global) <= 0.2)
            .count();
        assert!(close >= 95, "seed {seed}: only {close} clients within 0.2");
    }
}

#[test]
fn partition_edge_cases() {
    let labels = vec![0, 1, 2, 0, 1];
    let mut p = lda_partition(&labels, 1, 0.1, 5).unwrap();
    p.clients[0].sort_unstable();
    assert_eq!(p.clients, vec![vec![0, 1, 2, 3, 4]]);
    assert!(lda_partition(&labels, 0, 1.0, 5).is_err());
    assert!(lda_partition(&labels, 2, 0.0, 5).is_err());
    assert!(lda_partition(&labels, 6, 1.0, 5).is_err());
    assert_eq!(
        lda_partition(&labels, 3, 1.0, 9).unwrap(),
        lda_partition(&labels, 3, 1.0, 9).unwrap()
    );
}

#[test]
fn heterogeneity_orders_with_alpha() {
    let (train, _) = make_synthetic(10, 2, 200, 1.0, 1).unwrap();
    let tv = |alpha| {
        let p = lda_partition(train.labels(), 20, alpha, 1337).unwrap();
        let h: Vec<Vec<usize>> = p.clients.iter().map(|c| train.class_histogram(c)).collect();
        mean_pairwise_tv(&h)
    };
    let (low, mid, iid) = (tv(0.1), tv(1.0), tv(1e3));
    assert!(low > mid && mid > iid, "{low} {mid} {iid}");
}

#[test]
fn batch_examples() {
    let ten: Vec<usize> = (0..10).collect();
    let b = batches(&ten, 16, 1, 0).unwrap();
    assert_eq!(b.len(), 1);
    assert_eq!(b[0].len(), 10);
    let many: Vec<usize> = (0..32).collect();
    assert_eq!(batches(&many, 16, 1, 0).unwrap().len(), 2);
    let odd: Vec<usize> = (0..33).collect();
    let b = batches(&odd, 16, 1, 0).unwrap();
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![16, 16, 1]);
    assert_eq!(batches(&odd, 16, 4, 2).unwrap(), batches(&odd, 16, 4, 2).unwrap());
    assert_ne!(batches(&odd, 16, 4, 2).unwrap(), batches(&odd, 16, 4, 3).unwrap());
    assert!(batches(&odd, 0, 4, 2).is_err());
}

#[test]
fn csv_loader() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "a,b,label\n0.5,1.0,1\n-2,3,0\n0,0,2\n").unwrap();
    let d = load_csv(&path, Split::Train).unwrap();
    assert_eq!((d.len(), d.dim(), d.classes()), (3, 2, 3));
    assert_eq!(d.labels(), &[1, 0, 2]);
    assert_eq!(d.inputs().data(), &[0.5, 1.0, -2.0, 3.0, 0.0, 0.0]);

    std::fs::write(&path, "a,b,label\n0.5,1.0,1\n-2,0\n").unwrap();
    assert!(load_csv(&path, Split::Train).is_err());
    std::fs::write(&path, "a,label\nx,1\n").unwrap();
    assert!(load_csv(&path, Split::Train).is_err());
    assert!(load_csv(&dir.path().join("missing.csv"), Split::Test).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_covers_every_index_once(
        labels in prop::collection::vec(0usize..4, 30..200),
        clients in 1usize..6,
        alpha in prop_oneof![Just(0.5), Just(1.0), Just(10.0), Just(1e3)],
        seed in 0u64..1000,
    ) {
        let p = lda_partition(&labels, clients, alpha, seed).unwrap();
        prop_assert_eq!(p.num_clients(), clients);
        prop_assert_eq!(p.total(), labels.len());
        let seen: BTreeSet<usize> = p.clients.iter().flatten().copied().collect();
        prop_assert_eq!(seen, (0..labels.len()).collect::<BTreeSet<_>>());
        prop_assert!(p.clients.iter().all(|c| !c.is_empty()));
    }

    #[test]
    fn batches_are_a_permutation(n in 1usize..100, b in 1usize..20, seed in any::<u64>(), step in 0u64..5) {
        let idx: Vec<usize> = (0..n).map(|i| i * 3).collect();
        let out = batches(&idx, b, seed, step).unwrap();
        prop_assert!(out.iter().rev().skip(1).all(|x| x.len() == b));
        let mut flat: Vec<usize> = out.concat();
        flat.sort_unstable();
        prop_assert_eq!(flat, idx);
    }

    #[test]
    fn tv_matches_oracle(
        pairs in prop::collection::vec((0usize..50, 0usize..50), 2..10)
            .prop_filter("nonempty", |v| v.iter().map(|p| p.0).sum::<usize>() > 0 && v.iter().map(|p| p.1).sum::<usize>() > 0)
    ) {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let tv = total_variation(&a, &b);
        prop_assert!((tv - oracle_tv(&a, &b)).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        prop_assert!((tv - total_variation(&b, &a)).abs() < 1e-15);
    }
}
