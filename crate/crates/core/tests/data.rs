use can::data::{generate, split, Dataset, GenConfig};
use proptest::prelude::*;

#[test]
fn prevalences_within_three_sigma() {
    let prevalences = [0.5, 0.2, 0.05, 0.02];
    for seed in 0..3 {
        let d = generate(&GenConfig::new(seed, 2000, 32, &prevalences)).unwrap();
        for (l, &p) in prevalences.iter().enumerate() {
            let n = 2000.0;
            let sigma = (n * p * (1.0 - p)).sqrt();
            let count = d.pos_counts()[l] as f64;
            assert!((count - n * p).abs() <= 3.0 * sigma, "seed {seed} label {l}: {count}");
        }
    }
}

#[test]
fn positives_have_boxes_and_negatives_do_not() {
    let d = generate(&GenConfig::new(4, 300, 40, &[0.5, 0.1])).unwrap();
    for s in d.samples() {
        for (y, b) in s.labels.iter().zip(&s.boxes) {
            assert_eq!(*y == 1, b.is_some());
        }
        assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn split_proportions_and_no_group_leakage() {
    let d = generate(&GenConfig::new(9, 1000, 32, &[0.3, 0.1])).unwrap();
    let (a, b, c) = split(&d, (0.8, 0.1, 0.1), 3).unwrap();
    assert_eq!(a.len() + b.len() + c.len(), d.len());
    let frac = a.len() as f64 / d.len() as f64;
    assert!((frac - 0.8).abs() < 0.05, "train fraction {frac}");
    let (ga, gb, gc) = (a.group_ids(), b.group_ids(), c.group_ids());
    assert!(ga.is_disjoint(&gb) && ga.is_disjoint(&gc) && gb.is_disjoint(&gc));
    assert_eq!(split(&d, (0.8, 0.1, 0.1), 3).unwrap().1, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn file_round_trip(seed in 0u64..1000, n in 1usize..30, hw in 32usize..48, p in 0.0f64..=1.0) {
        let d = generate(&GenConfig::new(seed, n, hw, &[p, 0.5])).unwrap();
        let bytes = d.to_bytes().unwrap();
        let back = Dataset::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn same_seed_same_bytes(seed in 0u64..1000) {
        let cfg = GenConfig::new(seed, 8, 32, &[0.4]);
        prop_assert_eq!(generate(&cfg).unwrap().to_bytes().unwrap(), generate(&cfg).unwrap().to_bytes().unwrap());
    }
}
