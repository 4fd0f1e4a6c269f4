use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn fixed(tau: f64) -> OnlineClusterSet {
    OnlineClusterSet::new(ClusterConfig {
        tau: Some(tau),
        ..ClusterConfig::default()
    })
    .unwrap()
}

fn brute_nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Minimum SSE over every assignment of points to exactly `k` non-empty groups.
fn exhaustive_sse(data: &[Vec<f64>], k: usize) -> f64 {
    let n = data.len();
    let dim = data[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (x, l) in data.iter().zip(&labels) {
            counts[*l] += 1;
            sums[*l].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        if counts.iter().all(|c| *c > 0) {
            let mut total = 0.0;
            for (x, l) in data.iter().zip(&labels) {
                for (v, s) in x.iter().zip(&sums[*l]) {
                    total += (v - s / counts[*l] as f64).powi(2);
                }
            }
            best = best.min(total);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn bonus_is_zero_at_a_center() {
    let mut set = fixed(1.0);
    set.online_update(&[1.0, 2.0, 3.0], false, 0).unwrap();
    assert_eq!(set.novelty_bonus(&[1.0, 2.0, 3.0]), 0.0);
}

#[test]
fn bonus_three_four_five() {
    let mut set = fixed(1.0);
    let mut origin = vec![0.0; 31];
    set.online_update(&origin, false, 0).unwrap();
    origin[0] = 3.0;
    origin[1] = 4.0;
    assert!((set.novelty_bonus(&origin) - 5.0).abs() < 1e-15);
}

#[test]
fn bonus_matches_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut set = fixed(1e-9);
    let centers = random_points(&mut rng, 10, 31);
    for c in &centers {
        set.online_update(c, false, 0).unwrap();
    }
    assert_eq!(set.len(), 10);
    for _ in 0..1000 {
        let q = random_points(&mut rng, 1, 31).pop().unwrap();
        let expected = brute_nearest(&centers, &q).1;
        assert!((set.novelty_bonus(&q) - expected).abs() < 1e-12);
    }
}

#[test]
fn empty_set_bonus_convention() {
    let set = fixed(0.7);
    assert_eq!(set.novelty_bonus(&[5.0, 5.0]), 0.7);
    let auto = OnlineClusterSet::new(ClusterConfig::default()).unwrap();
    assert!((auto.novelty_bonus(&[3.0, 4.0]) - 5.0).abs() < 1e-15);
}

#[test]
fn first_clip_creates_center() {
    let mut set = OnlineClusterSet::new(ClusterConfig::default()).unwrap();
    assert!(set.online_update(&[0.5, 0.25], false, 3).unwrap());
    assert_eq!(set.centers(), &[vec![0.5, 0.25]]);
    assert_eq!(set.last_growth(), 3);
}

#[test]
fn silent_clip_is_ignored() {
    let mut set = fixed(1.0);
    assert!(!set.online_update(&[0.0, 0.0], true, 0).unwrap());
    assert!(set.is_empty());
}

#[test]
fn repeated_clip_is_a_fixed_point() {
    let mut set = OnlineClusterSet::new(ClusterConfig::default()).unwrap();
    let phi = vec![0.3, -0.2, 0.9];
    for step in 0..50 {
        set.online_update(&phi, false, step).unwrap();
    }
    assert_eq!(set.len(), 1);
    assert_eq!(set.centers()[0], phi);
    assert_eq!(set.counts(), &[50]);
}

#[test]
fn two_separated_kinds_give_two_centers() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut set = fixed(1.0);
    for step in 0..400 {
        let base = if rng.gen_bool(0.5) { 0.0 } else { 10.0 };
        let phi: Vec<f64> = (0..31).map(|_| base + rng.gen_range(-0.05..0.05)).collect();
        set.online_update(&phi, false, step).unwrap();
    }
    assert_eq!(set.len(), 2);
}

#[test]
fn derived_threshold_separates_two_kinds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut set = OnlineClusterSet::new(ClusterConfig::default()).unwrap();
    for step in 0..400 {
        let base = if step % 2 == 0 { 0.0 } else { 10.0 };
        let phi: Vec<f64> = (0..31).map(|_| base + rng.gen_range(-0.05..0.05)).collect();
        set.online_update(&phi, false, step).unwrap();
    }
    assert!(set.tau_frozen());
    // Median pairwise distance is the between-kind distance (~55.7), halved.
    let tau = set.tau().unwrap();
    assert!((tau - 0.5 * 10.0 * 31f64.sqrt()).abs() < 0.5, "tau {tau}");
    assert_eq!(set.len(), 2);
}

#[test]
fn running_mean_equals_arithmetic_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut set = fixed(100.0);
    let clips = random_points(&mut rng, 37, 5);
    for c in &clips {
        set.online_update(c, false, 0).unwrap();
    }
    assert_eq!(set.len(), 1);
    for d in 0..5 {
        let mean = clips.iter().map(|c| c[d]).sum::<f64>() / clips.len() as f64;
        assert!((set.centers()[0][d] - mean).abs() < 1e-12);
    }
}

#[test]
fn non_finite_texture_is_rejected() {
    let mut set = fixed(1.0);
    assert!(set.online_update(&[f64::NAN], false, 0).is_err());
}

#[test]
fn saturation_timeline() {
    let mut set = fixed(0.1);
    assert!(!set.saturated(0));
    assert!(set.saturated(10_000));
    set.online_update(&[0.0], false, 7999).unwrap();
    assert!(!set.saturated(9999));
    assert!(set.saturated(10_000));
    let mut stalled = fixed(0.1);
    stalled.online_update(&[0.0], false, 100).unwrap();
    assert!(!stalled.saturated(2100));
    assert!(stalled.saturated(2101));
}

#[test]
fn kmeans_single_cluster_is_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = random_points(&mut rng, 20, 3);
    let fit = kmeans(&data, 1, 0, 10).unwrap();
    for d in 0..3 {
        let mean = data.iter().map(|x| x[d]).sum::<f64>() / 20.0;
        assert!((fit.centers[0][d] - mean).abs() < 1e-12);
    }
}

#[test]
fn kmeans_one_dimensional_pairs() {
    let data = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
    let fit = kmeans(&data, 2, 9, 10).unwrap();
    let mut c: Vec<f64> = fit.centers.iter().map(|c| c[0]).collect();
    c.sort_by(f64::total_cmp);
    assert_eq!(c, vec![0.5, 10.5]);
    assert!((fit.sse - exhaustive_sse(&data, 2)).abs() < 1e-12);
}

#[test]
fn kmeans_matches_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for instance in 0..25 {
        let n = rng.gen_range(4..=12);
        let k = rng.gen_range(1..=3);
        let data = random_points(&mut rng, n, 2);
        let fit = kmeans(&data, k, instance, 10).unwrap();
        let best = exhaustive_sse(&data, k);
        assert!((fit.sse - best).abs() < 1e-9, "instance {instance}: {} vs {best}", fit.sse);
    }
}

#[test]
fn lloyd_sse_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..10 {
        let data = random_points(&mut rng, 200, 4);
        let fit = kmeans(&data, 6, seed, 1).unwrap();
        for w in fit.sse_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.sse_trace);
        }
    }
}

#[test]
fn empty_cluster_is_reseeded() {
    // Initial center 1 is far from everything so it starts empty.
    let data = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.1]];
    let fit = lloyd(&data, vec![vec![2.0], vec![100.0]]).unwrap();
    let mut c: Vec<f64> = fit.centers.iter().map(|c| c[0]).collect();
    c.sort_by(f64::total_cmp);
    assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 5.05).abs() < 1e-12, "{c:?}");
}

#[test]
fn kmeans_rejects_too_few_points() {
    let data = vec![vec![0.0], vec![1.0]];
    assert!(matches!(kmeans(&data, 3, 0, 10), Err(Error::Input(_))));
    assert!(matches!(kmeans(&data, 0, 0, 10), Err(Error::Input(_))));
}

#[test]
fn kmeans_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = random_points(&mut rng, 60, 3);
    assert_eq!(kmeans(&data, 5, 42, 10).unwrap(), kmeans(&data, 5, 42, 10).unwrap());
}

fn sample_classes(rng: &mut ChaCha8Rng) -> EventClasses {
    EventClasses::new(random_points(rng, 6, 31), 0.5).unwrap()
}

#[test]
fn labels_follow_nearest_center() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let classes = sample_classes(&mut rng);
    assert_eq!(classes.label(&[0.0; 31], true), classes.silence_id());
    assert_eq!(classes.silence_id(), 6);
    assert_eq!(classes.num_classes(), 7);
    assert_eq!(classes.label(&classes.centers()[3].clone(), false), 3);
    for _ in 0..1000 {
        let q = random_points(&mut rng, 1, 31).pop().unwrap();
        assert_eq!(classes.label(&q, false), brute_nearest(classes.centers(), &q).0);
    }
}

#[test]
fn label_ties_go_to_lowest_id() {
    let classes = EventClasses::new(
        vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 5.0], vec![0.0, -5.0]],
        1.0,
    )
    .unwrap();
    assert_eq!(classes.label(&[0.0, 0.0], false), 0);
}

#[test]
fn event_class_bounds_and_distinctness() {
    assert!(EventClasses::new(vec![vec![0.0]; 3], 1.0).is_err());
    assert!(EventClasses::new(vec![vec![0.0], vec![1.0], vec![2.0], vec![1.0]], 1.0).is_err());
    let many: Vec<Vec<f64>> = (0..33).map(|i| vec![i as f64]).collect();
    assert!(EventClasses::new(many, 1.0).is_err());
}

#[test]
fn event_classes_json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let classes = sample_classes(&mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("classes.json");
    classes.save(&path).unwrap();
    assert_eq!(EventClasses::load(&path).unwrap(), classes);
}

#[test]
fn freezing_needs_enough_distinct_clips() {
    let corpus = vec![vec![1.0, 0.0]; 50];
    match freeze_event_classes(&corpus, 1, 0.5, 0) {
        Err(Error::TooFewClusters { found, required, .. }) => {
            assert_eq!((found, required), (1, K_MIN));
        }
        other => panic!("expected too-few-clusters, got {other:?}"),
    }
    assert!(matches!(
        freeze_event_classes(&[], 0, 0.5, 0),
        Err(Error::TooFewClusters { found: 0, .. })
    ));
}

#[test]
fn freezing_clamps_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let corpus = random_points(&mut rng, 300, 31);
    assert_eq!(freeze_event_classes(&corpus, 2, 0.5, 0).unwrap().k_events(), K_MIN);
    assert_eq!(freeze_event_classes(&corpus, 12, 0.5, 0).unwrap().k_events(), 12);
    assert_eq!(freeze_event_classes(&corpus, 90, 0.5, 0).unwrap().k_events(), K_MAX);
    let few = random_points(&mut rng, 5, 31);
    assert_eq!(freeze_event_classes(&few, 20, 0.5, 0).unwrap().k_events(), 5);
}

#[test]
fn unfrozen_classes_are_a_state_error() {
    assert!(matches!(require_classes(None), Err(Error::State(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bonus_is_nonnegative_and_zero_only_on_centers(
        centers in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..8),
        q in prop::collection::vec(-5.0f64..5.0, 4),
    ) {
        let mut set = fixed(1e-12);
        for c in &centers {
            set.online_update(c, false, 0).unwrap();
        }
        let b = set.novelty_bonus(&q);
        prop_assert!(b >= 0.0);
        let on_center = set.centers().iter().any(|c| *c == q);
        prop_assert_eq!(b == 0.0, on_center);
        prop_assert_eq!(set.novelty_bonus(&q), b);
    }

    #[test]
    fn online_centers_stay_finite_with_positive_counts(
        clips in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..60),
    ) {
        let mut set = OnlineClusterSet::new(ClusterConfig { tau_clips: 10, ..ClusterConfig::default() }).unwrap();
        for (i, c) in clips.iter().enumerate() {
            set.online_update(c, false, i as u64).unwrap();
        }
        prop_assert!(!set.is_empty());
        prop_assert!(set.centers().iter().flatten().all(|v| v.is_finite()));
        prop_assert!(set.counts().iter().all(|c| *c > 0));
        prop_assert_eq!(set.counts().iter().sum::<u64>(), clips.len() as u64);
    }
}
