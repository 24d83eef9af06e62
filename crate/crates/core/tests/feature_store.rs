use std::collections::BTreeSet;

use cap2aug::error::Error;
use cap2aug::feature_store::{
    l2_normalize, read_feature_file, sample_episode, subsample_synthetic, synth_cluster_dataset, Dataset,
    FeatureMatrix, Origin, SynthParams,
};
use cap2aug::kernels::{permutation_test, KernelSpec};
use proptest::prelude::*;

fn dataset(n_way: usize, k_shot: usize, k_synth: usize, seed: u64) -> Dataset {
    synth_cluster_dataset(&SynthParams::new(n_way, k_shot, k_synth, 12, seed).with_shift_norm(0.8))
        .unwrap()
        .to_dataset()
        .unwrap()
}

#[test]
fn episode_counts_and_labels() {
    let data = dataset(5, 6, 3, 0);
    let ep = sample_episode(&data, 2, 2, 9).unwrap();
    assert_eq!(ep.support_real.rows(), 4);
    assert_eq!(ep.support_synthetic.rows(), 6);
    for c in 0..2u32 {
        assert_eq!(ep.support_real.labels().iter().filter(|&&l| l == c).count(), 2);
    }
    let query_classes: BTreeSet<u32> = ep.query.labels().iter().copied().collect();
    assert_eq!(query_classes, BTreeSet::from([0, 1]));
    assert_eq!(ep.query.rows(), 2 * 50);
    assert!(ep.support_real.origin().iter().all(|&o| o == Origin::Real));
    assert!(ep.support_synthetic.origin().iter().all(|&o| o == Origin::Synthetic));
    let real: BTreeSet<usize> = ep.real_indices.iter().copied().collect();
    assert!(ep.synthetic_indices.iter().all(|i| !real.contains(i)));
    ep.combined_support().check_normalized("support", 1e-5).unwrap();
}

#[test]
fn episode_is_deterministic() {
    let data = dataset(6, 8, 4, 1);
    assert_eq!(
        sample_episode(&data, 3, 4, 5).unwrap(),
        sample_episode(&data, 3, 4, 5).unwrap()
    );
    assert_ne!(
        sample_episode(&data, 3, 4, 5).unwrap().real_indices,
        sample_episode(&data, 3, 4, 6).unwrap().real_indices
    );
}

#[test]
fn seeds_cover_every_class() {
    let data = dataset(10, 4, 2, 2);
    let mut seen = BTreeSet::new();
    for seed in 0..10 {
        seen.extend(sample_episode(&data, 3, 2, seed).unwrap().class_ids);
    }
    assert_eq!(seen.len(), 10);
}

#[test]
fn episode_errors() {
    let data = dataset(3, 4, 2, 3);
    match sample_episode(&data, 3, 5, 0) {
        Err(Error::InsufficientShots {
            class,
            available: 4,
            requested: 5,
        }) => assert_eq!(class, "class_000"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(sample_episode(&data, 3, 1, 0), Err(Error::TooFewShots(1))));
    let ep = sample_episode(&data, 3, 2, 0).unwrap();
    assert!(matches!(
        subsample_synthetic(&ep, 3, 0),
        Err(Error::InsufficientSynthetic { .. })
    ));
    assert_eq!(subsample_synthetic(&ep, 1, 0).unwrap().support_synthetic.rows(), 3);
    assert_eq!(subsample_synthetic(&ep, 0, 0).unwrap().support_synthetic.rows(), 0);
}

#[test]
fn synth_dataset_files_are_deterministic_and_loadable() {
    let params = SynthParams::new(3, 4, 4, 8, 17).with_shift_norm(0.8);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = synth_cluster_dataset(&params).unwrap().write(a.path()).unwrap();
    synth_cluster_dataset(&params).unwrap().write(b.path()).unwrap();
    for name in [
        "manifest.json",
        "train_real.capf",
        "train_synthetic.capf",
        "test.capf",
        "text_classifier.capf",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let data = Dataset::load(&ma).unwrap();
    assert_eq!(data.num_classes(), 3);
    assert_eq!(data.shots_available(), vec![4, 4, 4]);
    assert_eq!(data.synthetic_available(), vec![4, 4, 4]);
    assert_eq!(data.manifest_hash.len(), 64);

    let text = read_feature_file(a.path().join("text_classifier.capf")).unwrap();
    assert_eq!(text.labels(), &[0, 1, 2]);
    assert!(text.origin().iter().all(|&o| o == Origin::Real));
}

#[test]
fn manifest_with_bad_label_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let synth = synth_cluster_dataset(&SynthParams::new(2, 2, 2, 4, 0)).unwrap();
    let manifest = synth.write(dir.path()).unwrap();
    let bad = synth.real.clone().with_labels(vec![0, 1, 2, 1]).unwrap();
    cap2aug::feature_store::write_feature_file(&bad, dir.path().join("train_real.capf")).unwrap();
    assert!(matches!(
        Dataset::load(&manifest),
        Err(Error::LabelOutOfRange { label: 2, .. })
    ));
}

#[test]
fn missing_manifest_is_io_error() {
    assert!(matches!(
        Dataset::load("/nonexistent/manifest.json"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn permutation_test_distinguishes_shift() {
    let spec = KernelSpec::default();
    let p_value = |shift: f64| {
        let d = synth_cluster_dataset(&SynthParams::new(2, 50, 50, 16, 8).with_shift_norm(shift)).unwrap();
        permutation_test(&d.real.to_array(), &d.synthetic.to_array(), &spec, 200, 1).unwrap()
    };
    let p0 = p_value(0.0);
    let p1 = p_value(1.0);
    assert!(p0 >= 0.05, "shift 0 p-value {p0}");
    assert!(p1 < 0.05, "shift 1 p-value {p1}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_is_idempotent(rows in 1usize..6, dim in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..rows * dim).map(|_| rng.random_range(0.1f32..3.0)).collect();
        let m = FeatureMatrix::new(rows, dim, data, vec![0; rows], vec![Origin::Real; rows]).unwrap();
        let once = l2_normalize(&m).unwrap();
        let twice = l2_normalize(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn episodes_are_pure(seed in 0u64..1000) {
        let data = dataset(4, 5, 2, 11);
        prop_assert_eq!(sample_episode(&data, 2, 3, seed).unwrap(), sample_episode(&data, 2, 3, seed).unwrap());
    }
}
