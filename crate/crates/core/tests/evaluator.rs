use cap2aug::cache_adapter::CacheAdapter;
use cap2aug::evaluator::{
    alpha_ablation, evaluate, evaluate_with_groups, export_embeddings, group_accuracy, predict, shot_sweep,
    synth_count_ablation, SweepOptions,
};
use cap2aug::feature_store::{
    read_feature_file, sample_episode, synth_cluster_dataset, Dataset, FeatureMatrix, Origin, SynthParams,
};
use cap2aug::trainer::{train_with_observer, TrainConfig, TrainSet};

fn dataset(k_synth: usize) -> Dataset {
    synth_cluster_dataset(
        &SynthParams::new(4, 16, k_synth, 16, 6)
            .with_shift_norm(0.8)
            .with_test_per_class(12),
    )
    .unwrap()
    .to_dataset()
    .unwrap()
}

fn text_as_test(text: &FeatureMatrix, labels: Vec<u32>) -> FeatureMatrix {
    let n = text.rows();
    text.clone()
        .with_labels(labels)
        .unwrap()
        .select(&(0..n).collect::<Vec<_>>())
}

#[test]
fn zero_shot_self_match_and_adversarial_cases() {
    let ep = sample_episode(&dataset(4), 4, 4, 0).unwrap();
    let ad = CacheAdapter::init_from_support(&ep.combined_support(), &ep.text_weights, 5.5, 0.0).unwrap();
    let exact = text_as_test(&ep.text_weights, vec![0, 1, 2, 3]);
    assert_eq!(evaluate(&ad, &exact).unwrap().overall_acc, 100.0);
    let wrong = text_as_test(&ep.text_weights, vec![1, 2, 3, 0]);
    assert_eq!(evaluate(&ad, &wrong).unwrap().overall_acc, 0.0);
}

#[test]
fn report_is_consistent_with_confusion() {
    let ep = sample_episode(&dataset(4), 4, 4, 1).unwrap();
    let run = cap2aug::trainer::train_episode(
        &ep,
        &TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let report = evaluate(&run.adapter, &ep.query).unwrap();
    assert!(report.overall_acc > 25.0);
    let total: u64 = report.confusion.iter().flatten().sum();
    let trace: u64 = (0..4).map(|c| report.confusion[c][c]).sum();
    assert!((report.overall_acc - 100.0 * trace as f64 / total as f64).abs() < 1e-9);
    let weighted: f64 = report
        .per_class_acc
        .iter()
        .zip(&report.per_class_count)
        .map(|(a, &n)| a.unwrap() * n as f64)
        .sum::<f64>()
        / total as f64;
    assert!((weighted - report.overall_acc).abs() < 1e-9);
}

#[test]
fn predictions_follow_row_order() {
    let ep = sample_episode(&dataset(4), 4, 4, 2).unwrap();
    let ad = CacheAdapter::init_from_support(&ep.combined_support(), &ep.text_weights, 5.5, 1.0).unwrap();
    let n = ep.query.rows();
    let perm: Vec<usize> = (0..n).rev().collect();
    let shuffled = ep.query.select(&perm);
    let base = predict(&ad.full_logits(&ep.query.to_array()).unwrap());
    let moved = predict(&ad.full_logits(&shuffled.to_array()).unwrap());
    assert_eq!(perm.iter().map(|&i| base[i]).collect::<Vec<_>>(), moved);
    assert_eq!(
        evaluate(&ad, &ep.query).unwrap().overall_acc,
        evaluate(&ad, &shuffled).unwrap().overall_acc
    );
}

#[test]
fn ties_break_toward_lowest_class() {
    let logits = ndarray::array![[1.0, 1.0, 0.5], [0.0, 2.0, 2.0]];
    assert_eq!(predict(&logits), vec![0, 1]);
}

#[test]
fn groups_partition_classes_at_boundaries() {
    let confusion = vec![vec![3, 1, 0, 0], vec![0, 2, 2, 0], vec![0, 0, 4, 0], vec![1, 0, 0, 1]];
    let g = group_accuracy(&confusion, &[101, 100, 20, 19]).unwrap();
    let many = g.many.unwrap();
    let medium = g.medium.unwrap();
    let few = g.few.unwrap();
    assert_eq!((many.classes, medium.classes, few.classes), (1, 2, 1));
    assert_eq!(many.test_rows + medium.test_rows + few.test_rows, 14);
    assert_eq!(many.acc, 75.0);
    assert!((medium.acc - 75.0).abs() < 1e-12);
    assert_eq!(few.acc, 50.0);
    assert!(group_accuracy(&confusion, &[1, 2]).is_err());

    let ep = sample_episode(&dataset(4), 4, 4, 3).unwrap();
    let ad = CacheAdapter::init_from_support(&ep.combined_support(), &ep.text_weights, 5.5, 1.0).unwrap();
    let report = evaluate_with_groups(&ad, &ep.query, &[16, 16, 16, 16]).unwrap();
    let groups = report.group_acc.unwrap();
    assert!(groups.many.is_none() && groups.medium.is_none());
    assert_eq!(groups.few.unwrap().test_rows, ep.query.rows());
}

#[test]
fn sweeps_share_episodes_across_swept_variable() {
    let data = dataset(40);
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let opts = SweepOptions {
        n_way: Some(3),
        seeds: vec![0, 1],
    };

    let alpha = alpha_ablation(&data, &[0.0, 1.0], &[2, 4], &cfg, &opts).unwrap();
    for col in 0..2 {
        assert_eq!(alpha.cells[0][col].real_indices, alpha.cells[1][col].real_indices);
        assert_eq!(
            alpha.cells[0][col].synthetic_indices,
            alpha.cells[1][col].synthetic_indices
        );
        assert_ne!(alpha.cells[0][col].real_indices[0], alpha.cells[0][col].real_indices[1]);
        assert_eq!(alpha.cells[0][col].accs.len(), 2);
    }

    let counts = synth_count_ablation(&data, &[0, 4, 40], &[4], &cfg, &opts).unwrap();
    let row = &counts.cells[0];
    assert!(row.iter().all(|c| c.real_indices == row[0].real_indices));
    assert_eq!(row[0].synthetic_indices[0].len(), 0);
    assert_eq!(row[1].synthetic_indices[0].len(), 12);
    assert_eq!(row[2].synthetic_indices[0].len(), 120);
    assert!(row[1].synthetic_indices[0]
        .iter()
        .all(|i| row[2].synthetic_indices[0].contains(i)));

    let shots = shot_sweep(&data, &[2, 8], &cfg, &opts).unwrap();
    assert_eq!(shots.shape(), (2, 1));
    assert!(shots.to_text().contains('±'));
    assert_eq!(shots.to_csv().lines().next().unwrap(), "shots,acc");
}

#[test]
fn sweeps_reject_bad_grids() {
    let data = dataset(4);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let opts = SweepOptions::single(0);
    assert!(alpha_ablation(&data, &[], &[2], &cfg, &opts).is_err());
    assert!(alpha_ablation(&data, &[-1.0], &[2], &cfg, &opts).is_err());
    assert!(synth_count_ablation(&data, &[80], &[2], &cfg, &opts).is_err());
    assert!(shot_sweep(
        &data,
        &[2],
        &cfg,
        &SweepOptions {
            n_way: None,
            seeds: vec![]
        }
    )
    .is_err());
}

#[test]
fn embeddings_export_at_checkpoints() {
    let ep = sample_episode(&dataset(4), 4, 4, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        epochs: 6,
        ..TrainConfig::default()
    };
    let support = ep.combined_support();
    let mut written = Vec::new();
    train_with_observer(&TrainSet::from_episode(&ep), &cfg, |epoch, adapter| {
        if [0, 3, 6].contains(&epoch) {
            let path = dir.path().join(format!("emb_{epoch}.capf"));
            let m = export_embeddings(adapter, &support, &path)?;
            written.push((path, m));
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(written.len(), 3);
    for (path, m) in &written {
        let back = read_feature_file(path).unwrap();
        assert_eq!(&back, m);
        assert_eq!((back.rows(), back.dim()), (support.rows(), 4));
        assert_eq!(back.origin()[0], Origin::Real);
        assert_eq!(back.origin()[support.rows() - 1], Origin::Synthetic);
    }
    assert_ne!(written[0].1, written[2].1);
}
