use cap2aug::cache_adapter::CacheAdapter;
use cap2aug::feature_store::{sample_episode, synth_cluster_dataset, Episode, SynthParams};
use cap2aug::trainer::{
    cosine_lr, grad_check, grad_check_with, loss_and_grad, train, train_episode, GradCheckInstance, TrainConfig,
    TrainSet,
};
use ndarray::Array2;
use proptest::prelude::*;

fn episode(seed: u64) -> Episode {
    let data = synth_cluster_dataset(&SynthParams::new(10, 16, 16, 64, seed).with_shift_norm(0.8))
        .unwrap()
        .to_dataset()
        .unwrap();
    sample_episode(&data, 10, 16, seed).unwrap()
}

fn small_episode(seed: u64) -> Episode {
    let data = synth_cluster_dataset(&SynthParams::new(4, 6, 6, 16, seed).with_shift_norm(0.8))
        .unwrap()
        .to_dataset()
        .unwrap();
    sample_episode(&data, 4, 4, seed).unwrap()
}

#[test]
fn four_key_instance_matches_finite_differences() {
    let instance = GradCheckInstance {
        classes: 2,
        shots: 1,
        dim: 3,
        alpha: 1.0,
        ..Default::default()
    };
    let report = grad_check(&instance, 1e-5).unwrap();
    assert_eq!(report.coordinates, 12);
    assert!(report.passed, "{report:?}");
}

#[test]
fn zero_alpha_ignores_mmd_inputs() {
    let p = GradCheckInstance {
        alpha: 0.0,
        ..Default::default()
    }
    .build()
    .unwrap();
    let full = loss_and_grad(&p.adapter, &p.real, &p.synth, &p.batch, &p.batch_labels, &p.config).unwrap();
    let empty = Array2::zeros((0, p.real.ncols()));
    let ce_only = loss_and_grad(&p.adapter, &empty, &empty, &p.batch, &p.batch_labels, &p.config).unwrap();
    assert_eq!(full, ce_only);
    assert_eq!(full.mmd, None);

    let instance = GradCheckInstance {
        alpha: 0.0,
        ..Default::default()
    };
    let a = grad_check(&instance, 1e-5).unwrap();
    let b = grad_check_with(&instance, 1e-5, |p| {
        let empty = Array2::zeros((0, p.real.ncols()));
        Ok(loss_and_grad(&p.adapter, &empty, &empty, &p.batch, &p.batch_labels, &p.config)?.d_keys)
    })
    .unwrap();
    assert_eq!(a.max_rel_err, b.max_rel_err);
    assert!(!a.mmd_exercised);
}

#[test]
fn loss_and_grad_is_pure() {
    let p = GradCheckInstance::default().build().unwrap();
    let a = loss_and_grad(&p.adapter, &p.real, &p.synth, &p.batch, &p.batch_labels, &p.config).unwrap();
    let b = loss_and_grad(&p.adapter, &p.real, &p.synth, &p.batch, &p.batch_labels, &p.config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_epochs_keep_initial_adapter() {
    let ep = small_episode(0);
    let run = train_episode(
        &ep,
        &TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let init = CacheAdapter::init_from_support(&ep.combined_support(), &ep.text_weights, 5.5, 1.0).unwrap();
    assert_eq!(run.adapter, init);
    assert!(run.history.is_empty());
    assert_eq!(run.final_mmd(), run.initial_mmd);
}

#[test]
fn identical_runs_have_identical_history() {
    let ep = small_episode(1);
    let cfg = TrainConfig {
        epochs: 6,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = train_episode(&ep, &cfg).unwrap();
    let b = train_episode(&ep, &cfg).unwrap();
    assert_eq!(a.history_jsonl().unwrap(), b.history_jsonl().unwrap());
    assert_eq!(a.adapter, b.adapter);
    let c = train_episode(&ep, &TrainConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a.adapter.keys(), c.adapter.keys());
}

#[test]
fn values_and_text_weights_are_frozen() {
    let ep = small_episode(2);
    let init = CacheAdapter::init_from_support(&ep.combined_support(), &ep.text_weights, 5.5, 1.0).unwrap();
    let run = train_episode(
        &ep,
        &TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(run.adapter.values(), init.values());
    assert_eq!(run.adapter.text_weights(), init.text_weights());
    assert_ne!(run.adapter.keys(), init.keys());
}

#[test]
fn zero_alpha_trajectory_ignores_mmd_target() {
    let ep = small_episode(3);
    let set = TrainSet::from_episode(&ep);
    let mut swapped = set.clone();
    swapped.mmd_synth = small_episode(9).support_synthetic.to_array();
    let cfg = TrainConfig {
        alpha: 0.0,
        epochs: 6,
        ..TrainConfig::default()
    };
    let a = train(&set, &cfg).unwrap();
    let b = train(&swapped, &cfg).unwrap();
    assert_eq!(a.adapter.keys(), b.adapter.keys());
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!(
            (x.ce_loss, x.total_loss, x.train_acc, x.mmd_loss),
            (y.ce_loss, y.total_loss, y.train_acc, y.mmd_loss)
        );
    }
}

#[test]
fn positive_alpha_requires_synthetic_rows() {
    let ep = small_episode(4);
    let mut set = TrainSet::from_episode(&ep);
    set.mmd_synth = Array2::zeros((0, set.mmd_real.ncols()));
    assert!(matches!(
        train(&set, &TrainConfig::default()),
        Err(cap2aug::Error::EmptySyntheticWithAlpha)
    ));
    assert!(train(
        &set,
        &TrainConfig {
            alpha: 0.0,
            epochs: 1,
            ..TrainConfig::default()
        }
    )
    .is_ok());
}

#[test]
fn total_loss_decreases_over_first_epochs() {
    let mut decreasing = 0;
    for seed in 0..5 {
        let run = train_episode(
            &episode(seed),
            &TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let losses: Vec<f64> = run.history.iter().take(10).map(|r| r.total_loss).collect();
        if losses.windows(2).all(|w| w[1] <= w[0]) {
            decreasing += 1;
        }
    }
    assert!(decreasing >= 4, "non-increasing in {decreasing}/5 seeds");
}

#[test]
fn step_count_and_schedule() {
    let ep = small_episode(5);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 10,
        ..TrainConfig::default()
    };
    let run = train_episode(&ep, &cfg).unwrap();
    let rows = ep.combined_support().rows();
    let steps = 3 * rows.div_ceil(10);
    assert_eq!(run.history.len(), 3);
    let last = run.history.last().unwrap().lr;
    assert!((last - cosine_lr(steps - 1, steps, cfg.lr0, cfg.eta_min)).abs() < 1e-18);
}

proptest! {
    #[test]
    fn cosine_is_non_increasing(total in 1usize..500, lr0 in 1e-5f64..1.0, frac in 0.0f64..1.0) {
        let eta_min = lr0 * frac;
        let mut prev = f64::INFINITY;
        for step in 0..=total {
            let lr = cosine_lr(step, total, lr0, eta_min);
            prop_assert!(lr <= prev + 1e-18);
            prev = lr;
        }
    }
}
