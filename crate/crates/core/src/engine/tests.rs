use super::*;
use crate::events::SynthConfig;
use crate::gconv::ConvKind;
use crate::graphbuild::GraphParams;
use crate::models::{build_classifier, build_detector, Model};

fn samples(classes: u32, per_class: u32, seed: u64) -> Vec<Sample> {
    let cfg = SynthConfig {
        classes,
        samples_per_class: per_class,
        seed,
        duration_us: 20_000,
        ..SynthConfig::default()
    };
    let params = GraphParams {
        max_events: 400,
        ..GraphParams::default()
    };
    cfg.generate()
        .unwrap()
        .iter()
        .map(|s| Sample::from_stream(s, &params).unwrap())
        .collect()
}

fn quick(task_cfg: TrainConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        ..task_cfg
    }
}

#[test]
fn same_seed_same_history() {
    let data = samples(2, 4, 1);
    let cfg = quick(TrainConfig::classification(), 3);
    let run = || {
        let mut m = build_classifier(ConvKind::PointNet, 2, 1, 7).unwrap();
        let out = train(&mut m, &data[..6], &data[6..], &cfg).unwrap();
        (out.history.without_timing(), m)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let data = samples(2, 2, 2);
    let mut m = build_classifier(ConvKind::Gcn, 2, 1, 1).unwrap();
    let before = m.clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        weight_decay: 0.0,
        ..quick(TrainConfig::classification(), 2)
    };
    train(&mut m, &data, &data, &cfg).unwrap();
    assert_eq!(m, before);
}

#[test]
fn two_sample_overfit() {
    let data = samples(2, 1, 3);
    let mut m = build_classifier(ConvKind::PointNet, 2, 1, 0).unwrap();
    let cfg = TrainConfig {
        batch_size: 2,
        ..quick(TrainConfig::classification(), 50)
    };
    let out = train(&mut m, &data, &data, &cfg).unwrap();
    let losses: Vec<f64> = out.history.records.iter().map(|r| r.loss).collect();
    assert!(losses.last().unwrap() < &losses[0]);
    assert_eq!(out.history.records.len(), 50);
}

#[test]
fn parallel_batches_agree_with_serial() {
    let data = samples(2, 3, 4);
    let base = build_classifier(ConvKind::Edge, 2, 1, 2).unwrap();
    let mut serial = base.clone();
    let mut parallel = base;
    let cfg = quick(TrainConfig::classification(), 2);
    let a = train(&mut serial, &data, &data, &cfg).unwrap();
    let cfg_par = TrainConfig {
        parallel_batches: true,
        ..cfg
    };
    let b = train(&mut parallel, &data, &data, &cfg_par).unwrap();
    for (x, y) in a.history.records.iter().zip(&b.history.records) {
        assert!((x.loss - y.loss).abs() < 1e-9);
    }
}

#[test]
fn detection_training_runs_and_checkpoints_best() {
    let data = samples(2, 3, 5);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("best.ckpt");
    let mut m = build_detector(2, 0).unwrap();
    let cfg = TrainConfig {
        checkpoint: Some(ckpt.clone()),
        ..quick(TrainConfig::detection(), 3)
    };
    let out = train(&mut m, &data, &data, &cfg).unwrap();
    let (loaded, header) = Model::load(&ckpt).unwrap();
    assert_eq!(header.metadata["extra"]["epoch"], out.best_epoch);
    assert!(eval_map50(&loaded, &data).is_ok());
    let best = out.history.records.iter().map(|r| r.metric).fold(f64::MIN, f64::max);
    assert_eq!(out.best_metric, best);
    assert!(out.history.to_csv().starts_with("epoch,loss,metric,seconds\n"));
}

#[test]
fn empty_and_mismatched_inputs_are_config_errors() {
    let data = samples(2, 1, 6);
    let mut m = build_classifier(ConvKind::Gcn, 2, 1, 0).unwrap();
    let cfg = quick(TrainConfig::classification(), 1);
    assert!(train(&mut m, &[], &data, &cfg).unwrap_err().is_config());
    assert!(eval_accuracy(&m, &[]).unwrap_err().is_config());
    assert!(train(&mut m, &data, &data, &quick(TrainConfig::detection(), 1)).unwrap_err().is_config());
    let bad = TrainConfig { epochs: 0, ..cfg };
    assert!(train(&mut m, &data, &data, &bad).unwrap_err().is_config());
}

#[test]
fn divergence_is_reported() {
    let data = samples(2, 1, 7);
    let mut m = build_classifier(ConvKind::Gcn, 2, 1, 0).unwrap();
    m.params_mut().next().unwrap().value_mut().data_mut()[0] = f64::NAN;
    let err = train(&mut m, &data, &data, &quick(TrainConfig::classification(), 1)).unwrap_err();
    assert!(matches!(err, crate::Error::Divergence(_)), "{err}");
}
