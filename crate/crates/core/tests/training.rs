use ampf_core::data::make_gaussian_openset;
use ampf_core::metrics::closed_accuracy;
use ampf_core::training::{train, train_ampf, train_ampfpp, Phase, TrainError};
use ampf_core::*;

fn small(per_class: usize, seed: u64) -> OpenSplit {
    make_gaussian_openset(
        &mut SeededRng::new(seed),
        &GaussianSpec {
            per_class,
            ..GaussianSpec::default()
        },
    )
    .unwrap()
}

fn cfg(strategy: Strategy, epochs: usize) -> TrainConfig {
    TrainConfig {
        strategy,
        max_epoch: epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn two_blobs_are_learned() {
    let spec = GaussianSpec {
        known: 2,
        unknown: 1,
        per_class: 200,
        ..GaussianSpec::default()
    };
    let split = make_gaussian_openset(&mut SeededRng::new(5), &spec).unwrap();
    let (model, _) = train(&cfg(Strategy::Mpf, 30), &split.train).unwrap();
    let acc = closed_accuracy(&model.score(&split.test_known).unwrap()).unwrap();
    assert!(acc >= 0.99, "{acc}");
}

#[test]
fn zero_margin_weight_never_moves_the_radius() {
    let mut c = cfg(Strategy::Mpf, 5);
    c.hyper.lambda = 0.0;
    let (model, log) = train(&c, &small(100, 1).train).unwrap();
    assert!(log.records().iter().all(|r| r.r == 0.0));
    assert_eq!(model.protos.radius(), 0.0);
}

#[test]
fn radius_starts_at_zero_and_first_pass_never_shrinks_it() {
    let (_, log) = train(&cfg(Strategy::Ampf, 2), &small(100, 2).train).unwrap();
    let mut prev = 0.0;
    for r in log.records().iter().take_while(|r| r.phase == Phase::Mpf) {
        assert!(r.r >= prev);
        prev = r.r;
    }
}

#[test]
fn initial_radius_is_logged_value_at_each_adversarial_entry() {
    let (_, log) = train(&cfg(Strategy::AmpfPlusPlus, 3), &small(100, 3).train).unwrap();
    let mut entries = 0;
    for w in log.records().windows(2) {
        if w[0].phase == Phase::Mpf && w[1].phase != Phase::Mpf {
            assert_eq!(w[1].r0, w[0].r);
            entries += 1;
        }
    }
    // An adversarial and a boundary segment per epoch.
    assert_eq!(entries, 6);
}

#[test]
fn disabling_boundary_phase_reproduces_ampf() {
    let data = small(100, 4).train;
    let c = cfg(Strategy::Ampf, 3);
    let (a, la) = train_ampf(&c, &data).unwrap();
    let (b, lb) = train_ampfpp(&TrainConfig { g2_phase: false, ..c }, &data).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.classifier, b.classifier);
    assert_eq!(a.protos, b.protos);
    assert_eq!(a.generator, b.generator);
}

#[test]
fn boundary_generator_loss_decreases() {
    let (_, log) = train(&cfg(Strategy::AmpfPlusPlus, 6), &small(200, 5).train).unwrap();
    let mean_loss = |epoch| {
        let v: Vec<f64> = log
            .records()
            .iter()
            .filter(|r| r.phase == Phase::G2 && r.epoch == epoch)
            .map(|r| r.gen_loss)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let first = mean_loss(0);
    for e in 4..6 {
        assert!(mean_loss(e) < first, "epoch {e}: {} vs {first}", mean_loss(e));
    }
}

#[test]
fn same_seed_same_trajectory_other_seed_differs() {
    let data = small(100, 6).train;
    let c = cfg(Strategy::AmpfPlusPlus, 2);
    let (_, a) = train(&c, &data).unwrap();
    let (_, b) = train(&c, &data).unwrap();
    let (_, d) = train(&TrainConfig { seed: 9, ..c }, &data).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    assert_ne!(a.to_csv_string(), d.to_csv_string());
}

#[test]
fn trajectory_survives_csv_round_trip() {
    let (_, log) = train(&cfg(Strategy::Ampf, 2), &small(100, 7).train).unwrap();
    let text = log.to_csv_string();
    let back = TrajectoryLog::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back.len(), log.len());
    assert_eq!(back.to_csv_string(), text);
    for (a, b) in log.records().iter().zip(back.records()) {
        assert_eq!(a.phase, b.phase);
        assert!((a.r - b.r).abs() <= 1e-11 * a.r.abs().max(1e-300));
    }
}

#[test]
fn checkpoint_round_trip_scores_identically() {
    let split = small(100, 8);
    let (model, _) = train(&cfg(Strategy::AmpfPlusPlus, 2), &split.train).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.score(&split.test()).unwrap(), model.score(&split.test()).unwrap());
}

#[test]
fn single_class_is_rejected() {
    let data = LabeledSet::new(Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap(), vec![1, 1], 1).unwrap();
    assert!(matches!(
        train(&cfg(Strategy::Mpf, 1), &data),
        Err(TrainError::Config(_))
    ));
}

#[test]
fn unknown_rows_in_training_data_are_rejected() {
    let split = small(50, 9);
    assert!(train(&cfg(Strategy::Mpf, 1), &split.test()).is_err());
}

#[test]
fn adversarial_strategies_enforce_the_negative_drive_bound() {
    let data = small(50, 10).train;
    let mut c = cfg(Strategy::Ampf, 1);
    c.hyper.lambda = 0.5;
    c.hyper.gamma = 2.0;
    assert!(train(&c, &data).is_err());
    c.strategy = Strategy::Mpf;
    assert!(train(&c, &data).is_ok());
}

#[test]
fn capped_passes_use_that_many_batches() {
    let mut c = cfg(Strategy::AmpfPlusPlus, 2);
    c.batches_per_epoch = Some(3);
    let (_, log) = train(&c, &small(200, 11).train).unwrap();
    // Per epoch: mpf, adv, mpf, g2; plus the closing mpf pass.
    assert_eq!(log.len(), 2 * 4 * 3 + 3);
}
