//! Corpus to risk through the public API with tiny models.

use aoitraj_core::geometry::Vec2;
use aoitraj_core::predictor::{
    encode_records, filter_trajectory, train, DiModel, FeatureSet, ModeSet, ModelBundle, MtModel, Normalizer,
    TrainConfig,
};
use aoitraj_core::risk::{horizon_risk, Obstacle, RiskConfig};
use aoitraj_core::riskstats::{fit_step_models, trajectory_errors, StepErrorModel};
use aoitraj_core::rng::stream;
use aoitraj_core::scenegen::{generate_corpus, split_dataset, window_dataset, CorpusSpec, Split};
use aoitraj_core::PRED_LEN;

fn corpus() -> Split {
    let spec = CorpusSpec { straight: 5, right: 5, left: 5, ..CorpusSpec::default() };
    let eps = generate_corpus(&spec, 5).unwrap();
    split_dataset(window_dataset(&eps, 1.0), 5).unwrap()
}

fn fit(split: &Split) -> ModelBundle {
    let norm = Normalizer::fit(&split.train).unwrap();
    let f = FeatureSet::SEC;
    let tr = encode_records(&split.train, &norm, f).unwrap();
    let va = encode_records(&split.val, &norm, f).unwrap();
    let cfg = TrainConfig { batch: 16, epochs: 2, patience: 2, lr: 1e-3, seed: 5 };
    let mut di = DiModel::new(f, 8, &mut stream(5, 1));
    let mut mt = MtModel::new(f, 8, &mut stream(5, 2));
    train(&mut di, &tr, &va, &cfg).unwrap();
    train(&mut mt, &tr, &va, &cfg).unwrap();
    ModelBundle { norm, di, mt }
}

#[test]
fn pipeline_runs_and_repeats() {
    let split = corpus();
    assert_eq!((split.train_ids.len(), split.val_ids.len(), split.test_ids.len()), (9, 3, 3));
    let bundle = fit(&split);
    let preds: Vec<ModeSet> = bundle.predict_records(&split.test).unwrap();
    assert_eq!(preds.len(), split.test.len());
    for m in &preds {
        assert!((m.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.trajectories.iter().all(|t| t.len() == PRED_LEN));
        assert!(m.probs.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
    }
    assert_eq!(bundle, fit(&split));

    let mut samples = Vec::new();
    for r in &split.val {
        let t = filter_trajectory(&bundle.predict_records(std::slice::from_ref(r)).unwrap()[0]).1.clone();
        samples.extend(trajectory_errors(&t.waypoints, &r.future_points(), 0.1).unwrap());
    }
    let models = fit_step_models(&samples, PRED_LEN, 2).unwrap();
    assert_eq!(models.len(), PRED_LEN);
    assert!(models.iter().all(|m| m.s_xx > 0.0 && m.s_yy > 0.0));

    // the fitted errors of two-epoch models are too large to aim at, so the
    // risk check uses tight error models
    let models: Vec<_> = (1..=PRED_LEN).map(|k| StepErrorModel::isotropic(k, Vec2::new(0.0, 0.0), 0.04)).collect();

    let traj = filter_trajectory(&preds[0]).1.clone();
    let cfg = RiskConfig { particles: 500, ..RiskConfig::default() };
    let on_path = |p: Vec2| Obstacle { id: 1, position: p, velocity: Vec2::new(0.0, 0.0), length: 2.0, width: 2.0 };
    let hit = horizon_risk(&traj, &models, &[on_path(traj.waypoints[2])], &cfg, 3).unwrap();
    assert!(hit.p_c > 0.0 && hit.obstacle == Some(1), "{hit:?}");
    let miss = horizon_risk(&traj, &models, &[on_path(Vec2::new(0.0, 500.0))], &cfg, 3).unwrap();
    assert_eq!(miss.p_c, 0.0);
    assert_eq!(hit, horizon_risk(&traj, &models, &[on_path(traj.waypoints[2])], &cfg, 3).unwrap());
}
