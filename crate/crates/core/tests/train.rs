use freqsweep_core::eval::{evaluate, ConstantVelocity};
use freqsweep_core::model::{build_model, ModelConfig};
use freqsweep_core::raster::{NoiseConfig, RenderConfig};
use freqsweep_core::subsample::{
    build_training_set, build_validation_set, FrequencyDataset, FrequencyGrid, SampleFactory, SampleSpec,
};
use freqsweep_core::train::{run_matched_pair, steps_for, train, OptimizerChoice, PairSetup, TrainConfig};
use freqsweep_core::world::{generate_scene_set, Role, SceneSet, WorldConfig};
use freqsweep_core::Error;

fn factory() -> SampleFactory {
    SampleFactory {
        spec: SampleSpec::default(),
        render: RenderConfig::default(),
        noise: NoiseConfig::off(),
        noise_seed: 0,
    }
}

fn straight_world(n: usize) -> WorldConfig {
    WorldConfig {
        num_scenes: n,
        scene_duration: 12.0,
        curvature_range: (0.0, 0.0),
        ..WorldConfig::default()
    }
}

fn data(world: &WorldConfig, f: f64) -> (SceneSet, FrequencyDataset) {
    let scenes = generate_scene_set(world, Role::Train).unwrap();
    let set = build_training_set(&scenes, f, &factory()).unwrap();
    (scenes, set)
}

fn model_config(seed: u64) -> ModelConfig {
    ModelConfig {
        width: 4,
        image_size: 32,
        channels: 6,
        history_dim: 44,
        num_waypoints: 6,
        seed,
    }
}

#[test]
fn one_epoch_with_an_oversized_batch_is_one_step() {
    let (_, set) = data(&straight_world(2), 2.0);
    let mut model = build_model(&model_config(1)).unwrap();
    let config = TrainConfig {
        epochs: 1,
        batch_size: set.len() + 5,
        ..TrainConfig::default()
    };
    assert_eq!(train(&mut model, &set, &config).unwrap().total_steps, 1);
}

#[test]
fn runs_are_reproducible_and_count_steps() {
    let (_, set) = data(&straight_world(3), 5.0);
    let config = TrainConfig {
        epochs: 2,
        batch_size: 16,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut a = build_model(&model_config(3)).unwrap();
    let mut b = build_model(&model_config(3)).unwrap();
    let ra = train(&mut a, &set, &config).unwrap();
    let rb = train(&mut b, &set, &config).unwrap();
    assert_eq!(ra.loss_curve, rb.loss_curve);
    assert_eq!(ra.total_steps, steps_for(set.len(), 16, 2));
    for (p, q) in a.params().iter().zip(b.params().iter()) {
        assert_eq!(p.value(), q.value());
    }
    let other = TrainConfig { seed: 10, ..config };
    let mut c = build_model(&model_config(3)).unwrap();
    assert_ne!(train(&mut c, &set, &other).unwrap().loss_curve, ra.loss_curve);
}

#[test]
fn straight_line_training_beats_constant_velocity() {
    let world = WorldConfig {
        scene_duration: 20.0,
        seed: 31,
        ..straight_world(100)
    };
    let (_, set) = data(&world, 10.0);
    let val_scenes = generate_scene_set(&WorldConfig { num_scenes: 10, ..world }, Role::Validation).unwrap();
    let val = build_validation_set(&val_scenes, &FrequencyGrid::new(vec![10.0]).unwrap(), &factory()).unwrap();
    let mut model = build_model(&model_config(1)).unwrap();
    let config = TrainConfig {
        epochs: 3,
        learning_rate: 2e-3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let record = train(&mut model, &set, &config).unwrap();
    assert!(record.loss_curve.last().unwrap() < &record.loss_curve[0]);
    let trained = evaluate(&model, &val).unwrap();
    let baseline = evaluate(&ConstantVelocity, &val).unwrap();
    assert!(trained.ade < baseline.ade, "{trained:?} vs {baseline:?}");
}

#[test]
fn exploding_updates_surface_as_divergence() {
    let (_, set) = data(&straight_world(2), 5.0);
    let mut model = build_model(&model_config(2)).unwrap();
    let config = TrainConfig {
        epochs: 50,
        learning_rate: 1e12,
        optimizer: OptimizerChoice::Sgd,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&mut model, &set, &config), Err(Error::Divergence { .. })));
}

#[test]
fn matched_pair_equalizes_volume() {
    let world = straight_world(3);
    let scenes = generate_scene_set(&world, Role::Train).unwrap();
    let val_scenes = generate_scene_set(&WorldConfig { num_scenes: 2, ..world }, Role::Validation).unwrap();
    let f = factory();
    let val = build_validation_set(&val_scenes, &FrequencyGrid::new(vec![5.0, 10.0]).unwrap(), &f).unwrap();
    let mc = model_config(4);
    let tc = TrainConfig::default();
    let setup = PairSetup {
        train_scenes: &scenes,
        validation: &val,
        factory: &f,
        model: &mc,
        train: &tc,
    };
    let pair = run_matched_pair(&setup, 5.0, 10.0, 2).unwrap();
    assert_eq!((pair.low.epochs, pair.high.epochs), (4, 2));
    let volume = |fq: f64, ep: usize| fq * ep as f64;
    assert!((volume(5.0, pair.low.epochs) - volume(10.0, 2)).abs() <= 5.0);
    let delta = (pair.low.metrics.ade - pair.high.metrics.ade) / pair.high.metrics.ade * 100.0;
    assert!((pair.delta_ade_percent - delta).abs() < 1e-12);
    assert!(run_matched_pair(&setup, 10.0, 5.0, 2).is_err());
}
