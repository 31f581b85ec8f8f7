mod common;

use freqsweep_core::subsample::{build_training_set, SampleFactory, SampleSpec};
use freqsweep_core::raster::{NoiseConfig, RenderConfig};
use freqsweep_core::world::{
    ego_history, future_target, generate_scene, generate_scene_set, scene_stats, Role, WorldConfig,
};
use proptest::prelude::*;

fn arc_config(kappa: f64, speed: f64) -> WorldConfig {
    WorldConfig {
        num_scenes: 1,
        scene_duration: 10.0,
        speed_range: (speed, speed),
        curvature_range: (kappa, kappa),
        ..WorldConfig::default()
    }
}

#[test]
fn constant_curvature_targets_follow_the_closed_form_arc() {
    let (kappa, v) = (0.05, 10.0);
    let scene = generate_scene(11, &arc_config(kappa, v)).unwrap();
    let spec = SampleSpec::default();
    for &t in &[1.0, 2.5, 4.0, 6.0] {
        let wp = future_target(&scene, t, &spec).unwrap();
        for (k, p) in wp.points.iter().enumerate() {
            let tau = (k + 1) as f64 * spec.spacing;
            let theta = kappa * v * tau;
            let (x, y) = (theta.sin() / kappa, (1.0 - theta.cos()) / kappa);
            assert!((p[0] - x).abs() < 1e-6 && (p[1] - y).abs() < 1e-6, "t={t} k={k}: {p:?} vs ({x}, {y})");
            let radius = (p[0].powi(2) + (p[1] - 20.0).powi(2)).sqrt();
            assert!((radius - 20.0).abs() < 1e-6);
        }
    }
}

#[test]
fn mean_speed_13_75_at_20_hz_moves_about_0_69_m_per_frame() {
    for kappa in [0.0, 0.01] {
        let config = WorldConfig {
            num_scenes: 4,
            native_frequency: 20.0,
            speed_range: (13.75, 13.75),
            curvature_range: (-kappa, kappa),
            ..WorldConfig::default()
        };
        let set = generate_scene_set(&config, Role::Train).unwrap();
        let stats = scene_stats(&set, 20.0).unwrap();
        assert!((stats.mean_speed - 13.75).abs() < 1e-9);
        assert!((stats.displacement_per_frame - 0.69).abs() < 0.005, "{stats:?}");
    }
}

#[test]
fn displacement_times_frequency_matches_speed_for_constant_speed() {
    let config = WorldConfig {
        num_scenes: 3,
        speed_range: (8.0, 8.0),
        ..WorldConfig::default()
    };
    let set = generate_scene_set(&config, Role::Train).unwrap();
    for f in [1.0, 2.0, 5.0, 10.0] {
        let s = scene_stats(&set, f).unwrap();
        assert!((s.displacement_per_frame * f - s.mean_speed).abs() / s.mean_speed < 0.01, "f={f}: {s:?}");
    }
}

#[test]
fn history_and_target_do_not_depend_on_training_frequency() {
    let config = WorldConfig {
        num_scenes: 3,
        ..WorldConfig::default()
    };
    let scenes = generate_scene_set(&config, Role::Train).unwrap();
    let factory = SampleFactory {
        spec: SampleSpec::default(),
        render: RenderConfig::default(),
        noise: NoiseConfig::off(),
        noise_seed: 0,
    };
    let low = build_training_set(&scenes, 2.0, &factory).unwrap();
    let high = build_training_set(&scenes, 10.0, &factory).unwrap();
    for s in &low.samples {
        let twin = high
            .samples
            .iter()
            .find(|h| h.scene_id == s.scene_id && h.anchor_t == s.anchor_t)
            .unwrap();
        assert_eq!(s.history, twin.history);
        assert_eq!(s.target, twin.target);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn targets_map_back_to_world_positions(seed in any::<u64>(), idx in 10usize..150) {
        let scene = generate_scene(seed, &WorldConfig::default()).unwrap();
        let spec = SampleSpec::default();
        let t = scene.native_timestamps()[idx];
        let anchor = scene.pose_at(t).unwrap();
        let wp = future_target(&scene, t, &spec).unwrap();
        for (k, p) in wp.points.iter().enumerate() {
            let truth = scene.pose_at(t + (k + 1) as f64 * spec.spacing).unwrap();
            let (x, y) = anchor.to_world(p[0], p[1]);
            prop_assert!((x - truth.x).abs() < 1e-9 && (y - truth.y).abs() < 1e-9);
        }
        let hist = ego_history(&scene, t, &spec).unwrap();
        prop_assert_eq!(hist.samples.len(), spec.history_len());
        prop_assert_eq!(hist.samples.last().unwrap().relative_t, 0.0);
        prop_assert!(hist.samples.windows(2).all(|w| w[1].relative_t > w[0].relative_t));
    }

    #[test]
    fn generation_is_a_pure_function_of_seed_and_config(seed in any::<u64>()) {
        let config = WorldConfig { scene_duration: 6.0, ..WorldConfig::default() };
        let a = generate_scene(seed, &config).unwrap();
        let b = generate_scene(seed, &config).unwrap();
        prop_assert_eq!(&a, &b);
        let (lo, hi) = config.speed_range;
        prop_assert!(a.ego().iter().all(|p| p.speed >= lo - 1e-9 && p.speed <= hi + 1e-9));
        prop_assert!(a.native_timestamps().windows(2).all(|w| ((w[1] - w[0]) - 0.1).abs() < 1e-9));
    }
}
