use freqsweep_core::model::{build_model, Batch, ModelConfig, ToyPredictor};
use freqsweep_core::raster::{NoiseConfig, RenderConfig};
use freqsweep_core::subsample::{SampleFactory, SampleSpec};
use freqsweep_core::world::{generate_scene, Command, WorldConfig};
use freqsweep_tensor::{Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference(width: usize, image_size: usize) -> ModelConfig {
    ModelConfig {
        width,
        image_size,
        channels: 6,
        history_dim: 44,
        num_waypoints: 6,
        seed: 1,
    }
}

/// Closed-form layer-size accounting of the reference architecture.
fn expected_params(c: &ModelConfig) -> usize {
    let w = c.width;
    let affine = |i: usize, o: usize| i * o + o;
    let conv = |i: usize, o: usize| o * i * 9 + o;
    let mut side = c.image_size;
    for _ in 0..4 {
        side = (side - 3) / 2 + 1;
    }
    let trunk = conv(c.channels, w) + conv(w, 2 * w) + conv(2 * w, 4 * w) + conv(4 * w, 4 * w);
    let mlp = affine(c.history_dim + 3, 2 * w) + affine(2 * w, 2 * w);
    let head = affine(4 * w * side * side + 2 * w, 4 * w) + affine(4 * w, 2 * c.num_waypoints);
    trunk + mlp + head
}

#[test]
fn parameter_counts_match_layer_accounting() {
    let mut previous = 0;
    for w in [4, 16, 48, 64] {
        for size in [32, 64] {
            let c = reference(w, size);
            assert_eq!(build_model(&c).unwrap().param_count(), expected_params(&c), "W={w} S={size}");
        }
        let n = build_model(&reference(w, 32)).unwrap().param_count();
        assert!(n > previous);
        previous = n;
    }
}

fn random_batch(c: &ModelConfig, b: usize, rng: &mut ChaCha8Rng) -> Batch {
    let mut t = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    Batch {
        frames: t(vec![b, c.channels, c.image_size, c.image_size]),
        side: t(vec![b, c.history_dim + 3]),
        target: t(vec![b, 2 * c.num_waypoints]),
    }
}

fn output(model: &ToyPredictor, batch: &Batch) -> Vec<f64> {
    let mut g = Graph::new();
    let y = model.forward(&mut g, batch).unwrap();
    g.value(y).data().to_vec()
}

#[test]
fn sample_prediction_shape_and_determinism() {
    let scene = generate_scene(3, &WorldConfig::default()).unwrap();
    let factory = SampleFactory {
        spec: SampleSpec::default(),
        render: RenderConfig::default(),
        noise: NoiseConfig::default(),
        noise_seed: 2,
    };
    let sample = factory.materialize(&scene, 4.0).unwrap();
    let model = build_model(&reference(4, 32)).unwrap();
    let a = model.forward_sample(&sample).unwrap();
    assert_eq!(a.shape(), &[6, 2]);
    assert_eq!(a, model.forward_sample(&sample).unwrap());
    assert_eq!(build_model(&reference(4, 32)).unwrap().params().iter().map(|p| p.value().clone()).collect::<Vec<_>>(),
               model.params().iter().map(|p| p.value().clone()).collect::<Vec<_>>());
}

#[test]
fn every_conv_layer_is_live() {
    let c = reference(4, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = random_batch(&c, 4, &mut rng);
    let mut model = build_model(&c).unwrap();
    let base = output(&model, &batch);
    for layer in 0..4 {
        let id = model.params().find(&format!("conv{layer}.weight")).unwrap();
        let orig = model.params().get(id).value().data().to_vec();
        for v in model.params_mut().get_mut(id).value_mut().data_mut() {
            *v += 0.05;
        }
        assert_ne!(output(&model, &batch), base, "conv{layer} has no effect");
        model.params_mut().get_mut(id).value_mut().data_mut().copy_from_slice(&orig);
    }
}

#[test]
fn command_conditioning_is_live() {
    let c = reference(4, 32);
    let model = build_model(&c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut changed = false;
    for _ in 0..10 {
        let batch = random_batch(&c, 1, &mut rng);
        let mut outs = Vec::new();
        for cmd in [Command::Left, Command::Straight, Command::Right] {
            let mut side = batch.side.clone();
            side.data_mut()[c.history_dim..].copy_from_slice(&cmd.one_hot());
            outs.push(output(&model, &Batch { side, ..batch.clone() }));
        }
        changed |= outs[0] != outs[1] || outs[1] != outs[2];
    }
    assert!(changed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn reverse_gradients_match_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = ModelConfig {
            width: 2,
            image_size: 31,
            channels: 2,
            history_dim: 4,
            num_waypoints: 2,
            seed,
        };
        let mut model = build_model(&c).unwrap();
        let batch = random_batch(&c, 2, &mut rng);
        let mut g = Graph::new();
        let loss = model.loss(&mut g, &batch).unwrap();
        let pattern = g.pattern();
        g.backward(loss, model.params_mut()).unwrap();
        let h = 1e-3;
        let ids: Vec<_> = model.params().ids().collect();
        for id in ids {
            let n = model.params().get(id).value().len();
            for i in (0..n).step_by(3) {
                let analytic = model.params().get(id).grad().data()[i];
                let orig = model.params().get(id).value().data()[i];
                let mut eval = |v: f64| {
                    model.params_mut().get_mut(id).value_mut().data_mut()[i] = v;
                    let mut g = Graph::with_pattern(pattern.clone());
                    let l = model.loss(&mut g, &batch).unwrap();
                    g.value(l).item().unwrap()
                };
                let numeric = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                model.params_mut().get_mut(id).value_mut().data_mut()[i] = orig;
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                prop_assert!(rel < 1e-4, "{}[{}]: {} vs {}", model.params().get(id).name(), i, analytic, numeric);
            }
        }
    }
}
