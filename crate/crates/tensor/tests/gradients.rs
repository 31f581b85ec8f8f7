use freqsweep_tensor::{ActivationPattern, Graph, ParamId, ParamSet, Result, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct nested-loop cross-correlation, valid padding.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Tensor {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h - kh) / stride + 1;
    let ow = (wd - kw) / stride + 1;
    let mut out = Vec::new();
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.data()[oi];
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                acc += x.get(&[ni, ci, y * stride + i, xx * stride + j]).unwrap()
                                    * w.get(&[oi, ci, i, j]).unwrap();
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::new(vec![n, o, oh, ow], out).unwrap()
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (c, o, stride) in [(1, 1, 1), (3, 4, 1), (2, 5, 2), (4, 2, 3)] {
        let x = random_tensor(&mut rng, &[2, c, 8, 8]);
        let w = random_tensor(&mut rng, &[o, c, 3, 3]);
        let b = random_tensor(&mut rng, &[o]);
        let expected = naive_conv(&x, &w, &b, stride);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.input(x).unwrap(), g.input(w).unwrap(), g.input(b).unwrap());
        let y = g.conv2d(xv, wv, bv, stride).unwrap();
        assert_eq!(g.value(y).shape(), expected.shape());
        for (a, e) in g.value(y).data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }
}

/// Central differences of `build` with respect to every parameter scalar.
///
/// The activation pattern recorded at the base point is replayed for both
/// perturbed evaluations, so a step that would cross a ReLU kink still
/// differences the function piece the analytic gradient belongs to.
fn finite_differences<F>(params: &ParamSet, build: F, h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let mut base = Graph::new();
    build(&mut base, params).unwrap();
    let pattern: ActivationPattern = base.pattern();
    let eval = |p: &ParamSet| {
        let mut g = Graph::with_pattern(pattern.clone());
        let out = build(&mut g, p).unwrap();
        g.value(out).item().unwrap()
    };
    let mut work = params.clone();
    let ids: Vec<ParamId> = params.ids().collect();
    ids.iter()
        .map(|&id| {
            (0..params.get(id).value().len())
                .map(|k| {
                    let orig = work.get(id).value().data()[k];
                    work.get_mut(id).value_mut().data_mut()[k] = orig + h;
                    let plus = eval(&work);
                    work.get_mut(id).value_mut().data_mut()[k] = orig - h;
                    let minus = eval(&work);
                    work.get_mut(id).value_mut().data_mut()[k] = orig;
                    (plus - minus) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

fn max_relative_error<F>(params: &mut ParamSet, build: F) -> f64
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let numeric = finite_differences(params, &build, 1e-3);
    params.zero_grads();
    let mut g = Graph::new();
    let loss = build(&mut g, params).unwrap();
    g.backward(loss, params).unwrap();
    let mut worst: f64 = 0.0;
    for (id, fd) in params.ids().zip(&numeric) {
        for (a, n) in params.get(id).grad().data().iter().zip(fd) {
            let scale = a.abs().max(n.abs()).max(1e-6);
            worst = worst.max((a - n).abs() / scale);
        }
    }
    worst
}

#[test]
fn mse_gradient_is_two_residual_over_count() {
    let mut params = ParamSet::new();
    let pred = params.add("pred", Tensor::from_vec(vec![0.5, -1.25, 3.0, 0.0]));
    let target = Tensor::from_vec(vec![1.0, 1.0, -2.0, 0.25]);
    let mut g = Graph::new();
    let p = g.param(&params, pred).unwrap();
    let t = g.input(target.clone()).unwrap();
    let loss = g.mse_loss(p, t).unwrap();
    g.backward(loss, &mut params).unwrap();
    let grad = params.get(pred).grad().data().to_vec();
    for ((gv, pv), tv) in grad.iter().zip(params.get(pred).value().data()).zip(target.data()) {
        assert!((gv - 2.0 * (pv - tv) / 4.0).abs() < 1e-15);
    }
    let build = |g: &mut Graph, ps: &ParamSet| {
        let p = g.param(ps, pred)?;
        let t = g.input(target.clone())?;
        g.mse_loss(p, t)
    };
    assert!(max_relative_error(&mut params, build) < 1e-6);
}

#[test]
fn repeated_backward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = ParamSet::new();
    let w = params.add("w", random_tensor(&mut rng, &[3, 2, 3, 3]));
    let b = params.add("b", random_tensor(&mut rng, &[3]));
    let x = random_tensor(&mut rng, &[2, 2, 7, 7]);
    let run = |params: &mut ParamSet| {
        params.zero_grads();
        let mut g = Graph::new();
        let xv = g.input(x.clone()).unwrap();
        let (wv, bv) = (g.param(params, w).unwrap(), g.param(params, b).unwrap());
        let y = g.conv2d(xv, wv, bv, 2).unwrap();
        let r = g.relu(y).unwrap();
        let s = g.sum(r).unwrap();
        g.backward(s, params).unwrap();
        (
            g.value(s).item().unwrap().to_bits(),
            params.get(w).grad().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(&mut params), run(&mut params));
}

#[derive(Debug, Clone, Copy)]
enum Layer {
    Conv { out: usize, stride: usize },
    Pool,
    Relu,
}

fn layer_strategy() -> impl Strategy<Value = Layer> {
    prop_oneof![
        (1usize..4, 1usize..3).prop_map(|(out, stride)| Layer::Conv { out, stride }),
        Just(Layer::Pool),
        Just(Layer::Relu),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Random conv/pool/relu trunks followed by flatten, a second branch,
    /// concat, affine and either MSE or a weighted sum.
    #[test]
    fn random_graphs_match_finite_differences(
        layers in prop::collection::vec(layer_strategy(), 1..4),
        batch in 1usize..3,
        side in 6usize..10,
        use_mse in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let x = random_tensor(&mut rng, &[batch, 2, side, side]);
        let side_input = random_tensor(&mut rng, &[batch, 3]);

        // shape bookkeeping to keep every layer valid
        let mut plan = Vec::new();
        let (mut ch, mut hw) = (2usize, side);
        for layer in layers {
            match layer {
                Layer::Conv { out, stride } if hw >= 3 => {
                    let w = params.add(format!("c{}w", plan.len()), random_tensor(&mut rng, &[out, ch, 3, 3]));
                    let b = params.add(format!("c{}b", plan.len()), random_tensor(&mut rng, &[out]));
                    plan.push((layer, Some((w, b))));
                    ch = out;
                    hw = (hw - 3) / stride + 1;
                }
                Layer::Pool if hw >= 2 => {
                    plan.push((layer, None));
                    hw /= 2;
                }
                Layer::Relu => plan.push((layer, None)),
                _ => {}
            }
        }
        let flat = ch * hw * hw;
        let side_w = params.add("sw", random_tensor(&mut rng, &[4, 3]));
        let side_b = params.add("sb", random_tensor(&mut rng, &[4]));
        let head_w = params.add("hw", random_tensor(&mut rng, &[2, flat + 4]));
        let head_b = params.add("hb", random_tensor(&mut rng, &[2]));
        let target = random_tensor(&mut rng, &[batch, 2]);

        let build = |g: &mut Graph, ps: &ParamSet| -> Result<Var> {
            let mut h = g.input(x.clone())?;
            for (layer, ids) in &plan {
                h = match (layer, ids) {
                    (Layer::Conv { stride, .. }, Some((w, b))) => {
                        let (w, b) = (g.param(ps, *w)?, g.param(ps, *b)?);
                        g.conv2d(h, w, b, *stride)?
                    }
                    (Layer::Pool, _) => g.max_pool(h, 2)?,
                    _ => g.relu(h)?,
                };
            }
            let h = g.flatten(h)?;
            let s = g.input(side_input.clone())?;
            let (sw, sb) = (g.param(ps, side_w)?, g.param(ps, side_b)?);
            let s = g.affine(s, sw, sb)?;
            let s = g.relu(s)?;
            let z = g.concat(&[h, s], 1)?;
            let (hw_, hb) = (g.param(ps, head_w)?, g.param(ps, head_b)?);
            let out = g.affine(z, hw_, hb)?;
            let t = g.input(target.clone())?;
            if use_mse {
                g.mse_loss(out, t)
            } else {
                let m = g.mul(out, t)?;
                g.sum(m)
            }
        };
        let err = max_relative_error(&mut params, build);
        prop_assert!(err < 1e-4, "max relative error {err}");
    }
}
