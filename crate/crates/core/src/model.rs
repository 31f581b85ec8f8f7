//! Width-parameterized temporal CNN + MLP waypoint predictor.
//!
//! Stacked BEV frames go through four 3×3 stride-2 conv blocks with widths
//! (W, 2W, 4W, 4W). Ego history plus the one-hot command go through two
//! affine layers of width 2W. The two codes are concatenated and decoded by
//! two affine layers (4W, then 2·waypoints). Positions enter and leave the
//! network divided by [`POSITION_SCALE`].

use std::io::{Read, Write};

use freqsweep_tensor::{read_checkpoint, write_checkpoint, Graph, ParamId, ParamSet, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::TrajectoryPredictor;
use crate::seed::{self, SeedKey};
use crate::subsample::TrainingSample;
use crate::world::Waypoints;

/// Meters per network unit for positions and speeds.
pub const POSITION_SCALE: f64 = 10.0;

const CONV_BLOCKS: usize = 4;
const KERNEL: usize = 3;
const STRIDE: usize = 2;
const COMMAND_DIM: usize = 3;
const PREDICT_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub width: usize,
    pub image_size: usize,
    /// Input channels of the stacked frames.
    pub channels: usize,
    /// Ego-history features, excluding the command.
    pub history_dim: usize,
    pub num_waypoints: usize,
    pub seed: u64,
}

impl ModelConfig {
    fn conv_widths(&self) -> [usize; CONV_BLOCKS] {
        let w = self.width;
        [w, 2 * w, 4 * w, 4 * w]
    }

    /// Spatial extent after each conv block, or a configuration error when the
    /// image is too small for the trunk.
    pub fn trunk_extents(&self) -> Result<[usize; CONV_BLOCKS]> {
        let mut extents = [0; CONV_BLOCKS];
        let mut side = self.image_size;
        for e in &mut extents {
            if side < KERNEL {
                return Err(Error::Config(format!(
                    "image size {} is too small for {CONV_BLOCKS} stride-{STRIDE} conv blocks",
                    self.image_size
                )));
            }
            side = (side - KERNEL) / STRIDE + 1;
            *e = side;
        }
        Ok(extents)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.num_waypoints == 0 || self.channels == 0 {
            return Err(Error::Config(
                "width, channels and num_waypoints must be ≥ 1".into(),
            ));
        }
        self.trunk_extents().map(|_| ())
    }

    fn flat_dim(&self) -> Result<usize> {
        let side = self.trunk_extents()?[CONV_BLOCKS - 1];
        Ok(self.conv_widths()[CONV_BLOCKS - 1] * side * side)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct ToyPredictor {
    config: ModelConfig,
    params: ParamSet,
    convs: Vec<Layer>,
    mlp: [Layer; 2],
    head: [Layer; 2],
}

fn uniform_fan_in(rng: &mut rand_chacha::ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-bound..=bound)).collect(),
    )
    .expect("shape matches value count")
}

/// Fresh model with weights drawn uniformly from ±√(6/fan_in) and zero biases.
pub fn build_model(config: &ModelConfig) -> Result<ToyPredictor> {
    config.validate()?;
    let mut rng = SeedKey::new(config.seed).with(seed::INIT).rng();
    let mut params = ParamSet::new();
    let mut layer = |params: &mut ParamSet, name: &str, shape: &[usize], fan_in: usize| {
        let weight = params.add(format!("{name}.weight"), uniform_fan_in(&mut rng, shape, fan_in));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[shape[0]]));
        Layer { weight, bias }
    };
    let mut convs = Vec::with_capacity(CONV_BLOCKS);
    let mut c_in = config.channels;
    for (i, c_out) in config.conv_widths().into_iter().enumerate() {
        let fan_in = c_in * KERNEL * KERNEL;
        convs.push(layer(&mut params, &format!("conv{i}"), &[c_out, c_in, KERNEL, KERNEL], fan_in));
        c_in = c_out;
    }
    let hidden = 2 * config.width;
    let side_in = config.history_dim + COMMAND_DIM;
    let mlp = [
        layer(&mut params, "mlp0", &[hidden, side_in], side_in),
        layer(&mut params, "mlp1", &[hidden, hidden], hidden),
    ];
    let fused = config.flat_dim()? + hidden;
    let head_hidden = 4 * config.width;
    let out = 2 * config.num_waypoints;
    let head = [
        layer(&mut params, "head0", &[head_hidden, fused], fused),
        layer(&mut params, "head1", &[out, head_hidden], head_hidden),
    ];
    Ok(ToyPredictor {
        config: config.clone(),
        params,
        convs,
        mlp,
        head,
    })
}

/// Network-ready tensors for a minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `(B, C, S, S)`.
    pub frames: Tensor,
    /// `(B, history_dim + 3)`: scaled history then the one-hot command.
    pub side: Tensor,
    /// `(B, 2·waypoints)`, scaled.
    pub target: Tensor,
}

impl Batch {
    pub fn from_samples(samples: &[&TrainingSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::EmptyInput("empty batch".into()))?;
        let (c, s) = (first.frames.channels, first.frames.size);
        let hist = first.history.samples.len() * crate::world::HISTORY_FEATURES_PER_SAMPLE;
        let nw = first.target.len();
        let b = samples.len();
        let mut frames = Vec::with_capacity(b * c * s * s);
        let mut side = Vec::with_capacity(b * (hist + COMMAND_DIM));
        let mut target = Vec::with_capacity(b * 2 * nw);
        for sample in samples {
            if sample.frames.channels != c
                || sample.frames.size != s
                || sample.history.samples.len() * crate::world::HISTORY_FEATURES_PER_SAMPLE != hist
                || sample.target.len() != nw
            {
                return Err(Error::Shape("samples in a batch disagree in shape".into()));
            }
            frames.extend_from_slice(&sample.frames.data);
            for h in &sample.history.samples {
                side.extend_from_slice(&[
                    h.x / POSITION_SCALE,
                    h.y / POSITION_SCALE,
                    h.heading,
                    h.speed / POSITION_SCALE,
                ]);
            }
            side.extend_from_slice(&sample.command.one_hot());
            target.extend(sample.target.flat().iter().map(|v| v / POSITION_SCALE));
        }
        Ok(Self {
            frames: Tensor::new(vec![b, c, s, s], frames)?,
            side: Tensor::new(vec![b, hist + COMMAND_DIM], side)?,
            target: Tensor::new(vec![b, 2 * nw], target)?,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ToyPredictor {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let c = &self.config;
        let fs = batch.frames.shape();
        if fs.len() != 4 || fs[1] != c.channels || fs[2] != c.image_size || fs[3] != c.image_size {
            return Err(Error::Shape(format!(
                "frames {fs:?} do not match (B, {}, {}, {})",
                c.channels, c.image_size, c.image_size
            )));
        }
        let ss = batch.side.shape();
        if ss.len() != 2 || ss[0] != fs[0] || ss[1] != c.history_dim + COMMAND_DIM {
            return Err(Error::Shape(format!(
                "history input {ss:?} does not match (B, {})",
                c.history_dim + COMMAND_DIM
            )));
        }
        Ok(())
    }

    /// Record the forward pass; returns the `(B, 2·waypoints)` scaled output.
    pub fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        self.check_batch(batch)?;
        let ps = &self.params;
        let mut h = g.input(batch.frames.clone())?;
        for layer in &self.convs {
            let (w, b) = (g.param(ps, layer.weight)?, g.param(ps, layer.bias)?);
            h = g.conv2d(h, w, b, STRIDE)?;
            h = g.relu(h)?;
        }
        let visual = g.flatten(h)?;
        let mut s = g.input(batch.side.clone())?;
        for layer in &self.mlp {
            let (w, b) = (g.param(ps, layer.weight)?, g.param(ps, layer.bias)?);
            s = g.affine(s, w, b)?;
            s = g.relu(s)?;
        }
        let mut z = g.concat(&[visual, s], 1)?;
        let (w, b) = (g.param(ps, self.head[0].weight)?, g.param(ps, self.head[0].bias)?);
        z = g.affine(z, w, b)?;
        z = g.relu(z)?;
        let (w, b) = (g.param(ps, self.head[1].weight)?, g.param(ps, self.head[1].bias)?);
        Ok(g.affine(z, w, b)?)
    }

    /// Scaled MSE between the forward output and the batch target.
    pub fn loss(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let out = self.forward(g, batch)?;
        let target = g.input(batch.target.clone())?;
        Ok(g.mse_loss(out, target)?)
    }

    /// Ego-frame waypoints in meters, shape `(waypoints, 2)`.
    pub fn forward_sample(&self, sample: &TrainingSample) -> Result<Tensor> {
        let batch = Batch::from_samples(&[sample])?;
        let mut g = Graph::new();
        let out = self.forward(&mut g, &batch)?;
        let data = g.value(out).data().iter().map(|v| v * POSITION_SCALE).collect();
        Ok(Tensor::new(vec![self.config.num_waypoints, 2], data)?)
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        Ok(write_checkpoint(&self.params, out)?)
    }

    pub fn load<R: Read>(&mut self, input: R) -> Result<()> {
        Ok(self.params.load_values(read_checkpoint(input)?)?)
    }
}

impl TrajectoryPredictor for ToyPredictor {
    fn predict(&self, samples: &[&TrainingSample]) -> Result<Vec<Waypoints>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(PREDICT_CHUNK) {
            let batch = Batch::from_samples(chunk)?;
            let mut g = Graph::new();
            let y = self.forward(&mut g, &batch)?;
            for (row, sample) in g.value(y).data().chunks(2 * self.config.num_waypoints).zip(chunk) {
                let points = row
                    .chunks(2)
                    .map(|p| [p[0] * POSITION_SCALE, p[1] * POSITION_SCALE])
                    .collect();
                out.push(Waypoints::new(points, sample.target.spacing, sample.target.horizon)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(width: usize) -> ModelConfig {
        ModelConfig {
            width,
            image_size: 32,
            channels: 6,
            history_dim: 44,
            num_waypoints: 6,
            seed: 1,
        }
    }

    #[test]
    fn reference_count_at_width_16() {
        // conv: 880 + 4640 + 18496 + 36928, mlp: 1536 + 1056, head: 6208 + 780
        assert_eq!(build_model(&config(16)).unwrap().param_count(), 70_524);
    }

    #[test]
    fn count_grows_with_width() {
        let counts: Vec<usize> = (1..6)
            .map(|w| build_model(&config(w)).unwrap().param_count())
            .collect();
        assert!(counts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = build_model(&config(4)).unwrap();
        let b = build_model(&config(4)).unwrap();
        for (p, q) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(p.value(), q.value());
        }
        let w = a.params().get(a.convs[0].weight).value();
        let bound = (6.0f64 / 54.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn small_image_is_a_config_error() {
        let mut c = config(4);
        c.image_size = 30;
        assert!(matches!(build_model(&c), Err(Error::Config(_))));
        c.image_size = 31;
        assert!(build_model(&c).is_ok());
    }

    #[test]
    fn checkpoint_round_trip() {
        let a = build_model(&config(2)).unwrap();
        let mut c = config(2);
        c.seed = 9;
        let mut b = build_model(&c).unwrap();
        let mut buf = Vec::new();
        a.save(&mut buf).unwrap();
        b.load(buf.as_slice()).unwrap();
        for (p, q) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(p.value(), q.value());
        }
    }
}
