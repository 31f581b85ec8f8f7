//! Ego-centric BEV occupancy rasters and input-only noise.
//!
//! Pixel `(row, col)` covers the ego-frame point
//! `x = (anchor_row − row)·mpp`, `y = (anchor_col − col)·mpp`, so forward is up
//! and left is left.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subsample::SampleSpec;
use crate::world::{Pose, Scene, TrajectoryPoint};

/// Vehicle footprint used for the ego and every agent, meters.
pub const FOOTPRINT_LENGTH: f64 = 4.5;
pub const FOOTPRINT_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Map,
    Agents,
    Ego,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub image_size: usize,
    pub meters_per_pixel: f64,
    pub channels: Vec<Channel>,
    /// `(row, col)` of the ego position.
    pub ego_anchor_pixel: (usize, usize),
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            meters_per_pixel: 1.0,
            channels: vec![Channel::Map, Channel::Agents, Channel::Ego],
            ego_anchor_pixel: (24, 16),
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        if !(self.meters_per_pixel > 0.0 && self.meters_per_pixel.is_finite()) {
            return Err(Error::Config("meters_per_pixel must be positive".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("at least one render channel is required".into()));
        }
        let (r, c) = self.ego_anchor_pixel;
        if r >= self.image_size || c >= self.image_size {
            return Err(Error::Config(format!(
                "ego anchor pixel {:?} outside a {} px image",
                self.ego_anchor_pixel, self.image_size
            )));
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of the additive per-pixel Gaussian.
    pub background_sigma: f64,
    /// Bound of the uniform integer translation, pixels.
    pub jitter_max: u32,
    pub enabled: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            background_sigma: 0.5,
            jitter_max: 2,
            enabled: true,
        }
    }
}

impl NoiseConfig {
    pub fn off() -> Self {
        Self {
            background_sigma: 0.0,
            jitter_max: 0,
            enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_sigma >= 0.0 && self.background_sigma.is_finite()) {
            return Err(Error::Config("background_sigma must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// `channels × size × size`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BevImage {
    pub data: Vec<f64>,
    pub channels: usize,
    pub size: usize,
    pub anchor_t: f64,
}

impl BevImage {
    pub fn zeros(channels: usize, size: usize, anchor_t: f64) -> Self {
        Self {
            data: vec![0.0; channels * size * size],
            channels,
            size,
            anchor_t,
        }
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.size + row) * self.size + col]
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.data[channel * n..(channel + 1) * n]
    }

    fn set(&mut self, channel: usize, row: i64, col: i64) {
        let s = self.size as i64;
        if (0..s).contains(&row) && (0..s).contains(&col) {
            let i = (channel * self.size + row as usize) * self.size + col as usize;
            self.data[i] = 1.0;
        }
    }

    /// Plain PGM (`P2`) of one channel, values clamped to [0, 1] and scaled
    /// to 0..=255.
    pub fn write_pgm<W: Write>(&self, channel: usize, mut out: W) -> std::io::Result<()> {
        writeln!(out, "P2\n{} {}\n255", self.size, self.size)?;
        for row in self.plane(channel).chunks(self.size) {
            let line: Vec<String> = row
                .iter()
                .map(|v| ((v.clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

struct PixelFrame<'a> {
    pose: Pose,
    config: &'a RenderConfig,
}

impl PixelFrame<'_> {
    /// Fractional `(row, col)` of a world point.
    fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let (lx, ly) = self.pose.to_local(x, y);
        let mpp = self.config.meters_per_pixel;
        let (ar, ac) = self.config.ego_anchor_pixel;
        (ar as f64 - lx / mpp, ac as f64 - ly / mpp)
    }

    /// Ego-frame point at a pixel center.
    fn to_local(&self, row: i64, col: i64) -> (f64, f64) {
        let mpp = self.config.meters_per_pixel;
        let (ar, ac) = self.config.ego_anchor_pixel;
        ((ar as f64 - row as f64) * mpp, (ac as f64 - col as f64) * mpp)
    }

    fn draw_segment(&self, image: &mut BevImage, channel: usize, a: [f64; 2], b: [f64; 2]) {
        let (r0, c0) = self.to_pixel(a[0], a[1]);
        let (r1, c1) = self.to_pixel(b[0], b[1]);
        let s = image.size as f64;
        if (r0 < -1.0 && r1 < -1.0)
            || (r0 > s && r1 > s)
            || (c0 < -1.0 && c1 < -1.0)
            || (c0 > s && c1 > s)
        {
            return;
        }
        let steps = ((r1 - r0).hypot(c1 - c0) / 0.5).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let u = k as f64 / steps as f64;
            let r = (r0 + u * (r1 - r0)).round() as i64;
            let c = (c0 + u * (c1 - c0)).round() as i64;
            image.set(channel, r, c);
        }
    }

    fn draw_footprint(&self, image: &mut BevImage, channel: usize, p: &TrajectoryPoint) {
        let (cr, cc) = self.to_pixel(p.x, p.y);
        let mpp = self.config.meters_per_pixel;
        let reach = (0.5 * FOOTPRINT_LENGTH.hypot(FOOTPRINT_WIDTH) / mpp).ceil() as i64 + 1;
        let (r_mid, c_mid) = (cr.round() as i64, cc.round() as i64);
        let s = image.size as i64;
        if r_mid + reach < 0 || r_mid - reach >= s || c_mid + reach < 0 || c_mid - reach >= s {
            return;
        }
        let (cx, cy) = self.pose.to_local(p.x, p.y);
        let (sin, cos) = (p.heading - self.pose.heading).sin_cos();
        for row in r_mid - reach..=r_mid + reach {
            for col in c_mid - reach..=c_mid + reach {
                let (lx, ly) = self.to_local(row, col);
                let (dx, dy) = (lx - cx, ly - cy);
                let along = cos * dx + sin * dy;
                let across = -sin * dx + cos * dy;
                if along.abs() <= 0.5 * FOOTPRINT_LENGTH + 1e-9
                    && across.abs() <= 0.5 * FOOTPRINT_WIDTH + 1e-9
                {
                    image.set(channel, row, col);
                }
            }
        }
        // a footprint smaller than a pixel still marks its center
        image.set(channel, r_mid, c_mid);
    }
}

/// Scene content at native index `content`, drawn in the ego frame `pose`.
fn render(scene: &Scene, content: usize, pose: Pose, anchor_t: f64, config: &RenderConfig) -> BevImage {
    let mut image = BevImage::zeros(config.channel_count(), config.image_size, anchor_t);
    let frame = PixelFrame { pose, config };
    let t = scene.native_timestamps()[content];
    for (ch, channel) in config.channels.iter().enumerate() {
        match channel {
            Channel::Map => {
                for line in scene.map_polylines() {
                    for w in line.windows(2) {
                        frame.draw_segment(&mut image, ch, w[0], w[1]);
                    }
                    if line.len() == 1 {
                        frame.draw_segment(&mut image, ch, line[0], line[0]);
                    }
                }
            }
            Channel::Agents => {
                for agent in scene.agents_at(t) {
                    frame.draw_footprint(&mut image, ch, &agent);
                }
            }
            Channel::Ego => frame.draw_footprint(&mut image, ch, &scene.ego()[content]),
        }
    }
    image
}

fn native_index(scene: &Scene, t: f64) -> Result<usize> {
    scene.index_of(t).ok_or_else(|| {
        Error::Anchor(format!(
            "{t} is not a native timestamp of scene {}",
            scene.scene_id()
        ))
    })
}

/// Hard 0/1 occupancy raster of the scene at native time `t`, heading up.
pub fn rasterize(scene: &Scene, t: f64, config: &RenderConfig) -> Result<BevImage> {
    config.validate()?;
    let i = native_index(scene, t)?;
    let pose = Pose::from(&scene.ego()[i]);
    Ok(render(scene, i, pose, scene.native_timestamps()[i], config))
}

/// Translate by `(d_row, d_col)` with zero fill, then add `N(0, σ²)` per pixel.
fn corrupt(image: &BevImage, shift: (i64, i64), sigma: f64, rng: &mut ChaCha8Rng) -> BevImage {
    let mut out = BevImage::zeros(image.channels, image.size, image.anchor_t);
    let s = image.size as i64;
    for ch in 0..image.channels {
        for row in 0..s {
            let src_r = row - shift.0;
            if !(0..s).contains(&src_r) {
                continue;
            }
            for col in 0..s {
                let src_c = col - shift.1;
                if (0..s).contains(&src_c) {
                    let dst = (ch * image.size + row as usize) * image.size + col as usize;
                    out.data[dst] = image.get(ch, src_r as usize, src_c as usize);
                }
            }
        }
    }
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        for v in &mut out.data {
            *v += normal.sample(rng);
        }
    }
    out
}

fn draw_shift(noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> (i64, i64) {
    let j = noise.jitter_max as i64;
    if j == 0 {
        (0, 0)
    } else {
        (rng.gen_range(-j..=j), rng.gen_range(-j..=j))
    }
}

/// Global integer jitter plus per-pixel Gaussian background noise.
pub fn add_noise(image: &BevImage, noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> BevImage {
    if !noise.enabled {
        return image.clone();
    }
    let shift = draw_shift(noise, rng);
    corrupt(image, shift, noise.background_sigma, rng)
}

/// One rendered and noised frame per offset, stacked along channels.
///
/// Every frame is drawn in the ego frame at `t` and shares one jitter draw.
pub fn temporal_stack(
    scene: &Scene,
    t: f64,
    spec: &SampleSpec,
    render_config: &RenderConfig,
    noise: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BevImage> {
    render_config.validate()?;
    let anchor = native_index(scene, t)?;
    let pose = Pose::from(&scene.ego()[anchor]);
    let shift = if noise.enabled {
        draw_shift(noise, rng)
    } else {
        (0, 0)
    };
    let per_frame = render_config.channel_count();
    let size = render_config.image_size;
    let mut stack = BevImage::zeros(per_frame * spec.bev_frame_offsets.len(), size, t);
    for (k, offset) in spec.bev_frame_offsets.iter().enumerate() {
        let when = t + offset;
        if !scene.contains_time(when) {
            return Err(Error::Validity(format!(
                "frame at {when} s outside scene {}",
                scene.scene_id()
            )));
        }
        let content = native_index(scene, when)?;
        let mut frame = render(scene, content, pose, t, render_config);
        if noise.enabled {
            frame = corrupt(&frame, shift, noise.background_sigma, rng);
        }
        let n = frame.data.len();
        stack.data[k * n..(k + 1) * n].copy_from_slice(&frame.data);
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    use crate::world::{generate_scene, WorldConfig};

    fn empty_world(speed: f64) -> WorldConfig {
        WorldConfig {
            num_scenes: 1,
            scene_duration: 10.0,
            native_frequency: 10.0,
            speed_range: (speed, speed),
            curvature_range: (0.0, 0.0),
            num_agents_range: (0, 0),
            map_density: 0,
            segment_duration_range: (2.0, 5.0),
            seed: 3,
        }
    }

    fn nonzero(plane: &[f64]) -> usize {
        plane.iter().filter(|v| **v != 0.0).count()
    }

    #[test]
    fn empty_scene_marks_only_ego() {
        let scene = generate_scene(4, &empty_world(10.0)).unwrap();
        let config = RenderConfig::default();
        let img = rasterize(&scene, 2.0, &config).unwrap();
        assert_eq!(nonzero(img.plane(0)), 0);
        assert_eq!(nonzero(img.plane(1)), 0);
        assert!(nonzero(img.plane(2)) > 0);
        assert_eq!(img.get(2, 24, 16), 1.0);
        // 4.5 × 2 m at 1 m/px: rows 22..=26, cols 15..=17
        assert_eq!(nonzero(img.plane(2)), 15);
    }

    #[test]
    fn off_grid_anchor_is_rejected() {
        let scene = generate_scene(4, &empty_world(10.0)).unwrap();
        assert!(matches!(
            rasterize(&scene, 2.05, &RenderConfig::default()),
            Err(Error::Anchor(_))
        ));
    }

    #[test]
    fn identity_noise() {
        let scene = generate_scene(4, &empty_world(10.0)).unwrap();
        let img = rasterize(&scene, 2.0, &RenderConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = NoiseConfig {
            background_sigma: 0.0,
            jitter_max: 0,
            enabled: true,
        };
        assert_eq!(add_noise(&img, &zero, &mut rng), img);
        assert_eq!(add_noise(&img, &NoiseConfig::default().clone_off(), &mut rng), img);
    }

    #[test]
    fn jitter_moves_content_by_whole_pixels() {
        let scene = generate_scene(4, &empty_world(10.0)).unwrap();
        let img = rasterize(&scene, 2.0, &RenderConfig::default()).unwrap();
        let noise = NoiseConfig {
            background_sigma: 0.0,
            jitter_max: 3,
            enabled: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = add_noise(&img, &noise, &mut rng);
        assert_eq!(nonzero(out.plane(2)), nonzero(img.plane(2)));
    }

    #[test]
    fn stack_shape_and_stationary_frames() {
        let scene = generate_scene(4, &empty_world(0.0)).unwrap();
        let spec = SampleSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stack = temporal_stack(
            &scene,
            2.0,
            &spec,
            &RenderConfig::default(),
            &NoiseConfig::off(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(stack.channels, 6);
        assert_eq!(stack.data[..3 * 1024], stack.data[3 * 1024..]);
        assert!(matches!(
            temporal_stack(&scene, 0.2, &spec, &RenderConfig::default(), &NoiseConfig::off(), &mut rng),
            Err(Error::Validity(_))
        ));
    }

    #[test]
    fn pgm_dump_has_header_and_rows() {
        let img = BevImage::zeros(1, 4, 0.0);
        let mut buf = Vec::new();
        img.write_pgm(0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("P2\n4 4\n255\n"));
        assert_eq!(text.lines().count(), 3 + 4);
    }

    impl NoiseConfig {
        fn clone_off(&self) -> Self {
            Self {
                enabled: false,
                ..*self
            }
        }
    }
}
