//! Temporal sampling of native timelines, anchor validity and frequency-induced
//! datasets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{temporal_stack, BevImage, NoiseConfig, RenderConfig};
use crate::seed::{self, SeedKey};
use crate::world::{
    ego_history, future_target, Command, EgoHistory, Role, Scene, SceneSet, Waypoints,
    HISTORY_FEATURES_PER_SAMPLE, TIME_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid {
    frequencies: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Config("frequency grid is empty".into()));
        }
        if frequencies.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!(
                "frequencies must be positive: {frequencies:?}"
            )));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "frequency grid must be strictly increasing: {frequencies:?}"
            )));
        }
        Ok(Self { frequencies })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn max(&self) -> f64 {
        *self.frequencies.last().expect("grid is non-empty")
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frequency error if any entry exceeds `native`.
    pub fn check_native(&self, native: f64) -> Result<()> {
        if self.max() > native * (1.0 + 1e-12) {
            return Err(Error::Frequency(format!(
                "grid maximum {} Hz exceeds the native {native} Hz",
                self.max()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Self {
        g.frequencies
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub scene_id: String,
    pub frequency: f64,
    pub anchors: Vec<f64>,
}

impl AnchorSet {
    pub fn for_scene(scene: &Scene, f: f64) -> Result<Self> {
        Ok(Self {
            scene_id: scene.scene_id().to_string(),
            frequency: f,
            anchors: sample_timestamps(scene.native_timestamps(), f)?,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    /// Seconds of ego history before the anchor.
    pub history_window: f64,
    /// Hz; fixed, independent of the training frequency.
    pub history_rate: f64,
    /// Seconds relative to the anchor, each ≤ 0.
    pub bev_frame_offsets: Vec<f64>,
    pub horizon: f64,
    pub spacing: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            history_window: 1.0,
            history_rate: 10.0,
            bev_frame_offsets: vec![-0.5, 0.0],
            horizon: 3.0,
            spacing: 0.5,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.history_window) || !positive(self.history_rate) {
            return Err(Error::Config(
                "history_window and history_rate must be positive".into(),
            ));
        }
        let steps = self.history_window * self.history_rate;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "history window {} s is not a whole number of {} Hz steps",
                self.history_window, self.history_rate
            )));
        }
        if !positive(self.horizon) || !positive(self.spacing) {
            return Err(Error::Config("horizon and spacing must be positive".into()));
        }
        let ratio = self.horizon / self.spacing;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "horizon {} is not a multiple of spacing {}",
                self.horizon, self.spacing
            )));
        }
        if self.bev_frame_offsets.iter().any(|o| !(*o <= 0.0 && o.is_finite())) {
            return Err(Error::Config("BEV frame offsets must be ≤ 0".into()));
        }
        if !self.bev_frame_offsets.contains(&0.0) {
            return Err(Error::Config("BEV frame offsets must include 0".into()));
        }
        Ok(())
    }

    /// Offsets must land on the native grid so every frame can be rendered.
    pub fn check_native(&self, native_frequency: f64) -> Result<()> {
        for o in &self.bev_frame_offsets {
            let k = o * native_frequency;
            if (k - k.round()).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "frame offset {o} s is off the {native_frequency} Hz grid"
                )));
            }
        }
        Ok(())
    }

    pub fn history_len(&self) -> usize {
        (self.history_window * self.history_rate).round() as usize + 1
    }

    pub fn history_dim(&self) -> usize {
        self.history_len() * HISTORY_FEATURES_PER_SAMPLE
    }

    pub fn waypoint_count(&self) -> usize {
        (self.horizon / self.spacing).round() as usize
    }

    pub fn frame_count(&self) -> usize {
        self.bev_frame_offsets.len()
    }

    fn earliest_offset(&self) -> f64 {
        self.bev_frame_offsets.iter().copied().fold(0.0, f64::min)
    }
}

/// Everything needed to turn `(scene, anchor)` into a training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFactory {
    pub spec: SampleSpec,
    pub render: RenderConfig,
    pub noise: NoiseConfig,
    /// Root of the per-sample noise streams.
    pub noise_seed: u64,
}

impl SampleFactory {
    pub fn materialize(&self, scene: &Scene, t: f64) -> Result<TrainingSample> {
        let mut rng = SeedKey::new(self.noise_seed)
            .with(seed::NOISE)
            .with_str(scene.scene_id())
            .with_f64(t)
            .rng();
        let frames = temporal_stack(scene, t, &self.spec, &self.render, &self.noise, &mut rng)?;
        Ok(TrainingSample {
            scene_id: scene.scene_id().to_string(),
            anchor_t: t,
            frames,
            history: ego_history(scene, t, &self.spec)?,
            command: scene.command_at(t, self.spec.horizon)?,
            target: future_target(scene, t, &self.spec)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub scene_id: String,
    pub anchor_t: f64,
    pub frames: BevImage,
    pub history: EgoHistory,
    pub command: Command,
    pub target: Waypoints,
}

impl TrainingSample {
    /// Canonical little-endian encoding of every field; equal bytes mean
    /// bit-identical samples.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.frames.data.len());
        let put_u64 = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        let put_f64 = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_bits().to_le_bytes());
        put_u64(&mut out, self.scene_id.len() as u64);
        out.extend_from_slice(self.scene_id.as_bytes());
        put_f64(&mut out, self.anchor_t);
        for d in [self.frames.channels, self.frames.size, self.frames.size] {
            put_u64(&mut out, d as u64);
        }
        put_f64(&mut out, self.frames.anchor_t);
        for &v in &self.frames.data {
            put_f64(&mut out, v);
        }
        put_u64(&mut out, self.history.samples.len() as u64);
        for s in &self.history.samples {
            for v in [s.relative_t, s.x, s.y, s.heading, s.speed] {
                put_f64(&mut out, v);
            }
        }
        out.push(match self.command {
            Command::Left => 0,
            Command::Straight => 1,
            Command::Right => 2,
        });
        put_f64(&mut out, self.target.spacing);
        put_f64(&mut out, self.target.horizon);
        put_u64(&mut out, self.target.points.len() as u64);
        for v in self.target.points.iter().flatten() {
            put_f64(&mut out, *v);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FrequencyDataset {
    pub frequency: f64,
    pub samples: Vec<TrainingSample>,
    pub role: Role,
}

impl FrequencyDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Inverse of the smallest native gap; unbounded for a single stamp.
fn native_rate(native: &[f64]) -> f64 {
    let gap = native
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if gap.is_finite() {
        gap.recip()
    } else {
        f64::INFINITY
    }
}

/// Anchors at frequency `f`: ideal times `t₀ + j/f` snapped to the nearest
/// native stamp (ties go to the earlier one), duplicates dropped.
pub fn sample_timestamps(native: &[f64], f: f64) -> Result<Vec<f64>> {
    if native.is_empty() {
        return Err(Error::EmptyInput("no native timestamps".into()));
    }
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Frequency(format!("frequency must be positive, got {f}")));
    }
    if native.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("native timestamps must be strictly increasing".into()));
    }
    let rate = native_rate(native);
    if f > rate * (1.0 + 1e-9) {
        return Err(Error::Frequency(format!(
            "{f} Hz exceeds the native rate {rate} Hz"
        )));
    }
    let (first, last) = (native[0], native[native.len() - 1]);
    let mut anchors: Vec<f64> = Vec::new();
    let mut lo = 0;
    for j in 0u64.. {
        let ideal = first + j as f64 / f;
        if ideal > last + TIME_TOL {
            break;
        }
        // advance to the last stamp ≤ ideal; ideal times are increasing
        while lo + 1 < native.len() && native[lo + 1] <= ideal {
            lo += 1;
        }
        let pick = if lo + 1 < native.len() {
            let (before, after) = (ideal - native[lo], native[lo + 1] - ideal);
            if after < before - TIME_TOL {
                lo + 1
            } else {
                lo
            }
        } else {
            lo
        };
        let t = native[pick];
        if anchors.last() != Some(&t) {
            anchors.push(t);
        }
    }
    Ok(anchors)
}

fn anchor_is_valid(t: f64, scene: &Scene, spec: &SampleSpec) -> bool {
    let (start, end) = (scene.start() - TIME_TOL, scene.end() + TIME_TOL);
    t - spec.history_window >= start
        && t + spec.horizon <= end
        && spec
            .bev_frame_offsets
            .iter()
            .all(|o| t + o >= start && t + o <= end)
}

/// Keep only anchors whose history, horizon and frame windows fit the scene.
pub fn filter_valid_anchors(anchors: &AnchorSet, scene: &Scene, spec: &SampleSpec) -> AnchorSet {
    debug_assert!(spec.earliest_offset() <= 0.0);
    AnchorSet {
        scene_id: anchors.scene_id.clone(),
        frequency: anchors.frequency,
        anchors: anchors
            .anchors
            .iter()
            .copied()
            .filter(|&t| anchor_is_valid(t, scene, spec))
            .collect(),
    }
}

fn valid_anchors(scene: &Scene, f: f64, spec: &SampleSpec) -> Result<Vec<f64>> {
    Ok(filter_valid_anchors(&AnchorSet::for_scene(scene, f)?, scene, spec).anchors)
}

fn build_dataset(
    scenes: &SceneSet,
    f: f64,
    factory: &SampleFactory,
    role: Role,
) -> Result<FrequencyDataset> {
    factory.spec.validate()?;
    if let Some(native) = scenes.native_frequency() {
        if f > native * (1.0 + 1e-9) {
            return Err(Error::Frequency(format!(
                "{f} Hz exceeds the native {native} Hz"
            )));
        }
    }
    let mut order: Vec<&Scene> = scenes.scenes().iter().collect();
    order.sort_by(|a, b| a.scene_id().cmp(b.scene_id()));
    let per_scene = order
        .par_iter()
        .map(|scene| {
            valid_anchors(scene, f, &factory.spec)?
                .into_iter()
                .map(|t| factory.materialize(scene, t))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<TrainingSample> = per_scene.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no valid {} anchors at {f} Hz",
            role.as_str()
        )));
    }
    Ok(FrequencyDataset {
        frequency: f,
        samples,
        role,
    })
}

/// Every valid anchor at `f` across the training scenes, ordered by
/// `(scene_id, anchor_t)`.
pub fn build_training_set(
    scenes: &SceneSet,
    f: f64,
    factory: &SampleFactory,
) -> Result<FrequencyDataset> {
    if scenes.role() != Role::Train {
        return Err(Error::Config("training set requires train scenes".into()));
    }
    build_dataset(scenes, f, factory, Role::Train)
}

/// The shared evaluation set, anchored once at the grid maximum.
pub fn build_validation_set(
    scenes: &SceneSet,
    grid: &FrequencyGrid,
    factory: &SampleFactory,
) -> Result<FrequencyDataset> {
    if scenes.role() != Role::Validation {
        return Err(Error::Config("validation set requires validation scenes".into()));
    }
    if let Some(native) = scenes.native_frequency() {
        grid.check_native(native)?;
    }
    build_dataset(scenes, grid.max(), factory, Role::Validation)
}

/// Number of valid anchors per grid frequency.
pub fn dataset_census(
    grid: &FrequencyGrid,
    scenes: &SceneSet,
    spec: &SampleSpec,
) -> Result<Vec<(f64, usize)>> {
    if let Some(native) = scenes.native_frequency() {
        grid.check_native(native)?;
    }
    grid.frequencies()
        .iter()
        .map(|&f| {
            let count = scenes
                .scenes()
                .iter()
                .map(|s| valid_anchors(s, f, spec).map(|a| a.len()))
                .sum::<Result<usize>>()?;
            Ok((f, count))
        })
        .collect()
}
