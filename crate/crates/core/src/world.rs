//! Synthetic driving scenes and per-anchor ego quantities.
//!
//! The ego follows piecewise constant-curvature arcs with a linear speed ramp
//! inside each segment, evaluated in closed form at every native timestamp.
//! Agents move at constant velocity over part of the scene. The first two map
//! polylines are road edges offset from the ego path; the rest are straight or
//! arc-shaped clutter nearby.
//!
//! Ego frame: origin at the anchor pose, x forward, y to the left.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, SeedKey};
use crate::subsample::{sample_timestamps, SampleSpec};

/// Tolerance for every timestamp comparison.
pub const TIME_TOL: f64 = 1e-9;

/// Net heading change over the horizon that turns a command into left/right.
pub const TURN_THRESHOLD_DEG: f64 = 15.0;

/// Road-edge offset from the ego path.
pub const ROAD_HALF_WIDTH: f64 = 3.5;

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

/// Position, heading and speed at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl Pose {
    /// World point expressed in this pose's ego frame.
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let (dx, dy) = (x - self.x, y - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn to_world(&self, lx: f64, ly: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.x + c * lx - s * ly, self.y + s * lx + c * ly)
    }
}

impl From<&TrajectoryPoint> for Pose {
    fn from(p: &TrajectoryPoint) -> Self {
        Pose {
            x: p.x,
            y: p.y,
            heading: p.heading,
            speed: p.speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Left,
    Straight,
    Right,
}

impl Command {
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Command::Left => [1.0, 0.0, 0.0],
            Command::Straight => [0.0, 1.0, 0.0],
            Command::Right => [0.0, 0.0, 1.0],
        }
    }

    pub fn from_heading_change(delta: f64) -> Self {
        let threshold = TURN_THRESHOLD_DEG.to_radians();
        if delta > threshold {
            Command::Left
        } else if delta < -threshold {
            Command::Right
        } else {
            Command::Straight
        }
    }
}

pub type Polyline = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    scene_id: String,
    native_frequency: f64,
    native_timestamps: Vec<f64>,
    ego: Vec<TrajectoryPoint>,
    agents: Vec<Vec<TrajectoryPoint>>,
    map_polylines: Vec<Polyline>,
}

impl Scene {
    /// Assemble a scene, checking the timeline and ego invariants.
    pub fn new(
        scene_id: impl Into<String>,
        native_frequency: f64,
        native_timestamps: Vec<f64>,
        ego: Vec<TrajectoryPoint>,
        agents: Vec<Vec<TrajectoryPoint>>,
        map_polylines: Vec<Polyline>,
    ) -> Result<Self> {
        if !(native_frequency > 0.0 && native_frequency.is_finite()) {
            return Err(Error::Config(format!(
                "native frequency must be positive, got {native_frequency}"
            )));
        }
        if native_timestamps.is_empty() {
            return Err(Error::EmptyInput("scene has no timestamps".into()));
        }
        let period = 1.0 / native_frequency;
        for w in native_timestamps.windows(2) {
            if !(w[1] > w[0]) || ((w[1] - w[0]) - period).abs() > TIME_TOL {
                return Err(Error::Config(format!(
                    "timestamps {} -> {} break the {native_frequency} Hz grid",
                    w[0], w[1]
                )));
            }
        }
        if ego.len() != native_timestamps.len() {
            return Err(Error::Config(format!(
                "{} ego states for {} timestamps",
                ego.len(),
                native_timestamps.len()
            )));
        }
        for p in ego.iter().chain(agents.iter().flatten()) {
            let ok = p.speed >= 0.0
                && (-PI..PI).contains(&p.heading)
                && p.t.is_finite()
                && p.x.is_finite()
                && p.y.is_finite();
            if !ok {
                return Err(Error::Config(format!("invalid trajectory point {p:?}")));
            }
        }
        Ok(Self {
            scene_id: scene_id.into(),
            native_frequency,
            native_timestamps,
            ego,
            agents,
            map_polylines,
        })
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub(crate) fn set_scene_id(&mut self, id: String) {
        self.scene_id = id;
    }

    pub fn native_frequency(&self) -> f64 {
        self.native_frequency
    }

    pub fn native_timestamps(&self) -> &[f64] {
        &self.native_timestamps
    }

    pub fn ego(&self) -> &[TrajectoryPoint] {
        &self.ego
    }

    pub fn agents(&self) -> &[Vec<TrajectoryPoint>] {
        &self.agents
    }

    pub fn map_polylines(&self) -> &[Polyline] {
        &self.map_polylines
    }

    pub fn start(&self) -> f64 {
        self.native_timestamps[0]
    }

    pub fn end(&self) -> f64 {
        *self.native_timestamps.last().expect("non-empty timeline")
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    /// Index of `t` on the native grid, if it is one of the timestamps.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let approx = ((t - self.start()) * self.native_frequency).round();
        if approx < 0.0 || approx as usize >= self.native_timestamps.len() {
            return None;
        }
        let i = approx as usize;
        ((self.native_timestamps[i] - t).abs() <= TIME_TOL).then_some(i)
    }

    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.start() - TIME_TOL && t <= self.end() + TIME_TOL
    }

    /// Ego pose at any time inside the span, interpolating linearly between
    /// native samples (heading along the shorter arc).
    pub fn pose_at(&self, t: f64) -> Result<Pose> {
        if !self.contains_time(t) {
            return Err(Error::Validity(format!(
                "time {t} outside scene span [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        if let Some(i) = self.index_of(t) {
            return Ok(Pose::from(&self.ego[i]));
        }
        let last = self.native_timestamps.len() - 1;
        let pos = ((t - self.start()) * self.native_frequency).clamp(0.0, last as f64);
        let i = (pos.floor() as usize).min(last.saturating_sub(1));
        let (a, b) = (&self.ego[i], &self.ego[i + 1]);
        let u = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        Ok(Pose {
            x: a.x + u * (b.x - a.x),
            y: a.y + u * (b.y - a.y),
            heading: wrap_angle(a.heading + u * wrap_angle(b.heading - a.heading)),
            speed: a.speed + u * (b.speed - a.speed),
        })
    }

    /// Agent states at native time `t` (only agents active at `t`).
    pub fn agents_at(&self, t: f64) -> Vec<TrajectoryPoint> {
        self.agents
            .iter()
            .filter_map(|track| track.iter().find(|p| (p.t - t).abs() <= TIME_TOL).copied())
            .collect()
    }

    /// Navigation command from the net heading change over `[t, t + horizon]`.
    pub fn command_at(&self, t: f64, horizon: f64) -> Result<Command> {
        if t + horizon > self.end() + TIME_TOL {
            return Err(Error::Validity(format!(
                "command horizon {horizon} s from {t} exits the scene"
            )));
        }
        let now = self.pose_at(t)?;
        let later = self.pose_at(t + horizon)?;
        Ok(Command::from_heading_change(wrap_angle(later.heading - now.heading)))
    }

    /// Plain-text dump, one record per line:
    /// `ego t x y heading speed`, `agent k t x y heading speed`, `map k x y`.
    pub fn write_record<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# scene {} native_hz {}", self.scene_id, self.native_frequency)?;
        for p in &self.ego {
            writeln!(out, "ego {} {} {} {} {}", p.t, p.x, p.y, p.heading, p.speed)?;
        }
        for (k, track) in self.agents.iter().enumerate() {
            for p in track {
                writeln!(out, "agent {k} {} {} {} {} {}", p.t, p.x, p.y, p.heading, p.speed)?;
            }
        }
        for (k, line) in self.map_polylines.iter().enumerate() {
            for [x, y] in line {
                writeln!(out, "map {k} {x} {y}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneSet {
    scenes: Vec<Scene>,
    role: Role,
}

impl SceneSet {
    pub fn new(scenes: Vec<Scene>, role: Role) -> Result<Self> {
        let mut ids: Vec<&str> = scenes.iter().map(|s| s.scene_id()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate scene ids".into()));
        }
        if let Some(first) = scenes.first() {
            let f = first.native_frequency();
            if scenes.iter().any(|s| s.native_frequency() != f) {
                return Err(Error::Config("scenes disagree on native frequency".into()));
            }
        }
        Ok(Self { scenes, role })
    }

    pub fn scenes(&self) -> &[Scene] {
        &self.scenes
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn native_frequency(&self) -> Option<f64> {
        self.scenes.first().map(Scene::native_frequency)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub num_scenes: usize,
    /// Seconds.
    pub scene_duration: f64,
    /// Hz.
    pub native_frequency: f64,
    /// m/s, inclusive.
    pub speed_range: (f64, f64),
    /// 1/m, inclusive; positive curves to the left.
    pub curvature_range: (f64, f64),
    pub num_agents_range: (usize, usize),
    /// Map polylines per scene.
    pub map_density: usize,
    /// Duration of one constant-curvature segment, seconds.
    #[serde(default = "default_segment_duration")]
    pub segment_duration_range: (f64, f64),
    pub seed: u64,
}

fn default_segment_duration() -> (f64, f64) {
    (2.0, 5.0)
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_scenes: 64,
            scene_duration: 20.0,
            native_frequency: 10.0,
            speed_range: (4.0, 16.0),
            curvature_range: (-0.03, 0.03),
            num_agents_range: (2, 6),
            map_density: 6,
            segment_duration_range: default_segment_duration(),
            seed: 2024,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(self.native_frequency > 0.0 && self.native_frequency.is_finite()) {
            return Err(Error::Config(format!(
                "native_frequency must be positive, got {}",
                self.native_frequency
            )));
        }
        if !(self.scene_duration > 0.0 && self.scene_duration.is_finite()) {
            return Err(Error::Config("scene_duration must be positive".into()));
        }
        if !range_ok(self.speed_range) || self.speed_range.0 < 0.0 {
            return Err(Error::Config(format!("bad speed_range {:?}", self.speed_range)));
        }
        if !range_ok(self.curvature_range) {
            return Err(Error::Config(format!(
                "bad curvature_range {:?}",
                self.curvature_range
            )));
        }
        if self.num_agents_range.0 > self.num_agents_range.1 {
            return Err(Error::Config(format!(
                "bad num_agents_range {:?}",
                self.num_agents_range
            )));
        }
        if !range_ok(self.segment_duration_range) || self.segment_duration_range.0 <= 0.0 {
            return Err(Error::Config(format!(
                "bad segment_duration_range {:?}",
                self.segment_duration_range
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Position after arc length `s` from `(x0, y0, heading0)` on a circle of
/// curvature `kappa` (a straight line when `kappa` is zero).
fn advance(x0: f64, y0: f64, heading0: f64, kappa: f64, s: f64) -> (f64, f64, f64) {
    let heading = heading0 + kappa * s;
    if kappa.abs() < 1e-12 {
        (x0 + s * heading0.cos(), y0 + s * heading0.sin(), heading)
    } else {
        (
            x0 + (heading.sin() - heading0.sin()) / kappa,
            y0 - (heading.cos() - heading0.cos()) / kappa,
            heading,
        )
    }
}

/// Build one scene; a pure function of `(seed, config)`.
pub fn generate_scene(seed: u64, config: &WorldConfig) -> Result<Scene> {
    config.validate()?;
    let mut rng = SeedKey::new(seed).with(seed::SCENE).rng();
    let f = config.native_frequency;
    let frames = (config.scene_duration * f + TIME_TOL).floor() as usize + 1;
    let timestamps: Vec<f64> = (0..frames).map(|i| i as f64 / f).collect();

    // ego: closed-form arcs, speed ramps linearly to a per-segment target
    let mut ego = Vec::with_capacity(frames);
    let mut heading_unwrapped = Vec::with_capacity(frames);
    let (mut x, mut y) = (0.0, 0.0);
    let mut heading = rng.gen_range(-PI..PI);
    let mut speed = uniform(&mut rng, config.speed_range);
    ego.push(TrajectoryPoint {
        t: 0.0,
        x,
        y,
        heading: wrap_angle(heading),
        speed,
    });
    heading_unwrapped.push(heading);
    let mut frame = 0;
    while frame + 1 < frames {
        let seg_seconds = uniform(&mut rng, config.segment_duration_range);
        let seg_frames = ((seg_seconds * f).round() as usize).max(1);
        let end = (frame + seg_frames).min(frames - 1);
        let kappa = uniform(&mut rng, config.curvature_range);
        let target = uniform(&mut rng, config.speed_range);
        let span = (end - frame) as f64 / f;
        let accel = (target - speed) / span;
        let (x0, y0, h0, v0) = (x, y, heading, speed);
        for k in frame + 1..=end {
            let tau = (k - frame) as f64 / f;
            let s = v0 * tau + 0.5 * accel * tau * tau;
            let (nx, ny, nh) = advance(x0, y0, h0, kappa, s);
            let v = if k == end { target } else { v0 + accel * tau };
            ego.push(TrajectoryPoint {
                t: timestamps[k],
                x: nx,
                y: ny,
                heading: wrap_angle(nh),
                speed: v.max(0.0),
            });
            heading_unwrapped.push(nh);
            (x, y, heading, speed) = (nx, ny, nh, v);
        }
        frame = end;
    }

    let map_polylines = generate_map(&mut rng, config, &ego, &heading_unwrapped);
    let agents = generate_agents(&mut rng, config, &timestamps, &ego);
    Scene::new(
        format!("s{seed:016x}"),
        f,
        timestamps,
        ego,
        agents,
        map_polylines,
    )
}

fn generate_map(
    rng: &mut ChaCha8Rng,
    config: &WorldConfig,
    ego: &[TrajectoryPoint],
    heading: &[f64],
) -> Vec<Polyline> {
    let mut lines = Vec::with_capacity(config.map_density);
    // ego path, extended behind the start and past the end, every ~0.5 s
    let step = ((config.native_frequency * 0.5).round() as usize).max(1);
    let first = &ego[0];
    let last = ego.last().expect("ego non-empty");
    let mut path: Vec<(f64, f64, f64)> = Vec::new();
    for k in (1..=6).rev() {
        let d = 5.0 * k as f64;
        path.push((
            first.x - d * first.heading.cos(),
            first.y - d * first.heading.sin(),
            first.heading,
        ));
    }
    for (i, p) in ego.iter().enumerate() {
        if i % step == 0 || i + 1 == ego.len() {
            path.push((p.x, p.y, heading[i]));
        }
    }
    for k in 1..=12 {
        let d = 5.0 * k as f64;
        path.push((
            last.x + d * last.heading.cos(),
            last.y + d * last.heading.sin(),
            last.heading,
        ));
    }
    for side in [1.0, -1.0].into_iter().take(config.map_density) {
        lines.push(
            path.iter()
                .map(|&(px, py, h)| {
                    let off = side * ROAD_HALF_WIDTH;
                    [px - off * h.sin(), py + off * h.cos()]
                })
                .collect(),
        );
    }
    for _ in lines.len()..config.map_density {
        let anchor = &ego[rng.gen_range(0..ego.len())];
        let lateral = rng.gen_range(6.0..20.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let along = rng.gen_range(-10.0..30.0);
        let (s, c) = anchor.heading.sin_cos();
        let x0 = anchor.x + along * c - lateral * s;
        let y0 = anchor.y + along * s + lateral * c;
        let turn = [0.0, PI / 2.0, -PI / 2.0][rng.gen_range(0..3)];
        let h0 = anchor.heading + turn + rng.gen_range(-0.2..0.2);
        let length: f64 = rng.gen_range(20.0..60.0);
        let kappa = if rng.gen_bool(0.5) {
            0.0
        } else {
            uniform(rng, config.curvature_range)
        };
        let pieces = (length / 2.0).ceil() as usize;
        lines.push(
            (0..=pieces)
                .map(|k| {
                    let (px, py, _) = advance(x0, y0, h0, kappa, length * k as f64 / pieces as f64);
                    [px, py]
                })
                .collect(),
        );
    }
    lines
}

fn generate_agents(
    rng: &mut ChaCha8Rng,
    config: &WorldConfig,
    timestamps: &[f64],
    ego: &[TrajectoryPoint],
) -> Vec<Vec<TrajectoryPoint>> {
    let (lo, hi) = config.num_agents_range;
    let count = rng.gen_range(lo..=hi);
    let n = timestamps.len();
    (0..count)
        .map(|_| {
            let start = rng.gen_range(0..n);
            let min_len = (n / 4).max(1);
            let len = rng.gen_range(min_len..=n.max(min_len));
            let stop = (start + len).min(n);
            let reference = &ego[start];
            let (s, c) = reference.heading.sin_cos();
            let along = rng.gen_range(-20.0..40.0);
            let lateral = [-2.0 * ROAD_HALF_WIDTH, -ROAD_HALF_WIDTH, ROAD_HALF_WIDTH, 2.0 * ROAD_HALF_WIDTH]
                [rng.gen_range(0..4)]
                * 0.5;
            let x0 = reference.x + along * c - lateral * s;
            let y0 = reference.y + along * s + lateral * c;
            let oncoming = rng.gen_bool(0.3);
            let heading = wrap_angle(reference.heading + if oncoming { PI } else { 0.0 });
            let speed = uniform(rng, config.speed_range);
            let (hs, hc) = heading.sin_cos();
            (start..stop)
                .map(|k| {
                    let dt = timestamps[k] - timestamps[start];
                    TrajectoryPoint {
                        t: timestamps[k],
                        x: x0 + speed * dt * hc,
                        y: y0 + speed * dt * hs,
                        heading,
                        speed,
                    }
                })
                .collect()
        })
        .collect()
}

/// Generate `config.num_scenes` scenes with ids `"{role}-{index:05}"`.
///
/// Validation scenes draw from a stream disjoint from training scenes.
pub fn generate_scene_set(config: &WorldConfig, role: Role) -> Result<SceneSet> {
    config.validate()?;
    let domain = match role {
        Role::Train => seed::SCENE,
        Role::Validation => seed::VALIDATION,
    };
    let scenes = (0..config.num_scenes)
        .map(|i| {
            let s = SeedKey::new(config.seed).with(domain).with(i as u64).value();
            let mut scene = generate_scene(s, config)?;
            scene.set_scene_id(format!("{}-{i:05}", role.as_str()));
            Ok(scene)
        })
        .collect::<Result<Vec<_>>>()?;
    SceneSet::new(scenes, role)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistorySample {
    /// Seconds relative to the anchor, ≤ 0.
    pub relative_t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoHistory {
    pub samples: Vec<HistorySample>,
}

impl EgoHistory {
    /// `(x, y, heading, speed)` per sample, oldest first.
    pub fn features(&self) -> Vec<f64> {
        self.samples
            .iter()
            .flat_map(|s| [s.x, s.y, s.heading, s.speed])
            .collect()
    }
}

pub const HISTORY_FEATURES_PER_SAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoints {
    pub points: Vec<[f64; 2]>,
    pub spacing: f64,
    pub horizon: f64,
}

impl Waypoints {
    pub fn new(points: Vec<[f64; 2]>, spacing: f64, horizon: f64) -> Result<Self> {
        let expected = (horizon / spacing).round();
        if !(spacing > 0.0) || (expected - horizon / spacing).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "horizon {horizon} is not a multiple of spacing {spacing}"
            )));
        }
        if points.len() != expected as usize {
            return Err(Error::Shape(format!(
                "{} waypoints for horizon {horizon} at spacing {spacing}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validity("non-finite waypoint".into()));
        }
        Ok(Self {
            points,
            spacing,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }
}

/// Ego states over `[t − window, t]` at `spec.history_rate`, in the
/// ego frame at `t`.
pub fn ego_history(scene: &Scene, t: f64, spec: &SampleSpec) -> Result<EgoHistory> {
    let count = spec.history_len();
    if t - spec.history_window < scene.start() - TIME_TOL || !scene.contains_time(t) {
        return Err(Error::Validity(format!(
            "history window [{}, {t}] leaves scene {} span [{}, {}]",
            t - spec.history_window,
            scene.scene_id(),
            scene.start(),
            scene.end()
        )));
    }
    let anchor = scene.pose_at(t)?;
    let samples = (0..count)
        .map(|k| {
            // k = count-1 lands exactly on the anchor
            let back = (count - 1 - k) as f64 / spec.history_rate;
            let pose = scene.pose_at(t - back)?;
            let (x, y) = anchor.to_local(pose.x, pose.y);
            Ok(HistorySample {
                relative_t: -back,
                x,
                y,
                heading: wrap_angle(pose.heading - anchor.heading),
                speed: pose.speed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EgoHistory { samples })
}

/// Ego positions at `t + k·spacing`, k = 1..=horizon/spacing, in the ego frame
/// at `t`.
pub fn future_target(scene: &Scene, t: f64, spec: &SampleSpec) -> Result<Waypoints> {
    if t + spec.horizon > scene.end() + TIME_TOL || !scene.contains_time(t) {
        return Err(Error::Validity(format!(
            "horizon {} s from {t} exits scene {} (ends {})",
            spec.horizon,
            scene.scene_id(),
            scene.end()
        )));
    }
    let anchor = scene.pose_at(t)?;
    let points = (1..=spec.waypoint_count())
        .map(|k| {
            let pose = scene.pose_at(t + k as f64 * spec.spacing)?;
            let (x, y) = anchor.to_local(pose.x, pose.y);
            Ok([x, y])
        })
        .collect::<Result<Vec<_>>>()?;
    Waypoints::new(points, spec.spacing, spec.horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SceneStats {
    pub mean_speed: f64,
    pub displacement_per_frame: f64,
    pub sample_count: usize,
}

/// Motion statistics of a scene set at training frequency `f`.
pub fn scene_stats(set: &SceneSet, f: f64) -> Result<SceneStats> {
    if set.is_empty() {
        return Err(Error::EmptyInput("scene_stats on an empty scene set".into()));
    }
    let (mut speed_sum, mut speed_n) = (0.0, 0usize);
    let (mut disp_sum, mut disp_n) = (0.0, 0usize);
    let mut sample_count = 0;
    for scene in set.scenes() {
        speed_sum += scene.ego().iter().map(|p| p.speed).sum::<f64>();
        speed_n += scene.ego().len();
        let anchors = sample_timestamps(scene.native_timestamps(), f)?;
        sample_count += anchors.len();
        let poses: Vec<Pose> = anchors
            .iter()
            .map(|&t| scene.pose_at(t))
            .collect::<Result<_>>()?;
        for w in poses.windows(2) {
            disp_sum += (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            disp_n += 1;
        }
    }
    Ok(SceneStats {
        mean_speed: speed_sum / speed_n as f64,
        displacement_per_frame: if disp_n == 0 { 0.0 } else { disp_sum / disp_n as f64 },
        sample_count,
    })
}
