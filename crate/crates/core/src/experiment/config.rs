//! Experiment configuration, built-in profiles and file overlay.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::raster::{NoiseConfig, RenderConfig};
use crate::subsample::{FrequencyGrid, SampleSpec};
use crate::train::{OptimizerChoice, TrainConfig};
use crate::world::WorldConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sweep,
    CapacitySweep,
    MatchedPair,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sweep => "sweep",
            Mode::CapacitySweep => "capacity_sweep",
            Mode::MatchedPair => "matched_pair",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchedPairSpec {
    pub f_low: f64,
    pub f_high: f64,
    pub epochs_high: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Training scenes; validation scenes reuse it with their own count.
    pub world: WorldConfig,
    pub validation_scenes: usize,
    pub render: RenderConfig,
    pub noise: NoiseConfig,
    pub sample_spec: SampleSpec,
    pub grid: FrequencyGrid,
    pub widths: Vec<usize>,
    /// Each run seed initializes the model and, mixed with `train.seed`,
    /// drives minibatch shuffling.
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub mode: Mode,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub matched_pair: Option<MatchedPairSpec>,
    /// Fill `wall_time_s` in raw.csv; off keeps every output byte
    /// reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub save_checkpoints: bool,
}

impl ExperimentConfig {
    /// CPU-scale reference: two widths, five frequencies, three seeds.
    pub fn desk() -> Self {
        Self {
            world: WorldConfig {
                num_scenes: 100,
                scene_duration: 20.0,
                native_frequency: 10.0,
                speed_range: (4.0, 16.0),
                curvature_range: (-0.03, 0.03),
                num_agents_range: (2, 6),
                map_density: 6,
                segment_duration_range: (2.0, 5.0),
                seed: 2024,
            },
            validation_scenes: 30,
            render: RenderConfig::default(),
            noise: NoiseConfig::default(),
            sample_spec: SampleSpec::default(),
            grid: FrequencyGrid::new(vec![2.0, 4.0, 6.0, 8.0, 10.0]).expect("static grid"),
            widths: vec![4, 16],
            seeds: vec![1, 2, 3],
            train: TrainConfig {
                learning_rate: 2e-3,
                batch_size: 16,
                epochs: 8,
                seed: 0,
                optimizer: OptimizerChoice::Adam,
                shuffle: true,
                weight_decay: 0.0,
                lr_decay: 1.0,
            },
            mode: Mode::CapacitySweep,
            output_dir: PathBuf::from("results"),
            matched_pair: Some(MatchedPairSpec {
                f_low: 6.0,
                f_high: 10.0,
                epochs_high: 6,
            }),
            record_wall_time: false,
            save_checkpoints: false,
        }
    }

    /// Larger grid and widths, closer to the original toy setting.
    pub fn full() -> Self {
        let desk = Self::desk();
        Self {
            world: WorldConfig {
                num_scenes: 1000,
                ..desk.world
            },
            validation_scenes: 200,
            render: RenderConfig {
                image_size: 64,
                meters_per_pixel: 0.5,
                ego_anchor_pixel: (48, 32),
                ..desk.render
            },
            grid: FrequencyGrid::new(vec![2.0, 4.0, 6.0, 7.0, 8.0, 9.0, 10.0])
                .expect("static grid"),
            widths: vec![16, 48, 64],
            train: TrainConfig {
                epochs: 10,
                ..desk.train
            },
            ..desk
        }
    }

    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Full => Self::full(),
        }
    }

    /// Profile defaults overlaid with a TOML or JSON document (JSON when the
    /// text starts with `{`).
    pub fn from_str_with_profile(text: &str, profile: Profile) -> Result<Self> {
        let overlay: Value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            let table: toml::Value =
                toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            serde_json::to_value(table)?
        };
        let mut base = serde_json::to_value(Self::profile(profile))?;
        merge(&mut base, overlay);
        let config: Self =
            serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_with_profile(&text, profile).map_err(|e| match e {
            Error::Config(message) | Error::Frequency(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.render.validate()?;
        self.noise.validate()?;
        self.sample_spec.validate()?;
        self.sample_spec.check_native(self.world.native_frequency)?;
        self.train.validate()?;
        self.grid.check_native(self.world.native_frequency)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("widths must be non-empty and ≥ 1".into()));
        }
        if self.validation_scenes == 0 {
            return Err(Error::Config("validation_scenes must be ≥ 1".into()));
        }
        if let Some(pair) = &self.matched_pair {
            let in_grid = |f: f64| self.grid.frequencies().contains(&f);
            if !(pair.f_low < pair.f_high) || !in_grid(pair.f_low) || !in_grid(pair.f_high) {
                return Err(Error::Config(format!(
                    "matched pair {} / {} Hz must be increasing grid frequencies",
                    pair.f_low, pair.f_high
                )));
            }
            if pair.epochs_high == 0 {
                return Err(Error::Config("epochs_high must be ≥ 1".into()));
            }
        } else if self.mode == Mode::MatchedPair {
            return Err(Error::Config("matched_pair mode needs a [matched_pair] table".into()));
        }
        Ok(())
    }

    pub fn validation_world(&self) -> WorldConfig {
        WorldConfig {
            num_scenes: self.validation_scenes,
            ..self.world.clone()
        }
    }
}

/// Recursive object merge; non-object values in `overlay` replace `base`.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
