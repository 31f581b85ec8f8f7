//! Sweep orchestration and artifact emission.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::{
    aggregate_seeds, best_frequency, evaluate, BestFrequency, ConstantVelocity, FrequencyResponse,
    MetricResult,
};
use crate::experiment::config::{ExperimentConfig, Mode};
use crate::experiment::results::{
    read_rows, write_rows, AggregateRow, CensusRow, ExcludedRow, FStarRow, MatchedPairRow, RawRow,
    AGGREGATE_HEADER, CENSUS_HEADER, EXCLUDED_HEADER, FSTAR_HEADER, MATCHED_PAIR_HEADER, RAW_HEADER,
};
use crate::experiment::svg::{fstar_chart, response_chart};
use crate::model::{build_model, ModelConfig};
use crate::seed::SeedKey;
use crate::subsample::{
    build_training_set, build_validation_set, dataset_census, FrequencyDataset, FrequencyGrid,
    SampleFactory,
};
use crate::train::{format_delta, run_matched_pair, train, PairSetup, RunRecord, TrainConfig};
use crate::world::{generate_scene_set, Role, SceneSet};

pub const MANIFEST_VERSION: u32 = 1;

/// Progress sink; the library never prints on its own.
pub type Log<'a> = &'a (dyn Fn(&str) + Sync);

pub fn quiet(_: &str) {}

/// Scenes, sample factory and the shared validation set of one experiment.
pub struct Workspace {
    pub train_scenes: SceneSet,
    pub validation_scenes: SceneSet,
    pub factory: SampleFactory,
    pub validation: FrequencyDataset,
}

impl Workspace {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let train_scenes = generate_scene_set(&config.world, Role::Train)?;
        let validation_scenes = generate_scene_set(&config.validation_world(), Role::Validation)?;
        let factory = SampleFactory {
            spec: config.sample_spec.clone(),
            render: config.render.clone(),
            noise: config.noise,
            noise_seed: config.world.seed,
        };
        let validation = build_validation_set(&validation_scenes, &config.grid, &factory)?;
        Ok(Self {
            train_scenes,
            validation_scenes,
            factory,
            validation,
        })
    }

    pub fn model_config(&self, width: usize, seed: u64) -> ModelConfig {
        let spec = &self.factory.spec;
        ModelConfig {
            width,
            image_size: self.factory.render.image_size,
            channels: self.factory.render.channel_count() * spec.frame_count(),
            history_dim: spec.history_dim(),
            num_waypoints: spec.waypoint_count(),
            seed,
        }
    }
}

/// Per-run training config: the run seed mixed into the configured root.
pub fn run_train_config(base: &TrainConfig, run_seed: u64) -> TrainConfig {
    TrainConfig {
        seed: SeedKey::new(base.seed).with(run_seed).value(),
        ..base.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed {
        record: RunRecord,
        metrics: MetricResult,
    },
    Diverged {
        step: u64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub frequency: f64,
    pub width: usize,
    pub seed: u64,
    pub epochs: usize,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub mode: Mode,
    /// Ordered by width, frequency, then seed as configured.
    pub runs: Vec<RunResult>,
    /// Response per width; `None` when a frequency lost every seed.
    pub responses: Vec<(usize, Option<FrequencyResponse>)>,
    pub param_counts: Vec<(usize, usize)>,
    pub train_samples: Vec<(f64, usize)>,
    pub validation_samples: usize,
    pub baseline: MetricResult,
}

impl SweepResult {
    pub fn raw_rows(&self, record_wall_time: bool) -> Vec<RawRow> {
        self.runs
            .iter()
            .filter_map(|r| match &r.outcome {
                RunOutcome::Completed { record, metrics } => Some(RawRow {
                    mode: self.mode.as_str().to_string(),
                    frequency_hz: r.frequency,
                    width: r.width,
                    seed: r.seed,
                    epochs: r.epochs,
                    total_steps: record.total_steps,
                    ade_m: metrics.ade,
                    fde_m: metrics.fde,
                    wall_time_s: record_wall_time.then_some(record.wall_time),
                }),
                RunOutcome::Diverged { .. } => None,
            })
            .collect()
    }

    pub fn excluded_rows(&self) -> Vec<ExcludedRow> {
        self.runs
            .iter()
            .filter_map(|r| match &r.outcome {
                RunOutcome::Diverged { step, reason } => Some(ExcludedRow {
                    mode: self.mode.as_str().to_string(),
                    frequency_hz: r.frequency,
                    width: r.width,
                    seed: r.seed,
                    epochs: r.epochs,
                    failed_step: *step,
                    reason: reason.clone(),
                }),
                RunOutcome::Completed { .. } => None,
            })
            .collect()
    }

    pub fn best(&self) -> Vec<(usize, BestFrequency)> {
        self.responses
            .iter()
            .filter_map(|(w, r)| r.as_ref().map(|r| (*w, best_frequency(r))))
            .collect()
    }

    pub fn aggregate_rows(&self) -> Vec<AggregateRow> {
        let best = self.best();
        let mut rows = Vec::new();
        for &(width, _) in &self.responses {
            let f_star = best.iter().find(|b| b.0 == width).map(|b| b.1.f_star);
            for (f, agg) in cell_aggregates(&self.runs, width) {
                rows.push(AggregateRow {
                    frequency_hz: f,
                    width,
                    ade_mean: agg.ade_mean,
                    ade_std: agg.ade_std,
                    fde_mean: agg.fde_mean,
                    fde_std: agg.fde_std,
                    f_star_flag: u8::from(f_star == Some(f)),
                });
            }
        }
        rows
    }
}

/// Seed aggregates of one width, per frequency that has completed runs.
fn cell_aggregates(runs: &[RunResult], width: usize) -> Vec<(f64, crate::eval::SeedAggregate)> {
    let mut freqs: Vec<f64> = runs.iter().filter(|r| r.width == width).map(|r| r.frequency).collect();
    freqs.dedup();
    freqs
        .into_iter()
        .filter_map(|f| {
            let metrics: Vec<MetricResult> = runs
                .iter()
                .filter(|r| r.width == width && r.frequency == f)
                .filter_map(|r| match &r.outcome {
                    RunOutcome::Completed { metrics, .. } => Some(*metrics),
                    RunOutcome::Diverged { .. } => None,
                })
                .collect();
            aggregate_seeds(&metrics).ok().map(|a| (f, a))
        })
        .collect()
}

fn responses(runs: &[RunResult], widths: &[usize], grid: &FrequencyGrid) -> Vec<(usize, Option<FrequencyResponse>)> {
    widths
        .iter()
        .map(|&w| (w, FrequencyResponse::new(grid, cell_aggregates(runs, w)).ok()))
        .collect()
}

fn checkpoint_path(dir: &Path, width: usize, f: f64, seed: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("w{width}_f{f}_s{seed}.ckpt"))
}

/// Train and evaluate every `(frequency, width, seed)` of the config.
///
/// Runs that diverge are recorded and the sweep continues; any other error
/// aborts it.
pub fn compute_sweep(config: &ExperimentConfig, mode: Mode, log: Log<'_>) -> Result<SweepResult> {
    let ws = Workspace::prepare(config)?;
    log(&format!(
        "{} train scenes, {} validation samples at {} Hz",
        ws.train_scenes.len(),
        ws.validation.len(),
        config.grid.max()
    ));
    let baseline = evaluate(&ConstantVelocity, &ws.validation)?;
    let param_counts = config
        .widths
        .iter()
        .map(|&w| Ok((w, build_model(&ws.model_config(w, 0))?.param_count())))
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::new();
    let mut train_samples = Vec::new();
    if config.save_checkpoints {
        let dir = config.output_dir.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for &f in config.grid.frequencies() {
        let data = build_training_set(&ws.train_scenes, f, &ws.factory)?;
        train_samples.push((f, data.len()));
        let jobs: Vec<(usize, u64)> = config
            .widths
            .iter()
            .flat_map(|&w| config.seeds.iter().map(move |&s| (w, s)))
            .collect();
        let done = jobs
            .par_iter()
            .map(|&(width, seed)| {
                let mut model = build_model(&ws.model_config(width, seed))?;
                let train_config = run_train_config(&config.train, seed);
                let outcome = match train(&mut model, &data, &train_config) {
                    Ok(mut record) => {
                        let metrics = evaluate(&model, &ws.validation)?;
                        if config.save_checkpoints {
                            let path = checkpoint_path(&config.output_dir, width, f, seed);
                            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                            model.save(std::io::BufWriter::new(file))?;
                            record.checkpoint = Some(path);
                        }
                        RunOutcome::Completed { record, metrics }
                    }
                    Err(Error::Divergence { step, loss }) => RunOutcome::Diverged {
                        step,
                        reason: format!("loss {loss} at step {step}"),
                    },
                    Err(other) => return Err(other),
                };
                log(&format!(
                    "f={f} Hz W={width} seed={seed}: {}",
                    match &outcome {
                        RunOutcome::Completed { metrics, .. } =>
                            format!("ADE {:.4} m, FDE {:.4} m", metrics.ade, metrics.fde),
                        RunOutcome::Diverged { reason, .. } => format!("diverged ({reason})"),
                    }
                ));
                Ok(RunResult {
                    frequency: f,
                    width,
                    seed,
                    epochs: config.train.epochs,
                    outcome,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        runs.extend(done);
    }
    let seed_rank = |s: u64| config.seeds.iter().position(|&x| x == s).unwrap_or(usize::MAX);
    let width_rank = |w: usize| config.widths.iter().position(|&x| x == w).unwrap_or(usize::MAX);
    runs.sort_by(|a, b| {
        width_rank(a.width)
            .cmp(&width_rank(b.width))
            .then(a.frequency.total_cmp(&b.frequency))
            .then(seed_rank(a.seed).cmp(&seed_rank(b.seed)))
    });
    Ok(SweepResult {
        mode,
        responses: responses(&runs, &config.widths, &config.grid),
        runs,
        param_counts,
        train_samples,
        validation_samples: ws.validation.len(),
        baseline,
    })
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_manifest(config: &ExperimentConfig, mode: Mode, body: serde_json::Value, outputs: &[&str]) -> Result<()> {
    let mut manifest = json!({
        "format_version": MANIFEST_VERSION,
        "generator": format!("freqsweep {}", env!("CARGO_PKG_VERSION")),
        "mode": mode.as_str(),
        "config": config,
        "outputs": outputs,
    });
    if let (Some(m), serde_json::Value::Object(extra)) = (manifest.as_object_mut(), body) {
        m.extend(extra);
    }
    let path = config.output_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn sweep_manifest_body(result: &SweepResult) -> serde_json::Value {
    json!({
        "derived": {
            "param_counts": result.param_counts.iter().map(|(w, n)| json!({"width": w, "params": n})).collect::<Vec<_>>(),
            "train_samples": result.train_samples.iter().map(|(f, n)| json!({"frequency_hz": f, "samples": n})).collect::<Vec<_>>(),
            "validation_samples": result.validation_samples,
            "constant_velocity_baseline": {"ade_m": result.baseline.ade, "fde_m": result.baseline.fde},
        },
        "completed_runs": result.runs.iter().filter(|r| matches!(r.outcome, RunOutcome::Completed { .. })).count(),
        "excluded": result.excluded_rows(),
        "best_frequency": result.best().iter().map(|(w, b)| json!({"width": w, "f_star_hz": b.f_star, "ade_mean": b.ade_mean})).collect::<Vec<_>>(),
    })
}

/// Write raw, aggregate, exclusion, plot and manifest artifacts.
pub fn write_sweep(config: &ExperimentConfig, result: &SweepResult) -> Result<()> {
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    write_rows(&dir.join("raw.csv"), &result.raw_rows(config.record_wall_time), &RAW_HEADER)?;
    write_rows(&dir.join("aggregate.csv"), &result.aggregate_rows(), &AGGREGATE_HEADER)?;
    write_rows(&dir.join("excluded.csv"), &result.excluded_rows(), &EXCLUDED_HEADER)?;
    let mut outputs = vec!["raw.csv", "aggregate.csv", "excluded.csv", "manifest.json"];
    let complete: Vec<(usize, FrequencyResponse)> = result
        .responses
        .iter()
        .filter_map(|(w, r)| r.clone().map(|r| (*w, r)))
        .collect();
    if !complete.is_empty() {
        response_chart(&complete).write(&dir.join("response.svg"))?;
        outputs.push("response.svg");
    }
    if result.mode == Mode::CapacitySweep {
        let rows = fstar_rows(result);
        write_rows(&dir.join("fstar.csv"), &rows, &FSTAR_HEADER)?;
        outputs.push("fstar.csv");
        if !rows.is_empty() {
            let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.width, r.f_star_hz)).collect();
            fstar_chart(&points).write(&dir.join("fstar.svg"))?;
            outputs.push("fstar.svg");
        }
    }
    outputs.sort_unstable();
    write_manifest(config, result.mode, sweep_manifest_body(result), &outputs)
}

pub fn fstar_rows(result: &SweepResult) -> Vec<FStarRow> {
    result
        .best()
        .into_iter()
        .map(|(width, b)| FStarRow {
            width,
            param_count: result
                .param_counts
                .iter()
                .find(|p| p.0 == width)
                .map_or(0, |p| p.1),
            f_star_hz: b.f_star,
            ade_mean: b.ade_mean,
        })
        .collect()
}

/// Frequency sweep over every configured width, written to `output_dir`.
pub fn run_sweep(config: &ExperimentConfig, log: Log<'_>) -> Result<SweepResult> {
    let result = compute_sweep(config, Mode::Sweep, log)?;
    write_sweep(config, &result)?;
    Ok(result)
}

/// Sweep per width plus the best-frequency table and chart.
pub fn run_capacity_sweep(config: &ExperimentConfig, log: Log<'_>) -> Result<SweepResult> {
    let result = compute_sweep(config, Mode::CapacitySweep, log)?;
    write_sweep(config, &result)?;
    Ok(result)
}

fn pair_label(f: f64, epochs: usize) -> String {
    format!("{f} Hz x {epochs} ep")
}

/// One iteration-matched row per `(width, seed)`.
pub fn run_matched_pair_experiment(config: &ExperimentConfig, log: Log<'_>) -> Result<Vec<MatchedPairRow>> {
    let pair = config
        .matched_pair
        .ok_or_else(|| Error::Config("no [matched_pair] settings".into()))?;
    let ws = Workspace::prepare(config)?;
    let jobs: Vec<(usize, u64)> = config
        .widths
        .iter()
        .flat_map(|&w| config.seeds.iter().map(move |&s| (w, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(width, seed)| {
            let model = ws.model_config(width, seed);
            let train = run_train_config(&config.train, seed);
            let setup = PairSetup {
                train_scenes: &ws.train_scenes,
                validation: &ws.validation,
                factory: &ws.factory,
                model: &model,
                train: &train,
            };
            let result = run_matched_pair(&setup, pair.f_low, pair.f_high, pair.epochs_high)?;
            log(&format!(
                "W={width} seed={seed}: {} ADE {:.4} vs {} ADE {:.4}",
                pair_label(result.low.frequency, result.low.epochs),
                result.low.metrics.ade,
                pair_label(result.high.frequency, result.high.epochs),
                result.high.metrics.ade
            ));
            Ok(MatchedPairRow {
                width,
                seed,
                low_config: pair_label(result.low.frequency, result.low.epochs),
                low_ade_m: result.low.metrics.ade,
                low_fde_m: result.low.metrics.fde,
                high_config: pair_label(result.high.frequency, result.high.epochs),
                high_ade_m: result.high.metrics.ade,
                high_fde_m: result.high.metrics.fde,
                delta_ade: format_delta(result.delta_ade_percent),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    write_rows(&dir.join("matched_pair.csv"), &rows, &MATCHED_PAIR_HEADER)?;
    write_manifest(
        config,
        Mode::MatchedPair,
        json!({ "matched_pair": pair_json(&pair) }),
        &["manifest.json", "matched_pair.csv"],
    )?;
    Ok(rows)
}

fn pair_json(pair: &crate::experiment::config::MatchedPairSpec) -> serde_json::Value {
    json!({
        "f_low": pair.f_low,
        "f_high": pair.f_high,
        "epochs_high": pair.epochs_high,
        "epochs_low": crate::train::iteration_matched_epochs(pair.f_high, pair.epochs_high, pair.f_low),
    })
}

/// Valid training anchors per grid frequency, written to `census.csv`.
pub fn run_census(config: &ExperimentConfig) -> Result<Vec<CensusRow>> {
    config.validate()?;
    let scenes = generate_scene_set(&config.world, Role::Train)?;
    let rows: Vec<CensusRow> = dataset_census(&config.grid, &scenes, &config.sample_spec)?
        .into_iter()
        .map(|(frequency_hz, sample_count)| CensusRow {
            frequency_hz,
            sample_count,
        })
        .collect();
    prepare_dir(&config.output_dir)?;
    write_rows(&config.output_dir.join("census.csv"), &rows, &CENSUS_HEADER)?;
    Ok(rows)
}

/// Rebuild `response.svg` in `dir` from its `aggregate.csv`.
pub fn replot(dir: &Path) -> Result<PathBuf> {
    let rows: Vec<AggregateRow> = read_rows(&dir.join("aggregate.csv"))?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no rows", dir.join("aggregate.csv").display())));
    }
    let mut widths: Vec<usize> = rows.iter().map(|r| r.width).collect();
    widths.dedup();
    let mut series = Vec::new();
    for w in widths {
        let cells: Vec<&AggregateRow> = rows.iter().filter(|r| r.width == w).collect();
        let grid = FrequencyGrid::new(cells.iter().map(|r| r.frequency_hz).collect())?;
        let entries = cells
            .iter()
            .map(|r| {
                (
                    r.frequency_hz,
                    crate::eval::SeedAggregate {
                        ade_mean: r.ade_mean,
                        ade_std: r.ade_std,
                        fde_mean: r.fde_mean,
                        fde_std: r.fde_std,
                        ade_values: vec![],
                        fde_values: vec![],
                    },
                )
            })
            .collect();
        series.push((w, FrequencyResponse::new(&grid, entries)?));
    }
    let path = dir.join("response.svg");
    response_chart(&series).write(&path)?;
    Ok(path)
}
