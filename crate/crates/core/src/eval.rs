//! ADE/FDE metrics, seed aggregation and best-frequency selection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::subsample::{FrequencyDataset, FrequencyGrid, TrainingSample};
use crate::world::{Role, Waypoints};

/// Anything that maps samples to ego-frame waypoints.
pub trait TrajectoryPredictor {
    fn predict(&self, samples: &[&TrainingSample]) -> Result<Vec<Waypoints>>;
}

/// Extrapolates the anchor speed straight ahead.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

impl TrajectoryPredictor for ConstantVelocity {
    fn predict(&self, samples: &[&TrainingSample]) -> Result<Vec<Waypoints>> {
        samples
            .iter()
            .map(|s| {
                let now = s
                    .history
                    .samples
                    .last()
                    .ok_or_else(|| Error::EmptyInput("sample without history".into()))?;
                let points = (1..=s.target.len())
                    .map(|k| [now.speed * k as f64 * s.target.spacing, 0.0])
                    .collect();
                Waypoints::new(points, s.target.spacing, s.target.horizon)
            })
            .collect()
    }
}

fn distances(pred: &Waypoints, gt: &Waypoints) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predicted waypoints against {} ground-truth",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::EmptyInput("no waypoints".into()));
    }
    Ok(pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .collect())
}

/// Mean Euclidean distance over waypoints.
pub fn ade(pred: &Waypoints, gt: &Waypoints) -> Result<f64> {
    let d = distances(pred, gt)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Euclidean distance at the last waypoint.
pub fn fde(pred: &Waypoints, gt: &Waypoints) -> Result<f64> {
    Ok(*distances(pred, gt)?.last().expect("non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricResult {
    pub ade: f64,
    pub fde: f64,
    pub sample_count: usize,
}

/// Mean ADE/FDE over the validation samples, summed in dataset order.
pub fn evaluate<P: TrajectoryPredictor + ?Sized>(
    model: &P,
    valset: &FrequencyDataset,
) -> Result<MetricResult> {
    if valset.role != Role::Validation {
        return Err(Error::Config("evaluation requires a validation set".into()));
    }
    if valset.is_empty() {
        return Err(Error::EmptyInput("empty validation set".into()));
    }
    let refs: Vec<&TrainingSample> = valset.samples.iter().collect();
    let preds = model.predict(&refs)?;
    if preds.len() != refs.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} samples",
            preds.len(),
            refs.len()
        )));
    }
    let (mut ade_sum, mut fde_sum) = (0.0, 0.0);
    for (p, s) in preds.iter().zip(&refs) {
        ade_sum += ade(p, &s.target)?;
        fde_sum += fde(p, &s.target)?;
    }
    let n = refs.len();
    Ok(MetricResult {
        ade: ade_sum / n as f64,
        fde: fde_sum / n as f64,
        sample_count: n,
    })
}

/// Mean and population standard deviation of per-seed ADE and FDE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedAggregate {
    pub ade_mean: f64,
    pub ade_std: f64,
    pub fde_mean: f64,
    pub fde_std: f64,
    pub ade_values: Vec<f64>,
    pub fde_values: Vec<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate_seeds(results: &[MetricResult]) -> Result<SeedAggregate> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no per-seed results to aggregate".into()));
    }
    let ade_values: Vec<f64> = results.iter().map(|r| r.ade).collect();
    let fde_values: Vec<f64> = results.iter().map(|r| r.fde).collect();
    let (ade_mean, ade_std) = mean_std(&ade_values);
    let (fde_mean, fde_std) = mean_std(&fde_values);
    Ok(SeedAggregate {
        ade_mean,
        ade_std,
        fde_mean,
        fde_std,
        ade_values,
        fde_values,
    })
}

/// Seed-aggregated metrics for every grid frequency, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyResponse {
    entries: Vec<(f64, SeedAggregate)>,
}

impl FrequencyResponse {
    /// Requires exactly one entry per grid frequency.
    pub fn new(grid: &FrequencyGrid, mut entries: Vec<(f64, SeedAggregate)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let freqs: Vec<f64> = entries.iter().map(|e| e.0).collect();
        if freqs != grid.frequencies() {
            return Err(Error::IncompleteResponse(format!(
                "response covers {freqs:?}, grid is {:?}",
                grid.frequencies()
            )));
        }
        Ok(Self { entries })
    }

    /// Response from bare ADE means, one per frequency (std zero).
    pub fn from_ade_means(pairs: &[(f64, f64)]) -> Result<Self> {
        let grid = FrequencyGrid::new(pairs.iter().map(|p| p.0).collect())?;
        let entries = pairs
            .iter()
            .map(|&(f, a)| {
                let r = MetricResult {
                    ade: a,
                    fde: a,
                    sample_count: 1,
                };
                Ok((f, aggregate_seeds(&[r])?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&grid, entries)
    }

    pub fn entries(&self) -> &[(f64, SeedAggregate)] {
        &self.entries
    }

    pub fn get(&self, f: f64) -> Option<&SeedAggregate> {
        self.entries.iter().find(|e| e.0 == f).map(|e| &e.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestFrequency {
    pub f_star: f64,
    /// Criterion value at `f_star` (mean ADE).
    pub ade_mean: f64,
}

/// Frequency with the lowest mean ADE; ties go to the lowest frequency.
pub fn best_frequency(response: &FrequencyResponse) -> BestFrequency {
    let mut best = BestFrequency {
        f_star: response.entries[0].0,
        ade_mean: response.entries[0].1.ade_mean,
    };
    for (f, agg) in &response.entries[1..] {
        if agg.ade_mean < best.ade_mean {
            best = BestFrequency {
                f_star: *f,
                ade_mean: agg.ade_mean,
            };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(points: Vec<[f64; 2]>) -> Waypoints {
        let n = points.len() as f64;
        Waypoints::new(points, 0.5, 0.5 * n).unwrap()
    }

    #[test]
    fn identical_waypoints_have_zero_error() {
        let a = wp(vec![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(ade(&a, &a).unwrap(), 0.0);
        assert_eq!(fde(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn three_four_five() {
        let p = wp(vec![[3.0, 4.0]]);
        let g = wp(vec![[0.0, 0.0]]);
        assert_eq!(ade(&p, &g).unwrap(), 5.0);
        assert_eq!(fde(&p, &g).unwrap(), 5.0);
    }

    #[test]
    fn count_mismatch_is_shape_error() {
        let p = wp(vec![[3.0, 4.0]]);
        let g = wp(vec![[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(ade(&p, &g), Err(Error::Shape(_))));
    }

    #[test]
    fn seed_aggregation() {
        let r = |a: f64| MetricResult {
            ade: a,
            fde: 2.0 * a,
            sample_count: 1,
        };
        let s = aggregate_seeds(&[r(0.5), r(0.5), r(0.5)]).unwrap();
        assert_eq!((s.ade_mean, s.ade_std), (0.5, 0.0));
        let s = aggregate_seeds(&[r(0.4), r(0.6)]).unwrap();
        assert!((s.ade_mean - 0.5).abs() < 1e-15);
        assert!((s.ade_std - 0.1).abs() < 1e-12);
        assert!((s.fde_std - 0.2).abs() < 1e-12);
        assert!(matches!(aggregate_seeds(&[]), Err(Error::EmptyInput(_))));
        assert_eq!(aggregate_seeds(&[r(0.7)]).unwrap().ade_std, 0.0);
    }

    #[test]
    fn ties_go_to_the_lowest_frequency() {
        let r = FrequencyResponse::from_ade_means(&[(2.0, 1.0), (4.0, 1.0), (6.0, 1.0)]).unwrap();
        assert_eq!(best_frequency(&r).f_star, 2.0);
        let r = FrequencyResponse::from_ade_means(&[(2.0, 3.0), (4.0, 2.0), (6.0, 1.0)]).unwrap();
        assert_eq!(best_frequency(&r).f_star, 6.0);
    }

    #[test]
    fn missing_frequency_is_incomplete() {
        let grid = FrequencyGrid::new(vec![2.0, 4.0]).unwrap();
        let one = aggregate_seeds(&[MetricResult {
            ade: 1.0,
            fde: 1.0,
            sample_count: 1,
        }])
        .unwrap();
        assert!(matches!(
            FrequencyResponse::new(&grid, vec![(2.0, one)]),
            Err(Error::IncompleteResponse(_))
        ));
    }
}
