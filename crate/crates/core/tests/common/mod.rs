//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use freqsweep_core::subsample::SampleSpec;
use freqsweep_core::world::Scene;

pub const TOL: f64 = 1e-9;

/// Ideal times `t0 + j/f` for every `j` up to the last stamp, each mapped to
/// the nearest native stamp by a full scan (earlier stamp on ties), with
/// repeats dropped.
pub fn brute_force_anchors(native: &[f64], f: f64) -> Vec<f64> {
    let (first, last) = (native[0], *native.last().unwrap());
    let mut out: Vec<f64> = Vec::new();
    let mut j = 0u64;
    loop {
        let ideal = first + j as f64 / f;
        if ideal > last + TOL {
            break;
        }
        let mut best = native[0];
        for &t in native {
            if (t - ideal).abs() < (best - ideal).abs() - TOL {
                best = t;
            }
        }
        if out.last() != Some(&best) {
            out.push(best);
        }
        j += 1;
    }
    out
}

/// Anchors of `scene` at `f` whose history, horizon and frame windows all lie
/// inside the scene span.
pub fn brute_force_valid(scene: &Scene, f: f64, spec: &SampleSpec) -> Vec<f64> {
    let (start, end) = (scene.start(), scene.end());
    brute_force_anchors(scene.native_timestamps(), f)
        .into_iter()
        .filter(|&t| {
            t - spec.history_window >= start - TOL
                && t + spec.horizon <= end + TOL
                && spec
                    .bev_frame_offsets
                    .iter()
                    .all(|o| t + o >= start - TOL && t + o <= end + TOL)
        })
        .collect()
}

/// Native stamps `start + k / rate`, `k < n`.
pub fn native_grid(start: f64, rate: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| start + k as f64 / rate).collect()
}

/// Mean Euclidean error, written out term by term.
pub fn ade_oracle(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        let dx = pred[i][0] - gt[i][0];
        let dy = pred[i][1] - gt[i][1];
        total += (dx * dx + dy * dy).sqrt();
    }
    total / pred.len() as f64
}

pub fn fde_oracle(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> f64 {
    let n = pred.len() - 1;
    let dx = pred[n][0] - gt[n][0];
    let dy = pred[n][1] - gt[n][1];
    (dx * dx + dy * dy).sqrt()
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}
