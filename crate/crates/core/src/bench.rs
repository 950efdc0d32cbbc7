//! Single-image latency measurement and score attribution.
//!
//! Percentiles use the nearest-rank definition: the `p`-th percentile of `n`
//! ascending samples is the one at 1-based rank `ceil(p * n / 100)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{GraphSpec, Model, ModelOptions, WeightStore};
use crate::error::{Error, Result};
use crate::metrics::{final_score, EvalReport, ScoreParams};
use crate::types::RgbImage;

pub const LATENCY_SCHEMA: &str = "depthbench-latency/1";

pub const DEFAULT_RUNS: usize = 30;
pub const DEFAULT_WARMUP: usize = 5;

/// Allowed overshoot of a measured sleep on a loaded desktop scheduler.
pub const SCHEDULER_TOLERANCE_MS: f64 = 5.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    #[default]
    P50,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub schema: String,
    /// Post-warmup wall times, in run order.
    pub samples_ms: Vec<f64>,
    pub warmup_count: usize,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub mean: f64,
    pub min: f64,
    /// Which statistic feeds the score.
    pub statistic: Statistic,
    pub environment: String,
}

/// Nearest-rank percentile of an unsorted sample set, `p` in `1..=100`.
pub fn percentile(samples: &[f64], p: u32) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("percentile of an empty sample set".into()));
    }
    if !(1..=100).contains(&p) {
        return Err(Error::Domain(format!("percentile must be in 1..=100, got {p}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (p as usize * n).div_ceil(100).max(1);
    Ok(sorted[rank - 1])
}

pub fn host_environment() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {threads} threads",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

impl LatencyReport {
    pub fn from_samples(samples_ms: Vec<f64>, warmup_count: usize, environment: impl Into<String>) -> Result<Self> {
        if let Some(bad) = samples_ms.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("invalid latency sample {bad}")));
        }
        let p50 = percentile(&samples_ms, 50)?;
        let p90 = percentile(&samples_ms, 90)?;
        let p99 = percentile(&samples_ms, 99)?;
        let mean = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
        let min = samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            schema: LATENCY_SCHEMA.into(),
            samples_ms,
            warmup_count,
            p50,
            p90,
            p99,
            mean,
            min,
            statistic: Statistic::P50,
            environment: environment.into(),
        })
    }

    pub fn with_statistic(mut self, statistic: Statistic) -> Self {
        self.statistic = statistic;
        self
    }

    /// The runtime that feeds the score.
    pub fn central(&self) -> f64 {
        match self.statistic {
            Statistic::P50 => self.p50,
            Statistic::Mean => self.mean,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Times `warmup + runs` calls of `f` on a monotonic clock and keeps the
/// last `runs`.
pub fn time_fn<F>(runs: usize, warmup: usize, mut f: F) -> Result<LatencyReport>
where
    F: FnMut() -> Result<()>,
{
    if runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let mut samples = Vec::with_capacity(runs);
    for i in 0..warmup + runs {
        let start = Instant::now();
        f()?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if i >= warmup {
            samples.push(ms);
        }
    }
    LatencyReport::from_samples(samples, warmup, host_environment())
}

/// Times single-image inference of a bound model; the same input is reused
/// for every run.
pub fn time_model(model: &Model, input: &RgbImage, runs: usize, warmup: usize) -> Result<LatencyReport> {
    let tensor = input.to_tensor();
    time_fn(runs, warmup, || model.run_tensor(&tensor).map(drop))
}

pub fn time_inference(
    graph: &GraphSpec,
    weights: &WeightStore,
    input: &RgbImage,
    runs: usize,
    warmup: usize,
) -> Result<LatencyReport> {
    let model = Model::new(graph.clone(), weights, ModelOptions::default())?;
    time_model(&model, input, runs, warmup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRun {
    pub si_rmse: f64,
    pub runtime_ms: f64,
    pub statistic: Statistic,
    pub score: f64,
}

pub fn score_run(latency: &LatencyReport, eval: &EvalReport, params: &ScoreParams) -> Result<ScoredRun> {
    let runtime_ms = latency.central();
    Ok(ScoredRun {
        si_rmse: eval.si_rmse,
        runtime_ms,
        statistic: latency.statistic,
        score: final_score(eval.si_rmse, runtime_ms, params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_sample_report() {
        let r = LatencyReport::from_samples(vec![3.5], 0, "test").unwrap();
        assert_eq!((r.p50, r.p90, r.p99, r.mean, r.min), (3.5, 3.5, 3.5, 3.5, 3.5));
    }

    #[test]
    fn nearest_rank_examples() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&s, 50).unwrap(), 5.0);
        assert_eq!(percentile(&s, 90).unwrap(), 9.0);
        assert_eq!(percentile(&s, 99).unwrap(), 10.0);
        assert_eq!(percentile(&s, 100).unwrap(), 10.0);
        assert!(percentile(&[], 50).is_err());
    }

    #[test]
    fn constant_samples_mean_equals_p50() {
        let r = LatencyReport::from_samples(vec![7.25; 12], 2, "test").unwrap();
        assert_eq!(r.mean, r.p50);
        assert_eq!(r.with_statistic(Statistic::Mean).central(), 7.25);
    }

    #[test]
    fn zero_runs_rejected() {
        assert!(time_fn(0, 1, || Ok(())).is_err());
        let r = time_fn(3, 2, || Ok(())).unwrap();
        assert_eq!(r.samples_ms.len(), 3);
        assert_eq!(r.warmup_count, 2);
    }

    proptest! {
        #[test]
        fn percentiles_are_ordered(samples in prop::collection::vec(0.0f64..1e3, 1..100)) {
            let r = LatencyReport::from_samples(samples, 0, "p").unwrap();
            prop_assert!(r.min <= r.p50 && r.p50 <= r.p90 && r.p90 <= r.p99);
        }
    }
}
