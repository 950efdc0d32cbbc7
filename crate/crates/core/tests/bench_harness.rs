use std::cell::Cell;

use depthbench_core::bench::{
    percentile, score_run, time_fn, time_inference, LatencyReport, Statistic, LATENCY_SCHEMA,
};
use depthbench_core::engine::{GraphSpec, WeightStore};
use depthbench_core::metrics::{Aggregation, EvalReport, ScoreParams, CHALLENGE_RESULTS, EVAL_SCHEMA};
use depthbench_core::rng::SeedStream;
use depthbench_core::{Error, RgbImage};

/// Nearest rank by counting: smallest sample with at least p% of the set
/// at or below it.
fn percentile_oracle(samples: &[f64], p: u32) -> f64 {
    let mut candidates = samples.to_vec();
    candidates.sort_by(f64::total_cmp);
    *candidates
        .iter()
        .find(|&&v| {
            let at_or_below = samples.iter().filter(|&&s| s <= v).count();
            100 * at_or_below >= p as usize * samples.len()
        })
        .unwrap()
}

#[test]
fn percentile_matches_counting_oracle() {
    let mut rng = SeedStream::new(30);
    for n in 1..=100 {
        // Distinct values so counting and ranking coincide.
        let mut samples: Vec<f64> = (0..n).map(|i| i as f64 + rng.uniform_f64(0.0, 0.5)).collect();
        rng.shuffle(&mut samples);
        for p in [1, 10, 25, 50, 75, 90, 99, 100] {
            assert_eq!(percentile(&samples, p).unwrap(), percentile_oracle(&samples, p), "n={n} p={p}");
        }
    }
    assert!(percentile(&[], 50).is_err());
    assert!(percentile(&[1.0], 0).is_err());
    assert!(percentile(&[1.0], 101).is_err());
}

#[test]
fn report_statistics_from_known_samples() {
    let samples: Vec<f64> = (1..=10).rev().map(f64::from).collect();
    let r = LatencyReport::from_samples(samples.clone(), 2, "fixture").unwrap();
    assert_eq!(r.schema, LATENCY_SCHEMA);
    assert_eq!(r.samples_ms, samples, "run order is preserved");
    assert_eq!((r.p50, r.p90, r.p99, r.min), (5.0, 9.0, 10.0, 1.0));
    assert_eq!(r.mean, 5.5);
    assert_eq!(r.central(), 5.0);
    assert_eq!(r.clone().with_statistic(Statistic::Mean).central(), 5.5);
    assert!(LatencyReport::from_samples(vec![1.0, f64::NAN], 0, "x").is_err());
    assert!(LatencyReport::from_samples(vec![-1.0], 0, "x").is_err());

    let json = r.to_json().unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["statistic"], "p50");
    assert_eq!(value["warmup_count"], 2);
    assert_eq!(serde_json::from_str::<LatencyReport>(&json).unwrap(), r);
}

#[test]
fn warmup_runs_are_discarded() {
    let calls = Cell::new(0);
    let r = time_fn(4, 3, || {
        calls.set(calls.get() + 1);
        Ok(())
    })
    .unwrap();
    assert_eq!(calls.get(), 7);
    assert_eq!(r.samples_ms.len(), 4);
    assert_eq!(r.warmup_count, 3);

    let single = time_fn(1, 0, || Ok(())).unwrap();
    assert_eq!(single.samples_ms.len(), 1);
    assert_eq!(single.p50, single.p99);

    assert!(matches!(time_fn(0, 1, || Ok(())), Err(Error::Config(_))));
    let failing = time_fn(3, 0, || Err(Error::Domain("boom".into())));
    assert!(matches!(failing, Err(Error::Domain(_))));
}

fn eval_with(si_rmse: f64) -> EvalReport {
    EvalReport {
        schema: EVAL_SCHEMA.into(),
        aggregation: Aggregation::PixelPooled,
        rmse: 0.0,
        si_rmse,
        log10: 0.0,
        rel: 0.0,
        n_valid: 1,
        clamped_pixels: 0,
        per_image: Vec::new(),
    }
}

#[test]
fn scoring_a_run_uses_the_chosen_statistic() {
    let top = &CHALLENGE_RESULTS[0];
    let latency = LatencyReport::from_samples(vec![top.runtime_ms; 5], 0, "fixture").unwrap();
    let scored = score_run(&latency, &eval_with(top.si_rmse), &ScoreParams::calibrated()).unwrap();
    assert!((scored.score - f64::from(top.final_score)).abs() <= 1.0, "{}", scored.score);
    assert_eq!(scored.statistic, Statistic::P50);

    let skewed = LatencyReport::from_samples(vec![10.0, 10.0, 40.0], 0, "fixture").unwrap();
    let c = ScoreParams::new(1.0).unwrap();
    let by_median = score_run(&skewed, &eval_with(0.0), &c).unwrap();
    let by_mean = score_run(&skewed.with_statistic(Statistic::Mean), &eval_with(0.0), &c).unwrap();
    assert_eq!(by_median.score, 0.1);
    assert_eq!(by_mean.score, 0.05);
}

#[test]
fn timing_a_small_graph() {
    let graph = GraphSpec::from_json(
        r#"{
          "schema": "depthbench-graph/1",
          "name": "probe",
          "input": {"id": "image", "shape": [1, 8, 8, 3]},
          "nodes": [
            {"id": "conv", "op": "conv2d", "inputs": ["image"], "params": {"out_channels": 2, "kernel": 3, "padding": 1}, "shape": [1, 8, 8, 2]},
            {"id": "act", "op": "relu", "inputs": ["conv"], "shape": [1, 8, 8, 2]}
          ],
          "outputs": ["act"]
        }"#,
    )
    .unwrap();
    let weights = WeightStore::random_for(&graph, 2);
    let input = RgbImage::new(8, 8, vec![0.25; 192]).unwrap();
    let r = time_inference(&graph, &weights, &input, 6, 1).unwrap();
    assert_eq!(r.samples_ms.len(), 6);
    assert!(r.min <= r.p50 && r.p50 <= r.p90 && r.p90 <= r.p99);

    let wrong = RgbImage::new(4, 4, vec![0.0; 48]).unwrap();
    assert!(matches!(time_inference(&graph, &weights, &wrong, 2, 0), Err(Error::Shape(_))));
}
