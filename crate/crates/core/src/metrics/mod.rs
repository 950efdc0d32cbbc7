//! Fidelity metrics: RMSE, scale-invariant RMSE, mean |log10| error and REL.
//!
//! The single-map functions ([`rmse`], [`si_rmse`], [`log10_err`],
//! [`rel_err`]) are strict: a masked-in prediction that is not strictly
//! positive makes the log-based metrics fail. Dataset evaluation
//! ([`evaluate_batch`]) instead clamps such predictions to
//! [`LOG_CLAMP_FLOOR`] and counts them in the report.

mod report;
mod score;

pub use report::{Aggregation, EvalReport, ImageMetrics, EVAL_SCHEMA};
pub use score::{
    calibrate_c, final_score, rank_entries, LeaderboardEntry, RankedEntry, ReferenceResult,
    ScoreParams, CHALLENGE_RESULTS, REFERENCE_ROW,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{validity_intersection, DepthMap, Mask};

/// Depth substituted for non-positive predictions in log metrics, in meters.
pub const LOG_CLAMP_FLOOR: f64 = 1e-6;

/// Root mean squared depth error over the shared mask, in meters.
pub fn rmse(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mask = validity_intersection(pred, gt)?;
    let (p, g) = (pred.values(), gt.values());
    let sum: f64 = mask.indices().map(|i| (p[i] - g[i]) * (p[i] - g[i])).sum();
    Ok((sum / mask.count() as f64).sqrt())
}

/// Standard deviation of the natural-log depth error over the shared mask.
pub fn si_rmse(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mask = validity_intersection(pred, gt)?;
    Ok(PixelStats::collect(pred, gt, &mask, LogPolicy::Strict)?.si_rmse())
}

/// Mean `|log10 pred - log10 gt|` over the shared mask.
pub fn log10_err(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mask = validity_intersection(pred, gt)?;
    Ok(PixelStats::collect(pred, gt, &mask, LogPolicy::Strict)?.log10())
}

/// Mean `|pred - gt| / gt` over the shared mask.
pub fn rel_err(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mask = validity_intersection(pred, gt)?;
    let (p, g) = (pred.values(), gt.values());
    let sum: f64 = mask.indices().map(|i| (p[i] - g[i]).abs() / g[i]).sum();
    Ok(sum / mask.count() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LogPolicy {
    Strict,
    Clamp,
}

/// Mergeable per-pixel sufficient statistics.
///
/// The log error is tracked as (count, mean, sum of squared deviations) and
/// merged with the pairwise update of Chan et al., so pooled statistics stay
/// accurate when the log errors share a large common offset.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PixelStats {
    pub n: usize,
    pub sum_sq_diff: f64,
    pub mean_log_err: f64,
    pub m2_log_err: f64,
    pub sum_abs_log10: f64,
    pub sum_rel: f64,
    pub clamped: usize,
}

impl PixelStats {
    pub(crate) fn collect(
        pred: &DepthMap,
        gt: &DepthMap,
        mask: &Mask,
        policy: LogPolicy,
    ) -> Result<Self> {
        let (p, g) = (pred.values(), gt.values());
        let mut stats = PixelStats::default();
        let mut log_err = Vec::with_capacity(mask.count());
        for i in mask.indices() {
            let (pv, gv) = (p[i], g[i]);
            let diff = pv - gv;
            stats.sum_sq_diff += diff * diff;
            stats.sum_rel += diff.abs() / gv;
            let pl = if pv > 0.0 {
                pv
            } else {
                match policy {
                    LogPolicy::Strict => return Err(Error::NonPositiveDepth { index: i, value: pv }),
                    LogPolicy::Clamp => {
                        stats.clamped += 1;
                        LOG_CLAMP_FLOOR
                    }
                }
            };
            stats.sum_abs_log10 += (pl.log10() - gv.log10()).abs();
            log_err.push(pl.ln() - gv.ln());
        }
        stats.n = log_err.len();
        if stats.n == 0 {
            return Err(Error::EmptyMask);
        }
        let mean = log_err.iter().sum::<f64>() / stats.n as f64;
        stats.mean_log_err = mean;
        stats.m2_log_err = log_err.iter().map(|e| (e - mean) * (e - mean)).sum();
        Ok(stats)
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let (na, nb) = (self.n as f64, other.n as f64);
        let delta = other.mean_log_err - self.mean_log_err;
        Self {
            n,
            sum_sq_diff: self.sum_sq_diff + other.sum_sq_diff,
            mean_log_err: self.mean_log_err + delta * nb / n as f64,
            m2_log_err: self.m2_log_err + other.m2_log_err + delta * delta * na * nb / n as f64,
            sum_abs_log10: self.sum_abs_log10 + other.sum_abs_log10,
            sum_rel: self.sum_rel + other.sum_rel,
            clamped: self.clamped + other.clamped,
        }
    }

    pub fn rmse(&self) -> f64 {
        (self.sum_sq_diff / self.n as f64).sqrt()
    }

    pub fn si_rmse(&self) -> f64 {
        (self.m2_log_err / self.n as f64).max(0.0).sqrt()
    }

    pub fn log10(&self) -> f64 {
        self.sum_abs_log10 / self.n as f64
    }

    pub fn rel(&self) -> f64 {
        self.sum_rel / self.n as f64
    }
}

/// One prediction/ground-truth pair for dataset evaluation.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub image_id: String,
    pub pred: DepthMap,
    pub gt: DepthMap,
}

/// Evaluates a dataset, fanning images out across threads.
///
/// Per-image statistics are reduced in input order so the aggregate is
/// bit-stable regardless of scheduling. Non-positive predictions are clamped
/// for the log metrics and counted in `clamped_pixels`.
pub fn evaluate_batch(pairs: &[EvalPair], aggregation: Aggregation) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyMask);
    }
    let per_image: Vec<(ImageMetrics, PixelStats)> = pairs
        .par_iter()
        .map(|pair| {
            let mask = validity_intersection(&pair.pred, &pair.gt)?;
            let stats = PixelStats::collect(&pair.pred, &pair.gt, &mask, LogPolicy::Clamp)?;
            Ok((ImageMetrics::from_stats(&pair.image_id, &stats), stats))
        })
        .collect::<Result<_>>()?;

    let pooled = per_image
        .iter()
        .fold(PixelStats::default(), |acc, (_, s)| acc.merge(s));
    let (rmse, si_rmse, log10, rel) = match aggregation {
        Aggregation::PixelPooled => (pooled.rmse(), pooled.si_rmse(), pooled.log10(), pooled.rel()),
        Aggregation::PerImageMean => {
            let k = per_image.len() as f64;
            let mean = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(|(m, _)| f(m)).sum::<f64>() / k;
            (
                mean(|m| m.rmse),
                mean(|m| m.si_rmse),
                mean(|m| m.log10),
                mean(|m| m.rel),
            )
        }
    };
    Ok(EvalReport {
        schema: EVAL_SCHEMA.to_string(),
        aggregation,
        rmse,
        si_rmse,
        log10,
        rel,
        n_valid: pooled.n,
        clamped_pixels: pooled.clamped,
        per_image: per_image.into_iter().map(|(m, _)| m).collect(),
    })
}
