//! Forward-only depth losses and feature distillation losses.
//!
//! Every loss here operates on the validity intersection of prediction and
//! ground truth and is exactly zero for a perfect prediction.

mod distill;
mod robust;
mod vnl;

pub use distill::{
    multi_level_distill_loss, pairwise_affinity, pairwise_distill_loss, DistillLevel,
    AFFINITY_NORM_FLOOR,
};
pub use robust::{robust_loss, robust_rho, RobustForm, RobustParams};
pub use vnl::{sample_vnl_triplets, surface_normal, vnl_loss, VnlConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::types::{validity_intersection, CameraIntrinsics, DepthMap, Mask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilogParams {
    alpha: f64,
    lambda: f64,
}

impl SilogParams {
    /// `alpha` scales the result, `lambda` in `[0, 1]` sets how much of the
    /// mean log error is forgiven (1 = fully scale invariant).
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("silog alpha must be positive, got {alpha}")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain(format!("silog lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(Self { alpha, lambda })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Term weights for [`depth_loss`] and [`stage2_loss`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DepthLossWeights {
    pub silog: f64,
    pub gradient: f64,
    pub vnl: f64,
    pub robust: f64,
    pub distill: f64,
}

impl DepthLossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.silog, self.gradient, self.vnl, self.robust, self.distill];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Domain(format!("loss weights must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

impl Default for DepthLossWeights {
    fn default() -> Self {
        Self {
            silog: 1.0,
            gradient: 0.25,
            vnl: 2.5,
            robust: 0.6,
            distill: 10.0,
        }
    }
}

/// Log-depth errors `ln(pred) - ln(gt)` over the shared mask.
fn log_errors(pred: &DepthMap, gt: &DepthMap) -> Result<(Mask, Vec<f64>)> {
    let mask = validity_intersection(pred, gt)?;
    let (p, g) = (pred.values(), gt.values());
    let e = mask
        .indices()
        .map(|i| {
            if p[i] <= 0.0 {
                return Err(Error::NonPositiveDepth { index: i, value: p[i] });
            }
            Ok(p[i].ln() - g[i].ln())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((mask, e))
}

/// Scale-invariant log loss `alpha * sqrt(mean(e^2) - lambda * mean(e)^2)`.
pub fn silog_loss(pred: &DepthMap, gt: &DepthMap, p: &SilogParams) -> Result<f64> {
    let (_, e) = log_errors(pred, gt)?;
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let mean_sq = e.iter().map(|x| x * x).sum::<f64>() / n;
    let radicand = (mean_sq - p.lambda * mean * mean).max(0.0);
    Ok(p.alpha * radicand.sqrt())
}

/// L1 distance between forward-difference gradients of prediction and truth.
///
/// `d/dx` at `(r, c)` uses `(r, c + 1) - (r, c)`, `d/dy` uses `(r + 1, c) - (r, c)`;
/// a difference only counts when both of its pixels lie in the shared mask.
/// The sum is divided by the number of pixel positions contributing at least
/// one difference.
pub fn gradient_loss(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let mask = validity_intersection(pred, gt)?;
    let (h, w) = (gt.height(), gt.width());
    let (p, g) = (pred.values(), gt.values());
    let mut sum = 0.0;
    let mut positions = 0usize;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !mask.get(i) {
                continue;
            }
            let mut counted = false;
            if c + 1 < w && mask.get(i + 1) {
                sum += ((p[i + 1] - p[i]) - (g[i + 1] - g[i])).abs();
                counted = true;
            }
            if r + 1 < h && mask.get(i + w) {
                sum += ((p[i + w] - p[i]) - (g[i + w] - g[i])).abs();
                counted = true;
            }
            positions += usize::from(counted);
        }
    }
    if positions == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / positions as f64)
}

/// Everything [`depth_loss`] needs besides the maps and intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLossConfig {
    pub weights: DepthLossWeights,
    pub silog: SilogParams,
    pub robust: RobustParams,
    pub vnl: VnlConfig,
}

/// Unweighted term values. Terms with zero weight are not evaluated and
/// read as zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DepthLossTerms {
    pub silog: f64,
    pub gradient: f64,
    pub vnl: f64,
    pub robust: f64,
}

impl DepthLossTerms {
    pub fn weighted_sum(&self, w: &DepthLossWeights) -> f64 {
        w.silog * self.silog + w.gradient * self.gradient + w.vnl * self.vnl + w.robust * self.robust
    }
}

pub fn depth_loss_terms(
    pred: &DepthMap,
    gt: &DepthMap,
    k: &CameraIntrinsics,
    cfg: &DepthLossConfig,
) -> Result<DepthLossTerms> {
    cfg.weights.validate()?;
    let w = &cfg.weights;
    let mut terms = DepthLossTerms::default();
    if w.silog > 0.0 {
        terms.silog = silog_loss(pred, gt, &cfg.silog)?;
    }
    if w.gradient > 0.0 {
        terms.gradient = gradient_loss(pred, gt)?;
    }
    if w.vnl > 0.0 {
        terms.vnl = vnl_loss(pred, gt, k, &cfg.vnl)?;
    }
    if w.robust > 0.0 {
        let (_, e) = log_errors(pred, gt)?;
        let residual = Tensor::new(vec![e.len()], e)?;
        terms.robust = robust_loss(&residual, &cfg.robust)?;
    }
    Ok(terms)
}

/// Weighted sum of SILog, gradient, virtual-normal and robust terms, the
/// robust term taking the log-depth residuals as its argument.
pub fn depth_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    k: &CameraIntrinsics,
    cfg: &DepthLossConfig,
) -> Result<f64> {
    Ok(depth_loss_terms(pred, gt, k, cfg)?.weighted_sum(&cfg.weights))
}

/// Fine-tuning objective: depth loss plus weighted distillation.
pub fn stage2_loss(depth: f64, distill: f64, w_distill: f64) -> Result<f64> {
    if !(w_distill >= 0.0 && w_distill.is_finite()) {
        return Err(Error::Domain(format!("distillation weight must be non-negative, got {w_distill}")));
    }
    Ok(depth + w_distill * distill)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> DepthMap {
        DepthMap::from_values(1, values.len(), values.to_vec()).unwrap()
    }

    fn grid(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> DepthMap {
        DepthMap::from_values(h, w, (0..h * w).map(|i| f(i / w, i % w)).collect()).unwrap()
    }

    #[test]
    fn silog_closed_forms() {
        let p = SilogParams::new(10.0, 0.85).unwrap();
        let gt = grid(4, 4, |r, c| 1.0 + r as f64 + 0.5 * c as f64);
        assert_eq!(silog_loss(&gt, &gt, &p).unwrap(), 0.0);
        // e_i = 1 everywhere
        let pred = gt.scaled(std::f64::consts::E);
        let expected = 10.0 * (1.0f64 - 0.85).sqrt();
        assert!((silog_loss(&pred, &gt, &p).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 3.8730).abs() < 1e-4);

        let full = SilogParams::new(10.0, 1.0).unwrap();
        assert!(silog_loss(&gt.scaled(3.3), &gt, &full).unwrap() < 1e-6);
    }

    #[test]
    fn silog_param_validation() {
        assert!(SilogParams::new(0.0, 0.5).is_err());
        assert!(SilogParams::new(1.0, 1.5).is_err());
        assert!(SilogParams::new(1.0, -0.1).is_err());
    }

    #[test]
    fn gradient_hand_case() {
        let gt = row(&[1.0, 2.0, 3.0]);
        let pred = row(&[1.0, 3.0, 3.0]);
        assert!((gradient_loss(&pred, &gt).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_ignores_offsets() {
        let gt = grid(5, 4, |r, c| 1.0 + (r * c) as f64 * 0.3);
        assert_eq!(gradient_loss(&gt, &gt).unwrap(), 0.0);
        let shifted = gt.map_values(|v| v + 2.0);
        assert!(gradient_loss(&shifted, &gt).unwrap() < 1e-12);
    }

    #[test]
    fn gradient_needs_adjacent_valid_pixels() {
        let gt = row(&[1.0, 0.0, 2.0]);
        let pred = row(&[1.0, 1.0, 2.0]);
        assert!(matches!(gradient_loss(&pred, &gt), Err(Error::EmptyMask)));
    }

    #[test]
    fn stage2_arithmetic() {
        assert!((stage2_loss(0.5, 0.1, 10.0).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(stage2_loss(0.7, 0.0, 10.0).unwrap(), 0.7);
        assert!(stage2_loss(0.7, 0.1, -1.0).is_err());
    }

    #[test]
    fn silog_only_weights_project_to_silog() {
        let gt = grid(8, 8, |r, c| 2.0 + r as f64 * 0.4 + c as f64 * 0.1);
        let pred = grid(8, 8, |r, c| 2.1 + r as f64 * 0.35 + (c as f64 * 0.7).sin());
        let cfg = DepthLossConfig {
            weights: DepthLossWeights {
                silog: 1.0,
                gradient: 0.0,
                vnl: 0.0,
                robust: 0.0,
                distill: 0.0,
            },
            silog: SilogParams::new(10.0, 0.85).unwrap(),
            robust: RobustParams::new(1.0, 2.0).unwrap(),
            vnl: VnlConfig::new(1, 100),
        };
        let k = CameraIntrinsics::new(10.0, 10.0, 4.0, 4.0).unwrap();
        assert_eq!(
            depth_loss(&pred, &gt, &k, &cfg).unwrap(),
            silog_loss(&pred, &gt, &cfg.silog).unwrap()
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn silog_full_lambda_is_scale_invariant(
                vals in proptest::collection::vec((0.5f64..40.0, 0.5f64..40.0), 2..30),
                s in 0.1f64..10.0,
            ) {
                let (p, g): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
                let (p, g) = (row(&p), row(&g));
                let par = SilogParams::new(10.0, 1.0).unwrap();
                let a = silog_loss(&p, &g, &par).unwrap();
                let b = silog_loss(&p.scaled(s), &g, &par).unwrap();
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }

            #[test]
            fn losses_are_non_negative(
                vals in proptest::collection::vec((0.5f64..40.0, 0.5f64..40.0), 4..16),
            ) {
                let (p, g): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
                let w = 2;
                let h = p.len() / w;
                let p = DepthMap::from_values(h, w, p[..h * w].to_vec()).unwrap();
                let g = DepthMap::from_values(h, w, g[..h * w].to_vec()).unwrap();
                prop_assert!(silog_loss(&p, &g, &SilogParams::new(10.0, 0.85).unwrap()).unwrap() >= 0.0);
                prop_assert!(gradient_loss(&p, &g).unwrap() >= 0.0);
            }

            #[test]
            fn gradient_invariant_to_global_constants(
                vals in proptest::collection::vec((0.5f64..20.0, 0.5f64..20.0), 9),
                shift in 0.0f64..10.0,
            ) {
                let (p, g): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
                let p = DepthMap::from_values(3, 3, p).unwrap();
                let g = DepthMap::from_values(3, 3, g).unwrap();
                let base = gradient_loss(&p, &g).unwrap();
                let both = gradient_loss(&p.map_values(|v| v + shift), &g.map_values(|v| v + shift)).unwrap();
                let pred_only = gradient_loss(&p.map_values(|v| v + shift), &g).unwrap();
                prop_assert!((base - both).abs() < 1e-9);
                prop_assert!((base - pred_only).abs() < 1e-9);
            }
        }
    }
}
