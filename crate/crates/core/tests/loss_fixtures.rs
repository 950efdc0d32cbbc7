use depthbench_core::losses::{
    depth_loss, depth_loss_terms, multi_level_distill_loss, pairwise_distill_loss, robust_rho, silog_loss,
    stage2_loss, vnl_loss, DepthLossConfig, DepthLossWeights, DistillLevel, RobustParams, SilogParams, VnlConfig,
};
use depthbench_core::rng::SeedStream;
use depthbench_core::{CameraIntrinsics, DepthMap, Tensor};
use proptest::prelude::*;

fn fixture(seed: u64, h: usize, w: usize) -> (DepthMap, DepthMap) {
    let mut rng = SeedStream::new(seed);
    let gt: Vec<f64> = (0..h * w).map(|i| 2.0 + (i % w) as f64 * 0.3 + rng.uniform_f64(0.0, 0.5)).collect();
    let pred: Vec<f64> = gt.iter().map(|g| g * rng.uniform_f64(0.8, 1.25)).collect();
    let mut valid = vec![true; h * w];
    valid[5] = false;
    valid[h * w - 2] = false;
    (
        DepthMap::from_values(h, w, pred).unwrap(),
        DepthMap::new(h, w, gt, valid).unwrap(),
    )
}

/// Two-pass form: alpha * sqrt(var(e) + (1 - lambda) * mean(e)^2).
fn silog_oracle(pred: &DepthMap, gt: &DepthMap, alpha: f64, lambda: f64) -> f64 {
    let e: Vec<f64> = (0..gt.len())
        .filter(|&i| gt.valid()[i] && pred.valid()[i])
        .map(|i| (pred.values()[i] / gt.values()[i]).ln())
        .collect();
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    alpha * (var + (1.0 - lambda) * mean * mean).sqrt()
}

/// Separate gradient images, then an L1 over pixels that own a difference.
fn gradient_oracle(pred: &DepthMap, gt: &DepthMap) -> f64 {
    let (h, w) = (gt.height(), gt.width());
    let ok = |r: usize, c: usize| gt.is_valid_at(r, c) && pred.is_valid_at(r, c);
    let d = |r: usize, c: usize| pred.value_at(r, c) - gt.value_at(r, c);
    let mut total = 0.0;
    let mut owners = 0;
    for r in 0..h {
        for c in 0..w {
            let dx = (c + 1 < w && ok(r, c) && ok(r, c + 1)).then(|| (d(r, c + 1) - d(r, c)).abs());
            let dy = (r + 1 < h && ok(r, c) && ok(r + 1, c)).then(|| (d(r + 1, c) - d(r, c)).abs());
            if dx.is_some() || dy.is_some() {
                owners += 1;
            }
            total += dx.unwrap_or(0.0) + dy.unwrap_or(0.0);
        }
    }
    total / owners as f64
}

fn robust_oracle(pred: &DepthMap, gt: &DepthMap, alpha: f64, c: f64) -> f64 {
    let b = (alpha - 2.0).abs();
    let e: Vec<f64> = (0..gt.len())
        .filter(|&i| gt.valid()[i])
        .map(|i| pred.values()[i].ln() - gt.values()[i].ln())
        .collect();
    e.iter()
        .map(|x| (b / alpha) * (((x / c).powi(2) / b + 1.0).powf(alpha / 2.0) - 1.0))
        .sum::<f64>()
        / e.len() as f64
}

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(10.0, 10.0, 3.5, 3.5).unwrap()
}

fn config(weights: DepthLossWeights) -> DepthLossConfig {
    DepthLossConfig {
        weights,
        silog: SilogParams::new(10.0, 0.85).unwrap(),
        robust: RobustParams::new(1.0, 0.5).unwrap(),
        vnl: VnlConfig::new(9, 400),
    }
}

#[test]
fn depth_loss_is_the_weighted_sum_of_its_terms() {
    let (pred, gt) = fixture(1, 8, 8);
    let weights = DepthLossWeights::default();
    let cfg = config(weights);
    let k = intrinsics();

    let silog = silog_oracle(&pred, &gt, 10.0, 0.85);
    let gradient = gradient_oracle(&pred, &gt);
    let robust = robust_oracle(&pred, &gt, 1.0, 0.5);
    let vnl = vnl_loss(&pred, &gt, &k, &cfg.vnl).unwrap();
    assert!(vnl > 0.0);

    let terms = depth_loss_terms(&pred, &gt, &k, &cfg).unwrap();
    assert!((terms.silog - silog).abs() <= 1e-12);
    assert!((terms.gradient - gradient).abs() <= 1e-12);
    assert!((terms.robust - robust).abs() <= 1e-12);
    assert_eq!(terms.vnl, vnl);

    let expected = weights.silog * silog + weights.gradient * gradient + weights.vnl * vnl + weights.robust * robust;
    assert!((depth_loss(&pred, &gt, &k, &cfg).unwrap() - expected).abs() <= 1e-12);
}

#[test]
fn zero_weights_drop_terms() {
    let (pred, gt) = fixture(2, 8, 8);
    let only_silog = DepthLossWeights {
        silog: 1.0,
        gradient: 0.0,
        vnl: 0.0,
        robust: 0.0,
        distill: 0.0,
    };
    let got = depth_loss(&pred, &gt, &intrinsics(), &config(only_silog)).unwrap();
    assert!((got - silog_oracle(&pred, &gt, 10.0, 0.85)).abs() <= 1e-12);

    let negative = DepthLossWeights { gradient: -1.0, ..only_silog };
    assert!(depth_loss(&pred, &gt, &intrinsics(), &config(negative)).is_err());
}

#[test]
fn perfect_prediction_costs_nothing() {
    let (_, gt) = fixture(3, 8, 8);
    let pred = DepthMap::from_values(8, 8, gt.values().to_vec()).unwrap();
    assert_eq!(depth_loss(&pred, &gt, &intrinsics(), &config(DepthLossWeights::default())).unwrap(), 0.0);
}

#[test]
fn stage2_adds_weighted_distillation() {
    assert_eq!(stage2_loss(1.5, 0.25, 10.0).unwrap(), 4.0);
    assert_eq!(stage2_loss(1.5, 0.25, 0.0).unwrap(), 1.5);
    assert!(stage2_loss(1.5, 0.25, -1.0).is_err());
    assert!(stage2_loss(1.5, 0.25, f64::NAN).is_err());
}

/// Builds both affinity matrices explicitly.
fn pairwise_oracle(s: &Tensor<f64>, t: &Tensor<f64>) -> f64 {
    fn affinity(f: &Tensor<f64>) -> Vec<Vec<f64>> {
        let (h, w, c) = (f.shape()[0], f.shape()[1], f.shape()[2]);
        let v: Vec<&[f64]> = f.data().chunks(c).collect();
        let norm = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
        (0..h * w)
            .map(|i| {
                (0..h * w)
                    .map(|j| v[i].iter().zip(v[j]).map(|(a, b)| a * b).sum::<f64>() / (norm(v[i]) * norm(v[j])))
                    .collect()
            })
            .collect()
    }
    let (a, b) = (affinity(s), affinity(t));
    let n = a.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            sum += (a[i][j] - b[i][j]).powi(2);
        }
    }
    sum / n as f64
}

#[test]
fn pairwise_distillation_matches_explicit_affinities() {
    let mut rng = SeedStream::new(4);
    let student = Tensor::from_fn(vec![6, 6, 4], |_| rng.uniform_f64(-1.0, 1.0)).unwrap();
    let teacher = Tensor::from_fn(vec![6, 6, 7], |_| rng.uniform_f64(-1.0, 1.0)).unwrap();
    let got = pairwise_distill_loss(&student, &teacher).unwrap();
    assert!((got - pairwise_oracle(&student, &teacher)).abs() <= 1e-12);
    assert_eq!(pairwise_distill_loss(&teacher, &teacher).unwrap(), 0.0);

    let levels = [
        DistillLevel { student: &student, teacher: &teacher, weight: 2.0 },
        DistillLevel { student: &teacher, teacher: &teacher, weight: 5.0 },
    ];
    assert!((multi_level_distill_loss(&levels).unwrap() - 2.0 * got).abs() <= 1e-12);

    let wrong = Tensor::from_fn(vec![3, 6, 4], |_| 1.0).unwrap();
    assert!(pairwise_distill_loss(&wrong, &teacher).is_err());
}

#[test]
fn robust_family_members() {
    // Named special cases: L2 at 2, Charbonnier-like at 1, Cauchy at 0.
    let c = 0.7;
    for x in [-3.0, -0.2, 0.0, 0.4, 5.0] {
        let z: f64 = x / c;
        let l2 = robust_rho(x, &RobustParams::new(2.0, c).unwrap());
        let pseudo_huber = robust_rho(x, &RobustParams::new(1.0, c).unwrap());
        let cauchy = robust_rho(x, &RobustParams::new(0.0, c).unwrap());
        assert!((l2 - 0.5 * z * z).abs() <= 1e-12);
        assert!((pseudo_huber - ((z * z + 1.0).sqrt() - 1.0)).abs() <= 1e-12);
        assert!((cauchy - (0.5 * z * z + 1.0).ln()).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn full_lambda_silog_ignores_global_scale(
        seed in 0u64..1000,
        scale in 0.05f64..20.0,
    ) {
        let (pred, gt) = fixture(seed, 5, 7);
        let p = SilogParams::new(10.0, 1.0).unwrap();
        let base = silog_loss(&pred, &gt, &p).unwrap();
        let moved = silog_loss(&pred.scaled(scale), &gt, &p).unwrap();
        prop_assert!((base - moved).abs() <= 1e-6, "{base} vs {moved}");
        prop_assert!((base - silog_oracle(&pred, &gt, 10.0, 1.0)).abs() <= 1e-6);
    }

    #[test]
    fn silog_grows_with_alpha(seed in 0u64..1000, alpha in 0.1f64..50.0) {
        let (pred, gt) = fixture(seed, 4, 4);
        let one = silog_loss(&pred, &gt, &SilogParams::new(1.0, 0.5).unwrap()).unwrap();
        let scaled = silog_loss(&pred, &gt, &SilogParams::new(alpha, 0.5).unwrap()).unwrap();
        prop_assert!((scaled - alpha * one).abs() <= 1e-9 * alpha.max(1.0));
    }
}
