//! Virtual-normal loss.
//!
//! Triplets of pixels are drawn from the shared valid set, unprojected in
//! both the predicted and the ground-truth cloud, and the unit normals of the
//! two triangles are compared in L1. Sampling is driven by a [`SeedStream`]
//! so a `(seed, n_triplets)` pair always selects the same triplets.
//!
//! A draw is rejected when two of its pixels are closer than
//! `min_pixel_separation`, or when either 3-D triangle has an interior angle
//! below `min_angle_deg` (near-collinear points give unstable normals).

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::types::{validity_intersection, CameraIntrinsics, DepthMap};

#[derive(Debug, Clone, PartialEq)]
pub struct VnlConfig {
    pub seed: u64,
    /// Number of triplet draws, before rejection.
    pub n_triplets: usize,
    pub min_pixel_separation: f64,
    pub min_angle_deg: f64,
}

impl VnlConfig {
    pub const DEFAULT_MIN_PIXEL_SEPARATION: f64 = 3.0;
    pub const DEFAULT_MIN_ANGLE_DEG: f64 = 5.0;
    pub const MAX_TRIPLETS: usize = 100_000;

    pub fn new(seed: u64, n_triplets: usize) -> Self {
        Self {
            seed,
            n_triplets,
            min_pixel_separation: Self::DEFAULT_MIN_PIXEL_SEPARATION,
            min_angle_deg: Self::DEFAULT_MIN_ANGLE_DEG,
        }
    }

    /// Draw budget scaled to the valid pixel count: ten draws per pixel up to
    /// 10^4 pixels, then a flat 100 000.
    pub fn default_triplet_count(n_valid: usize) -> usize {
        n_valid.saturating_mul(10).clamp(1, Self::MAX_TRIPLETS)
    }
}

type Point = [f64; 3];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Unit normal of triangle `(a, b, c)`, oriented so that z > 0, ties broken
/// by y > 0 and then x > 0. `None` for degenerate triangles.
pub fn surface_normal(a: Point, b: Point, c: Point) -> Option<Point> {
    let n = cross(sub(b, a), sub(c, a));
    let len = norm(n);
    if !(len > 0.0 && len.is_finite()) {
        return None;
    }
    let mut n = [n[0] / len, n[1] / len, n[2] / len];
    let flip = n[2] < 0.0 || (n[2] == 0.0 && (n[1] < 0.0 || (n[1] == 0.0 && n[0] < 0.0)));
    if flip {
        n = [-n[0], -n[1], -n[2]];
    }
    Some(n)
}

/// Smallest interior angle of the triangle, in degrees.
fn min_interior_angle_deg(a: Point, b: Point, c: Point) -> Option<f64> {
    let angle = |p: Point, q: Point, r: Point| {
        let (u, v) = (sub(q, p), sub(r, p));
        let (nu, nv) = (norm(u), norm(v));
        if nu == 0.0 || nv == 0.0 {
            return None;
        }
        Some((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees())
    };
    let angles = [angle(a, b, c)?, angle(b, c, a)?, angle(c, a, b)?];
    Some(angles.into_iter().fold(f64::INFINITY, f64::min))
}

struct Clouds {
    width: usize,
    pixels: Vec<usize>,
    pred: Vec<Point>,
    gt: Vec<Point>,
}

fn build_clouds(pred: &DepthMap, gt: &DepthMap, k: &CameraIntrinsics) -> Result<Clouds> {
    k.validate()?;
    let mask = validity_intersection(pred, gt)?;
    let w = gt.width();
    let pixels: Vec<usize> = mask.indices().filter(|&i| pred.values()[i] > 0.0).collect();
    if pixels.len() < 3 {
        return Err(Error::InsufficientGeometry(format!(
            "{} usable points, need at least 3",
            pixels.len()
        )));
    }
    let point = |d: &DepthMap, i: usize| k.unproject_pixel((i % w) as f64, (i / w) as f64, d.values()[i]);
    Ok(Clouds {
        width: w,
        pred: pixels.iter().map(|&i| point(pred, i)).collect(),
        gt: pixels.iter().map(|&i| point(gt, i)).collect(),
        pixels,
    })
}

fn pixel_distance(width: usize, a: usize, b: usize) -> f64 {
    let (ra, ca) = ((a / width) as f64, (a % width) as f64);
    let (rb, cb) = ((b / width) as f64, (b % width) as f64);
    ((ra - rb).powi(2) + (ca - cb).powi(2)).sqrt()
}

/// Accepted triplets as indices into the shared valid-pixel list.
fn accepted(clouds: &Clouds, cfg: &VnlConfig) -> Result<Vec<[usize; 3]>> {
    if cfg.n_triplets == 0 {
        return Err(Error::Domain("n_triplets must be at least 1".into()));
    }
    let n = clouds.pixels.len() as u64;
    let mut rng = SeedStream::new(cfg.seed);
    let mut out = Vec::new();
    for _ in 0..cfg.n_triplets {
        let t = [
            rng.uniform_below(n) as usize,
            rng.uniform_below(n) as usize,
            rng.uniform_below(n) as usize,
        ];
        let px = t.map(|j| clouds.pixels[j]);
        let separated = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .all(|&(a, b)| pixel_distance(clouds.width, px[a], px[b]) >= cfg.min_pixel_separation);
        if !separated {
            continue;
        }
        let well_shaped = [&clouds.pred, &clouds.gt].iter().all(|cloud| {
            min_interior_angle_deg(cloud[t[0]], cloud[t[1]], cloud[t[2]])
                .is_some_and(|a| a >= cfg.min_angle_deg)
        });
        if well_shaped {
            out.push(t);
        }
    }
    Ok(out)
}

/// Pixel indices (row-major) of the triplets the loss would use.
pub fn sample_vnl_triplets(
    pred: &DepthMap,
    gt: &DepthMap,
    k: &CameraIntrinsics,
    cfg: &VnlConfig,
) -> Result<Vec<[usize; 3]>> {
    let clouds = build_clouds(pred, gt, k)?;
    Ok(accepted(&clouds, cfg)?
        .into_iter()
        .map(|t| t.map(|j| clouds.pixels[j]))
        .collect())
}

/// Mean L1 gap between predicted and ground-truth normals over accepted
/// triplets.
pub fn vnl_loss(pred: &DepthMap, gt: &DepthMap, k: &CameraIntrinsics, cfg: &VnlConfig) -> Result<f64> {
    let clouds = build_clouds(pred, gt, k)?;
    let triplets = accepted(&clouds, cfg)?;
    let mut sum = 0.0;
    let mut m = 0usize;
    for t in &triplets {
        let normal = |c: &[Point]| surface_normal(c[t[0]], c[t[1]], c[t[2]]);
        if let (Some(np), Some(ng)) = (normal(&clouds.pred), normal(&clouds.gt)) {
            sum += (np[0] - ng[0]).abs() + (np[1] - ng[1]).abs() + (np[2] - ng[2]).abs();
            m += 1;
        }
    }
    if m == 0 {
        return Err(Error::InsufficientGeometry(format!(
            "no triplet accepted out of {} draws",
            cfg.n_triplets
        )));
    }
    Ok(sum / m as f64)
}
