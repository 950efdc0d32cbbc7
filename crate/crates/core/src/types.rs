//! Depth maps, RGB images, validity masks and pinhole camera geometry.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Depth cap of the capture rig, in meters.
pub const DEFAULT_MAX_DEPTH: f64 = 50.0;

/// Native sensor resolution.
pub const VGA_WIDTH: usize = 640;
pub const VGA_HEIGHT: usize = 480;

/// Per-pixel metric depth with a validity mask.
///
/// Valid pixels always hold a depth in `(0, max_depth]`. Invalid pixels may
/// carry any finite value (a decoded out-of-range reading, or zero); they are
/// ignored by every metric and loss.
///
/// Predictions go through [`DepthMap::from_prediction`], which marks every
/// pixel valid and only requires finite values: a model may emit zero or
/// negative depth and the metrics decide how to treat it.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Ground-truth style constructor with the default 50 m cap.
    pub fn new(height: usize, width: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        Self::with_max_depth(height, width, values, valid, DEFAULT_MAX_DEPTH)
    }

    pub fn with_max_depth(
        height: usize,
        width: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
        max_depth: f64,
    ) -> Result<Self> {
        check_dims(height, width, values.len())?;
        if valid.len() != values.len() {
            return Err(Error::Shape(format!(
                "mask has {} entries, values have {}",
                valid.len(),
                values.len()
            )));
        }
        for (index, (&value, &ok)) in values.iter().zip(&valid).enumerate() {
            if !value.is_finite() {
                return Err(Error::InvalidDepth {
                    index,
                    value,
                    reason: "not finite",
                });
            }
            if ok && !(value > 0.0 && value <= max_depth) {
                return Err(Error::InvalidDepth {
                    index,
                    value,
                    reason: "valid pixel outside (0, max_depth]",
                });
            }
        }
        Ok(Self {
            height,
            width,
            values,
            valid,
        })
    }

    /// Derives the mask from the values: valid iff `0 < v <= 50`.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values
            .iter()
            .map(|&v| v > 0.0 && v <= DEFAULT_MAX_DEPTH)
            .collect();
        Self::new(height, width, values, valid)
    }

    /// Model output: every pixel valid, values only need to be finite.
    pub fn from_prediction(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDepth {
                index,
                value: values[index],
                reason: "not finite",
            });
        }
        let valid = vec![true; values.len()];
        Ok(Self {
            height,
            width,
            values,
            valid,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn value_at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn is_valid_at(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.width + col]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Multiplies every value by `s` and keeps the mask (no range check, so a
    /// scaled ground truth may exceed the cap).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| v * s).collect(),
            valid: self.valid.clone(),
        }
    }

    /// Applies `f` to every value, keeping the mask untouched.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
            valid: self.valid.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        height: usize,
        width: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(values.len(), height * width);
        debug_assert_eq!(valid.len(), height * width);
        Self {
            height,
            width,
            values,
            valid,
        }
    }
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Shape(format!(
            "depth map must be non-empty, got {height}x{width}"
        )));
    }
    if height * width != len {
        return Err(Error::Shape(format!(
            "{height}x{width} map needs {} values, got {len}",
            height * width
        )));
    }
    Ok(())
}

/// Interleaved HWC RGB image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl RgbImage {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width * Self::CHANNELS {
            return Err(Error::Shape(format!(
                "{height}x{width}x3 image needs {} values, got {}",
                height * width * Self::CHANNELS,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "rgb intensity {} at {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// `[1, h, w, 3]` engine input.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(
            vec![1, self.height, self.width, Self::CHANNELS],
            self.values.clone(),
        )
        .expect("image dimensions are validated at construction")
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::Domain(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Domain("principal point must be finite".into()));
        }
        Ok(())
    }

    /// Back-projects pixel `(u, v)` at depth `d`.
    pub fn unproject_pixel(&self, u: f64, v: f64, d: f64) -> [f64; 3] {
        [(u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d]
    }

    /// Projects a camera-frame point back to `(u, v, d)`.
    pub fn project(&self, p: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = p;
        [self.fx * x / z + self.cx, self.fy * y / z + self.cy, z]
    }
}

impl Default for CameraIntrinsics {
    /// Nominal VGA intrinsics (square pixels, centered principal point). The
    /// capture rig's calibration is not public; override via configuration.
    fn default() -> Self {
        Self {
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
        }
    }
}

/// Boolean pixel mask with its population count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
    count: usize,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let count = bits.iter().filter(|&&b| b).count();
        Self { bits, count }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }
}

pub(crate) fn check_same_dims(a: &DepthMap, b: &DepthMap) -> Result<()> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::Shape(format!(
            "depth maps differ: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// Pixels valid in both maps. Fails with `EmptyMask` when none are.
pub fn validity_intersection(pred: &DepthMap, gt: &DepthMap) -> Result<Mask> {
    check_same_dims(pred, gt)?;
    let bits: Vec<bool> = pred.valid.iter().zip(&gt.valid).map(|(a, b)| *a && *b).collect();
    let mask = Mask::from_bits(bits);
    if mask.count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

/// Camera-frame point cloud aligned with the source depth map.
///
/// Masked-out pixels hold `(0, 0, 0)` and must be skipped via `valid`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Tensor<f64>,
    pub valid: Mask,
}

impl PointCloud {
    pub fn point(&self, index: usize) -> [f64; 3] {
        let p = &self.points.data()[index * 3..index * 3 + 3];
        [p[0], p[1], p[2]]
    }
}

/// Unprojects every valid pixel to a `[h, w, 3]` point cloud.
pub fn unproject(depth: &DepthMap, k: &CameraIntrinsics) -> Result<PointCloud> {
    k.validate()?;
    let mask = Mask::from_bits(depth.valid.clone());
    if mask.count == 0 {
        return Err(Error::EmptyMask);
    }
    let mut points = vec![0.0; depth.len() * 3];
    for i in mask.indices() {
        let (v, u) = (i / depth.width, i % depth.width);
        let p = k.unproject_pixel(u as f64, v as f64, depth.values[i]);
        points[i * 3..i * 3 + 3].copy_from_slice(&p);
    }
    Ok(PointCloud {
        points: Tensor::new(vec![depth.height, depth.width, 3], points)?,
        valid: mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 120.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let mut values = vec![1.0; 3 * 5];
        values[5 + 2] = 5.0; // (u=2, v=1) is the principal point
        let d = DepthMap::from_values(3, 5, values).unwrap();
        let pc = unproject(&d, &k()).unwrap();
        assert_eq!(pc.point(5 + 2), [0.0, 0.0, 5.0]);
    }

    #[test]
    fn unit_focal_offset_gives_unit_slope() {
        let k = CameraIntrinsics::new(2.0, 3.0, 1.0, 0.0).unwrap();
        // (u, v) = (cx + fx, cy) = (3, 0) at d = 2
        let d = DepthMap::from_values(1, 4, vec![1.0, 1.0, 1.0, 2.0]).unwrap();
        let pc = unproject(&d, &k).unwrap();
        assert_eq!(pc.point(3), [2.0, 0.0, 2.0]);
    }

    #[test]
    fn invalid_pixels_are_excluded_and_zeroed() {
        let d = DepthMap::from_values(1, 3, vec![0.0, 2.0, 3.0]).unwrap();
        let pc = unproject(&d, &k()).unwrap();
        assert!(!pc.valid.get(0));
        assert_eq!(pc.valid.count(), 2);
        assert_eq!(pc.point(0), [0.0; 3]);
        assert!(pc.points.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn unproject_requires_a_valid_pixel() {
        let d = DepthMap::from_values(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(unproject(&d, &k()), Err(Error::EmptyMask)));
    }

    #[test]
    fn intersection_counts() {
        let all = DepthMap::from_values(3, 3, vec![1.0; 9]).unwrap();
        let m = validity_intersection(&all, &all).unwrap();
        assert_eq!(m.count(), 9);

        let checker: Vec<f64> = (0..9)
            .map(|i| if (i / 3 + i % 3) % 2 == 0 { 1.0 } else { 0.0 })
            .collect();
        let checker = DepthMap::from_values(3, 3, checker).unwrap();
        // ceil(9 / 2)
        assert_eq!(validity_intersection(&checker, &all).unwrap().count(), 5);

        let a = DepthMap::from_values(1, 2, vec![1.0, 0.0]).unwrap();
        let b = DepthMap::from_values(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(matches!(validity_intersection(&a, &b), Err(Error::EmptyMask)));

        let c = DepthMap::from_values(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(validity_intersection(&a, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn ground_truth_rejects_out_of_range_valid_pixels() {
        assert!(DepthMap::new(1, 1, vec![60.0], vec![true]).is_err());
        assert!(DepthMap::new(1, 1, vec![0.0], vec![true]).is_err());
        assert!(DepthMap::new(1, 1, vec![60.0], vec![false]).is_ok());
        assert!(DepthMap::from_prediction(1, 2, vec![-1.0, 0.0]).is_ok());
        assert!(DepthMap::from_prediction(1, 1, vec![f64::NAN]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn depth_map() -> impl Strategy<Value = DepthMap> {
            (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
                proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..50.0], h * w)
                    .prop_map(move |v| DepthMap::from_values(h, w, v).unwrap())
            })
        }

        proptest! {
            #[test]
            fn unproject_then_project_recovers_pixels(
                d in depth_map(),
                fx in 10.0f64..1000.0, fy in 10.0f64..1000.0,
                cx in -10.0f64..10.0, cy in -10.0f64..10.0,
            ) {
                let k = CameraIntrinsics::new(fx, fy, cx, cy).unwrap();
                if let Ok(pc) = unproject(&d, &k) {
                    for i in pc.valid.indices() {
                        let [u, v, z] = k.project(pc.point(i));
                        prop_assert!((u - (i % d.width()) as f64).abs() < 1e-9);
                        prop_assert!((v - (i / d.width()) as f64).abs() < 1e-9);
                        prop_assert!((z - d.values()[i]).abs() < 1e-9);
                    }
                }
            }

            #[test]
            fn intersection_commutes_and_is_idempotent(
                (a, b) in (1usize..5, 1usize..5).prop_flat_map(|(h, w)| {
                    let m = proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], h * w)
                        .prop_map(move |v| DepthMap::from_values(h, w, v).unwrap());
                    (m.clone(), m)
                })
            ) {
                let ab = validity_intersection(&a, &b).ok();
                let ba = validity_intersection(&b, &a).ok();
                prop_assert_eq!(&ab, &ba);
                if let Some(m) = ab {
                    let masked = DepthMap::new(
                        a.height(), a.width(), a.values().to_vec(), m.bits().to_vec(),
                    ).unwrap();
                    let again = validity_intersection(&masked, &masked).unwrap();
                    prop_assert_eq!(again, m);
                }
            }
        }
    }
}
