//! Dense row-major tensors.
//!
//! Engine activations are rank-4 `[batch, height, width, channels]` (NHWC)
//! tensors of `f32`. Loss-side feature maps use `f64` and may be rank 3
//! (`[height, width, channels]`) or rank 4 with a batch of one.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Copy> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!(
                "tensor extents must be >= 1, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: Vec<usize>, value: T) -> Result<Self> {
        let n: usize = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let n: usize = shape.iter().product();
        Self::new(shape, (0..n).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `[n, h, w, c]` view of a rank-4 tensor.
    pub fn nhwc(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [n, h, w, c] => Ok([n, h, w, c]),
            _ => Err(Error::Shape(format!(
                "expected a rank-4 NHWC tensor, got {:?}",
                self.shape
            ))),
        }
    }

    /// `[h, w, c]` of a rank-3 tensor or a rank-4 tensor with batch 1.
    pub fn hwc(&self) -> Result<[usize; 3]> {
        match self.shape[..] {
            [h, w, c] => Ok([h, w, c]),
            [1, h, w, c] => Ok([h, w, c]),
            _ => Err(Error::Shape(format!(
                "expected [h, w, c] or [1, h, w, c], got {:?}",
                self.shape
            ))),
        }
    }
}

impl Tensor<f32> {
    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    /// Largest absolute elementwise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f32> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        self.map(f64::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch_and_zero_extent() {
        assert!(Tensor::new(vec![2, 2], vec![0.0f32; 3]).is_err());
        assert!(Tensor::new(vec![2, 0], Vec::<f32>::new()).is_err());
        assert!(Tensor::new(vec![], vec![1.0f32]).is_err());
    }

    #[test]
    fn hwc_accepts_unit_batch() {
        let t = Tensor::<f64>::full(vec![1, 2, 3, 4], 0.0).unwrap();
        assert_eq!(t.hwc().unwrap(), [2, 3, 4]);
        let t = Tensor::<f64>::full(vec![2, 2, 3, 4], 0.0).unwrap();
        assert!(t.hwc().is_err());
    }
}
