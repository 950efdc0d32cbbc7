//! Collapsible linear blocks.
//!
//! A block is a `k x k` expansion convolution to `hidden` channels followed by
//! a `1 x 1` projection, optionally with an identity shortcut. With no
//! activation between the two convolutions the whole block is one affine map
//! and folds into a single `k x k` convolution for inference.

use super::ops::{conv2d, conv2d_naive, Conv2dParams, KernelPath};
use super::Activation;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ClbBlock {
    /// `[k, k, c_in, hidden]`
    pub expand_kernel: Tensor,
    pub expand_bias: Vec<f32>,
    /// `[1, 1, hidden, c_out]`
    pub project_kernel: Tensor,
    pub project_bias: Vec<f32>,
    pub params: Conv2dParams,
    pub residual: bool,
    pub interior_activation: Option<Activation>,
}

/// Single-convolution form of a collapsed block.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedConv {
    pub kernel: Tensor,
    pub bias: Vec<f32>,
    pub params: Conv2dParams,
}

impl CollapsedConv {
    pub fn forward(&self, input: &Tensor, path: KernelPath) -> Result<Tensor> {
        match path {
            KernelPath::Naive => conv2d_naive(input, &self.kernel, Some(&self.bias), self.params),
            KernelPath::Optimized => conv2d(input, &self.kernel, Some(&self.bias), self.params),
        }
    }

    /// Multiplies per output pixel.
    pub fn multiply_count(&self) -> usize {
        self.kernel.len()
    }
}

impl ClbBlock {
    /// `(k, c_in, hidden, c_out)`
    pub fn dims(&self) -> Result<(usize, usize, usize, usize)> {
        let [kh, kw, cin, hidden] = self.expand_kernel.nhwc()?;
        let [ph, pw, phid, cout] = self.project_kernel.nhwc()?;
        if kh != kw {
            return Err(Error::Shape(format!("expand kernel must be square, got {kh}x{kw}")));
        }
        if (ph, pw) != (1, 1) || phid != hidden {
            return Err(Error::Shape(format!(
                "project kernel must be [1, 1, {hidden}, c_out], got {:?}",
                self.project_kernel.shape()
            )));
        }
        if self.expand_bias.len() != hidden || self.project_bias.len() != cout {
            return Err(Error::Shape("bias lengths do not match block widths".into()));
        }
        if self.residual {
            let same = cin == cout
                && self.params.stride == 1
                && kh % 2 == 1
                && 2 * self.params.padding == self.params.dilation * (kh - 1);
            if !same {
                return Err(Error::Shape(
                    "residual block must preserve shape (c_in == c_out, stride 1, same padding)".into(),
                ));
            }
        }
        Ok((kh, cin, hidden, cout))
    }

    /// Two-pass execution of the expanded block.
    pub fn forward(&self, input: &Tensor, path: KernelPath) -> Result<Tensor> {
        self.dims()?;
        let conv = match path {
            KernelPath::Naive => conv2d_naive,
            KernelPath::Optimized => conv2d,
        };
        let mut hidden = conv(input, &self.expand_kernel, Some(&self.expand_bias), self.params)?;
        if let Some(act) = self.interior_activation {
            hidden = act.apply(&hidden);
        }
        let out = conv(&hidden, &self.project_kernel, Some(&self.project_bias), Conv2dParams::default())?;
        if self.residual {
            super::ops::add(&[&out, input])
        } else {
            Ok(out)
        }
    }

    /// Multiplies per output pixel of the expanded form.
    pub fn multiply_count(&self) -> Result<usize> {
        let (k, cin, hidden, cout) = self.dims()?;
        Ok(k * k * cin * hidden + hidden * cout)
    }
}

/// Folds a linear block into one convolution. Composition is done in f64.
pub fn collapse_clb(block: &ClbBlock) -> Result<CollapsedConv> {
    if let Some(act) = block.interior_activation {
        return Err(Error::NotCollapsible(format!(
            "{act:?} between expansion and projection"
        )));
    }
    let (k, cin, hidden, cout) = block.dims()?;
    let e = block.expand_kernel.data();
    let p = block.project_kernel.data();
    let taps = k * k * cin;
    let mut w = vec![0.0f64; taps * cout];
    for r in 0..taps {
        for h in 0..hidden {
            let ev = f64::from(e[r * hidden + h]);
            if ev == 0.0 {
                continue;
            }
            for co in 0..cout {
                w[r * cout + co] += ev * f64::from(p[h * cout + co]);
            }
        }
    }
    if block.residual {
        let center = (k / 2) * k + k / 2;
        for c in 0..cin {
            w[(center * cin + c) * cout + c] += 1.0;
        }
    }
    let bias = (0..cout)
        .map(|co| {
            let folded: f64 = (0..hidden)
                .map(|h| f64::from(block.expand_bias[h]) * f64::from(p[h * cout + co]))
                .sum();
            (folded + f64::from(block.project_bias[co])) as f32
        })
        .collect();
    Ok(CollapsedConv {
        kernel: Tensor::new(vec![k, k, cin, cout], w.into_iter().map(|v| v as f32).collect())?,
        bias,
        params: block.params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn random(shape: &[usize], rng: &mut SeedStream) -> Tensor {
        Tensor::from_fn(shape.to_vec(), |_| rng.uniform_f64(-1.0, 1.0) as f32).unwrap()
    }

    fn block(k: usize, cin: usize, hidden: usize, cout: usize, residual: bool, rng: &mut SeedStream) -> ClbBlock {
        ClbBlock {
            expand_kernel: random(&[k, k, cin, hidden], rng),
            expand_bias: (0..hidden).map(|_| rng.uniform_f64(-0.5, 0.5) as f32).collect(),
            project_kernel: random(&[1, 1, hidden, cout], rng),
            project_bias: (0..cout).map(|_| rng.uniform_f64(-0.5, 0.5) as f32).collect(),
            params: Conv2dParams::new(1, k / 2, 1),
            residual,
            interior_activation: None,
        }
    }

    #[test]
    fn identity_expansion_collapses_to_projection() {
        let mut rng = SeedStream::new(1);
        let mut b = block(1, 3, 3, 2, false, &mut rng);
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        b.expand_kernel = Tensor::new(vec![1, 1, 3, 3], eye).unwrap();
        b.expand_bias = vec![0.0; 3];
        let c = collapse_clb(&b).unwrap();
        assert_eq!(c.kernel.data(), b.project_kernel.data());
        assert_eq!(c.bias, b.project_bias);
    }

    #[test]
    fn pointwise_pair_is_a_matrix_product() {
        let mut rng = SeedStream::new(2);
        let b = block(1, 4, 6, 3, false, &mut rng);
        let c = collapse_clb(&b).unwrap();
        let (e, p) = (b.expand_kernel.data(), b.project_kernel.data());
        for i in 0..4 {
            for j in 0..3 {
                let m: f64 = (0..6).map(|h| e[i * 6 + h] as f64 * p[h * 3 + j] as f64).sum();
                assert!((c.kernel.data()[i * 3 + j] as f64 - m).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn collapsed_matches_two_pass() {
        let mut rng = SeedStream::new(3);
        for residual in [false, true] {
            let b = block(3, 4, 16, 4, residual, &mut rng);
            let x = random(&[1, 9, 7, 4], &mut rng);
            let two_pass = b.forward(&x, KernelPath::Naive).unwrap();
            let c = collapse_clb(&b).unwrap();
            let one = c.forward(&x, KernelPath::Naive).unwrap();
            assert!(one.max_abs_diff(&two_pass).unwrap() <= 1e-5);
            assert!(c.multiply_count() < b.multiply_count().unwrap());
        }
    }

    #[test]
    fn nonlinear_interior_refuses() {
        let mut rng = SeedStream::new(4);
        let mut b = block(3, 2, 4, 2, false, &mut rng);
        b.interior_activation = Some(Activation::Relu);
        assert!(matches!(collapse_clb(&b), Err(Error::NotCollapsible(_))));
    }

    #[test]
    fn residual_requires_shape_preservation() {
        let mut rng = SeedStream::new(5);
        let b = block(3, 2, 4, 3, true, &mut rng);
        assert!(b.dims().is_err());
    }
}
