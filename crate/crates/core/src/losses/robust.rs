//! Barron-family general robust loss.
//!
//! For shape `alpha` and scale `c`, with `z = x / c` and `b = |alpha - 2|`:
//!
//! ```text
//! rho(x) = (b / alpha) * ((z^2 / b + 1)^(alpha / 2) - 1)
//! ```
//!
//! with the removable singularities filled by their limits:
//! `alpha = 2` gives `z^2 / 2` and `alpha = 0` gives `ln(z^2 / 2 + 1)`.
//!
//! [`RobustForm::AsPrinted`] drops the `+ 1` inside the power. That variant
//! is negative near zero (at `alpha = 1` it is `|z| - 1`) and exists only to
//! audit results produced with the literal formula.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RobustForm {
    #[default]
    General,
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustParams {
    alpha: f64,
    c: f64,
    form: RobustForm,
}

impl RobustParams {
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        Self::with_form(alpha, c, RobustForm::General)
    }

    pub fn with_form(alpha: f64, c: f64, form: RobustForm) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("robust scale c must be positive, got {c}")));
        }
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("robust shape alpha must be finite, got {alpha}")));
        }
        if form == RobustForm::AsPrinted && (alpha == 0.0 || alpha == 2.0) {
            return Err(Error::Domain(format!(
                "literal robust form is undefined at alpha = {alpha}"
            )));
        }
        Ok(Self { alpha, c, form })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn form(&self) -> RobustForm {
        self.form
    }
}

/// Loss of a single residual.
pub fn robust_rho(x: f64, p: &RobustParams) -> f64 {
    let z2 = (x / p.c) * (x / p.c);
    let a = p.alpha;
    let b = (a - 2.0).abs();
    match p.form {
        RobustForm::General => {
            if a == 2.0 {
                0.5 * z2
            } else if a == 0.0 {
                (0.5 * z2).ln_1p()
            } else {
                // (1 + z2/b)^(a/2) - 1, written to stay accurate for small z
                (b / a) * ((a / 2.0) * (z2 / b).ln_1p()).exp_m1()
            }
        }
        RobustForm::AsPrinted => (b / a) * ((z2 / b).powf(a / 2.0) - 1.0),
    }
}

/// Mean of [`robust_rho`] over all elements.
pub fn robust_loss(residual: &Tensor<f64>, p: &RobustParams) -> Result<f64> {
    let sum: f64 = residual.data().iter().map(|&x| robust_rho(x, p)).sum();
    Ok(sum / residual.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn general(alpha: f64, c: f64) -> RobustParams {
        RobustParams::new(alpha, c).unwrap()
    }

    #[test]
    fn zero_residual_is_zero() {
        for a in [-2.0, 0.0, 0.5, 1.0, 2.0, 4.0] {
            assert_eq!(robust_rho(0.0, &general(a, 2.0)), 0.0);
        }
    }

    #[test]
    fn pseudo_huber_value() {
        let v = robust_rho(2.0, &general(1.0, 2.0));
        assert!((v - (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn quadratic_limit() {
        let c = 2.0;
        for i in 0..=100 {
            let x = -1.0 + 0.02 * i as f64;
            let limit = 0.5 * (x / c) * (x / c);
            assert_eq!(robust_rho(x, &general(2.0, c)), limit);
            for a in [2.0 - 1e-6, 2.0 + 1e-6] {
                assert!((robust_rho(x, &general(a, c)) - limit).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cauchy_limit() {
        let x = 1.3;
        let at_zero = robust_rho(x, &general(0.0, 1.0));
        assert!((robust_rho(x, &general(1e-7, 1.0)) - at_zero).abs() < 1e-6);
    }

    #[test]
    fn literal_form_is_offset() {
        let p = RobustParams::with_form(1.0, 2.0, RobustForm::AsPrinted).unwrap();
        assert_eq!(robust_rho(0.0, &p), -1.0);
        assert!((robust_rho(2.0, &p) - 0.0).abs() < 1e-15);
        assert!(RobustParams::with_form(2.0, 2.0, RobustForm::AsPrinted).is_err());
    }

    #[test]
    fn validation() {
        assert!(RobustParams::new(1.0, 0.0).is_err());
        assert!(RobustParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn tensor_mean() {
        let t = Tensor::new(vec![2], vec![0.0, 2.0]).unwrap();
        let v = robust_loss(&t, &general(1.0, 2.0)).unwrap();
        assert!((v - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn even_and_monotone(
                x in 0.0f64..50.0, dx in 0.0f64..10.0,
                alpha in -4.0f64..4.0, c in 0.1f64..5.0,
            ) {
                let p = general(alpha, c);
                prop_assert_eq!(robust_rho(x, &p), robust_rho(-x, &p));
                prop_assert!(robust_rho(x + dx, &p) >= robust_rho(x, &p));
                prop_assert!(robust_rho(x, &p) >= 0.0);
            }
        }
    }
}
