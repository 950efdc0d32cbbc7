//! Pairwise (structured) feature distillation.
//!
//! Each spatial position of an `h x w x c` feature map contributes one
//! feature vector; the affinity of positions `i` and `j` is their cosine
//! similarity. Student and teacher are compared through their
//! `(h*w) x (h*w)` affinity matrices, so their channel counts may differ.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound on feature-vector norms; an all-zero vector gets zero affinity.
pub const AFFINITY_NORM_FLOOR: f64 = 1e-12;

/// Row-normalized features, `[h*w][c]` flattened.
fn normalized_rows(features: &Tensor<f64>) -> Result<(usize, usize, usize, Vec<f64>)> {
    let [h, w, c] = features.hwc()?;
    let mut rows = features.data().to_vec();
    for row in rows.chunks_exact_mut(c) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(AFFINITY_NORM_FLOOR);
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok((h, w, c, rows))
}

fn row_dot(rows: &[f64], c: usize, i: usize, j: usize) -> f64 {
    rows[i * c..(i + 1) * c]
        .iter()
        .zip(&rows[j * c..(j + 1) * c])
        .map(|(a, b)| a * b)
        .sum()
}

/// Cosine-affinity matrix `[h*w, h*w]` of a feature map.
pub fn pairwise_affinity(features: &Tensor<f64>) -> Result<Tensor<f64>> {
    let (h, w, c, rows) = normalized_rows(features)?;
    let n = h * w;
    let mut a = vec![0.0; n * n];
    a.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        for (j, v) in out.iter_mut().enumerate() {
            *v = row_dot(&rows, c, i, j);
        }
    });
    Tensor::new(vec![n, n], a)
}

/// `(1 / (w*h)) * sum_ij (a^s_ij - a^t_ij)^2`.
pub fn pairwise_distill_loss(student: &Tensor<f64>, teacher: &Tensor<f64>) -> Result<f64> {
    let (hs, ws, cs, s) = normalized_rows(student)?;
    let (ht, wt, ct, t) = normalized_rows(teacher)?;
    if (hs, ws) != (ht, wt) {
        return Err(Error::Shape(format!(
            "student is {hs}x{ws}, teacher is {ht}x{wt}"
        )));
    }
    let n = hs * ws;
    // Per-row partial sums are reduced in row order for a thread-count
    // independent result.
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = row_dot(&s, cs, i, j) - row_dot(&t, ct, i, j);
                    d * d
                })
                .sum()
        })
        .collect();
    Ok(partial.iter().sum::<f64>() / n as f64)
}

/// One student/teacher layer pair in a multi-level distillation objective.
#[derive(Debug, Clone)]
pub struct DistillLevel<'a> {
    pub student: &'a Tensor<f64>,
    pub teacher: &'a Tensor<f64>,
    pub weight: f64,
}

/// Weighted sum of [`pairwise_distill_loss`] over caller-chosen layer pairs.
pub fn multi_level_distill_loss(levels: &[DistillLevel<'_>]) -> Result<f64> {
    levels.iter().try_fold(0.0, |acc, l| {
        if !(l.weight >= 0.0 && l.weight.is_finite()) {
            return Err(Error::Domain(format!("level weight must be non-negative, got {}", l.weight)));
        }
        Ok(acc + l.weight * pairwise_distill_loss(l.student, l.teacher)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(h: usize, w: usize, c: usize, v: Vec<f64>) -> Tensor<f64> {
        Tensor::new(vec![h, w, c], v).unwrap()
    }

    #[test]
    fn opposite_signs() {
        let a = pairwise_affinity(&feat(1, 2, 1, vec![1.0, -1.0])).unwrap();
        assert_eq!(a.data(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn hand_computed_loss() {
        let teacher = feat(1, 2, 1, vec![1.0, 1.0]);
        let student = feat(1, 2, 1, vec![1.0, -1.0]);
        assert_eq!(pairwise_distill_loss(&student, &teacher).unwrap(), 4.0);
        assert_eq!(pairwise_distill_loss(&teacher, &teacher).unwrap(), 0.0);
    }

    #[test]
    fn channel_counts_may_differ_but_spatial_must_not() {
        let t = feat(2, 2, 3, (0..12).map(|i| i as f64 + 1.0).collect());
        let s = feat(2, 2, 1, vec![1.0, 2.0, -1.0, 0.5]);
        assert!(pairwise_distill_loss(&s, &t).is_ok());
        let s = feat(1, 4, 1, vec![1.0, 2.0, -1.0, 0.5]);
        assert!(matches!(pairwise_distill_loss(&s, &t), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_vectors_use_the_floor() {
        let a = pairwise_affinity(&feat(1, 2, 2, vec![0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(a.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn levels_are_weighted() {
        let teacher = feat(1, 2, 1, vec![1.0, 1.0]);
        let student = feat(1, 2, 1, vec![1.0, -1.0]);
        let levels = [
            DistillLevel { student: &student, teacher: &teacher, weight: 0.5 },
            DistillLevel { student: &teacher, teacher: &teacher, weight: 3.0 },
        ];
        assert_eq!(multi_level_distill_loss(&levels).unwrap(), 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affinity_is_symmetric_with_unit_diagonal(
                v in proptest::collection::vec(-5.0f64..5.0, 48),
            ) {
                let v: Vec<f64> = v.into_iter().map(|x| if x.abs() < 1e-3 { 1.0 } else { x }).collect();
                let a = pairwise_affinity(&feat(4, 4, 3, v)).unwrap();
                let d = a.data();
                for i in 0..16 {
                    prop_assert!((d[i * 16 + i] - 1.0).abs() < 1e-12);
                    for j in 0..16 {
                        prop_assert!((d[i * 16 + j] - d[j * 16 + i]).abs() < 1e-15);
                        prop_assert!(d[i * 16 + j].abs() <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }
}
