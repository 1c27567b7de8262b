use serde::{Deserialize, Serialize};

use super::AeError;
use crate::features::DEGENERATE_VAR;

/// Smallest standard deviation used as a divisor.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column z-score standardization.
///
/// Degenerate (constant) columns are centred but divided by 1, so they map
/// to zero on the training data and keep their raw offset elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, AeError> {
        let first = rows.first().ok_or(AeError::EmptyInput)?;
        let d = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(AeError::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for r in rows {
            for (m, x) in means.iter_mut().zip(r) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in vars.iter_mut().zip(r).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        vars.iter_mut().for_each(|v| *v /= n);
        Ok(Scaler {
            stds: vars.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect(),
            degenerate: vars.iter().map(|&v| v < DEGENERATE_VAR).collect(),
            means,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    #[inline]
    fn divisor(&self, j: usize) -> f64 {
        if self.degenerate[j] {
            1.0
        } else {
            self.stds[j]
        }
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, AeError> {
        self.check(x)?;
        Ok(x.iter().enumerate().map(|(j, v)| (v - self.means[j]) / self.divisor(j)).collect())
    }

    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>, AeError> {
        self.check(x)?;
        Ok(x.iter().enumerate().map(|(j, v)| v * self.divisor(j) + self.means[j]).collect())
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, AeError> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    fn check(&self, x: &[f64]) -> Result<(), AeError> {
        if x.len() != self.dim() {
            return Err(AeError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn z_score_example() {
        let rows = vec![vec![2.0], vec![4.0], vec![6.0]];
        let s = Scaler::fit(&rows).unwrap();
        let out: Vec<f64> = rows.iter().map(|r| s.transform(r).unwrap()[0]).collect();
        assert!((out[0] + 1.224744871391589).abs() < 1e-12);
        assert_eq!(out[1], 0.0);
        assert!((out[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let rows = vec![vec![5.0, 1.0], vec![5.0, 2.0]];
        let s = Scaler::fit(&rows).unwrap();
        assert_eq!(s.degenerate, vec![true, false]);
        assert_eq!(s.transform(&[5.0, 1.5]).unwrap()[0], 0.0);
        assert_eq!(s.transform(&[7.0, 1.5]).unwrap()[0], 2.0);
    }

    #[test]
    fn empty_and_ragged_inputs() {
        assert!(matches!(Scaler::fit(&[]), Err(AeError::EmptyInput)));
        assert!(matches!(
            Scaler::fit(&[vec![1.0], vec![1.0, 2.0]]),
            Err(AeError::DimensionMismatch { .. })
        ));
        let s = Scaler::fit(&[vec![1.0, 2.0]]).unwrap();
        assert!(s.transform(&[1.0]).is_err());
    }

    #[test]
    fn fitted_columns_standardized() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64).sin() * 3.0 + 10.0, i as f64]).collect();
        let s = Scaler::fit(&rows).unwrap();
        let z = s.transform_all(&rows).unwrap();
        for j in 0..2 {
            let m = z.iter().map(|r| r[j]).sum::<f64>() / 200.0;
            let v = z.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / 200.0;
            assert!(m.abs() < 1e-6);
            assert!((v.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn inverse_undoes_transform(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..40),
            probe in prop::collection::vec(-1e3f64..1e3, 4),
        ) {
            let s = Scaler::fit(&rows).unwrap();
            let back = s.inverse(&s.transform(&probe).unwrap()).unwrap();
            for (a, b) in probe.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }
}
