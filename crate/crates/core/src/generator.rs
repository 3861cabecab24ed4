use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::family::ClosedFormFamily;
use crate::limits::{check_deltas, extrapolate_vec};
use crate::simplex::SimplexVector;
use crate::tensor::{permutations, CubicTensor};

/// Limit coefficients `a[m][g][d][l](t) = lim (p^{[t-1,t+Δ]} - p) / Δ`.
///
/// Entries may be negative; each row should sum to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTensor {
    pub time: f64,
    pub values: CubicTensor,
    /// Per-entry extrapolation discrepancy (zero for exact generators).
    pub estimated_error: Vec<f64>,
}

impl GeneratorTensor {
    pub fn exact(time: f64, values: CubicTensor) -> Self {
        let len = values.entries().len();
        Self {
            time,
            values,
            estimated_error: vec![0.0; len],
        }
    }

    pub fn n(&self) -> usize {
        self.values.n()
    }

    pub fn get(&self, m: usize, g: usize, d: usize, l: usize) -> f64 {
        self.values.get(m, g, d, l)
    }

    /// Largest `|sum_l a[m][g][d][l]|`.
    pub fn row_sum_defect(&self) -> f64 {
        self.values
            .rows()
            .map(|(_, row)| row.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for ((i, j, k), row) in self.values.rows() {
            for (a, b, c) in permutations(i, j, k) {
                let other = self.values.row(a, b, c);
                for l in 0..n {
                    worst = worst.max((row[l] - other[l]).abs());
                }
            }
        }
        worst
    }

    pub fn max_error(&self) -> f64 {
        self.estimated_error.iter().copied().fold(0.0, f64::max)
    }

    /// `A[m][l] = sum_{g,d} a[m][g][d][l] y_g y_d`.
    pub fn mixing_matrix(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.values.mixing_matrix(y)
    }
}

/// Estimates the generator of a closed-form family at time `t >= 1` by
/// one-sided differences extrapolated over `deltas`.
pub fn estimate_generator(
    family: &ClosedFormFamily,
    t: f64,
    x0: &SimplexVector,
    deltas: &[f64],
) -> Result<GeneratorTensor> {
    check_deltas(deltas)?;
    if t < 1.0 {
        return Err(param("t", format!("generator needs t >= 1, got {t}")));
    }
    if x0.n() != family.n() {
        return Err(Error::Dimension {
            left: family.n(),
            right: x0.n(),
        });
    }
    let base = family.tensor(0.0, 1.0, x0)?;
    let samples = deltas
        .iter()
        .map(|&d| {
            let p = family.tensor(t - 1.0, t + d, x0)?;
            let q = p
                .entries()
                .iter()
                .zip(base.entries())
                .map(|(a, b)| (a - b) / d)
                .collect::<Vec<_>>();
            if q.iter().any(|v| !v.is_finite()) {
                return Err(Error::Tensor(format!(
                    "family {} not evaluable near t = {t}",
                    family.name()
                )));
            }
            Ok(q)
        })
        .collect::<Result<Vec<_>>>()?;
    let (values, errors) = extrapolate_vec(deltas, &samples, 1)?;
    Ok(GeneratorTensor {
        time: t,
        values: CubicTensor::new(family.n(), values)?,
        estimated_error: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{example1_family, neutral_inheritance_family};
    use crate::limits::DEFAULT_DELTAS;
    use std::f64::consts::LN_2;

    /// Central difference of the closed form at a tiny step; independent of
    /// the one-sided extrapolation path.
    fn central(family: &ClosedFormFamily, t: f64, x0: &SimplexVector, idx: [usize; 4]) -> f64 {
        let h = 1e-5;
        let x = x0.probs();
        (family.eval(t - 1.0, t + h, idx, x) - family.eval(t - 1.0, t - h, idx, x)) / (2.0 * h)
    }

    #[test]
    fn example1_generator_matches_analytic_derivative() {
        let fam = example1_family(0.0).unwrap();
        let x0 = SimplexVector::uniform(3).unwrap();
        for t in [1.0, 2.5, 4.0] {
            let a = estimate_generator(&fam, t, &x0, &DEFAULT_DELTAS).unwrap();
            for i in 0..3 {
                assert!((a.get(i, i, i, i) + 2.0 / 3.0 * LN_2).abs() < 1e-6);
                for l in (0..3).filter(|&l| l != i) {
                    assert!((a.get(i, i, i, l) - LN_2 / 3.0).abs() < 1e-6);
                }
            }
            assert!((a.get(0, 0, 0, 0) - central(&fam, t, &x0, [0, 0, 0, 0])).abs() < 1e-6);
            assert!(a.row_sum_defect() < 1e-8);
            assert!(a.symmetry_defect() < 1e-8);
        }
    }

    #[test]
    fn off_diagonal_rows_follow_x0() {
        let fam = example1_family(0.0).unwrap();
        let x0 = SimplexVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let a = estimate_generator(&fam, 2.0, &x0, &DEFAULT_DELTAS).unwrap();
        // d/dΔ [x_l + 2^-Δ (1/3 - x_l)] at Δ = 0
        for l in 0..3 {
            let want = LN_2 * (x0[l] - 1.0 / 3.0);
            assert!((a.get(0, 1, 2, l) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn neutral_generator_is_log3_times_relaxation() {
        let fam = neutral_inheritance_family(2);
        let x0 = SimplexVector::new(vec![0.4, 0.6]).unwrap();
        let a = estimate_generator(&fam, 1.5, &x0, &DEFAULT_DELTAS).unwrap();
        let p = fam.tensor(0.0, 1.0, &x0).unwrap();
        for ((i, j, k), row) in p.rows() {
            for l in 0..2 {
                let want = 3f64.ln() * (x0[l] - row[l]);
                assert!((a.get(i, j, k, l) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn domain_and_schedule_errors() {
        let fam = example1_family(0.0).unwrap();
        let x0 = SimplexVector::uniform(3).unwrap();
        assert!(estimate_generator(&fam, 0.5, &x0, &DEFAULT_DELTAS).is_err());
        assert!(estimate_generator(&fam, 2.0, &x0, &[1e-2]).is_err());
    }
}
