//! Cubic stochastic tensors `p[i][j][k][l]`: the probability that an
//! interaction of the states `i`, `j`, `k` produces the state `l` after one
//! time unit.
//!
//! Storage is a flat row-major `n^4` vector; the innermost index is the
//! offspring state `l`, so `row(i, j, k)` is a contiguous slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{SimplexVector, DEFAULT_TOL};

/// The six orderings of a parent triple.
pub(crate) fn permutations(i: usize, j: usize, k: usize) -> [(usize, usize, usize); 6] {
    [
        (i, j, k),
        (i, k, j),
        (j, i, k),
        (j, k, i),
        (k, i, j),
        (k, j, i),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicTensor {
    n: usize,
    entries: Vec<f64>,
}

impl CubicTensor {
    /// Builds a tensor from a flat row-major entry list. Only the shape and
    /// finiteness are checked here; see [`validate_tensor`] and
    /// [`CubicTensor::checked`] for the probabilistic invariants.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::StateCount(n));
        }
        let expected = n.pow(4);
        if entries.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: entries.len(),
            });
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::Tensor(format!("entry {pos} is not finite")));
        }
        Ok(Self { n, entries })
    }

    /// Builds a tensor and enforces the invariants: entries in `[-tol, 0)`
    /// are clamped to zero and rows whose sum is within `tol` of one are
    /// renormalized. Anything worse is an error.
    pub fn checked(n: usize, entries: Vec<f64>, tol: f64) -> Result<Self> {
        let mut t = Self::new(n, entries)?;
        for v in t.entries.iter_mut() {
            if *v < -tol {
                return Err(Error::Tensor(format!("negative entry {v:e}")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        for row in t.entries.chunks_mut(n) {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > tol {
                return Err(Error::Tensor(format!("row sums to {total}")));
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let report = validate_tensor(&t, tol);
        if let Some(v) = report.violations.first() {
            return Err(Error::Tensor(v.to_string()));
        }
        Ok(t)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut entries = Vec::with_capacity(n.pow(4));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        entries.push(f(i, j, k, l));
                    }
                }
            }
        }
        Self::new(n, entries)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_fn(n, |_, _, _, _| 1.0 / n as f64)
    }

    /// The all-zero tensor; used for generators that vanish identically.
    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n.pow(4)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.entries[self.offset(i, j, k) + l]
    }

    pub fn row(&self, i: usize, j: usize, k: usize) -> &[f64] {
        let o = self.offset(i, j, k);
        &self.entries[o..o + self.n]
    }

    pub(crate) fn row_mut(&mut self, i: usize, j: usize, k: usize) -> &mut [f64] {
        let o = self.offset(i, j, k);
        &mut self.entries[o..o + self.n]
    }

    /// Iterator over `((i, j, k), row)`.
    pub fn rows(&self) -> impl Iterator<Item = ((usize, usize, usize), &[f64])> {
        let n = self.n;
        self.entries.chunks(n).enumerate().map(move |(r, row)| {
            let k = r % n;
            let j = (r / n) % n;
            let i = r / (n * n);
            ((i, j, k), row)
        })
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::Dimension {
                left: self.n,
                right: other.n,
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `Q[m][l] = sum_{g,d} p[m][g][d][l] y_g y_d`, the one-parent transition
    /// matrix obtained by integrating two of the parents against `y`.
    pub fn mixing_matrix(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if y.len() != n {
            return Err(Error::Dimension {
                left: n,
                right: y.len(),
            });
        }
        let mut q = vec![0.0; n * n];
        for m in 0..n {
            for g in 0..n {
                for d in 0..n {
                    let w = y[g] * y[d];
                    if w == 0.0 {
                        continue;
                    }
                    let row = self.row(m, g, d);
                    for l in 0..n {
                        q[m * n + l] += row[l] * w;
                    }
                }
            }
        }
        Ok(q)
    }

    /// Multiplies every row by the `n x n` matrix `q` on the offspring index:
    /// `out[i][j][k][l] = sum_m self[i][j][k][m] q[m][l]`.
    pub fn right_multiply(&self, q: &[f64]) -> Result<Self> {
        let n = self.n;
        if q.len() != n * n {
            return Err(Error::Shape {
                expected: n * n,
                actual: q.len(),
            });
        }
        let mut entries = vec![0.0; self.entries.len()];
        for (row, out) in self.entries.chunks(n).zip(entries.chunks_mut(n)) {
            for (m, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for l in 0..n {
                    out[l] += p * q[m * n + l];
                }
            }
        }
        Ok(Self { n, entries })
    }
}

/// One defect found by [`validate_tensor`]. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Negative { index: [usize; 4], value: f64 },
    Normalization { triple: [usize; 3], sum: f64, defect: f64 },
    Symmetry { index: [usize; 4], defect: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Negative { index, value } => {
                write!(f, "negative entry {value:e} at {index:?}")
            }
            Violation::Normalization { triple, sum, defect } => {
                write!(f, "row {triple:?} sums to {sum} (defect {defect:e})")
            }
            Violation::Symmetry { index, defect } => {
                write!(f, "symmetry defect {defect:e} at {index:?}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Most negative entry (0 if none).
    pub min_entry: f64,
    /// Largest `|row sum - 1|`.
    pub max_normalization_defect: f64,
    /// Largest deviation of an entry from the same entry at a permuted
    /// parent triple.
    pub max_symmetry_defect: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks nonnegativity, row normalization and parent symmetry within `tol`.
///
/// Symmetry violations are reported once per unordered parent triple, at the
/// offspring index with the worst defect.
pub fn validate_tensor(t: &CubicTensor, tol: f64) -> ValidationReport {
    let n = t.n();
    let mut report = ValidationReport {
        min_entry: t.entries.iter().copied().fold(0.0, f64::min),
        ..Default::default()
    };
    for ((i, j, k), row) in t.rows() {
        for (l, &v) in row.iter().enumerate() {
            if v < -tol {
                report.violations.push(Violation::Negative {
                    index: [i, j, k, l],
                    value: v,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        let defect = (sum - 1.0).abs();
        report.max_normalization_defect = report.max_normalization_defect.max(defect);
        if defect > tol {
            report.violations.push(Violation::Normalization {
                triple: [i, j, k],
                sum,
                defect,
            });
        }
    }
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let mut worst = (0.0, 0);
                for l in 0..n {
                    let vals = permutations(i, j, k).map(|(a, b, c)| t.get(a, b, c, l));
                    let hi = vals.iter().copied().fold(f64::MIN, f64::max);
                    let lo = vals.iter().copied().fold(f64::MAX, f64::min);
                    if hi - lo > worst.0 {
                        worst = (hi - lo, l);
                    }
                }
                report.max_symmetry_defect = report.max_symmetry_defect.max(worst.0);
                if worst.0 > tol {
                    report.violations.push(Violation::Symmetry {
                        index: [i, j, k, worst.1],
                        defect: worst.0,
                    });
                }
            }
        }
    }
    report
}

/// Averages every entry over the six orderings of its parent triple.
pub fn symmetrize_tensor(t: &CubicTensor) -> CubicTensor {
    let n = t.n();
    let mut out = t.clone();
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let perms = permutations(i, j, k);
                let mut avg = vec![0.0; n];
                for &(a, b, c) in &perms {
                    for (acc, v) in avg.iter_mut().zip(t.row(a, b, c)) {
                        *acc += v;
                    }
                }
                avg.iter_mut().for_each(|v| *v /= 6.0);
                for &(a, b, c) in &perms {
                    out.row_mut(a, b, c).copy_from_slice(&avg);
                }
            }
        }
    }
    out
}

/// Raw cubic contraction `y_l = sum_{i,j,k} p[i][j][k][l] x_i x_j x_k` with
/// no validity requirement on either argument.
pub fn contract(t: &CubicTensor, x: &[f64]) -> Result<Vec<f64>> {
    let n = t.n();
    if x.len() != n {
        return Err(Error::Dimension {
            left: n,
            right: x.len(),
        });
    }
    let mut y = vec![0.0; n];
    for ((i, j, k), row) in t.rows() {
        let w = x[i] * x[j] * x[k];
        if w == 0.0 {
            continue;
        }
        for (acc, p) in y.iter_mut().zip(row) {
            *acc += p * w;
        }
    }
    Ok(y)
}

/// One step of the deterministic evolution of a distribution.
///
/// Round-off in the mass is divided out; without that, the cubic map
/// triples any mass drift at every step.
pub fn evolve(t: &CubicTensor, x: &SimplexVector) -> Result<SimplexVector> {
    let mut y = contract(t, x.probs())?;
    let mass: f64 = y.iter().sum();
    if (mass - 1.0).abs() <= DEFAULT_TOL {
        y.iter_mut().for_each(|v| *v /= mass);
    }
    Ok(SimplexVector::from_contraction(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1_unit(eps: f64) -> CubicTensor {
        CubicTensor::from_fn(3, |i, j, k, l| {
            if i == j && j == k {
                if l == i {
                    1.0 - 2.0 * eps
                } else {
                    0.0
                }
            } else {
                1.0 / 3.0
            }
        })
        .unwrap()
    }

    #[test]
    fn uniform_is_valid() {
        assert!(validate_tensor(&CubicTensor::uniform(3).unwrap(), 1e-9).is_valid());
    }

    #[test]
    fn shape_errors_are_structural() {
        assert!(matches!(
            CubicTensor::new(3, vec![0.0; 80]),
            Err(Error::Shape { expected: 81, actual: 80 })
        ));
        assert!(matches!(CubicTensor::new(1, vec![1.0]), Err(Error::StateCount(1))));
    }

    #[test]
    fn overfull_row_reports_half_defect() {
        let mut t = CubicTensor::uniform(3).unwrap();
        t.row_mut(0, 0, 0).copy_from_slice(&[0.5, 0.5, 0.5]);
        let report = validate_tensor(&t, 1e-9);
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::Normalization { triple, defect, .. } => {
                assert_eq!(*triple, [0, 0, 0]);
                assert!((defect - 0.5).abs() < 1e-15);
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn example1_unit_step_loses_two_epsilon_on_diagonal_rows() {
        let report = validate_tensor(&example1_unit(0.1), 1e-9);
        let diag: Vec<_> = report
            .violations
            .iter()
            .map(|v| match v {
                Violation::Normalization { triple, defect, .. } => (*triple, *defect),
                v => panic!("unexpected {v:?}"),
            })
            .collect();
        assert_eq!(diag.len(), 3);
        for (i, (triple, defect)) in diag.iter().enumerate() {
            assert_eq!(*triple, [i, i, i]);
            assert!((defect - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn asymmetric_entries_are_flagged_and_symmetrization_fixes_them() {
        let n = 3;
        let mut t = CubicTensor::uniform(n).unwrap();
        for (a, b, c) in permutations(0, 1, 2) {
            t.row_mut(a, b, c).copy_from_slice(&[0.0, 1.0, 0.0]);
        }
        t.row_mut(0, 1, 2).copy_from_slice(&[1.0, 0.0, 0.0]);
        let report = validate_tensor(&t, 1e-9);
        assert!(matches!(report.violations[..], [Violation::Symmetry { .. }]));

        let s = symmetrize_tensor(&t);
        for (a, b, c) in permutations(0, 1, 2) {
            let row = s.row(a, b, c);
            assert!((row[0] - 1.0 / 6.0).abs() < 1e-15);
            assert!((row[1] - 5.0 / 6.0).abs() < 1e-15);
            assert_eq!(row[2], 0.0);
        }
        assert!(validate_tensor(&s, 1e-12).is_valid());
    }

    #[test]
    fn symmetrize_is_identity_on_symmetric_input() {
        let t = example1_unit(0.0);
        assert_eq!(symmetrize_tensor(&t), t);
    }

    #[test]
    fn checked_clamps_and_renormalizes_within_tol() {
        let mut e = CubicTensor::uniform(2).unwrap().into_entries();
        e[0] = 0.5 + 4e-10;
        e[1] = 0.5 - 2e-10;
        e[14] = -5e-10;
        e[15] = 1.0 + 5e-10;
        let t = CubicTensor::checked(2, e.clone(), 1e-9).unwrap();
        assert_eq!(t.get(1, 1, 1, 0), 0.0);
        assert!((t.row(0, 0, 0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        e[15] = 1.5;
        assert!(CubicTensor::checked(2, e, 1e-9).is_err());
    }

    #[test]
    fn point_mass_picks_out_diagonal_row() {
        let t = example1_unit(0.0);
        let y = evolve(&t, &SimplexVector::point_mass(3, 2).unwrap()).unwrap();
        assert_eq!(y.probs(), t.row(2, 2, 2));
    }

    #[test]
    fn example1_half_half_zero() {
        // y_l = x_l^3 + (1 - sum x^3) / 3 evaluated by hand
        let t = example1_unit(0.0);
        let x = SimplexVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        let y = evolve(&t, &x).unwrap();
        let want = [3.0 / 8.0, 3.0 / 8.0, 1.0 / 4.0];
        for (a, b) in y.probs().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let t = CubicTensor::uniform(3).unwrap();
        let x = SimplexVector::uniform(2).unwrap();
        assert!(matches!(evolve(&t, &x), Err(Error::Dimension { .. })));
    }
}
