#![allow(dead_code)]

use cubic_core::{CubicTensor, SimplexVector};
use rand::Rng;

/// Symmetric stochastic tensor whose row for each sorted parent triple is an
/// independent random point of the simplex.
pub fn random_tensor(n: usize, rng: &mut impl Rng) -> CubicTensor {
    let mut rows = std::collections::HashMap::new();
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                rows.insert((i, j, k), random_simplex(n, rng).into_inner());
            }
        }
    }
    CubicTensor::from_fn(n, |i, j, k, l| {
        let mut key = [i, j, k];
        key.sort_unstable();
        rows[&(key[0], key[1], key[2])][l]
    })
    .unwrap()
}

pub fn random_simplex(n: usize, rng: &mut impl Rng) -> SimplexVector {
    // exponential spacings give a uniform point
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-300).collect();
    let total: f64 = w.iter().sum();
    SimplexVector::new(w.into_iter().map(|v| v / total).collect()).unwrap()
}

/// Plain triple loop over `t.get`.
pub fn brute_force_evolve(t: &CubicTensor, x: &[f64]) -> Vec<f64> {
    let n = t.n();
    let mut y = vec![0.0; n];
    for (l, out) in y.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    *out += t.get(i, j, k, l) * x[i] * x[j] * x[k];
                }
            }
        }
    }
    y
}
