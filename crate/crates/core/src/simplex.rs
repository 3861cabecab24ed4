use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default validation tolerance used wherever a caller does not supply one.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A probability distribution on the finite state space `{0, .., n-1}`.
///
/// Construction validates that every entry is at least `-tol` and that the
/// entries sum to one within `tol`. Entries in `[-tol, 0)` are clamped to
/// zero and the vector is renormalized, so a validated value is an exact
/// probability vector up to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector {
    probs: Vec<f64>,
}

impl SimplexVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tol(probs, DEFAULT_TOL)
    }

    pub fn with_tol(mut probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::StateCount(probs.len()));
        }
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::Distribution(format!("entry {i} is not finite")));
            }
            if *p < -tol {
                return Err(Error::Distribution(format!("entry {i} = {p:e} is negative")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::Distribution(format!("entries sum to {total}, not 1")));
        }
        if total != 1.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Ok(Self { probs })
    }

    /// Uniform distribution on `n` states.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::StateCount(n));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// Point mass on state `i`.
    pub fn point_mass(n: usize, i: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::StateCount(n));
        }
        if i >= n {
            return Err(Error::Dimension { left: i, right: n });
        }
        let mut probs = vec![0.0; n];
        probs[i] = 1.0;
        Ok(Self { probs })
    }

    /// Wraps a vector produced by a contraction that is known to stay on the
    /// simplex. Tiny negative rounding residue is clamped; no renormalization
    /// is applied so callers can observe the raw mass.
    pub(crate) fn from_contraction(mut probs: Vec<f64>) -> Self {
        probs.iter_mut().for_each(|p| {
            if *p < 0.0 && *p > -DEFAULT_TOL {
                *p = 0.0
            }
        });
        Self { probs }
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.probs
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Largest componentwise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_small_negatives_and_renormalizes() {
        let x = SimplexVector::new(vec![0.5, 0.5 + 5e-10, -5e-10]).unwrap();
        assert_eq!(x[2], 0.0);
        assert!((x.mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_mass_and_negatives() {
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![1.1, -0.1]).is_err());
        assert!(SimplexVector::new(vec![1.0]).is_err());
        assert!(SimplexVector::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn point_mass_and_uniform() {
        let d = SimplexVector::point_mass(3, 1).unwrap();
        assert_eq!(d.probs(), &[0.0, 1.0, 0.0]);
        let u = SimplexVector::uniform(4).unwrap();
        assert_eq!(u.mass(), 1.0);
        assert!(SimplexVector::point_mass(3, 3).is_err());
    }
}
