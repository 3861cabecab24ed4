//! Limits `Δ → 0` by Richardson extrapolation, and the convergence-ratio
//! bookkeeping shared by every finite-difference residual.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Step schedule used for all one-sided limits unless a caller overrides it.
pub const DEFAULT_DELTAS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Ratio below which a residual sequence is declared non-convergent.
pub const MIN_CONVERGENCE_RATIO: f64 = 1.5;

/// Successive residual differences below this are treated as round-off.
pub const RESIDUAL_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated {
    pub value: f64,
    /// Difference between the highest-order extrapolant and the best
    /// extrapolant of one order lower.
    pub error: f64,
}

pub(crate) fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.len() < 2 {
        return Err(param("deltas", "need at least two steps"));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(param("deltas", "steps must be positive"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(param("deltas", "steps must be strictly decreasing"));
    }
    Ok(())
}

/// Extrapolates samples `values[i] = g(deltas[i])` to `g(0)` assuming an
/// error expansion in powers of `deltas^power` (1 for one-sided differences,
/// 2 for central ones). Neville's scheme evaluated at zero.
pub fn extrapolate(deltas: &[f64], values: &[f64], power: i32) -> Result<Extrapolated> {
    check_deltas(deltas)?;
    if values.len() != deltas.len() {
        return Err(param("values", "one value per step is required"));
    }
    let x: Vec<f64> = deltas.iter().map(|d| d.powi(power)).collect();
    let mut table = values.to_vec();
    let mut previous_best = table[table.len() - 1];
    for k in 1..x.len() {
        previous_best = table[x.len() - 1];
        // after this pass table[i] holds the extrapolant through points i-k..=i
        for i in (k..x.len()).rev() {
            table[i] = (x[i - k] * table[i] - x[i] * table[i - 1]) / (x[i - k] - x[i]);
        }
    }
    let value = table[x.len() - 1];
    Ok(Extrapolated {
        value,
        error: (value - previous_best).abs(),
    })
}

/// Componentwise [`extrapolate`] over equally sized sample vectors.
pub fn extrapolate_vec(
    deltas: &[f64],
    samples: &[Vec<f64>],
    power: i32,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_deltas(deltas)?;
    let len = samples.first().map_or(0, Vec::len);
    if samples.len() != deltas.len() || samples.iter().any(|s| s.len() != len) {
        return Err(param("samples", "one equally sized sample vector per step"));
    }
    let mut values = Vec::with_capacity(len);
    let mut errors = Vec::with_capacity(len);
    let mut column = vec![0.0; deltas.len()];
    for e in 0..len {
        for (c, s) in column.iter_mut().zip(samples) {
            *c = s[e];
        }
        let r = extrapolate(deltas, &column, power)?;
        values.push(r.value);
        errors.push(r.error);
    }
    Ok((values, errors))
}

/// One-sided derivative `lim (g(Δ) - g0) / Δ` from samples of `g`.
pub fn one_sided_derivative(
    deltas: &[f64],
    mut g: impl FnMut(f64) -> f64,
    g0: f64,
) -> Result<Extrapolated> {
    check_deltas(deltas)?;
    let quotients: Vec<f64> = deltas.iter().map(|&d| (g(d) - g0) / d).collect();
    extrapolate(deltas, &quotients, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    /// Successive differences shrink by at least the minimum ratio.
    Converging,
    /// Successive differences are below the noise floor.
    NoiseFloor,
    NonConvergent,
}

/// Behaviour of a quantity evaluated at a step `δ` and its halvings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
    /// `|v0 - v1| / |v1 - v2|` on the last three values.
    pub ratio: Option<f64>,
    pub status: ConvergenceStatus,
}

impl Convergence {
    pub fn from_values(steps: Vec<f64>, values: Vec<f64>, floor: f64) -> Self {
        let m = values.len();
        let (ratio, status) = if m < 3 {
            (None, ConvergenceStatus::NonConvergent)
        } else {
            let d1 = (values[m - 3] - values[m - 2]).abs();
            let d2 = (values[m - 2] - values[m - 1]).abs();
            if d1 <= floor && d2 <= floor {
                (None, ConvergenceStatus::NoiseFloor)
            } else {
                let ratio = d1 / d2.max(f64::MIN_POSITIVE);
                let status = if ratio >= MIN_CONVERGENCE_RATIO {
                    ConvergenceStatus::Converging
                } else {
                    ConvergenceStatus::NonConvergent
                };
                (Some(ratio), status)
            }
        };
        Self {
            steps,
            values,
            ratio,
            status,
        }
    }

    /// Evaluates `f` at `delta`, `delta / 2`, `delta / 4`.
    pub fn by_halving(delta: f64, floor: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let steps = vec![delta, delta / 2.0, delta / 4.0];
        let values = steps.iter().map(|&d| f(d)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_values(steps, values, floor))
    }

    pub fn is_convergent(&self) -> bool {
        self.status != ConvergenceStatus::NonConvergent
    }

    /// Value at the finest step.
    pub fn finest(&self) -> f64 {
        *self.values.last().expect("at least one value")
    }

    /// Richardson estimate of the limit assuming error `∝ δ^order`.
    pub fn limit(&self, order: i32) -> f64 {
        extrapolate(&self.steps, &self.values, order)
            .map(|e| e.value)
            .unwrap_or_else(|_| self.finest())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_quadratic_error() {
        // g(d) = 3 + 2d - 5d^2 is reproduced exactly by three points
        let d = DEFAULT_DELTAS;
        let v: Vec<f64> = d.iter().map(|d| 3.0 + 2.0 * d - 5.0 * d * d).collect();
        let r = extrapolate(&d, &v, 1).unwrap();
        assert!((r.value - 3.0).abs() < 1e-13);
    }

    #[test]
    fn one_sided_derivative_of_exponential() {
        let r = one_sided_derivative(&DEFAULT_DELTAS, |d| (2f64).powf(-d), 1.0).unwrap();
        assert!((r.value + std::f64::consts::LN_2).abs() < 1e-7, "{r:?}");
        assert!(r.error < 1e-5);
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(extrapolate(&[1e-2], &[1.0], 1).is_err());
        assert!(extrapolate(&[1e-2, 2e-2], &[1.0, 1.0], 1).is_err());
        assert!(extrapolate(&[1e-2, -1e-3], &[1.0, 1.0], 1).is_err());
    }

    #[test]
    fn convergence_classification() {
        let c = Convergence::from_values(vec![1.0, 0.5, 0.25], vec![1.4, 1.1, 1.025], 1e-12);
        assert_eq!(c.status, ConvergenceStatus::Converging);
        assert!((c.ratio.unwrap() - 4.0).abs() < 1e-9);
        assert!((c.limit(2) - 1.0).abs() < 1e-12);
        let flat = Convergence::from_values(vec![1.0, 0.5, 0.25], vec![0.0, 1e-15, 0.0], 1e-12);
        assert_eq!(flat.status, ConvergenceStatus::NoiseFloor);
        let bad = Convergence::from_values(vec![1.0, 0.5, 0.25], vec![1.0, 2.0, 3.0], 1e-12);
        assert_eq!(bad.status, ConvergenceStatus::NonConvergent);
    }
}
