//! Delay equations with unit lag, integrated by the method of steps, and
//! residual checks of the delay/advanced equations along closed-form
//! families.
//!
//! All equations here have the form `y'(t) = F(t, y(t), y(t - 1))`. On each
//! unit interval the delayed state is already known, so a classical RK4
//! step advances the solution. Delayed values at half steps come from the
//! history function or from cubic Hermite interpolation of the computed
//! solution (the node derivatives are the stage-one slopes), which keeps the
//! scheme fourth order.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::family::ClosedFormFamily;
use crate::generator::{estimate_generator, GeneratorTensor};
use crate::limits::{Convergence, DEFAULT_DELTAS, RESIDUAL_FLOOR};
use crate::simplex::SimplexVector;
use crate::tensor::{contract, CubicTensor};

/// Default integration step.
pub const DEFAULT_STEP: f64 = 1.0 / 64.0;

/// Solution of a unit-delay equation on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdeSolution {
    pub t_start: f64,
    pub t_end: f64,
    pub step: f64,
    /// History sampled on the grid over `[t_start - 1, t_start]`.
    pub history: Vec<Vec<f64>>,
    /// Grid times `t_start + i * step`, ending at `t_end`.
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl DdeSolution {
    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// State at grid time `t` (nearest node).
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        let i = ((t - self.t_start) / self.step).round();
        if i < 0.0 {
            return None;
        }
        self.values.get(i as usize).map(Vec::as_slice)
    }

    /// Largest deviation of `sum_k y_k(t)` from its value at `t_start`.
    pub fn mass_drift(&self) -> f64 {
        let m0: f64 = self.values[0].iter().sum();
        self.values
            .iter()
            .map(|v| (v.iter().sum::<f64>() - m0).abs())
            .fold(0.0, f64::max)
    }
}

fn steps_per_unit(h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0 && h <= 1.0) {
        return Err(param("h", format!("step {h} must lie in (0, 1]")));
    }
    let n = (1.0 / h).round();
    if (n * h - 1.0).abs() > 1e-12 {
        return Err(param("h", format!("step {h} does not divide the unit delay")));
    }
    Ok(n as usize)
}

struct Dense {
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(y, k)| y + a * k).collect()
}

/// Generic unit-delay integrator. `rhs(t, y, y_delayed)`.
pub fn method_of_steps<H, F>(
    history: H,
    t0: f64,
    t_end: f64,
    h: f64,
    mut rhs: F,
) -> Result<DdeSolution>
where
    H: Fn(f64) -> Result<Vec<f64>>,
    F: FnMut(f64, &[f64], &[f64]) -> Result<Vec<f64>>,
{
    let per_unit = steps_per_unit(h)?;
    if !(t_end > t0) {
        return Err(param("t_end", format!("{t_end} must exceed t0 = {t0}")));
    }
    let total = ((t_end - t0) / h).round();
    if ((total * h) - (t_end - t0)).abs() > 1e-9 * (t_end - t0).max(1.0) {
        return Err(param("t_end", "t_end - t0 must be a multiple of h"));
    }
    let total = total as usize;

    let history_grid = (0..=per_unit)
        .map(|j| history(t0 - 1.0 + j as f64 * h))
        .collect::<Result<Vec<_>>>()?;
    let dim = history_grid[0].len();
    if history_grid.iter().any(|v| v.len() != dim) {
        return Err(Error::Dimension {
            left: dim,
            right: history_grid.iter().map(Vec::len).find(|&l| l != dim).unwrap(),
        });
    }

    let mut dense = Dense {
        values: vec![history_grid[per_unit].clone()],
        slopes: Vec::with_capacity(total + 1),
    };
    let two_n = 2 * per_unit as i64;
    // delayed state at time t0 + q h / 2
    let delayed = |dense: &Dense, q: i64| -> Result<Vec<f64>> {
        if q <= 0 {
            if q % 2 == 0 {
                return Ok(history_grid[(q / 2 + per_unit as i64) as usize].clone());
            }
            return history(t0 + q as f64 * h / 2.0);
        }
        if q % 2 == 0 {
            return Ok(dense.values[(q / 2) as usize].clone());
        }
        let i = ((q - 1) / 2) as usize;
        let (y0, y1) = (&dense.values[i], &dense.values[i + 1]);
        let (d0, d1) = (&dense.slopes[i], &dense.slopes[i + 1]);
        Ok((0..y0.len())
            .map(|e| 0.5 * (y0[e] + y1[e]) + h * (d0[e] - d1[e]) / 8.0)
            .collect())
    };

    let mut times = Vec::with_capacity(total + 1);
    times.push(t0);
    for i in 0..=total {
        let t = t0 + i as f64 * h;
        let q = 2 * i as i64 - two_n;
        let y = dense.values[i].clone();
        let k1 = rhs(t, &y, &delayed(&dense, q)?)?;
        if k1.len() != dim {
            return Err(Error::Dimension {
                left: dim,
                right: k1.len(),
            });
        }
        dense.slopes.push(k1.clone());
        if i == total {
            break;
        }
        let mid = delayed(&dense, q + 1)?;
        let k2 = rhs(t + h / 2.0, &axpy(&y, h / 2.0, &k1), &mid)?;
        let k3 = rhs(t + h / 2.0, &axpy(&y, h / 2.0, &k2), &mid)?;
        let k4 = rhs(t + h, &axpy(&y, h, &k3), &delayed(&dense, q + 2)?)?;
        let next = (0..dim)
            .map(|e| y[e] + h / 6.0 * (k1[e] + 2.0 * k2[e] + 2.0 * k3[e] + k4[e]))
            .collect();
        dense.values.push(next);
        times.push(t0 + (i + 1) as f64 * h);
    }

    Ok(DdeSolution {
        t_start: t0,
        t_end,
        step: h,
        history: history_grid,
        times,
        values: dense.values,
    })
}

/// Integrates `dx_k/dt = sum_{i,j,l} a_{ijl,k}(t) x_i(t-1) x_j(t-1) x_l(t-1)`.
pub fn integrate_distribution_dde<A, H>(
    generator: A,
    history: H,
    t0: f64,
    t_end: f64,
    h: f64,
) -> Result<DdeSolution>
where
    A: Fn(f64) -> Result<GeneratorTensor>,
    H: Fn(f64) -> Result<Vec<f64>>,
{
    method_of_steps(history, t0, t_end, h, |t, _, lagged| {
        contract(&generator(t)?.values, lagged)
    })
}

/// Grid solution of the forward equation for `p^{[s,t]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDdeSolution {
    pub s: i64,
    pub n: usize,
    pub solution: DdeSolution,
}

impl TransitionDdeSolution {
    pub fn tensor_at(&self, t: f64) -> Option<CubicTensor> {
        let v = self.solution.at(t)?;
        CubicTensor::new(self.n, v.to_vec()).ok()
    }

    /// Largest `|row sum - 1|` over every stored tensor.
    pub fn max_row_sum_defect(&self) -> f64 {
        self.solution
            .values
            .iter()
            .flat_map(|v| v.chunks(self.n).map(|r| (r.iter().sum::<f64>() - 1.0).abs()))
            .fold(0.0, f64::max)
    }
}

/// Integrates
/// `d/dt p^{[s,t]}_{ijk,l} = sum_{m,g,d} p^{[s,t-1]}_{ijk,m} a_{mgd,l}(t) x^{(t-1)}_g x^{(t-1)}_d`
/// from `t = s + 2`, with `seed(u) = p^{[s,u]}` supplied on `[s + 1, s + 2]`.
pub fn integrate_forward_transition_dde<P, X, A>(
    seed: P,
    distribution: X,
    generator: A,
    s: i64,
    t_end: f64,
    h: f64,
) -> Result<TransitionDdeSolution>
where
    P: Fn(f64) -> Result<CubicTensor>,
    X: Fn(f64) -> Result<Vec<f64>>,
    A: Fn(f64) -> Result<GeneratorTensor>,
{
    let t0 = s as f64 + 2.0;
    if t_end < t0 {
        return Err(Error::Gap(format!(
            "forward equation needs t_end >= s + 2 = {t0}, got {t_end}"
        )));
    }
    let n = seed(t0)?.n();
    let history = |u: f64| -> Result<Vec<f64>> {
        if u < s as f64 + 1.0 - 1e-12 {
            return Err(Error::Gap(format!("seed segment starts at s + 1, asked for {u}")));
        }
        Ok(seed(u)?.into_entries())
    };
    if t_end == t0 {
        let p = history(t0)?;
        let history_grid = vec![p.clone()];
        return Ok(TransitionDdeSolution {
            s,
            n,
            solution: DdeSolution {
                t_start: t0,
                t_end,
                step: h,
                history: history_grid,
                times: vec![t0],
                values: vec![p],
            },
        });
    }
    let solution = method_of_steps(history, t0, t_end, h, |t, _, lagged| {
        let x = distribution(t - 1.0)?;
        let a = generator(t)?.mixing_matrix(&x)?;
        let lagged = CubicTensor::new(n, lagged.to_vec())?;
        Ok(lagged.right_multiply(&a)?.into_entries())
    })?;
    Ok(TransitionDdeSolution { s, n, solution })
}

/// Generator provider backed by [`estimate_generator`] on a family.
pub fn family_generator(
    family: &ClosedFormFamily,
    x0: &SimplexVector,
) -> impl Fn(f64) -> Result<GeneratorTensor> {
    let family = family.clone();
    let x0 = x0.clone();
    move |t| estimate_generator(&family, t, &x0, &DEFAULT_DELTAS)
}

/// Residuals of the advanced-argument equation for `∂p^{[s,t]}/∂s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardResidual {
    /// Against `-sum a_{ijk,m}(s+1) x_g x_d p^{[s+1,t]}_{mgd,l}`.
    pub corrected: Convergence,
    /// Against the form with `a_{mgd,l}(s+1) p^{[s+1,t]}_{mgd,l}` in one sum.
    pub printed: Convergence,
}

/// Central-difference `∂p/∂s` compared with the two right-hand sides,
/// evaluated at `fd_delta` and two halvings.
pub fn backward_residual<A>(
    family: &ClosedFormFamily,
    generator: A,
    s: f64,
    t: f64,
    x0: &SimplexVector,
    fd_delta: f64,
) -> Result<BackwardResidual>
where
    A: Fn(f64) -> Result<GeneratorTensor>,
{
    if t <= s + 2.0 {
        return Err(Error::Gap(format!("need t > s + 2, got s = {s}, t = {t}")));
    }
    if !(fd_delta > 0.0) {
        return Err(param("fd_delta", "must be positive"));
    }
    let n = family.n();
    let a = generator(s + 1.0)?;
    let x = family.state(s + 1.0, x0)?;
    let ahead = family.tensor(s + 1.0, t, x0)?;
    let corrected_rhs = a.values.right_multiply(&ahead.mixing_matrix(&x)?)?;

    let mut printed_rhs = vec![0.0; n];
    for ((m, g, d), row) in ahead.rows() {
        let w = x[g] * x[d];
        for l in 0..n {
            printed_rhs[l] += a.get(m, g, d, l) * row[l] * w;
        }
    }

    let mut corrected = Vec::new();
    let mut printed = Vec::new();
    let steps = vec![fd_delta, fd_delta / 2.0, fd_delta / 4.0];
    for &dl in &steps {
        let hi = family.tensor(s + dl, t, x0)?;
        let lo = family.tensor(s - dl, t, x0)?;
        let mut rc: f64 = 0.0;
        let mut rp: f64 = 0.0;
        for (e, (a, b)) in hi.entries().iter().zip(lo.entries()).enumerate() {
            let lhs = (a - b) / (2.0 * dl);
            rc = rc.max((lhs + corrected_rhs.entries()[e]).abs());
            rp = rp.max((lhs + printed_rhs[e % n]).abs());
        }
        corrected.push(rc);
        printed.push(rp);
    }
    Ok(BackwardResidual {
        corrected: Convergence::from_values(steps.clone(), corrected, RESIDUAL_FLOOR),
        printed: Convergence::from_values(steps, printed, RESIDUAL_FLOOR),
    })
}

/// `dx^{(t)}/dt` of the family's interpolated trajectory against
/// `sum a_{ijl,k}(t) x^{(t-1)}_i x^{(t-1)}_j x^{(t-1)}_l`.
pub fn distribution_dde_residual(
    family: &ClosedFormFamily,
    x0: &SimplexVector,
    t: f64,
    fd_delta: f64,
) -> Result<Convergence> {
    if t < 2.0 {
        return Err(Error::Gap(format!("need t >= 2, got {t}")));
    }
    if !(fd_delta > 0.0 && fd_delta < 1.0) {
        return Err(param("fd_delta", "must lie in (0, 1)"));
    }
    let a = estimate_generator(family, t, x0, &DEFAULT_DELTAS)?;
    let rhs = contract(&a.values, &family.state(t - 1.0, x0)?)?;
    Convergence::by_halving(fd_delta, RESIDUAL_FLOOR, |dl| {
        let hi = family.state(t + dl, x0)?;
        let lo = family.state(t - dl, x0)?;
        Ok((0..rhs.len())
            .map(|k| ((hi[k] - lo[k]) / (2.0 * dl) - rhs[k]).abs())
            .fold(0.0, f64::max))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{example1_family, neutral_inheritance_family, uniform_family};
    use crate::limits::ConvergenceStatus;
    use std::f64::consts::PI;

    fn zero_generator(n: usize) -> impl Fn(f64) -> Result<GeneratorTensor> {
        move |t| Ok(GeneratorTensor::exact(t, CubicTensor::zeros(n).unwrap()))
    }

    #[test]
    fn zero_rhs_keeps_history_endpoint() {
        let hist = |u: f64| Ok(vec![0.3 + 0.1 * u.sin(), 0.7 - 0.1 * u.sin()]);
        let sol = integrate_distribution_dde(zero_generator(2), hist, 1.0, 4.0, 1.0 / 8.0).unwrap();
        let end = hist(1.0).unwrap();
        for v in &sol.values {
            assert_eq!(v, &end);
        }
        assert_eq!(sol.times.len(), 25);
    }

    #[test]
    fn step_must_divide_delay() {
        let hist = |_: f64| Ok(vec![0.5, 0.5]);
        assert!(integrate_distribution_dde(zero_generator(2), hist, 0.0, 1.0, 0.3).is_err());
        assert!(integrate_distribution_dde(zero_generator(2), hist, 0.0, 1.05, 0.25).is_err());
        assert!(integrate_distribution_dde(zero_generator(2), hist, 1.0, 1.0, 0.25).is_err());
    }

    #[test]
    fn history_must_cover_the_lag_interval() {
        let hist = |u: f64| {
            if u < 0.5 {
                Err(Error::Gap("no history".into()))
            } else {
                Ok(vec![0.5, 0.5])
            }
        };
        assert!(integrate_distribution_dde(zero_generator(2), hist, 1.0, 2.0, 0.25).is_err());
    }

    #[test]
    fn fourth_order_on_smooth_delay_problem() {
        // y' = -y(t-1) + cos(t) y(t); the coupling to y(t) exercises all
        // four stages, the lag term exercises the dense output
        let hist = |u: f64| Ok(vec![1.0 + 0.5 * (2.0 * PI * u / 3.0).sin()]);
        let solve = |h: f64| {
            method_of_steps(hist, 0.0, 3.0, h, |t, y, lag| Ok(vec![-lag[0] + t.cos() * y[0]]))
                .unwrap()
        };
        let reference = solve(1.0 / 1024.0);
        let err = |h: f64| {
            let s = solve(h);
            (s.at(3.0).unwrap()[0] - reference.at(3.0).unwrap()[0]).abs()
        };
        let order = (err(1.0 / 16.0) / err(1.0 / 32.0)).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn neutral_family_forward_equation_is_reproduced() {
        let fam = neutral_inheritance_family(3);
        let x0 = SimplexVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let sol = integrate_forward_transition_dde(
            |u| fam.tensor(0.0, u, &x0),
            |u| fam.state(u, &x0),
            family_generator(&fam, &x0),
            0,
            4.0,
            DEFAULT_STEP,
        )
        .unwrap();
        for t in [2.5, 3.0, 4.0] {
            let exact = fam.tensor(0.0, t, &x0).unwrap();
            let err = sol.tensor_at(t).unwrap().max_abs_diff(&exact).unwrap();
            assert!(err < 1e-6, "t = {t}: {err:e}");
        }
        assert!(sol.max_row_sum_defect() < 1e-9);
    }

    #[test]
    fn zero_generator_freezes_transition() {
        let fam = example1_family(0.0).unwrap();
        let x0 = SimplexVector::uniform(3).unwrap();
        let sol = integrate_forward_transition_dde(
            |u| fam.tensor(0.0, u, &x0),
            |u| fam.state(u, &x0),
            zero_generator(3),
            0,
            3.0,
            0.25,
        )
        .unwrap();
        let p2 = fam.tensor(0.0, 2.0, &x0).unwrap();
        assert_eq!(sol.tensor_at(3.0).unwrap(), p2);
        assert!(matches!(
            integrate_forward_transition_dde(
                |u| fam.tensor(0.0, u, &x0),
                |u| fam.state(u, &x0),
                zero_generator(3),
                0,
                1.5,
                0.25
            ),
            Err(Error::Gap(_))
        ));
    }

    #[test]
    fn backward_identity_holds_for_neutral_family() {
        let fam = neutral_inheritance_family(3);
        let x0 = SimplexVector::new(vec![0.25, 0.25, 0.5]).unwrap();
        let r = backward_residual(&fam, family_generator(&fam, &x0), 0.0, 3.5, &x0, 1e-2).unwrap();
        assert!(r.corrected.finest() < 1e-6, "{r:?}");
        assert!(r.corrected.is_convergent());
        assert!(r.printed.finest() > 1e-3);
    }

    #[test]
    fn backward_residual_vanishes_for_time_constant_family() {
        let fam = uniform_family(3);
        let x0 = SimplexVector::uniform(3).unwrap();
        let r = backward_residual(&fam, zero_generator(3), 0.0, 3.0, &x0, 1e-2).unwrap();
        assert!(r.corrected.finest() <= 1e-10);
        assert_eq!(r.corrected.status, ConvergenceStatus::NoiseFloor);
        assert!(backward_residual(&fam, zero_generator(3), 0.0, 2.0, &x0, 1e-2).is_err());
    }

    #[test]
    fn distribution_residuals() {
        let x0 = SimplexVector::uniform(3).unwrap();
        let r = distribution_dde_residual(&uniform_family(3), &x0, 2.5, 1e-2).unwrap();
        assert!(r.finest() <= 1e-10);

        let fam = example1_family(0.0).unwrap();
        let delta = SimplexVector::point_mass(3, 0).unwrap();
        let r = distribution_dde_residual(&fam, &delta, 2.5, 1e-2).unwrap();
        assert!(r.finest() <= 1e-8);

        let x0 = SimplexVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let r = distribution_dde_residual(&fam, &x0, 2.5, 1e-2).unwrap();
        assert!(r.is_convergent(), "{r:?}");
        assert!(distribution_dde_residual(&fam, &x0, 1.5, 1e-2).is_err());
    }
}
