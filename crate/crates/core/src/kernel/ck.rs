//! The density form of the fundamental equation and its two
//! integro-differential consequences.

use serde::{Deserialize, Serialize};

use super::measure::{sorted_pairs, MeasureGrid, MeasureProvider, MAX_TRUNCATION_DEFECT};
use super::{Kernel, KernelOptions};
use crate::error::{param, Error, Result};
use crate::limits::{check_deltas, extrapolate, Convergence, Extrapolated, RESIDUAL_FLOOR};
use crate::quadrature::CompositeRule;

fn pair_list(m: &MeasureGrid) -> Vec<(f64, f64, f64)> {
    let p = m.probabilities();
    let mut out = Vec::new();
    sorted_pairs(&p, |i, j, w| {
        if w > 0.0 {
            out.push((m.nodes[i], m.nodes[j], w));
        }
    });
    out
}

fn check_truncation(mass: f64) -> Result<()> {
    let defect = (1.0 - mass).abs();
    if !mass.is_finite() || defect > MAX_TRUNCATION_DEFECT {
        return Err(Error::Truncation {
            defect,
            limit: MAX_TRUNCATION_DEFECT,
        });
    }
    Ok(())
}

/// Quadrature over the intermediate state `u` for parents `(x, y, z)`,
/// with the kernel values `f(s, x, y, z, τ, u)` at the nodes.
fn intermediate(
    k: &Kernel,
    s: f64,
    parents: [f64; 3],
    tau: f64,
    opts: &KernelOptions,
) -> Result<(CompositeRule, Vec<f64>)> {
    let rule = k.window(s, parents, tau, opts)?;
    let [x, y, z] = parents;
    let values: Vec<f64> = rule.nodes.iter().map(|&u| k.eval(s, x, y, z, tau, u)).collect();
    let mass: f64 = values.iter().zip(&rule.weights).map(|(v, w)| v * w).sum();
    check_truncation(mass)?;
    Ok((rule, values))
}

fn right_side(
    k: &Kernel,
    pairs: &[(f64, f64, f64)],
    rule: &CompositeRule,
    first: &[f64],
    tau: f64,
    t: f64,
    w: f64,
) -> f64 {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .zip(first)
        .map(|((&u, &wu), &fu)| {
            let inner: f64 = pairs.iter().map(|&(a, b, p)| p * k.eval(tau, u, a, b, t, w)).sum();
            wu * fu * inner
        })
        .sum()
}

fn check_ck_times(k: &Kernel, m_tau: &MeasureGrid, s: f64, tau: f64, t: f64) -> Result<()> {
    k.check_gap(s, tau)?;
    k.check_gap(tau, t)?;
    if (m_tau.time - tau).abs() > 1e-12 {
        return Err(param("m_tau", format!("measure is at time {}, need {tau}", m_tau.time)));
    }
    Ok(())
}

/// `∫∫∫ f(s, x, y, z, τ, u) f(τ, u, ϑ, q, t, w) m_τ(dϑ) m_τ(dq) du`.
#[allow(clippy::too_many_arguments)]
pub fn ck_right_density(
    k: &Kernel,
    m_tau: &MeasureGrid,
    s: f64,
    tau: f64,
    t: f64,
    parents: [f64; 3],
    w: f64,
    opts: &KernelOptions,
) -> Result<f64> {
    check_ck_times(k, m_tau, s, tau, t)?;
    let (rule, first) = intermediate(k, s, parents, tau, opts)?;
    Ok(right_side(k, &pair_list(m_tau), &rule, &first, tau, t, w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkRow {
    /// `(x, y, z, w)`.
    pub probe: [f64; 4],
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkResidual {
    pub max_residual: f64,
    pub rows: Vec<CkRow>,
    /// Largest `|1 - ∫ f(s, x, y, z, τ, u) du|` over the probes.
    pub truncation_defect: f64,
}

/// Largest `|f(s, x, y, z, t, w) - right side|` over the probes.
pub fn ck_residual_density(
    k: &Kernel,
    m_tau: &MeasureGrid,
    s: f64,
    tau: f64,
    t: f64,
    probes: &[[f64; 4]],
    opts: &KernelOptions,
) -> Result<CkResidual> {
    check_ck_times(k, m_tau, s, tau, t)?;
    let pairs = pair_list(m_tau);
    let mut rows = Vec::with_capacity(probes.len());
    let mut truncation_defect: f64 = 0.0;
    for &[x, y, z, w] in probes {
        let (rule, first) = intermediate(k, s, [x, y, z], tau, opts)?;
        let mass: f64 = first.iter().zip(&rule.weights).map(|(v, w)| v * w).sum();
        truncation_defect = truncation_defect.max((1.0 - mass).abs());
        rows.push(CkRow {
            probe: [x, y, z, w],
            left: k.eval(s, x, y, z, t, w),
            right: right_side(k, &pairs, &rule, &first, tau, t, w),
        });
    }
    let max_residual = rows.iter().map(|r| (r.left - r.right).abs()).fold(0.0, f64::max);
    Ok(CkResidual {
        max_residual,
        rows,
        truncation_defect,
    })
}

/// Variance of `f(s, x, y, z, t, ·)` minus the variance of the right side as
/// a density in `w`, both by quadrature.
#[allow(clippy::too_many_arguments)]
pub fn ck_variance_gap(
    k: &Kernel,
    m_tau: &MeasureGrid,
    s: f64,
    tau: f64,
    t: f64,
    parents: [f64; 3],
    opts: &KernelOptions,
) -> Result<f64> {
    check_ck_times(k, m_tau, s, tau, t)?;
    let [x, y, z] = parents;
    let left_rule = k.window(s, parents, t, opts)?;
    let left = moments(&left_rule, |w| k.eval(s, x, y, z, t, w));
    check_truncation(left.0)?;

    let (rule, first) = intermediate(k, s, parents, tau, opts)?;
    let pairs = pair_list(m_tau);
    let mbar = m_tau.mean();
    let center = k.location(k.location(x, y, z), mbar, mbar);
    let spread = (k.scale(s, tau).powi(2) + k.scale(tau, t).powi(2) + 2.0 * m_tau.variance()).sqrt();
    let w_rule = opts.window(center, spread)?;
    let right = moments(&w_rule, |w| right_side(k, &pairs, &rule, &first, tau, t, w));
    check_truncation(right.0)?;
    Ok(left.2 - right.2)
}

/// `(mass, mean, variance)` of the density `f` on `rule`.
fn moments(rule: &CompositeRule, f: impl Fn(f64) -> f64) -> (f64, f64, f64) {
    let values: Vec<f64> = rule.nodes.iter().map(|&w| f(w)).collect();
    let sum = |g: &dyn Fn(f64) -> f64| -> f64 {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .zip(&values)
            .map(|((&w, &q), &v)| q * v * g(w))
            .sum()
    };
    let mass = sum(&|_| 1.0);
    let mean = sum(&|w| w) / mass;
    let var = sum(&|w| (w - mean) * (w - mean)) / mass;
    (mass, mean, var)
}

/// `a(t, u, ϑ, q, w) = lim (f(t-1, u, ϑ, q, t+Δ, w) - f(0, u, ϑ, q, 1, w)) / Δ`.
pub fn density_generator(k: &Kernel, t: f64, probe: [f64; 4], deltas: &[f64]) -> Result<Extrapolated> {
    check_deltas(deltas)?;
    if !(t >= 1.0) {
        return Err(param("t", format!("generator needs t >= 1, got {t}")));
    }
    let value = generator_value(k, t, probe, deltas);
    if !value.value.is_finite() {
        return Err(Error::Tensor(format!("kernel {} not evaluable near t = {t}", k.name())));
    }
    Ok(value)
}

fn generator_value(k: &Kernel, t: f64, [u, a, b, w]: [f64; 4], deltas: &[f64]) -> Extrapolated {
    let base = k.eval(0.0, u, a, b, 1.0, w);
    let q: Vec<f64> = deltas
        .iter()
        .map(|&d| (k.eval(t - 1.0, u, a, b, t + d, w) - base) / d)
        .collect();
    extrapolate(deltas, &q, 1).unwrap_or(Extrapolated {
        value: f64::NAN,
        error: f64::NAN,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `∂f/∂t = ∫∫∫ a(t, u, ϑ, q, w) f(s, x, y, z, t-1, u) du m_{t-1}(dϑ) m_{t-1}(dq)`.
    Forward,
    /// `∂f/∂s = -∫∫∫ a(s+1, x, y, z, u) f(s+1, u, ϑ, q, t, w) du m_{s+1}(dϑ) m_{s+1}(dq)`.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegroRow {
    pub probe: [f64; 4],
    /// Central difference at the finest step.
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegroResidual {
    pub direction: Direction,
    /// Largest `|left - right|` over the probes at `fd_delta` and two halvings.
    pub residual: Convergence,
    pub rows: Vec<IntegroRow>,
}

/// Residual of one integro-differential equation at probes `(x, y, z, w)`.
#[allow(clippy::too_many_arguments)]
pub fn integro_residual(
    k: &Kernel,
    measures: &impl MeasureProvider,
    direction: Direction,
    s: f64,
    t: f64,
    probes: &[[f64; 4]],
    fd_delta: f64,
    opts: &KernelOptions,
) -> Result<IntegroResidual> {
    check_deltas(&opts.deltas)?;
    if !(fd_delta > 0.0 && fd_delta < 0.5) {
        return Err(param("fd_delta", "must lie in (0, 0.5)"));
    }
    match direction {
        Direction::Forward if t < s + 2.0 => {
            return Err(Error::Gap(format!("forward equation needs t >= s + 2, got s = {s}, t = {t}")))
        }
        Direction::Backward if t <= s + 2.0 => {
            return Err(Error::Gap(format!("backward equation needs t > s + 2, got s = {s}, t = {t}")))
        }
        _ => {}
    }
    if probes.is_empty() {
        return Err(param("probes", "need at least one probe"));
    }
    let m = measures.measure(match direction {
        Direction::Forward => t - 1.0,
        Direction::Backward => s + 1.0,
    })?;
    let pairs = pair_list(&m);

    let mut rights = Vec::with_capacity(probes.len());
    for &[x, y, z, w] in probes {
        let right = match direction {
            Direction::Forward => {
                let (rule, first) = intermediate(k, s, [x, y, z], t - 1.0, opts)?;
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .zip(&first)
                    .map(|((&u, &wu), &fu)| {
                        let inner: f64 = pairs
                            .iter()
                            .map(|&(a, b, p)| p * generator_value(k, t, [u, a, b, w], &opts.deltas).value)
                            .sum();
                        wu * fu * inner
                    })
                    .sum::<f64>()
            }
            Direction::Backward => {
                let rule = k.window(s, [x, y, z], s + 1.0, opts)?;
                -rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&u, &wu)| {
                        let a = generator_value(k, s + 1.0, [x, y, z, u], &opts.deltas).value;
                        let inner: f64 =
                            pairs.iter().map(|&(b, c, p)| p * k.eval(s + 1.0, u, b, c, t, w)).sum();
                        wu * a * inner
                    })
                    .sum::<f64>()
            }
        };
        if !right.is_finite() {
            return Err(Error::Tensor(format!("kernel {} gave a non-finite right side", k.name())));
        }
        rights.push(right);
    }

    let left = |d: f64, [x, y, z, w]: [f64; 4]| match direction {
        Direction::Forward => (k.eval(s, x, y, z, t + d, w) - k.eval(s, x, y, z, t - d, w)) / (2.0 * d),
        Direction::Backward => (k.eval(s + d, x, y, z, t, w) - k.eval(s - d, x, y, z, t, w)) / (2.0 * d),
    };
    let residual = Convergence::by_halving(fd_delta, RESIDUAL_FLOOR, |d| {
        Ok(probes
            .iter()
            .zip(&rights)
            .map(|(&p, r)| (left(d, p) - r).abs())
            .fold(0.0, f64::max))
    })?;
    let finest = *residual.steps.last().expect("three steps");
    let rows = probes
        .iter()
        .zip(rights)
        .map(|(&p, right)| IntegroRow {
            probe: p,
            left: left(finest, p),
            right,
        })
        .collect();
    Ok(IntegroResidual {
        direction,
        residual,
        rows,
    })
}
