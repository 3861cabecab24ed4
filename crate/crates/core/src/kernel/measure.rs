use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::{Kernel, KernelOptions};
use crate::error::{param, Error, Result};
use crate::quadrature::CompositeRule;

/// Smallest node count for a measure that is not a point mass.
pub const MIN_NODES: usize = 32;
/// Allowed deviation of `Σ weight · density` from one.
pub const MASS_TOL: f64 = 1e-6;
/// Pre-renormalization mass defect beyond which a grid is deemed too short.
pub const MAX_TRUNCATION_DEFECT: f64 = 0.01;

/// A probability measure on the real line held as density values at
/// quadrature nodes. A point mass is the single exception to the node-count
/// rule: one node with unit weight and unit density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureGrid {
    pub time: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub density: Vec<f64>,
}

impl MeasureGrid {
    pub fn new(time: f64, nodes: Vec<f64>, weights: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if weights.len() != nodes.len() || density.len() != nodes.len() {
            return Err(Error::Shape {
                expected: nodes.len(),
                actual: weights.len().min(density.len()),
            });
        }
        if nodes.len() < MIN_NODES {
            return Err(param("nodes", format!("need at least {MIN_NODES}, got {}", nodes.len())));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(param("nodes", "must be strictly increasing"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(param("weights", "must be positive"));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(param("density", "must be finite and nonnegative"));
        }
        let grid = Self {
            time,
            nodes,
            weights,
            density,
        };
        let mass = grid.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Distribution(format!("measure has mass {mass}")));
        }
        Ok(grid)
    }

    pub fn point_mass(at: f64, time: f64) -> Self {
        Self {
            time,
            nodes: vec![at],
            weights: vec![1.0],
            density: vec![1.0],
        }
    }

    /// Samples `f` at the nodes of `rule`.
    pub fn from_rule(rule: &CompositeRule, time: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let density = rule.nodes.iter().map(|&x| f(x)).collect();
        Self::new(time, rule.nodes.clone(), rule.weights.clone(), density)
    }

    /// Normal law discretized on `mean ± half_width · sd`; variance zero
    /// gives a point mass.
    pub fn gaussian(mean: f64, variance: f64, time: f64, opts: &KernelOptions) -> Result<Self> {
        if variance == 0.0 {
            return Ok(Self::point_mass(mean, time));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(param("variance", format!("must be nonnegative, got {variance}")));
        }
        let rule = opts.window_with(mean, variance.sqrt(), opts.measure_panels)?;
        Self::from_rule(&rule, time, |x| super::gaussian_pdf(x - mean, variance))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_point_mass(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Node masses `weight · density`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.density).map(|(w, d)| w * d).collect()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.probabilities())
            .map(|(&x, p)| p * f(x))
            .sum()
    }

    pub fn mass(&self) -> f64 {
        self.expect(|_| 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    /// `∫ (ϑ - about)^k m(dϑ)`.
    pub fn moment_about(&self, about: f64, k: i32) -> f64 {
        self.expect(|x| (x - about).powi(k))
    }
}

/// Calls `f(i, j, k, weight)` once per sorted index triple `i <= j <= k`
/// with the weight summed over its distinct permutations.
pub(crate) fn sorted_triples(p: &[f64], mut f: impl FnMut(usize, usize, usize, f64)) {
    let n = p.len();
    for i in 0..n {
        for j in i..n {
            let pij = p[i] * p[j];
            for (k, &pk) in p.iter().enumerate().skip(j) {
                let mult = match (i == j, j == k) {
                    (true, true) => 1.0,
                    (false, false) => 6.0,
                    _ => 3.0,
                };
                f(i, j, k, mult * pij * pk);
            }
        }
    }
}

/// Pair counterpart of [`sorted_triples`].
pub(crate) fn sorted_pairs(p: &[f64], mut f: impl FnMut(usize, usize, f64)) {
    let n = p.len();
    for i in 0..n {
        f(i, i, p[i] * p[i]);
        for j in i + 1..n {
            f(i, j, 2.0 * p[i] * p[j]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolved {
    pub grid: MeasureGrid,
    /// `|1 - mass|` of the output before renormalization.
    pub mass_defect: f64,
}

/// `m_t(dw) = ∫∫∫ f(s, x, y, z, t, w) m(dx) m(dy) m(dz) dw` for the measure
/// `m` at time `s`.
///
/// The output grid spans `c ± half_width · r`, where `c` is the mean
/// location of a parent triple and `r^2` adds the variance of that location
/// to `scale(s, t)^2`.
pub fn evolve_measure_grid(
    k: &Kernel,
    m: &MeasureGrid,
    s: f64,
    t: f64,
    opts: &KernelOptions,
) -> Result<Evolved> {
    k.check_gap(s, t)?;
    let p = m.probabilities();
    let mut triples = Vec::new();
    sorted_triples(&p, |i, j, l, w| {
        if w > 0.0 {
            triples.push((m.nodes[i], m.nodes[j], m.nodes[l], w));
        }
    });

    let total: f64 = triples.iter().map(|t| t.3).sum();
    let center = triples
        .iter()
        .map(|&(x, y, z, w)| w * k.location(x, y, z))
        .sum::<f64>()
        / total;
    let spread_var = triples
        .iter()
        .map(|&(x, y, z, w)| w * (k.location(x, y, z) - center).powi(2))
        .sum::<f64>()
        / total;
    let spread = (spread_var + k.scale(s, t).powi(2)).sqrt();
    let rule = opts.window_with(center, spread, opts.measure_panels)?;

    let mut density: Vec<f64> = rule
        .nodes
        .iter()
        .map(|&w| {
            triples
                .iter()
                .map(|&(x, y, z, pw)| pw * k.eval(s, x, y, z, t, w))
                .sum()
        })
        .collect();
    let mass: f64 = density.iter().zip(&rule.weights).map(|(d, w)| d * w).sum();
    let mass_defect = (1.0 - mass).abs();
    if !mass.is_finite() || mass_defect > MAX_TRUNCATION_DEFECT {
        return Err(Error::Truncation {
            defect: mass_defect,
            limit: MAX_TRUNCATION_DEFECT,
        });
    }
    density.iter_mut().for_each(|d| *d /= mass);
    Ok(Evolved {
        grid: MeasureGrid::new(t, rule.nodes, rule.weights, density)?,
        mass_defect,
    })
}

/// Supplies the population measure at a given time.
pub trait MeasureProvider {
    fn measure(&self, t: f64) -> Result<MeasureGrid>;
}

impl<F: Fn(f64) -> Result<MeasureGrid>> MeasureProvider for F {
    fn measure(&self, t: f64) -> Result<MeasureGrid> {
        self(t)
    }
}

/// Measures generated from a base measure `m_0` at time `t_0` by one
/// application of [`evolve_measure_grid`]: `m_t = evolve(m_0, t_0 → t)` for
/// `t >= t_0 + 1`, and `m_{t_0} = m_0`.
#[derive(Debug)]
pub struct MeasureFlow {
    kernel: Kernel,
    base: MeasureGrid,
    opts: KernelOptions,
    cache: RefCell<Vec<(f64, Evolved)>>,
}

impl MeasureFlow {
    pub fn new(kernel: Kernel, base: MeasureGrid, opts: KernelOptions) -> Self {
        Self {
            kernel,
            base,
            opts,
            cache: RefCell::new(Vec::new()),
        }
    }

    pub fn base(&self) -> &MeasureGrid {
        &self.base
    }

    pub fn evolved(&self, t: f64) -> Result<Evolved> {
        if t == self.base.time {
            return Ok(Evolved {
                grid: self.base.clone(),
                mass_defect: 0.0,
            });
        }
        if let Some((_, e)) = self.cache.borrow().iter().find(|(at, _)| *at == t) {
            return Ok(e.clone());
        }
        let e = evolve_measure_grid(&self.kernel, &self.base, self.base.time, t, &self.opts)?;
        self.cache.borrow_mut().push((t, e.clone()));
        Ok(e)
    }

    /// Largest mass defect among the measures produced so far.
    pub fn max_defect(&self) -> f64 {
        self.cache.borrow().iter().map(|(_, e)| e.mass_defect).fold(0.0, f64::max)
    }
}

impl MeasureProvider for MeasureFlow {
    fn measure(&self, t: f64) -> Result<MeasureGrid> {
        self.evolved(t).map(|e| e.grid)
    }
}
