//! Composite Gauss–Legendre quadrature on finite intervals.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Nodes per panel used throughout the crate.
pub const NODES_PER_PANEL: usize = 16;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Roots of `P_n` by Newton iteration from the Chebyshev-like initial
    /// guesses, weights from `2 / ((1 - x^2) P_n'(x)^2)`.
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1, "degree must be positive");
        let n = degree;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A composite rule: `panels` equal panels over `[lo, hi]`, each carrying a
/// Gauss–Legendre rule of `per_panel` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeRule {
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(lo: f64, hi: f64, panels: usize, per_panel: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(param("domain", format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        if panels == 0 || per_panel == 0 {
            return Err(param("panels", "need at least one panel and one node"));
        }
        let base = GaussLegendre::new(per_panel);
        let width = (hi - lo) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let a = lo + p as f64 * width;
            let mid = a + width / 2.0;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + x * width / 2.0);
                weights.push(w * width / 2.0);
            }
        }
        Ok(Self {
            lo,
            hi,
            nodes,
            weights,
        })
    }

    /// Rule with the default 16 nodes per panel.
    pub fn standard(lo: f64, hi: f64, panels: usize) -> Result<Self> {
        Self::new(lo, hi, panels, NODES_PER_PANEL)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let r = GaussLegendre::new(16);
        let total: f64 = r.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // ∫ x^30 over [-1, 1] = 2 / 31
        let m: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(30)).sum();
        assert!((m - 2.0 / 31.0).abs() < 1e-14);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn small_rules_match_tables() {
        let r = GaussLegendre::new(2);
        assert!((r.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let r = GaussLegendre::new(3);
        assert_eq!(r.nodes[1], 0.0);
        assert!((r.weights[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn standard_gaussian_moments() {
        let rule = CompositeRule::standard(-10.0, 10.0, 20).unwrap();
        let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
        let want = [1.0, 0.0, 1.0, 0.0, 3.0];
        for (k, w) in want.iter().enumerate() {
            let m = rule.integrate(|x| x.powi(k as i32) * phi(x));
            assert!((m - w).abs() < 1e-10, "moment {k}: {m}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(CompositeRule::standard(1.0, 1.0, 4).is_err());
        assert!(CompositeRule::standard(0.0, 1.0, 0).is_err());
    }
}
