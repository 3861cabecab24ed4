use serde::{Deserialize, Serialize};

use super::{Kernel, KernelOptions};
use crate::error::Result;
use crate::quadrature::CompositeRule;

/// Tolerance on `F(lo)` and `1 - F(hi)` at the window edges.
const BOUNDARY_TOL: f64 = 1e-8;
/// Offset (in units of the kernel scale) where the cumulative integral starts.
const TAIL: f64 = 16.0;

/// Distribution function `F(s, x, y, z, t, w) = ∫_{-∞}^{w} f(s, x, y, z, t, u) du`.
#[derive(Debug, Clone)]
pub struct CdfView {
    kernel: Kernel,
    opts: KernelOptions,
}

pub fn cdf_from_density(k: &Kernel) -> CdfView {
    CdfView::new(k.clone(), KernelOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfCheck {
    pub lo: f64,
    pub hi: f64,
    pub at_lo: f64,
    pub at_hi: f64,
    pub monotone: bool,
    /// `F` at `points + 1` equally spaced abscissae over `[lo, hi]`.
    pub values: Vec<f64>,
}

impl CdfCheck {
    pub fn passed(&self) -> bool {
        self.monotone && self.at_lo <= BOUNDARY_TOL && self.at_hi >= 1.0 - BOUNDARY_TOL
    }
}

impl CdfView {
    pub fn new(kernel: Kernel, opts: KernelOptions) -> Self {
        Self { kernel, opts }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    fn segment(&self, s: f64, p: [f64; 3], t: f64, a: f64, b: f64, panels: usize) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        let [x, y, z] = p;
        let rule = CompositeRule::new(a, b, panels.max(1), self.opts.per_panel)?;
        Ok(rule.integrate(|u| self.kernel.eval(s, x, y, z, t, u)))
    }

    pub fn eval(&self, s: f64, x: f64, y: f64, z: f64, t: f64, w: f64) -> Result<f64> {
        self.kernel.check_gap(s, t)?;
        let mu = self.kernel.location(x, y, z);
        let sigma = self.kernel.scale(s, t);
        let base = mu - TAIL * sigma;
        let top = w.min(mu + TAIL * sigma);
        let panels = ((top - base) / sigma).ceil().max(1.0) as usize;
        self.segment(s, [x, y, z], t, base, top, panels)
    }

    /// `F` at the edges of `location ± half_width · scale` and monotonicity
    /// over `points` equal sub-intervals, accumulated from the lower edge.
    pub fn boundary_check(
        &self,
        s: f64,
        parents: [f64; 3],
        t: f64,
        points: usize,
    ) -> Result<CdfCheck> {
        let [x, y, z] = parents;
        self.kernel.check_gap(s, t)?;
        let mu = self.kernel.location(x, y, z);
        let r = self.opts.half_width * self.kernel.scale(s, t);
        let (lo, hi) = (mu - r, mu + r);
        let n = points.max(1);
        let mut values = Vec::with_capacity(n + 1);
        let mut acc = self.eval(s, x, y, z, t, lo)?;
        values.push(acc);
        let step = (hi - lo) / n as f64;
        for i in 0..n {
            let a = lo + i as f64 * step;
            acc += self.segment(s, parents, t, a, a + step, 1)?;
            values.push(acc);
        }
        let monotone = values.windows(2).all(|v| v[1] >= v[0]);
        Ok(CdfCheck {
            lo,
            hi,
            at_lo: values[0],
            at_hi: *values.last().expect("nonempty"),
            monotone,
            values,
        })
    }
}
