//! Transition densities on the real line.
//!
//! A [`Kernel`] is a density `f(s, x, y, z, t, w)` of the offspring state `w`
//! given parent states `x, y, z` over the time gap `[s, t]`, together with
//! two pieces of metadata used to place quadrature windows: a location
//! `location(x, y, z)` and a spread `scale(s, t)` (a standard deviation).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::limits::DEFAULT_DELTAS;
use crate::quadrature::{CompositeRule, NODES_PER_PANEL};

mod cdf;
mod ck;
mod measure;
mod moments;
mod stencil;

pub use cdf::{cdf_from_density, CdfCheck, CdfView};
pub use ck::{
    ck_residual_density, ck_right_density, ck_variance_gap, density_generator, integro_residual,
    CkResidual, CkRow, Direction, IntegroResidual, IntegroRow,
};
pub use measure::{
    evolve_measure_grid, Evolved, MeasureFlow, MeasureGrid, MeasureProvider, MASS_TOL,
    MAX_TRUNCATION_DEFECT, MIN_NODES,
};
pub use moments::{
    backward_coefficients, forward_coefficients, moment_coefficients, reduced_equation_residual,
    BackwardCoefficients, Coefficient, ForwardCoefficients, MomentCoefficients, ReducedForm,
    ReducedResidual,
};

type DensityFn = dyn Fn(f64, f64, f64, f64, f64, f64) -> f64 + Send + Sync;
type LocationFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;
type ScaleFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Slack allowed on the `t - s >= 1` constraint.
const GAP_SLACK: f64 = 1e-12;

/// Quadrature settings shared by the continuous routines.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOptions {
    /// Panels across a metadata window `location ± half_width · scale`.
    pub panels: usize,
    pub per_panel: usize,
    pub half_width: f64,
    /// Fixed domain for integrals over a parent state, where the kernel
    /// metadata gives no window.
    pub domain: (f64, f64),
    pub domain_panels: usize,
    /// Panels used for measures produced by [`evolve_measure_grid`].
    pub measure_panels: usize,
    /// Step schedule for `Δ → 0` limits.
    pub deltas: Vec<f64>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            panels: 8,
            per_panel: NODES_PER_PANEL,
            half_width: 8.0,
            domain: (-20.0, 20.0),
            domain_panels: 40,
            measure_panels: 4,
            deltas: DEFAULT_DELTAS.to_vec(),
        }
    }
}

impl KernelOptions {
    /// Rule on `center ± half_width · spread`.
    pub fn window(&self, center: f64, spread: f64) -> Result<CompositeRule> {
        self.window_with(center, spread, self.panels)
    }

    pub(crate) fn window_with(&self, center: f64, spread: f64, panels: usize) -> Result<CompositeRule> {
        if !(spread.is_finite() && spread > 0.0) {
            return Err(Error::Tensor(format!("kernel spread must be positive, got {spread}")));
        }
        let r = self.half_width * spread;
        CompositeRule::new(center - r, center + r, panels, self.per_panel)
    }

    pub fn domain_rule(&self) -> Result<CompositeRule> {
        CompositeRule::new(self.domain.0, self.domain.1, self.domain_panels, self.per_panel)
    }
}

#[derive(Clone)]
pub struct Kernel {
    name: String,
    density: Arc<DensityFn>,
    location: Arc<LocationFn>,
    scale: Arc<ScaleFn>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel").field("name", &self.name).finish_non_exhaustive()
    }
}

impl Kernel {
    pub fn new(
        name: impl Into<String>,
        density: impl Fn(f64, f64, f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        location: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        scale: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            density: Arc::new(density),
            location: Arc::new(location),
            scale: Arc::new(scale),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Unchecked evaluation; callers validate the gap first.
    #[inline]
    pub fn eval(&self, s: f64, x: f64, y: f64, z: f64, t: f64, w: f64) -> f64 {
        (self.density)(s, x, y, z, t, w)
    }

    pub fn density(&self, s: f64, x: f64, y: f64, z: f64, t: f64, w: f64) -> Result<f64> {
        self.check_gap(s, t)?;
        Ok(self.eval(s, x, y, z, t, w))
    }

    pub fn check_gap(&self, s: f64, t: f64) -> Result<()> {
        if !(s.is_finite() && t.is_finite()) || t - s < 1.0 - GAP_SLACK {
            return Err(Error::Gap(format!(
                "kernel {} needs t - s >= 1, got s = {s}, t = {t}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn location(&self, x: f64, y: f64, z: f64) -> f64 {
        (self.location)(x, y, z)
    }

    pub fn scale(&self, s: f64, t: f64) -> f64 {
        (self.scale)(s, t)
    }

    /// Quadrature rule over the offspring state for parents `(x, y, z)`.
    pub fn window(
        &self,
        s: f64,
        parents: [f64; 3],
        t: f64,
        opts: &KernelOptions,
    ) -> Result<CompositeRule> {
        self.check_gap(s, t)?;
        let [x, y, z] = parents;
        opts.window(self.location(x, y, z), self.scale(s, t))
    }

    /// `∫ f(s, x, y, z, t, w) dw` over the metadata window.
    pub fn normalization(&self, s: f64, parents: [f64; 3], t: f64, opts: &KernelOptions) -> Result<f64> {
        let [x, y, z] = parents;
        let rule = self.window(s, parents, t, opts)?;
        Ok(rule.integrate(|w| self.eval(s, x, y, z, t, w)))
    }

    /// `∫ w f(s, x, y, z, t, w) dw` over the metadata window.
    pub fn mean(&self, s: f64, parents: [f64; 3], t: f64, opts: &KernelOptions) -> Result<f64> {
        let [x, y, z] = parents;
        let rule = self.window(s, parents, t, opts)?;
        Ok(rule.integrate(|w| w * self.eval(s, x, y, z, t, w)))
    }
}

/// Normal density with variance `var` at offset `r` from its mean.
#[inline]
pub fn gaussian_pdf(r: f64, var: f64) -> f64 {
    (-r * r / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// `v(s, t) = (2^{t+1} - 2^{s+2} + 1) / 2`, the variance of the reference
/// Gaussian kernel.
pub fn example2_variance(s: f64, t: f64) -> f64 {
    ((t + 1.0).exp2() - (s + 2.0).exp2() + 1.0) / 2.0
}

/// `v(s, t) - v(s, τ) - v(τ, t) = (2^{τ+1} - 1) / 2`.
pub fn example2_variance_gap(tau: f64) -> f64 {
    ((tau + 1.0).exp2() - 1.0) / 2.0
}

/// Gaussian kernel with mean `x + y + z` and variance [`example2_variance`]:
/// `exp(-(w - x - y - z)^2 / (2v)) / sqrt(2 v π)`.
pub fn example2_kernel() -> Kernel {
    Kernel::new(
        "example2",
        |s, x, y, z, t, w| gaussian_pdf(w - x - y - z, example2_variance(s, t)),
        |x, y, z| x + y + z,
        |s, t| example2_variance(s, t).sqrt(),
    )
}

/// The same kernel with the exponent taken literally as `-(w - x - y - z)/(2v)`.
/// Not normalizable on the real line; kept to make that visible.
pub fn example2_printed_kernel() -> Kernel {
    Kernel::new(
        "example2-printed",
        |s, x, y, z, t, w| {
            let twice_v = 2.0 * example2_variance(s, t);
            (-(w - x - y - z) / twice_v).exp() / (twice_v * PI).sqrt()
        },
        |x, y, z| x + y + z,
        |s, t| example2_variance(s, t).sqrt(),
    )
}

/// Gaussian kernel with mean `x + y + z` and a variance that does not depend
/// on time.
pub fn time_constant_kernel(variance: f64) -> Kernel {
    Kernel::new(
        format!("time-constant({variance})"),
        move |_, x, y, z, _, w| gaussian_pdf(w - x - y - z, variance),
        |x, y, z| x + y + z,
        move |_, _| variance.sqrt(),
    )
}

/// Standard normal density, ignoring parents and times.
pub fn fixed_kernel() -> Kernel {
    Kernel::new("fixed", |_, _, _, _, _, w| gaussian_pdf(w, 1.0), |_, _, _| 0.0, |_, _| 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_gap_peak_value() {
        let k = example2_kernel();
        let v = k.density(0.0, 0.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        assert!((v - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!((v - 0.564_190).abs() < 1e-6);
    }

    #[test]
    fn normalization_and_mean() {
        let k = example2_kernel();
        let opts = KernelOptions::default();
        let total = k.normalization(0.0, [1.0, -1.0, 0.5], 2.0, &opts).unwrap();
        assert!((total - 1.0).abs() < 1e-8);
        let mean = k.mean(1.0, [0.3, 0.2, -1.1], 3.0, &opts).unwrap();
        assert!((mean - (0.3 + 0.2 - 1.1)).abs() < 1e-8);
    }

    #[test]
    fn gap_is_enforced() {
        let k = example2_kernel();
        assert!(matches!(k.density(0.0, 0.0, 0.0, 0.0, 0.9, 0.0), Err(Error::Gap(_))));
        assert!(k.density(0.5, 0.0, 0.0, 0.0, 1.5, 0.0).is_ok());
    }

    #[test]
    fn permutation_invariance_is_exact() {
        let k = example2_kernel();
        let a = k.eval(0.0, 0.25, 0.5, 1.0, 2.0, 0.3);
        let b = k.eval(0.0, 1.0, 0.25, 0.5, 2.0, 0.3);
        assert_eq!(a, b);
    }

    #[test]
    fn printed_form_is_not_normalizable() {
        let k = example2_printed_kernel();
        let opts = KernelOptions::default();
        let narrow = k.normalization(0.0, [0.0; 3], 1.0, &opts).unwrap();
        let wide = k
            .normalization(0.0, [0.0; 3], 1.0, &KernelOptions { half_width: 16.0, ..opts })
            .unwrap();
        assert!((narrow - 1.0).abs() > 0.1);
        assert!(wide > 10.0 * narrow);
    }

    #[test]
    fn variance_gap_arithmetic() {
        for (s, tau, t) in [(0.0, 1.0, 2.0), (0.3, 1.5, 3.0), (1.0, 2.0, 4.5)] {
            let gap = example2_variance(s, t) - example2_variance(s, tau) - example2_variance(tau, t);
            assert!((gap - example2_variance_gap(tau)).abs() < 1e-12);
        }
    }
}
