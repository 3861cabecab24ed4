//! Moment coefficients of the kernel increments and the reduced
//! differential equations built from them.

use serde::{Deserialize, Serialize};

use super::measure::{sorted_pairs, MeasureProvider};
use super::stencil::{d1, d2, partial3};
use super::{Kernel, KernelOptions};
use crate::error::{param, Error, Result};
use crate::limits::{check_deltas, extrapolate, Convergence, Extrapolated, RESIDUAL_FLOOR};

const COEFF_ABS_TOL: f64 = 1e-6;
const COEFF_REL_TOL: f64 = 1e-3;

/// An extrapolated limit. `convergent` is false when the extrapolation
/// discrepancy exceeds `1e-6 + 1e-3 |value|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub value: f64,
    pub error: f64,
    pub convergent: bool,
}

impl Coefficient {
    fn limit(deltas: &[f64], samples: &[f64]) -> Result<Self> {
        Ok(Self::from(extrapolate(deltas, samples, 1)?))
    }

    /// True when the value is indistinguishable from zero.
    pub fn vanishes(&self) -> bool {
        self.value.abs() <= self.error + 1e-12
    }
}

impl From<Extrapolated> for Coefficient {
    fn from(e: Extrapolated) -> Self {
        Self {
            value: e.value,
            error: e.error,
            convergent: e.error.is_finite() && e.error <= COEFF_ABS_TOL + COEFF_REL_TOL * e.value.abs(),
        }
    }
}

/// Limits entering the backward reduced equation at `(s, x, y, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardCoefficients {
    pub s: f64,
    pub parents: [f64; 3],
    /// `lim a(s, x, y, z, Δ) / Δ`.
    pub a: Coefficient,
    /// `lim b^2(s, x, y, z, Δ) / (2Δ)`.
    pub b2: Coefficient,
    /// `lim ∫ (ϑ - y) m_{s+1+Δ}(dϑ)`, and the same about `z`.
    pub d_y: Coefficient,
    pub d_z: Coefficient,
    /// `lim ∫ (ϑ - y)^2 m_{s+1+Δ}(dϑ) / (2Δ)`, and the same about `z`.
    pub d2_y: Coefficient,
    pub d2_z: Coefficient,
    /// `∫ (ϑ - y)^2 m_{s+1}(dϑ)` and the same about `z`.
    pub alpha2_y: f64,
    pub alpha2_z: f64,
}

/// Limits entering the forward displaced equation at `(t, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardCoefficients {
    pub t: f64,
    pub w: f64,
    pub n: Coefficient,
    pub a: Coefficient,
    pub b2: Coefficient,
    /// The same limit with weight `|u - w|^3`; the expansion assumes it
    /// vanishes.
    pub third: Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCoefficients {
    pub backward: BackwardCoefficients,
    pub forward: ForwardCoefficients,
}

pub fn backward_coefficients(
    k: &Kernel,
    measures: &impl MeasureProvider,
    s: f64,
    parents: [f64; 3],
    opts: &KernelOptions,
) -> Result<BackwardCoefficients> {
    let deltas = &opts.deltas;
    check_deltas(deltas)?;
    let [x, y, z] = parents;
    let rule = k.window(s, parents, s + 1.0 + deltas[0], opts)?;
    let mut a = Vec::new();
    let mut b2 = Vec::new();
    let mut moments = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for &d in deltas {
        let (mut first, mut second) = (0.0, 0.0);
        for (&u, &wu) in rule.nodes.iter().zip(&rule.weights) {
            let diff = k.eval(s, x, y, z, s + 1.0 + d, u) - k.eval(s + d, x, y, z, s + 1.0 + d, u);
            first += wu * diff * (u - x);
            second += wu * diff * (u - x) * (u - x);
        }
        a.push(first / d);
        b2.push(second / (2.0 * d));
        let m = measures.measure(s + 1.0 + d)?;
        moments[0].push(m.moment_about(y, 1));
        moments[1].push(m.moment_about(z, 1));
        moments[2].push(m.moment_about(y, 2) / (2.0 * d));
        moments[3].push(m.moment_about(z, 2) / (2.0 * d));
    }
    let m0 = measures.measure(s + 1.0)?;
    Ok(BackwardCoefficients {
        s,
        parents,
        a: Coefficient::limit(deltas, &a)?,
        b2: Coefficient::limit(deltas, &b2)?,
        d_y: Coefficient::limit(deltas, &moments[0])?,
        d_z: Coefficient::limit(deltas, &moments[1])?,
        d2_y: Coefficient::limit(deltas, &moments[2])?,
        d2_z: Coefficient::limit(deltas, &moments[3])?,
        alpha2_y: m0.moment_about(y, 2),
        alpha2_z: m0.moment_about(z, 2),
    })
}

/// `Ñ`, `Ã`, `B̃^2` and the third-moment limit: the limits of
/// `∫∫∫ {f(t-1, u, ϑ, q, t+Δ, w) - f(t-1, u, ϑ, q, t, w)} g(u - w) m_{t-1}(dϑ) m_{t-1}(dq) du / Δ`
/// for `g = 1, r, r^2 / 2, |r|^3`. The integral over `u` runs over the fixed domain.
pub fn forward_coefficients(
    k: &Kernel,
    measures: &impl MeasureProvider,
    t: f64,
    w: f64,
    opts: &KernelOptions,
) -> Result<ForwardCoefficients> {
    let deltas = &opts.deltas;
    check_deltas(deltas)?;
    k.check_gap(t - 1.0, t)?;
    let m = measures.measure(t - 1.0)?;
    let p = m.probabilities();
    let mut pairs = Vec::new();
    sorted_pairs(&p, |i, j, pw| {
        if pw > 0.0 {
            pairs.push((m.nodes[i], m.nodes[j], pw));
        }
    });
    let rule = opts.domain_rule()?;
    let mut sums = vec![[0.0; 4]; deltas.len()];
    for (&u, &wu) in rule.nodes.iter().zip(&rule.weights) {
        let r = u - w;
        let weights = [1.0, r, r * r / 2.0, r.abs().powi(3)];
        for &(a, b, pw) in &pairs {
            let base = k.eval(t - 1.0, u, a, b, t, w);
            for (acc, &d) in sums.iter_mut().zip(deltas) {
                let q = wu * pw * (k.eval(t - 1.0, u, a, b, t + d, w) - base) / d;
                for (slot, g) in acc.iter_mut().zip(weights) {
                    *slot += q * g;
                }
            }
        }
    }
    let column = |c: usize| -> Result<Coefficient> {
        let samples: Vec<f64> = sums.iter().map(|s| s[c]).collect();
        Coefficient::limit(deltas, &samples)
    };
    Ok(ForwardCoefficients {
        t,
        w,
        n: column(0)?,
        a: column(1)?,
        b2: column(2)?,
        third: column(3)?,
    })
}

/// Both coefficient sets for the probe `(s, x, y, z, t, w)`.
#[allow(clippy::too_many_arguments)]
pub fn moment_coefficients(
    k: &Kernel,
    measures: &impl MeasureProvider,
    s: f64,
    parents: [f64; 3],
    t: f64,
    w: f64,
    opts: &KernelOptions,
) -> Result<MomentCoefficients> {
    Ok(MomentCoefficients {
        backward: backward_coefficients(k, measures, s, parents, opts)?,
        forward: forward_coefficients(k, measures, t, w, opts)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedForm {
    /// Backward equation with the `D_2` coefficients.
    BackwardPrinted,
    /// Backward equation with `∫ (ϑ - y)^2 m_{s+1}(dϑ)` in place of `D_2`,
    /// which is what the expansion produces after division by `Δ`.
    BackwardConsistent,
    /// `∂f/∂t = Ñ f(t-1) + Ã ∂f(t-1)/∂w + B̃^2 ∂^2 f(t-1)/∂w^2`.
    ForwardDisplaced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedResidual {
    pub form: ReducedForm,
    /// `|left - right|` at the difference step and two halvings.
    pub residual: Convergence,
    /// Both sides at the finest step.
    pub left: f64,
    pub right: f64,
    pub notes: Vec<String>,
}

fn require(c: &Coefficient, name: &'static str) -> Result<f64> {
    if c.convergent {
        Ok(c.value)
    } else {
        Err(Error::NonConvergent(name))
    }
}

/// Residual of a reduced equation at the probe the coefficients were
/// computed for. All derivatives are fourth-order central differences with
/// step `fd_delta`, halved twice.
pub fn reduced_equation_residual(
    k: &Kernel,
    coeffs: &MomentCoefficients,
    form: ReducedForm,
    fd_delta: f64,
) -> Result<ReducedResidual> {
    let b = &coeffs.backward;
    let fw = &coeffs.forward;
    let (s, [x, y, z], t, w) = (b.s, b.parents, fw.t, fw.w);
    if !(fd_delta > 0.0) {
        return Err(param("fd_delta", "must be positive"));
    }
    let mut notes = Vec::new();
    let sides: Box<dyn Fn(f64) -> (f64, f64)> = match form {
        ReducedForm::BackwardPrinted | ReducedForm::BackwardConsistent => {
            if t <= s + 2.0 {
                return Err(Error::Gap(format!("backward equation needs t > s + 2, got s = {s}, t = {t}")));
            }
            if 2.0 * fd_delta > t - s - 1.0 {
                return Err(param("fd_delta", "stencil leaves the kernel domain"));
            }
            let a = require(&b.a, "A")?;
            let b2 = require(&b.b2, "B2")?;
            let dy = require(&b.d_y, "D(y)")?;
            let dz = require(&b.d_z, "D(z)")?;
            let (xy, xz) = match form {
                ReducedForm::BackwardConsistent => (b.alpha2_y, b.alpha2_z),
                _ => {
                    let mut pick = |c: &Coefficient, name: &'static str| -> Result<f64> {
                        if c.convergent {
                            Ok(c.value)
                        } else if b.a.vanishes() {
                            notes.push(format!("{name} did not converge; its terms carry the factor A = {a:e} and are dropped"));
                            Ok(0.0)
                        } else {
                            Err(Error::NonConvergent(name))
                        }
                    };
                    (pick(&b.d2_y, "D2(y)")?, pick(&b.d2_z, "D2(z)")?)
                }
            };
            let terms: [(f64, [u8; 3]); 9] = [
                (a, [1, 0, 0]),
                (b2, [2, 0, 0]),
                (0.5 * a * dy, [1, 1, 0]),
                (a * dz, [1, 0, 1]),
                (b2 * dy, [2, 1, 0]),
                (b2 * dz, [2, 0, 1]),
                (0.5 * a * xy, [1, 2, 0]),
                (0.5 * a * xz, [1, 0, 2]),
                (a * dy * dz, [1, 1, 1]),
            ];
            let k = k.clone();
            Box::new(move |h| {
                let left = -d1(|sigma| k.eval(sigma, x, y, z, t, w), s, h);
                let g = |p: [f64; 3]| k.eval(s + 1.0, p[0], p[1], p[2], t, w);
                let right = terms
                    .iter()
                    .filter(|(c, _)| *c != 0.0)
                    .map(|&(c, orders)| c * partial3(g, [x, y, z], orders, h))
                    .sum();
                (left, right)
            })
        }
        ReducedForm::ForwardDisplaced => {
            if t < s + 2.0 {
                return Err(Error::Gap(format!("forward equation needs t >= s + 2, got s = {s}, t = {t}")));
            }
            if 2.0 * fd_delta > t - s - 1.0 {
                return Err(param("fd_delta", "stencil leaves the kernel domain"));
            }
            let n = require(&fw.n, "N")?;
            let a = require(&fw.a, "A~")?;
            let b2 = require(&fw.b2, "B2~")?;
            let k = k.clone();
            Box::new(move |h| {
                let left = d1(|tau| k.eval(s, x, y, z, tau, w), t, h);
                let g = |v: f64| k.eval(s, x, y, z, t - 1.0, v);
                let right = n * g(w) + a * d1(g, w, h) + b2 * d2(g, w, h);
                (left, right)
            })
        }
    };
    let residual = Convergence::by_halving(fd_delta, RESIDUAL_FLOOR, |h| {
        let (l, r) = sides(h);
        Ok((l - r).abs())
    })?;
    let (left, right) = sides(residual.steps[2]);
    Ok(ReducedResidual {
        form,
        residual,
        left,
        right,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{example2_kernel, example2_variance, time_constant_kernel, MeasureFlow, MeasureGrid};
    use crate::limits::ConvergenceStatus;
    use std::f64::consts::LN_2;

    fn flow(k: &Kernel) -> MeasureFlow {
        MeasureFlow::new(k.clone(), MeasureGrid::point_mass(0.0, 0.0), KernelOptions::default())
    }

    #[test]
    fn time_constant_kernel_has_vanishing_coefficients() {
        let k = time_constant_kernel(0.5);
        let opts = KernelOptions::default();
        let c = moment_coefficients(&k, &flow(&k), 0.0, [0.2, -0.1, 0.3], 2.5, 0.4, &opts).unwrap();
        assert!(c.backward.a.value.abs() < 1e-10);
        assert!(c.backward.b2.value.abs() < 1e-10);
        for v in [c.forward.n, c.forward.a, c.forward.b2] {
            assert!(v.value.abs() < 1e-10);
        }
        for form in [ReducedForm::BackwardConsistent, ReducedForm::ForwardDisplaced] {
            let r = reduced_equation_residual(&k, &c, form, 0.1).unwrap();
            assert!(r.residual.finest() < 1e-6);
        }
    }

    #[test]
    fn example2_backward_coefficients() {
        let k = example2_kernel();
        let opts = KernelOptions::default();
        let f = flow(&k);
        for s in [0.0, 0.5] {
            let c = backward_coefficients(&k, &f, s, [0.0, 0.0, 0.0], &opts).unwrap();
            assert!(c.a.vanishes() && c.a.value.abs() < 1e-9, "{:?}", c.a);
            // (v(s, s+1+Δ) - 1/2) / (2Δ) → 2^s ln 2
            assert!((c.b2.value - s.exp2() * LN_2).abs() < 1e-6, "{:?}", c.b2);
            assert!(c.b2.convergent);
            // m_{s+1} is centred at zero
            assert!(c.d_y.value.abs() < 1e-10 && c.d_y.convergent);
            assert!(!c.d2_y.convergent, "{:?}", c.d2_y);
            assert!((c.alpha2_y - example2_variance(0.0, s + 1.0)).abs() < 1e-8);
        }
        let off = backward_coefficients(&k, &f, 0.0, [0.3, -0.4, 0.5], &opts).unwrap();
        assert!(off.a.value.abs() < 1e-9);
        assert!((off.d_y.value - 0.4).abs() < 1e-9);
        assert!((off.d_z.value + 0.5).abs() < 1e-9);
    }

    #[test]
    fn example2_forward_coefficients() {
        let k = example2_kernel();
        let opts = KernelOptions::default();
        let c = forward_coefficients(&k, &flow(&k), 2.5, 0.0, &opts).unwrap();
        // the w-derivative of the unit-gap variance is ln 2 · 2^t; half of it
        // lands on the second moment
        assert!(c.n.value.abs() < 1e-8, "{:?}", c.n);
        assert!(c.a.value.abs() < 1e-8, "{:?}", c.a);
        assert!((c.b2.value - LN_2 * 1.5f64.exp2()).abs() < 1e-6, "{:?}", c.b2);
        assert!(c.third.value > 0.1);
    }

    #[test]
    fn example2_reduced_residuals_converge_and_are_stable() {
        let k = example2_kernel();
        let opts = KernelOptions::default();
        let c = moment_coefficients(&k, &flow(&k), 0.0, [0.0; 3], 2.5, 0.0, &opts).unwrap();
        let fine = KernelOptions {
            panels: 16,
            domain_panels: 80,
            ..KernelOptions::default()
        };
        let kf = example2_kernel();
        let cf = moment_coefficients(&kf, &flow(&kf), 0.0, [0.0; 3], 2.5, 0.0, &fine).unwrap();
        for form in [ReducedForm::BackwardPrinted, ReducedForm::BackwardConsistent, ReducedForm::ForwardDisplaced] {
            let r = reduced_equation_residual(&k, &c, form, 0.1).unwrap();
            assert_eq!(r.residual.status, ConvergenceStatus::Converging, "{form:?}: {r:?}");
            assert!(r.residual.finest() > 1e-3);
            let rf = reduced_equation_residual(&kf, &cf, form, 0.1).unwrap();
            let change = (rf.residual.finest() - r.residual.finest()).abs() / r.residual.finest();
            assert!(change < 0.1, "{form:?}: {change}");
        }
        let printed = reduced_equation_residual(&k, &c, ReducedForm::BackwardPrinted, 0.1).unwrap();
        assert_eq!(printed.notes.len(), 2);
    }

    #[test]
    fn nonconvergent_coefficients_are_refused_when_they_matter() {
        let k = example2_kernel();
        let opts = KernelOptions::default();
        let mut c = moment_coefficients(&k, &flow(&k), 0.0, [0.0; 3], 2.5, 0.0, &opts).unwrap();
        c.backward.a = Coefficient {
            value: 0.3,
            error: 0.0,
            convergent: true,
        };
        assert!(matches!(
            reduced_equation_residual(&k, &c, ReducedForm::BackwardPrinted, 0.1),
            Err(Error::NonConvergent(_))
        ));
        assert!(reduced_equation_residual(&k, &c, ReducedForm::BackwardConsistent, 0.1).is_ok());
    }
}
