//! Two-parameter transition systems `p^{[s,t]}`.
//!
//! A [`TransitionFamily`] is generated from a unit-step tensor by the
//! recursion `p^{[s,t]} = p^{[s,t-1]} * Q(x^{(t-1)})`, where
//! `Q(y)[m][l] = sum_{g,d} p[m][g][d][l] y_g y_d`. A [`ClosedFormFamily`] is
//! an arbitrary evaluator, typically a formula that claims to satisfy the
//! consistency conditions; [`verify_conditions`] measures whether it does.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::simplex::SimplexVector;
use crate::tensor::{contract, evolve, validate_tensor, CubicTensor};

/// Default bound on `t - s` for cached constructions.
pub const DEFAULT_HORIZON_CAP: i64 = 16;

/// Anything that can produce multi-step transition tensors and the
/// distribution trajectory that closes the fundamental equation.
pub trait TransitionLaw {
    fn n(&self) -> usize;

    /// `p^{[s,t]}` for integer times with `t >= s + 1`.
    fn transition(&self, s: i64, t: i64) -> Result<CubicTensor>;

    /// The distribution `x^{(tau)}`.
    fn state(&self, tau: i64) -> Result<Vec<f64>>;
}

fn check_gap(s: i64, t: i64) -> Result<()> {
    if t < s + 1 {
        return Err(Error::Gap(format!("need t >= s + 1, got s = {s}, t = {t}")));
    }
    Ok(())
}

/// The family generated by a base tensor and an initial distribution at
/// time 0. Transitions and trajectory points are computed on demand and
/// cached.
#[derive(Debug)]
pub struct TransitionFamily {
    base: CubicTensor,
    x0: SimplexVector,
    horizon_cap: i64,
    trajectory: RefCell<Vec<SimplexVector>>,
    transitions: RefCell<HashMap<(i64, i64), CubicTensor>>,
}

impl TransitionFamily {
    pub fn new(base: CubicTensor, x0: SimplexVector) -> Result<Self> {
        if base.n() != x0.n() {
            return Err(Error::Dimension {
                left: base.n(),
                right: x0.n(),
            });
        }
        Ok(Self {
            base,
            trajectory: RefCell::new(vec![x0.clone()]),
            x0,
            horizon_cap: DEFAULT_HORIZON_CAP,
            transitions: RefCell::new(HashMap::new()),
        })
    }

    pub fn with_horizon_cap(mut self, cap: i64) -> Self {
        self.horizon_cap = cap;
        self
    }

    pub fn base(&self) -> &CubicTensor {
        &self.base
    }

    pub fn x0(&self) -> &SimplexVector {
        &self.x0
    }

    /// `x^{(tau)}` by repeated [`evolve`] from time 0.
    pub fn distribution(&self, tau: i64) -> Result<SimplexVector> {
        let idx = usize::try_from(tau)
            .map_err(|_| Error::Gap(format!("trajectory starts at 0, asked for {tau}")))?;
        let mut traj = self.trajectory.borrow_mut();
        while traj.len() <= idx {
            let next = evolve(&self.base, traj.last().unwrap())?;
            traj.push(next);
        }
        Ok(traj[idx].clone())
    }

    /// `p^{[s,t]}` via the recursion split at `tau = t - 1`.
    pub fn compose_step(&self, s: i64, t: i64) -> Result<CubicTensor> {
        check_gap(s, t)?;
        if s < 0 {
            return Err(Error::Gap(format!("start time {s} precedes x0")));
        }
        if t - s > self.horizon_cap {
            return Err(param(
                "t - s",
                format!("{} exceeds horizon cap {}", t - s, self.horizon_cap),
            ));
        }
        if t == s + 1 {
            return Ok(self.base.clone());
        }
        if let Some(p) = self.transitions.borrow().get(&(s, t)) {
            return Ok(p.clone());
        }
        // walk forward from the longest cached prefix
        let mut u = t - 1;
        let mut acc = loop {
            if u == s + 1 {
                break self.base.clone();
            }
            if let Some(p) = self.transitions.borrow().get(&(s, u)) {
                break p.clone();
            }
            u -= 1;
        };
        while u < t {
            let x = self.distribution(u)?;
            acc = acc.right_multiply(&self.base.mixing_matrix(x.probs())?)?;
            u += 1;
            self.transitions.borrow_mut().insert((s, u), acc.clone());
        }
        Ok(acc)
    }
}

impl TransitionLaw for TransitionFamily {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn transition(&self, s: i64, t: i64) -> Result<CubicTensor> {
        self.compose_step(s, t)
    }

    fn state(&self, tau: i64) -> Result<Vec<f64>> {
        Ok(self.distribution(tau)?.into_inner())
    }
}

type EvalFn = dyn Fn(f64, f64, [usize; 4], &[f64]) -> f64 + Send + Sync;

/// A transition system given by a formula `eval(s, t, [i, j, k, l], x0)`,
/// defined for real `s`, `t` with `t - s >= 1`. No invariants are assumed.
#[derive(Clone)]
pub struct ClosedFormFamily {
    name: String,
    n: usize,
    epsilon: Option<f64>,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for ClosedFormFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedFormFamily")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

const GAP_SLACK: f64 = 1e-12;

impl ClosedFormFamily {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        eval: impl Fn(f64, f64, [usize; 4], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            epsilon: None,
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn eval(&self, s: f64, t: f64, idx: [usize; 4], x0: &[f64]) -> f64 {
        (self.eval)(s, t, idx, x0)
    }

    /// The tensor `p^{[s,t]}`, unvalidated.
    pub fn tensor(&self, s: f64, t: f64, x0: &SimplexVector) -> Result<CubicTensor> {
        if x0.n() != self.n {
            return Err(Error::Dimension {
                left: self.n,
                right: x0.n(),
            });
        }
        if t - s < 1.0 - GAP_SLACK {
            return Err(Error::Gap(format!("need t - s >= 1, got s = {s}, t = {t}")));
        }
        let x = x0.probs();
        CubicTensor::from_fn(self.n, |i, j, k, l| (self.eval)(s, t, [i, j, k, l], x))
    }

    /// `x^{(tau)} = contract(p^{[0,tau]}, x0)`, the family's own smooth
    /// interpolation of the trajectory. Defined for `tau = 0` and `tau >= 1`.
    pub fn state(&self, tau: f64, x0: &SimplexVector) -> Result<Vec<f64>> {
        if tau == 0.0 {
            return Ok(x0.probs().to_vec());
        }
        let p = self.tensor(0.0, tau, x0)?;
        contract(&p, x0.probs())
    }

    pub fn bind(&self, x0: SimplexVector) -> Result<BoundFamily> {
        if x0.n() != self.n {
            return Err(Error::Dimension {
                left: self.n,
                right: x0.n(),
            });
        }
        Ok(BoundFamily {
            family: self.clone(),
            x0,
        })
    }
}

/// A closed-form family together with its initial distribution.
#[derive(Debug, Clone)]
pub struct BoundFamily {
    pub family: ClosedFormFamily,
    pub x0: SimplexVector,
}

impl TransitionLaw for BoundFamily {
    fn n(&self) -> usize {
        self.family.n
    }

    fn transition(&self, s: i64, t: i64) -> Result<CubicTensor> {
        check_gap(s, t)?;
        self.family.tensor(s as f64, t as f64, &self.x0)
    }

    fn state(&self, tau: i64) -> Result<Vec<f64>> {
        self.family.state(tau as f64, &self.x0)
    }
}

/// The three-state example family with parameter `0 <= epsilon <= 1/2`.
///
/// With `g = t - s` and `h = 2^(g-1)`:
/// * `p[i][i][i][i] = (1-2e)^g / h * ((h-1) (1-2e)^s x0_i + 1)`
/// * `p[i][i][i][l] = (h-1) / h * x0_l` for `l != i`
/// * otherwise `p[i][j][k][l] = ((h-1) (1-2e)^s x0_l + 1/3) / h`
pub fn example1_family(epsilon: f64) -> Result<ClosedFormFamily> {
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(param("epsilon", format!("{epsilon} not in [0, 1/2]")));
    }
    let damp = 1.0 - 2.0 * epsilon;
    let mut family = ClosedFormFamily::new("example1", 3, move |s, t, [i, j, k, l], x0| {
        let g = t - s;
        let h = 2f64.powf(g - 1.0);
        if i == j && j == k {
            if l == i {
                damp.powf(g) / h * ((h - 1.0) * damp.powf(s) * x0[i] + 1.0)
            } else {
                (h - 1.0) / h * x0[l]
            }
        } else {
            ((h - 1.0) * damp.powf(s) * x0[l] + 1.0 / 3.0) / h
        }
    });
    family.epsilon = Some(epsilon);
    Ok(family)
}

/// `p^{[s,t]} = 1/n` for every index.
pub fn uniform_family(n: usize) -> ClosedFormFamily {
    ClosedFormFamily::new("uniform", n, move |_, _, _, _| 1.0 / n as f64)
}

/// Random-parent inheritance relaxing towards `x0`:
/// `p^{[s,t]} = 3^(1-g) P + (1 - 3^(1-g)) x0` with `g = t - s` and
/// `P[i][j][k][l] = (d_il + d_jl + d_kl) / 3`.
///
/// Every distribution is stationary under `P`, and the family satisfies the
/// fundamental equation exactly for all real gaps, which makes it a
/// reference solution for the delay equations.
pub fn neutral_inheritance_family(n: usize) -> ClosedFormFamily {
    ClosedFormFamily::new("neutral", n, |s, t, [i, j, k, l], x0| {
        let c = 3f64.powf(1.0 - (t - s));
        let p = ((i == l) as u8 + (j == l) as u8 + (k == l) as u8) as f64 / 3.0;
        c * p + (1.0 - c) * x0[l]
    })
}

/// `max | p^{[s,t]} - sum_{m,g,d} p^{[s,tau]}_{ijk,m} p^{[tau,t]}_{mgd,l} x^{(tau)}_g x^{(tau)}_d |`.
pub fn fundamental_residual(law: &impl TransitionLaw, s: i64, tau: i64, t: i64) -> Result<f64> {
    if tau < s + 1 || t < tau + 1 {
        return Err(Error::Gap(format!(
            "need tau - s >= 1 and t - tau >= 1, got ({s}, {tau}, {t})"
        )));
    }
    let whole = law.transition(s, t)?;
    let left = law.transition(s, tau)?;
    let right = law.transition(tau, t)?;
    let x = law.state(tau)?;
    let split = left.right_multiply(&right.mixing_matrix(&x)?)?;
    whole.max_abs_diff(&split)
}

/// `max_l | x^{(t)}_l - sum_{ijk} p^{[s,t]}_{ijk,l} x^{(s)}_i x^{(s)}_j x^{(s)}_k |`.
pub fn contraction_identity_residual(law: &impl TransitionLaw, s: i64, t: i64) -> Result<f64> {
    check_gap(s, t)?;
    let p = law.transition(s, t)?;
    let xs = law.state(s)?;
    let xt = law.state(t)?;
    let y = contract(&p, &xs)?;
    Ok(y.iter()
        .zip(&xt)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// Unit-step homogeneity.
    I,
    /// Parent symmetry.
    II,
    /// Each row is a probability measure.
    III,
    /// Measurability.
    IV,
    /// Fundamental equation.
    V,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    /// `None` for a condition with no finite-state content.
    pub statistic: Option<f64>,
    pub passed: bool,
    pub note: String,
}

/// A row whose sum differs from one by more than the report tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDefect {
    pub s: i64,
    pub t: i64,
    pub triple: [usize; 3],
    pub sum: f64,
}

impl RowDefect {
    pub fn defect(&self) -> f64 {
        (self.sum - 1.0).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub family: String,
    pub tol: f64,
    pub checks: Vec<ConditionCheck>,
    pub row_defects: Vec<RowDefect>,
    /// `(s, tau, t)` attaining the largest fundamental residual.
    pub worst_split: Option<[i64; 3]>,
}

impl ConditionReport {
    pub fn check(&self, c: Condition) -> &ConditionCheck {
        self.checks
            .iter()
            .find(|k| k.condition == c)
            .expect("every condition is reported")
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Measures conditions (I)-(V) for a closed-form family on the integer grid
/// `0 <= s <= s_max`, `s < t <= t_max`.
pub fn verify_conditions(
    family: &ClosedFormFamily,
    x0: &SimplexVector,
    s_max: i64,
    t_max: i64,
    tol: f64,
) -> Result<ConditionReport> {
    if t_max < s_max + 2 || s_max < 0 {
        return Err(param("t_max", format!("need t_max >= s_max + 2, got {s_max}, {t_max}")));
    }
    let law = family.bind(x0.clone())?;

    let unit = law.transition(0, 1)?;
    let mut homogeneity: f64 = 0.0;
    for t in 1..t_max {
        homogeneity = homogeneity.max(law.transition(t, t + 1)?.max_abs_diff(&unit)?);
    }

    let mut symmetry: f64 = 0.0;
    let mut normalization: f64 = 0.0;
    let mut min_entry: f64 = 0.0;
    let mut row_defects = Vec::new();
    for s in 0..=s_max {
        for t in s + 1..=t_max {
            let p = law.transition(s, t)?;
            let report = validate_tensor(&p, tol);
            symmetry = symmetry.max(report.max_symmetry_defect);
            normalization = normalization.max(report.max_normalization_defect);
            min_entry = min_entry.min(report.min_entry);
            for ((i, j, k), row) in p.rows() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > tol {
                    row_defects.push(RowDefect {
                        s,
                        t,
                        triple: [i, j, k],
                        sum,
                    });
                }
            }
        }
    }

    let mut fundamental: f64 = 0.0;
    let mut worst_split = None;
    for s in 0..=s_max {
        for t in s + 2..=t_max {
            for tau in s + 1..t {
                let r = fundamental_residual(&law, s, tau, t)?;
                if worst_split.is_none() || r > fundamental {
                    fundamental = r;
                    worst_split = Some([s, tau, t]);
                }
            }
        }
    }

    let measure = normalization.max(-min_entry);
    let checks = vec![
        ConditionCheck {
            condition: Condition::I,
            statistic: Some(homogeneity),
            passed: homogeneity <= tol,
            note: "max |p^[t,t+1] - p^[0,1]|".into(),
        },
        ConditionCheck {
            condition: Condition::II,
            statistic: Some(symmetry),
            passed: symmetry <= tol,
            note: "max defect over parent permutations".into(),
        },
        ConditionCheck {
            condition: Condition::III,
            statistic: Some(measure),
            passed: measure <= tol,
            note: format!(
                "max |row sum - 1| = {normalization:e}, most negative entry = {min_entry:e}"
            ),
        },
        ConditionCheck {
            condition: Condition::IV,
            statistic: None,
            passed: true,
            note: "vacuous (finite E)".into(),
        },
        ConditionCheck {
            condition: Condition::V,
            statistic: Some(fundamental),
            passed: fundamental <= tol,
            note: format!("max fundamental residual, worst split {worst_split:?}"),
        },
    ];
    Ok(ConditionReport {
        family: family.name().to_string(),
        tol,
        checks,
        row_defects,
        worst_split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1_unit() -> CubicTensor {
        CubicTensor::from_fn(3, |i, j, k, l| {
            if i == j && j == k {
                (l == i) as u8 as f64
            } else {
                1.0 / 3.0
            }
        })
        .unwrap()
    }

    /// Both sides of the fundamental equation by explicit summation.
    fn brute_split(left: &CubicTensor, right: &CubicTensor, x: &[f64]) -> CubicTensor {
        let n = left.n();
        CubicTensor::from_fn(n, |i, j, k, l| {
            let mut acc = 0.0;
            for m in 0..n {
                for g in 0..n {
                    for d in 0..n {
                        acc += left.get(i, j, k, m) * right.get(m, g, d, l) * x[g] * x[d];
                    }
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn unit_gap_is_base() {
        let base = example1_unit();
        let f = TransitionFamily::new(base.clone(), SimplexVector::uniform(3).unwrap()).unwrap();
        for s in 0..4 {
            assert_eq!(f.compose_step(s, s + 1).unwrap(), base);
        }
        assert!(matches!(f.compose_step(2, 2), Err(Error::Gap(_))));
    }

    #[test]
    fn uniform_base_stays_uniform() {
        let u = CubicTensor::uniform(3).unwrap();
        let f = TransitionFamily::new(u.clone(), SimplexVector::new(vec![0.1, 0.2, 0.7]).unwrap())
            .unwrap();
        assert!(f.compose_step(1, 5).unwrap().max_abs_diff(&u).unwrap() < 1e-15);
        assert!(contraction_identity_residual(&f, 0, 3).unwrap() < 1e-15);
    }

    #[test]
    fn two_step_example1_matches_direct_summation() {
        let base = example1_unit();
        let x0 = SimplexVector::uniform(3).unwrap();
        let f = TransitionFamily::new(base.clone(), x0.clone()).unwrap();
        let p02 = f.compose_step(0, 2).unwrap();
        let x1 = evolve(&base, &x0).unwrap();
        let oracle = brute_split(&base, &base, x1.probs());
        assert!(p02.max_abs_diff(&oracle).unwrap() < 1e-15);
        // x1 stays uniform, so p02[iii][i] = 1/9 + 8/27 and p02[iii][l] = 8/27
        for i in 0..3 {
            for l in 0..3 {
                let want = if l == i { 11.0 / 27.0 } else { 8.0 / 27.0 };
                assert!((p02.get(i, i, i, l) - want).abs() < 1e-15);
            }
        }
        // the closed form at (0, 2) disagrees: 2/3 on the diagonal
        let closed = example1_family(0.0).unwrap().tensor(0.0, 2.0, &x0).unwrap();
        assert!((closed.get(0, 0, 0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((closed.get(0, 0, 0, 0) - p02.get(0, 0, 0, 0)).abs() > 0.25);
    }

    #[test]
    fn canonical_split_has_zero_residual() {
        let base = example1_unit();
        let f = TransitionFamily::new(base, SimplexVector::new(vec![0.2, 0.3, 0.5]).unwrap())
            .unwrap();
        for t in 2..6 {
            assert!(fundamental_residual(&f, 0, t - 1, t).unwrap() <= 1e-14);
        }
        assert!(fundamental_residual(&f, 0, 0, 2).is_err());
    }

    #[test]
    fn horizon_cap_is_enforced() {
        let f = TransitionFamily::new(example1_unit(), SimplexVector::uniform(3).unwrap())
            .unwrap()
            .with_horizon_cap(3);
        assert!(f.compose_step(0, 3).is_ok());
        assert!(f.compose_step(0, 4).is_err());
    }

    #[test]
    fn example1_closed_form_values() {
        let fam = example1_family(0.0).unwrap();
        let x0 = SimplexVector::uniform(3).unwrap();
        let p = fam.tensor(2.0, 3.0, &x0).unwrap();
        assert_eq!(p.get(1, 1, 1, 1), 1.0);
        assert_eq!(p.get(1, 1, 1, 0), 0.0);
        assert!((p.get(0, 1, 2, 2) - 1.0 / 3.0).abs() < 1e-16);

        let half = example1_family(0.5).unwrap();
        assert_eq!(half.tensor(0.0, 1.0, &x0).unwrap().get(2, 2, 2, 2), 0.0);

        assert!(example1_family(0.6).is_err());
        assert!(example1_family(-0.1).is_err());
        assert!(fam.tensor(0.0, 0.5, &x0).is_err());
    }

    #[test]
    fn uniform_family_passes_everything() {
        let r = verify_conditions(&uniform_family(3), &SimplexVector::uniform(3).unwrap(), 2, 5, 1e-9)
            .unwrap();
        assert!(r.all_passed());
        assert_eq!(r.check(Condition::IV).note, "vacuous (finite E)");
    }

    #[test]
    fn example1_epsilon_breaks_normalization_on_diagonal_unit_rows() {
        let x0 = SimplexVector::uniform(3).unwrap();
        let r = verify_conditions(&example1_family(0.1).unwrap(), &x0, 1, 3, 1e-9).unwrap();
        assert!(!r.check(Condition::III).passed);
        let unit: Vec<_> = r.row_defects.iter().filter(|d| d.t - d.s == 1).collect();
        assert!(!unit.is_empty());
        for d in &unit {
            let [i, j, k] = d.triple;
            assert!(i == j && j == k);
            assert!((d.defect() - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn neutral_family_satisfies_every_condition() {
        let x0 = SimplexVector::new(vec![0.15, 0.35, 0.5]).unwrap();
        let fam = neutral_inheritance_family(3);
        let r = verify_conditions(&fam, &x0, 3, 6, 1e-12).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }
}
