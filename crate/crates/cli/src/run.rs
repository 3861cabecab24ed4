//! Mode dispatch. Every mode writes its data files and a `report.json` into
//! the output directory.

use std::path::{Path, PathBuf};

use cubic_core::dde::{
    backward_residual, distribution_dde_residual, integrate_distribution_dde,
    integrate_forward_transition_dde,
};
use cubic_core::family::DEFAULT_HORIZON_CAP;
use cubic_core::kernel::{
    ck_residual_density, ck_variance_gap, example2_kernel, example2_printed_kernel,
    example2_variance_gap, fixed_kernel, integro_residual, moment_coefficients,
    reduced_equation_residual, time_constant_kernel, Coefficient, Direction, Kernel,
    KernelOptions, MeasureFlow, MeasureGrid, MeasureProvider, ReducedForm,
};
use cubic_core::{
    contraction_identity_residual, estimate_generator, example1_family, fundamental_residual,
    iterate, monte_carlo_trajectory, neutral_inheritance_family, uniform_family,
    validate_tensor, verify_conditions, ClosedFormFamily, Condition, Convergence,
    ConvergenceStatus, CubicTensor, GeneratorTensor, SimplexVector, TransitionFamily,
};
use thiserror::Error;

use crate::config::{FamilySpec, KernelSpec, MeasureSpec, Mode, RunConfig};
use crate::io::{self, IoError, TensorFile};
use crate::report::Report;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] cubic_core::Error),
    #[error("cannot create output directory {path}: {source}")]
    OutDir {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Binomial z-score bound for the sampled trajectory.
const SAMPLE_Z: f64 = 3.0;
/// Row sums and symmetry of an estimated generator.
const GENERATOR_TOL: f64 = 1e-8;
const MASS_DRIFT_TOL: f64 = 1e-10;
/// Agreement between the step `h` and `h / 4` solutions.
const SELF_CONVERGENCE_TOL: f64 = 1e-8;
const CLOSED_FORM_TOL: f64 = 1e-6;
const MIN_RATIO: f64 = cubic_core::limits::MIN_CONVERGENCE_RATIO;
/// Quadrature truncation bound on the intermediate kernel integral.
const TRUNCATION_TOL: f64 = 1e-6;

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

struct Sink<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Sink<'_> {
    fn text(&mut self, name: &str, text: &str) -> Result<(), IoError> {
        let path = self.dir.join(name);
        io::write_text(&path, text)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), IoError> {
        let path = self.dir.join(name);
        io::write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }
}

pub fn run(config: &RunConfig, out: &Path) -> Result<Outcome, RunError> {
    std::fs::create_dir_all(out).map_err(|source| RunError::OutDir {
        path: out.to_path_buf(),
        source,
    })?;
    let mut sink = Sink {
        dir: out,
        files: Vec::new(),
    };
    let mut report = Report::new(config.mode, config.seed);
    match config.mode {
        Mode::Evolve => evolve(config, &mut report, &mut sink)?,
        Mode::Sample => sample(config, &mut report, &mut sink)?,
        Mode::Compose => compose(config, &mut report, &mut sink)?,
        Mode::Verify => verify(config, &mut report, &mut sink)?,
        Mode::Generator => generator(config, &mut report, &mut sink)?,
        Mode::Dde => dde(config, &mut report, &mut sink)?,
        Mode::KernelCk => kernel_ck(config, &mut report, &mut sink)?,
        Mode::KernelCoeffs => kernel_coeffs(config, &mut report, &mut sink)?,
        Mode::KernelResidual => kernel_residual(config, &mut report, &mut sink)?,
    }
    sink.json("report.json", &report)?;
    Ok(Outcome {
        report,
        files: sink.files,
    })
}

// Fields below are guaranteed by `RunConfig::validate` for the mode at hand.

fn tensor(c: &RunConfig) -> Result<CubicTensor, RunError> {
    Ok(io::read_tensor(c.tensor.as_deref().expect("validated"))?)
}

fn x0(c: &RunConfig) -> Result<SimplexVector, RunError> {
    Ok(SimplexVector::with_tol(c.x0.clone().expect("validated"), c.tol)?)
}

fn family(c: &RunConfig) -> Result<ClosedFormFamily, RunError> {
    Ok(match c.family.as_ref().expect("validated") {
        FamilySpec::Example1 { epsilon } => example1_family(*epsilon)?,
        FamilySpec::Uniform { n } => uniform_family(*n),
        FamilySpec::Neutral { n } => neutral_inheritance_family(*n),
    })
}

fn kernel(c: &RunConfig) -> Kernel {
    match c.kernel.as_ref().expect("validated") {
        KernelSpec::Example2 => example2_kernel(),
        KernelSpec::Example2Printed => example2_printed_kernel(),
        KernelSpec::TimeConstant { variance } => time_constant_kernel(*variance),
        KernelSpec::Fixed => fixed_kernel(),
    }
}

fn kernel_options(c: &RunConfig) -> KernelOptions {
    KernelOptions {
        per_panel: c.nodes_per_panel,
        domain: (c.grid[0], c.grid[1]),
        deltas: c.deltas.clone(),
        ..KernelOptions::default()
    }
}

fn flow(c: &RunConfig, k: &Kernel, opts: &KernelOptions) -> Result<MeasureFlow, RunError> {
    let base = match c.m0 {
        MeasureSpec::Point { at } => MeasureGrid::point_mass(at, c.m0_time),
        MeasureSpec::Gaussian { mean, variance } => {
            MeasureGrid::gaussian(mean, variance, c.m0_time, opts)?
        }
    };
    Ok(MeasureFlow::new(k.clone(), base, opts.clone()))
}

fn tensor_checks(report: &mut Report, prefix: &str, t: &CubicTensor, tol: f64) {
    let v = validate_tensor(t, tol);
    report
        .at_most(format!("{prefix}.normalization"), v.max_normalization_defect, tol)
        .meta("violations", v.violations.len());
    report.at_most(format!("{prefix}.symmetry"), v.max_symmetry_defect, tol);
    report.at_most(format!("{prefix}.negativity"), (-v.min_entry).max(0.0), tol);
}

fn trajectory_checks(report: &mut Report, states: &[SimplexVector], tol: f64) {
    let mass = states
        .iter()
        .map(|x| (x.mass() - 1.0).abs())
        .fold(0.0, f64::max);
    let negativity = states
        .iter()
        .flat_map(|x| x.probs().iter())
        .map(|&v| (-v).max(0.0))
        .fold(0.0, f64::max);
    report.at_most("trajectory.mass", mass, tol);
    report.at_most("trajectory.negativity", negativity, tol);
}

fn evolve(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let t = tensor(c)?;
    let x0 = x0(c)?;
    tensor_checks(report, "tensor", &t, c.tol);
    let traj = iterate(&t, &x0, c.horizon.expect("validated") as usize)?;
    trajectory_checks(report, &traj.states, c.tol);
    sink.text("trajectory.csv", &io::trajectory_csv(traj.start_time, &traj.states))?;
    Ok(())
}

fn sample(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let t = tensor(c)?;
    let x0 = x0(c)?;
    let horizon = c.horizon.expect("validated") as usize;
    let population = c.population.expect("validated") as usize;
    let exact = iterate(&t, &x0, horizon)?;
    let sampled = monte_carlo_trajectory(&t, &x0, horizon, population, c.seed)?;

    let mut worst = 0.0f64;
    let mut at = [0usize; 2];
    for (g, (mc, det)) in sampled.iter().zip(&exact.states).enumerate() {
        for (l, (&f, &p)) in mc.probs().iter().zip(det.probs()).enumerate() {
            let sigma = (p * (1.0 - p) / population as f64).sqrt();
            let z = if sigma > 0.0 {
                (f - p).abs() / sigma
            } else if f == p {
                0.0
            } else {
                f64::INFINITY
            };
            if z > worst {
                worst = z;
                at = [g, l];
            }
        }
    }
    report
        .at_most("sample.max_binomial_z", worst, SAMPLE_Z)
        .meta("generation", at[0])
        .meta("component", at[1])
        .meta("population", population);
    sink.text("sample.csv", &io::trajectory_csv(0, &sampled))?;
    sink.text("trajectory.csv", &io::trajectory_csv(0, &exact.states))?;
    Ok(())
}

fn compose(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let base = tensor(c)?;
    let x0 = x0(c)?;
    let (s, t) = (c.s.expect("validated") as i64, c.t.expect("validated") as i64);
    let fam = TransitionFamily::new(base, x0)?.with_horizon_cap((t - s).max(DEFAULT_HORIZON_CAP));
    let p = fam.compose_step(s, t)?;
    tensor_checks(report, "composed", &p, c.tol);

    let mut fundamental = 0.0f64;
    for tau in s + 1..t {
        fundamental = fundamental.max(fundamental_residual(&fam, s, tau, t)?);
    }
    report
        .at_most("composed.fundamental", fundamental, c.tol)
        .meta("splits", (t - s - 1).max(0));
    report.at_most("composed.contraction", contraction_identity_residual(&fam, s, t)?, c.tol);

    let mut file = TensorFile::cubic(&p);
    file.span = Some([s as f64, t as f64]);
    sink.json("composed.json", &file)?;
    Ok(())
}

fn verify(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let fam = family(c)?;
    let x0 = x0(c)?;
    let t_max = c.t_max.expect("validated");
    let s_max = c.s_max.unwrap_or(t_max - 2);
    let r = verify_conditions(&fam, &x0, s_max, t_max, c.tol)?;
    for (cond, key) in [
        (Condition::I, "condition.I"),
        (Condition::II, "condition.II"),
        (Condition::III, "condition.III"),
        (Condition::IV, "condition.IV"),
        (Condition::V, "condition.V"),
    ] {
        let k = r.check(cond);
        match k.statistic {
            Some(stat) => {
                let check = report.at_most(key, stat, c.tol);
                check.meta("note", &k.note);
                match cond {
                    Condition::III => {
                        let unit = r
                            .row_defects
                            .iter()
                            .filter(|d| d.t - d.s == 1 && d.triple[0] == d.triple[1] && d.triple[1] == d.triple[2])
                            .map(|d| d.defect())
                            .fold(0.0, f64::max);
                        check
                            .meta("unit_gap_diagonal_defect", unit)
                            .meta("defective_rows", r.row_defects.len());
                    }
                    Condition::V => {
                        check.meta("worst_split", r.worst_split);
                    }
                    _ => {}
                }
            }
            None => {
                report.at_most(key, 0.0, c.tol).meta("note", &k.note);
            }
        }
    }
    sink.json("conditions.json", &r)?;
    Ok(())
}

fn generator(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let fam = family(c)?;
    let x0 = x0(c)?;
    let g = estimate_generator(&fam, c.t.expect("validated"), &x0, &c.deltas)?;
    report
        .at_most("generator.row_sum", g.row_sum_defect(), GENERATOR_TOL)
        .meta("extrapolation_error", g.max_error());
    report.at_most("generator.symmetry", g.symmetry_defect(), GENERATOR_TOL);
    sink.json("generator.json", &TensorFile::generator(&g))?;
    Ok(())
}

fn convergence_check(report: &mut Report, name: &str, conv: &Convergence) {
    // a residual at the noise floor counts as converged with unbounded ratio
    let stat = match conv.status {
        ConvergenceStatus::NoiseFloor => f64::MAX,
        _ => conv.ratio.unwrap_or(0.0),
    };
    report
        .at_least(format!("{name}.ratio"), stat, MIN_RATIO)
        .meta("status", conv.status)
        .meta("steps", &conv.steps)
        .meta("values", &conv.values)
        .meta("finest", conv.finest());
}

fn failed_check(report: &mut Report, name: &str, err: &cubic_core::Error) {
    report
        .at_least(format!("{name}.ratio"), f64::NAN, MIN_RATIO)
        .meta("error", err.to_string());
}

fn dde(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let fam = family(c)?;
    let x0 = x0(c)?;
    let t_end = c.t_end.expect("validated");
    let s = c.s.unwrap_or(0.0) as i64;
    let deltas = c.deltas.clone();
    let gen = {
        let (fam, x0) = (fam.clone(), x0.clone());
        move |t: f64| -> cubic_core::Result<GeneratorTensor> {
            estimate_generator(&fam, t, &x0, &deltas)
        }
    };
    let state = |u: f64| fam.state(u, &x0);

    // the family's trajectory is defined from time 1 on, so the history
    // segment is [1, 2]
    let t0 = 2.0;
    let solve = |h: f64| integrate_distribution_dde(&gen, state, t0, t_end, h);
    let coarse = solve(c.h)?;
    let fine = solve(c.h / 4.0)?;
    let mut gap = 0.0f64;
    let mut closed = 0.0f64;
    for (t, v) in coarse.times.iter().zip(&coarse.values) {
        let w = fine.at(*t).expect("fine grid contains coarse nodes");
        let exact = fam.state(*t, &x0)?;
        for k in 0..v.len() {
            gap = gap.max((v[k] - w[k]).abs());
            closed = closed.max((v[k] - exact[k]).abs());
        }
    }
    report
        .at_most("distribution.mass_drift", coarse.mass_drift(), MASS_DRIFT_TOL)
        .meta("t_start", t0)
        .meta("t_end", t_end);
    report
        .at_most("distribution.self_convergence", gap, SELF_CONVERGENCE_TOL)
        .meta("h", c.h)
        .meta("h_fine", c.h / 4.0)
        .meta("closed_form_deviation", closed);
    sink.text("distribution.csv", &io::dde_csv(&coarse))?;

    match distribution_dde_residual(&fam, &x0, t_end, c.fd_delta) {
        Ok(conv) => convergence_check(report, "distribution.residual", &conv),
        Err(e) => failed_check(report, "distribution.residual", &e),
    }

    let seed = |u: f64| fam.tensor(s as f64, u, &x0);
    if t_end >= s as f64 + 2.0 {
        let sol = integrate_forward_transition_dde(seed, state, &gen, s, t_end, c.h)?;
        let computed = sol.tensor_at(t_end).expect("t_end is a grid node");
        let exact = fam.tensor(s as f64, t_end, &x0)?;
        report
            .at_most("transition.closed_form", computed.max_abs_diff(&exact)?, CLOSED_FORM_TOL)
            .meta("s", s)
            .meta("t", t_end);
        report.at_most("transition.row_sum", sol.max_row_sum_defect(), c.tol);
        sink.text("transition.csv", &io::dde_csv(&sol.solution))?;
    }
    if t_end > s as f64 + 2.0 {
        match backward_residual(&fam, &gen, s as f64, t_end, &x0, c.fd_delta) {
            Ok(r) => {
                convergence_check(report, "backward.corrected", &r.corrected);
                convergence_check(report, "backward.printed", &r.printed);
            }
            Err(e) => {
                failed_check(report, "backward.corrected", &e);
                failed_check(report, "backward.printed", &e);
            }
        }
    }
    Ok(())
}

fn kernel_ck(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let k = kernel(c);
    let opts = kernel_options(c);
    let flow = flow(c, &k, &opts)?;
    let (s, tau, t) = (
        c.s.expect("validated"),
        c.tau.expect("validated"),
        c.t.expect("validated"),
    );
    let m_tau = flow.measure(tau)?;
    let r = ck_residual_density(&k, &m_tau, s, tau, t, &c.probes, &opts)?;
    report
        .at_most("ck.residual", r.max_residual, c.tol)
        .meta("rows", &r.rows)
        .meta("measure_mass_defect", flow.max_defect());
    report.at_most("ck.truncation", r.truncation_defect, TRUNCATION_TOL);
    let [x, y, z, _] = c.probes[0];
    let gap = ck_variance_gap(&k, &m_tau, s, tau, t, [x, y, z], &opts)?;
    let check = report.at_most("ck.variance_gap", gap.abs(), c.tol);
    check.meta("signed", gap).meta("parents", [x, y, z]);
    if matches!(c.kernel, Some(KernelSpec::Example2)) && m_tau.is_point_mass() {
        check.meta("point_mass_prediction", example2_variance_gap(tau));
    }
    sink.text("measure.csv", &io::measure_csv(&m_tau))?;
    Ok(())
}

fn coefficient_check(report: &mut Report, name: &str, c: &Coefficient) {
    report
        .at_most(name, c.error, 1e-6 + 1e-3 * c.value.abs())
        .meta("value", c.value);
}

fn kernel_coeffs(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let k = kernel(c);
    let opts = kernel_options(c);
    let flow = flow(c, &k, &opts)?;
    let p = c.probe.expect("validated");
    let m = moment_coefficients(&k, &flow, p.s, [p.x, p.y, p.z], p.t, p.w, &opts)?;
    let b = &m.backward;
    let f = &m.forward;
    for (name, coeff) in [
        ("backward.a", &b.a),
        ("backward.b2", &b.b2),
        ("backward.d_y", &b.d_y),
        ("backward.d_z", &b.d_z),
        ("backward.d2_y", &b.d2_y),
        ("backward.d2_z", &b.d2_z),
        ("forward.n", &f.n),
        ("forward.a", &f.a),
        ("forward.b2", &f.b2),
    ] {
        coefficient_check(report, name, coeff);
    }
    report.at_least("backward.b2.sign", b.b2.value, -c.tol);
    report.at_least("forward.b2.sign", f.b2.value, -c.tol);
    report
        .at_most("forward.third_moment", f.third.value.abs(), c.tol)
        .meta("error", f.third.error);
    sink.json("coefficients.json", &m)?;
    Ok(())
}

fn kernel_residual(c: &RunConfig, report: &mut Report, sink: &mut Sink) -> Result<(), RunError> {
    let k = kernel(c);
    let opts = kernel_options(c);
    let flow = flow(c, &k, &opts)?;
    let p = c.probe.expect("validated");
    let probes = [[p.x, p.y, p.z, p.w]];
    let mut details = Vec::new();

    for (name, dir) in [
        ("integro.forward", Direction::Forward),
        ("integro.backward", Direction::Backward),
    ] {
        match integro_residual(&k, &flow, dir, p.s, p.t, &probes, c.fd_delta, &opts) {
            Ok(r) => {
                convergence_check(report, name, &r.residual);
                details.push(serde_json::to_value(&r).unwrap_or_default());
            }
            Err(e) => failed_check(report, name, &e),
        }
    }

    match moment_coefficients(&k, &flow, p.s, [p.x, p.y, p.z], p.t, p.w, &opts) {
        Ok(coeffs) => {
            for (name, form) in [
                ("reduced.backward_printed", ReducedForm::BackwardPrinted),
                ("reduced.backward_consistent", ReducedForm::BackwardConsistent),
                ("reduced.forward_displaced", ReducedForm::ForwardDisplaced),
            ] {
                match reduced_equation_residual(&k, &coeffs, form, c.fd_delta) {
                    Ok(r) => {
                        convergence_check(report, name, &r.residual);
                        if !r.notes.is_empty() {
                            let check = report.checks.last_mut().expect("just pushed");
                            check.meta("notes", &r.notes);
                        }
                        details.push(serde_json::to_value(&r).unwrap_or_default());
                    }
                    Err(e) => failed_check(report, name, &e),
                }
            }
        }
        Err(e) => {
            for name in [
                "reduced.backward_printed",
                "reduced.backward_consistent",
                "reduced.forward_displaced",
            ] {
                failed_check(report, name, &e);
            }
        }
    }
    report.at_most("measure.truncation", flow.max_defect(), cubic_core::kernel::MAX_TRUNCATION_DEFECT);
    sink.json("residuals.json", &details)?;
    Ok(())
}
