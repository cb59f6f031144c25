//! Subcommand drivers.  Each writes its tables and one JSON summary into the
//! output directory, named `<run id>_<subcommand>_<artifact>`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use wavemin::fields::medium::distribute_tensors;
use wavemin::fields::table::{self, FieldRow};
use wavemin::fields::{complete_trial_field, ComplexFields, FieldState, Medium, Mesh, PhysicalCondition};
use wavemin::functional::{self, SurfaceData};
use wavemin::greens::{self, GreensEvaluation, SphereOrder};
use wavemin::hs::{self, BoundClass, Condensed, CondensedMethod, DiscreteH0, Polarization};
use wavemin::moduli::{self, PassivityReport, Physics};
use wavemin::solver::{self, PhysicalProblem, SolveOptions, SolveReport, VariationalProblem};

use crate::config::{Formulation, LoadedConfig, Overrides};
use crate::error::CliError;

/// Relative slack below which a candidate medium is excluded by the data.
pub const SLACK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Validate,
    Tomography,
    HsBound,
    GreensTable,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Validate => "validate",
            Subcommand::Tomography => "tomography",
            Subcommand::HsBound => "hs-bound",
            Subcommand::GreensTable => "greens-table",
        }
    }
}

/// Files written by a run.  `error` is set when artifacts were written but
/// the run still failed (non-convergence).
#[derive(Debug, Default)]
pub struct RunOutput {
    pub artifacts: Vec<PathBuf>,
    pub error: Option<CliError>,
}

struct Output<'a> {
    dir: &'a Path,
    prefix: String,
    written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(dir: &'a Path, run_id: &str, sub: Subcommand) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Write {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Output {
            dir,
            prefix: format!("{run_id}_{}", sub.name()),
            written: Vec::new(),
        })
    }

    fn path(&self, artifact: &str) -> PathBuf {
        self.dir.join(format!("{}_{artifact}", self.prefix))
    }

    fn write_with<F>(&mut self, artifact: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.path(artifact);
        let io = |e: std::io::Error| CliError::Write {
            path: path.clone(),
            source: e,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        f(&mut w)?;
        w.flush().map_err(io)?;
        self.written.push(path);
        Ok(())
    }

    fn rows(&mut self, artifact: &str, rows: &[FieldRow]) -> Result<(), CliError> {
        self.write_with(artifact, |w| Ok(table::write_field_rows(rows, w)?))
    }

    fn mesh(&mut self, mesh: &Mesh) -> Result<(), CliError> {
        let (nodes, cells) = (self.path("nodes.csv"), self.path("cells.csv"));
        table::write_mesh_files(mesh, &nodes, &cells)?;
        self.written.extend([nodes, cells]);
        Ok(())
    }

    fn history(&mut self, artifact: &str, report: &SolveReport) -> Result<(), CliError> {
        self.write_with(artifact, |w| Ok(report.write_history(w)?))
    }

    fn summary<T: Serialize>(&mut self, summary: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(summary).expect("summary records always serialize");
        text.push('\n');
        let path = self.path("summary.json");
        std::fs::write(&path, text).map_err(|e| CliError::Write {
            path: path.clone(),
            source: e,
        })?;
        self.written.push(path);
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Header<'a> {
    run_id: &'a str,
    subcommand: &'static str,
    units: &'a str,
    omega: f64,
    physics: Option<Physics>,
}

#[derive(Debug, Serialize)]
struct Summary<'a, T: Serialize> {
    #[serde(flatten)]
    header: Header<'a>,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Serialize)]
struct SolverSummary {
    iterations: usize,
    relative_residual: f64,
    converged: bool,
    tolerance: f64,
    max_iterations: usize,
    seed: Option<u64>,
}

impl SolverSummary {
    fn new(report: &SolveReport, opts: &SolveOptions) -> Self {
        SolverSummary {
            iterations: report.iterations,
            relative_residual: report.residual,
            converged: report.converged,
            tolerance: opts.relative_residual_tolerance,
            max_iterations: opts.max_iterations,
            seed: opts.seed,
        }
    }
}

fn header<'a>(cfg: &'a LoadedConfig, sub: Subcommand) -> Header<'a> {
    Header {
        run_id: &cfg.run_id,
        subcommand: sub.name(),
        units: &cfg.config.units,
        omega: cfg.config.omega,
        physics: cfg.config.physics,
    }
}

pub fn run(cfg: &LoadedConfig, sub: Subcommand, out_dir: &Path, ov: &Overrides) -> Result<RunOutput, CliError> {
    let mut out = Output::new(out_dir, &cfg.run_id, sub)?;
    let error = match sub {
        Subcommand::Solve => solve(cfg, ov, &mut out)?,
        Subcommand::Validate => validate(cfg, ov, &mut out)?,
        Subcommand::Tomography => tomography(cfg, ov, &mut out)?,
        Subcommand::HsBound => hs_bound(cfg, ov, &mut out)?,
        Subcommand::GreensTable => greens_table(cfg, ov, &mut out)?,
    };
    Ok(RunOutput {
        artifacts: out.written,
        error,
    })
}

fn not_converged(what: &str, report: &SolveReport) -> Option<CliError> {
    (!report.converged).then(|| {
        CliError::NotConverged(format!(
            "{what}: relative residual {:.3e} after {} iterations",
            report.residual, report.iterations
        ))
    })
}

/// Reduced formulation when every dual tensor is real (auto mode).
fn use_reduced(cfg: &LoadedConfig, p: &PhysicalProblem) -> bool {
    match cfg.config.solver.formulation {
        Formulation::Full => false,
        Formulation::Reduced => true,
        Formulation::Auto => p.regions.iter().all(|m| m.dual.iter().all(|z| z.im == 0.0)),
    }
}

/// Medium carrying only the physical tensors, for dissipation.
fn physical_medium(p: &PhysicalProblem) -> Result<Medium, CliError> {
    let layout = p.layout();
    Ok(Medium {
        layout,
        omega: p.omega,
        cell_blocks: Vec::new(),
        node_blocks: Vec::new(),
        tensors: Some(distribute_tensors(&p.mesh, &layout, &p.regions)?),
        reduced: None,
    })
}

struct Solved {
    theta: f64,
    reduced: bool,
    variational: VariationalProblem,
    state: FieldState,
    report: SolveReport,
    /// Fields of the minimized (possibly rotated) problem.
    solved_fields: ComplexFields,
    /// Physical fields.
    fields: ComplexFields,
}

fn solve_problem(cfg: &LoadedConfig, p: &PhysicalProblem, opts: &SolveOptions) -> Result<Solved, CliError> {
    let reduced = use_reduced(cfg, p);
    let theta = if reduced || !cfg.config.solver.rotate {
        0.0
    } else {
        p.rotation_angle()?
    };
    let rotated = if theta == 0.0 { p.clone() } else { p.rotated(theta) };
    let variational = if reduced {
        VariationalProblem::lossless(&rotated)?
    } else {
        VariationalProblem::from_physical(&rotated)?
    };
    let (state, report) = solver::minimize_cg(&variational, opts)?;
    let solved_fields = solver::complex_fields(&state, &variational)?;
    let fields = solved_fields.unrotated(theta);
    Ok(Solved {
        theta,
        reduced,
        variational,
        state,
        report,
        solved_fields,
        fields,
    })
}

#[derive(Debug, Serialize)]
struct FunctionalSummary {
    volume_term: f64,
    boundary_term: f64,
    total: f64,
}

#[derive(Debug, Serialize)]
struct BoundaryIdentity {
    surface_value: f64,
    relative_mismatch: f64,
}

#[derive(Debug, Serialize)]
struct DissipationSummary {
    mean_power: f64,
    stiffness_part: f64,
    inertial_part: f64,
    boundary_working: f64,
    relative_balance_mismatch: f64,
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    formulation: &'static str,
    rotation_angle: f64,
    nodes: usize,
    cells: usize,
    solver: SolverSummary,
    functional: FunctionalSummary,
    /// Absent when a body source is present.
    boundary_identity: Option<BoundaryIdentity>,
    dissipation: DissipationSummary,
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = b.abs().max(f64::MIN_POSITIVE);
    (a - b).abs() / scale
}

fn solve(cfg: &LoadedConfig, ov: &Overrides, out: &mut Output) -> Result<Option<CliError>, CliError> {
    let p = cfg.problem()?;
    let opts = cfg.solve_options(ov)?;
    let s = solve_problem(cfg, &p, &opts)?;
    let v = &s.variational;
    let j = functional::evaluate_functional(&s.state, &v.medium, &v.src, &v.mesh)?;
    let boundary_identity = if v.src.has_body_source() {
        None
    } else {
        let surface = SurfaceData::from_fields(&s.solved_fields, &v.mesh);
        let value = functional::minimum_value_surface(&surface, &v.src, &v.mesh)?;
        Some(BoundaryIdentity {
            surface_value: value,
            relative_mismatch: relative(value, j.total),
        })
    };
    let d = functional::dissipation_rate(&s.fields, &physical_medium(&p)?, &p.mesh)?;
    let working = functional::boundary_working_rate(&s.fields, &p.body, &p.mesh, p.omega)?;

    out.rows("fields.csv", &table::complex_rows(&s.fields))?;
    out.rows("primal.csv", &table::primal_rows(&s.state.primal, &p.layout()))?;
    out.mesh(&p.mesh)?;
    out.history("history.csv", &s.report)?;
    out.summary(&Summary {
        header: header(cfg, Subcommand::Solve),
        body: SolveSummary {
            formulation: if s.reduced { "reduced" } else { "full" },
            rotation_angle: s.theta,
            nodes: p.mesh.n_nodes(),
            cells: p.mesh.n_cells(),
            solver: SolverSummary::new(&s.report, &opts),
            functional: FunctionalSummary {
                volume_term: j.volume_term,
                boundary_term: j.boundary_term,
                total: j.total,
            },
            boundary_identity,
            dissipation: DissipationSummary {
                mean_power: d.mean_power,
                stiffness_part: d.stiffness_part,
                inertial_part: d.inertial_part,
                boundary_working: working,
                relative_balance_mismatch: relative(working, d.mean_power),
            },
        },
    })?;
    Ok(not_converged("minimization", &s.report))
}

#[derive(Debug, Serialize)]
struct RegionReport {
    region: String,
    passivity: PassivityReport,
}

#[derive(Debug, Serialize)]
struct ValidateSummary {
    valid: bool,
    nodes: usize,
    cells: usize,
    formulation: &'static str,
    rotation_angle: f64,
    regions: Vec<RegionReport>,
}

/// Check everything a later run would need, without solving.
fn validate(cfg: &LoadedConfig, ov: &Overrides, out: &mut Output) -> Result<Option<CliError>, CliError> {
    let p = cfg.problem()?;
    cfg.solve_options(ov)?;
    let reduced = use_reduced(cfg, &p);
    let mut theta = 0.0;
    if reduced {
        Medium::lossless_from_regions(&p.mesh, p.layout(), p.omega, &p.regions)?;
    } else if cfg.config.solver.rotate {
        theta = p.rotation_angle()?;
    } else {
        for (name, m) in p.mesh.regions().iter().zip(&p.regions) {
            moduli::build_blocks(m, name)?;
        }
    }
    if cfg.config.hs.is_some() {
        if let Some(c) = &cfg.hs_spec()?.comparison {
            cfg.hs_comparison(p.physics, p.mesh.dim(), c)?;
        }
    }
    if cfg.config.greens.is_some() {
        cfg.greens_medium()?;
        cfg.greens_points()?;
        cfg.sphere_order(ov)?;
    }
    if let Some(t) = &cfg.config.tomography {
        for path in std::iter::once(&t.measured).chain(&t.trial) {
            let path = cfg.resolve(path);
            if !path.is_file() {
                return Err(CliError::Config(vec![format!("tomography: no file {}", path.display())]));
            }
        }
    }
    let regions = p
        .mesh
        .regions()
        .iter()
        .zip(&p.regions)
        .map(|(name, m)| RegionReport {
            region: name.clone(),
            passivity: moduli::check_passivity(m),
        })
        .collect();
    out.summary(&Summary {
        header: header(cfg, Subcommand::Validate),
        body: ValidateSummary {
            valid: true,
            nodes: p.mesh.n_nodes(),
            cells: p.mesh.n_cells(),
            formulation: if reduced { "reduced" } else { "full" },
            rotation_angle: theta,
            regions,
        },
    })?;
    Ok(None)
}

#[derive(Debug, Serialize)]
struct TomographySummary {
    trial: &'static str,
    slack: f64,
    scale: f64,
    relative_slack: f64,
    /// "consistent" when the slack is nonnegative within tolerance,
    /// "excluded" when the data rule the configured medium out.
    verdict: &'static str,
    solver: Option<SolverSummary>,
}

fn tomography(cfg: &LoadedConfig, ov: &Overrides, out: &mut Output) -> Result<Option<CliError>, CliError> {
    let spec = cfg.tomography()?;
    let p = cfg.problem()?;
    if p.body.iter().any(|z| z.norm() != 0.0) {
        return Err(CliError::Config(vec![
            "source.body: the tomography bound assumes no body source".into()
        ]));
    }
    let opts = cfg.solve_options(ov)?;
    let layout = p.layout();
    let read = |path: &Path| -> Result<Vec<FieldRow>, CliError> {
        let path = cfg.resolve(path);
        if !path.is_file() {
            return Err(CliError::Config(vec![format!("tomography: no file {}", path.display())]));
        }
        Ok(table::read_field_file(&path)?)
    };
    let measured = table::complex_from_rows(&layout, &read(&spec.measured)?)?;
    let surface = SurfaceData::from_fields(&measured, &p.mesh);
    let v = VariationalProblem::from_physical(&p)?;

    let (trial, report, kind) = match &spec.trial {
        Some(path) => {
            let primal = table::primal_from_rows(&layout, &read(path)?)?;
            (complete_trial_field(&primal, &v.src, &v.mesh)?, None, "file")
        }
        None => {
            // forward solution of the candidate medium under the measured potentials
            let conditions = surface.potential.iter().map(|&z| PhysicalCondition::Potential(z)).collect();
            let forward = PhysicalProblem::new(
                p.mesh.clone(),
                p.physics,
                p.omega,
                p.regions.clone(),
                vec![Complex64::new(0.0, 0.0); layout.source_len()],
                conditions,
            )?;
            let vf = VariationalProblem::from_physical(&forward)?;
            let (state, report) = solver::minimize_cg(&vf, &opts)?;
            out.rows("trial.csv", &table::primal_rows(&state.primal, &layout))?;
            out.history("history.csv", &report)?;
            (state, Some(report), "forward")
        }
    };
    let r = functional::tomography_slack(&trial, &surface, &v.medium, &v.mesh)?;
    let relative_slack = if r.scale > 0.0 { r.slack / r.scale } else { r.slack };
    out.summary(&Summary {
        header: header(cfg, Subcommand::Tomography),
        body: TomographySummary {
            trial: kind,
            slack: r.slack,
            scale: r.scale,
            relative_slack,
            verdict: if relative_slack >= -SLACK_TOLERANCE { "consistent" } else { "excluded" },
            solver: report.as_ref().map(|rep| SolverSummary::new(rep, &opts)),
        },
    })?;
    Ok(report.and_then(|rep| not_converged("forward solve", &rep)))
}

#[derive(Debug, Serialize)]
struct HsSummary {
    comparison: &'static str,
    bound_class: &'static str,
    method: &'static str,
    minimum: f64,
    /// HS value at zero polarization (the comparison problem's minimum).
    comparison_value: f64,
    /// HS value at the stationary polarization.
    stationary_value: f64,
    stationary_gap: f64,
    /// HS at the exact polarization of the minimizer; equals `minimum`.
    exact_polarization_value: f64,
    condensed_residual: f64,
    condensed_iterations: usize,
    converged: bool,
    solver: SolverSummary,
    comparison_solver: SolverSummary,
}

fn class_name(c: BoundClass) -> &'static str {
    match c {
        BoundClass::MinimumPrinciple => "minimum",
        BoundClass::SaddlePrinciple => "saddle",
        BoundClass::Indefinite => "indefinite",
    }
}

fn hs_bound(cfg: &LoadedConfig, ov: &Overrides, out: &mut Output) -> Result<Option<CliError>, CliError> {
    let spec = cfg.hs_spec()?;
    let p = cfg.problem()?;
    let opts = cfg.solve_options(ov)?;
    let v = VariationalProblem::from_physical(&p)?;
    let (l0, comparison) = match (&spec.comparison_scale, &spec.comparison) {
        (Some(s), _) => (v.medium.scaled(*s), "scaled"),
        (None, Some(c)) => (
            cfg.hs_comparison(p.physics, p.mesh.dim(), c)?.medium(v.layout(), v.omega())?,
            "homogeneous",
        ),
        (None, None) => unreachable!("checked by hs_spec"),
    };
    let (fmin, report) = solver::minimize_cg(&v, &opts)?;
    let minimum = functional::evaluate_functional(&fmin, &v.medium, &v.src, &v.mesh)?.total;
    let v0 = VariationalProblem::new(v.mesh.clone(), l0.clone(), v.src.clone(), v.bc.clone())?;
    let (f0, report0) = solver::minimize_cg(&v0, &opts)?;
    let h0 = DiscreteH0::new(&v.mesh, &l0, &v.src, &v.bc)?;
    let cond = Condensed::on_mesh(&v.mesh, &v.medium, &l0, &v.src, &f0, &h0)?;
    let method = cfg.method();
    let sol = cond.solve(method, opts.relative_residual_tolerance, opts.max_iterations)?;
    let t_exact = hs::exact_polarization(&fmin, &v.medium, &l0)?;
    let exact_value = hs::evaluate_hs(&v.mesh, &fmin, &t_exact, &v.medium, &l0, &v.src)?;

    out.rows("polarization.csv", &Polarization::new(v.layout(), sol.t.clone())?.rows())?;
    out.history("history.csv", &report)?;
    out.summary(&Summary {
        header: header(cfg, Subcommand::HsBound),
        body: HsSummary {
            comparison,
            bound_class: class_name(cond.class),
            method: match method {
                CondensedMethod::Dense => "dense",
                CondensedMethod::ConjugateGradient => "cg",
            },
            minimum,
            comparison_value: cond.comparison_value,
            stationary_value: sol.evaluation.value,
            stationary_gap: sol.evaluation.value - minimum,
            exact_polarization_value: exact_value,
            condensed_residual: sol.evaluation.residual_norm,
            condensed_iterations: sol.iterations,
            converged: sol.converged,
            solver: SolverSummary::new(&report, &opts),
            comparison_solver: SolverSummary::new(&report0, &opts),
        },
    })?;
    if !sol.converged {
        return Ok(Some(CliError::NotConverged(format!(
            "condensed polarization problem: residual {:.3e} after {} iterations",
            sol.evaluation.residual_norm, sol.iterations
        ))));
    }
    Ok(not_converged("minimization", &report).or_else(|| not_converged("comparison problem", &report0)))
}

#[derive(Debug, Serialize)]
struct GreensSummary {
    points: usize,
    order: SphereOrder,
    max_imaginary_residue: f64,
    perturbed_directions: usize,
    min_decay_length: f64,
}

fn greens_table(cfg: &LoadedConfig, ov: &Overrides, out: &mut Output) -> Result<Option<CliError>, CliError> {
    let cm = cfg.greens_medium()?;
    let points = cfg.greens_points()?;
    let order = cfg.sphere_order(ov)?;
    let omega = cfg.config.omega;
    let evals = points
        .iter()
        .map(|&x| greens::greens_evaluate(x, omega, &cm, order))
        .collect::<wavemin::Result<Vec<GreensEvaluation>>>()?;
    let integrals = greens::sphere_integrals(omega, &cm, order)?;
    out.write_with("greens.csv", |w| Ok(greens::write_greens_table(&evals, w)?))?;
    out.summary(&Summary {
        header: header(cfg, Subcommand::GreensTable),
        body: GreensSummary {
            points: evals.len(),
            order,
            max_imaginary_residue: evals.iter().map(|e| e.imaginary_residue).fold(0.0, f64::max),
            perturbed_directions: evals.iter().map(|e| e.perturbed_directions).sum(),
            min_decay_length: integrals.min_decay_length,
        },
    })?;
    Ok(None)
}
