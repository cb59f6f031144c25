//! Conjugate-gradient minimization of the discrete functional and the
//! direct complex oracle it is checked against.

pub mod direct;
pub mod dofs;
pub mod problem;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{apply_constitutive, complete_trial_field, ComplexFields, FieldState, PrimalFields};
use crate::functional::{self, SurfaceData};
use crate::linalg;

pub use direct::{solve_direct_complex, MAX_DIRECT_UNKNOWNS};
pub use dofs::{DofMap, Parametrization, Quadratic};
pub use problem::{complete_reduced_dual, PhysicalProblem, VariationalProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    BlockJacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub relative_residual_tolerance: f64,
    pub preconditioner: Preconditioner,
    /// Random starting iterate when set; zero start otherwise.
    pub seed: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 50_000,
            relative_residual_tolerance: 1e-12,
            preconditioner: Preconditioner::BlockJacobi,
            seed: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Validation("max_iterations must be at least 1".into()));
        }
        let t = self.relative_residual_tolerance;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Validation(format!("tolerance must lie in (0, 1), got {t}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    /// ‖∇J‖ / ‖load‖
    pub residual: f64,
    pub functional: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub functional: f64,
    pub wall_time: f64,
    pub converged: bool,
    pub history: Vec<HistoryEntry>,
}

impl SolveReport {
    /// Comma-separated (iteration, residual, functional) history.
    pub fn write_history<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "residual", "functional"])?;
        for h in &self.history {
            w.write_record([h.iteration.to_string(), format!("{:e}", h.residual), format!("{:e}", h.functional)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_history_file(&self, path: &Path) -> Result<()> {
        self.write_history(std::fs::File::create(path)?)
    }
}

fn apply_preconditioner(blocks: &[(Vec<usize>, DMatrix<f64>)], r: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; r.len()];
    for (idx, inv) in blocks {
        for (a, &i) in idx.iter().enumerate() {
            z[i] = idx.iter().enumerate().map(|(b, &j)| inv[(a, b)] * r[j]).sum();
        }
    }
    z
}

/// Preconditioned CG on ½xᵀAx − bᵀx + j0.  Stops when ‖Ax − b‖ ≤ tol·‖b‖;
/// running out of iterations returns the last iterate with
/// `converged = false`.
pub fn minimize_quadratic(q: &Quadratic, opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    let start = Instant::now();
    let n = q.n_free();
    let bnorm = linalg::norm(&q.b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        // the minimizer of a definite form with zero load is zero
        let report = SolveReport {
            iterations: 0,
            residual: 0.0,
            functional: q.j0,
            wall_time: start.elapsed().as_secs_f64(),
            converged: true,
            history: vec![HistoryEntry {
                iteration: 0,
                residual: 0.0,
                functional: q.j0,
            }],
        };
        return Ok((x, report));
    }
    if let Some(seed) = opts.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = bnorm / (n as f64).sqrt().max(1.0);
        x.iter_mut().for_each(|v| *v = scale * rng.random_range(-1.0..1.0));
    }
    let blocks = match opts.preconditioner {
        Preconditioner::BlockJacobi => Some(q.block_jacobi()?),
        Preconditioner::None => None,
    };
    let precond = |r: &[f64]| match &blocks {
        Some(b) => apply_preconditioner(b, r),
        None => r.to_vec(),
    };
    let true_residual = |x: &[f64]| -> Vec<f64> {
        let mut r = q.b.clone();
        linalg::axpy(-1.0, &linalg::spmv(&q.a, x), &mut r);
        r
    };
    // J = ½xᵀAx − bᵀx + j0 = −½xᵀ(b + r) + j0
    let value = |x: &[f64], r: &[f64]| -> f64 {
        -0.5 * x.iter().zip(&q.b).zip(r).map(|((x, b), r)| x * (b + r)).sum::<f64>() + q.j0
    };
    let tol = opts.relative_residual_tolerance * bnorm;
    let mut r = true_residual(&x);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = linalg::dot(&r, &z);
    let mut history = vec![HistoryEntry {
        iteration: 0,
        residual: linalg::norm(&r) / bnorm,
        functional: value(&x, &r),
    }];
    let mut iterations = 0;
    let mut converged = linalg::norm(&r) <= tol;
    let mut restarts = 0;
    while !converged && iterations < opts.max_iterations {
        let ap = linalg::spmv(&q.a, &p);
        let pap = linalg::dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Indefinite(format!(
                "search direction with pᵀAp = {pap:e} at iteration {iterations}"
            )));
        }
        let alpha = rz / pap;
        linalg::axpy(alpha, &p, &mut x);
        linalg::axpy(-alpha, &ap, &mut r);
        iterations += 1;
        let mut rnorm = linalg::norm(&r);
        if rnorm <= tol {
            // confirm against the true residual before stopping
            r = true_residual(&x);
            rnorm = linalg::norm(&r);
            if rnorm <= tol || restarts >= 5 {
                converged = rnorm <= tol;
                history.push(HistoryEntry {
                    iteration: iterations,
                    residual: rnorm / bnorm,
                    functional: value(&x, &r),
                });
                // attainable accuracy reached without meeting the tolerance
                break;
            }
            restarts += 1;
            z = precond(&r);
            p = z.clone();
            rz = linalg::dot(&r, &z);
        } else {
            z = precond(&r);
            let rz_new = linalg::dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        history.push(HistoryEntry {
            iteration: iterations,
            residual: rnorm / bnorm,
            functional: value(&x, &r),
        });
    }
    let r = true_residual(&x);
    let residual = linalg::norm(&r) / bnorm;
    let report = SolveReport {
        iterations,
        residual,
        functional: value(&x, &r),
        wall_time: start.elapsed().as_secs_f64(),
        converged: converged && residual <= opts.relative_residual_tolerance,
        history,
    };
    Ok((x, report))
}

/// Minimize the discrete functional of `p` by conjugate gradients.
pub fn minimize_cg(p: &VariationalProblem, opts: &SolveOptions) -> Result<(FieldState, SolveReport)> {
    let q = Quadratic::assemble_with(&p.mesh, &p.medium, &p.src, &p.bc, &p.src.g0.values, Parametrization::Auto)?;
    let (x, report) = minimize_quadratic(&q, opts)?;
    let primal = PrimalFields::from_stacked(&p.layout(), &q.dofs.full(&x))?;
    Ok((complete_trial_field(&primal, &p.src, &p.mesh)?, report))
}

/// Complex fields (potential, flux, traces) of a minimizer.
pub fn complex_fields(f: &FieldState, p: &VariationalProblem) -> Result<ComplexFields> {
    let g = apply_constitutive(f, &p.medium)?;
    let g = complete_reduced_dual(&g, p)?;
    ComplexFields::from_states(f, &g, &p.src, &p.mesh)
}

/// Result of solving a physical problem through the minimum principle.
#[derive(Debug, Clone)]
pub struct PhysicalSolution {
    /// Rotation angle used to make the moduli strictly passive.
    pub theta: f64,
    /// The real problem that was minimized (rotated when θ ≠ 0).
    pub variational: VariationalProblem,
    pub state: FieldState,
    pub report: SolveReport,
    /// Physical complex fields (rotation undone).
    pub fields: ComplexFields,
}

/// Rotate if needed, minimize, and return the physical complex fields.
pub fn solve_physical(p: &PhysicalProblem, opts: &SolveOptions) -> Result<PhysicalSolution> {
    let theta = p.rotation_angle()?;
    let rotated = if theta == 0.0 { p.clone() } else { p.rotated(theta) };
    let variational = VariationalProblem::from_physical(&rotated)?;
    let (state, report) = minimize_cg(&variational, opts)?;
    let fields = complex_fields(&state, &variational)?.unrotated(theta);
    Ok(PhysicalSolution {
        theta,
        variational,
        state,
        report,
        fields,
    })
}

/// Real primal field corresponding to given complex fields.
pub fn state_from_complex(fields: &ComplexFields, p: &VariationalProblem) -> Result<FieldState> {
    fields.layout.same_as(&p.layout())?;
    complete_trial_field(&fields.primal(), &p.src, &p.mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub potential_error: f64,
    pub flux_error: f64,
    pub trace_error: f64,
    pub field_error: f64,
    /// |J(F_cg) − J(F_oracle)| / max(|J|, ‖load‖-scale)
    pub functional_discrepancy: f64,
    /// |J(F_cg) − surface minimum value| relative to |J|; absent with body sources.
    pub boundary_identity_discrepancy: Option<f64>,
}

fn rel(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let n: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if d == 0.0 {
        0.0
    } else {
        (d / n.max(f64::MIN_POSITIVE)).sqrt()
    }
}

/// Compare a CG solution with the oracle for the same (possibly rotated)
/// variational problem.  Both field sets must be in the frame of `p`.
pub fn cross_validate(p: &VariationalProblem, cg: &ComplexFields, oracle: &ComplexFields) -> Result<CrossValidation> {
    let f_cg = state_from_complex(cg, p)?;
    let f_or = state_from_complex(oracle, p)?;
    let j_cg = functional::evaluate_functional(&f_cg, &p.medium, &p.src, &p.mesh)?.total;
    let j_or = functional::evaluate_functional(&f_or, &p.medium, &p.src, &p.mesh)?.total;
    let denom = |j: f64| j.abs().max(f64::MIN_POSITIVE);
    let functional_discrepancy = if j_cg == j_or { 0.0 } else { (j_cg - j_or).abs() / denom(j_or) };
    let boundary_identity_discrepancy = if p.src.has_body_source() {
        None
    } else {
        let s = functional::minimum_value_surface(&SurfaceData::from_fields(cg, &p.mesh), &p.src, &p.mesh)?;
        Some(if s == j_cg { 0.0 } else { (j_cg - s).abs() / denom(j_cg) })
    };
    Ok(CrossValidation {
        potential_error: rel(&cg.potential, &oracle.potential),
        flux_error: rel(&cg.flux, &oracle.flux),
        trace_error: rel(&cg.trace, &oracle.trace),
        field_error: cg.relative_difference(oracle),
        functional_discrepancy,
        boundary_identity_discrepancy,
    })
}
