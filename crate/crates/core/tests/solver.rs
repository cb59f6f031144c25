mod common;

use std::collections::HashMap;

use common::*;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavemin::fields::{physical_conditions, Layout, Mesh, PhysicalCondition, SideCondition};
use wavemin::functional;
use wavemin::linalg;
use wavemin::moduli::{ComplexModuli, Physics};
use wavemin::solver::{self, direct, PhysicalProblem, Quadratic, SolveOptions, VariationalProblem};

fn oracle_error(p: &PhysicalProblem, opts: &SolveOptions) -> (f64, solver::PhysicalSolution) {
    let sol = solver::solve_physical(p, opts).unwrap();
    let oracle = solver::solve_direct_complex(p).unwrap();
    (sol.fields.relative_difference(&oracle), sol)
}

#[test]
fn cg_matches_oracle_on_rods() {
    for physics in ALL_PHYSICS {
        for kind in ALL_ENDS {
            let p = standard_rod(physics, kind);
            let (err, sol) = oracle_error(&p, &SolveOptions::default());
            assert!(sol.report.converged);
            assert!(err < 1e-8, "{physics:?} {kind:?}: {err:e}");
        }
    }
}

/// Shooting with the discrete three-point recursion of a lumped-mass rod:
/// N_i = N_{i−1} − μ_i u_i, u_{i+1} = u_i + N_i/κ_i with N_{−1} = −τ_0.
/// Returns (u, τ_n).
fn shoot(mu: &[Complex64], kappa: &[Complex64], u0: Complex64, tau0: Complex64) -> (Vec<Complex64>, Complex64) {
    let mut u = vec![u0];
    let mut n_prev = -tau0;
    for (i, k) in kappa.iter().enumerate() {
        let n_i = n_prev - mu[i] * u[i];
        u.push(u[i] + n_i / k);
        n_prev = n_i;
    }
    let last = mu.len() - 1;
    let tau_n = n_prev - mu[last] * u[last];
    (u, tau_n)
}

#[test]
fn direct_solve_matches_transfer_recursion_on_two_material_rod() {
    let omega = 2.5;
    let n = 60;
    let mesh = Mesh::interval(0.0, 1.0, n)
        .unwrap()
        .with_regions(|p| if p[0] < 0.37 { "a".into() } else { "b".into() })
        .unwrap();
    let (ca, ra) = (c(1.0, 0.5), c(1.0, -0.2));
    let (cb, rb) = (c(3.0, 0.1), c(0.5, -0.6));
    let regions = vec![
        ComplexModuli::scalar(Physics::Elastic, 1, ca, ra, omega).unwrap(),
        ComplexModuli::scalar(Physics::Elastic, 1, cb, rb, omega).unwrap(),
    ];
    let mut mu = vec![c(0.0, 0.0); n + 1];
    let mut kappa = Vec::new();
    for cell in 0..n {
        let h = mesh.cell_volume(cell);
        let (cm, rho) = if mesh.region_name(cell) == "a" { (ca, ra) } else { (cb, rb) };
        kappa.push(cm / h);
        for &v in &mesh.cells()[cell] {
            mu[v] += omega * omega * 0.5 * h * rho;
        }
    }
    let u0 = c(1.0, 0.0);
    let (a, _) = shoot(&mu, &kappa, u0, c(0.0, 0.0));
    let (b, _) = shoot(&mu, &kappa, u0, c(1.0, 0.0));
    // u_n is affine in τ_0; pick τ_0 so that u_n = 0
    let tau0 = -a[n] / (b[n] - a[n]);
    let (u, tau_n) = shoot(&mu, &kappa, u0, tau0);

    let p = PhysicalProblem::new(
        mesh,
        Physics::Elastic,
        omega,
        regions,
        vec![c(0.0, 0.0); n + 1],
        vec![PhysicalCondition::Potential(u0), PhysicalCondition::Potential(c(0.0, 0.0))],
    )
    .unwrap();
    let f = solver::solve_direct_complex(&p).unwrap();
    let scale = linalg::cnorm(&u);
    let diff: Vec<Complex64> = f.potential.iter().zip(&u).map(|(x, y)| x - y).collect();
    assert!(linalg::cnorm(&diff) / scale < 1e-10);
    assert!((f.trace[0] - tau0).norm() / tau0.norm() < 1e-10);
    assert!((f.trace[1] - tau_n).norm() / tau_n.norm() < 1e-10);

    // Neumann at the far end: prescribe the recursion's τ_n and recover the same field
    let neumann = PhysicalProblem {
        conditions: vec![PhysicalCondition::Potential(u0), PhysicalCondition::Trace(tau_n)],
        ..p
    };
    let g = solver::solve_direct_complex(&neumann).unwrap();
    let diff: Vec<Complex64> = g.potential.iter().zip(&u).map(|(x, y)| x - y).collect();
    assert!(linalg::cnorm(&diff) / scale < 1e-10);
}

fn min_singular_ratio(p: &PhysicalProblem) -> f64 {
    let m = direct::dense_system_matrix(p).unwrap();
    let sv = m.singular_values();
    sv.min() / sv.max()
}

#[test]
fn passive_oracle_matrices_are_nonsingular() {
    for physics in ALL_PHYSICS {
        for kind in ALL_ENDS {
            let r = min_singular_ratio(&standard_rod(physics, kind));
            assert!(r > 1e-8, "{physics:?} {kind:?}: σ_min/σ_max = {r:e}");
        }
    }
}

#[test]
fn random_passive_problems_are_solvable() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..50 {
        let physics = ALL_PHYSICS[i % 3];
        let p = random_rod(physics, i % 2 == 0, &mut rng);
        assert!(p.is_strictly_passive());
        assert!(min_singular_ratio(&p) > 0.0);
        let (err, sol) = oracle_error(&p, &SolveOptions::default());
        assert!(sol.report.converged, "problem {i} did not converge");
        assert!(err < 1e-8, "problem {i} ({physics:?}): {err:e}");
    }
}

#[test]
fn oracle_solution_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for physics in ALL_PHYSICS {
        for kind in ALL_ENDS {
            let mut p = standard_rod(physics, kind);
            p.body = p.body.iter().map(|_| random_complex(&mut rng)).collect();
            let v = VariationalProblem::from_physical(&p).unwrap();
            let oracle = solver::solve_direct_complex(&p).unwrap();
            let f = solver::state_from_complex(&oracle, &v).unwrap();
            let grad = functional::gradient(&f, &v.medium, &v.src, &v.bc, &v.mesh).unwrap();
            let q = Quadratic::assemble(&v.mesh, &v.medium, &v.src, &v.bc, &v.src.g0.values).unwrap();
            let ratio = linalg::norm(&grad) / linalg::norm(&q.b);
            assert!(ratio < 1e-9, "{physics:?} {kind:?}: {ratio:e}");
        }
    }
}

#[test]
fn two_dimensional_problems_match_oracle() {
    let omega = 1.7;
    let mesh = Mesh::rectangle(1.0, 0.6, 6, 4).unwrap();
    let cases = [
        (
            Physics::Elastic,
            ComplexModuli::elastic_isotropic_2d(c(1.5, 0.2), c(1.0, 0.4), c(1.0, -0.3), omega).unwrap(),
            vec![c(1.0, 0.0), c(0.0, 0.5)],
            vec![c(0.2, 0.3), c(0.0, 0.0)],
        ),
        (
            Physics::Acoustic,
            ComplexModuli::scalar(Physics::Acoustic, 2, c(1.0, -0.3), c(0.8, 0.5), omega).unwrap(),
            vec![c(1.0, 0.2)],
            vec![c(0.0, 0.4)],
        ),
    ];
    for (physics, m, left, right) in cases {
        let layout = Layout::new(physics, &mesh).unwrap();
        let zero = vec![c(0.0, 0.0); layout.n_pot];
        let sides = HashMap::from([
            ("left".to_string(), SideCondition::Potential(left)),
            ("right".to_string(), SideCondition::Flux(right)),
            ("top".to_string(), SideCondition::Flux(zero.clone())),
            ("bottom".to_string(), SideCondition::Flux(zero)),
        ]);
        let conditions = physical_conditions(&mesh, &layout, &sides).unwrap();
        let body = vec![c(0.1, -0.2); layout.source_len()];
        let p = PhysicalProblem::new(mesh.clone(), physics, omega, vec![m], body, conditions).unwrap();
        let (err, _) = oracle_error(&p, &SolveOptions::default());
        assert!(err < 1e-8, "{physics:?}: {err:e}");
    }
}

#[test]
fn functional_decreases_along_iterations() {
    for physics in ALL_PHYSICS {
        let p = standard_rod(physics, Ends::Mixed);
        let sol = solver::solve_physical(&p, &SolveOptions::default()).unwrap();
        let h = &sol.report.history;
        assert!(h.len() > 2);
        let scale = h.iter().map(|e| e.functional.abs()).fold(0.0, f64::max);
        for w in h.windows(2) {
            assert!(w[1].functional <= w[0].functional + 1e-12 * scale);
        }
    }
}

#[test]
fn early_stop_is_less_accurate() {
    let p = standard_rod(Physics::Elastic, Ends::Dirichlet);
    let (full, _) = oracle_error(&p, &SolveOptions::default());
    let opts = SolveOptions {
        max_iterations: 3,
        ..SolveOptions::default()
    };
    let (early, sol) = oracle_error(&p, &opts);
    assert!(!sol.report.converged);
    assert_eq!(sol.report.iterations, 3);
    assert!(early > full);
}

#[test]
fn random_starts_reach_the_same_minimizer() {
    for physics in ALL_PHYSICS {
        let p = standard_rod(physics, Ends::Neumann);
        let run = |seed| {
            let opts = SolveOptions {
                seed: Some(seed),
                ..SolveOptions::default()
            };
            solver::solve_physical(&p, &opts).unwrap().fields
        };
        let (a, b) = (run(1), run(2));
        assert!(a.relative_difference(&b) < 1e-9);
    }
}

#[test]
fn zero_data_needs_no_iterations() {
    for physics in ALL_PHYSICS {
        let mut p = standard_rod(physics, Ends::Mixed);
        p.conditions = vec![PhysicalCondition::Potential(c(0.0, 0.0)), PhysicalCondition::Trace(c(0.0, 0.0))];
        let sol = solver::solve_physical(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.report.iterations, 0);
        assert!(sol.state.values.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn unpreconditioned_cg_agrees() {
    let p = standard_rod(Physics::Acoustic, Ends::Mixed);
    let opts = SolveOptions {
        preconditioner: solver::Preconditioner::None,
        ..SolveOptions::default()
    };
    let (err, sol) = oracle_error(&p, &opts);
    assert!(sol.report.converged);
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn cross_validation_of_identical_fields_is_zero() {
    let p = standard_rod(Physics::Elastic, Ends::Mixed);
    let v = VariationalProblem::from_physical(&p).unwrap();
    let oracle = solver::solve_direct_complex(&p).unwrap();
    let cv = solver::cross_validate(&v, &oracle, &oracle).unwrap();
    assert_eq!(cv.field_error, 0.0);
    assert_eq!(cv.potential_error, 0.0);
    assert_eq!(cv.functional_discrepancy, 0.0);
}

#[test]
fn reduced_formulation_matches_lossless_oracle() {
    for physics in ALL_PHYSICS {
        for kind in ALL_ENDS {
            let omega = 2.0;
            let base = rod_moduli(physics, omega);
            let dual = base.dual.map(|z| c(z.re, 0.0));
            let m = ComplexModuli::new(physics, base.primal.clone(), dual, omega).unwrap();
            let p = rod(physics, vec![m], Mesh::interval(0.0, 1.0, 100).unwrap(), omega, kind);
            let v = VariationalProblem::lossless(&p).unwrap();
            let (f, report) = solver::minimize_cg(&v, &SolveOptions::default()).unwrap();
            assert!(report.converged);
            let z = solver::complex_fields(&f, &v).unwrap();
            let oracle = solver::solve_direct_complex(&p).unwrap();
            let err = z.relative_difference(&oracle);
            assert!(err < 1e-6, "{physics:?} {kind:?}: {err:e}");
        }
    }
}

#[test]
fn non_passive_problem_is_rotated() {
    // lossless density with lossy stiffness is fixed by a rotation
    let omega = 2.0;
    let m = ComplexModuli::scalar(Physics::Elastic, 1, c(1.0, 0.5), c(1.0, 0.0), omega).unwrap();
    let p = rod(Physics::Elastic, vec![m], Mesh::interval(0.0, 1.0, 50).unwrap(), omega, Ends::Mixed);
    assert!(!p.is_strictly_passive());
    let (err, sol) = oracle_error(&p, &SolveOptions::default());
    assert!(sol.theta != 0.0);
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn history_is_exported_as_csv() {
    let p = standard_rod(Physics::Elastic, Ends::Dirichlet);
    let sol = solver::solve_physical(&p, &SolveOptions::default()).unwrap();
    let mut buf = Vec::new();
    sol.report.write_history(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,residual,functional"));
    assert_eq!(lines.count(), sol.report.history.len());
}

#[test]
fn invalid_options_are_rejected() {
    let p = standard_rod(Physics::Elastic, Ends::Dirichlet);
    for opts in [
        SolveOptions {
            max_iterations: 0,
            ..SolveOptions::default()
        },
        SolveOptions {
            relative_residual_tolerance: 1.5,
            ..SolveOptions::default()
        },
    ] {
        assert!(matches!(
            solver::solve_physical(&p, &opts),
            Err(wavemin::Error::Validation(_))
        ));
    }
}
