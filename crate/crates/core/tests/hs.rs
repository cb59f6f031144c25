mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavemin::fields::{complete_trial_field, FieldState, Layout, Medium, Mesh, PrimalFields};
use wavemin::functional;
use wavemin::hs::{
    self, BoundClass, ComparisonMedium, Condensed, CondensedMethod, DiscreteH0, H0Applier, Polarization,
};
use wavemin::linalg;
use wavemin::moduli::{CGBlock, Physics};
use wavemin::solver::{self, Quadratic, SolveOptions, VariationalProblem};

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_state(v: &VariationalProblem, rng: &mut ChaCha8Rng) -> FieldState {
    let q = Quadratic::assemble(&v.mesh, &v.medium, &v.src, &v.bc, &v.src.g0.values).unwrap();
    let x = random_vec(q.n_free(), rng);
    let primal = PrimalFields::from_stacked(&v.layout(), &q.dofs.full(&x)).unwrap();
    complete_trial_field(&primal, &v.src, &v.mesh).unwrap()
}

fn j(f: &FieldState, medium: &Medium, v: &VariationalProblem) -> f64 {
    functional::evaluate_functional(f, medium, &v.src, &v.mesh).unwrap().total
}

fn opts() -> SolveOptions {
    SolveOptions {
        relative_residual_tolerance: 1e-13,
        ..SolveOptions::default()
    }
}

fn minimum(v: &VariationalProblem) -> (FieldState, f64) {
    let (f, _) = solver::minimize_cg(v, &opts()).unwrap();
    let value = j(&f, &v.medium, v);
    (f, value)
}

/// ℒ + δI on every entity.
fn shifted(m: &Medium, delta: f64) -> Medium {
    let shift = |b: &CGBlock| {
        let n = b.half();
        CGBlock {
            a: &b.a + DMatrix::identity(n, n) * delta,
            b: b.b.clone(),
            d: &b.d + DMatrix::identity(n, n) * delta,
        }
    };
    Medium {
        cell_blocks: m.cell_blocks.iter().map(shift).collect(),
        node_blocks: m.node_blocks.iter().map(shift).collect(),
        tensors: None,
        ..m.clone()
    }
}

fn rod_problem(physics: Physics, seed: u64) -> VariationalProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VariationalProblem::from_physical(&random_rod(physics, true, &mut rng)).unwrap()
}

fn scalar_block(v: f64) -> CGBlock {
    CGBlock {
        a: DMatrix::from_element(1, 1, v),
        b: DMatrix::zeros(1, 1),
        d: DMatrix::from_element(1, 1, v),
    }
}

#[test]
fn scalar_polarization() {
    let mesh = Mesh::interval(0.0, 1.0, 1).unwrap();
    let layout = Layout::new(Physics::Elastic, &mesh).unwrap();
    let l = Medium::uniform(layout, 1.0, &scalar_block(2.0), &scalar_block(2.0)).unwrap();
    let l0 = Medium::uniform(layout, 1.0, &scalar_block(1.0), &scalar_block(1.0)).unwrap();
    let primal = PrimalFields {
        potential: vec![0.0; 2],
        flux: vec![0.0],
        trace: vec![0.0; 2],
    };
    let f = FieldState {
        layout,
        values: vec![3.0; layout.field_len()],
        primal,
    };
    let t = hs::exact_polarization(&f, &l, &l0).unwrap();
    assert!(t.values.iter().all(|&v| v == 3.0));
}

#[test]
fn identical_comparison_medium_is_singular() {
    let v = rod_problem(Physics::Elastic, 1);
    let f = random_state(&v, &mut ChaCha8Rng::seed_from_u64(2));
    let err = hs::exact_polarization(&f, &v.medium, &v.medium).unwrap_err();
    assert!(err.to_string().contains("cell 0"), "{err}");
}

#[test]
fn polarization_reproduces_the_constitutive_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for physics in ALL_PHYSICS {
        let v = rod_problem(physics, rng.random());
        let cm = ComparisonMedium::from_moduli(&random_moduli(physics, v.omega(), &mut rng)).unwrap();
        let l0 = cm.medium(v.layout(), v.omega()).unwrap();
        let f = random_state(&v, &mut rng);
        let t = hs::exact_polarization(&f, &v.medium, &l0).unwrap();
        let g = v.medium.apply(&f.values).unwrap();
        let mut g_hs = l0.apply(&f.values).unwrap();
        linalg::axpy(1.0, &t.values, &mut g_hs);
        let scale = linalg::norm(&g);
        for (a, b) in g.iter().zip(&g_hs) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn zero_polarization_gives_the_comparison_functional() {
    let v = rod_problem(Physics::Acoustic, 4);
    let l0 = v.medium.scaled(2.0);
    let f = random_state(&v, &mut ChaCha8Rng::seed_from_u64(5));
    let t = Polarization::zeros(v.layout());
    let value = hs::evaluate_hs(&v.mesh, &f, &t, &v.medium, &l0, &v.src).unwrap();
    let expected = j(&f, &l0, &v);
    assert!((value - expected).abs() <= 1e-12 * expected.abs().max(1.0));
}

#[test]
fn bound_classification() {
    let v = rod_problem(Physics::Elastic, 6);
    let l = &v.medium;
    assert_eq!(hs::classify_bound(l, &l.scaled(2.0)).unwrap(), BoundClass::MinimumPrinciple);
    assert_eq!(hs::classify_bound(l, &l.scaled(0.5)).unwrap(), BoundClass::SaddlePrinciple);
    let mut mixed = l.scaled(2.0);
    mixed.node_blocks = l.scaled(0.5).node_blocks;
    assert_eq!(hs::classify_bound(l, &mixed).unwrap(), BoundClass::Indefinite);
}

#[test]
fn upper_bound_over_random_polarizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for physics in ALL_PHYSICS {
        let v = rod_problem(physics, rng.random());
        let (_, j_min) = minimum(&v);
        let l0 = v.medium.scaled(2.0);
        assert_eq!(hs::classify_bound(&v.medium, &l0).unwrap(), BoundClass::MinimumPrinciple);
        for _ in 0..20 {
            let t = Polarization::new(v.layout(), random_vec(v.layout().field_len(), &mut rng)).unwrap();
            let (_, value, report) = hs::hs_field_minimum(&v.mesh, &v.medium, &l0, &v.src, &v.bc, &t, &opts()).unwrap();
            assert!(report.converged);
            assert!(value >= j_min - 1e-10 * j_min.abs().max(1.0), "{value} < {j_min}");
        }
    }
}

#[test]
fn lower_bound_over_random_polarizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for physics in ALL_PHYSICS {
        let v = rod_problem(physics, rng.random());
        let (f_min, j_min) = minimum(&v);
        let l0 = v.medium.scaled(0.5);
        assert_eq!(hs::classify_bound(&v.medium, &l0).unwrap(), BoundClass::SaddlePrinciple);
        let tol = 1e-10 * j_min.abs().max(1.0);
        for _ in 0..20 {
            let t = Polarization::new(v.layout(), random_vec(v.layout().field_len(), &mut rng)).unwrap();
            let at_min = hs::evaluate_hs(&v.mesh, &f_min, &t, &v.medium, &l0, &v.src).unwrap();
            assert!(at_min <= j_min + tol, "{at_min} > {j_min}");
            let (_, inf, _) = hs::hs_field_minimum(&v.mesh, &v.medium, &l0, &v.src, &v.bc, &t, &opts()).unwrap();
            assert!(inf <= j_min + tol);
        }
        let exact = hs::exact_polarization(&f_min, &v.medium, &l0).unwrap();
        let at_exact = hs::evaluate_hs(&v.mesh, &f_min, &exact, &v.medium, &l0, &v.src).unwrap();
        assert!((at_exact - j_min).abs() <= tol);
    }
}

fn comparison_solution(v: &VariationalProblem, l0: &Medium) -> FieldState {
    let cv = VariationalProblem::new(v.mesh.clone(), l0.clone(), v.src.clone(), v.bc.clone()).unwrap();
    solver::minimize_cg(&cv, &opts()).unwrap().0
}

#[test]
fn condensed_toy_problem_is_solved_densely() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for physics in ALL_PHYSICS {
        let p = rod(
            physics,
            vec![random_moduli(physics, 1.3, &mut rng)],
            Mesh::interval(0.0, 1.0, 3).unwrap(),
            1.3,
            Ends::Mixed,
        );
        let v = VariationalProblem::from_physical(&p).unwrap();
        let l0 = v.medium.scaled(2.0);
        let f0 = comparison_solution(&v, &l0);
        let h0 = DiscreteH0::new(&v.mesh, &l0, &v.src, &v.bc).unwrap();
        let cond = Condensed::on_mesh(&v.mesh, &v.medium, &l0, &v.src, &f0, &h0).unwrap();

        let m = cond.weighted_matrix().unwrap();
        assert!(linalg::is_symmetric(&m, 1e-10));

        let dense = cond.solve(CondensedMethod::Dense, 0.0, 0).unwrap();
        let f0_norm = linalg::norm(&f0.values);
        assert!(dense.evaluation.residual_norm <= 1e-9 * f0_norm);

        let cg = cond.solve(CondensedMethod::ConjugateGradient, 1e-13, 1000).unwrap();
        assert!(cg.converged);
        assert!(cg.evaluation.residual_norm <= 1e-9 * f0_norm);
        let (_, j_min) = minimum(&v);
        assert!((dense.evaluation.value - j_min).abs() <= 1e-9 * j_min.abs().max(1.0));
    }
}

#[test]
fn condensed_value_at_zero_is_the_comparison_functional() {
    let v = rod_problem(Physics::Elastic, 10);
    let l0 = v.medium.scaled(2.0);
    let f0 = comparison_solution(&v, &l0);
    let h0 = DiscreteH0::new(&v.mesh, &l0, &v.src, &v.bc).unwrap();
    let cond = Condensed::on_mesh(&v.mesh, &v.medium, &l0, &v.src, &f0, &h0).unwrap();
    let e = cond.evaluate(&vec![0.0; f0.values.len()]).unwrap();
    let expected = j(&f0, &l0, &v);
    assert!((e.value - expected).abs() <= 1e-12 * expected.abs().max(1.0));
}

#[test]
fn weighted_h0_is_symmetric_and_nonnegative() {
    let v = rod_problem(Physics::Electromagnetic, 11);
    let l0 = v.medium.scaled(1.5);
    let h0 = DiscreteH0::new(&v.mesh, &l0, &v.src, &v.bc).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = v.layout().field_len();
    let w = h0.weights().to_vec();
    let winner = |a: &[f64], b: &[f64]| -> f64 { w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum() };
    for _ in 0..10 {
        let (a, b) = (random_vec(n, &mut rng), random_vec(n, &mut rng));
        let (ha, hb) = (h0.apply(&a).unwrap(), h0.apply(&b).unwrap());
        let (ab, ba) = (winner(&a, &hb), winner(&b, &ha));
        assert!((ab - ba).abs() <= 1e-10 * ab.abs().max(1e-3));
        assert!(winner(&a, &ha) >= 0.0);
    }
}

#[test]
fn shifted_comparison_medium_reproduces_the_primal_solution() {
    for physics in ALL_PHYSICS {
        let v = VariationalProblem::from_physical(&standard_rod(physics, Ends::Mixed)).unwrap();
        let (f_min, j_min) = minimum(&v);
        let l0 = shifted(&v.medium, 0.5);
        let f0 = comparison_solution(&v, &l0);
        let h0 = DiscreteH0::new(&v.mesh, &l0, &v.src, &v.bc).unwrap();
        let cond = Condensed::on_mesh(&v.mesh, &v.medium, &l0, &v.src, &f0, &h0).unwrap();
        assert_eq!(cond.class, BoundClass::MinimumPrinciple);
        let sol = cond.solve(CondensedMethod::ConjugateGradient, 1e-12, 5000).unwrap();
        assert!(sol.converged);
        let f = cond.field(&sol.t).unwrap();
        let scale = linalg::norm(&f_min.values);
        let err = f.iter().zip(&f_min.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6 * scale, "{physics:?}: {err:e}");
        assert!((sol.evaluation.value - j_min).abs() <= 1e-8 * j_min.abs().max(1.0));
    }
}

#[test]
fn polarization_table_round_trip() {
    let v = rod_problem(Physics::Acoustic, 13);
    let t = Polarization::new(v.layout(), random_vec(v.layout().field_len(), &mut ChaCha8Rng::seed_from_u64(14)))
        .unwrap();
    let mut buf = Vec::new();
    wavemin::fields::table::write_field_rows(&t.rows(), &mut buf).unwrap();
    let rows = wavemin::fields::table::read_field_rows(buf.as_slice()).unwrap();
    assert_eq!(Polarization::from_rows(v.layout(), &rows).unwrap(), t);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn exact_polarization_closes_the_bound(seed in any::<u64>(), scale in 0.2f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let physics = ALL_PHYSICS[rng.random_range(0..3)];
        let v = rod_problem(physics, rng.random());
        prop_assume!((scale - 1.0).abs() > 0.05);
        let l0 = v.medium.scaled(scale);
        let f = random_state(&v, &mut rng);
        let t = hs::exact_polarization(&f, &v.medium, &l0).unwrap();
        let value = hs::evaluate_hs(&v.mesh, &f, &t, &v.medium, &l0, &v.src).unwrap();
        let expected = j(&f, &v.medium, &v);
        let size = v.medium.energy(&v.mesh, &f.values) + expected.abs();
        prop_assert!((value - expected).abs() <= 1e-12 * size.max(1.0));
    }
}
