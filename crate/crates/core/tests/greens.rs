use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavemin::greens::{
    branch_eigen, greens_evaluate, plane_wave_profile, sphere_integrals, write_greens_table, Comparison3d, EigenBranch,
    InfiniteMedium, SphereOrder, VoxelCloud,
};
use wavemin::hs::{BoundClass, CondensedMethod, ComparisonMedium, Condensed, H0Applier};
use wavemin::{linalg, Error};

fn eye(k: usize, v: f64) -> DMatrix<f64> {
    DMatrix::identity(k, k) * v
}

/// Decoupled scalar comparison medium: d∇²u' − ω²q u' + f = 0.
fn scalar(d: f64, q: f64) -> Comparison3d {
    let cm = ComparisonMedium::from_dq(eye(3, 0.0), eye(3, d), eye(3, d), eye(1, 0.0), eye(1, -q), eye(1, -q)).unwrap();
    Comparison3d::new(cm).unwrap()
}

fn isotropic(lambda: f64, mu: f64) -> DMatrix<f64> {
    let mut c = eye(6, 2.0 * mu);
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] += lambda;
        }
    }
    c
}

fn random_spd<R: Rng>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / k as f64 + eye(k, 0.5)
}

fn random_sym<R: Rng>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-0.5..0.5));
    (&a + a.transpose()) * 0.5
}

/// Fully coupled comparison medium with random admissible D/Q blocks.
fn random_medium(elastic: bool, seed: u64) -> Comparison3d {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = if elastic { (6, 3) } else { (3, 1) };
    let cm = ComparisonMedium::from_dq(
        random_sym(m, &mut rng),
        random_spd(m, &mut rng),
        random_spd(m, &mut rng),
        random_sym(n, &mut rng),
        -random_spd(n, &mut rng),
        -random_spd(n, &mut rng),
    )
    .unwrap();
    Comparison3d::new(cm).unwrap()
}

fn random_direction<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() < 1.0 {
            let v = v.normalize();
            return [v[0], v[1], v[2]];
        }
    }
}

fn cmat(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn cmax(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// det(ℒ₀ − c²𝒬₀) relative to the product of row norms (Hadamard bound).
fn relative_determinant(l0: &DMatrix<f64>, q0: &DMatrix<f64>, c2: Complex64) -> f64 {
    let m = cmat(l0) - cmat(q0) * c2;
    let bound: f64 = m.row_iter().map(|r| r.norm()).product();
    m.determinant().norm() / bound.max(f64::MIN_POSITIVE)
}

fn check_branches(cm: &Comparison3d, xi: [f64; 3], branches: &[EigenBranch]) {
    let dir = Vector3::from(xi);
    let l0 = cm.l0(&dir);
    let (l0c, q0c) = (cmat(&l0), cmat(&cm.q0));
    let scale = linalg::max_abs(&l0) + linalg::max_abs(&cm.q0);
    assert_eq!(branches.len(), cm.size());
    let mut completeness = DMatrix::<Complex64>::zeros(cm.size(), cm.size());
    let mut inverse = DMatrix::<Complex64>::zeros(cm.size(), cm.size());
    for b in branches {
        assert!(b.c.im > 0.0, "c = {}", b.c);
        assert!((b.c * b.c - b.c2).norm() <= 1e-12 * b.c2.norm());
        if b.c2.im == 0.0 {
            assert!(b.c2.re < 0.0, "real eigenvalue {} is not negative", b.c2);
        } else {
            let partner = branches.iter().any(|o| (o.c2 - b.c2.conj()).norm() <= 1e-12 * b.c2.norm());
            assert!(partner, "no conjugate partner for {}", b.c2);
        }
        let r = &l0c * &b.u - &q0c * &b.u * b.c2;
        assert!(cmax(&DMatrix::from_column_slice(r.len(), 1, r.as_slice())) <= 1e-10 * scale * (1.0 + b.c2.norm()));
        assert!((b.norm - 1.0).norm() <= 1e-12);
        assert!(relative_determinant(&l0, &cm.q0, b.c2) <= 1e-10);
        completeness += &b.u * b.u.transpose() * &q0c;
        inverse += &b.u * b.u.transpose() / b.c2;
    }
    let id = DMatrix::<Complex64>::identity(cm.size(), cm.size());
    assert!(cmax(&(completeness - id)) <= 1e-10);
    let l0_inv = cmat(&linalg::inverse(&l0, "ℒ₀").unwrap());
    assert!(cmax(&(inverse - &l0_inv)) <= 1e-10 * cmax(&l0_inv));
}

#[test]
fn isotropic_elastic_branch_speeds() {
    let c = isotropic(2.0, 1.0);
    let cm = ComparisonMedium::from_dq(eye(6, 0.0), c.clone(), c, eye(3, 0.0), eye(3, -1.0), eye(3, -1.0)).unwrap();
    let cm = Comparison3d::new(cm).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for xi in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], random_direction(&mut rng)] {
        let b = branch_eigen(xi, &cm).unwrap();
        let c2: Vec<f64> = b.iter().map(|b| b.c2.re).collect();
        for (got, want) in c2.iter().zip([-4.0, -4.0, -1.0, -1.0, -1.0, -1.0]) {
            assert!((got - want).abs() < 1e-12, "{c2:?}");
        }
        assert!(b.iter().all(|b| b.c2.im == 0.0));
        check_branches(&cm, xi, &b);
    }
}

#[test]
fn random_media_branches_over_fifty_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (k, elastic) in [(0, true), (1, true), (2, false)] {
        let cm = random_medium(elastic, 100 + k);
        for _ in 0..50 {
            let xi = random_direction(&mut rng);
            let b = branch_eigen(xi, &cm).unwrap();
            check_branches(&cm, xi, &b);
            let keys: Vec<(f64, f64)> = b.iter().map(|b| (b.c2.re, b.c2.im)).collect();
            assert!(keys.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn non_unit_direction_is_rejected() {
    assert!(matches!(branch_eigen([1.0, 1.0, 0.0], &scalar(1.0, 1.0)), Err(Error::Validation(_))));
}

/// Sixth-order central second difference.
fn second_difference(f: impl Fn(f64) -> Complex64, s: f64, h: f64) -> Complex64 {
    let c = [-49.0 / 18.0, 1.5, -0.15, 1.0 / 90.0];
    let mut d = f(s) * c[0];
    for k in 1..4 {
        d += (f(s + k as f64 * h) + f(s - k as f64 * h)) * c[k];
    }
    d / (h * h)
}

#[test]
fn plane_wave_profile_values_and_ode() {
    let cm = scalar(1.0, 1.0);
    let b = &branch_eigen([0.0, 1.0, 0.0], &cm).unwrap()[0];
    let one = Complex64::new(1.0, 0.0);
    assert!((plane_wave_profile(b, 0.0, 1.0, one).unwrap() + 0.5).norm() < 1e-15);
    assert!((plane_wave_profile(b, 1.0, 1.0, one).unwrap() - (-0.18393972058572117)).norm() < 1e-12);

    let mut lossy = b.clone();
    lossy.c = Complex64::new(0.8, 0.5);
    lossy.c2 = lossy.c * lossy.c;
    let load = Complex64::new(0.3, -1.2);
    for omega in [0.7, 2.0] {
        let phi = |s: f64| plane_wave_profile(&lossy, s, omega, load).unwrap();
        for s in [0.4, -1.1, 2.5] {
            let r = lossy.c2 * second_difference(phi, s, 1e-2) + phi(s) * omega * omega;
            assert!(r.norm() <= 1e-10 * omega * omega * phi(s).norm(), "residual {r}");
        }
        assert!(phi(10.0).norm() < phi(1.0).norm());
    }
    let mut growing = lossy.clone();
    growing.c = Complex64::new(0.8, 0.0);
    assert!(plane_wave_profile(&growing, 0.0, 1.0, one).is_err());
}

fn modified_helmholtz(d: f64, q: f64, omega: f64, r: f64) -> f64 {
    (-omega * (q / d).sqrt() * r).exp() / (4.0 * PI * d * r)
}

#[test]
fn scalar_surrogate_matches_closed_form() {
    let cm = scalar(1.0, 1.0);
    let g = greens_evaluate([1.0, 0.0, 0.0], 1.0, &cm, SphereOrder::default()).unwrap();
    assert!((g.matrix[(0, 0)] - 0.029274915762159584).abs() < 1e-6);
    for r in [0.5, 1.0, 2.0] {
        for dir in [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.48, -0.6, 0.64]] {
            let x = dir.map(|v| v * r);
            let g = greens_evaluate(x, 1.0, &cm, SphereOrder::default()).unwrap();
            let want = modified_helmholtz(1.0, 1.0, 1.0, r);
            assert!((g.matrix[(0, 0)] - want).abs() <= 1e-6, "r = {r}: {} vs {want}", g.matrix[(0, 0)]);
            assert!((g.matrix[(1, 1)] + want).abs() <= 1e-6);
            assert!(g.matrix[(0, 1)].abs() <= 1e-12);
            assert!((g.g2[(0, 0)] - want).abs() <= 1e-6 && (g.g3[(0, 0)] - want).abs() <= 1e-6);
        }
    }
    let cm = scalar(2.0, 3.0);
    let g = greens_evaluate([0.3, 0.4, 0.0], 1.5, &cm, SphereOrder::default()).unwrap();
    assert!((g.matrix[(0, 0)] - modified_helmholtz(2.0, 3.0, 1.5, 0.5)).abs() <= 1e-6);
}

#[test]
fn static_limit_is_the_delta_term() {
    let g = greens_evaluate([0.0, 2.0, 0.0], 1e-7, &scalar(1.0, 1.0), SphereOrder::default()).unwrap();
    let want = 1.0 / (4.0 * PI * 2.0);
    assert!((g.matrix[(0, 0)] - want).abs() <= 1e-6 * want);
}

fn decay_length(cm: &Comparison3d, omega: f64) -> f64 {
    sphere_integrals(omega, cm, SphereOrder::default()).unwrap().min_decay_length
}

#[test]
fn greens_function_is_real_symmetric_and_even() {
    for (elastic, seed) in [(true, 5), (false, 6)] {
        let cm = random_medium(elastic, seed);
        let ell = decay_length(&cm, 1.3);
        let x = [0.3 * ell, -0.5 * ell, 0.6 * ell];
        let g = greens_evaluate(x, 1.3, &cm, SphereOrder::default()).unwrap();
        assert!(g.imaginary_residue <= 1e-10, "residue {}", g.imaginary_residue);
        assert!(linalg::is_symmetric(&g.matrix, 1e-12));
        let minus = greens_evaluate(x.map(|v| -v), 1.3, &cm, SphereOrder::default()).unwrap();
        assert_eq!(g.matrix, minus.matrix);
    }
}

#[test]
fn doubling_the_quadrature_changes_little() {
    for (elastic, seed) in [(true, 7), (false, 8)] {
        let cm = random_medium(elastic, seed);
        let omega = 0.9;
        let ell = decay_length(&cm, omega);
        for r in [0.5, 2.0] {
            let x = [0.2 * r * ell, 0.4 * r * ell, (1.0f64 - 0.2).sqrt() * r * ell];
            let g = greens_evaluate(x, omega, &cm, SphereOrder::default()).unwrap();
            let g2 = greens_evaluate(x, omega, &cm, SphereOrder::default().doubled()).unwrap();
            let diff = linalg::max_abs(&(&g.matrix - &g2.matrix));
            assert!(diff <= 1e-8 * linalg::max_abs(&g2.matrix), "r = {r}: {diff:e}");
        }
    }
}

/// Σ K_jl ∂_j∂_l 𝒢₀ + ω²𝒬₀𝒢₀ by central differences, relative to the
/// size of its two terms.
fn field_equation_residual(cm: &Comparison3d, omega: f64, x: Vector3<f64>, h: f64) -> f64 {
    let g = |d: Vector3<f64>| {
        let p = x + d;
        greens_evaluate([p[0], p[1], p[2]], omega, cm, SphereOrder::default()).unwrap().matrix
    };
    let e = |k: usize| Vector3::ith(k, h);
    let g0 = g(Vector3::zeros());
    let mut op = DMatrix::zeros(cm.size(), cm.size());
    let mut mag = 0.0f64;
    for j in 0..3 {
        for l in 0..3 {
            let d2 = if j == l {
                (g(e(j)) - &g0 * 2.0 + g(-e(j))) / (h * h)
            } else {
                (g(e(j) + e(l)) - g(e(j) - e(l)) - g(e(l) - e(j)) + g(-e(j) - e(l))) / (4.0 * h * h)
            };
            let term = cm.second_order_coefficient(j, l) * d2;
            mag = mag.max(linalg::max_abs(&term));
            op += term;
        }
    }
    let mass = &cm.q0 * &g0 * (omega * omega);
    mag = mag.max(linalg::max_abs(&mass));
    linalg::max_abs(&(op + mass)) / mag
}

#[test]
fn greens_function_satisfies_the_field_equation() {
    for (elastic, seed) in [(false, 9), (true, 10)] {
        let cm = random_medium(elastic, seed);
        let omega = 1.1;
        let ell = decay_length(&cm, omega);
        let x = Vector3::new(0.36, -0.48, 0.8) * ell;
        let r = field_equation_residual(&cm, omega, x, 1e-3);
        assert!(r <= 1e-4, "relative residual {r:e}");
    }
}

#[test]
fn voxel_cloud_nodes_and_corners() {
    let cloud = VoxelCloud::new(0.5, vec![[0, 0, 0], [1, 0, 0], [2, 0, 0]]).unwrap();
    assert_eq!(cloud.nodes.len(), 16);
    assert_eq!(cloud.corners[0][1], cloud.corners[1][0]);
    assert_eq!(cloud.corners[1][7], cloud.corners[2][6]);
    let p = cloud.node_position(cloud.corners[2][7]);
    assert_eq!([p[0], p[1], p[2]], [1.25, 0.25, 0.25]);
    assert!(VoxelCloud::new(0.5, vec![[0, 0, 0], [0, 0, 0]]).is_err());
    assert!(VoxelCloud::new(0.0, vec![[0, 0, 0]]).is_err());
}

fn row_of_three(cm: Comparison3d, omega: f64, h: f64) -> InfiniteMedium {
    let cloud = VoxelCloud::new(h, vec![[0, 0, 0], [1, 0, 0], [1, 1, 0]]).unwrap();
    InfiniteMedium::new(cm, omega, cloud, SphereOrder::default()).unwrap()
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn zero_polarization_and_force_give_zero_fields() {
    let med = row_of_three(random_medium(false, 12), 1.0, 0.1);
    let zero = vec![0.0; med.field_len()];
    let sol = med.solve(&zero, None).unwrap();
    assert!(sol.field.iter().chain(&sol.u).all(|v| *v == 0.0));
    assert!(med.apply_h0(&zero).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn point_force_gives_the_greens_function() {
    let cm = scalar(1.0, 1.0);
    let h = 0.1;
    let cloud = VoxelCloud::new(h, vec![[0, 0, 0]]).unwrap();
    let med = InfiniteMedium::new(cm.clone(), 1.0, cloud, SphereOrder::default()).unwrap();
    let n_nodes = med.cloud.nodes.len();
    let a = 3;
    let f0 = [0.7, -0.2];
    let mut source = vec![0.0; 2 * n_nodes];
    source[2 * a] = f0[0] / h.powi(3);
    source[2 * a + 1] = f0[1] / h.powi(3);
    let xa = med.cloud.node_position(a);
    let x = xa + Vector3::new(0.6, -0.3, 0.75);
    let u = med.displacement_at([x[0], x[1], x[2]], &source).unwrap();
    let d = x - xa;
    let g = greens_evaluate([d[0], d[1], d[2]], 1.0, &cm, SphereOrder::default()).unwrap();
    let want = linalg::mat_vec(&g.matrix, &f0);
    assert!(u.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-14));
    let closed = modified_helmholtz(1.0, 1.0, 1.0, d.norm());
    assert!((u[0] - closed * f0[0]).abs() <= 1e-6);
    assert!((u[1] + closed * f0[1]).abs() <= 1e-6);

    // at another node the cached matrix is used
    let b = med.cloud.corners[0][7];
    let xb = med.cloud.node_position(b);
    let ub = med.displacement_at([xb[0], xb[1], xb[2]], &source).unwrap();
    let d = xb - xa;
    let g = greens_evaluate([d[0], d[1], d[2]], 1.0, &cm, SphereOrder::default()).unwrap();
    let want = linalg::mat_vec(&g.matrix, &f0);
    assert!(ub.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12));
}

#[test]
fn body_force_enters_the_effective_force() {
    let med = row_of_three(random_medium(true, 13), 1.0, 0.2);
    let n = med.cloud.nodes.len() * 3;
    let f: Vec<Complex64> = random_vec(2 * n, 14).chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let sol = med.solve(&vec![0.0; med.field_len()], Some(&f)).unwrap();
    for (a, z) in f.iter().enumerate() {
        let (node, k) = (a / 3, a % 3);
        assert_eq!(sol.source[node * 6 + k], z.im);
        assert_eq!(sol.source[node * 6 + 3 + k], z.re);
    }
    assert!(med.solve(&vec![0.0; med.field_len()], Some(&f[1..])).is_err());
}

#[test]
fn block_formula_matches_the_solve_route() {
    for (elastic, seed) in [(false, 15), (true, 16)] {
        let med = row_of_three(random_medium(elastic, seed), 1.2, 0.15);
        let t = random_vec(med.field_len(), seed + 100);
        let h0t = med.apply_h0(&t).unwrap();
        let sol = med.solve(&t, None).unwrap();
        let scale = linalg::norm(&h0t);
        let diff: Vec<f64> = h0t.iter().zip(&sol.field).map(|(a, b)| a + b).collect();
        assert!(linalg::norm(&diff) <= 1e-8 * scale, "{:e}", linalg::norm(&diff) / scale);
    }
}

fn h0_matrix(med: &InfiniteMedium) -> DMatrix<f64> {
    let n = med.field_len();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        m.set_column(j, &DVector::from_vec(med.apply_h0(&e).unwrap()));
        e[j] = 0.0;
    }
    m
}

#[test]
fn h0_on_three_voxels_is_symmetric() {
    for (elastic, seed) in [(false, 17), (true, 18)] {
        let med = row_of_three(random_medium(elastic, seed), 0.8, 0.2);
        let w = med.weights()[0];
        let m = h0_matrix(&med) * w;
        let asym = linalg::max_abs(&(&m - m.transpose()));
        assert!(asym <= 1e-8 * linalg::max_abs(&m), "{:e}", asym / linalg::max_abs(&m));
    }
}

#[test]
fn condensed_problem_on_three_voxels() {
    let cm = random_medium(true, 19);
    let med = row_of_three(cm.clone(), 1.0, 0.2);
    let n = med.cloud.nodes.len() * 3;
    let f: Vec<Complex64> = random_vec(2 * n, 20).chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let f0 = med.solve(&vec![0.0; med.field_len()], Some(&f)).unwrap().field;

    let cell0 = cm.medium.cell.matrix();
    let node0 = cm.medium.node.matrix();
    let cells = vec![&cell0 * 0.5; 3];
    let nodes = vec![&node0 * 0.5; med.cloud.nodes.len()];
    let (dinv, class) = med.difference_inverse(&cells, &nodes).unwrap();
    assert_eq!(class, BoundClass::MinimumPrinciple);
    let condensed = Condensed {
        h0: &med,
        dinv,
        f0: f0.clone(),
        comparison_value: 0.0,
        class,
    };
    let sol = condensed.solve(CondensedMethod::Dense, 0.0, 0).unwrap();
    assert!(sol.evaluation.residual_norm <= 1e-9 * linalg::norm(&f0));

    let same = vec![cell0.clone(); 3];
    let err = med.difference_inverse(&same, &nodes).unwrap_err();
    assert!(matches!(err, Error::Singular(ref s) if s.contains("voxel 0")));
}

#[test]
fn coarse_voxels_raise_a_warning() {
    let cm = scalar(1.0, 1.0);
    let fine = InfiniteMedium::new(cm.clone(), 1.0, VoxelCloud::new(0.2, vec![[0, 0, 0]]).unwrap(), SphereOrder::default());
    assert!(fine.unwrap().warnings.is_empty());
    let coarse = InfiniteMedium::new(cm, 1.0, VoxelCloud::new(0.5, vec![[0, 0, 0]]).unwrap(), SphereOrder::default());
    assert_eq!(coarse.unwrap().warnings.len(), 1);
}

#[test]
fn greens_table_rows() {
    let cm = scalar(1.0, 1.0);
    let evals: Vec<_> = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]
        .iter()
        .map(|x| greens_evaluate(*x, 1.0, &cm, SphereOrder::default()).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_greens_table(&evals, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,z,row,col,value");
    assert_eq!(lines.len(), 1 + 2 * 4);
    let first: Vec<&str> = lines[1].split(',').collect();
    let v: f64 = first[5].parse().unwrap();
    assert!((v - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn branches_are_complete(seed in 0u64..1000, a in -1.0f64..1.0, b in 0.0f64..6.28) {
        let cm = random_medium(seed % 2 == 0, seed);
        let s = (1.0 - a * a).sqrt();
        let xi = [s * b.cos(), s * b.sin(), a];
        let branches = branch_eigen(xi, &cm).unwrap();
        check_branches(&cm, xi, &branches);
    }
}
