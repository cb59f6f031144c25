#![allow(dead_code)]

use num_complex::Complex64;
use wavemin::fields::{Mesh, PhysicalCondition};
use wavemin::moduli::{ComplexModuli, Physics, TimeConvention};
use wavemin::solver::PhysicalProblem;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ends {
    Dirichlet,
    Neumann,
    Mixed,
}

pub const ALL_ENDS: [Ends; 3] = [Ends::Dirichlet, Ends::Neumann, Ends::Mixed];

pub fn ends(kind: Ends) -> Vec<PhysicalCondition> {
    match kind {
        Ends::Dirichlet => vec![PhysicalCondition::Potential(c(1.0, 0.0)), PhysicalCondition::Potential(c(0.0, 0.0))],
        Ends::Neumann => vec![PhysicalCondition::Trace(c(-1.0, 0.0)), PhysicalCondition::Trace(c(0.0, 0.5))],
        Ends::Mixed => vec![PhysicalCondition::Potential(c(1.0, 0.0)), PhysicalCondition::Trace(c(0.5, 0.0))],
    }
}

/// Physical moduli used for the one-dimensional test problems.
pub fn rod_moduli(physics: Physics, omega: f64) -> ComplexModuli {
    match physics {
        Physics::Elastic => ComplexModuli::scalar(physics, 1, c(1.0, 0.5), c(1.0, -0.2), omega).unwrap(),
        Physics::Acoustic => ComplexModuli::scalar(physics, 1, c(1.0, -0.4), c(1.0, 0.3), omega).unwrap(),
        Physics::Electromagnetic => ComplexModuli::electromagnetic(
            nalgebra::DMatrix::from_element(1, 1, c(1.0, 0.3)),
            nalgebra::DMatrix::from_element(1, 1, c(1.0, 0.2)),
            omega,
            TimeConvention::MinusIOmegaT,
        )
        .unwrap(),
    }
}

pub fn rod(physics: Physics, moduli: Vec<ComplexModuli>, mesh: Mesh, omega: f64, kind: Ends) -> PhysicalProblem {
    let n = match physics {
        Physics::Acoustic => mesh.n_cells(),
        _ => mesh.n_nodes(),
    };
    PhysicalProblem::new(mesh, physics, omega, moduli, vec![c(0.0, 0.0); n], ends(kind)).unwrap()
}

/// 101-node rod on [0, 1] with the standard moduli.
pub fn standard_rod(physics: Physics, kind: Ends) -> PhysicalProblem {
    let omega = 2.0;
    rod(physics, vec![rod_moduli(physics, omega)], Mesh::interval(0.0, 1.0, 100).unwrap(), omega, kind)
}

/// Strictly passive scalar moduli with real parts of either sign.
pub fn random_moduli<R: rand::Rng>(physics: Physics, omega: f64, rng: &mut R) -> ComplexModuli {
    let mut draw = |sign: f64| {
        let re = rng.random_range(-2.0..2.0);
        let im = sign * rng.random_range(0.1..1.0);
        c(re, im)
    };
    let primal = draw(physics.primal_loss_sign());
    let dual = draw(physics.dual_loss_sign());
    ComplexModuli::scalar(physics, 1, primal, dual, omega).unwrap()
}

pub fn random_complex<R: rand::Rng>(rng: &mut R) -> Complex64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Random two-region rod with random end conditions and, optionally, a
/// random body source.
pub fn random_rod<R: rand::Rng>(physics: Physics, with_body: bool, rng: &mut R) -> PhysicalProblem {
    let omega = rng.random_range(0.5..3.0);
    let n_cells = rng.random_range(8..40);
    let split = rng.random_range(0.2..0.8);
    let mesh = Mesh::interval(0.0, 1.0, n_cells)
        .unwrap()
        .with_regions(|p| if p[0] < split { "a".into() } else { "b".into() })
        .unwrap();
    let regions = (0..mesh.regions().len()).map(|_| random_moduli(physics, omega, rng)).collect();
    let conditions = (0..2)
        .map(|_| {
            let z = random_complex(rng);
            if rng.random_bool(0.5) {
                PhysicalCondition::Potential(z)
            } else {
                PhysicalCondition::Trace(z)
            }
        })
        .collect();
    let n = match physics {
        Physics::Acoustic => mesh.n_cells(),
        _ => mesh.n_nodes(),
    };
    let body = (0..n)
        .map(|_| if with_body { random_complex(rng) } else { c(0.0, 0.0) })
        .collect();
    PhysicalProblem::new(mesh, physics, omega, regions, body, conditions).unwrap()
}

pub const ALL_PHYSICS: [Physics; 3] = [Physics::Elastic, Physics::Acoustic, Physics::Electromagnetic];

fn random_symmetric<R: rand::Rng>(k: usize, rng: &mut R) -> nalgebra::DMatrix<f64> {
    let a = nalgebra::DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn random_spd<R: rand::Rng>(k: usize, rng: &mut R) -> nalgebra::DMatrix<f64> {
    let a = nalgebra::DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + nalgebra::DMatrix::identity(k, k) * 0.1
}

/// Strictly passive k×k tensor moduli with random real parts.
pub fn random_tensor_moduli<R: rand::Rng>(physics: Physics, k: usize, omega: f64, rng: &mut R) -> ComplexModuli {
    let mut tensor = |sign: f64| {
        let re = random_symmetric(k, rng) * 2.0;
        let im = random_spd(k, rng) * sign;
        wavemin::linalg::join_complex(&re, &im)
    };
    let primal = tensor(physics.primal_loss_sign());
    let dual = tensor(physics.dual_loss_sign());
    ComplexModuli::new(physics, primal, dual, omega).unwrap()
}

/// (Z', P) pairs behind the two blocks: real part and sign-adjusted loss.
pub fn loss_pairs(m: &ComplexModuli) -> [(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>); 2] {
    [
        (m.primal_re(), m.primal_im() * m.physics.primal_loss_sign()),
        (m.dual_re(), m.dual_im() * m.physics.dual_loss_sign()),
    ]
}

fn pair_form(block: &wavemin::moduli::CGBlock, x: &[f64], y: &[f64]) -> f64 {
    let v: Vec<f64> = x.iter().chain(y).copied().collect();
    wavemin::linalg::bilinear(&block.matrix(), &v, &v)
}

/// |(x,y)B(x,y)ᵀ − [xPx + (Z'x − y)P⁻¹(Z'x − y)]| relative to the value.
pub fn quadratic_form_error(
    z: &nalgebra::DMatrix<f64>,
    p: &nalgebra::DMatrix<f64>,
    block: &wavemin::moduli::CGBlock,
    x: &[f64],
    y: &[f64],
) -> f64 {
    use wavemin::linalg::{bilinear, inverse, mat_vec};
    let lhs = pair_form(block, x, y);
    let r: Vec<f64> = mat_vec(z, x).iter().zip(y).map(|(a, b)| a - b).collect();
    let rhs = bilinear(p, x, x) + bilinear(&inverse(p, "P").unwrap(), &r, &r);
    (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE)
}

/// Legendre identity ½(x,w)[[P, Z'],[Z', −P]](x,w)ᵀ = min_y {y·w + ½(x,y)B(x,y)ᵀ}
/// with minimizer y = Z'x − Pw.  Returns the relative mismatch of the
/// values and the smallest increase over `probes` perturbed y (negative
/// means the claimed minimizer is beaten).
pub fn legendre_error(
    z: &nalgebra::DMatrix<f64>,
    p: &nalgebra::DMatrix<f64>,
    block: &wavemin::moduli::CGBlock,
    x: &[f64],
    w: &[f64],
    probes: &[Vec<f64>],
) -> (f64, f64) {
    use wavemin::linalg::{bilinear, dot, mat_vec};
    let xzw = bilinear(z, x, w);
    let (xpx, wpw) = (bilinear(p, x, x), bilinear(p, w, w));
    let lhs = 0.5 * xpx + xzw - 0.5 * wpw;
    let scale = 0.5 * xpx.abs() + xzw.abs() + 0.5 * wpw.abs();
    let y: Vec<f64> = mat_vec(z, x).iter().zip(mat_vec(p, w)).map(|(a, b)| a - b).collect();
    let value = |y: &[f64]| dot(y, w) + 0.5 * pair_form(block, x, y);
    let best = value(&y);
    let increase = probes
        .iter()
        .map(|d| {
            let yd: Vec<f64> = y.iter().zip(d).map(|(a, b)| a + b).collect();
            value(&yd) - best
        })
        .fold(f64::INFINITY, f64::min);
    ((lhs - best).abs() / scale.max(f64::MIN_POSITIVE), increase)
}

/// Elastic constitutive equivalence: with σ = Ce and p = iωρu, the blocks
/// map (e', σ') to (σ'', −e'') and (ωu', p'') to (p', ωu'').  Returns the
/// largest mismatch relative to the largest entry of G.
pub fn constitutive_error(m: &ComplexModuli, e: &[Complex64], u: &[Complex64]) -> f64 {
    use wavemin::linalg::cmat_vec;
    let (a, b) = wavemin::moduli::build_blocks(m, "sample").unwrap();
    let w = m.omega;
    let sigma = cmat_vec(&m.primal, e);
    let p: Vec<Complex64> = cmat_vec(&m.dual, u).iter().map(|z| Complex64::i() * w * z).collect();
    let f_a: Vec<f64> = e.iter().map(|z| z.re).chain(sigma.iter().map(|z| z.re)).collect();
    let g_a: Vec<f64> = sigma.iter().map(|z| z.im).chain(e.iter().map(|z| -z.im)).collect();
    let f_b: Vec<f64> = u.iter().map(|z| w * z.re).chain(p.iter().map(|z| z.im)).collect();
    let g_b: Vec<f64> = p.iter().map(|z| z.re).chain(u.iter().map(|z| w * z.im)).collect();
    let la = a.apply(&f_a);
    let lb = b.apply(&f_b);
    let scale = g_a.iter().chain(&g_b).fold(0.0f64, |s, v| s.max(v.abs()));
    la.iter()
        .zip(&g_a)
        .chain(lb.iter().zip(&g_b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}
