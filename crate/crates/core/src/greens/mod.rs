//! Green's function of a homogeneous comparison medium in three dimensions.
//!
//! The comparison medium is described by its D/Q blocks (see
//! [`ComparisonMedium`]).  With U = (u', u''), the field equation is
//!
//!   div(𝒟₀∇U) + ω²𝒬₀U + f̃ = 0,  𝒟₀ = [[D₂, D₁], [D₁ᵀ, −D₃]],
//!   𝒬₀ = [[Q₂, Q₁], [Q₁ᵀ, −Q₃]],
//!
//! and its Green's function is built from plane waves: for each direction ξ
//! the pencil ℒ₀(ξ)U = c²𝒬₀U gives branches whose one-dimensional decaying
//! solutions are superposed over the unit sphere.
//!
//! Two field kinds are supported: a scalar potential (gradient strain, D
//! blocks 3×3) and elastic displacement (Voigt strain with √2 on the shear
//! rows, D blocks 6×6).

pub mod quadrature;
pub mod voxel;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hs::ComparisonMedium;
use crate::linalg::{self, CMatrix};

pub use voxel::{InfiniteMedium, InfiniteSolution, VoxelCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    Elastic,
}

impl FieldKind {
    pub fn displacement_size(self) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Elastic => 3,
        }
    }

    pub fn strain_size(self) -> usize {
        match self {
            FieldKind::Scalar => 3,
            FieldKind::Elastic => 6,
        }
    }

    /// Strain of the displacement gradient ξ ⊗ u, as a matrix acting on u.
    pub fn strain_map(self, xi: &Vector3<f64>) -> DMatrix<f64> {
        match self {
            FieldKind::Scalar => DMatrix::from_column_slice(3, 1, xi.as_slice()),
            FieldKind::Elastic => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let mut e = DMatrix::zeros(6, 3);
                e[(0, 0)] = xi[0];
                e[(1, 1)] = xi[1];
                e[(2, 2)] = xi[2];
                e[(3, 1)] = s * xi[2];
                e[(3, 2)] = s * xi[1];
                e[(4, 0)] = s * xi[2];
                e[(4, 2)] = s * xi[0];
                e[(5, 0)] = s * xi[1];
                e[(5, 1)] = s * xi[0];
                e
            }
        }
    }
}

/// A comparison medium together with the assembled 𝒟₀ and 𝒬₀.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison3d {
    pub kind: FieldKind,
    pub medium: ComparisonMedium,
    pub d0: DMatrix<f64>,
    pub q0: DMatrix<f64>,
}

fn two_by_two(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, n)).copy_from(b);
    m.view_mut((n, 0), (n, n)).copy_from(c);
    m.view_mut((n, n), (n, n)).copy_from(d);
    m
}

fn block_diag2(e: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = e.shape();
    let mut m = DMatrix::zeros(2 * r, 2 * c);
    m.view_mut((0, 0), (r, c)).copy_from(e);
    m.view_mut((r, c), (r, c)).copy_from(e);
    m
}

impl Comparison3d {
    pub fn new(medium: ComparisonMedium) -> Result<Self> {
        let kind = match (medium.d2.nrows(), medium.q2.nrows()) {
            (3, 1) => FieldKind::Scalar,
            (6, 3) => FieldKind::Elastic,
            (m, n) => {
                return Err(Error::Dimension(format!(
                    "three-dimensional comparison media need D 3×3 with Q 1×1 or D 6×6 with Q 3×3, got {m} and {n}"
                )))
            }
        };
        let d0 = two_by_two(&medium.d2, &medium.d1, &medium.d1.transpose(), &(-&medium.d3));
        let q0 = two_by_two(&medium.q2, &medium.q1, &medium.q1.transpose(), &(-&medium.q3));
        Ok(Comparison3d { kind, medium, d0, q0 })
    }

    /// Number of components of U.
    pub fn size(&self) -> usize {
        2 * self.kind.displacement_size()
    }

    /// Strain of ξ ⊗ U for both halves of U.
    pub fn strain_pair(&self, xi: &Vector3<f64>) -> DMatrix<f64> {
        block_diag2(&self.kind.strain_map(xi))
    }

    /// ℒ₀(ξ) = [[ξD₂ξ, ξD₁ξ], [ξD₁ᵀξ, −ξD₃ξ]].
    pub fn l0(&self, xi: &Vector3<f64>) -> DMatrix<f64> {
        let e = self.strain_pair(xi);
        linalg::symmetrize(&(e.transpose() * &self.d0 * e))
    }

    /// Coefficient K_jl of ∂_j∂_l U in div(𝒟₀∇U).
    pub fn second_order_coefficient(&self, j: usize, l: usize) -> DMatrix<f64> {
        let (ej, el) = (self.strain_pair(&Vector3::ith(j, 1.0)), self.strain_pair(&Vector3::ith(l, 1.0)));
        ej.transpose() * &self.d0 * el
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBranch {
    pub direction: [f64; 3],
    pub c2: Complex64,
    /// Wave speed with positive imaginary part.
    pub c: Complex64,
    pub u: DVector<Complex64>,
    /// Uᵀ𝒬₀U after normalization.
    pub norm: Complex64,
}

fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

fn bilinear(u: &DVector<Complex64>, m: &CMatrix, v: &DVector<Complex64>) -> Complex64 {
    (u.transpose() * m * v)[(0, 0)]
}

/// Make `vs` orthonormal under the transpose form uᵀ𝒬₀v, pivoting on the
/// vector of largest self-product.  None when the span is 𝒬₀-degenerate.
fn q_orthonormalize(mut rest: Vec<DVector<Complex64>>, q0: &CMatrix, q_scale: f64) -> Option<Vec<DVector<Complex64>>> {
    let mut out: Vec<DVector<Complex64>> = Vec::new();
    let mut mixes = 0;
    while !rest.is_empty() {
        for v in rest.iter_mut() {
            for u in &out {
                let p = bilinear(u, q0, v);
                *v -= u * p;
            }
        }
        let (k, best) = rest
            .iter()
            .enumerate()
            .map(|(k, v)| (k, bilinear(v, q0, v).norm() / v.norm_squared().max(f64::MIN_POSITIVE)))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best < 1e-10 * q_scale {
            if rest.len() < 2 || mixes > 4 {
                return None;
            }
            let first = rest[1].clone();
            rest[0] += first * Complex64::new(1.0, 0.5);
            mixes += 1;
            continue;
        }
        let v = rest.swap_remove(k);
        let s = bilinear(&v, q0, &v).sqrt();
        out.push(v / s);
    }
    Some(out)
}

/// Null vectors of `m` for its `mult` smallest singular values, or None
/// when the `mult`-th smallest is not negligible.
fn null_space(m: CMatrix, mult: usize, tol: f64) -> Option<Vec<DVector<Complex64>>> {
    let n = m.ncols();
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    if svd.singular_values[order[mult - 1]] > tol {
        return None;
    }
    Some(order[..mult].iter().map(|&k| v_t.row(k).adjoint()).collect())
}

/// Group indices of values lying within `tol` of each other (transitively).
fn cluster(values: &[Complex64], tol: f64) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..values.len()).collect();
    for i in 0..values.len() {
        for j in 0..i {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (label[i], label[j]);
                label.iter_mut().for_each(|l| {
                    if *l == a {
                        *l = b
                    }
                });
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..values.len() {
        match groups.iter_mut().find(|g| label[g[0]] == label[i]) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

fn wave_speed(c2: Complex64) -> Option<Complex64> {
    let c = c2.sqrt();
    let c = if c.im < 0.0 { -c } else { c };
    (c.im > 1e-12 * c.norm()).then_some(c)
}

/// Branches of ℒ₀(ξ)U = c²𝒬₀U normalized so that Uᵀ𝒬₀U = 1, sorted by
/// (Re c², Im c²).  Complex branches come in exact conjugate pairs.
pub fn branch_eigen(xi: [f64; 3], cm: &Comparison3d) -> Result<Vec<EigenBranch>> {
    let dir = Vector3::from(xi);
    if (dir.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Validation("branch direction must be a unit vector".into()));
    }
    let defective = || Error::Defective { direction: xi };
    let l0 = cm.l0(&dir);
    let q0_inv = linalg::inverse(&cm.q0, "𝒬₀")?;
    let eig = (&q0_inv * &l0).complex_eigenvalues();
    let values: Vec<Complex64> = eig.iter().copied().collect();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let op_scale = linalg::max_abs(&l0) + scale * linalg::max_abs(&cm.q0);
    let (l0c, q0c) = (complexify(&l0), complexify(&cm.q0));
    let q_scale = linalg::max_abs(&cm.q0);

    let mut branches = Vec::with_capacity(values.len());
    for group in cluster(&values, 1e-7 * scale) {
        let mean = group.iter().map(|&k| values[k]).sum::<Complex64>() / group.len() as f64;
        let real = mean.im.abs() <= 1e-9 * scale;
        if !real && mean.im < 0.0 {
            // produced as the conjugate of its partner
            continue;
        }
        let lambda = if real { Complex64::new(mean.re, 0.0) } else { mean };
        let m = &l0c - &q0c * lambda;
        let vs = null_space(m, group.len(), 1e-7 * op_scale).ok_or_else(defective)?;
        let us = q_orthonormalize(vs, &q0c, q_scale).ok_or_else(defective)?;
        let c = wave_speed(lambda).ok_or_else(|| {
            Error::Indefinite(format!("branch with c² = {lambda} does not decay; check the D/Q blocks"))
        })?;
        for u in us {
            if !real {
                branches.push(EigenBranch {
                    direction: xi,
                    c2: lambda.conj(),
                    c: -c.conj(),
                    u: u.map(|z| z.conj()),
                    norm: Complex64::new(1.0, 0.0),
                });
            }
            branches.push(EigenBranch {
                direction: xi,
                c2: lambda,
                c,
                u,
                norm: Complex64::new(1.0, 0.0),
            });
        }
    }
    if branches.len() != values.len() {
        return Err(defective());
    }
    for b in branches.iter_mut() {
        b.norm = bilinear(&b.u, &q0c, &b.u);
    }
    branches.sort_by(|a, b| a.c2.re.total_cmp(&b.c2.re).then(a.c2.im.total_cmp(&b.c2.im)));
    Ok(branches)
}

/// Decaying solution φ_N(s) = load·exp(−iω|s|/c)/(2iωc) of the branch ODE
/// c²φ'' + ω²φ + load·δ(s) = 0.
pub fn plane_wave_profile(branch: &EigenBranch, s: f64, omega: f64, load: Complex64) -> Result<Complex64> {
    let c = branch.c;
    if c.im <= 0.0 {
        return Err(Error::Validation(format!("wave speed {c} has no positive imaginary part")));
    }
    if omega <= 0.0 {
        return Err(Error::Frequency(omega));
    }
    let i = Complex64::i();
    Ok(load * (-i * omega * s.abs() / c).exp() / (2.0 * i * omega * c))
}

/// Quadrature orders: Gauss–Legendre nodes in cosθ over the whole sphere
/// (split evenly at the equator), trapezoid nodes in azimuth, trapezoid
/// nodes on the great circle of the δ-term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SphereOrder {
    pub theta: usize,
    pub phi: usize,
    pub circle: usize,
}

impl Default for SphereOrder {
    fn default() -> Self {
        SphereOrder {
            theta: 32,
            phi: 64,
            circle: 256,
        }
    }
}

impl SphereOrder {
    pub fn doubled(self) -> Self {
        SphereOrder {
            theta: 2 * self.theta,
            phi: 2 * self.phi,
            circle: 2 * self.circle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta < 2 || self.theta % 2 != 0 || self.phi < 4 || self.circle < 4 {
            return Err(Error::Validation(format!(
                "sphere quadrature needs an even θ order ≥ 2 and azimuth/circle orders ≥ 4, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreensEvaluation {
    pub x: [f64; 3],
    pub matrix: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub g3: DMatrix<f64>,
    pub order: SphereOrder,
    /// max |Im 𝒢₀| / max |Re 𝒢₀| before the imaginary part is dropped.
    pub imaginary_residue: f64,
    /// Quadrature directions nudged off a defective eigenproblem.
    pub perturbed_directions: usize,
}

const NUDGE: [f64; 3] = [0.31, 0.53, 0.79];

/// Branches at ξ, nudging ξ by 1e-9 when the eigenproblem is defective.
fn branches_robust(xi: Vector3<f64>, cm: &Comparison3d, nudged: &AtomicUsize) -> Result<Vec<EigenBranch>> {
    let mut dir = xi;
    for attempt in 0..4 {
        match branch_eigen([dir[0], dir[1], dir[2]], cm) {
            Err(Error::Defective { .. }) if attempt < 3 => {
                nudged.fetch_add(1, Ordering::Relaxed);
                dir = (dir + Vector3::from(NUDGE) * 1e-9 * (attempt + 1) as f64).normalize();
            }
            other => return other,
        }
    }
    unreachable!()
}

/// Σ_N U_NU_Nᵀ/c_N² · g(c_N).
fn branch_sum(branches: &[EigenBranch], n: usize, g: impl Fn(Complex64) -> Complex64) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for b in branches {
        let f = g(b.c) / b.c2;
        m += &b.u * b.u.transpose() * f;
    }
    m
}

fn canonical(x: [f64; 3]) -> [f64; 3] {
    let neg = x.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0);
    if neg {
        [-x[0], -x[1], -x[2]]
    } else {
        x
    }
}

/// 𝒢₀(x) = (1/8π²)Σ_N∫(U_NU_Nᵀ/c_N²)[δ(ξ·x) − (iω/2c_N)exp(−iω|ξ·x|/c_N)]dS.
///
/// The δ-term is (1/|x|) times a great-circle integral of ℒ₀(ξ)⁻¹.  The
/// smooth term uses a sphere frame whose polar axis is x, so the kink of
/// |ξ·x| falls on the equator between the two Gauss–Legendre halves.  x and
/// −x are evaluated identically, which keeps 𝒢₀ exactly even.
pub fn greens_evaluate(x: [f64; 3], omega: f64, cm: &Comparison3d, order: SphereOrder) -> Result<GreensEvaluation> {
    order.validate()?;
    if omega <= 0.0 {
        return Err(Error::Frequency(omega));
    }
    let xv = Vector3::from(canonical(x));
    let r = xv.norm();
    if r < 1e-8 {
        return Err(Error::Singular(format!("Green's function evaluated at |x| = {r:e}")));
    }
    let n = cm.size();
    let axis = xv / r;
    let (e1, e2) = quadrature::perpendicular_frame(&axis);

    let circle: Vec<DMatrix<f64>> = (0..order.circle)
        .into_par_iter()
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / order.circle as f64;
            let xi = quadrature::sphere_point(&axis, &e1, &e2, 0.0, phi);
            linalg::inverse(&cm.l0(&xi), "ℒ₀(ξ)")
        })
        .collect::<Result<_>>()?;
    let mut delta_term = DMatrix::zeros(n, n);
    for m in &circle {
        delta_term += m;
    }
    delta_term *= 2.0 * PI / order.circle as f64 / r;

    // the integrand is even in ξ, so the upper hemisphere is doubled
    let (ts, ws) = quadrature::gauss_legendre_on(order.theta / 2, 0.0, 1.0);
    let nudged = AtomicUsize::new(0);
    let i = Complex64::i();
    let smooth_parts: Vec<CMatrix> = (0..ts.len() * order.phi)
        .into_par_iter()
        .map(|k| {
            let (it, ip) = (k / order.phi, k % order.phi);
            let phi = 2.0 * PI * ip as f64 / order.phi as f64;
            let xi = quadrature::sphere_point(&axis, &e1, &e2, ts[it], phi);
            let branches = branches_robust(xi, cm, &nudged)?;
            let s = r * ts[it];
            let w = 2.0 * ws[it] * 2.0 * PI / order.phi as f64;
            Ok(branch_sum(&branches, n, |c| -i * omega / (2.0 * c) * (-i * omega * s / c).exp()) * Complex64::new(w, 0.0))
        })
        .collect::<Result<_>>()?;
    let mut smooth = CMatrix::zeros(n, n);
    for m in &smooth_parts {
        smooth += m;
    }

    let scale = 1.0 / (8.0 * PI * PI);
    let re = (delta_term + smooth.map(|z| z.re)) * scale;
    let matrix = linalg::symmetrize(&re);
    let im_max = smooth.iter().fold(0.0f64, |m, z| m.max(z.im.abs())) * scale;
    let imaginary_residue = im_max / linalg::max_abs(&matrix).max(f64::MIN_POSITIVE);
    let h = n / 2;
    Ok(GreensEvaluation {
        x,
        g2: matrix.view((0, 0), (h, h)).into_owned(),
        g1: matrix.view((0, h), (h, h)).into_owned(),
        g3: -matrix.view((h, h), (h, h)).into_owned(),
        matrix,
        order,
        imaginary_residue,
        perturbed_directions: nudged.into_inner(),
    })
}

/// Sphere integrals used by the self-voxel term and the coarseness check.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereIntegrals {
    /// ∫ ℒ₀(ξ)⁻¹ dS.
    pub static_integral: DMatrix<f64>,
    /// Finite limit of the smooth part of 𝒢₀ at x = 0.
    pub smooth_at_origin: DMatrix<f64>,
    /// Shortest decay length |c|²/(ωc'') over the quadrature directions.
    pub min_decay_length: f64,
}

pub fn sphere_integrals(omega: f64, cm: &Comparison3d, order: SphereOrder) -> Result<SphereIntegrals> {
    order.validate()?;
    let n = cm.size();
    let axis = Vector3::z();
    let (e1, e2) = quadrature::perpendicular_frame(&axis);
    let (ts, ws) = quadrature::gauss_legendre_on(order.theta / 2, 0.0, 1.0);
    let nudged = AtomicUsize::new(0);
    let i = Complex64::i();
    let parts: Vec<(DMatrix<f64>, CMatrix, f64)> = (0..ts.len() * order.phi)
        .into_par_iter()
        .map(|k| {
            let (it, ip) = (k / order.phi, k % order.phi);
            let phi = 2.0 * PI * ip as f64 / order.phi as f64;
            let xi = quadrature::sphere_point(&axis, &e1, &e2, ts[it], phi);
            let w = 2.0 * ws[it] * 2.0 * PI / order.phi as f64;
            let m = linalg::inverse(&cm.l0(&xi), "ℒ₀(ξ)")? * w;
            let branches = branches_robust(xi, cm, &nudged)?;
            let smooth = branch_sum(&branches, n, |c| -i * omega / (2.0 * c)) * Complex64::new(w, 0.0);
            let decay = branches
                .iter()
                .map(|b| b.c.norm_sqr() / (omega * b.c.im))
                .fold(f64::INFINITY, f64::min);
            Ok((m, smooth, decay))
        })
        .collect::<Result<_>>()?;
    let mut static_integral = DMatrix::zeros(n, n);
    let mut smooth = CMatrix::zeros(n, n);
    let mut min_decay_length = f64::INFINITY;
    for (m, s, d) in &parts {
        static_integral += m;
        smooth += s;
        min_decay_length = min_decay_length.min(*d);
    }
    Ok(SphereIntegrals {
        static_integral: linalg::symmetrize(&static_integral),
        smooth_at_origin: linalg::symmetrize(&smooth.map(|z| z.re)) / (8.0 * PI * PI),
        min_decay_length,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct GreensRow {
    x: f64,
    y: f64,
    z: f64,
    row: usize,
    col: usize,
    value: f64,
}

/// Rows (x, y, z, row, col, value) for every entry of every evaluation.
pub fn write_greens_table<W: Write>(evals: &[GreensEvaluation], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for e in evals {
        for row in 0..e.matrix.nrows() {
            for col in 0..e.matrix.ncols() {
                wr.serialize(GreensRow {
                    x: e.x[0],
                    y: e.x[1],
                    z: e.x[2],
                    row,
                    col,
                    value: e.matrix[(row, col)],
                })?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}
