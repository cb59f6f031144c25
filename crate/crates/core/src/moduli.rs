//! Complex moduli and their real block forms.
//!
//! Each physics carries a "primal" tensor (stiffness, compressibility,
//! permittivity) and a "dual" tensor (density, inverse density, inverse
//! permeability).  The sign of the imaginary part that corresponds to loss
//! differs between tensors; [`Physics::primal_loss_sign`] and
//! [`Physics::dual_loss_sign`] encode it so the rest of the crate can work
//! with sign-adjusted imaginary parts that are positive definite for lossy
//! media.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Relative margin used to call a sign-adjusted loss tensor strictly
/// positive definite.
pub const PASSIVITY_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Physics {
    Elastic,
    Acoustic,
    Electromagnetic,
}

impl Physics {
    pub fn name(self) -> &'static str {
        match self {
            Physics::Elastic => "elastic",
            Physics::Acoustic => "acoustic",
            Physics::Electromagnetic => "electromagnetic",
        }
    }

    pub fn primal_name(self) -> &'static str {
        match self {
            Physics::Elastic => "stiffness C",
            Physics::Acoustic => "compressibility k",
            Physics::Electromagnetic => "permittivity eps",
        }
    }

    pub fn dual_name(self) -> &'static str {
        match self {
            Physics::Elastic => "density rho",
            Physics::Acoustic => "inverse density r",
            Physics::Electromagnetic => "inverse permeability m",
        }
    }

    /// Sign s such that s * Im(primal) is positive definite for a lossy medium.
    pub fn primal_loss_sign(self) -> f64 {
        match self {
            Physics::Elastic | Physics::Electromagnetic => 1.0,
            Physics::Acoustic => -1.0,
        }
    }

    pub fn dual_loss_sign(self) -> f64 {
        match self {
            Physics::Elastic | Physics::Electromagnetic => -1.0,
            Physics::Acoustic => 1.0,
        }
    }

    /// Size of the primal tensor for a spatial dimension.
    pub fn primal_size(self, dim: usize) -> usize {
        match self {
            Physics::Elastic => dim * (dim + 1) / 2,
            Physics::Acoustic | Physics::Electromagnetic => 1,
        }
    }

    pub fn dual_size(self, dim: usize) -> usize {
        match self {
            Physics::Elastic | Physics::Acoustic => dim,
            Physics::Electromagnetic => 1,
        }
    }

    /// Interval of rotation angles searched when no θ is supplied.
    ///
    /// For elastic and electromagnetic media a negative angle moves loss
    /// from the dual tensor into the primal one; acoustic media have the
    /// opposite sign convention so the interval is mirrored.
    pub fn rotation_interval(self) -> (f64, f64) {
        let h = std::f64::consts::FRAC_PI_2;
        match self {
            Physics::Acoustic => (0.0, h),
            _ => (-h, 0.0),
        }
    }

    /// Whether rotating the moduli by e^{iθ} also rotates the body source.
    pub fn source_rotates(self) -> bool {
        !matches!(self, Physics::Acoustic)
    }
}

/// Time-harmonic convention in which a user supplies complex parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeConvention {
    /// e^{+iωt}: lossy stiffness has positive imaginary part.
    PlusIOmegaT,
    /// e^{-iωt}: lossy permittivity and permeability have positive imaginary part.
    MinusIOmegaT,
}

/// Complex material tensors of one region at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexModuli {
    pub physics: Physics,
    pub primal: CMatrix,
    pub dual: CMatrix,
    pub omega: f64,
}

fn check_complex_symmetric(m: &CMatrix, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    let (re, im) = linalg::split_complex(m);
    if !linalg::is_symmetric(&re, 1e-12) || !linalg::is_symmetric(&im, 1e-12) {
        return Err(Error::Validation(format!("{what} must be symmetric")));
    }
    Ok(())
}

fn scalar_matrix(z: Complex64, n: usize) -> CMatrix {
    CMatrix::from_diagonal_element(n, n, z)
}

impl ComplexModuli {
    pub fn new(physics: Physics, primal: CMatrix, dual: CMatrix, omega: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Frequency(omega));
        }
        check_complex_symmetric(&primal, physics.primal_name())?;
        check_complex_symmetric(&dual, physics.dual_name())?;
        Ok(ComplexModuli {
            physics,
            primal,
            dual,
            omega,
        })
    }

    /// Scalar parameters in one dimension (or isotropic scalar multiples of
    /// the identity of the appropriate size for `dim`).
    pub fn scalar(physics: Physics, dim: usize, primal: Complex64, dual: Complex64, omega: f64) -> Result<Self> {
        Self::new(
            physics,
            scalar_matrix(primal, physics.primal_size(dim)),
            scalar_matrix(dual, physics.dual_size(dim)),
            omega,
        )
    }

    /// Plane-strain isotropic elastic moduli in Voigt form with √2 shear
    /// scaling (components e11, e22, √2 e12).
    pub fn elastic_isotropic_2d(lambda: Complex64, mu: Complex64, rho: Complex64, omega: f64) -> Result<Self> {
        let two = Complex64::new(2.0, 0.0);
        let c = CMatrix::from_row_slice(
            3,
            3,
            &[
                lambda + two * mu,
                lambda,
                Complex64::new(0.0, 0.0),
                lambda,
                lambda + two * mu,
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                two * mu,
            ],
        );
        Self::new(Physics::Elastic, c, scalar_matrix(rho, 2), omega)
    }

    /// Electromagnetic moduli from permittivity and permeability.  The
    /// stored dual tensor is the inverse permeability.  Electromagnetic
    /// problems are stored in the e^{-iωt} convention (lossy ε and μ have
    /// positive imaginary parts); input in the other convention is conjugated.
    pub fn electromagnetic(eps: CMatrix, mu: CMatrix, omega: f64, convention: TimeConvention) -> Result<Self> {
        let (eps, mu) = match convention {
            TimeConvention::MinusIOmegaT => (eps, mu),
            TimeConvention::PlusIOmegaT => (eps.map(|z| z.conj()), mu.map(|z| z.conj())),
        };
        let m = mu
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("permeability".into()))?;
        Self::new(Physics::Electromagnetic, eps, m, omega)
    }

    pub fn primal_re(&self) -> DMatrix<f64> {
        self.primal.map(|z| z.re)
    }

    pub fn primal_im(&self) -> DMatrix<f64> {
        self.primal.map(|z| z.im)
    }

    pub fn dual_re(&self) -> DMatrix<f64> {
        self.dual.map(|z| z.re)
    }

    pub fn dual_im(&self) -> DMatrix<f64> {
        self.dual.map(|z| z.im)
    }

    /// Multiply both tensors by `scale` (used for e^{iθ} rotation).
    pub fn scaled(&self, scale: Complex64) -> Self {
        ComplexModuli {
            physics: self.physics,
            primal: self.primal.map(|z| z * scale),
            dual: self.dual.map(|z| z * scale),
            omega: self.omega,
        }
    }
}

/// Real symmetric 2n×2n block [[A, B], [Bᵀ, D]].
#[derive(Debug, Clone, PartialEq)]
pub struct CGBlock {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl CGBlock {
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let n2 = m.nrows();
        if !m.is_square() || n2 % 2 != 0 {
            return Err(Error::Dimension("block must be square with even size".into()));
        }
        let n = n2 / 2;
        Ok(CGBlock {
            a: m.view((0, 0), (n, n)).into_owned(),
            b: m.view((0, n), (n, n)).into_owned(),
            d: m.view((n, n), (n, n)).into_owned(),
        })
    }

    /// Half size n of the 2n×2n block.
    pub fn half(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.half();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a);
        m.view_mut((0, n), (n, n)).copy_from(&self.b);
        m.view_mut((n, 0), (n, n)).copy_from(&self.b.transpose());
        m.view_mut((n, n), (n, n)).copy_from(&self.d);
        m
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.matrix(), x)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::sym_eig_range(&self.matrix()).0
    }

    pub fn scaled(&self, s: f64) -> Self {
        CGBlock {
            a: &self.a * s,
            b: &self.b * s,
            d: &self.d * s,
        }
    }
}

/// Block built from a complex tensor Z = Z' + iZ'' given the real part and
/// the sign-adjusted imaginary part P (which must be positive definite):
/// [[P + Z'P⁻¹Z', -Z'P⁻¹], [-P⁻¹Z', P⁻¹]].
pub fn cg_form(re: &DMatrix<f64>, loss: &DMatrix<f64>) -> Result<CGBlock> {
    let p_inv = linalg::spd_inverse(loss, "sign-adjusted loss tensor")?;
    let b = -(re * &p_inv);
    let a = loss + re * &p_inv * re;
    Ok(CGBlock {
        a: linalg::symmetrize(&a),
        b,
        d: linalg::symmetrize(&p_inv),
    })
}

/// Recover (Z', P) from a block produced by [`cg_form`].
pub fn cg_parts(block: &CGBlock) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = linalg::spd_inverse(&block.d, "lower-right block")?;
    let re = -(&block.b * &p);
    Ok((re, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassivityClass {
    Strict,
    Semidefinite,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorPassivity {
    pub tensor: String,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub class: PassivityClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassivityReport {
    pub primal: TensorPassivity,
    pub dual: TensorPassivity,
}

impl PassivityReport {
    pub fn is_strict(&self) -> bool {
        self.primal.class == PassivityClass::Strict && self.dual.class == PassivityClass::Strict
    }

    /// Smallest margin relative to the tensor scale, used by the θ search.
    pub fn relative_margin(&self) -> f64 {
        let rel = |t: &TensorPassivity| {
            let s = t.max_eigenvalue.abs().max(t.min_eigenvalue.abs());
            if s == 0.0 {
                0.0
            } else {
                t.min_eigenvalue / s
            }
        };
        rel(&self.primal).min(rel(&self.dual))
    }
}

fn classify_tensor(name: &str, sign: f64, im: &DMatrix<f64>, scale: f64) -> TensorPassivity {
    let (lo, hi) = linalg::sym_eig_range(&(im * sign));
    let class = if lo > 0.0 && lo > PASSIVITY_MARGIN * hi.abs() {
        PassivityClass::Strict
    } else if lo >= -PASSIVITY_MARGIN * scale.max(hi.abs()) {
        PassivityClass::Semidefinite
    } else {
        PassivityClass::Violated
    };
    TensorPassivity {
        tensor: name.to_string(),
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        class,
    }
}

pub fn check_passivity(m: &ComplexModuli) -> PassivityReport {
    let scale_p = m.primal.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    let scale_d = m.dual.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    PassivityReport {
        primal: classify_tensor(
            m.physics.primal_name(),
            m.physics.primal_loss_sign(),
            &m.primal_im(),
            scale_p,
        ),
        dual: classify_tensor(
            m.physics.dual_name(),
            m.physics.dual_loss_sign(),
            &m.dual_im(),
            scale_d,
        ),
    }
}

/// Build the primal block (first field pair) and dual block (second pair).
/// Requires strict passivity; `region` only labels errors.
pub fn build_blocks(m: &ComplexModuli, region: &str) -> Result<(CGBlock, CGBlock)> {
    let report = check_passivity(m);
    for t in [&report.primal, &report.dual] {
        if t.class != PassivityClass::Strict {
            return Err(Error::Passivity {
                tensor: t.tensor.clone(),
                region: region.to_string(),
                min_eigenvalue: t.min_eigenvalue,
                hint: "use a rotation angle or the lossless reduced formulation".into(),
            });
        }
    }
    let primal = cg_form(&m.primal_re(), &(m.primal_im() * m.physics.primal_loss_sign()))?;
    let dual = cg_form(&m.dual_re(), &(m.dual_im() * m.physics.dual_loss_sign()))?;
    Ok((primal, dual))
}

/// Pointwise constitutive operator acting on the field quadruple
/// (x_a, y_a, x_b, y_b) as block diag(A, B).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorL {
    pub block_a: CGBlock,
    pub block_b: CGBlock,
}

pub fn assemble_l(block_a: CGBlock, block_b: CGBlock) -> OperatorL {
    OperatorL { block_a, block_b }
}

impl OperatorL {
    pub fn size(&self) -> usize {
        2 * (self.block_a.half() + self.block_b.half())
    }

    /// Check that the block sizes match a physics in `dim` dimensions.
    pub fn check_layout(&self, physics: Physics, dim: usize) -> Result<()> {
        let (na, nb) = (physics.primal_size(dim), physics.dual_size(dim));
        let a_ok = self.block_a.half() == na;
        let b_ok = self.block_b.half() == nb;
        if a_ok && b_ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{} blocks in {dim}D need halves ({na}, {nb}), got ({}, {})",
                physics.name(),
                self.block_a.half(),
                self.block_b.half()
            )))
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let (a, b) = (self.block_a.matrix(), self.block_b.matrix());
        let (na, nb) = (a.nrows(), b.nrows());
        let mut m = DMatrix::zeros(na + nb, na + nb);
        m.view_mut((0, 0), (na, na)).copy_from(&a);
        m.view_mut((na, na), (nb, nb)).copy_from(&b);
        m
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let na = 2 * self.block_a.half();
        let mut g = self.block_a.apply(&f[..na]);
        g.extend(self.block_b.apply(&f[na..]));
        g
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.block_a.min_eigenvalue().min(self.block_b.min_eigenvalue())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rotated {
    pub moduli: ComplexModuli,
    pub theta: f64,
    pub passive: bool,
}

/// Multiply the moduli by e^{iθ}.  Potentials are unchanged by the
/// rotation; fluxes (and, except in acoustics, body sources) scale by e^{iθ}.
pub fn rotate_moduli(m: &ComplexModuli, theta: f64) -> Rotated {
    let moduli = m.scaled(Complex64::from_polar(1.0, theta));
    let passive = check_passivity(&moduli).is_strict();
    Rotated {
        moduli,
        theta,
        passive,
    }
}

/// Scan the physics-dependent interval (`samples` interior points) for the
/// single angle that maximises the worst relative passivity margin over all
/// `regions`.  Returns `None` when no scanned angle makes every region
/// strictly passive.
pub fn auto_rotation(regions: &[ComplexModuli], samples: usize) -> Option<f64> {
    let physics = regions.first()?.physics;
    let (lo, hi) = physics.rotation_interval();
    let mut best: Option<(f64, f64)> = None;
    for k in 1..=samples {
        let theta = lo + (hi - lo) * k as f64 / (samples + 1) as f64;
        let mut worst = f64::INFINITY;
        let mut strict = true;
        for m in regions {
            let r = check_passivity(&m.scaled(Complex64::from_polar(1.0, theta)));
            strict &= r.is_strict();
            worst = worst.min(r.relative_margin());
        }
        if strict && best.is_none_or(|(_, w)| worst > w) {
            best = Some((theta, worst));
        }
    }
    best.map(|(t, _)| t)
}

/// Pointwise data for the reduced formulation used when the dual tensor is
/// real: the dual field pair collapses to y = Y' x.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFormSpec {
    pub physics: Physics,
    pub dual_real: DMatrix<f64>,
}

pub fn lossless_limit(m: &ComplexModuli) -> Result<ReducedFormSpec> {
    let scale = m.dual.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    if linalg::max_abs(&m.dual_im()) > 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Validation(format!(
            "{} has a nonzero imaginary part; use the full formulation",
            m.physics.dual_name()
        )));
    }
    let dual_real = m.dual_re();
    linalg::inverse(&dual_real, m.physics.dual_name())?;
    Ok(ReducedFormSpec {
        physics: m.physics,
        dual_real,
    })
}

impl ReducedFormSpec {
    /// Relation inside the collapsed pair: y = Y' x.
    pub fn block_relation(&self, x: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.dual_real, x)
    }

    /// The eliminated physical field from its partner:
    /// elastic u' from p'', acoustic v'' from p'', electromagnetic H'' from B''.
    pub fn eliminate(&self, value: &[f64], omega: f64) -> Result<Vec<f64>> {
        match self.physics {
            Physics::Elastic => {
                let inv = linalg::inverse(&self.dual_real, "density")?;
                Ok(linalg::mat_vec(&inv, value).into_iter().map(|v| v / omega).collect())
            }
            Physics::Acoustic | Physics::Electromagnetic => Ok(self.block_relation(value)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn stiffness_block_example() {
        let m = ComplexModuli::scalar(Physics::Elastic, 1, c(2.0, 1.0), c(1.0, -1.0), 1.0).unwrap();
        let (a, b) = build_blocks(&m, "r").unwrap();
        assert_eq!(a.matrix(), DMatrix::from_row_slice(2, 2, &[5.0, -2.0, -2.0, 1.0]));
        assert_eq!(b.matrix(), DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn acoustic_and_em_block_examples() {
        let m = ComplexModuli::scalar(Physics::Acoustic, 1, c(1.0, -2.0), c(1.0, 1.0), 1.0).unwrap();
        let (k, _) = build_blocks(&m, "r").unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.5, -0.5, -0.5, 0.5]);
        assert!((k.matrix() - &expected).abs().max() < 1e-15);
        let m = ComplexModuli::scalar(Physics::Electromagnetic, 1, c(1.0, 2.0), c(1.0, -1.0), 1.0).unwrap();
        let (e, _) = build_blocks(&m, "r").unwrap();
        assert!((e.matrix() - &expected).abs().max() < 1e-15);
    }

    #[test]
    fn rotation_example_restores_passivity() {
        let m = ComplexModuli::scalar(Physics::Elastic, 1, c(2.0, 1.0), c(1.0, 0.0), 1.0).unwrap();
        assert!(!check_passivity(&m).is_strict());
        let r = rotate_moduli(&m, -std::f64::consts::PI / 12.0);
        assert!(r.passive);
        assert_relative_eq!(r.moduli.primal[(0, 0)].im, 0.448, epsilon = 1e-3);
        assert_relative_eq!(-r.moduli.dual[(0, 0)].im, 0.259, epsilon = 1e-3);
        let bad = rotate_moduli(&m, -std::f64::consts::PI / 6.0);
        assert!(!bad.passive);
        assert_relative_eq!(bad.moduli.primal[(0, 0)].im, -0.134, epsilon = 1e-3);
        assert_eq!(rotate_moduli(&m, 0.0).moduli, m);
        assert!(auto_rotation(&[m], 180).is_some());
    }

    #[test]
    fn reduced_examples() {
        let rho = ComplexModuli::scalar(Physics::Elastic, 1, c(1.0, 0.1), c(2.0, 0.0), 4.0).unwrap();
        let spec = lossless_limit(&rho).unwrap();
        assert_relative_eq!(spec.eliminate(&[8.0], 4.0).unwrap()[0], 1.0);
        let r = ComplexModuli::scalar(Physics::Acoustic, 1, c(1.0, -0.1), c(3.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(lossless_limit(&r).unwrap().eliminate(&[2.0], 1.0).unwrap()[0], 6.0);
        let m = ComplexModuli::scalar(Physics::Electromagnetic, 1, c(1.0, 0.1), c(5.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(lossless_limit(&m).unwrap().eliminate(&[1.0], 1.0).unwrap()[0], 5.0);
        let lossy = ComplexModuli::scalar(Physics::Elastic, 1, c(1.0, 0.1), c(2.0, -0.1), 1.0).unwrap();
        assert!(lossless_limit(&lossy).is_err());
    }

    #[test]
    fn passivity_error_names_tensor_and_region() {
        let m = ComplexModuli::scalar(Physics::Elastic, 1, c(1.0, -0.1), c(1.0, -0.1), 1.0).unwrap();
        let err = build_blocks(&m, "core").unwrap_err().to_string();
        assert!(err.contains("stiffness") && err.contains("core"), "{err}");
    }

    #[test]
    fn non_positive_frequency_rejected() {
        assert!(ComplexModuli::scalar(Physics::Elastic, 1, c(1.0, 0.1), c(1.0, -0.1), 0.0).is_err());
    }

    #[test]
    fn em_ingestion_converts_convention() {
        let eps = CMatrix::from_element(1, 1, c(2.0, 0.5));
        let mu = CMatrix::from_element(1, 1, c(1.0, 0.25));
        let m = ComplexModuli::electromagnetic(eps.clone(), mu.clone(), 1.0, TimeConvention::MinusIOmegaT).unwrap();
        assert!(check_passivity(&m).is_strict());
        let conj = ComplexModuli::electromagnetic(
            eps.map(|z| z.conj()),
            mu.map(|z| z.conj()),
            1.0,
            TimeConvention::PlusIOmegaT,
        )
        .unwrap();
        assert_eq!(conj, m);
    }

    #[test]
    fn cg_parts_inverts_cg_form() {
        let re = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.7]);
        let (r2, p2) = cg_parts(&cg_form(&re, &p).unwrap()).unwrap();
        assert!((r2 - re).abs().max() < 1e-12 && (p2 - p).abs().max() < 1e-12);
    }
}
