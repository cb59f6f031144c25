//! Hashin–Shtrikman polarization fields.
//!
//! A comparison operator ℒ₀ replaces ℒ and the difference is carried by a
//! polarization T = (ℒ − ℒ₀)F.  The functional
//!
//!   HS(F, T) = ∫ (T − G₀)ᵀF + ½Fᵀℒ₀F − ½Tᵀ(ℒ − ℒ₀)⁻¹T
//!
//! bounds the primal functional from above when ℒ₀ − ℒ is positive definite
//! and from below (at fixed F) when ℒ − ℒ₀ is.  Eliminating F leaves a
//! problem in T alone, driven by the operator ℋ₀ that maps a polarization to
//! minus the comparison-medium response F' it induces.

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::fields::table::{self, FieldRow};
use crate::fields::{field_weights, BoundarySpec, FieldState, Layout, Location, Medium, Mesh, SourceData};
use crate::functional;
use crate::linalg;
use crate::moduli::{self, CGBlock, ComplexModuli, Physics};
use crate::solver::{self, Quadratic, SolveOptions, SolveReport};

/// Relative eigenvalue margin below which ℒ − ℒ₀ counts as singular.
pub const SINGULAR_MARGIN: f64 = 1e-8;

/// T = (τ'', −η'', π', −ν') and its analogues, stored like a field quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct Polarization {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl Polarization {
    pub fn zeros(layout: Layout) -> Self {
        Polarization {
            layout,
            values: vec![0.0; layout.field_len()],
        }
    }

    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.field_len() {
            return Err(Error::Dimension(format!(
                "polarization has length {}, expected {}",
                values.len(),
                layout.field_len()
            )));
        }
        Ok(Polarization { layout, values })
    }

    /// Field-table rows with entities "cell" and "node".
    pub fn rows(&self) -> Vec<FieldRow> {
        let split = self.layout.node_offset(0);
        let mut rows = table::block_rows("cell", self.layout.cell_width(), &self.values[..split]);
        rows.extend(table::block_rows("node", self.layout.node_width(), &self.values[split..]));
        rows
    }

    pub fn from_rows(layout: Layout, rows: &[FieldRow]) -> Result<Self> {
        Ok(Polarization {
            layout,
            values: table::state_values_from_rows(&layout, rows)?,
        })
    }
}

/// Homogeneous comparison medium.  The cell block (paired with the gradient)
/// is 𝒞₀ = [[D₂ + D₁D₃⁻¹D₁ᵀ, −D₁D₃⁻¹], [−D₃⁻¹D₁ᵀ, D₃⁻¹]] and the node block
/// is 𝒫₀ = −[[Q₂ + Q₁Q₃⁻¹Q₁ᵀ, −Q₁Q₃⁻¹], [−Q₃⁻¹Q₁ᵀ, Q₃⁻¹]], with D₂, D₃, −Q₂
/// and −Q₃ positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMedium {
    pub cell: CGBlock,
    pub node: CGBlock,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub d3: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub q3: DMatrix<f64>,
}

/// (P₁, P₂, P₃) with block = [[P₂ + P₁P₃⁻¹P₁ᵀ, −P₁P₃⁻¹], [−P₃⁻¹P₁ᵀ, P₃⁻¹]].
fn extract(block: &CGBlock, what: &str) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let p3 = linalg::spd_inverse(&block.d, what)?;
    let p1 = -(&block.b * &p3);
    let p2 = linalg::symmetrize(&(&block.a - &p1 * &block.d * p1.transpose()));
    Ok((p1, p2, p3))
}

fn compose(p1: &DMatrix<f64>, p2: &DMatrix<f64>, p3: &DMatrix<f64>, what: &str) -> Result<CGBlock> {
    let p3_inv = linalg::spd_inverse(p3, what)?;
    Ok(CGBlock {
        a: linalg::symmetrize(&(p2 + p1 * &p3_inv * p1.transpose())),
        b: -(p1 * &p3_inv),
        d: p3_inv,
    })
}

fn require_pd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() || !linalg::is_symmetric(m, 1e-12) || !linalg::is_positive_definite(m, 0.0) {
        return Err(Error::Indefinite(format!("{name} must be symmetric positive definite")));
    }
    Ok(())
}

impl ComparisonMedium {
    pub fn from_blocks(cell: CGBlock, node: CGBlock) -> Result<Self> {
        require_pd(&cell.matrix(), "𝒞₀")?;
        require_pd(&node.matrix(), "𝒫₀")?;
        let (d1, d2, d3) = extract(&cell, "𝒞₀ lower-right block")?;
        // 𝒫₀ has the 𝒞₀ shape with parameters (Q₁, −Q₂, −Q₃)
        let (q1, m2, m3) = extract(&node, "𝒫₀ lower-right block")?;
        let (q2, q3) = (-m2, -m3);
        Ok(ComparisonMedium {
            cell,
            node,
            d1,
            d2,
            d3,
            q1,
            q2,
            q3,
        })
    }

    pub fn from_dq(
        d1: DMatrix<f64>,
        d2: DMatrix<f64>,
        d3: DMatrix<f64>,
        q1: DMatrix<f64>,
        q2: DMatrix<f64>,
        q3: DMatrix<f64>,
    ) -> Result<Self> {
        require_pd(&d2, "D₂")?;
        require_pd(&d3, "D₃")?;
        require_pd(&(-&q2), "−Q₂")?;
        require_pd(&(-&q3), "−Q₃")?;
        if d1.shape() != d2.shape() || d3.shape() != d2.shape() || q1.shape() != q2.shape() || q3.shape() != q2.shape()
        {
            return Err(Error::Dimension("D and Q blocks must be square of matching sizes".into()));
        }
        let cell = compose(&d1, &d2, &d3, "D₃")?;
        let node = compose(&q1, &(-&q2), &(-&q3), "−Q₃")?;
        Ok(ComparisonMedium {
            cell,
            node,
            d1,
            d2,
            d3,
            q1,
            q2,
            q3,
        })
    }

    /// Comparison medium of a strictly passive complex medium: the D blocks
    /// come from the tensor on cells (D₁ real part, D₂ = D₃ loss), the Q
    /// blocks from the tensor on nodes.
    pub fn from_moduli(m: &ComplexModuli) -> Result<Self> {
        let (primal, dual) = moduli::build_blocks(m, "comparison")?;
        match m.physics {
            Physics::Elastic => Self::from_blocks(primal, dual),
            _ => Self::from_blocks(dual, primal),
        }
    }

    /// The blocks rebuilt from D/Q.
    pub fn reconstruct(&self) -> Result<(CGBlock, CGBlock)> {
        let cell = compose(&self.d1, &self.d2, &self.d3, "D₃")?;
        let node = compose(&self.q1, &(-&self.q2), &(-&self.q3), "−Q₃")?;
        Ok((cell, node))
    }

    /// ℒ₀ spread over a mesh layout.
    pub fn medium(&self, layout: Layout, omega: f64) -> Result<Medium> {
        Medium::uniform(layout, omega, &self.cell, &self.node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundClass {
    /// ℒ₀ − ℒ positive definite everywhere: HS bounds J from above.
    MinimumPrinciple,
    /// ℒ − ℒ₀ positive definite everywhere.
    SaddlePrinciple,
    Indefinite,
}

fn entity_pairs<'a>(l: &'a Medium, l0: &'a Medium) -> Result<Vec<(Location, usize, &'a CGBlock, &'a CGBlock)>> {
    l.layout.same_as(&l0.layout)?;
    let mut out = Vec::new();
    for loc in [Location::Cell, Location::Node] {
        for i in 0..l.layout.n_entities(loc) {
            match (l.block(loc, i), l0.block(loc, i)) {
                (Some(a), Some(b)) => out.push((loc, i, a, b)),
                _ => {
                    return Err(Error::Unsupported(
                        "polarization needs full blocks on every entity (reduced formulation given)".into(),
                    ))
                }
            }
        }
    }
    Ok(out)
}

pub fn classify_bound(l: &Medium, l0: &Medium) -> Result<BoundClass> {
    let mut all_min = true;
    let mut all_saddle = true;
    for (_, _, a, b) in entity_pairs(l, l0)? {
        let diff = b.matrix() - a.matrix();
        let (lo, hi) = linalg::sym_eig_range(&diff);
        all_min &= lo > 0.0;
        all_saddle &= hi < 0.0;
    }
    Ok(if all_min {
        BoundClass::MinimumPrinciple
    } else if all_saddle {
        BoundClass::SaddlePrinciple
    } else {
        BoundClass::Indefinite
    })
}

/// Offset and (ℒ − ℒ₀)⁻¹ for every entity of a quadruple vector.
#[derive(Debug, Clone)]
pub struct DifferenceInverse {
    pub blocks: Vec<(usize, DMatrix<f64>)>,
}

impl DifferenceInverse {
    /// Invert per-entity differences.  `labels` names entities in errors.
    pub fn new(differences: Vec<(usize, DMatrix<f64>, f64)>, labels: &[String]) -> Result<Self> {
        let mut singular = Vec::new();
        let mut blocks = Vec::with_capacity(differences.len());
        for (k, (offset, diff, scale)) in differences.into_iter().enumerate() {
            let eig = diff.clone().symmetric_eigenvalues();
            let margin = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            if margin < SINGULAR_MARGIN * scale {
                singular.push(labels[k].clone());
                continue;
            }
            blocks.push((offset, linalg::inverse(&diff, "ℒ − ℒ₀")?));
        }
        if !singular.is_empty() {
            return Err(Error::Singular(format!("ℒ − ℒ₀ is singular on {}", singular.join(", "))));
        }
        Ok(DifferenceInverse { blocks })
    }

    pub fn on_mesh(l: &Medium, l0: &Medium) -> Result<Self> {
        let mut diffs = Vec::new();
        let mut labels = Vec::new();
        for (loc, i, a, b) in entity_pairs(l, l0)? {
            let (ma, mb) = (a.matrix(), b.matrix());
            let scale = linalg::max_abs(&ma).max(linalg::max_abs(&mb));
            diffs.push((l.layout.entity_offset(loc, i), ma - mb, scale));
            labels.push(match loc {
                Location::Cell => format!("cell {i}"),
                Location::Node => format!("node {i}"),
            });
        }
        Self::new(diffs, &labels)
    }

    pub fn apply(&self, t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; t.len()];
        for (o, m) in &self.blocks {
            let w = m.nrows();
            out[*o..*o + w].copy_from_slice(&linalg::mat_vec(m, &t[*o..*o + w]));
        }
        out
    }

    /// Σ w Tᵀ(ℒ − ℒ₀)⁻¹T.
    pub fn weighted_form(&self, weights: &[f64], t: &[f64]) -> f64 {
        let y = self.apply(t);
        weights.iter().zip(t).zip(&y).map(|((w, a), b)| w * a * b).sum()
    }
}

/// T = (ℒ − ℒ₀)F entity by entity.
pub fn exact_polarization(f: &FieldState, l: &Medium, l0: &Medium) -> Result<Polarization> {
    f.layout.same_as(&l.layout)?;
    DifferenceInverse::on_mesh(l, l0)?;
    let lf = l.apply(&f.values)?;
    let l0f = l0.apply(&f.values)?;
    let values = lf.iter().zip(&l0f).map(|(a, b)| a - b).collect();
    Ok(Polarization { layout: f.layout, values })
}

/// HS(F, T) = Σ w[(T − G₀)ᵀF + ½Fᵀℒ₀F − ½Tᵀ(ℒ − ℒ₀)⁻¹T].
pub fn evaluate_hs(
    mesh: &Mesh,
    f: &FieldState,
    t: &Polarization,
    l: &Medium,
    l0: &Medium,
    src: &SourceData,
) -> Result<f64> {
    f.layout.same_as(&t.layout)?;
    f.layout.same_as(&src.layout)?;
    let dinv = DifferenceInverse::on_mesh(l, l0)?;
    let w = field_weights(mesh, &f.layout);
    let linear: f64 = w
        .iter()
        .zip(&t.values)
        .zip(&src.g0.values)
        .zip(&f.values)
        .map(|(((w, t), g), f)| w * (t - g) * f)
        .sum();
    Ok(linear + l0.energy(mesh, &f.values) - 0.5 * dinv.weighted_form(&w, &t.values))
}

/// inf over admissible F of HS(F, T): the comparison problem with linear
/// term G₀ − T.  Returns the minimizing field values and the value.
pub fn hs_field_minimum(
    mesh: &Mesh,
    l: &Medium,
    l0: &Medium,
    src: &SourceData,
    bc: &BoundarySpec,
    t: &Polarization,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, f64, SolveReport)> {
    t.layout.same_as(&src.layout)?;
    let dinv = DifferenceInverse::on_mesh(l, l0)?;
    let g: Vec<f64> = src.g0.values.iter().zip(&t.values).map(|(g, t)| g - t).collect();
    let q = Quadratic::assemble(mesh, l0, src, bc, &g)?;
    let (x, report) = solver::minimize_quadratic(&q, opts)?;
    let w = field_weights(mesh, &t.layout);
    let value = q.value(&x) - 0.5 * dinv.weighted_form(&w, &t.values);
    Ok((q.field(&x), value, report))
}

/// Application of ℋ₀ to a polarization vector, with the diagonal quadrature
/// weights of that vector.  W·ℋ₀ must be symmetric.
pub trait H0Applier {
    fn weights(&self) -> &[f64];
    fn apply(&self, t: &[f64]) -> Result<Vec<f64>>;
}

/// ℋ₀ = S A₀⁻¹ SᵀW on a bounded mesh, where S spans the admissible fields
/// with homogeneous data and A₀ = SᵀWℒ₀S.
#[derive(Debug, Clone)]
pub struct DiscreteH0 {
    s: CsrMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    weights: Vec<f64>,
}

impl DiscreteH0 {
    pub fn new(mesh: &Mesh, l0: &Medium, src: &SourceData, bc: &BoundarySpec) -> Result<Self> {
        let zero = vec![0.0; l0.layout.field_len()];
        let q = Quadratic::assemble(mesh, l0, src, bc, &zero)?;
        let a = linalg::sparse_to_dense(&q.a);
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Indefinite("comparison operator SᵀWℒ₀S".into()))?;
        Ok(DiscreteH0 {
            s: q.s,
            chol,
            weights: q.weights,
        })
    }
}

impl H0Applier for DiscreteH0 {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn apply(&self, t: &[f64]) -> Result<Vec<f64>> {
        if t.len() != self.weights.len() {
            return Err(Error::Dimension("polarization length does not match ℋ₀".into()));
        }
        let wt: Vec<f64> = t.iter().zip(&self.weights).map(|(t, w)| t * w).collect();
        let y = linalg::to_dvector(&linalg::spmv_t(&self.s, &wt));
        let x = self.chol.solve(&y);
        Ok(linalg::spmv(&self.s, x.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondensedMethod {
    /// Conjugate gradients; needs a definite condensed operator.
    ConjugateGradient,
    /// Dense LU of the assembled condensed operator.
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensedEvaluation {
    pub value: f64,
    /// [(ℒ − ℒ₀)⁻¹ + ℋ₀]T − F₀.
    pub residual: Vec<f64>,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensedSolution {
    pub t: Vec<f64>,
    pub evaluation: CondensedEvaluation,
    pub iterations: usize,
    pub converged: bool,
}

/// The polarization-only problem: stationarity of
///
///   J₀(F₀) + ∫ TᵀF₀ − ½Tᵀ[(ℒ − ℒ₀)⁻¹ + ℋ₀]T
///
/// where F₀ solves the comparison problem and J₀(F₀) = ∫ −G₀ᵀF₀ + ½F₀ᵀℒ₀F₀.
pub struct Condensed<'a> {
    pub h0: &'a dyn H0Applier,
    pub dinv: DifferenceInverse,
    pub f0: Vec<f64>,
    pub comparison_value: f64,
    pub class: BoundClass,
}

impl<'a> Condensed<'a> {
    /// Condensed problem on a mesh; `f0` must solve the comparison problem.
    pub fn on_mesh(
        mesh: &Mesh,
        l: &Medium,
        l0: &Medium,
        src: &SourceData,
        f0: &FieldState,
        h0: &'a dyn H0Applier,
    ) -> Result<Self> {
        let comparison_value = functional::evaluate_functional(f0, l0, src, mesh)?.total;
        Ok(Condensed {
            h0,
            dinv: DifferenceInverse::on_mesh(l, l0)?,
            f0: f0.values.clone(),
            comparison_value,
            class: classify_bound(l, l0)?,
        })
    }

    /// [(ℒ − ℒ₀)⁻¹ + ℋ₀]T.
    pub fn apply(&self, t: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.h0.apply(t)?;
        linalg::axpy(1.0, &self.dinv.apply(t), &mut y);
        Ok(y)
    }

    pub fn evaluate(&self, t: &[f64]) -> Result<CondensedEvaluation> {
        if t.len() != self.f0.len() {
            return Err(Error::Dimension("polarization length does not match F₀".into()));
        }
        let w = self.h0.weights();
        let kt = self.apply(t)?;
        let mut value = self.comparison_value;
        for i in 0..t.len() {
            value += w[i] * (t[i] * self.f0[i] - 0.5 * t[i] * kt[i]);
        }
        let residual: Vec<f64> = kt.iter().zip(&self.f0).map(|(k, f)| k - f).collect();
        let residual_norm = linalg::norm(&residual);
        Ok(CondensedEvaluation {
            value,
            residual,
            residual_norm,
        })
    }

    /// F = F₀ − ℋ₀T.
    pub fn field(&self, t: &[f64]) -> Result<Vec<f64>> {
        let mut f = self.f0.clone();
        linalg::axpy(-1.0, &self.h0.apply(t)?, &mut f);
        Ok(f)
    }

    /// Dense matrix of W[(ℒ − ℒ₀)⁻¹ + ℋ₀].
    pub fn weighted_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.f0.len();
        let w = self.h0.weights();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e)?;
            for i in 0..n {
                m[(i, j)] = w[i] * col[i];
            }
            e[j] = 0.0;
        }
        Ok(m)
    }

    pub fn solve(&self, method: CondensedMethod, tol: f64, max_iterations: usize) -> Result<CondensedSolution> {
        let (t, iterations, converged) = match method {
            CondensedMethod::Dense => {
                let m = self.weighted_matrix()?;
                let rhs: Vec<f64> = self.f0.iter().zip(self.h0.weights()).map(|(f, w)| f * w).collect();
                let t = m
                    .lu()
                    .solve(&linalg::to_dvector(&rhs))
                    .ok_or_else(|| Error::Singular("condensed polarization operator".into()))?;
                (t.as_slice().to_vec(), 0, true)
            }
            CondensedMethod::ConjugateGradient => self.solve_cg(tol, max_iterations)?,
        };
        let evaluation = self.evaluate(&t)?;
        Ok(CondensedSolution {
            t,
            evaluation,
            iterations,
            converged,
        })
    }

    /// CG on ±W[(ℒ − ℒ₀)⁻¹ + ℋ₀]T = ±WF₀, with the sign making it positive.
    fn solve_cg(&self, tol: f64, max_iterations: usize) -> Result<(Vec<f64>, usize, bool)> {
        let sign = match self.class {
            BoundClass::MinimumPrinciple => -1.0,
            BoundClass::SaddlePrinciple => 1.0,
            BoundClass::Indefinite => {
                return Err(Error::Indefinite(
                    "condensed operator of an indefinite comparison medium; use the dense method".into(),
                ))
            }
        };
        let w = self.h0.weights().to_vec();
        let op = |x: &[f64]| -> Result<Vec<f64>> {
            Ok(self.apply(x)?.iter().zip(&w).map(|(y, w)| sign * w * y).collect())
        };
        let b: Vec<f64> = self.f0.iter().zip(&w).map(|(f, w)| sign * w * f).collect();
        let bnorm = linalg::norm(&b);
        let mut x = vec![0.0; b.len()];
        if bnorm == 0.0 {
            return Ok((x, 0, true));
        }
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = linalg::dot(&r, &r);
        for it in 0..max_iterations {
            if rr.sqrt() <= tol * bnorm {
                return Ok((x, it, true));
            }
            let ap = op(&p)?;
            let pap = linalg::dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Indefinite(format!("condensed operator gave pᵀAp = {pap:e}")));
            }
            let alpha = rr / pap;
            linalg::axpy(alpha, &p, &mut x);
            linalg::axpy(-alpha, &ap, &mut r);
            let rr_new = linalg::dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
        }
        let converged = rr.sqrt() <= tol * bnorm;
        Ok((x, max_iterations, converged))
    }
}
