//! Discrete fields: meshes, layouts, constraint completion of trial fields,
//! constitutive application and source data.

pub mod boundary;
pub mod layout;
pub mod medium;
pub mod mesh;
pub mod table;

use nalgebra_sparse::CsrMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Triplets};

pub use boundary::{
    physical_conditions, BoundaryEntry, BoundarySpec, PhysicalCondition, PotentialCondition, SideCondition,
    TraceCondition,
};
pub use layout::{Coefficients, Layout, Location, Operators};
pub use medium::{field_weights, Medium, MediumTensors};
pub use mesh::Mesh;

/// Which side of the principle a constraint map describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Primal,
    Dual,
}

impl Side {
    /// Slot (0 = x, 1 = y) receiving the divergence at nodes.
    fn div_slot(self) -> usize {
        match self {
            Side::Primal => 1,
            Side::Dual => 0,
        }
    }

    /// Slot receiving the gradient on cells.
    fn grad_slot(self) -> usize {
        match self {
            Side::Primal => 0,
            Side::Dual => 1,
        }
    }
}

struct SideCoefficients {
    node_pot: f64,
    node_div: f64,
    cell_grad: f64,
    cell_flux: f64,
    source: f64,
}

fn side_coefficients(k: &Coefficients, side: Side) -> SideCoefficients {
    match side {
        Side::Primal => SideCoefficients {
            node_pot: k.alpha_nx,
            node_div: k.alpha_ny,
            cell_grad: k.alpha_cx,
            cell_flux: k.alpha_cy,
            source: k.gamma_primal,
        },
        Side::Dual => SideCoefficients {
            node_pot: k.beta_ny,
            node_div: k.beta_nx,
            cell_grad: k.beta_cy,
            cell_flux: k.beta_cx,
            source: k.gamma_dual,
        },
    }
}

/// Linear map from the stacked [potential, flux, trace] vector to a
/// quadruple vector (without source terms).
pub fn constraint_map(ops: &Operators, coeffs: &Coefficients, side: Side) -> CsrMatrix<f64> {
    let l = &ops.layout;
    let k = side_coefficients(coeffs, side);
    let (np, nf) = (l.n_pot, l.n_flux);
    let mut t = Triplets::new(l.field_len(), l.full_len());
    let (gs, ds) = (side.grad_slot(), side.div_slot());
    let (fs, ps) = (1 - gs, 1 - ds);
    for c in 0..l.n_cells {
        for comp in 0..nf {
            let row_g = l.cell_offset(c) + gs * nf + comp;
            let r = c * nf + comp;
            let (offs, cols, vals) = ops.grad.csr_data();
            for idx in offs[r]..offs[r + 1] {
                t.push(row_g, cols[idx], k.cell_grad * vals[idx]);
            }
            t.push(l.cell_offset(c) + fs * nf + comp, l.flux_index(c, comp), k.cell_flux);
        }
    }
    let (offs, cols, vals) = ops.grad_t_w.csr_data();
    for n in 0..l.n_nodes {
        let m = ops.node_weight[n];
        for comp in 0..np {
            let i = n * np + comp;
            t.push(l.node_offset(n) + ps * np + comp, l.pot_index(n, comp), k.node_pot);
            let row_d = l.node_offset(n) + ds * np + comp;
            for idx in offs[i]..offs[i + 1] {
                t.push(row_d, l.n_potential() + cols[idx], -k.node_div * vals[idx] / m);
            }
        }
    }
    for (b, &n) in ops.boundary_nodes.iter().enumerate() {
        let m = ops.node_weight[n];
        for comp in 0..np {
            t.push(l.node_offset(n) + ds * np + comp, l.trace_index(b, comp), k.node_div / m);
        }
    }
    t.build()
}

/// Source contribution to a quadruple vector from the real part of the body
/// source that belongs to `side`.
pub fn source_vector(layout: &Layout, coeffs: &Coefficients, side: Side, source: &[f64]) -> Vec<f64> {
    let k = side_coefficients(coeffs, side);
    let mut out = vec![0.0; layout.field_len()];
    match layout.source_location() {
        Location::Cell => {
            let nf = layout.n_flux;
            for c in 0..layout.n_cells {
                for comp in 0..nf {
                    out[layout.cell_offset(c) + side.grad_slot() * nf + comp] = k.source * source[c * nf + comp];
                }
            }
        }
        Location::Node => {
            let np = layout.n_pot;
            for n in 0..layout.n_nodes {
                for comp in 0..np {
                    out[layout.node_offset(n) + side.div_slot() * np + comp] = k.source * source[n * np + comp];
                }
            }
        }
    }
    out
}

/// Split a complex body source into the parts entering F and G.
pub fn split_source(layout: &Layout, body: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let re: Vec<f64> = body.iter().map(|z| z.re).collect();
    let im: Vec<f64> = body.iter().map(|z| z.im).collect();
    if layout.source_primal_is_real() {
        (re, im)
    } else {
        (im, re)
    }
}

/// Primal unknowns: nodal potential φ, cellwise flux q, boundary traces τ'.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalFields {
    pub potential: Vec<f64>,
    pub flux: Vec<f64>,
    pub trace: Vec<f64>,
}

/// Dual unknowns: ψ, s and τ''.
pub type DualFields = PrimalFields;

impl PrimalFields {
    pub fn zeros(layout: &Layout) -> Self {
        PrimalFields {
            potential: vec![0.0; layout.n_potential()],
            flux: vec![0.0; layout.n_flux_total()],
            trace: vec![0.0; layout.n_trace()],
        }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.potential.clone();
        v.extend_from_slice(&self.flux);
        v.extend_from_slice(&self.trace);
        v
    }

    pub fn from_stacked(layout: &Layout, v: &[f64]) -> Result<Self> {
        if v.len() != layout.full_len() {
            return Err(Error::Dimension("stacked unknown vector has the wrong length".into()));
        }
        let (a, b) = (layout.n_potential(), layout.n_potential() + layout.n_flux_total());
        Ok(PrimalFields {
            potential: v[..a].to_vec(),
            flux: v[a..b].to_vec(),
            trace: v[b..].to_vec(),
        })
    }

    fn check(&self, layout: &Layout) -> Result<()> {
        if self.potential.len() != layout.n_potential()
            || self.flux.len() != layout.n_flux_total()
            || self.trace.len() != layout.n_trace()
        {
            return Err(Error::Dimension("primal unknowns do not match the layout".into()));
        }
        Ok(())
    }
}

/// Primal quadruple F: per cell (x, y) of width 2·n_flux, per node (x, y) of
/// width 2·n_pot, together with the unknowns that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub layout: Layout,
    pub values: Vec<f64>,
    pub primal: PrimalFields,
}

/// Dual quadruple G with the same layout as F.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl FieldState {
    pub fn cell(&self, c: usize) -> &[f64] {
        let o = self.layout.cell_offset(c);
        &self.values[o..o + self.layout.cell_width()]
    }

    pub fn node(&self, n: usize) -> &[f64] {
        let o = self.layout.node_offset(n);
        &self.values[o..o + self.layout.node_width()]
    }
}

/// Source data: body source, natural-condition targets and the admissible
/// dual field G₀ built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceData {
    pub layout: Layout,
    pub omega: f64,
    pub body: Vec<Complex64>,
    /// Constant part of F coming from the primal part of the body source.
    pub primal_source: Vec<f64>,
    /// Constant part of G coming from the dual part of the body source.
    pub dual_source: Vec<f64>,
    /// Dual unknowns (ψ₀, s₀, τ''₀) generating G₀.
    pub dual: DualFields,
    pub g0: DualState,
}

impl SourceData {
    pub fn has_body_source(&self) -> bool {
        self.body.iter().any(|z| z.norm() != 0.0)
    }

    /// ψ₀ at a boundary entry.
    pub fn dual_potential_target(&self, mesh: &Mesh, b: usize, comp: usize) -> f64 {
        let n = mesh.boundary_nodes()[b];
        self.dual.potential[n * self.layout.n_pot + comp]
    }

    pub fn dual_trace_target(&self, b: usize, comp: usize) -> f64 {
        self.dual.trace[b * self.layout.n_pot + comp]
    }
}

/// Fill dependent components of F from the primal unknowns.
pub fn complete_trial_field(primal: &PrimalFields, src: &SourceData, mesh: &Mesh) -> Result<FieldState> {
    let layout = src.layout;
    primal.check(&layout)?;
    let ops = Operators::new(mesh, layout);
    let coeffs = Coefficients::new(layout.physics, src.omega)?;
    let map = constraint_map(&ops, &coeffs, Side::Primal);
    let mut values = linalg::spmv(&map, &primal.stacked());
    linalg::axpy(1.0, &src.primal_source, &mut values);
    Ok(FieldState {
        layout,
        values,
        primal: primal.clone(),
    })
}

/// Dual quadruple generated by dual unknowns and the dual part of the body
/// source (constraint-satisfying by construction).
pub fn complete_dual_field(dual: &DualFields, dual_source: &[f64], mesh: &Mesh, layout: Layout, omega: f64) -> Result<DualState> {
    dual.check(&layout)?;
    let ops = Operators::new(mesh, layout);
    let coeffs = Coefficients::new(layout.physics, omega)?;
    let map = constraint_map(&ops, &coeffs, Side::Dual);
    let mut values = linalg::spmv(&map, &dual.stacked());
    linalg::axpy(1.0, dual_source, &mut values);
    Ok(DualState { layout, values })
}

/// G = ℒF entity by entity.
pub fn apply_constitutive(f: &FieldState, medium: &Medium) -> Result<DualState> {
    f.layout.same_as(&medium.layout)?;
    Ok(DualState {
        layout: f.layout,
        values: medium.apply(&f.values)?,
    })
}

/// Admissible G₀: the dual potential carries the ψ targets on the boundary
/// and vanishes inside, the dual flux vanishes, the dual traces carry the
/// τ'' targets, and the dual part of the body source is absorbed through the
/// dual constraint.
pub fn build_source_data(body: &[Complex64], bc: &BoundarySpec, mesh: &Mesh, omega: f64) -> Result<SourceData> {
    let layout = bc.layout;
    let coeffs = Coefficients::new(layout.physics, omega)?;
    if body.len() != layout.source_len() {
        return Err(Error::Dimension(format!(
            "body source needs {} values, got {}",
            layout.source_len(),
            body.len()
        )));
    }
    let (primal_part, dual_part) = split_source(&layout, body);
    let primal_source = source_vector(&layout, &coeffs, Side::Primal, &primal_part);
    let dual_source = source_vector(&layout, &coeffs, Side::Dual, &dual_part);
    let mut dual = DualFields::zeros(&layout);
    let psi = bc.dual_potential_targets();
    for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
        for k in 0..layout.n_pot {
            dual.potential[n * layout.n_pot + k] = psi[b * layout.n_pot + k];
        }
    }
    dual.trace = bc.dual_trace_targets();
    let g0 = complete_dual_field(&dual, &dual_source, mesh, layout, omega)?;
    Ok(SourceData {
        layout,
        omega,
        body: body.to_vec(),
        primal_source,
        dual_source,
        dual,
        g0,
    })
}

/// Recover (ψ, s, τ'') from an arbitrary dual quadruple.  τ'' is returned at
/// every node: interior entries are the mismatch of the nodal constraint.
/// Also returns the per-cell mismatch of the gradient constraint.
pub struct DualRecovery {
    pub potential: Vec<f64>,
    pub flux: Vec<f64>,
    pub nodal_trace: Vec<f64>,
    pub cell_mismatch: Vec<f64>,
}

pub fn recover_dual(g: &DualState, src: &SourceData, mesh: &Mesh) -> Result<DualRecovery> {
    let l = g.layout;
    l.same_as(&src.layout)?;
    let k = Coefficients::new(l.physics, src.omega)?;
    let ops = Operators::new(mesh, l);
    let (np, nf) = (l.n_pot, l.n_flux);
    let mut potential = vec![0.0; l.n_potential()];
    let mut div = vec![0.0; l.n_potential()];
    for n in 0..l.n_nodes {
        let o = l.node_offset(n);
        for c in 0..np {
            potential[n * np + c] = g.values[o + np + c] / k.beta_ny;
            div[n * np + c] = (g.values[o + c] - src.dual_source[o + c]) / k.beta_nx;
        }
    }
    let mut flux = vec![0.0; l.n_flux_total()];
    for c in 0..l.n_cells {
        let o = l.cell_offset(c);
        for j in 0..nf {
            flux[c * nf + j] = g.values[o + j] / k.beta_cx;
        }
    }
    let nodal_trace = ops.implied_trace(&div, &flux);
    let grad = ops.gradient(&potential);
    let mut cell_mismatch = vec![0.0; l.n_flux_total()];
    for c in 0..l.n_cells {
        let o = l.cell_offset(c);
        for j in 0..nf {
            let i = c * nf + j;
            cell_mismatch[i] = g.values[o + nf + j] - k.beta_cy * grad[i] - src.dual_source[o + nf + j];
        }
    }
    Ok(DualRecovery {
        potential,
        flux,
        nodal_trace,
        cell_mismatch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    /// τ'' − τ''₀ where the primal potential is free.
    DualTrace,
    /// ψ₀ − ψ where the primal trace is free.
    DualPotential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryResidual {
    pub boundary: usize,
    pub component: usize,
    pub kind: ResidualKind,
    pub value: f64,
}

/// Natural-condition mismatch on the boundary.
pub fn boundary_residual(
    g: &DualState,
    bc: &BoundarySpec,
    src: &SourceData,
    mesh: &Mesh,
) -> Result<Vec<BoundaryResidual>> {
    let rec = recover_dual(g, src, mesh)?;
    let np = bc.layout.n_pot;
    let mut out = Vec::new();
    for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
        for c in 0..np {
            let e = &bc.entries[b * np + c];
            if let PotentialCondition::DualTraceTarget(t) = e.potential {
                out.push(BoundaryResidual {
                    boundary: b,
                    component: c,
                    kind: ResidualKind::DualTrace,
                    value: rec.nodal_trace[n * np + c] - t,
                });
            }
            if let TraceCondition::DualPotentialTarget(t) = e.trace {
                out.push(BoundaryResidual {
                    boundary: b,
                    component: c,
                    kind: ResidualKind::DualPotential,
                    value: t - rec.potential[n * np + c],
                });
            }
        }
    }
    Ok(out)
}

/// Complex fields: nodal potential, cellwise flux and boundary traces.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFields {
    pub layout: Layout,
    pub potential: Vec<Complex64>,
    pub flux: Vec<Complex64>,
    pub trace: Vec<Complex64>,
}

fn join(primal: &[f64], dual: &[f64], primal_is_real: bool) -> Vec<Complex64> {
    primal
        .iter()
        .zip(dual)
        .map(|(&p, &d)| {
            if primal_is_real {
                Complex64::new(p, d)
            } else {
                Complex64::new(d, p)
            }
        })
        .collect()
}

fn part(v: &[Complex64], real: bool) -> Vec<f64> {
    v.iter().map(|z| if real { z.re } else { z.im }).collect()
}

impl ComplexFields {
    pub fn from_parts(layout: Layout, primal: &PrimalFields, dual: &DualFields) -> Self {
        let fr = layout.flux_primal_is_real();
        ComplexFields {
            layout,
            potential: join(&primal.potential, &dual.potential, true),
            flux: join(&primal.flux, &dual.flux, fr),
            trace: join(&primal.trace, &dual.trace, fr),
        }
    }

    pub fn primal(&self) -> PrimalFields {
        let fr = self.layout.flux_primal_is_real();
        PrimalFields {
            potential: part(&self.potential, true),
            flux: part(&self.flux, fr),
            trace: part(&self.trace, fr),
        }
    }

    pub fn dual(&self) -> DualFields {
        let fr = self.layout.flux_primal_is_real();
        PrimalFields {
            potential: part(&self.potential, false),
            flux: part(&self.flux, !fr),
            trace: part(&self.trace, !fr),
        }
    }

    /// Complex fields from a minimizer F and its dual G = ℒF.  The dual
    /// trace is taken from the recovered nodal traces on the boundary.
    pub fn from_states(f: &FieldState, g: &DualState, src: &SourceData, mesh: &Mesh) -> Result<Self> {
        let rec = recover_dual(g, src, mesh)?;
        let np = f.layout.n_pot;
        let mut trace = vec![0.0; f.layout.n_trace()];
        for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
            for c in 0..np {
                trace[b * np + c] = rec.nodal_trace[n * np + c];
            }
        }
        let dual = PrimalFields {
            potential: rec.potential,
            flux: rec.flux,
            trace,
        };
        Ok(Self::from_parts(f.layout, &f.primal, &dual))
    }

    /// Undo a rotation by e^{iθ}: fluxes and traces scale by e^{-iθ}.
    pub fn unrotated(&self, theta: f64) -> Self {
        let p = Complex64::from_polar(1.0, -theta);
        ComplexFields {
            layout: self.layout,
            potential: self.potential.clone(),
            flux: self.flux.iter().map(|z| z * p).collect(),
            trace: self.trace.iter().map(|z| z * p).collect(),
        }
    }

    /// Relative difference in the Euclidean norm over all components.
    pub fn relative_difference(&self, other: &ComplexFields) -> f64 {
        let diff = |a: &[Complex64], b: &[Complex64]| -> (f64, f64) {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
            let n: f64 = b.iter().map(|y| y.norm_sqr()).sum();
            (d, n)
        };
        let (d1, n1) = diff(&self.potential, &other.potential);
        let (d2, n2) = diff(&self.flux, &other.flux);
        let (d3, n3) = diff(&self.trace, &other.trace);
        ((d1 + d2 + d3) / (n1 + n2 + n3).max(f64::MIN_POSITIVE)).sqrt()
    }
}
