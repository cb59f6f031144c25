//! The minimization functional, its surface-only forms, the tomography
//! slack and the physical dissipation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{
    field_weights, BoundarySpec, Coefficients, ComplexFields, FieldState, Layout, Medium, Mesh, Operators, SourceData,
};
use crate::linalg::CMatrix;
use crate::moduli::Physics;
use crate::solver::dofs::Quadratic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValue {
    pub volume_term: f64,
    pub boundary_term: f64,
    pub total: f64,
}

impl FunctionalValue {
    fn new(volume_term: f64, boundary_term: f64) -> Self {
        FunctionalValue {
            volume_term,
            boundary_term,
            total: volume_term + boundary_term,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationReport {
    pub mean_power: f64,
    /// Loss in the primal tensor (C, k or ε).
    pub stiffness_part: f64,
    /// Loss in the dual tensor (ρ, r or μ⁻¹).
    pub inertial_part: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackReport {
    pub slack: f64,
    pub scale: f64,
}

fn check(f: &FieldState, medium: &Medium, src: &SourceData, mesh: &Mesh) -> Result<()> {
    f.layout.same_as(&medium.layout)?;
    f.layout.same_as(&src.layout)?;
    if f.layout.n_nodes != mesh.n_nodes() || f.layout.n_cells != mesh.n_cells() {
        return Err(Error::Dimension("fields do not belong to this mesh".into()));
    }
    Ok(())
}

fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// J(F) = ∫(−G₀ᵀF + ½FᵀℒF).
pub fn evaluate_functional(f: &FieldState, medium: &Medium, src: &SourceData, mesh: &Mesh) -> Result<FunctionalValue> {
    check(f, medium, src, mesh)?;
    let w = field_weights(mesh, &f.layout);
    let linear = -weighted_dot(&w, &src.g0.values, &f.values);
    Ok(FunctionalValue::new(linear + medium.energy(mesh, &f.values), 0.0))
}

/// Equivalent form after summation by parts: the volume term keeps only the
/// dual part of the body source, the boundary term only the surface targets.
/// Differs from [`evaluate_functional`] by a data-only constant.
pub fn evaluate_boundary_form(f: &FieldState, medium: &Medium, src: &SourceData, mesh: &Mesh) -> Result<FunctionalValue> {
    check(f, medium, src, mesh)?;
    let l = f.layout;
    let k = Coefficients::new(l.physics, src.omega)?;
    let w = field_weights(mesh, &l);
    let volume = medium.energy(mesh, &f.values) - weighted_dot(&w, &src.dual_source, &f.values);
    let np = l.n_pot;
    let mut boundary = 0.0;
    for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
        for c in 0..np {
            let phi = f.primal.potential[n * np + c];
            let tau = f.primal.trace[b * np + c];
            boundary -= k.pair_a() * phi * src.dual_trace_target(b, c);
            boundary -= k.pair_b() * src.dual_potential_target(mesh, b, c) * tau;
        }
    }
    Ok(FunctionalValue::new(volume, boundary))
}

/// Gradient of J with respect to the free primal unknowns.
pub fn gradient(f: &FieldState, medium: &Medium, src: &SourceData, bc: &BoundarySpec, mesh: &Mesh) -> Result<Vec<f64>> {
    check(f, medium, src, mesh)?;
    let q = Quadratic::assemble(mesh, medium, src, bc, &src.g0.values)?;
    let x = q.dofs.restrict(&f.primal.stacked())?;
    Ok(q.gradient(&x))
}

/// Complex potential and integrated trace at every boundary node and
/// component (index b·n_pot + c).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceData {
    pub layout: Layout,
    pub potential: Vec<Complex64>,
    pub trace: Vec<Complex64>,
}

impl SurfaceData {
    pub fn from_fields(fields: &ComplexFields, mesh: &Mesh) -> Self {
        let np = fields.layout.n_pot;
        let potential = mesh
            .boundary_nodes()
            .iter()
            .flat_map(|&n| (0..np).map(move |c| n * np + c))
            .map(|i| fields.potential[i])
            .collect();
        SurfaceData {
            layout: fields.layout,
            potential,
            trace: fields.trace.clone(),
        }
    }

    fn check(&self, layout: &Layout) -> Result<()> {
        self.layout.same_as(layout)?;
        if self.potential.len() != layout.n_trace() || self.trace.len() != layout.n_trace() {
            return Err(Error::Validation("surface data must cover every boundary node".into()));
        }
        Ok(())
    }

    /// (φ, ψ, τ', τ'') at entry i.
    fn parts(&self, i: usize) -> (f64, f64, f64, f64) {
        let p = self.potential[i];
        let t = self.trace[i];
        let (tp, td) = if self.layout.flux_primal_is_real() { (t.re, t.im) } else { (t.im, t.re) };
        (p.re, p.im, tp, td)
    }

    fn norm(&self) -> f64 {
        let a: f64 = self.potential.iter().chain(&self.trace).map(|z| z.norm_sqr()).sum();
        a.sqrt()
    }
}

/// Minimum of J from surface values alone:
/// ½Σ_b [a·φ(τ'' − 2τ''₀) + b·(ψ − 2ψ₀)τ'].
pub fn minimum_value_surface(surface: &SurfaceData, src: &SourceData, mesh: &Mesh) -> Result<f64> {
    surface.check(&src.layout)?;
    if src.has_body_source() {
        return Err(Error::Validation(
            "the surface expression assumes no body source; evaluate the volume functional instead".into(),
        ));
    }
    let k = Coefficients::new(src.layout.physics, src.omega)?;
    let np = src.layout.n_pot;
    let mut s = 0.0;
    for b in 0..mesh.n_boundary() {
        for c in 0..np {
            let (phi, psi, tp, td) = surface.parts(b * np + c);
            let td0 = src.dual_trace_target(b, c);
            let psi0 = src.dual_potential_target(mesh, b, c);
            s += k.pair_a() * phi * (td - 2.0 * td0) + k.pair_b() * (psi - 2.0 * psi0) * tp;
        }
    }
    Ok(0.5 * s)
}

/// Slack of the tomography inequality for a trial field against complete
/// complex surface measurements: J(trial) − J_min with the natural targets
/// set to the measured dual parts.  Nonnegative whenever the measurements
/// come from the medium in `medium` without body sources.
///
/// `scale` is ‖data‖·(‖data‖ + ‖F‖_W), the reference for relative tolerances.
pub fn tomography_slack(trial: &FieldState, measured: &SurfaceData, medium: &Medium, mesh: &Mesh) -> Result<SlackReport> {
    let l = trial.layout;
    l.same_as(&medium.layout)?;
    measured.check(&l)?;
    let k = Coefficients::new(l.physics, medium.omega)?;
    let np = l.n_pot;
    let mut cross = 0.0;
    let mut constant = 0.0;
    for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
        for c in 0..np {
            let i = b * np + c;
            let (phi, psi, tp, td) = measured.parts(i);
            let trial_phi = trial.primal.potential[n * np + c];
            let trial_tau = trial.primal.trace[i];
            cross += k.pair_a() * trial_phi * td + k.pair_b() * psi * trial_tau;
            constant += k.pair_a() * phi * td + k.pair_b() * psi * tp;
        }
    }
    let slack = medium.energy(mesh, &trial.values) - cross + 0.5 * constant;
    let w = field_weights(mesh, &l);
    let fnorm = weighted_dot(&w, &trial.values, &trial.values).sqrt();
    let d = measured.norm();
    Ok(SlackReport {
        slack,
        scale: d * (d + fnorm),
    })
}

fn quad_im(z: &[Complex64], t: &CMatrix) -> f64 {
    // Im(z̄ᵀ T z)
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..z.len() {
        for j in 0..z.len() {
            s += z[i].conj() * t[(i, j)] * z[j];
        }
    }
    s.im
}

/// Time-averaged dissipated power of complex fields in the medium.
///
/// Elastic: ½ω[∫Im(ēᵀCe) − ω²∫Im(ūᵀρu)] with e = ∇u.  Acoustic:
/// ½ω[∫Im(p̄ᵀrp) − ∫k''|P|²] with p = r⁻¹v.  Electromagnetic:
/// ½ω[∫ε''|E|² − ∫m''|B|²] with B = ∂E/(iω).  `stiffness_part` is the first
/// bracket term, `inertial_part` the second.
pub fn dissipation_rate(fields: &ComplexFields, medium: &Medium, mesh: &Mesh) -> Result<DissipationReport> {
    let l = fields.layout;
    l.same_as(&medium.layout)?;
    let tensors = medium
        .tensors
        .as_ref()
        .ok_or_else(|| Error::Validation("dissipation needs a medium built from physical moduli".into()))?;
    let omega = medium.omega;
    let ops = Operators::new(mesh, l);
    let grad = |v: &[Complex64]| -> Vec<Complex64> {
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        let im: Vec<f64> = v.iter().map(|z| z.im).collect();
        ops.gradient(&re)
            .into_iter()
            .zip(ops.gradient(&im))
            .map(|(a, b)| Complex64::new(a, b))
            .collect()
    };
    let (np, nf) = (l.n_pot, l.n_flux);
    let node_sum = |z: &[Complex64]| -> f64 {
        (0..l.n_nodes)
            .map(|n| mesh.node_weight(n) * quad_im(&z[n * np..(n + 1) * np], &tensors.node[n]))
            .sum()
    };
    let cell_sum = |z: &[Complex64]| -> f64 {
        (0..l.n_cells)
            .map(|c| mesh.cell_volume(c) * quad_im(&z[c * nf..(c + 1) * nf], &tensors.cell[c]))
            .sum()
    };
    let (stiffness, inertial) = match l.physics {
        Physics::Elastic => {
            let e = grad(&fields.potential);
            (cell_sum(&e), -omega * omega * node_sum(&fields.potential))
        }
        Physics::Acoustic => {
            let mut p = Vec::with_capacity(l.n_flux_total());
            for c in 0..l.n_cells {
                let rinv = tensors.cell[c]
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Singular(format!("density tensor in cell {c}")))?;
                let v = CMatrix::from_column_slice(nf, 1, &fields.flux[c * nf..(c + 1) * nf]);
                p.extend((rinv * v).iter().copied());
            }
            (-node_sum(&fields.potential), cell_sum(&p))
        }
        Physics::Electromagnetic => {
            let iw = Complex64::new(0.0, omega);
            let b: Vec<Complex64> = grad(&fields.potential).into_iter().map(|z| z / iw).collect();
            (node_sum(&fields.potential), -cell_sum(&b))
        }
    };
    let (sp, ip) = (0.5 * omega * stiffness, 0.5 * omega * inertial);
    Ok(DissipationReport {
        mean_power: sp + ip,
        stiffness_part: sp,
        inertial_part: ip,
    })
}

/// Mean power supplied through the boundary and by the body source.
/// Equals [`dissipation_rate`] for fields satisfying the discrete equations.
pub fn boundary_working_rate(fields: &ComplexFields, body: &[Complex64], mesh: &Mesh, omega: f64) -> Result<f64> {
    let l = fields.layout;
    if body.len() != l.source_len() {
        return Err(Error::Dimension("body source has the wrong length".into()));
    }
    let np = l.n_pot;
    let potential_at = |b: usize, c: usize| fields.potential[mesh.boundary_nodes()[b] * np + c];
    let mut surface = Complex64::new(0.0, 0.0);
    for b in 0..l.n_boundary {
        for c in 0..np {
            surface += potential_at(b, c) * fields.trace[b * np + c].conj();
        }
    }
    let body_node = || -> Complex64 {
        (0..l.n_potential())
            .map(|i| mesh.node_weight(i / np) * body[i] * fields.potential[i].conj())
            .sum()
    };
    Ok(match l.physics {
        // ½ω Im[Σ τ ū + Σ m f ū]
        Physics::Elastic => 0.5 * omega * (surface.conj() + body_node()).im,
        Physics::Acoustic => {
            let nf = l.n_flux;
            let work: Complex64 = (0..l.n_flux_total())
                .map(|i| mesh.cell_volume(i / nf) * body[i] * fields.flux[i].conj())
                .sum();
            -0.5 * surface.re + 0.5 * work.re
        }
        Physics::Electromagnetic => -0.5 * surface.re - 0.5 * body_node().re,
    })
}

/// Weighted Euclidean norm of a quadruple vector.
pub fn field_norm(f: &FieldState, mesh: &Mesh) -> f64 {
    let w = field_weights(mesh, &f.layout);
    weighted_dot(&w, &f.values, &f.values).sqrt()
}
