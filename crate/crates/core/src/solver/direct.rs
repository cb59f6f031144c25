//! Direct solve of the discrete complex field equations, used as the
//! verification oracle for the minimization.
//!
//! With nodal potential Φ, cell tensor Z_c (C, r or μ⁻¹) and nodal tensor
//! Z_n (ρ, k or ε) the discrete equations are
//!
//! ```text
//! (BᵀW Z_c B − ω² M Z_n) Φ = R + κ τ
//! ```
//!
//! with κ = 1, −iω, iω and R = M f, BᵀW r f, iω M j for elastic, acoustic
//! and electromagnetic problems.  τ are the integrated boundary traces
//! (σ·n, v·n, H·n).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{ComplexFields, Layout, Location, Operators, PhysicalCondition};
use crate::fields::medium::distribute_tensors;
use crate::linalg::{BandedLu, CMatrix};
use crate::moduli::Physics;
use crate::solver::problem::PhysicalProblem;

/// Upper limit on the number of complex unknowns.
pub const MAX_DIRECT_UNKNOWNS: usize = 50_000;

/// Assembled complex system before boundary conditions.
pub struct ComplexSystem {
    pub layout: Layout,
    pub entries: Vec<(usize, usize, Complex64)>,
    pub rhs: Vec<Complex64>,
    pub kappa: Complex64,
    /// Cell tensors, kept for flux recovery.
    cell_tensor: Vec<CMatrix>,
}

fn complex_gradient(ops: &Operators, v: &[Complex64]) -> Vec<Complex64> {
    let re: Vec<f64> = v.iter().map(|z| z.re).collect();
    let im: Vec<f64> = v.iter().map(|z| z.im).collect();
    ops.gradient(&re)
        .into_iter()
        .zip(ops.gradient(&im))
        .map(|(a, b)| Complex64::new(a, b))
        .collect()
}

/// Assemble K and R (no boundary conditions applied).
pub fn assemble_complex_system(p: &PhysicalProblem) -> Result<ComplexSystem> {
    let l = p.layout();
    if l.n_potential() > MAX_DIRECT_UNKNOWNS {
        return Err(Error::Unsupported(format!(
            "direct solve limited to {MAX_DIRECT_UNKNOWNS} unknowns, problem has {}",
            l.n_potential()
        )));
    }
    let tensors = distribute_tensors(&p.mesh, &l, &p.regions)?;
    let ops = Operators::new(&p.mesh, l);
    let (np, nf) = (l.n_pot, l.n_flux);
    let w = p.omega;
    let iw = Complex64::new(0.0, w);
    let mut entries = Vec::new();
    // BᵀW Z_c B, cell by cell
    let (offs, cols, vals) = ops.grad.csr_data();
    for c in 0..l.n_cells {
        let vol = p.mesh.cell_volume(c);
        let z = &tensors.cell[c];
        for a in 0..nf {
            for b in 0..nf {
                let zab = z[(a, b)] * vol;
                if zab.norm() == 0.0 {
                    continue;
                }
                let (ra, rb) = (c * nf + a, c * nf + b);
                for ia in offs[ra]..offs[ra + 1] {
                    for ib in offs[rb]..offs[rb + 1] {
                        entries.push((cols[ia], cols[ib], zab * vals[ia] * vals[ib]));
                    }
                }
            }
        }
    }
    for n in 0..l.n_nodes {
        let m = p.mesh.node_weight(n);
        for a in 0..np {
            for b in 0..np {
                entries.push((n * np + a, n * np + b, -w * w * m * tensors.node[n][(a, b)]));
            }
        }
    }
    let mut rhs = vec![Complex64::new(0.0, 0.0); l.n_potential()];
    let kappa = match l.physics {
        Physics::Elastic => Complex64::new(1.0, 0.0),
        Physics::Acoustic => -iw,
        Physics::Electromagnetic => iw,
    };
    match l.source_location() {
        Location::Node => {
            let scale = if l.physics == Physics::Electromagnetic { iw } else { Complex64::new(1.0, 0.0) };
            for (i, r) in rhs.iter_mut().enumerate() {
                *r = scale * p.mesh.node_weight(i / np) * p.body[i];
            }
        }
        Location::Cell => {
            // BᵀW r f
            let mut rf = vec![Complex64::new(0.0, 0.0); l.n_flux_total()];
            for c in 0..l.n_cells {
                for a in 0..nf {
                    for b in 0..nf {
                        rf[c * nf + a] += tensors.cell[c][(a, b)] * p.body[c * nf + b] * p.mesh.cell_volume(c);
                    }
                }
            }
            for (r, f) in rf.iter().enumerate() {
                for idx in offs[r]..offs[r + 1] {
                    rhs[cols[idx]] += vals[idx] * f;
                }
            }
        }
    }
    Ok(ComplexSystem {
        layout: l,
        entries,
        rhs,
        kappa,
        cell_tensor: tensors.cell,
    })
}

fn bandwidth(entries: &[(usize, usize, Complex64)]) -> (usize, usize) {
    entries.iter().fold((0, 0), |(kl, ku), &(i, j, _)| {
        if i > j {
            (kl.max(i - j), ku)
        } else {
            (kl, ku.max(j - i))
        }
    })
}

/// Solve the complex equations with the physical boundary conditions of
/// `p` by banded LU.  Returns potentials, fluxes (σ, v or H) and traces.
pub fn solve_direct_complex(p: &PhysicalProblem) -> Result<ComplexFields> {
    let sys = assemble_complex_system(p)?;
    let l = sys.layout;
    let np = l.n_pot;
    let n = l.n_potential();
    let mut dirichlet = vec![None; n];
    let mut rhs = sys.rhs.clone();
    for (b, &node) in p.mesh.boundary_nodes().iter().enumerate() {
        for c in 0..np {
            let i = node * np + c;
            match p.conditions[b * np + c] {
                PhysicalCondition::Potential(z) => dirichlet[i] = Some(z),
                PhysicalCondition::Trace(t) => rhs[i] += sys.kappa * t,
            }
        }
    }
    let mut entries: Vec<(usize, usize, Complex64)> =
        sys.entries.iter().copied().filter(|&(i, _, _)| dirichlet[i].is_none()).collect();
    for (i, d) in dirichlet.iter().enumerate() {
        if let Some(z) = d {
            entries.push((i, i, Complex64::new(1.0, 0.0)));
            rhs[i] = *z;
        }
    }
    let (kl, ku) = bandwidth(&entries);
    let lu = BandedLu::factor(n, kl, ku, &entries)?;
    let phi = lu.solve(&rhs);
    Ok(recover_fields(p, &sys, phi))
}

/// Fluxes and traces from a nodal potential.
fn recover_fields(p: &PhysicalProblem, sys: &ComplexSystem, phi: Vec<Complex64>) -> ComplexFields {
    let l = sys.layout;
    let (np, nf) = (l.n_pot, l.n_flux);
    let ops = Operators::new(&p.mesh, l);
    let iw = Complex64::new(0.0, p.omega);
    let grad = complex_gradient(&ops, &phi);
    let mut flux = vec![Complex64::new(0.0, 0.0); l.n_flux_total()];
    for c in 0..l.n_cells {
        // acoustic: v = r(f − ∇P)/(iω); elastic: σ = C∇u; EM: H = μ⁻¹∇E/(iω)
        let arg: Vec<Complex64> = (0..nf)
            .map(|a| {
                let g = grad[c * nf + a];
                match l.physics {
                    Physics::Elastic => g,
                    Physics::Acoustic => (p.body[c * nf + a] - g) / iw,
                    Physics::Electromagnetic => g / iw,
                }
            })
            .collect();
        for a in 0..nf {
            flux[c * nf + a] = (0..nf).map(|b| sys.cell_tensor[c][(a, b)] * arg[b]).sum();
        }
    }
    // τ = (KΦ − R)/κ at boundary rows
    let mut kphi = vec![Complex64::new(0.0, 0.0); l.n_potential()];
    for &(i, j, v) in &sys.entries {
        kphi[i] += v * phi[j];
    }
    let mut trace = Vec::with_capacity(l.n_trace());
    for &node in p.mesh.boundary_nodes() {
        for c in 0..np {
            let i = node * np + c;
            trace.push((kphi[i] - sys.rhs[i]) / sys.kappa);
        }
    }
    ComplexFields {
        layout: l,
        potential: phi,
        flux,
        trace,
    }
}

/// Dense copy of the complex system matrix (for conditioning checks on
/// small problems).
pub fn dense_system_matrix(p: &PhysicalProblem) -> Result<CMatrix> {
    let sys = assemble_complex_system(p)?;
    let n = sys.layout.n_potential();
    let mut m = CMatrix::zeros(n, n);
    for &(i, j, v) in &sys.entries {
        m[(i, j)] += v;
    }
    Ok(m)
}

/// Residual of the discrete equations for given complex fields, relative
/// to the load: ‖KΦ − R − κτ‖ / (‖R‖ + |κ|‖τ‖) over all nodes, with τ = 0
/// at interior nodes.
pub fn equation_residual(p: &PhysicalProblem, fields: &ComplexFields) -> Result<f64> {
    let sys = assemble_complex_system(p)?;
    let np = sys.layout.n_pot;
    let mut r: Vec<Complex64> = sys.rhs.iter().map(|z| -z).collect();
    for &(i, j, v) in &sys.entries {
        r[i] += v * fields.potential[j];
    }
    let mut load: f64 = sys.rhs.iter().map(|z| z.norm_sqr()).sum::<f64>();
    for (b, &node) in p.mesh.boundary_nodes().iter().enumerate() {
        for c in 0..np {
            let t = sys.kappa * fields.trace[b * np + c];
            r[node * np + c] -= t;
            load += t.norm_sqr();
        }
    }
    let res: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(res / load.sqrt().max(f64::MIN_POSITIVE))
}
