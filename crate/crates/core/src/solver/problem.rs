//! Physical problem statements and their real variational encodings.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{
    build_source_data, BoundarySpec, Coefficients, DualState, Layout, Location, Medium, Mesh, Operators,
    PhysicalCondition, PotentialCondition, SourceData, TraceCondition,
};
use crate::linalg;
use crate::moduli::{self, ComplexModuli, Physics};

/// Complex boundary-value problem as a user states it.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalProblem {
    pub mesh: Mesh,
    pub physics: Physics,
    pub omega: f64,
    /// One set of moduli per mesh region, in region order.
    pub regions: Vec<ComplexModuli>,
    /// Body force (elastic, nodal), body force density (acoustic, cellwise)
    /// or current (electromagnetic, nodal).
    pub body: Vec<Complex64>,
    /// One condition per boundary node and potential component.
    pub conditions: Vec<PhysicalCondition>,
}

impl PhysicalProblem {
    pub fn new(
        mesh: Mesh,
        physics: Physics,
        omega: f64,
        regions: Vec<ComplexModuli>,
        body: Vec<Complex64>,
        conditions: Vec<PhysicalCondition>,
    ) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Frequency(omega));
        }
        let layout = Layout::new(physics, &mesh)?;
        if regions.len() != mesh.regions().len() {
            return Err(Error::Dimension(format!(
                "mesh has {} regions but {} moduli were given",
                mesh.regions().len(),
                regions.len()
            )));
        }
        if body.len() != layout.source_len() {
            return Err(Error::Dimension(format!(
                "body source needs {} values, got {}",
                layout.source_len(),
                body.len()
            )));
        }
        if conditions.len() != layout.n_trace() {
            return Err(Error::Dimension(format!(
                "{} boundary conditions needed, got {}",
                layout.n_trace(),
                conditions.len()
            )));
        }
        Ok(PhysicalProblem {
            mesh,
            physics,
            omega,
            regions,
            body,
            conditions,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.physics, &self.mesh).expect("validated at construction")
    }

    pub fn is_strictly_passive(&self) -> bool {
        self.regions.iter().all(|m| moduli::check_passivity(m).is_strict())
    }

    /// Moduli, fluxes and (except in acoustics) sources multiplied by e^{iθ}.
    pub fn rotated(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        let body = if self.physics.source_rotates() {
            self.body.iter().map(|z| z * phase).collect()
        } else {
            self.body.clone()
        };
        PhysicalProblem {
            mesh: self.mesh.clone(),
            physics: self.physics,
            omega: self.omega,
            regions: self.regions.iter().map(|m| moduli::rotate_moduli(m, theta).moduli).collect(),
            body,
            conditions: self.conditions.iter().map(|c| c.rotated(phase)).collect(),
        }
    }

    /// θ = 0 when already strictly passive, otherwise the best scanned angle.
    pub fn rotation_angle(&self) -> Result<f64> {
        if self.is_strictly_passive() {
            return Ok(0.0);
        }
        moduli::auto_rotation(&self.regions, 180).ok_or_else(|| {
            let (region, report) = self
                .mesh
                .regions()
                .iter()
                .zip(&self.regions)
                .map(|(name, m)| (name.clone(), moduli::check_passivity(m)))
                .find(|(_, r)| !r.is_strict())
                .expect("some region is not strictly passive");
            let t = if report.primal.class != moduli::PassivityClass::Strict {
                report.primal
            } else {
                report.dual
            };
            Error::Passivity {
                tensor: t.tensor,
                region,
                min_eigenvalue: t.min_eigenvalue,
                hint: "no rotation angle makes every region strictly passive".into(),
            }
        })
    }

    pub fn boundary_spec(&self) -> Result<BoundarySpec> {
        BoundarySpec::from_physical(self.layout(), &self.conditions)
    }
}

/// Real minimization problem: mesh, ℒ, source data and boundary encoding.
#[derive(Debug, Clone)]
pub struct VariationalProblem {
    pub mesh: Mesh,
    pub medium: Medium,
    pub src: SourceData,
    pub bc: BoundarySpec,
}

impl VariationalProblem {
    pub fn new(mesh: Mesh, medium: Medium, src: SourceData, bc: BoundarySpec) -> Result<Self> {
        medium.layout.same_as(&src.layout)?;
        medium.layout.same_as(&bc.layout)?;
        Ok(VariationalProblem { mesh, medium, src, bc })
    }

    /// Full formulation; every region must be strictly passive as given.
    pub fn from_physical(p: &PhysicalProblem) -> Result<Self> {
        let layout = p.layout();
        let medium = Medium::from_regions(&p.mesh, layout, p.omega, &p.regions)?;
        Self::with_medium(p, medium)
    }

    /// Reduced formulation for a real dual tensor (lossless density,
    /// density tensor or permeability).
    pub fn lossless(p: &PhysicalProblem) -> Result<Self> {
        let layout = p.layout();
        let medium = Medium::lossless_from_regions(&p.mesh, layout, p.omega, &p.regions)?;
        Self::with_medium(p, medium)
    }

    fn with_medium(p: &PhysicalProblem, medium: Medium) -> Result<Self> {
        let bc = p.boundary_spec()?;
        let src = build_source_data(&p.body, &bc, &p.mesh, p.omega)?;
        Self::new(p.mesh.clone(), medium, src, bc)
    }

    pub fn layout(&self) -> Layout {
        self.medium.layout
    }

    pub fn omega(&self) -> f64 {
        self.src.omega
    }
}

/// Complete G = ℒF at the entities where the reduced formulation has no
/// block, using the collapsed relation G_x = −Y'·G_y and the dual constraint.
pub fn complete_reduced_dual(g: &DualState, p: &VariationalProblem) -> Result<DualState> {
    let Some(dual) = &p.medium.reduced else {
        return Ok(g.clone());
    };
    let l = p.layout();
    let k = Coefficients::new(l.physics, p.omega())?;
    let ops = Operators::new(&p.mesh, l);
    let (np, nf) = (l.n_pot, l.n_flux);
    let mut out = g.values.clone();
    let dsrc = &p.src.dual_source;
    match l.dual_location() {
        Location::Cell => {
            let psi: Vec<f64> = (0..l.n_potential())
                .map(|i| g.values[l.node_offset(i / np) + np + i % np] / k.beta_ny)
                .collect();
            let grad = ops.gradient(&psi);
            for c in 0..l.n_cells {
                let o = l.cell_offset(c);
                let gy: Vec<f64> = (0..nf).map(|j| k.beta_cy * grad[c * nf + j] + dsrc[o + nf + j]).collect();
                let gx = linalg::mat_vec(&dual[c], &gy);
                for j in 0..nf {
                    out[o + j] = -gx[j];
                    out[o + nf + j] = gy[j];
                }
            }
        }
        Location::Node => {
            let s: Vec<f64> = (0..l.n_flux_total())
                .map(|i| g.values[l.cell_offset(i / nf) + i % nf] / k.beta_cx)
                .collect();
            let btw = linalg::spmv(&ops.grad_t_w, &s);
            for n in 0..l.n_nodes {
                let o = l.node_offset(n);
                let m = p.mesh.node_weight(n);
                let b = p.mesh.boundary_index(n);
                let dirichlet = b.is_some_and(|b| {
                    (0..np).all(|c| {
                        let e = &p.bc.entries[b * np + c];
                        matches!(
                            (e.potential, e.trace),
                            (PotentialCondition::Prescribed(_), TraceCondition::DualPotentialTarget(_))
                        )
                    })
                });
                let psi: Vec<f64> = if dirichlet {
                    let b = b.expect("boundary node");
                    (0..np).map(|c| p.src.dual_potential_target(&p.mesh, b, c)).collect()
                } else {
                    // β_nx Div(s, τ'') + dsrc = −β_ny Y' ψ
                    let rhs: Vec<f64> = (0..np)
                        .map(|c| {
                            let tau = b.map_or(0.0, |b| p.src.dual_trace_target(b, c));
                            let div = (-btw[n * np + c] + tau) / m;
                            -(k.beta_nx * div + dsrc[o + c]) / k.beta_ny
                        })
                        .collect();
                    let inv = linalg::inverse(&dual[n], "real dual tensor")?;
                    linalg::mat_vec(&inv, &rhs)
                };
                let gy: Vec<f64> = psi.iter().map(|v| k.beta_ny * v).collect();
                let gx = linalg::mat_vec(&dual[n], &gy);
                for c in 0..np {
                    out[o + c] = -gx[c];
                    out[o + np + c] = gy[c];
                }
            }
        }
    }
    Ok(DualState { layout: l, values: out })
}
