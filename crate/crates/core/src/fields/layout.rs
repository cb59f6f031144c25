//! Degree-of-freedom layout and the per-physics coefficients that map the
//! discrete potentials and fluxes onto the real field quadruples.
//!
//! Every physics is written in one shape.  The primal side has a nodal
//! potential φ, a cellwise flux q and boundary traces τ'; the dual side has
//! ψ, s and τ''.  Writing `Div` for the discrete divergence and `B` for the
//! discrete gradient, the primal quadruple F is
//!
//! ```text
//! F_cell = (αcx·Bφ + src, αcy·q)      F_node = (αnx·φ, αny·Div(q, τ') + src)
//! ```
//!
//! and the dual quadruple G is
//!
//! ```text
//! G_cell = (βcx·s, βcy·Bψ + src)      G_node = (βnx·Div(s, τ'') + src, βny·ψ)
//! ```
//!
//! with the source entering next to the gradient when it lives on cells and
//! next to the divergence when it lives on nodes.  The products αβ agree
//! between node and cell, which is what makes the boundary pairing exact.

use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::fields::mesh::Mesh;
use crate::linalg::{self, Triplets};
use crate::moduli::Physics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Cell,
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub physics: Physics,
    pub dim: usize,
    /// Components of the potential per node.
    pub n_pot: usize,
    /// Components of the flux per cell.
    pub n_flux: usize,
    pub n_nodes: usize,
    pub n_cells: usize,
    pub n_boundary: usize,
}

impl Layout {
    pub fn new(physics: Physics, mesh: &Mesh) -> Result<Self> {
        let dim = mesh.dim();
        let (n_pot, n_flux) = match physics {
            Physics::Elastic => (dim, dim * (dim + 1) / 2),
            Physics::Acoustic => (1, dim),
            Physics::Electromagnetic => {
                if dim != 1 {
                    return Err(Error::Unsupported(
                        "electromagnetic problems are implemented on 1D layered slabs only".into(),
                    ));
                }
                (1, 1)
            }
        };
        Ok(Layout {
            physics,
            dim,
            n_pot,
            n_flux,
            n_nodes: mesh.n_nodes(),
            n_cells: mesh.n_cells(),
            n_boundary: mesh.n_boundary(),
        })
    }

    pub fn cell_width(&self) -> usize {
        2 * self.n_flux
    }

    pub fn node_width(&self) -> usize {
        2 * self.n_pot
    }

    /// Length of a global quadruple vector (cells first, then nodes).
    pub fn field_len(&self) -> usize {
        self.n_cells * self.cell_width() + self.n_nodes * self.node_width()
    }

    pub fn cell_offset(&self, c: usize) -> usize {
        c * self.cell_width()
    }

    pub fn node_offset(&self, n: usize) -> usize {
        self.n_cells * self.cell_width() + n * self.node_width()
    }

    pub fn n_potential(&self) -> usize {
        self.n_nodes * self.n_pot
    }

    pub fn n_flux_total(&self) -> usize {
        self.n_cells * self.n_flux
    }

    pub fn n_trace(&self) -> usize {
        self.n_boundary * self.n_pot
    }

    /// Length of the stacked vector [potential, flux, trace].
    pub fn full_len(&self) -> usize {
        self.n_potential() + self.n_flux_total() + self.n_trace()
    }

    pub fn pot_index(&self, node: usize, k: usize) -> usize {
        node * self.n_pot + k
    }

    pub fn flux_index(&self, cell: usize, k: usize) -> usize {
        self.n_potential() + cell * self.n_flux + k
    }

    pub fn trace_index(&self, b: usize, k: usize) -> usize {
        self.n_potential() + self.n_flux_total() + b * self.n_pot + k
    }

    /// Where the primal tensor (stiffness, compressibility, permittivity) lives.
    pub fn primal_location(&self) -> Location {
        match self.physics {
            Physics::Elastic => Location::Cell,
            _ => Location::Node,
        }
    }

    pub fn dual_location(&self) -> Location {
        match self.primal_location() {
            Location::Cell => Location::Node,
            Location::Node => Location::Cell,
        }
    }

    /// Where the body source (force or current) lives.
    pub fn source_location(&self) -> Location {
        match self.physics {
            Physics::Acoustic => Location::Cell,
            _ => Location::Node,
        }
    }

    pub fn source_components(&self) -> usize {
        match self.source_location() {
            Location::Cell => self.n_flux,
            Location::Node => self.n_pot,
        }
    }

    pub fn source_len(&self) -> usize {
        match self.source_location() {
            Location::Cell => self.n_cells * self.n_flux,
            Location::Node => self.n_nodes * self.n_pot,
        }
    }

    pub fn n_entities(&self, loc: Location) -> usize {
        match loc {
            Location::Cell => self.n_cells,
            Location::Node => self.n_nodes,
        }
    }

    pub fn entity_offset(&self, loc: Location, i: usize) -> usize {
        match loc {
            Location::Cell => self.cell_offset(i),
            Location::Node => self.node_offset(i),
        }
    }

    pub fn entity_width(&self, loc: Location) -> usize {
        match loc {
            Location::Cell => self.cell_width(),
            Location::Node => self.node_width(),
        }
    }

    /// Whether the real part of the complex flux is the primal flux q.
    pub fn flux_primal_is_real(&self) -> bool {
        matches!(self.physics, Physics::Elastic)
    }

    /// Whether the real part of the complex body source enters F.
    pub fn source_primal_is_real(&self) -> bool {
        !matches!(self.physics, Physics::Electromagnetic)
    }

    pub fn same_as(&self, other: &Layout) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "layout mismatch: {self:?} vs {other:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha_nx: f64,
    pub alpha_ny: f64,
    pub alpha_cx: f64,
    pub alpha_cy: f64,
    pub beta_nx: f64,
    pub beta_ny: f64,
    pub beta_cx: f64,
    pub beta_cy: f64,
    /// Multiplier of the primal part of the body source in F.
    pub gamma_primal: f64,
    /// Multiplier of the dual part of the body source in G.
    pub gamma_dual: f64,
}

impl Coefficients {
    pub fn new(physics: Physics, omega: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Frequency(omega));
        }
        let w = omega;
        Ok(match physics {
            Physics::Elastic => Coefficients {
                alpha_nx: w,
                alpha_ny: -1.0 / w,
                alpha_cx: 1.0,
                alpha_cy: 1.0,
                beta_nx: 1.0 / w,
                beta_ny: w,
                beta_cx: 1.0,
                beta_cy: -1.0,
                gamma_primal: -1.0 / w,
                gamma_dual: 1.0 / w,
            },
            Physics::Acoustic => Coefficients {
                alpha_nx: -w,
                alpha_ny: 1.0,
                alpha_cx: 1.0,
                alpha_cy: w,
                beta_nx: 1.0,
                beta_ny: -w,
                beta_cx: -w,
                beta_cy: -1.0,
                gamma_primal: -1.0,
                gamma_dual: 1.0,
            },
            Physics::Electromagnetic => Coefficients {
                alpha_nx: 1.0,
                alpha_ny: 1.0 / w,
                alpha_cx: -1.0 / w,
                alpha_cy: 1.0,
                beta_nx: -1.0 / w,
                beta_ny: -1.0,
                beta_cx: 1.0,
                beta_cy: -1.0 / w,
                gamma_primal: 1.0 / w,
                gamma_dual: -1.0 / w,
            },
        })
    }

    /// Coefficient a in ∫GᵀF = Σ_b (a·φ τ'' + b·ψ τ') for source-free fields.
    pub fn pair_a(&self) -> f64 {
        self.alpha_nx * self.beta_nx
    }

    pub fn pair_b(&self) -> f64 {
        self.alpha_ny * self.beta_ny
    }
}

/// Discrete gradient B (cells × nodes) and its weighted transpose.
#[derive(Debug, Clone)]
pub struct Operators {
    pub layout: Layout,
    /// Rows: cell flux components; columns: nodal potential components.
    pub grad: CsrMatrix<f64>,
    /// Bᵀ W with W the cell volumes.
    pub grad_t_w: CsrMatrix<f64>,
    pub node_weight: Vec<f64>,
    pub cell_volume: Vec<f64>,
    pub boundary_nodes: Vec<usize>,
}

impl Operators {
    pub fn new(mesh: &Mesh, layout: Layout) -> Self {
        let (np, nf) = (layout.n_pot, layout.n_flux);
        let mut g = Triplets::new(layout.n_cells * nf, layout.n_nodes * np);
        let mut gt = Triplets::new(layout.n_nodes * np, layout.n_cells * nf);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for c in 0..mesh.n_cells() {
            let w = mesh.cell_volume(c);
            for (a, &node) in mesh.cells()[c].iter().enumerate() {
                let gr = mesh.basis_gradients(c)[a];
                // (flux component, potential component, value)
                let entries: Vec<(usize, usize, f64)> = match (layout.physics, layout.dim) {
                    (Physics::Elastic, 2) => vec![
                        (0, 0, gr[0]),
                        (1, 1, gr[1]),
                        (2, 0, s * gr[1]),
                        (2, 1, s * gr[0]),
                    ],
                    (Physics::Acoustic, 2) => vec![(0, 0, gr[0]), (1, 0, gr[1])],
                    _ => vec![(0, 0, gr[0])],
                };
                for (fk, pk, v) in entries {
                    g.push(c * nf + fk, node * np + pk, v);
                    gt.push(node * np + pk, c * nf + fk, v * w);
                }
            }
        }
        Operators {
            layout,
            grad: g.build(),
            grad_t_w: gt.build(),
            node_weight: mesh.node_weights().to_vec(),
            cell_volume: mesh.cell_volumes().to_vec(),
            boundary_nodes: mesh.boundary_nodes().to_vec(),
        }
    }

    pub fn gradient(&self, potential: &[f64]) -> Vec<f64> {
        linalg::spmv(&self.grad, potential)
    }

    /// Discrete divergence defined by m·Div q = −BᵀWq + Eτ, where E scatters
    /// the boundary traces onto their nodes.
    pub fn divergence(&self, flux: &[f64], trace: &[f64]) -> Vec<f64> {
        let np = self.layout.n_pot;
        let mut d = linalg::spmv(&self.grad_t_w, flux);
        for v in d.iter_mut() {
            *v = -*v;
        }
        for (b, &n) in self.boundary_nodes.iter().enumerate() {
            for k in 0..np {
                d[n * np + k] += trace[b * np + k];
            }
        }
        for (i, v) in d.iter_mut().enumerate() {
            *v /= self.node_weight[i / np];
        }
        d
    }

    /// Boundary traces implied by a nodal divergence: τ = m·Div + BᵀWq,
    /// evaluated at every node (interior values measure the mismatch).
    pub fn implied_trace(&self, div: &[f64], flux: &[f64]) -> Vec<f64> {
        let np = self.layout.n_pot;
        let btw = linalg::spmv(&self.grad_t_w, flux);
        div.iter()
            .enumerate()
            .map(|(i, d)| self.node_weight[i / np] * d + btw[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn summation_by_parts_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let meshes = [
            Mesh::interval_from_nodes(&[0.0, 0.3, 0.35, 0.9, 1.4]).unwrap(),
            Mesh::rectangle(1.5, 1.0, 4, 3).unwrap(),
        ];
        for mesh in &meshes {
            for physics in [Physics::Elastic, Physics::Acoustic] {
                let layout = Layout::new(physics, mesh).unwrap();
                let ops = Operators::new(mesh, layout);
                let phi = random(&mut rng, layout.n_potential());
                let q = random(&mut rng, layout.n_flux_total());
                let tau = random(&mut rng, layout.n_trace());
                let div = ops.divergence(&q, &tau);
                let grad = ops.gradient(&phi);
                let lhs: f64 = (0..layout.n_potential())
                    .map(|i| mesh.node_weight(i / layout.n_pot) * phi[i] * div[i])
                    .sum();
                let vol: f64 = (0..layout.n_flux_total())
                    .map(|i| mesh.cell_volume(i / layout.n_flux) * grad[i] * q[i])
                    .sum();
                let surf: f64 = (0..layout.n_trace())
                    .map(|i| {
                        let n = mesh.boundary_nodes()[i / layout.n_pot];
                        phi[n * layout.n_pot + i % layout.n_pot] * tau[i]
                    })
                    .sum();
                assert!((lhs - (-vol + surf)).abs() < 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let mesh = Mesh::rectangle(1.0, 2.0, 3, 3).unwrap();
        let layout = Layout::new(Physics::Acoustic, &mesh).unwrap();
        let ops = Operators::new(&mesh, layout);
        let phi: Vec<f64> = mesh.coords().iter().map(|p| 3.0 * p[0] - p[1]).collect();
        let g = ops.gradient(&phi);
        for c in 0..mesh.n_cells() {
            assert!((g[2 * c] - 3.0).abs() < 1e-12 && (g[2 * c + 1] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pairing_coefficients_are_consistent() {
        for physics in [Physics::Elastic, Physics::Acoustic, Physics::Electromagnetic] {
            let k = Coefficients::new(physics, 1.7).unwrap();
            assert!((k.alpha_nx * k.beta_nx - k.alpha_cx * k.beta_cx).abs() < 1e-15);
            assert!((k.alpha_ny * k.beta_ny - k.alpha_cy * k.beta_cy).abs() < 1e-15);
        }
    }
}
