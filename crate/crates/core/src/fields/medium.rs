//! The constitutive operator ℒ distributed over a mesh.
//!
//! The tensor attached to cells is the one paired with the gradient (C for
//! elastic, r for acoustic, m for electromagnetic); the other tensor lives
//! on nodes and is the lumped-weight average of the adjacent cell values.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::layout::{Layout, Location};
use crate::fields::mesh::Mesh;
use crate::linalg::{self, CMatrix};
use crate::moduli::{self, CGBlock, ComplexModuli, PassivityClass};

/// Complex tensors per entity, kept for oracles and dissipation.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumTensors {
    pub cell: Vec<CMatrix>,
    pub node: Vec<CMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    pub layout: Layout,
    pub omega: f64,
    pub cell_blocks: Vec<CGBlock>,
    pub node_blocks: Vec<CGBlock>,
    pub tensors: Option<MediumTensors>,
    /// Real dual tensor at every dual-location entity when the reduced
    /// (lossless dual) formulation is active; the blocks at that location
    /// are then absent.
    pub reduced: Option<Vec<DMatrix<f64>>>,
}

fn cell_tensor_is_primal(layout: &Layout) -> bool {
    layout.primal_location() == Location::Cell
}

/// Per-entity complex tensors from per-region moduli.
pub fn distribute_tensors(mesh: &Mesh, layout: &Layout, regions: &[ComplexModuli]) -> Result<MediumTensors> {
    if regions.len() != mesh.regions().len() {
        return Err(Error::Dimension(format!(
            "mesh has {} regions but {} moduli were given",
            mesh.regions().len(),
            regions.len()
        )));
    }
    let primal_on_cells = cell_tensor_is_primal(layout);
    let pick = |m: &ComplexModuli, cell: bool| -> CMatrix {
        if cell == primal_on_cells {
            m.primal.clone()
        } else {
            m.dual.clone()
        }
    };
    let mut cell = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let m = &regions[mesh.cell_region(c)];
        if m.physics != layout.physics {
            return Err(Error::Validation(format!(
                "region '{}' has {} moduli in a {} problem",
                mesh.region_name(c),
                m.physics.name(),
                layout.physics.name()
            )));
        }
        let t = pick(m, true);
        if t.nrows() != layout.n_flux {
            return Err(Error::Dimension(format!(
                "cell tensor in region '{}' must be {}×{}",
                mesh.region_name(c),
                layout.n_flux,
                layout.n_flux
            )));
        }
        cell.push(t);
    }
    let n = layout.n_pot;
    let mut node = vec![CMatrix::zeros(n, n); mesh.n_nodes()];
    let share = 1.0 / (mesh.dim() + 1) as f64;
    for c in 0..mesh.n_cells() {
        let t = pick(&regions[mesh.cell_region(c)], false);
        if t.nrows() != n {
            return Err(Error::Dimension(format!("node tensor must be {n}×{n}")));
        }
        let w = Complex64::new(mesh.cell_volume(c) * share, 0.0);
        for &v in &mesh.cells()[c] {
            node[v] += &t * w;
        }
    }
    for (v, t) in node.iter_mut().enumerate() {
        *t /= Complex64::new(mesh.node_weight(v), 0.0);
    }
    Ok(MediumTensors { cell, node })
}

fn block_from_tensor(layout: &Layout, t: &CMatrix, primal: bool) -> Result<CGBlock> {
    let p = layout.physics;
    let sign = if primal { p.primal_loss_sign() } else { p.dual_loss_sign() };
    let (re, im) = linalg::split_complex(t);
    moduli::cg_form(&re, &(im * sign))
}

impl Medium {
    /// Full formulation: every region must be strictly passive.
    pub fn from_regions(mesh: &Mesh, layout: Layout, omega: f64, regions: &[ComplexModuli]) -> Result<Self> {
        for (name, m) in mesh.regions().iter().zip(regions) {
            moduli::build_blocks(m, name)?;
        }
        let tensors = distribute_tensors(mesh, &layout, regions)?;
        let primal_cells = cell_tensor_is_primal(&layout);
        let cell_blocks = tensors
            .cell
            .iter()
            .map(|t| block_from_tensor(&layout, t, primal_cells))
            .collect::<Result<Vec<_>>>()?;
        let node_blocks = tensors
            .node
            .iter()
            .map(|t| block_from_tensor(&layout, t, !primal_cells))
            .collect::<Result<Vec<_>>>()?;
        Ok(Medium {
            layout,
            omega,
            cell_blocks,
            node_blocks,
            tensors: Some(tensors),
            reduced: None,
        })
    }

    /// Reduced formulation for media whose dual tensor is real everywhere.
    pub fn lossless_from_regions(mesh: &Mesh, layout: Layout, omega: f64, regions: &[ComplexModuli]) -> Result<Self> {
        for (name, m) in mesh.regions().iter().zip(regions) {
            let report = moduli::check_passivity(m);
            if report.primal.class != PassivityClass::Strict {
                return Err(Error::Passivity {
                    tensor: report.primal.tensor,
                    region: name.clone(),
                    min_eigenvalue: report.primal.min_eigenvalue,
                    hint: "the reduced formulation needs a strictly lossy primal tensor".into(),
                });
            }
            moduli::lossless_limit(m)?;
        }
        let tensors = distribute_tensors(mesh, &layout, regions)?;
        let primal_cells = cell_tensor_is_primal(&layout);
        let (primal_tensors, dual_tensors) = if primal_cells {
            (&tensors.cell, &tensors.node)
        } else {
            (&tensors.node, &tensors.cell)
        };
        let primal_blocks = primal_tensors
            .iter()
            .map(|t| block_from_tensor(&layout, t, true))
            .collect::<Result<Vec<_>>>()?;
        let dual_real = dual_tensors
            .iter()
            .map(|t| t.map(|z| z.re))
            .collect::<Vec<_>>();
        let (cell_blocks, node_blocks) = if primal_cells {
            (primal_blocks, Vec::new())
        } else {
            (Vec::new(), primal_blocks)
        };
        Ok(Medium {
            layout,
            omega,
            cell_blocks,
            node_blocks,
            tensors: Some(tensors),
            reduced: Some(dual_real),
        })
    }

    /// Homogeneous operator with the given cell and node blocks.
    pub fn uniform(layout: Layout, omega: f64, cell_block: &CGBlock, node_block: &CGBlock) -> Result<Self> {
        if cell_block.half() != layout.n_flux || node_block.half() != layout.n_pot {
            return Err(Error::Dimension("uniform blocks do not match the layout".into()));
        }
        Ok(Medium {
            layout,
            omega,
            cell_blocks: vec![cell_block.clone(); layout.n_cells],
            node_blocks: vec![node_block.clone(); layout.n_nodes],
            tensors: None,
            reduced: None,
        })
    }

    /// ℒ scaled by a positive factor (tensors are dropped).
    pub fn scaled(&self, s: f64) -> Self {
        Medium {
            layout: self.layout,
            omega: self.omega,
            cell_blocks: self.cell_blocks.iter().map(|b| b.scaled(s)).collect(),
            node_blocks: self.node_blocks.iter().map(|b| b.scaled(s)).collect(),
            tensors: None,
            reduced: self.reduced.clone(),
        }
    }

    /// Entity block, or None where the reduced formulation removed it.
    pub fn block(&self, loc: Location, i: usize) -> Option<&CGBlock> {
        match loc {
            Location::Cell => self.cell_blocks.get(i),
            Location::Node => self.node_blocks.get(i),
        }
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced.is_some()
    }

    /// G = ℒF per entity.  Entities without a block (reduced formulation)
    /// receive zeros.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let l = &self.layout;
        if f.len() != l.field_len() {
            return Err(Error::Dimension(format!(
                "field vector has length {}, expected {}",
                f.len(),
                l.field_len()
            )));
        }
        let mut g = vec![0.0; f.len()];
        for loc in [Location::Cell, Location::Node] {
            let w = l.entity_width(loc);
            for i in 0..l.n_entities(loc) {
                if let Some(b) = self.block(loc, i) {
                    let o = l.entity_offset(loc, i);
                    g[o..o + w].copy_from_slice(&b.apply(&f[o..o + w]));
                }
            }
        }
        Ok(g)
    }

    /// Σ_e w_e ½ F_eᵀ ℒ_e F_e with cell volumes and nodal weights.
    pub fn energy(&self, mesh: &Mesh, f: &[f64]) -> f64 {
        let l = &self.layout;
        let mut s = 0.0;
        for loc in [Location::Cell, Location::Node] {
            let w = l.entity_width(loc);
            for i in 0..l.n_entities(loc) {
                if let Some(b) = self.block(loc, i) {
                    let o = l.entity_offset(loc, i);
                    let x = &f[o..o + w];
                    s += 0.5 * entity_weight(mesh, loc, i) * linalg::bilinear(&b.matrix(), x, x);
                }
            }
        }
        s
    }

    pub fn cell_tensor(&self, c: usize) -> Option<&CMatrix> {
        self.tensors.as_ref().map(|t| &t.cell[c])
    }

    pub fn node_tensor(&self, n: usize) -> Option<&CMatrix> {
        self.tensors.as_ref().map(|t| &t.node[n])
    }
}

pub fn entity_weight(mesh: &Mesh, loc: Location, i: usize) -> f64 {
    match loc {
        Location::Cell => mesh.cell_volume(i),
        Location::Node => mesh.node_weight(i),
    }
}

/// Diagonal quadrature weight for every component of a quadruple vector.
pub fn field_weights(mesh: &Mesh, layout: &Layout) -> Vec<f64> {
    let mut w = Vec::with_capacity(layout.field_len());
    for c in 0..layout.n_cells {
        w.extend(std::iter::repeat_n(mesh.cell_volume(c), layout.cell_width()));
    }
    for n in 0..layout.n_nodes {
        w.extend(std::iter::repeat_n(mesh.node_weight(n), layout.node_width()));
    }
    w
}
