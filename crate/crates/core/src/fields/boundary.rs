//! Boundary-condition encoding.
//!
//! At every boundary node and potential component two independent choices
//! are made: either the primal potential φ is prescribed or the dual trace
//! τ'' enters the functional as a target; and either the primal trace τ' is
//! prescribed or the dual potential ψ enters as a target.  Ordinary
//! Dirichlet and Neumann conditions are two of the four combinations.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::layout::Layout;
use crate::fields::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialCondition {
    /// φ (u', P', E') fixed to this value.
    Prescribed(f64),
    /// φ free; the dual trace τ'' has this target.
    DualTraceTarget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceCondition {
    /// τ' (σ'·n, v''·n, H''·n) fixed to this integrated value.
    Prescribed(f64),
    /// τ' free; the dual potential ψ has this target.
    DualPotentialTarget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEntry {
    pub potential: PotentialCondition,
    pub trace: TraceCondition,
}

/// Physical complex condition at one boundary node and component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhysicalCondition {
    /// Complex potential (u, P or tangential E).
    Potential(Complex64),
    /// Complex integrated trace (σ·n, v·n or H·n times the node's surface measure).
    Trace(Complex64),
}

impl PhysicalCondition {
    pub fn rotated(self, phase: Complex64) -> Self {
        match self {
            PhysicalCondition::Potential(z) => PhysicalCondition::Potential(z),
            PhysicalCondition::Trace(g) => PhysicalCondition::Trace(g * phase),
        }
    }
}

/// Side condition given per unit surface (densities).
#[derive(Debug, Clone, PartialEq)]
pub enum SideCondition {
    Potential(Vec<Complex64>),
    Flux(Vec<Complex64>),
}

/// Expand per-tag side conditions to nodal physical conditions, converting
/// flux densities into integrated nodal loads.
pub fn physical_conditions(
    mesh: &Mesh,
    layout: &Layout,
    sides: &HashMap<String, SideCondition>,
) -> Result<Vec<PhysicalCondition>> {
    let mut out = Vec::with_capacity(layout.n_trace());
    for b in 0..mesh.n_boundary() {
        let tag = mesh.boundary_tag(b);
        let cond = sides
            .get(tag)
            .ok_or_else(|| Error::Validation(format!("no boundary condition for side '{tag}'")))?;
        let values = match cond {
            SideCondition::Potential(v) | SideCondition::Flux(v) => v,
        };
        if values.len() != layout.n_pot {
            return Err(Error::Dimension(format!(
                "side '{tag}' needs {} components, got {}",
                layout.n_pot,
                values.len()
            )));
        }
        for &v in values {
            out.push(match cond {
                SideCondition::Potential(_) => PhysicalCondition::Potential(v),
                SideCondition::Flux(_) => PhysicalCondition::Trace(v * mesh.boundary_weight(b)),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub layout: Layout,
    /// Indexed by boundary node * n_pot + component.
    pub entries: Vec<BoundaryEntry>,
}

impl BoundarySpec {
    pub fn new(layout: Layout, entries: Vec<BoundaryEntry>) -> Result<Self> {
        if entries.len() != layout.n_trace() {
            return Err(Error::Dimension(format!(
                "boundary spec needs {} entries, got {}",
                layout.n_trace(),
                entries.len()
            )));
        }
        Ok(BoundarySpec { layout, entries })
    }

    /// Encode physical complex conditions.  A prescribed potential fixes its
    /// real part and targets its imaginary part; a prescribed trace fixes its
    /// primal part and targets its dual part.
    pub fn from_physical(layout: Layout, conditions: &[PhysicalCondition]) -> Result<Self> {
        let flux_real = layout.flux_primal_is_real();
        let entries = conditions
            .iter()
            .map(|c| match *c {
                PhysicalCondition::Potential(z) => BoundaryEntry {
                    potential: PotentialCondition::Prescribed(z.re),
                    trace: TraceCondition::DualPotentialTarget(z.im),
                },
                PhysicalCondition::Trace(g) => {
                    let (primal, dual) = if flux_real { (g.re, g.im) } else { (g.im, g.re) };
                    BoundaryEntry {
                        potential: PotentialCondition::DualTraceTarget(dual),
                        trace: TraceCondition::Prescribed(primal),
                    }
                }
            })
            .collect();
        Self::new(layout, entries)
    }

    pub fn dual_potential_targets(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| match e.trace {
                TraceCondition::DualPotentialTarget(v) => v,
                TraceCondition::Prescribed(_) => 0.0,
            })
            .collect()
    }

    pub fn dual_trace_targets(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| match e.potential {
                PotentialCondition::DualTraceTarget(v) => v,
                PotentialCondition::Prescribed(_) => 0.0,
            })
            .collect()
    }
}
