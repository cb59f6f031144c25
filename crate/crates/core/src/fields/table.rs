//! Comma-separated mesh and field tables.
//!
//! Node table `id,x,y,tag`, cell table `id,n0,n1,n2,region` (n2 empty for
//! intervals) and field table `entity,id,component,value`.  Floats are
//! written in shortest round-trip form, so export followed by import is
//! bit-exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ComplexFields, FieldState, Layout, Mesh, PrimalFields};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeRow {
    id: usize,
    x: f64,
    y: f64,
    tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellRow {
    id: usize,
    n0: usize,
    n1: usize,
    n2: Option<usize>,
    region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub entity: String,
    pub id: usize,
    pub component: usize,
    pub value: f64,
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Rows must carry ids 0, 1, … in order.
fn check_ids(ids: impl Iterator<Item = usize>, what: &str) -> Result<()> {
    for (expected, id) in ids.enumerate() {
        if id != expected {
            return Err(Error::Table(format!("{what} table: expected id {expected}, found {id}")));
        }
    }
    Ok(())
}

pub fn write_mesh<W1: Write, W2: Write>(mesh: &Mesh, nodes: W1, cells: W2) -> Result<()> {
    let node_rows: Vec<NodeRow> = mesh
        .coords()
        .iter()
        .enumerate()
        .map(|(id, p)| NodeRow {
            id,
            x: p[0],
            y: p[1],
            tag: mesh.node_tag(id).map(str::to_string),
        })
        .collect();
    let cell_rows: Vec<CellRow> = mesh
        .cells()
        .iter()
        .enumerate()
        .map(|(id, c)| CellRow {
            id,
            n0: c[0],
            n1: c[1],
            n2: c.get(2).copied(),
            region: mesh.region_name(id).to_string(),
        })
        .collect();
    write_rows(&node_rows, nodes)?;
    write_rows(&cell_rows, cells)
}

/// Rebuild a mesh.  The dimension follows from the cell table: two nodes per
/// cell for intervals, three for triangles.
pub fn read_mesh<R1: Read, R2: Read>(nodes: R1, cells: R2) -> Result<Mesh> {
    let node_rows: Vec<NodeRow> = read_rows(nodes)?;
    let cell_rows: Vec<CellRow> = read_rows(cells)?;
    check_ids(node_rows.iter().map(|r| r.id), "node")?;
    check_ids(cell_rows.iter().map(|r| r.id), "cell")?;
    let Some(first) = cell_rows.first() else {
        return Err(Error::Table("cell table is empty".into()));
    };
    let dim = if first.n2.is_some() { 2 } else { 1 };
    let mut cells = Vec::with_capacity(cell_rows.len());
    let mut regions = Vec::with_capacity(cell_rows.len());
    for r in cell_rows {
        match (dim, r.n2) {
            (1, None) => cells.push(vec![r.n0, r.n1]),
            (2, Some(n2)) => cells.push(vec![r.n0, r.n1, n2]),
            _ => return Err(Error::Table(format!("cell {} mixes interval and triangle entries", r.id))),
        }
        regions.push(r.region);
    }
    let coords = node_rows.iter().map(|r| [r.x, r.y]).collect();
    let tags = node_rows
        .into_iter()
        .map(|r| r.tag.filter(|t| !t.is_empty()))
        .collect();
    Mesh::new(dim, coords, cells, regions, tags)
}

pub fn write_mesh_files(mesh: &Mesh, nodes: &Path, cells: &Path) -> Result<()> {
    write_mesh(mesh, File::create(nodes)?, File::create(cells)?)
}

pub fn read_mesh_files(nodes: &Path, cells: &Path) -> Result<Mesh> {
    read_mesh(File::open(nodes)?, File::open(cells)?)
}

pub fn write_field_rows<W: Write>(rows: &[FieldRow], w: W) -> Result<()> {
    write_rows(rows, w)
}

pub fn read_field_rows<R: Read>(r: R) -> Result<Vec<FieldRow>> {
    read_rows(r)
}

pub fn write_field_file(rows: &[FieldRow], path: &Path) -> Result<()> {
    write_rows(rows, File::create(path)?)
}

pub fn read_field_file(path: &Path) -> Result<Vec<FieldRow>> {
    read_rows(File::open(path)?)
}

/// Rows for a block of values stored entity-major with fixed width.
pub fn block_rows(entity: &str, width: usize, values: &[f64]) -> Vec<FieldRow> {
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| FieldRow {
            entity: entity.to_string(),
            id: i / width,
            component: i % width,
            value,
        })
        .collect()
}

/// Gather the rows of one entity kind into a dense vector of `count`
/// entities of `width` components.  Every entry must appear exactly once.
pub fn gather_block(rows: &[FieldRow], entity: &str, count: usize, width: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; count * width];
    let mut seen = vec![false; count * width];
    for r in rows.iter().filter(|r| r.entity == entity) {
        if r.id >= count || r.component >= width {
            return Err(Error::Table(format!(
                "{entity} row ({}, {}) outside {count}×{width}",
                r.id, r.component
            )));
        }
        let i = r.id * width + r.component;
        if seen[i] {
            return Err(Error::Table(format!("duplicate {entity} row ({}, {})", r.id, r.component)));
        }
        seen[i] = true;
        out[i] = r.value;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Table(format!(
            "missing {entity} row ({}, {})",
            i / width,
            i % width
        )));
    }
    Ok(out)
}

/// Quadruple values: entities "cell" and "node".
pub fn state_rows(f: &FieldState) -> Vec<FieldRow> {
    let l = f.layout;
    let split = l.node_offset(0);
    let mut rows = block_rows("cell", l.cell_width(), &f.values[..split]);
    rows.extend(block_rows("node", l.node_width(), &f.values[split..]));
    rows
}

pub fn state_values_from_rows(layout: &Layout, rows: &[FieldRow]) -> Result<Vec<f64>> {
    let mut v = gather_block(rows, "cell", layout.n_cells, layout.cell_width())?;
    v.extend(gather_block(rows, "node", layout.n_nodes, layout.node_width())?);
    Ok(v)
}

/// Primal unknowns: entities "potential", "flux" and "trace" (trace ids are
/// boundary indices).
pub fn primal_rows(p: &PrimalFields, layout: &Layout) -> Vec<FieldRow> {
    let mut rows = block_rows("potential", layout.n_pot, &p.potential);
    rows.extend(block_rows("flux", layout.n_flux, &p.flux));
    rows.extend(block_rows("trace", layout.n_pot, &p.trace));
    rows
}

pub fn primal_from_rows(layout: &Layout, rows: &[FieldRow]) -> Result<PrimalFields> {
    Ok(PrimalFields {
        potential: gather_block(rows, "potential", layout.n_nodes, layout.n_pot)?,
        flux: gather_block(rows, "flux", layout.n_cells, layout.n_flux)?,
        trace: gather_block(rows, "trace", layout.n_boundary, layout.n_pot)?,
    })
}

/// Complex fields: entities "potential_re", "potential_im", "flux_re", ….
pub fn complex_rows(f: &ComplexFields) -> Vec<FieldRow> {
    let l = f.layout;
    let mut rows = Vec::new();
    for (name, width, v) in [
        ("potential", l.n_pot, &f.potential),
        ("flux", l.n_flux, &f.flux),
        ("trace", l.n_pot, &f.trace),
    ] {
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        let im: Vec<f64> = v.iter().map(|z| z.im).collect();
        rows.extend(block_rows(&format!("{name}_re"), width, &re));
        rows.extend(block_rows(&format!("{name}_im"), width, &im));
    }
    rows
}

pub fn complex_from_rows(layout: &Layout, rows: &[FieldRow]) -> Result<ComplexFields> {
    let get = |name: &str, count: usize, width: usize| -> Result<Vec<Complex64>> {
        let re = gather_block(rows, &format!("{name}_re"), count, width)?;
        let im = gather_block(rows, &format!("{name}_im"), count, width)?;
        Ok(re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect())
    };
    Ok(ComplexFields {
        layout: *layout,
        potential: get("potential", layout.n_nodes, layout.n_pot)?,
        flux: get("flux", layout.n_cells, layout.n_flux)?,
        trace: get("trace", layout.n_boundary, layout.n_pot)?,
    })
}
