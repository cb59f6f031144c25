//! Simplicial meshes in one and two dimensions.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Relative volume below which a cell is rejected as degenerate.
const MIN_RELATIVE_VOLUME: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
    cell_region: Vec<usize>,
    regions: Vec<String>,
    node_tag: Vec<Option<String>>,
    cell_volume: Vec<f64>,
    node_weight: Vec<f64>,
    boundary_nodes: Vec<usize>,
    boundary_of: Vec<Option<usize>>,
    boundary_weight: Vec<f64>,
    grad_basis: Vec<Vec<[f64; 2]>>,
}

impl Mesh {
    /// Build and validate a mesh.  `cells` hold dim+1 node indices each;
    /// `cell_regions` name the region of every cell; `node_tags` must tag
    /// every boundary node (interior tags are rejected).
    pub fn new(
        dim: usize,
        coords: Vec<[f64; 2]>,
        cells: Vec<Vec<usize>>,
        cell_regions: Vec<String>,
        node_tags: Vec<Option<String>>,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Validation(format!("mesh dimension must be 1 or 2, got {dim}")));
        }
        let n_nodes = coords.len();
        if cells.is_empty() {
            return Err(Error::Validation("mesh has no cells".into()));
        }
        if cell_regions.len() != cells.len() || node_tags.len() != n_nodes {
            return Err(Error::Dimension("region or tag table length mismatch".into()));
        }
        for (c, cell) in cells.iter().enumerate() {
            if cell.len() != dim + 1 {
                return Err(Error::Validation(format!("cell {c} must have {} nodes", dim + 1)));
            }
            if let Some(&bad) = cell.iter().find(|&&n| n >= n_nodes) {
                return Err(Error::Validation(format!("cell {c} references missing node {bad}")));
            }
        }

        let mut regions: Vec<String> = Vec::new();
        let mut cell_region = Vec::with_capacity(cells.len());
        for name in &cell_regions {
            let idx = match regions.iter().position(|r| r == name) {
                Some(i) => i,
                None => {
                    regions.push(name.clone());
                    regions.len() - 1
                }
            };
            cell_region.push(idx);
        }

        let mut cell_volume = Vec::with_capacity(cells.len());
        let mut grad_basis = Vec::with_capacity(cells.len());
        for cell in &cells {
            let (vol, grads) = if dim == 1 {
                let h = coords[cell[1]][0] - coords[cell[0]][0];
                (h.abs(), vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]])
            } else {
                let p: Vec<[f64; 2]> = cell.iter().map(|&n| coords[n]).collect();
                let a2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                let g = (0..3)
                    .map(|i| {
                        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                        [(p[j][1] - p[k][1]) / a2, (p[k][0] - p[j][0]) / a2]
                    })
                    .collect();
                (0.5 * a2.abs(), g)
            };
            cell_volume.push(vol);
            grad_basis.push(grads);
        }
        let mean = cell_volume.iter().sum::<f64>() / cells.len() as f64;
        for (c, &v) in cell_volume.iter().enumerate() {
            if !(v > MIN_RELATIVE_VOLUME * mean) || !v.is_finite() {
                return Err(Error::Validation(format!("cell {c} is degenerate (volume {v:e})")));
            }
        }

        let mut node_weight = vec![0.0; n_nodes];
        for (cell, &v) in cells.iter().zip(&cell_volume) {
            for &n in cell {
                node_weight[n] += v / (dim + 1) as f64;
            }
        }
        if let Some(n) = node_weight.iter().position(|&w| w == 0.0) {
            return Err(Error::Validation(format!("node {n} belongs to no cell")));
        }

        let (boundary_nodes, boundary_weight_by_node) = boundary_topology(dim, &coords, &cells)?;
        let mut boundary_of = vec![None; n_nodes];
        for (b, &n) in boundary_nodes.iter().enumerate() {
            boundary_of[n] = Some(b);
        }
        for (n, tag) in node_tags.iter().enumerate() {
            match (tag, boundary_of[n]) {
                (None, Some(_)) => {
                    return Err(Error::Validation(format!("boundary node {n} has no tag")));
                }
                (Some(t), None) => {
                    return Err(Error::Validation(format!("interior node {n} carries tag '{t}'")));
                }
                _ => {}
            }
        }
        let boundary_weight = boundary_nodes.iter().map(|&n| boundary_weight_by_node[&n]).collect();

        Ok(Mesh {
            dim,
            coords,
            cells,
            cell_region,
            regions,
            node_tag: node_tags,
            cell_volume,
            node_weight,
            boundary_nodes,
            boundary_of,
            boundary_weight,
            grad_basis,
        })
    }

    /// Uniform interval [a, b] with boundary tags "left" and "right" and a
    /// single region "bulk".
    pub fn interval(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        let xs: Vec<f64> = (0..=n_cells)
            .map(|i| a + (b - a) * i as f64 / n_cells as f64)
            .collect();
        Self::interval_from_nodes(&xs)
    }

    pub fn interval_from_nodes(xs: &[f64]) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::Validation("interval needs at least two nodes".into()));
        }
        let n = xs.len();
        let coords = xs.iter().map(|&x| [x, 0.0]).collect();
        let cells = (0..n - 1).map(|i| vec![i, i + 1]).collect();
        let mut tags = vec![None; n];
        tags[0] = Some("left".to_string());
        tags[n - 1] = Some("right".to_string());
        Self::new(1, coords, cells, vec!["bulk".to_string(); n - 1], tags)
    }

    /// Rectangle [0, lx] × [0, ly] split into 2·nx·ny triangles.  Boundary
    /// tags are "left", "right", "bottom", "top"; corners belong to the
    /// vertical sides.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Validation("rectangle needs nx, ny ≥ 1".into()));
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut coords = Vec::new();
        let mut tags = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
                let tag = if i == 0 {
                    Some("left")
                } else if i == nx {
                    Some("right")
                } else if j == 0 {
                    Some("bottom")
                } else if j == ny {
                    Some("top")
                } else {
                    None
                };
                tags.push(tag.map(str::to_string));
            }
        }
        let mut cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                cells.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let regions = vec!["bulk".to_string(); cells.len()];
        Self::new(2, coords, cells, regions, tags)
    }

    /// Reassign cell regions from their centroids.
    pub fn with_regions<F: Fn([f64; 2]) -> String>(&self, f: F) -> Result<Self> {
        let names = (0..self.n_cells()).map(|c| f(self.centroid(c))).collect();
        Self::new(
            self.dim,
            self.coords.clone(),
            self.cells.clone(),
            names,
            self.node_tag.clone(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_nodes.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        self.cell_volume[c]
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volume
    }

    /// Lumped nodal weight: share of the volume of adjacent cells.
    pub fn node_weight(&self, n: usize) -> f64 {
        self.node_weight[n]
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weight
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn boundary_index(&self, node: usize) -> Option<usize> {
        self.boundary_of[node]
    }

    /// Surface measure attached to a boundary node (1 in 1D).
    pub fn boundary_weight(&self, b: usize) -> f64 {
        self.boundary_weight[b]
    }

    pub fn boundary_tag(&self, b: usize) -> &str {
        self.node_tag[self.boundary_nodes[b]].as_deref().unwrap_or("")
    }

    pub fn node_tag(&self, n: usize) -> Option<&str> {
        self.node_tag[n].as_deref()
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn cell_region(&self, c: usize) -> usize {
        self.cell_region[c]
    }

    pub fn region_name(&self, c: usize) -> &str {
        &self.regions[self.cell_region[c]]
    }

    /// Gradients of the barycentric basis functions on a cell.
    pub fn basis_gradients(&self, c: usize) -> &[[f64; 2]] {
        &self.grad_basis[c]
    }

    pub fn centroid(&self, c: usize) -> [f64; 2] {
        let k = self.cells[c].len() as f64;
        let mut p = [0.0, 0.0];
        for &n in &self.cells[c] {
            p[0] += self.coords[n][0] / k;
            p[1] += self.coords[n][1] / k;
        }
        p
    }

    /// Cells adjacent to each node.
    pub fn node_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for (c, cell) in self.cells.iter().enumerate() {
            for &n in cell {
                out[n].push(c);
            }
        }
        out
    }
}

fn boundary_topology(
    dim: usize,
    coords: &[[f64; 2]],
    cells: &[Vec<usize>],
) -> Result<(Vec<usize>, HashMap<usize, f64>)> {
    let mut weights: HashMap<usize, f64> = HashMap::new();
    if dim == 1 {
        let mut count = vec![0usize; coords.len()];
        for cell in cells {
            for &n in cell {
                count[n] += 1;
            }
        }
        for (n, &k) in count.iter().enumerate() {
            if k > 2 {
                return Err(Error::Validation(format!("node {n} shared by more than two cells")));
            }
            if k == 1 {
                weights.insert(n, 1.0);
            }
        }
    } else {
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for cell in cells {
            for i in 0..3 {
                let (a, b) = (cell[i], cell[(i + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (&(a, b), &k) in &edges {
            if k > 2 {
                return Err(Error::Validation(format!("edge ({a}, {b}) shared by more than two cells")));
            }
            if k == 1 {
                let len = ((coords[a][0] - coords[b][0]).powi(2) + (coords[a][1] - coords[b][1]).powi(2)).sqrt();
                *weights.entry(a).or_insert(0.0) += 0.5 * len;
                *weights.entry(b).or_insert(0.0) += 0.5 * len;
            }
        }
    }
    let mut nodes: Vec<usize> = weights.keys().copied().collect();
    nodes.sort_unstable();
    Ok((nodes, weights))
}
