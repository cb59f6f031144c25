//! Free unknowns and the assembled quadratic form.
//!
//! The stacked primal vector [φ, q, τ'] is an affine function of the free
//! unknowns: essential data are constants, and in the reduced (lossless
//! dual) formulation the eliminated field is a linear function of the rest.

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::fields::{
    constraint_map, field_weights, BoundarySpec, Coefficients, Layout, Location, Medium, Mesh, Operators,
    PotentialCondition, Side, SourceData, TraceCondition,
};
use crate::linalg::{self, Triplets};
use crate::moduli;

#[derive(Debug, Clone, Default)]
struct Affine {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Affine {
    fn constant(v: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: v,
        }
    }

    fn var(j: usize) -> Self {
        Affine {
            terms: vec![(j, 1.0)],
            constant: 0.0,
        }
    }

    fn add_scaled(&mut self, other: &Affine, s: f64) {
        if s == 0.0 {
            return;
        }
        self.terms.extend(other.terms.iter().map(|&(j, v)| (j, v * s)));
        self.constant += other.constant * s;
    }
}

/// Group of free unknowns sharing an entity (used by block Jacobi).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum GroupKey {
    Node(usize),
    Cell(usize),
    Trace(usize),
}

/// How the free unknowns parametrize the primal field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parametrization {
    /// Free unknowns are the non-essential components of (φ, q, τ').
    #[default]
    Direct,
    /// At the dual-location entities the unknown is the defect ξ = F_y − Z'F_x
    /// of the collapsed relation instead of the eliminated field.  Spans the
    /// same affine space as `Direct` but isolates the 1/loss stiffness of
    /// nearly lossless dual tensors on ξ, where block Jacobi removes it.
    Split,
    /// `Split` when some dual tensor has relative loss below
    /// [`SPLIT_LOSS_THRESHOLD`], `Direct` otherwise.
    Auto,
}

/// Relative dual loss below which `Auto` picks the split parametrization.
pub const SPLIT_LOSS_THRESHOLD: f64 = 3e-3;

fn resolve(medium: &Medium, p: Parametrization) -> Result<Parametrization> {
    if p != Parametrization::Auto {
        return Ok(p);
    }
    if medium.is_reduced() {
        return Ok(Parametrization::Direct);
    }
    let loc = medium.layout.dual_location();
    for i in 0..medium.layout.n_entities(loc) {
        if let Some(block) = medium.block(loc, i) {
            let (z, loss) = moduli::cg_parts(block)?;
            let (lo, hi) = linalg::sym_eig_range(&loss);
            let scale = hi.max(linalg::sym_eig_range(&(z.transpose() * &z)).1.sqrt());
            if lo < SPLIT_LOSS_THRESHOLD * scale {
                return Ok(Parametrization::Split);
            }
        }
    }
    Ok(Parametrization::Direct)
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub layout: Layout,
    pub parametrization: Parametrization,
    pub n_free: usize,
    /// full = map · x + offset
    pub map: CsrMatrix<f64>,
    pub offset: Vec<f64>,
    /// Full-vector index that each free unknown equals (None for ξ).
    pub free_index: Vec<Option<usize>>,
    pub groups: Vec<Vec<usize>>,
}

struct Builder {
    free_index: Vec<Option<usize>>,
    keys: Vec<GroupKey>,
}

impl Builder {
    fn new_var(&mut self, full: Option<usize>, key: GroupKey) -> Affine {
        self.free_index.push(full);
        self.keys.push(key);
        Affine::var(self.free_index.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKind {
    /// φ and τ' handled independently.
    Regular,
    /// φ given by the collapsed relation.
    Eliminated,
    /// φ prescribed, τ' given by the collapsed relation.
    DependentTrace,
}

impl DofMap {
    pub fn build(mesh: &Mesh, medium: &Medium, src: &SourceData, bc: &BoundarySpec) -> Result<Self> {
        Self::build_with(mesh, medium, src, bc, Parametrization::Direct)
    }

    pub fn build_with(
        mesh: &Mesh,
        medium: &Medium,
        src: &SourceData,
        bc: &BoundarySpec,
        parametrization: Parametrization,
    ) -> Result<Self> {
        let l = medium.layout;
        l.same_as(&src.layout)?;
        l.same_as(&bc.layout)?;
        let parametrization = resolve(medium, parametrization)?;
        let (np, nf) = (l.n_pot, l.n_flux);
        let ops = Operators::new(mesh, l);
        let k = Coefficients::new(l.physics, src.omega)?;
        let mut bld = Builder {
            free_index: Vec::new(),
            keys: Vec::new(),
        };
        let mut rows: Vec<Affine> = vec![Affine::default(); l.full_len()];
        let dual_loc = l.dual_location();

        // Z' at the dual-location entities and whether ξ unknowns are added.
        let (relation, with_xi): (Option<Vec<DMatrix<f64>>>, bool) = match (&medium.reduced, parametrization) {
            (Some(d), _) => (Some(d.clone()), false),
            (None, Parametrization::Direct | Parametrization::Auto) => (None, false),
            (None, Parametrization::Split) => {
                let mut zs = Vec::with_capacity(l.n_entities(dual_loc));
                for i in 0..l.n_entities(dual_loc) {
                    let block = medium
                        .block(dual_loc, i)
                        .ok_or_else(|| Error::Validation("medium has no dual block".into()))?;
                    let (z, _) = moduli::cg_parts(block)?;
                    zs.push(z);
                }
                let invertible = zs.iter().all(|z| z.clone().try_inverse().is_some());
                if invertible {
                    (Some(zs), true)
                } else {
                    (None, false)
                }
            }
        };

        let pot_condition = |b: usize, c: usize| match bc.entries[b * np + c].potential {
            PotentialCondition::Prescribed(v) => Some(v),
            PotentialCondition::DualTraceTarget(_) => None,
        };
        let trace_prescribed =
            |b: usize, c: usize| matches!(bc.entries[b * np + c].trace, TraceCondition::Prescribed(_));

        let node_kind: Vec<NodeKind> = (0..l.n_nodes)
            .map(|n| {
                if relation.is_none() || dual_loc != Location::Node {
                    return Ok(NodeKind::Regular);
                }
                let Some(b) = mesh.boundary_index(n) else {
                    return Ok(NodeKind::Eliminated);
                };
                let all_free = (0..np).all(|c| pot_condition(b, c).is_none());
                let all_dirichlet = (0..np).all(|c| pot_condition(b, c).is_some() && !trace_prescribed(b, c));
                if all_free {
                    Ok(NodeKind::Eliminated)
                } else if all_dirichlet {
                    Ok(NodeKind::DependentTrace)
                } else if with_xi {
                    Ok(NodeKind::Regular)
                } else {
                    Err(Error::Unsupported(format!(
                        "boundary node {n}: the reduced formulation needs every potential component either prescribed \
                         with a free trace or free"
                    )))
                }
            })
            .collect::<Result<_>>()?;

        // potentials at regular nodes, fluxes, traces
        for n in 0..l.n_nodes {
            if node_kind[n] == NodeKind::Eliminated {
                continue;
            }
            for c in 0..np {
                let fi = l.pot_index(n, c);
                rows[fi] = match mesh.boundary_index(n).and_then(|b| pot_condition(b, c)) {
                    Some(v) => Affine::constant(v),
                    None => bld.new_var(Some(fi), GroupKey::Node(n)),
                };
            }
        }
        if relation.is_none() || dual_loc == Location::Node {
            for c in 0..l.n_cells {
                for j in 0..nf {
                    let fi = l.flux_index(c, j);
                    rows[fi] = bld.new_var(Some(fi), GroupKey::Cell(c));
                }
            }
        }
        for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
            if node_kind[n] == NodeKind::DependentTrace {
                continue;
            }
            for c in 0..np {
                let fi = l.trace_index(b, c);
                rows[fi] = match bc.entries[b * np + c].trace {
                    TraceCondition::Prescribed(v) => Affine::constant(v),
                    TraceCondition::DualPotentialTarget(_) => bld.new_var(Some(fi), GroupKey::Trace(b)),
                };
            }
        }

        if let Some(zs) = &relation {
            match dual_loc {
                Location::Cell => {
                    // αcy q = Z'(αcx Bφ + src) + ξ
                    let (offs, cols, vals) = ops.grad.csr_data();
                    for c in 0..l.n_cells {
                        let mut inner = Vec::with_capacity(nf);
                        for j in 0..nf {
                            let r = c * nf + j;
                            let mut a = Affine::constant(src.primal_source[l.cell_offset(c) + j]);
                            for idx in offs[r]..offs[r + 1] {
                                let row = rows[cols[idx]].clone();
                                a.add_scaled(&row, k.alpha_cx * vals[idx]);
                            }
                            inner.push(a);
                        }
                        for i in 0..nf {
                            let mut q = Affine::default();
                            for (j, a) in inner.iter().enumerate() {
                                q.add_scaled(a, zs[c][(i, j)] / k.alpha_cy);
                            }
                            if with_xi {
                                let xi = bld.new_var(None, GroupKey::Cell(c));
                                q.add_scaled(&xi, 1.0 / k.alpha_cy);
                            }
                            rows[l.flux_index(c, i)] = q;
                        }
                    }
                }
                Location::Node => {
                    // αny Div(q, τ) + src = αnx Z'φ + ξ
                    let (offs, cols, vals) = ops.grad_t_w.csr_data();
                    let btw_row = |rows: &Vec<Affine>, i: usize| -> Affine {
                        let mut a = Affine::default();
                        for idx in offs[i]..offs[i + 1] {
                            a.add_scaled(&rows[l.n_potential() + cols[idx]], vals[idx]);
                        }
                        a
                    };
                    let node_src = |n: usize, j: usize| src.primal_source[l.node_offset(n) + np + j];
                    let mut xi_rows: Vec<Vec<Affine>> = vec![Vec::new(); l.n_nodes];
                    for n in 0..l.n_nodes {
                        if node_kind[n] != NodeKind::Regular && with_xi {
                            xi_rows[n] = (0..np).map(|_| bld.new_var(None, GroupKey::Node(n))).collect();
                        }
                    }
                    for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
                        if node_kind[n] != NodeKind::DependentTrace {
                            continue;
                        }
                        let m = mesh.node_weight(n);
                        for c in 0..np {
                            // τ = m(αnx (Z'φ) + ξ − src)/αny + (BᵀWq)
                            let zphi: f64 = (0..np).map(|j| zs[n][(c, j)] * pot_condition(b, j).unwrap_or(0.0)).sum();
                            let mut a = btw_row(&rows, n * np + c);
                            a.constant += m * (k.alpha_nx * zphi - node_src(n, c)) / k.alpha_ny;
                            if with_xi {
                                a.add_scaled(&xi_rows[n][c], m / k.alpha_ny);
                            }
                            rows[l.trace_index(b, c)] = a;
                        }
                    }
                    for n in 0..l.n_nodes {
                        if node_kind[n] != NodeKind::Eliminated {
                            continue;
                        }
                        let zinv = linalg::inverse(&zs[n], "real dual tensor")?;
                        let bi = mesh.boundary_index(n);
                        let m = mesh.node_weight(n);
                        let mut inner = Vec::with_capacity(np);
                        for j in 0..np {
                            let mut div = btw_row(&rows, n * np + j);
                            div.terms.iter_mut().for_each(|t| t.1 = -t.1);
                            div.constant = -div.constant;
                            if let Some(b) = bi {
                                let tr = rows[l.trace_index(b, j)].clone();
                                div.add_scaled(&tr, 1.0);
                            }
                            let mut a = Affine::constant(node_src(n, j));
                            a.add_scaled(&div, k.alpha_ny / m);
                            if with_xi {
                                a.add_scaled(&xi_rows[n][j], -1.0);
                            }
                            inner.push(a);
                        }
                        for i in 0..np {
                            let mut phi = Affine::default();
                            for (j, a) in inner.iter().enumerate() {
                                phi.add_scaled(a, zinv[(i, j)] / k.alpha_nx);
                            }
                            rows[l.pot_index(n, i)] = phi;
                        }
                    }
                }
            }
        }

        let n_free = bld.free_index.len();
        let mut t = Triplets::new(l.full_len(), n_free);
        let mut offset = vec![0.0; l.full_len()];
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in &r.terms {
                t.push(i, j, v);
            }
            offset[i] = r.constant;
        }
        let mut by_key: std::collections::BTreeMap<GroupKey, Vec<usize>> = Default::default();
        for (j, key) in bld.keys.iter().enumerate() {
            by_key.entry(*key).or_default().push(j);
        }
        Ok(DofMap {
            layout: l,
            parametrization,
            n_free,
            map: t.build(),
            offset,
            free_index: bld.free_index,
            groups: by_key.into_values().collect(),
        })
    }

    pub fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut v = linalg::spmv(&self.map, x);
        linalg::axpy(1.0, &self.offset, &mut v);
        v
    }

    /// Free unknowns read off a stacked primal vector (direct
    /// parametrization only).
    pub fn restrict(&self, full: &[f64]) -> Result<Vec<f64>> {
        self.free_index
            .iter()
            .map(|i| {
                i.map(|i| full[i])
                    .ok_or_else(|| Error::Unsupported("restriction needs the direct parametrization".into()))
            })
            .collect()
    }
}

/// J(x) = Σ w[−gᵀF + ½FᵀℒF] with F = S x + F_fixed, stored as
/// ½xᵀAx − bᵀx + j0.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub dofs: DofMap,
    pub s: CsrMatrix<f64>,
    pub f_fixed: Vec<f64>,
    pub weights: Vec<f64>,
    pub wl: CsrMatrix<f64>,
    pub a: CsrMatrix<f64>,
    pub b: Vec<f64>,
    pub j0: f64,
}

/// Block-diagonal W·ℒ over a quadruple vector.
pub fn weighted_operator(mesh: &Mesh, medium: &Medium) -> CsrMatrix<f64> {
    let l = &medium.layout;
    let mut t = Triplets::new(l.field_len(), l.field_len());
    for loc in [Location::Cell, Location::Node] {
        for i in 0..l.n_entities(loc) {
            if let Some(block) = medium.block(loc, i) {
                let w = crate::fields::medium::entity_weight(mesh, loc, i);
                let o = l.entity_offset(loc, i);
                let m = block.matrix();
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        t.push(o + r, o + c, w * m[(r, c)]);
                    }
                }
            }
        }
    }
    t.build()
}

impl Quadratic {
    /// Assemble with linear term `g` (G₀ for the primal principle).
    pub fn assemble(mesh: &Mesh, medium: &Medium, src: &SourceData, bc: &BoundarySpec, g: &[f64]) -> Result<Self> {
        Self::assemble_with(mesh, medium, src, bc, g, Parametrization::Direct)
    }

    pub fn assemble_with(
        mesh: &Mesh,
        medium: &Medium,
        src: &SourceData,
        bc: &BoundarySpec,
        g: &[f64],
        parametrization: Parametrization,
    ) -> Result<Self> {
        let l = medium.layout;
        if g.len() != l.field_len() {
            return Err(Error::Dimension("linear term has the wrong length".into()));
        }
        let dofs = DofMap::build_with(mesh, medium, src, bc, parametrization)?;
        let ops = Operators::new(mesh, l);
        let coeffs = Coefficients::new(l.physics, src.omega)?;
        let kf = constraint_map(&ops, &coeffs, Side::Primal);
        let s = &kf * &dofs.map;
        let mut f_fixed = linalg::spmv(&kf, &dofs.offset);
        linalg::axpy(1.0, &src.primal_source, &mut f_fixed);
        let weights = field_weights(mesh, &l);
        let wl = weighted_operator(mesh, medium);
        let wls = &wl * &s;
        let a = &s.transpose() * &wls;
        let wl_ff = linalg::spmv(&wl, &f_fixed);
        let rhs: Vec<f64> = g.iter().zip(&weights).zip(&wl_ff).map(|((g, w), lf)| w * g - lf).collect();
        let b = linalg::spmv_t(&s, &rhs);
        let j0 = f_fixed
            .iter()
            .zip(g)
            .zip(&weights)
            .zip(&wl_ff)
            .map(|(((f, g), w), lf)| -w * g * f + 0.5 * f * lf)
            .sum();
        Ok(Quadratic {
            dofs,
            s,
            f_fixed,
            weights,
            wl,
            a,
            b,
            j0,
        })
    }

    pub fn n_free(&self) -> usize {
        self.dofs.n_free
    }

    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        let mut f = linalg::spmv(&self.s, x);
        linalg::axpy(1.0, &self.f_fixed, &mut f);
        f
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let ax = linalg::spmv(&self.a, x);
        0.5 * linalg::dot(x, &ax) - linalg::dot(&self.b, x) + self.j0
    }

    /// ∇J = A x − b.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = linalg::spmv(&self.a, x);
        linalg::axpy(-1.0, &self.b, &mut g);
        g
    }

    /// Dense inverse blocks of A over the entity groups.
    pub fn block_jacobi(&self) -> Result<Vec<(Vec<usize>, DMatrix<f64>)>> {
        let mut owner = vec![(usize::MAX, 0); self.n_free()];
        for (g, idx) in self.dofs.groups.iter().enumerate() {
            for (p, &j) in idx.iter().enumerate() {
                owner[j] = (g, p);
            }
        }
        let mut blocks: Vec<DMatrix<f64>> = self
            .dofs
            .groups
            .iter()
            .map(|idx| DMatrix::zeros(idx.len(), idx.len()))
            .collect();
        for (i, j, v) in self.a.triplet_iter() {
            let ((gi, pi), (gj, pj)) = (owner[i], owner[j]);
            if gi == gj {
                blocks[gi][(pi, pj)] += *v;
            }
        }
        self.dofs
            .groups
            .iter()
            .zip(blocks)
            .map(|(idx, m)| Ok((idx.clone(), linalg::spd_inverse(&m, "preconditioner block")?)))
            .collect()
    }
}
