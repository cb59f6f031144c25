//! Voxel discretization of the comparison problem in unbounded space.
//!
//! Voxels are cubes of side h centered at integer multiples of h.  Nodes are
//! their corners; displacements are trilinear inside each voxel and strains
//! are taken at the voxel center.  Voxel and node quadrature weights are h³.
//!
//! Field and polarization layout: voxels first, each with 2m entries
//! (strain-like, stress-like), then nodes with 2n entries
//! (ωu-like, momentum-like).

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{greens_evaluate, sphere_integrals, Comparison3d, SphereIntegrals, SphereOrder};
use crate::error::{Error, Result};
use crate::hs::{BoundClass, DifferenceInverse, H0Applier};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCloud {
    pub h: f64,
    pub voxels: Vec<[i64; 3]>,
    /// Corner coordinates in units of h/2 (odd integers), sorted.
    pub nodes: Vec<[i64; 3]>,
    /// Node index of each corner of each voxel, corners ordered as in
    /// [`CORNERS`].
    pub corners: Vec<[usize; 8]>,
}

pub const CORNERS: [[i64; 3]; 8] = [
    [-1, -1, -1],
    [1, -1, -1],
    [-1, 1, -1],
    [1, 1, -1],
    [-1, -1, 1],
    [1, -1, 1],
    [-1, 1, 1],
    [1, 1, 1],
];

impl VoxelCloud {
    pub fn new(h: f64, voxels: Vec<[i64; 3]>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Validation(format!("voxel size must be positive, got {h}")));
        }
        if voxels.is_empty() {
            return Err(Error::Validation("voxel cloud is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(v) = voxels.iter().find(|v| !seen.insert(**v)) {
            return Err(Error::Validation(format!("voxel {v:?} listed twice")));
        }
        let mut index = BTreeMap::new();
        for v in &voxels {
            for s in CORNERS {
                index.insert([2 * v[0] + s[0], 2 * v[1] + s[1], 2 * v[2] + s[2]], 0usize);
            }
        }
        for (k, slot) in index.values_mut().enumerate() {
            *slot = k;
        }
        let corners = voxels
            .iter()
            .map(|v| CORNERS.map(|s| index[&[2 * v[0] + s[0], 2 * v[1] + s[1], 2 * v[2] + s[2]]]))
            .collect();
        Ok(VoxelCloud {
            h,
            nodes: index.into_keys().collect(),
            voxels,
            corners,
        })
    }

    pub fn node_position(&self, a: usize) -> Vector3<f64> {
        Vector3::from(self.nodes[a].map(|k| k as f64)) * (0.5 * self.h)
    }

    pub fn voxel_center(&self, v: usize) -> Vector3<f64> {
        Vector3::from(self.voxels[v].map(|k| k as f64)) * self.h
    }

    /// Index of the node at `x`, if any.
    pub fn node_at(&self, x: &Vector3<f64>) -> Option<usize> {
        (0..self.nodes.len()).find(|&a| (self.node_position(a) - x).norm() <= 1e-12 * self.h)
    }
}

/// Comparison medium filling all space, sampled on a voxel cloud.
#[derive(Debug, Clone)]
pub struct InfiniteMedium {
    pub comparison: Comparison3d,
    pub omega: f64,
    pub cloud: VoxelCloud,
    pub order: SphereOrder,
    /// Node-to-node matrix of 𝒢₀(x_a − x_b)h³, nodes of width 2n.
    pub gmat: DMatrix<f64>,
    pub integrals: SphereIntegrals,
    pub warnings: Vec<String>,
    /// Directions nudged off defective eigenproblems while building `gmat`.
    pub perturbed_directions: usize,
    g1: DMatrix<f64>,
    g2: DMatrix<f64>,
    g3: DMatrix<f64>,
    strain_blocks: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
}

/// Fields produced by a polarization and body force.
#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteSolution {
    /// Effective force per node, [f̃₁ (n), f̃₂ (n)].
    pub source: Vec<f64>,
    /// Per node, [u' (n), u'' (n)].
    pub u: Vec<f64>,
    pub strain_re: Vec<f64>,
    pub strain_im: Vec<f64>,
    pub stress_re: Vec<f64>,
    pub momentum_im: Vec<f64>,
    /// F' in the field layout.
    pub field: Vec<f64>,
}

fn canonical_offset(d: [i64; 3]) -> [i64; 3] {
    match d.iter().find(|v| **v != 0) {
        Some(v) if *v < 0 => d.map(|k| -k),
        _ => d,
    }
}

fn block_apply(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let w = m.ncols();
    x.chunks(w).flat_map(|c| linalg::mat_vec(m, c)).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn scale(s: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

impl InfiniteMedium {
    pub fn new(comparison: Comparison3d, omega: f64, cloud: VoxelCloud, order: SphereOrder) -> Result<Self> {
        if omega <= 0.0 {
            return Err(Error::Frequency(omega));
        }
        let integrals = sphere_integrals(omega, &comparison, order)?;
        let h = cloud.h;
        let mut warnings = Vec::new();
        if h > integrals.min_decay_length / 4.0 {
            warnings.push(format!(
                "voxel size {h} exceeds a quarter of the shortest decay length {:.4e}",
                integrals.min_decay_length
            ));
        }

        let nn = cloud.nodes.len();
        let mut offsets: Vec<[i64; 3]> = Vec::new();
        for a in 0..nn {
            for b in 0..a {
                let d = [0, 1, 2].map(|k| cloud.nodes[a][k] - cloud.nodes[b][k]);
                offsets.push(canonical_offset(d));
            }
        }
        offsets.sort_unstable();
        offsets.dedup();
        let evaluated: Vec<(DMatrix<f64>, usize)> = offsets
            .par_iter()
            .map(|d| {
                let x = d.map(|k| k as f64 * 0.5 * h);
                greens_evaluate(x, omega, &comparison, order).map(|g| (g.matrix * h.powi(3), g.perturbed_directions))
            })
            .collect::<Result<_>>()?;
        let perturbed_directions = evaluated.iter().map(|e| e.1).sum();
        let table: HashMap<[i64; 3], DMatrix<f64>> = offsets.into_iter().zip(evaluated.into_iter().map(|e| e.0)).collect();

        // ball of volume h³ about the node
        let radius = (3.0 * h.powi(3) / (4.0 * std::f64::consts::PI)).cbrt();
        let self_term = &integrals.static_integral * (radius * radius / (8.0 * std::f64::consts::PI))
            + &integrals.smooth_at_origin * h.powi(3);

        let w = comparison.size();
        let mut gmat = DMatrix::zeros(nn * w, nn * w);
        for a in 0..nn {
            for b in 0..nn {
                let block = if a == b {
                    &self_term
                } else {
                    &table[&canonical_offset([0, 1, 2].map(|k| cloud.nodes[a][k] - cloud.nodes[b][k]))]
                };
                gmat.view_mut((a * w, b * w), (w, w)).copy_from(block);
            }
        }

        let n = w / 2;
        let mut g1 = DMatrix::zeros(nn * n, nn * n);
        let mut g2 = DMatrix::zeros(nn * n, nn * n);
        let mut g3 = DMatrix::zeros(nn * n, nn * n);
        for a in 0..nn {
            for b in 0..nn {
                let blk = gmat.view((a * w, b * w), (w, w));
                g2.view_mut((a * n, b * n), (n, n)).copy_from(&blk.view((0, 0), (n, n)));
                g1.view_mut((a * n, b * n), (n, n)).copy_from(&blk.view((0, n), (n, n)));
                g3.view_mut((a * n, b * n), (n, n)).copy_from(&(-blk.view((n, n), (n, n))));
            }
        }

        let strain_blocks = CORNERS
            .iter()
            .map(|s| comparison.kind.strain_map(&(Vector3::from(s.map(|k| k as f64)) / (4.0 * h))))
            .collect();
        let m = comparison.kind.strain_size();
        let weights = vec![h.powi(3); cloud.voxels.len() * 2 * m + nn * w];
        Ok(InfiniteMedium {
            comparison,
            omega,
            cloud,
            order,
            gmat,
            integrals,
            warnings,
            perturbed_directions,
            g1,
            g2,
            g3,
            strain_blocks,
            weights,
        })
    }

    fn n(&self) -> usize {
        self.comparison.kind.displacement_size()
    }

    fn m(&self) -> usize {
        self.comparison.kind.strain_size()
    }

    pub fn field_len(&self) -> usize {
        self.weights.len()
    }

    /// Voxel-center strain ℰ_h u of a nodal displacement (n per node).
    pub fn strain(&self, u: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n(), self.m());
        let mut e = vec![0.0; self.cloud.voxels.len() * m];
        for (v, corners) in self.cloud.corners.iter().enumerate() {
            for (c, &a) in corners.iter().enumerate() {
                let y = linalg::mat_vec(&self.strain_blocks[c], &u[a * n..(a + 1) * n]);
                linalg::axpy(1.0, &y, &mut e[v * m..(v + 1) * m]);
            }
        }
        e
    }

    /// ℰ_hᵀ s, so that div_h = −ℰ_hᵀ.
    pub fn strain_t(&self, s: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n(), self.m());
        let mut u = vec![0.0; self.cloud.nodes.len() * n];
        for (v, corners) in self.cloud.corners.iter().enumerate() {
            for (c, &a) in corners.iter().enumerate() {
                let y = linalg::mat_vec(&self.strain_blocks[c].transpose(), &s[v * m..(v + 1) * m]);
                linalg::axpy(1.0, &y, &mut u[a * n..(a + 1) * n]);
            }
        }
        u
    }

    /// (t1, t2, t3, t4) = (τ'', −η'', π', −ν') from the polarization layout.
    fn split(&self, t: &[f64]) -> Result<[Vec<f64>; 4]> {
        if t.len() != self.field_len() {
            return Err(Error::Dimension(format!(
                "polarization has {} entries, the voxel cloud needs {}",
                t.len(),
                self.field_len()
            )));
        }
        let (n, m) = (self.n(), self.m());
        let nv = self.cloud.voxels.len();
        let (cells, nodes) = t.split_at(nv * 2 * m);
        let pick = |x: &[f64], w: usize, half: usize| -> Vec<f64> {
            x.chunks(2 * w).flat_map(|c| c[half * w..(half + 1) * w].to_vec()).collect()
        };
        Ok([pick(cells, m, 0), pick(cells, m, 1), pick(nodes, n, 0), pick(nodes, n, 1)])
    }

    fn join(&self, parts: [&[f64]; 4]) -> Vec<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = Vec::with_capacity(self.field_len());
        for v in 0..self.cloud.voxels.len() {
            out.extend_from_slice(&parts[0][v * m..(v + 1) * m]);
            out.extend_from_slice(&parts[1][v * m..(v + 1) * m]);
        }
        for a in 0..self.cloud.nodes.len() {
            out.extend_from_slice(&parts[2][a * n..(a + 1) * n]);
            out.extend_from_slice(&parts[3][a * n..(a + 1) * n]);
        }
        out
    }

    /// Effective nodal force [f̃₁, f̃₂] from a polarization and a complex
    /// body-force density f = f' + if''.
    pub fn source_term(&self, t: &[f64], body: Option<&[Complex64]>) -> Result<Vec<f64>> {
        let [t1, t2, t3, t4] = self.split(t)?;
        let cm = &self.comparison.medium;
        let (n, w) = (self.n(), self.omega);
        let mut f1 = sub(
            &scale(-1.0, &self.strain_t(&add(&t1, &block_apply(&cm.d1, &t2)))),
            &add(&scale(w, &t3), &scale(w, &block_apply(&cm.q1, &t4))),
        );
        let mut f2 = add(&self.strain_t(&block_apply(&cm.d3, &t2)), &scale(w, &block_apply(&cm.q3, &t4)));
        if let Some(f) = body {
            if f.len() != f1.len() {
                return Err(Error::Dimension(format!(
                    "body force has {} entries, the voxel cloud needs {}",
                    f.len(),
                    f1.len()
                )));
            }
            for (k, z) in f.iter().enumerate() {
                f1[k] += z.im;
                f2[k] += z.re;
            }
        }
        let mut out = Vec::with_capacity(2 * f1.len());
        for a in 0..self.cloud.nodes.len() {
            out.extend_from_slice(&f1[a * n..(a + 1) * n]);
            out.extend_from_slice(&f2[a * n..(a + 1) * n]);
        }
        Ok(out)
    }

    /// Fields generated in the comparison medium by a polarization and an
    /// optional body force.
    pub fn solve(&self, t: &[f64], body: Option<&[Complex64]>) -> Result<InfiniteSolution> {
        let [_, t2, _, t4] = self.split(t)?;
        let source = self.source_term(t, body)?;
        let u = linalg::mat_vec(&self.gmat, &source);
        let n = self.n();
        let (mut u_re, mut u_im) = (Vec::new(), Vec::new());
        for c in u.chunks(2 * n) {
            u_re.extend_from_slice(&c[..n]);
            u_im.extend_from_slice(&c[n..]);
        }
        let cm = &self.comparison.medium;
        let w = self.omega;
        let strain_re = self.strain(&u_re);
        let strain_im = self.strain(&u_im);
        // σ' = D₁ᵀe' + D₃(η'' − e''), p'' = ωQ₁ᵀu' − Q₃(ωu'' + ν')
        let stress_re = sub(
            &block_apply(&cm.d1.transpose(), &strain_re),
            &block_apply(&cm.d3, &add(&t2, &strain_im)),
        );
        let momentum_im = sub(
            &scale(w, &block_apply(&cm.q1.transpose(), &u_re)),
            &block_apply(&cm.q3, &sub(&scale(w, &u_im), &t4)),
        );
        let field = self.join([&strain_re, &stress_re, &scale(w, &u_re), &momentum_im]);
        Ok(InfiniteSolution {
            source,
            u,
            strain_re,
            strain_im,
            stress_re,
            momentum_im,
            field,
        })
    }

    /// U(x) = Σ_b 𝒢₀(x − x_b)h³f̃_b for an effective nodal force density.
    pub fn displacement_at(&self, x: [f64; 3], source: &[f64]) -> Result<Vec<f64>> {
        let w = self.comparison.size();
        if source.len() != self.cloud.nodes.len() * w {
            return Err(Error::Dimension("nodal source length does not match the voxel cloud".into()));
        }
        let xv = Vector3::from(x);
        if let Some(a) = self.cloud.node_at(&xv) {
            return Ok(linalg::mat_vec(&self.gmat.rows(a * w, w).into_owned(), source));
        }
        let parts: Vec<Vec<f64>> = (0..self.cloud.nodes.len())
            .into_par_iter()
            .map(|b| {
                let d = xv - self.cloud.node_position(b);
                let g = greens_evaluate([d[0], d[1], d[2]], self.omega, &self.comparison, self.order)?;
                Ok(linalg::mat_vec(&(g.matrix * self.cloud.h.powi(3)), &source[b * w..(b + 1) * w]))
            })
            .collect::<Result<_>>()?;
        let mut u = vec![0.0; w];
        for p in &parts {
            linalg::axpy(1.0, p, &mut u);
        }
        Ok(u)
    }

    /// (ℒ − ℒ₀)⁻¹ on the voxel layout from the medium's blocks on every
    /// voxel and node, with the sign class of ℒ₀ − ℒ.
    pub fn difference_inverse(
        &self,
        cells: &[DMatrix<f64>],
        nodes: &[DMatrix<f64>],
    ) -> Result<(DifferenceInverse, BoundClass)> {
        let (nv, nn) = (self.cloud.voxels.len(), self.cloud.nodes.len());
        if cells.len() != nv || nodes.len() != nn {
            return Err(Error::Dimension(format!(
                "need {nv} voxel and {nn} node blocks, got {} and {}",
                cells.len(),
                nodes.len()
            )));
        }
        let (c0, p0) = (self.comparison.medium.cell.matrix(), self.comparison.medium.node.matrix());
        let mut diffs = Vec::with_capacity(nv + nn);
        let mut labels = Vec::with_capacity(nv + nn);
        let (mut all_min, mut all_saddle) = (true, true);
        let mut offset = 0;
        for (k, (blk, l0)) in cells.iter().map(|c| (c, &c0)).chain(nodes.iter().map(|p| (p, &p0))).enumerate() {
            if blk.shape() != l0.shape() {
                return Err(Error::Dimension(format!("block {k} has shape {:?}, expected {:?}", blk.shape(), l0.shape())));
            }
            let diff = blk - l0;
            let (lo, hi) = linalg::sym_eig_range(&diff);
            all_min &= hi < 0.0;
            all_saddle &= lo > 0.0;
            let scale = linalg::max_abs(blk).max(linalg::max_abs(l0));
            diffs.push((offset, diff, scale));
            labels.push(if k < nv { format!("voxel {k}") } else { format!("node {}", k - nv) });
            offset += l0.nrows();
        }
        let class = if all_min {
            BoundClass::MinimumPrinciple
        } else if all_saddle {
            BoundClass::SaddlePrinciple
        } else {
            BoundClass::Indefinite
        };
        Ok((DifferenceInverse::new(diffs, &labels)?, class))
    }

    /// ℋ₀T assembled term by term from the node operators G₁, G₂, G₃ of 𝒢₀.
    pub fn apply_h0(&self, t: &[f64]) -> Result<Vec<f64>> {
        let [t1, t2, t3, t4] = self.split(t)?;
        let cm = &self.comparison.medium;
        let w = self.omega;
        let e = |x: &[f64]| self.strain(x);
        let et = |x: &[f64]| self.strain_t(x);
        let g1 = |x: &[f64]| linalg::mat_vec(&self.g1, x);
        let g1t = |x: &[f64]| linalg::mat_vec(&self.g1.transpose(), x);
        let g2 = |x: &[f64]| linalg::mat_vec(&self.g2, x);
        let g3 = |x: &[f64]| linalg::mat_vec(&self.g3, x);
        let d1 = |x: &[f64]| block_apply(&cm.d1, x);
        let d1t = |x: &[f64]| block_apply(&cm.d1.transpose(), x);
        let d3 = |x: &[f64]| block_apply(&cm.d3, x);
        let q1 = |x: &[f64]| block_apply(&cm.q1, x);
        let q1t = |x: &[f64]| block_apply(&cm.q1.transpose(), x);
        let q3 = |x: &[f64]| block_apply(&cm.q3, x);

        let et1 = et(&t1);
        let (etd1, etd3) = (et(&d1(&t2)), et(&d3(&t2)));
        let (q1t4, q3t4) = (q1(&t4), q3(&t4));
        // node vectors shared by several rows
        let a1 = g2(&et1);
        let b1 = g1t(&et1);
        let a2 = sub(&g2(&etd1), &g1(&etd3));
        let b2 = add(&g1t(&etd1), &g3(&etd3));
        let a3 = g2(&t3);
        let b3 = g1t(&t3);
        let a4 = sub(&g2(&q1t4), &g1(&q3t4));
        let b4 = add(&g1t(&q1t4), &g3(&q3t4));

        let r1 = [e(&a1), e(&a2), scale(w, &e(&a3)), scale(w, &e(&a4))]
            .iter()
            .fold(vec![0.0; t1.len()], |acc, x| add(&acc, x));
        let r2 = [
            sub(&d1t(&e(&a1)), &d3(&e(&b1))),
            d3(&t2),
            sub(&d1t(&e(&a2)), &d3(&e(&b2))),
            scale(w, &sub(&d1t(&e(&a3)), &d3(&e(&b3)))),
            scale(w, &sub(&d1t(&e(&a4)), &d3(&e(&b4)))),
        ]
        .iter()
        .fold(vec![0.0; t2.len()], |acc, x| add(&acc, x));
        let r3 = [scale(w, &a1), scale(w, &a2), scale(w * w, &a3), scale(w * w, &a4)]
            .iter()
            .fold(vec![0.0; t3.len()], |acc, x| add(&acc, x));
        let r4 = [
            scale(w, &sub(&q1t(&a1), &q3(&b1))),
            scale(w, &sub(&q1t(&a2), &q3(&b2))),
            scale(w * w, &sub(&q1t(&a3), &q3(&b3))),
            scale(-1.0, &q3t4),
            scale(w * w, &q1t(&a4)),
            scale(-w * w, &q3(&b4)),
        ]
        .iter()
        .fold(vec![0.0; t4.len()], |acc, x| add(&acc, x));
        Ok(self.join([&r1, &r2, &r3, &r4]))
    }
}

impl H0Applier for InfiniteMedium {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn apply(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.apply_h0(t)
    }
}
