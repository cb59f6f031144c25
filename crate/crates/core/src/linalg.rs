//! Small dense and sparse helpers shared by the other modules.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest absolute entry, used as a scale for relative tolerances.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues (min, max) of the symmetric part of `m`.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// True when the symmetric matrix is positive definite with the given
/// relative margin: min eigenvalue > rel * max |eigenvalue|.
pub fn is_positive_definite(m: &DMatrix<f64>, rel: f64) -> bool {
    let (lo, hi) = sym_eig_range(m);
    lo > 0.0 && lo > rel * hi.abs().max(lo.abs())
}

pub fn split_complex(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

pub fn join_complex(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| {
        Complex64::new(re[(i, j)], im[(i, j)])
    })
}

pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Indefinite(what.to_string()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Quadratic form xᵀ M y for a dense block stored in a slice window.
pub fn bilinear(m: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * y[j];
        }
        s += x[i] * row;
    }
    s
}

pub fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for i in 0..m.nrows() {
        let mut s = 0.0;
        for j in 0..m.ncols() {
            s += m[(i, j)] * x[j];
        }
        out[i] = s;
    }
    out
}

pub fn cmat_vec(m: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.nrows()];
    for i in 0..m.nrows() {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..m.ncols() {
            s += m[(i, j)] * x[j];
        }
        out[i] = s;
    }
    out
}

/// Block-diagonal operator acting on a flat vector, blocks laid out
/// consecutively.
#[derive(Debug, Clone)]
pub struct BlockDiagonal {
    pub blocks: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
    len: usize,
}

impl BlockDiagonal {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut len = 0;
        for b in &blocks {
            offsets.push(len);
            len += b.nrows();
        }
        BlockDiagonal { blocks, offsets, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (b, &o) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            let y = mat_vec(b, &x[o..o + n]);
            out[o..o + n].copy_from_slice(&y);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len, self.len);
        for (b, &o) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            m.view_mut((o, o), (n, n)).copy_from(b);
        }
        m
    }
}

/// Triplet accumulator producing CSR matrices.
pub struct Triplets {
    coo: CooMatrix<f64>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets {
            coo: CooMatrix::new(nrows, ncols),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.coo.push(i, j, v);
        }
    }

    pub fn build(self) -> CsrMatrix<f64> {
        CsrMatrix::from(&self.coo)
    }
}

pub fn spmv(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    for (i, yi) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for k in offsets[i]..offsets[i + 1] {
            s += vals[k] * x[cols[k]];
        }
        *yi = s;
    }
    y
}

/// yᵀ = xᵀ A, i.e. Aᵀ x without forming the transpose.
pub fn spmv_t(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.ncols()];
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    for i in 0..a.nrows() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for k in offsets[i]..offsets[i + 1] {
            y[cols[k]] += vals[k] * xi;
        }
    }
    y
}

pub fn sparse_to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        m[(i, j)] += *v;
    }
    m
}

pub fn to_dvector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Banded complex LU with partial pivoting (LAPACK gbsv layout idea, kept
/// simple: dense rows of width 2*kl + ku + 1).
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    // row-major band storage: row i holds columns i-kl ..= i+kl+ku
    data: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    fn width(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    /// Factors the matrix given by `entries` (i, j, value) with lower and
    /// upper bandwidths `kl`, `ku`.
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entries: &[(usize, usize, Complex64)],
    ) -> Result<Self> {
        let w = Self::width(kl, ku);
        let mut data = vec![Complex64::new(0.0, 0.0); n * w];
        let mut scale = 0.0_f64;
        for &(i, j, v) in entries {
            if j + kl < i || j > i + ku {
                return Err(Error::Dimension(format!(
                    "entry ({i}, {j}) outside declared band"
                )));
            }
            data[i * w + (j + kl - i)] += v;
            scale = scale.max(v.norm());
        }
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            data,
            pivots: vec![0; n],
        };
        lu.eliminate(scale)?;
        Ok(lu)
    }

    fn at(&self, i: usize, j: usize) -> Complex64 {
        // valid for j in [i - kl, i + kl + ku]
        self.data[i * Self::width(self.kl, self.ku) + (j + self.kl - i)]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        let w = Self::width(self.kl, self.ku);
        &mut self.data[i * w + (j + self.kl - i)]
    }

    fn eliminate(&mut self, scale: f64) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).norm();
            for i in k + 1..=last {
                let v = self.at(i, k).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Singular(format!(
                    "banded system has a zero pivot at row {k}"
                )));
            }
            self.pivots[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.at(k, j);
                    let b = self.at(p, j);
                    *self.at_mut(k, j) = b;
                    *self.at_mut(p, j) = a;
                }
            }
            let piv = self.at(k, k);
            for i in k + 1..=last {
                let l = self.at(i, k) / piv;
                *self.at_mut(i, k) = l;
                if l.norm() == 0.0 {
                    continue;
                }
                for j in k + 1..=jmax {
                    let u = self.at(k, j);
                    *self.at_mut(i, j) -= l * u;
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + kl).min(n.saturating_sub(1));
            let xk = x[k];
            for i in k + 1..=last {
                x[i] -= self.at(i, k) * xk;
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + kl + ku).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=jmax {
                s -= self.at(k, j) * x[j];
            }
            x[k] = s / self.at(k, k);
        }
        x
    }
}
