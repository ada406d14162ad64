//! Block-sparse matrices, block preconditioners and restarted GMRES.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearSolveError {
    #[error("GMRES did not converge in {iterations} iterations (relative residual {achieved:e})")]
    NotConverged { iterations: usize, achieved: f64 },
    #[error("singular diagonal block at block row {0}")]
    SingularBlock(usize),
    #[error("non-finite value in the linear system")]
    NonFinite,
}

/// Block compressed-sparse-row matrix with square dense blocks stored row
/// major.
#[derive(Debug, Clone)]
pub struct BlockSparse {
    bs: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag: Vec<usize>,
    values: Vec<f64>,
}

impl BlockSparse {
    /// Zero matrix with the given block pattern; every row must contain its
    /// diagonal block. Column lists are sorted and deduplicated here.
    pub fn from_pattern(pattern: &[Vec<usize>], bs: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(pattern.len() + 1);
        let mut col_idx = Vec::new();
        let mut diag = Vec::with_capacity(pattern.len());
        row_ptr.push(0);
        for (i, cols) in pattern.iter().enumerate() {
            let mut c = cols.clone();
            c.push(i);
            c.sort_unstable();
            c.dedup();
            let start = col_idx.len();
            diag.push(start + c.binary_search(&i).expect("diagonal present"));
            col_idx.extend(c);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len() * bs * bs];
        Self { bs, row_ptr, col_idx, diag, values }
    }

    pub fn block_size(&self) -> usize {
        self.bs
    }

    /// Number of block rows.
    pub fn n_block_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of scalar rows.
    pub fn n(&self) -> usize {
        self.n_block_rows() * self.bs
    }

    pub fn n_blocks(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn col(&self, k: usize) -> usize {
        self.col_idx[k]
    }

    pub fn diag_index(&self, i: usize) -> usize {
        self.diag[i]
    }

    /// Storage index of block `(i, j)`.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.col_idx[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    pub fn block(&self, k: usize) -> &[f64] {
        let b2 = self.bs * self.bs;
        &self.values[k * b2..(k + 1) * b2]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [f64] {
        let b2 = self.bs * self.bs;
        &mut self.values[k * b2..(k + 1) * b2]
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `y = A x`, parallel over block rows (each row summed in a fixed
    /// order, so the result does not depend on the thread count).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let bs = self.bs;
        y.par_chunks_mut(bs).enumerate().for_each(|(i, yi)| {
            yi.iter_mut().for_each(|v| *v = 0.0);
            for k in self.row_range(i) {
                let j = self.col_idx[k];
                let a = self.block(k);
                let xj = &x[j * bs..(j + 1) * bs];
                for r in 0..bs {
                    let row = &a[r * bs..(r + 1) * bs];
                    yi[r] += row.iter().zip(xj).map(|(p, q)| p * q).sum::<f64>();
                }
            }
        });
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let bs = self.bs;
        let mut m = DMatrix::zeros(self.n(), self.n());
        for i in 0..self.n_block_rows() {
            for k in self.row_range(i) {
                let j = self.col_idx[k];
                let a = self.block(k);
                for r in 0..bs {
                    for c in 0..bs {
                        m[(i * bs + r, j * bs + c)] = a[r * bs + c];
                    }
                }
            }
        }
        m
    }
}

pub trait Preconditioner: Sync {
    /// `z = M^{-1} r`.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

fn invert_block(a: &[f64], bs: usize, row: usize) -> Result<Vec<f64>, LinearSolveError> {
    let m = DMatrix::from_row_slice(bs, bs, a);
    let inv = m.try_inverse().ok_or(LinearSolveError::SingularBlock(row))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(LinearSolveError::SingularBlock(row));
    }
    // back to row-major
    Ok(inv.transpose().as_slice().to_vec())
}

fn block_mul_vec(a: &[f64], x: &[f64], y: &mut [f64], bs: usize) {
    for r in 0..bs {
        y[r] = a[r * bs..(r + 1) * bs].iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

/// Inverse of the diagonal blocks.
pub struct BlockJacobi {
    bs: usize,
    inv: Vec<f64>,
}

impl BlockJacobi {
    pub fn new(a: &BlockSparse) -> Result<Self, LinearSolveError> {
        let bs = a.block_size();
        let mut inv = Vec::with_capacity(a.n_block_rows() * bs * bs);
        for i in 0..a.n_block_rows() {
            inv.extend(invert_block(a.block(a.diag_index(i)), bs, i)?);
        }
        Ok(Self { bs, inv })
    }
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let bs = self.bs;
        let b2 = bs * bs;
        z.par_chunks_mut(bs).enumerate().for_each(|(i, zi)| {
            block_mul_vec(&self.inv[i * b2..(i + 1) * b2], &r[i * bs..(i + 1) * bs], zi, bs);
        });
    }
}

/// Block incomplete LU factorization with level-of-fill `k`: ILU(0) keeps
/// the sparsity of the matrix, higher levels admit fill created by chains of
/// up to `k` eliminations.
pub struct BlockIlu {
    lu: BlockSparse,
    /// Inverted diagonal blocks of U.
    dinv: Vec<f64>,
}

fn gemm_sub(c: &mut [f64], a: &[f64], b: &[f64], bs: usize) {
    // c -= a b
    for r in 0..bs {
        for k in 0..bs {
            let aik = a[r * bs + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * bs..(k + 1) * bs];
            let crow = &mut c[r * bs..(r + 1) * bs];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv -= aik * bv;
            }
        }
    }
}

fn gemm(a: &[f64], b: &[f64], bs: usize) -> Vec<f64> {
    let mut c = vec![0.0; bs * bs];
    for r in 0..bs {
        for k in 0..bs {
            let aik = a[r * bs + k];
            for c_ in 0..bs {
                c[r * bs + c_] += aik * b[k * bs + c_];
            }
        }
    }
    c
}

/// Symbolic ILU(k): block pattern of the factors.
fn fill_pattern(a: &BlockSparse, level: usize) -> Vec<Vec<usize>> {
    let n = a.n_block_rows();
    // upper part of every processed row with its fill levels
    let mut upper: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n);
    let mut pattern = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: BTreeMap<usize, usize> = a.row_range(i).map(|k| (a.col(k), 0)).collect();
        let mut cursor = 0;
        while let Some((&k, &lik)) = row.range(cursor..i).next() {
            cursor = k + 1;
            for &(j, lkj) in &upper[k] {
                let l = lik + lkj + 1;
                if l <= level {
                    let e = row.entry(j).or_insert(l);
                    *e = (*e).min(l);
                }
            }
        }
        upper.push(row.range(i + 1..).map(|(&j, &l)| (j, l)).collect());
        pattern.push(row.into_keys().collect());
    }
    pattern
}

impl BlockIlu {
    pub fn new(a: &BlockSparse, level: usize) -> Result<Self, LinearSolveError> {
        let bs = a.block_size();
        let b2 = bs * bs;
        let n = a.n_block_rows();
        let mut lu = if level == 0 {
            a.clone()
        } else {
            let mut m = BlockSparse::from_pattern(&fill_pattern(a, level), bs);
            for i in 0..n {
                for k in a.row_range(i) {
                    let p = m.find(i, a.col(k)).expect("fill pattern contains the matrix pattern");
                    m.block_mut(p).copy_from_slice(a.block(k));
                }
            }
            m
        };
        let mut dinv = vec![0.0; n * b2];
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let row = lu.row_range(i);
            for k in row.clone() {
                pos[lu.col_idx[k]] = k;
            }
            for kk in row.clone() {
                let k = lu.col_idx[kk];
                if k >= i {
                    break;
                }
                // L_ik = A_ik U_kk^{-1}
                let lik = gemm(lu.block(kk), &dinv[k * b2..(k + 1) * b2], bs);
                lu.block_mut(kk).copy_from_slice(&lik);
                for kj in lu.row_range(k) {
                    let j = lu.col_idx[kj];
                    if j <= k {
                        continue;
                    }
                    let p = pos[j];
                    if p == usize::MAX {
                        continue;
                    }
                    let ukj = lu.block(kj).to_vec();
                    gemm_sub(lu.block_mut(p), &lik, &ukj, bs);
                }
            }
            let d = lu.diag_index(i);
            dinv[i * b2..(i + 1) * b2].copy_from_slice(&invert_block(lu.block(d), bs, i)?);
            for k in row {
                pos[lu.col_idx[k]] = usize::MAX;
            }
        }
        Ok(Self { lu, dinv })
    }
}

impl Preconditioner for BlockIlu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let a = &self.lu;
        let bs = a.block_size();
        let b2 = bs * bs;
        let n = a.n_block_rows();
        let mut tmp = vec![0.0; bs];
        // forward: L y = r (unit diagonal)
        for i in 0..n {
            tmp.copy_from_slice(&r[i * bs..(i + 1) * bs]);
            for k in a.row_range(i) {
                let j = a.col(k);
                if j >= i {
                    break;
                }
                let blk = a.block(k);
                for rr in 0..bs {
                    tmp[rr] -= blk[rr * bs..(rr + 1) * bs].iter().zip(&z[j * bs..(j + 1) * bs]).map(|(p, q)| p * q).sum::<f64>();
                }
            }
            z[i * bs..(i + 1) * bs].copy_from_slice(&tmp);
        }
        // backward: U z = y
        for i in (0..n).rev() {
            tmp.copy_from_slice(&z[i * bs..(i + 1) * bs]);
            for k in a.row_range(i).rev() {
                let j = a.col(k);
                if j <= i {
                    break;
                }
                let blk = a.block(k);
                for rr in 0..bs {
                    tmp[rr] -= blk[rr * bs..(rr + 1) * bs].iter().zip(&z[j * bs..(j + 1) * bs]).map(|(p, q)| p * q).sum::<f64>();
                }
            }
            block_mul_vec(&self.dinv[i * b2..(i + 1) * b2], &tmp, &mut z[i * bs..(i + 1) * bs], bs);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub restart: usize,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 60, rel_tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresStats {
    pub iterations: usize,
    /// Final relative residual `|b - A x| / |b|` (as tracked by the
    /// Arnoldi recurrence).
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned restarted GMRES for `A x = b` starting from `x = 0`.
/// Reductions are serial, so results are reproducible bit for bit.
pub fn gmres(
    a: &BlockSparse,
    m: &dyn Preconditioner,
    b: &[f64],
    x: &mut [f64],
    opts: &GmresOptions,
) -> Result<GmresStats, LinearSolveError> {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = norm(b);
    if !bnorm.is_finite() {
        return Err(LinearSolveError::NonFinite);
    }
    if bnorm == 0.0 {
        return Ok(GmresStats { iterations: 0, relative_residual: 0.0 });
    }
    let restart = opts.restart.max(1);
    let mut r = b.to_vec();
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0;
    let mut rel;
    loop {
        // r = b - A x
        if total > 0 {
            a.matvec(x, &mut w);
            for i in 0..n {
                r[i] = b[i] - w[i];
            }
        }
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.rel_tol {
            return Ok(GmresStats { iterations: total, relative_residual: rel });
        }
        if total >= opts.max_iter {
            return Err(LinearSolveError::NotConverged { iterations: total, achieved: rel });
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        v.push(r.iter().map(|x| x / beta).collect());
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            m.apply(&v[k], &mut z);
            a.matvec(&z, &mut w);
            // modified Gram-Schmidt
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            if !hn.is_finite() {
                return Err(LinearSolveError::NonFinite);
            }
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= opts.rel_tol || total >= opts.max_iter || hn <= 1e-300 {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        if k_used == 0 {
            return Err(LinearSolveError::NotConverged { iterations: total, achieved: rel });
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (u, vj) in update.iter_mut().zip(&v[j]) {
                *u += yj * vj;
            }
        }
        m.apply(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        if total >= opts.max_iter && rel > opts.rel_tol {
            // confirm with the true residual before giving up
            a.matvec(x, &mut w);
            let true_rel = norm(&b.iter().zip(&w).map(|(p, q)| p - q).collect::<Vec<_>>()) / bnorm;
            if true_rel <= opts.rel_tol {
                return Ok(GmresStats { iterations: total, relative_residual: true_rel });
            }
            return Err(LinearSolveError::NotConverged { iterations: total, achieved: true_rel });
        }
    }
}
