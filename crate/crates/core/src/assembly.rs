//! Space-time slab residual and tangent.
//!
//! A slab extrudes the fixed spatial mesh over `[t_n, t_n + dt]`; every node
//! carries a bottom and a top copy (layers 0 and 1) and fields are linear in
//! time. Unknowns are numbered `(node * 2 + layer) * 4 + component`, so the
//! global tangent is block sparse with one 8x8 block per spatial node pair.
//!
//! The element integrand is the stabilized weak form
//!
//! ```text
//! W.(U_t + A_i U,i) + W,i.(K_ij U,j)
//!   + tau (A_k^T W,k).(U_t + A_i U,i) + nu_dc W,i.U,i
//! ```
//!
//! integrated over the prism, plus the jump `W(t_n+).(U(t_n+) - U(t_n-))`
//! over the bottom face. The viscous second derivatives in the SUPG
//! residual vanish for linear elements and are left out.

use rayon::prelude::*;
use thiserror::Error;

use crate::bc::{Constraints, NodeConstraint};
use crate::dual::Dual4;
use crate::linalg::BlockSparse;
use crate::mapping::ElementQuadrature;
use crate::physics::{
    checked_pressure, diffusivity, euler_jacobians, viscous_flux, FreeStream, GasModel, Mat4, PhysicsError, State,
};
use crate::stabilization::{tau_dc, tau_mom, ElementTaus, StabilizationOptions};

/// Scalar unknowns per space-time node.
pub const NDOF: usize = 4;
/// Unknowns per spatial node (two time layers).
pub const BLOCK: usize = 2 * NDOF;
/// Entries of an element residual: 3 nodes x 2 layers x 4 components.
pub const LOCAL: usize = 3 * BLOCK;

/// Index of component `c` of `node` on `layer` in a slab vector.
#[inline]
pub fn dof(node: usize, layer: usize, c: usize) -> usize {
    node * BLOCK + layer * NDOF + c
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("element {element}: {source}")]
    InvalidState { element: usize, source: PhysicsError },
    #[error("slab duration must be positive, got {0}")]
    BadTimeStep(f64),
}

/// Everything the element integrals need besides the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowModel {
    pub gas: GasModel,
    pub free_stream: FreeStream,
    pub stabilization: StabilizationOptions,
}

/// Gauss points in time on [-1, 1] and the linear basis values there.
fn time_points() -> [(f64, [f64; 2]); 2] {
    let g = 1.0 / 3f64.sqrt();
    [(-g, [0.5 * (1.0 + g), 0.5 * (1.0 - g)]), (g, [0.5 * (1.0 - g), 0.5 * (1.0 + g)])]
}

/// Element unknowns `[node][layer]`.
pub type ElementValues = [[State; 2]; 3];

/// Evaluates the element residual (24 entries, local order
/// `(a * 2 + layer) * 4 + c`) and optionally the tangent (row major 24x24).
pub fn element_kernel(
    eq: &ElementQuadrature,
    ue: &ElementValues,
    prev: &[State; 3],
    dt: f64,
    taus: ElementTaus,
    model: &FlowModel,
    res: &mut [f64; LOCAL],
    mut tan: Option<&mut [f64; LOCAL * LOCAL]>,
) -> Result<(), PhysicsError> {
    let gas = &model.gas;
    let gamma = gas.gamma;
    let tau = taus.tau;
    let nu = taus.nu_dc;
    res.fill(0.0);
    if let Some(t) = tan.as_deref_mut() {
        t.fill(0.0);
    }
    let dtheta = [-1.0 / dt, 1.0 / dt];
    for q in 0..eq.n_points() {
        let n = &eq.shape[q];
        let dn = &eq.grads[q];
        let wq = eq.weights[q];
        for (_, theta) in time_points() {
            let w = wq * 0.5 * dt;
            let mut u = [0.0; 4];
            let mut ut = [0.0; 4];
            let mut g = [[0.0; 2]; 4];
            for a in 0..3 {
                for c in 0..4 {
                    let v = theta[0] * ue[a][0][c] + theta[1] * ue[a][1][c];
                    u[c] += n[a] * v;
                    ut[c] += n[a] * (ue[a][1][c] - ue[a][0][c]) / dt;
                    g[c][0] += dn[a][0] * v;
                    g[c][1] += dn[a][1] * v;
                }
            }
            checked_pressure(&u, gas)?;
            let (amat, da) = if tan.is_some() {
                let ad = euler_jacobians(&Dual4::seed(u), gamma);
                (ad.map(|m| m.map(|r| r.map(|x| x.v))), Some(ad))
            } else {
                (euler_jacobians(&u, gamma), None)
            };
            let mut rs = ut;
            for k in 0..2 {
                for r in 0..4 {
                    for c in 0..4 {
                        rs[r] += amat[k][r][c] * g[c][k];
                    }
                }
            }
            let e = viscous_flux(&u, &g, gas);
            // A_k^T Rs
            let mut atr = [[0.0; 4]; 2];
            for k in 0..2 {
                for r in 0..4 {
                    for c in 0..4 {
                        atr[k][c] += amat[k][r][c] * rs[r];
                    }
                }
            }
            for a in 0..3 {
                let mut v = [0.0; 4];
                for c in 0..4 {
                    v[c] = n[a] * rs[c]
                        + tau * (dn[a][0] * atr[0][c] + dn[a][1] * atr[1][c])
                        + dn[a][0] * e[0][c]
                        + dn[a][1] * e[1][c]
                        + nu * (dn[a][0] * g[c][0] + dn[a][1] * g[c][1]);
                }
                for l in 0..2 {
                    let f = w * theta[l];
                    for c in 0..4 {
                        res[(a * 2 + l) * 4 + c] += f * v[c];
                    }
                }
            }

            let Some(t) = tan.as_deref_mut() else { continue };
            let da = da.expect("dual Jacobians computed with the tangent");
            // B[:, m] = sum_k dA_k/dU_m U,k ; C_k[:, m] = (dA_k/dU_m)^T Rs
            let mut bm = [[0.0; 4]; 4];
            let mut cm = [[[0.0; 4]; 4]; 2];
            for k in 0..2 {
                for r in 0..4 {
                    for c in 0..4 {
                        let d = &da[k][r][c].d;
                        for m in 0..4 {
                            bm[r][m] += d[m] * g[c][k];
                            cm[k][c][m] += d[m] * rs[r];
                        }
                    }
                }
            }
            let kmat = diffusivity(&u, gas);
            let mut dmat = [[[0.0; 4]; 4]; 2];
            if !gas.is_inviscid() {
                let gd = g.map(|row| row.map(Dual4::constant));
                let ed = viscous_flux(&Dual4::seed(u), &gd, gas);
                for i in 0..2 {
                    for r in 0..4 {
                        dmat[i][r] = ed[i][r].d;
                    }
                }
            }
            // S_b = dN_b,k A_k + N_b B and P_kb = A_k^T S_b
            let mut sb = [[[0.0; 4]; 4]; 3];
            let mut pkb = [[[[0.0; 4]; 4]; 3]; 2];
            for b in 0..3 {
                for r in 0..4 {
                    for c in 0..4 {
                        sb[b][r][c] = dn[b][0] * amat[0][r][c] + dn[b][1] * amat[1][r][c] + n[b] * bm[r][c];
                    }
                }
                for k in 0..2 {
                    for r in 0..4 {
                        for c in 0..4 {
                            let mut s = 0.0;
                            for x in 0..4 {
                                s += amat[k][x][r] * sb[b][x][c];
                            }
                            pkb[k][b][r][c] = s;
                        }
                    }
                }
            }
            for a in 0..3 {
                // T_a = N_a I + tau dN_a,k A_k^T
                let mut ta: Mat4 = [[0.0; 4]; 4];
                for r in 0..4 {
                    for c in 0..4 {
                        ta[r][c] = tau * (dn[a][0] * amat[0][c][r] + dn[a][1] * amat[1][c][r]);
                    }
                    ta[r][r] += n[a];
                }
                for b in 0..3 {
                    let gab = dn[a][0] * dn[b][0] + dn[a][1] * dn[b][1];
                    let mut x: Mat4 = [[0.0; 4]; 4];
                    for r in 0..4 {
                        for c in 0..4 {
                            let mut s = n[a] * sb[b][r][c]
                                + tau * (dn[a][0] * pkb[0][b][r][c] + dn[a][1] * pkb[1][b][r][c])
                                + tau * n[b] * (dn[a][0] * cm[0][r][c] + dn[a][1] * cm[1][r][c]);
                            for i in 0..2 {
                                s += dn[a][i]
                                    * (dn[b][0] * kmat[i][0][r][c] + dn[b][1] * kmat[i][1][r][c] + n[b] * dmat[i][r][c]);
                            }
                            x[r][c] = s;
                        }
                        x[r][r] += nu * gab;
                    }
                    for l in 0..2 {
                        for m in 0..2 {
                            let f = w * theta[l];
                            let fy = f * dtheta[m] * n[b];
                            let fx = f * theta[m];
                            for r in 0..4 {
                                let row = ((a * 2 + l) * 4 + r) * LOCAL + (b * 2 + m) * 4;
                                for c in 0..4 {
                                    t[row + c] += fy * ta[r][c] + fx * x[r][c];
                                }
                            }
                        }
                    }
                }
            }
        }
        // jump term on the bottom face
        let mut du = [0.0; 4];
        for b in 0..3 {
            for c in 0..4 {
                du[c] += n[b] * (ue[b][0][c] - prev[b][c]);
            }
        }
        for a in 0..3 {
            for c in 0..4 {
                res[(a * 2) * 4 + c] += wq * n[a] * du[c];
            }
        }
        if let Some(t) = tan.as_deref_mut() {
            for a in 0..3 {
                for b in 0..3 {
                    let m = wq * n[a] * n[b];
                    for c in 0..4 {
                        t[((a * 2) * 4 + c) * LOCAL + (b * 2) * 4 + c] += m;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Slab system for a fixed spatial discretization.
pub struct SlabAssembler<'a> {
    pub elements: &'a [ElementQuadrature],
    pub model: FlowModel,
    pub constraints: &'a Constraints,
    n_nodes: usize,
    pattern: Vec<Vec<usize>>,
    /// BSR storage index of every element block pair, filled by
    /// [`SlabAssembler::new_matrix`].
    block_index: Vec<[usize; 9]>,
}

impl<'a> SlabAssembler<'a> {
    pub fn new(
        elements: &'a [ElementQuadrature],
        n_nodes: usize,
        model: FlowModel,
        constraints: &'a Constraints,
    ) -> Self {
        let mut pattern = vec![Vec::new(); n_nodes];
        for e in elements {
            for &a in &e.nodes {
                pattern[a].extend_from_slice(&e.nodes);
            }
        }
        for p in pattern.iter_mut() {
            p.sort_unstable();
            p.dedup();
        }
        Self { elements, model, constraints, n_nodes, pattern, block_index: Vec::new() }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Length of a slab vector.
    pub fn n_dofs(&self) -> usize {
        self.n_nodes * BLOCK
    }

    /// Allocates the tangent matrix and caches the element scatter map.
    pub fn new_matrix(&mut self) -> BlockSparse {
        let m = BlockSparse::from_pattern(&self.pattern, BLOCK);
        self.block_index = self
            .elements
            .iter()
            .map(|e| {
                let mut idx = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        idx[a * 3 + b] = m.find(e.nodes[a], e.nodes[b]).expect("element pair in pattern");
                    }
                }
                idx
            })
            .collect();
        m
    }

    fn gather(&self, e: &ElementQuadrature, u: &[f64], prev: &[State]) -> (ElementValues, [State; 3]) {
        let mut ue = [[[0.0; 4]; 2]; 3];
        let mut pe = [[0.0; 4]; 3];
        for (a, &node) in e.nodes.iter().enumerate() {
            for l in 0..2 {
                ue[a][l].copy_from_slice(&u[dof(node, l, 0)..dof(node, l, 0) + 4]);
            }
            pe[a] = prev[node];
        }
        (ue, pe)
    }

    /// Frozen stabilization parameters for every element at state `u`.
    pub fn compute_taus(&self, u: &[f64], dt: f64) -> Result<Vec<ElementTaus>, AssemblyError> {
        let opts = self.model.stabilization;
        let gas = &self.model.gas;
        self.elements
            .par_iter()
            .enumerate()
            .map(|(ei, e)| {
                let err = |source| AssemblyError::InvalidState { element: ei, source };
                let mut ue = [[[0.0; 4]; 2]; 3];
                for (a, &node) in e.nodes.iter().enumerate() {
                    for l in 0..2 {
                        ue[a][l].copy_from_slice(&u[dof(node, l, 0)..dof(node, l, 0) + 4]);
                    }
                }
                let mut avg = [0.0; 4];
                for a in 0..3 {
                    for l in 0..2 {
                        for c in 0..4 {
                            avg[c] += ue[a][l][c] / 6.0;
                        }
                    }
                }
                let tau = if opts.supg { tau_mom(&avg, e.h, dt, gas).map_err(err)? } else { 0.0 };
                let nu_dc = if opts.shock_capturing {
                    // root-mean-square residual and gradient over the prism
                    let mut r2 = [0.0; 4];
                    let mut g2 = [[0.0; 2]; 4];
                    let mut wsum = 0.0;
                    for q in 0..e.n_points() {
                        for (_, theta) in time_points() {
                            let mut uq = [0.0; 4];
                            let mut ut = [0.0; 4];
                            let mut g = [[0.0; 2]; 4];
                            for a in 0..3 {
                                for c in 0..4 {
                                    let v = theta[0] * ue[a][0][c] + theta[1] * ue[a][1][c];
                                    uq[c] += e.shape[q][a] * v;
                                    ut[c] += e.shape[q][a] * (ue[a][1][c] - ue[a][0][c]) / dt;
                                    g[c][0] += e.grads[q][a][0] * v;
                                    g[c][1] += e.grads[q][a][1] * v;
                                }
                            }
                            checked_pressure(&uq, gas).map_err(err)?;
                            let am = euler_jacobians(&uq, gas.gamma);
                            let w = e.weights[q];
                            wsum += w;
                            for r in 0..4 {
                                let mut s = ut[r];
                                for c in 0..4 {
                                    s += am[0][r][c] * g[c][0] + am[1][r][c] * g[c][1];
                                }
                                r2[r] += w * s * s;
                                g2[r][0] += w * g[r][0] * g[r][0];
                                g2[r][1] += w * g[r][1] * g[r][1];
                            }
                        }
                    }
                    let rr = r2.map(|x| (x / wsum).sqrt());
                    let gg = g2.map(|x| x.map(|y| (y / wsum).sqrt()));
                    tau_dc(&rr, &gg, &avg, e.h, &self.model.free_stream, gas, opts.clamp_factor).map_err(err)?
                } else {
                    0.0
                };
                Ok(ElementTaus { tau, nu_dc })
            })
            .collect()
    }

    /// Assembles the residual (and the tangent when `mat` is given), then
    /// applies the constraints.
    pub fn assemble(
        &self,
        u: &[f64],
        prev: &[State],
        dt: f64,
        taus: &[ElementTaus],
        res: &mut [f64],
        mut mat: Option<&mut BlockSparse>,
    ) -> Result<(), AssemblyError> {
        if !(dt > 0.0) {
            return Err(AssemblyError::BadTimeStep(dt));
        }
        assert_eq!(u.len(), self.n_dofs());
        res.fill(0.0);
        let want_tan = mat.is_some();
        if let Some(m) = mat.as_deref_mut() {
            assert!(!self.block_index.is_empty() || self.elements.is_empty(), "call new_matrix first");
            m.clear();
        }
        const CHUNK: usize = 512;
        let mut local: Vec<([f64; LOCAL], Vec<f64>)> = Vec::new();
        for (ci, chunk) in self.elements.chunks(CHUNK).enumerate() {
            let base = ci * CHUNK;
            chunk
                .par_iter()
                .enumerate()
                .map(|(k, e)| {
                    let ei = base + k;
                    let (ue, pe) = self.gather(e, u, prev);
                    let mut r = [0.0; LOCAL];
                    let mut t = if want_tan { vec![0.0; LOCAL * LOCAL] } else { Vec::new() };
                    let tref = if want_tan { Some((&mut t[..]).try_into().expect("local size")) } else { None };
                    element_kernel(e, &ue, &pe, dt, taus[ei], &self.model, &mut r, tref)
                        .map_err(|source| AssemblyError::InvalidState { element: ei, source })?;
                    Ok((r, t))
                })
                .collect_into_vec_result(&mut local)?;
            // serial scatter keeps the summation order fixed
            for (k, (r, t)) in local.iter().enumerate() {
                let e = &chunk[k];
                for a in 0..3 {
                    let base_g = e.nodes[a] * BLOCK;
                    for i in 0..BLOCK {
                        res[base_g + i] += r[a * BLOCK + i];
                    }
                }
                if let Some(m) = mat.as_deref_mut() {
                    let idx = &self.block_index[base + k];
                    for a in 0..3 {
                        for b in 0..3 {
                            let blk = m.block_mut(idx[a * 3 + b]);
                            for i in 0..BLOCK {
                                let src = &t[(a * BLOCK + i) * LOCAL + b * BLOCK..(a * BLOCK + i) * LOCAL + (b + 1) * BLOCK];
                                for (d, s) in blk[i * BLOCK..(i + 1) * BLOCK].iter_mut().zip(src) {
                                    *d += s;
                                }
                            }
                        }
                    }
                }
            }
        }
        self.apply_constraints(u, res, mat);
        Ok(())
    }

    /// Replaces constrained rows: fixed components by `U - g` with an
    /// identity row; slip nodes by the normal-momentum constraint and the
    /// tangential combination of the two momentum equations.
    fn apply_constraints(&self, u: &[f64], res: &mut [f64], mut mat: Option<&mut BlockSparse>) {
        for (node, c) in &self.constraints.nodes {
            let node = *node;
            match c {
                NodeConstraint::Fixed { mask, values } => {
                    for l in 0..2 {
                        for comp in 0..4 {
                            if !mask[comp] {
                                continue;
                            }
                            let row = l * NDOF + comp;
                            res[dof(node, l, comp)] = u[dof(node, l, comp)] - values[comp];
                            if let Some(m) = mat.as_deref_mut() {
                                set_row(m, node, row, &[(row, 1.0)]);
                            }
                        }
                    }
                }
                NodeConstraint::Slip { normal } => {
                    let [nx, ny] = *normal;
                    for l in 0..2 {
                        let (i1, i2) = (dof(node, l, 1), dof(node, l, 2));
                        let (r1, r2) = (res[i1], res[i2]);
                        res[i1] = nx * u[i1] + ny * u[i2];
                        res[i2] = -ny * r1 + nx * r2;
                        if let Some(m) = mat.as_deref_mut() {
                            let (row1, row2) = (l * NDOF + 1, l * NDOF + 2);
                            for k in m.row_range(node) {
                                let blk = m.block_mut(k);
                                for c in 0..BLOCK {
                                    let (a1, a2) = (blk[row1 * BLOCK + c], blk[row2 * BLOCK + c]);
                                    blk[row2 * BLOCK + c] = -ny * a1 + nx * a2;
                                }
                            }
                            set_row(m, node, row1, &[(row1, nx), (row2, ny)]);
                        }
                    }
                }
            }
        }
    }
}

/// Sets scalar row `row` of block row `node` to the given diagonal-block
/// entries, zero elsewhere.
fn set_row(m: &mut BlockSparse, node: usize, row: usize, entries: &[(usize, f64)]) {
    for k in m.row_range(node) {
        m.block_mut(k)[row * BLOCK..(row + 1) * BLOCK].fill(0.0);
    }
    let d = m.diag_index(node);
    let blk = m.block_mut(d);
    for &(c, v) in entries {
        blk[row * BLOCK + c] = v;
    }
}

/// Collects a parallel iterator of results into `out`, stopping at the
/// first error (in element order).
trait CollectResult<T> {
    fn collect_into_vec_result(self, out: &mut Vec<T>) -> Result<(), AssemblyError>;
}

impl<I, T> CollectResult<T> for I
where
    I: IndexedParallelIterator<Item = Result<T, AssemblyError>>,
    T: Send,
{
    fn collect_into_vec_result(self, out: &mut Vec<T>) -> Result<(), AssemblyError> {
        let mut tmp: Vec<Result<T, AssemblyError>> = Vec::new();
        self.collect_into_vec(&mut tmp);
        out.clear();
        for r in tmp {
            out.push(r?);
        }
        Ok(())
    }
}

/// Copies a nodal field to both layers of a slab vector.
pub fn spread_to_slab(field: &[State]) -> Vec<f64> {
    let mut u = vec![0.0; field.len() * BLOCK];
    for (node, s) in field.iter().enumerate() {
        for l in 0..2 {
            u[dof(node, l, 0)..dof(node, l, 0) + 4].copy_from_slice(s);
        }
    }
    u
}

/// Top-layer nodal field of a slab vector.
pub fn top_layer(u: &[f64]) -> Vec<State> {
    u.chunks(BLOCK).map(|b| [b[4], b[5], b[6], b[7]]).collect()
}

/// Projects both layers of every constrained node onto its constraint.
pub fn enforce_constraints(u: &mut [f64], constraints: &Constraints) {
    for (node, c) in &constraints.nodes {
        for l in 0..2 {
            let i = dof(*node, l, 0);
            let mut s = [u[i], u[i + 1], u[i + 2], u[i + 3]];
            c.enforce(&mut s);
            u[i..i + 4].copy_from_slice(&s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{straight_element, curved_element, nefem_quadrature, standard_quadrature, CurvedTriangle};
    use crate::mesh::Mesh;
    use crate::nurbs::NurbsCurve;
    use crate::physics::conservative;

    const FS: FreeStream = FreeStream { rho: 1.0, u: 1.0, v: 0.0, e: 1.1179, l_ref: 1.0 };

    fn model(mu: f64) -> FlowModel {
        FlowModel {
            gas: GasModel::viscous(1.4, mu, 0.72),
            free_stream: FS,
            stabilization: StabilizationOptions::default(),
        }
    }

    fn one_triangle() -> (Mesh, ElementQuadrature) {
        let mesh = Mesh::new(
            vec![[0.1, 0.0], [1.0, 0.2], [0.3, 0.9]],
            vec![[0, 1, 2]],
            vec![
                crate::mesh::BoundaryEdge { a: 0, b: 1, tag: 1 },
                crate::mesh::BoundaryEdge { a: 1, b: 2, tag: 1 },
                crate::mesh::BoundaryEdge { a: 2, b: 0, tag: 1 },
            ],
        )
        .unwrap();
        let q = straight_element(&mesh, 0, [0, 1, 2], &standard_quadrature(3).unwrap()).unwrap();
        (mesh, q)
    }

    fn curved() -> ElementQuadrature {
        let c = NurbsCurve::circle([0.0, 0.0], 0.5, std::f64::consts::PI, true);
        let t = CurvedTriangle::new(&c, 0.1, 0.15, [-0.2, 0.75]);
        curved_element(&t, 0, [0, 1, 2], &nefem_quadrature(4).unwrap()).unwrap()
    }

    fn perturbed_values(seed: f64) -> (ElementValues, [State; 3]) {
        let gas = GasModel::inviscid(1.4);
        let mut ue = [[[0.0; 4]; 2]; 3];
        let mut prev = [[0.0; 4]; 3];
        for a in 0..3 {
            for l in 0..2 {
                let s = seed + a as f64 * 0.7 + l as f64 * 0.3;
                let w = [1.0 + 0.2 * s.sin(), 0.8 + 0.3 * (2.0 * s).cos(), 0.2 * (3.0 * s).sin(), 0.3 + 0.05 * s.cos()];
                ue[a][l] = conservative(&w, &gas);
            }
            prev[a] = conservative(&[1.1, 0.7, 0.1 * a as f64, 0.28], &gas);
        }
        (ue, prev)
    }

    fn check_tangent(eq: &ElementQuadrature, mu: f64) {
        let m = model(mu);
        let taus = ElementTaus { tau: 0.037, nu_dc: 0.011 };
        let (ue, prev) = perturbed_values(0.4);
        let dt = 0.3;
        let mut r0 = [0.0; LOCAL];
        let mut t = vec![0.0; LOCAL * LOCAL];
        element_kernel(eq, &ue, &prev, dt, taus, &m, &mut r0, Some((&mut t[..]).try_into().unwrap())).unwrap();
        let scale = t.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for j in 0..LOCAL {
            let (a, l, c) = (j / 8, (j / 4) % 2, j % 4);
            let h = 1e-6 * ue[a][l][c].abs().max(1.0);
            let mut up = ue;
            let mut um = ue;
            up[a][l][c] += h;
            um[a][l][c] -= h;
            let (mut rp, mut rm) = ([0.0; LOCAL], [0.0; LOCAL]);
            element_kernel(eq, &up, &prev, dt, taus, &m, &mut rp, None).unwrap();
            element_kernel(eq, &um, &prev, dt, taus, &m, &mut rm, None).unwrap();
            for i in 0..LOCAL {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!((fd - t[i * LOCAL + j]).abs() <= 1e-5 * scale, "entry ({i},{j}): fd {fd} vs {}", t[i * LOCAL + j]);
            }
        }
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let (_, q) = one_triangle();
        check_tangent(&q, 0.0);
        check_tangent(&q, 0.05);
        check_tangent(&curved(), 0.05);
    }

    #[test]
    fn free_stream_is_an_exact_solution() {
        let (_, q) = one_triangle();
        for eq in [q, curved()] {
            let s = FS.state();
            let ue = [[s; 2]; 3];
            let mut r = [0.0; LOCAL];
            element_kernel(&eq, &ue, &[s; 3], 0.1, ElementTaus { tau: 0.1, nu_dc: 0.1 }, &model(0.01), &mut r, None)
                .unwrap();
            assert!(r.iter().all(|v| v.abs() < 1e-13), "{r:?}");
        }
    }

    #[test]
    fn jump_term_is_the_mass_matrix() {
        // the previous-slab data enters only through the jump, so residual
        // differences under changes of it are exactly mass-matrix columns
        let (mesh, q) = one_triangle();
        let area = mesh.area(0);
        let (ue, prev) = perturbed_values(1.3);
        let m = model(0.02);
        let taus = ElementTaus { tau: 0.01, nu_dc: 0.02 };
        let mut r0 = [0.0; LOCAL];
        element_kernel(&q, &ue, &prev, 0.5, taus, &m, &mut r0, None).unwrap();
        for b in 0..3 {
            for c in 0..4 {
                let mut p = prev;
                p[b][c] -= 1.0;
                let mut r = [0.0; LOCAL];
                element_kernel(&q, &ue, &p, 0.5, taus, &m, &mut r, None).unwrap();
                for a in 0..3 {
                    let mass = if a == b { area / 6.0 } else { area / 12.0 };
                    for cc in 0..4 {
                        let bottom = r[(a * 2) * 4 + cc] - r0[(a * 2) * 4 + cc];
                        let top = r[(a * 2 + 1) * 4 + cc] - r0[(a * 2 + 1) * 4 + cc];
                        let expect = if cc == c { mass } else { 0.0 };
                        assert!((bottom - expect).abs() <= 1e-13, "{bottom} vs {expect}");
                        assert_eq!(top, 0.0);
                    }
                }
            }
        }
    }
}
