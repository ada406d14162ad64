//! Newton iteration per slab and sequential slab marching.

use std::str::FromStr;

use log::{debug, info, warn};
use thiserror::Error;

use crate::assembly::{enforce_constraints, spread_to_slab, top_layer, AssemblyError, SlabAssembler};
use crate::linalg::{gmres, BlockIlu, BlockJacobi, BlockSparse, GmresOptions, LinearSolveError, Preconditioner};
use crate::physics::{pressure, PhysicsError, State};
use crate::stabilization::ElementTaus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("slab {slab}: Newton did not converge in {iterations} iterations (residual {residual:e}, target {target:e})")]
    NewtonDiverged { slab: usize, iterations: usize, residual: f64, target: f64 },
    #[error("slab {slab}: line search found no acceptable step (residual {residual:e})")]
    LineSearch { slab: usize, residual: f64 },
    #[error("slab {slab}: linear solver failed: {source}")]
    Linear { slab: usize, source: LinearSolveError },
    #[error("slab {slab}: {source}")]
    Assembly { slab: usize, source: AssemblyError },
    #[error("slab {slab}: wall force evaluation failed: {source}")]
    Forces { slab: usize, source: PhysicsError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerKind {
    BlockJacobi,
    /// Block ILU with the given level of fill.
    Ilu(usize),
}

impl FromStr for PreconditionerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "block_jacobi" {
            return Ok(Self::BlockJacobi);
        }
        s.strip_prefix("ilu")
            .and_then(|k| k.parse().ok())
            .map(Self::Ilu)
            .ok_or_else(|| format!("unknown preconditioner '{s}' (expected block_jacobi or ilu<k>, e.g. ilu0)"))
    }
}

/// When the stabilization parameters are recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauUpdate {
    /// At every Newton iteration.
    Iteration,
    /// Once per slab, from the initial guess.
    Slab,
}

impl FromStr for TauUpdate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "iteration" => Ok(Self::Iteration),
            "slab" => Ok(Self::Slab),
            _ => Err(format!("unknown tau update '{s}' (expected iteration or slab)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub newton_tol: f64,
    pub newton_abs_tol: f64,
    pub max_newton: usize,
    pub gmres: GmresOptions,
    /// Inexact Newton: a GMRES run that stops short of its tolerance is
    /// still used as the Newton step if it reached this relative residual.
    /// Zero requires full linear convergence.
    pub gmres_accept: f64,
    pub preconditioner: PreconditionerKind,
    pub max_line_search: usize,
    pub tau_update: TauUpdate,
    /// First slab duration.
    pub dt: f64,
    /// Factor applied to the slab duration after every successful slab.
    pub dt_growth: f64,
    pub dt_max: f64,
    /// Halvings of `dt` tried after a failed slab.
    pub dt_retries: usize,
    pub max_slabs: usize,
    /// Stop when the relative top-layer change of a slab drops below this.
    pub steady_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-8,
            newton_abs_tol: 1e-12,
            max_newton: 20,
            gmres: GmresOptions::default(),
            gmres_accept: 0.0,
            preconditioner: PreconditionerKind::BlockJacobi,
            max_line_search: 8,
            tau_update: TauUpdate::Slab,
            dt: 0.1,
            dt_growth: 1.0,
            dt_max: f64::INFINITY,
            dt_retries: 3,
            max_slabs: 100,
            steady_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonStats {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub linear_iterations: usize,
    /// Residual norm after every iteration, starting with the initial one.
    pub residuals: Vec<f64>,
}

/// A nonlinear slab problem `R(U; U_prev, dt) = 0` for [`newton_solve`].
pub trait SlabSystem {
    /// Parameters held fixed while the tangent is formed (stabilization).
    type Frozen;
    /// Projects a slab vector onto the strong constraints.
    fn project(&self, u: &mut [f64]);
    fn freeze(&self, u: &[f64], dt: f64) -> Result<Self::Frozen, AssemblyError>;
    /// Residual, and the tangent when `jac` is given.
    fn residual(
        &self,
        u: &[f64],
        prev: &[State],
        dt: f64,
        frozen: &Self::Frozen,
        res: &mut [f64],
        jac: Option<&mut BlockSparse>,
    ) -> Result<(), AssemblyError>;
    /// Whether a trial vector is acceptable before it is assembled.
    fn admissible(&self, _u: &[f64]) -> bool {
        true
    }
}

impl SlabSystem for SlabAssembler<'_> {
    type Frozen = Vec<ElementTaus>;

    fn project(&self, u: &mut [f64]) {
        enforce_constraints(u, self.constraints);
    }

    fn freeze(&self, u: &[f64], dt: f64) -> Result<Self::Frozen, AssemblyError> {
        self.compute_taus(u, dt)
    }

    fn residual(
        &self,
        u: &[f64],
        prev: &[State],
        dt: f64,
        frozen: &Self::Frozen,
        res: &mut [f64],
        jac: Option<&mut BlockSparse>,
    ) -> Result<(), AssemblyError> {
        self.assemble(u, prev, dt, frozen, res, jac)
    }

    fn admissible(&self, u: &[f64]) -> bool {
        nodal_states_valid(u, self.model.gas.gamma)
    }
}

/// True when every nodal state of both layers has positive density and
/// pressure. Pressure is concave in the conservative variables, so this also
/// covers every point interpolated linearly between nodes.
fn nodal_states_valid(u: &[f64], gamma: f64) -> bool {
    u.chunks_exact(4).all(|s| {
        let p = pressure(&[s[0], s[1], s[2], s[3]], gamma);
        s[0] > 0.0 && p > 0.0 && p.is_finite()
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves one slab in place. `u` is the initial guess (both layers) and is
/// projected onto the constraints first.
pub fn newton_solve<S: SlabSystem + ?Sized>(
    asm: &S,
    mat: &mut BlockSparse,
    u: &mut Vec<f64>,
    prev: &[State],
    dt: f64,
    opts: &SolverOptions,
    slab: usize,
) -> Result<NewtonStats, SolverError> {
    let aerr = |source| SolverError::Assembly { slab, source };
    asm.project(u);
    let n = u.len();
    let mut res = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut taus = asm.freeze(u, dt).map_err(aerr)?;
    asm.residual(u, prev, dt, &taus, &mut res, Some(mat)).map_err(aerr)?;
    let mut rnorm = norm(&res);
    let mut stats =
        NewtonStats { initial_residual: rnorm, final_residual: rnorm, residuals: vec![rnorm], ..Default::default() };
    let target = (opts.newton_tol * rnorm).max(opts.newton_abs_tol);
    info!("slab {slab} newton 0 ||R|| {rnorm:e}");
    for it in 1..=opts.max_newton {
        if rnorm <= target {
            stats.final_residual = rnorm;
            return Ok(stats);
        }
        let pc: Box<dyn Preconditioner> = match opts.preconditioner {
            PreconditionerKind::BlockJacobi => Box::new(BlockJacobi::new(mat).map_err(|source| SolverError::Linear { slab, source })?),
            PreconditionerKind::Ilu(k) => Box::new(BlockIlu::new(mat, k).map_err(|source| SolverError::Linear { slab, source })?),
        };
        res.iter_mut().for_each(|r| *r = -*r);
        let (iterations, rel) = match gmres(mat, pc.as_ref(), &res, &mut delta, &opts.gmres) {
            Ok(ls) => (ls.iterations, ls.relative_residual),
            Err(LinearSolveError::NotConverged { iterations, achieved }) if achieved <= opts.gmres_accept => {
                (iterations, achieved)
            }
            Err(source) => return Err(SolverError::Linear { slab, source }),
        };
        stats.linear_iterations += iterations;
        debug!("slab {slab} newton {it} gmres {iterations} rel {rel:e}");
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_line_search {
            for i in 0..n {
                trial[i] = u[i] + alpha * delta[i];
            }
            if !asm.admissible(&trial) {
                alpha *= 0.5;
                continue;
            }
            match asm.residual(&trial, prev, dt, &taus, &mut trial_res, None) {
                Ok(()) => {
                    let tn = norm(&trial_res);
                    if tn <= rnorm {
                        accepted = Some(tn);
                        break;
                    }
                }
                Err(AssemblyError::InvalidState { .. }) => {}
                Err(e) => return Err(aerr(e)),
            }
            alpha *= 0.5;
        }
        let Some(_) = accepted else {
            return Err(SolverError::LineSearch { slab, residual: rnorm });
        };
        if alpha < 1.0 {
            debug!("slab {slab} newton {it} step length {alpha}");
        }
        std::mem::swap(u, &mut trial);
        stats.iterations = it;
        if opts.tau_update == TauUpdate::Iteration {
            taus = asm.freeze(u, dt).map_err(aerr)?;
        }
        asm.residual(u, prev, dt, &taus, &mut res, Some(mat)).map_err(aerr)?;
        rnorm = norm(&res);
        stats.residuals.push(rnorm);
        info!("slab {slab} newton {it} ||R|| {rnorm:e}");
    }
    stats.final_residual = rnorm;
    if rnorm <= target {
        return Ok(stats);
    }
    Err(SolverError::NewtonDiverged { slab, iterations: opts.max_newton, residual: rnorm, target })
}

/// Per-slab record of the march.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabRecord {
    pub slab: usize,
    /// Time at the top of the slab.
    pub time: f64,
    pub dt: f64,
    pub newton: NewtonStats,
    /// Relative change of the top layer with respect to the previous slab.
    pub change: f64,
    /// Drag coefficient, pressure and viscous parts.
    pub cd_pressure: f64,
    pub cd_viscous: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub slabs: usize,
    pub time: f64,
    pub field: Vec<State>,
    pub history: Vec<SlabRecord>,
    pub steady: bool,
}

fn relative_change(new: &[State], old: &[State]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in new.iter().zip(old) {
        for c in 0..4 {
            num += (a[c] - b[c]).powi(2);
            den += a[c] * a[c];
        }
    }
    (num / den.max(1e-300)).sqrt()
}

/// Marches slabs from `initial` until steady or `max_slabs`. `forces`
/// evaluates the drag coefficients of a nodal field; `on_slab` is called
/// after every completed slab.
pub fn march(
    asm: &mut SlabAssembler,
    initial: Vec<State>,
    opts: &SolverOptions,
    forces: &dyn Fn(&[State]) -> Result<(f64, f64), PhysicsError>,
    on_slab: &mut dyn FnMut(&RunState),
) -> Result<RunState, SolverError> {
    let mut state = RunState { slabs: 0, time: 0.0, field: initial, history: Vec::new(), steady: false };
    if opts.max_slabs == 0 {
        return Ok(state);
    }
    let mut mat = asm.new_matrix();
    let mut dt = opts.dt;
    while state.slabs < opts.max_slabs {
        let slab = state.slabs + 1;
        let mut attempt = 0;
        let (u, stats) = loop {
            let mut u = spread_to_slab(&state.field);
            match newton_solve(asm, &mut mat, &mut u, &state.field, dt, opts, slab) {
                Ok(s) => break (u, s),
                Err(e) if attempt < opts.dt_retries => {
                    warn!("{e}; retrying with dt = {}", dt / 2.0);
                    attempt += 1;
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        let field = top_layer(&u);
        let change = relative_change(&field, &state.field);
        let (cd_pressure, cd_viscous) = forces(&field).map_err(|source| SolverError::Forces { slab, source })?;
        state.time += dt;
        state.slabs = slab;
        state.field = field;
        info!(
            "slab {slab} t {:.6e} dt {dt:.3e} change {change:.3e} newton {} gmres {} cd {:.6}",
            state.time,
            stats.iterations,
            stats.linear_iterations,
            cd_pressure + cd_viscous
        );
        state.history.push(SlabRecord { slab, time: state.time, dt, newton: stats, change, cd_pressure, cd_viscous });
        on_slab(&state);
        if change < opts.steady_tol {
            state.steady = true;
            break;
        }
        dt = (dt * opts.dt_growth).min(opts.dt_max);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::assembly::{FlowModel, BLOCK};
    use crate::bc::{build_constraints, BcKind};
    use crate::mapping::{build_quadrature, QuadratureOptions};
    use crate::meshgen::rectangle;
    use crate::nurbs::CurveSet;
    use crate::physics::{FreeStream, GasModel};
    use crate::stabilization::StabilizationOptions;

    /// `R(U) = A U - b` for a fixed block tridiagonal `A`.
    struct Linear {
        a: BlockSparse,
        b: Vec<f64>,
    }

    impl Linear {
        fn new(n: usize) -> Self {
            let pattern: Vec<Vec<usize>> =
                (0..n).map(|i| [i.wrapping_sub(1), i + 1].into_iter().filter(|&j| j < n).collect()).collect();
            let mut a = BlockSparse::from_pattern(&pattern, BLOCK);
            for i in 0..n {
                for k in a.row_range(i) {
                    let j = a.col(k);
                    let blk = a.block_mut(k);
                    for r in 0..BLOCK {
                        for c in 0..BLOCK {
                            blk[r * BLOCK + c] = if i == j {
                                if r == c { 4.0 } else { 0.1 * ((r * 3 + c) % 5) as f64 - 0.2 }
                            } else if r == c {
                                -1.0
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
            let b = (0..n * BLOCK).map(|k| (k as f64 * 0.37).sin()).collect();
            Linear { a, b }
        }
    }

    impl SlabSystem for Linear {
        type Frozen = ();

        fn project(&self, _u: &mut [f64]) {}

        fn freeze(&self, _u: &[f64], _dt: f64) -> Result<(), AssemblyError> {
            Ok(())
        }

        fn residual(
            &self,
            u: &[f64],
            _prev: &[State],
            _dt: f64,
            _frozen: &(),
            res: &mut [f64],
            jac: Option<&mut BlockSparse>,
        ) -> Result<(), AssemblyError> {
            self.a.matvec(u, res);
            for (r, b) in res.iter_mut().zip(&self.b) {
                *r -= b;
            }
            if let Some(j) = jac {
                for k in 0..self.a.n_blocks() {
                    j.block_mut(k).copy_from_slice(self.a.block(k));
                }
            }
            Ok(())
        }
    }

    #[test]
    fn linear_problem_takes_one_newton_step() {
        let sys = Linear::new(6);
        let mut mat = sys.a.clone();
        mat.clear();
        let mut u = vec![0.0; 6 * BLOCK];
        let mut opts = SolverOptions::default();
        opts.gmres.rel_tol = 1e-13;
        let stats = newton_solve(&sys, &mut mat, &mut u, &[], 1.0, &opts, 1).unwrap();
        assert_eq!(stats.iterations, 1);
        assert!(stats.final_residual <= 1e-8 * stats.initial_residual);
        assert_eq!(stats.residuals.len(), 2);
    }

    const FS: FreeStream = FreeStream { rho: 1.0, u: 1.0, v: 0.0, e: 1.1179, l_ref: 1.0 };

    fn channel() -> (crate::mesh::Mesh, Vec<crate::mapping::ElementQuadrature>, crate::bc::Constraints) {
        let mesh = rectangle(6, 4, [0.0, 0.0], [3.0, 2.0]);
        let els = build_quadrature(&mesh, &[], &CurveSet::new(), &QuadratureOptions::default()).unwrap();
        let bcs = BTreeMap::from([(1, BcKind::Outflow), (2, BcKind::Outflow), (3, BcKind::Outflow), (4, BcKind::Inflow)]);
        let cons = build_constraints(&mesh, &[], &CurveSet::new(), &bcs, FS.state()).unwrap();
        (mesh, els, cons)
    }

    fn flow() -> FlowModel {
        FlowModel { gas: GasModel::viscous(1.4, 1e-3, 0.72), free_stream: FS, stabilization: StabilizationOptions::default() }
    }

    #[test]
    fn free_stream_slab_needs_no_iteration() {
        let (mesh, els, cons) = channel();
        let mut asm = SlabAssembler::new(&els, mesh.n_nodes(), flow(), &cons);
        let mut mat = asm.new_matrix();
        let prev = vec![FS.state(); mesh.n_nodes()];
        let mut u = spread_to_slab(&prev);
        let stats = newton_solve(&asm, &mut mat, &mut u, &prev, 0.1, &SolverOptions::default(), 1).unwrap();
        assert_eq!(stats.iterations, 0);
        assert!(stats.initial_residual < 1e-12, "{}", stats.initial_residual);
    }

    #[test]
    fn zero_slabs_return_the_initial_state() {
        let (mesh, els, cons) = channel();
        let mut asm = SlabAssembler::new(&els, mesh.n_nodes(), flow(), &cons);
        let init: Vec<State> = (0..mesh.n_nodes()).map(|i| [1.0 + 0.01 * i as f64, 1.0, 0.0, 2.0]).collect();
        let opts = SolverOptions { max_slabs: 0, ..Default::default() };
        let st = march(&mut asm, init.clone(), &opts, &|_| Ok((0.0, 0.0)), &mut |_| panic!("no slab expected")).unwrap();
        assert_eq!(st.field, init);
        assert_eq!(st.slabs, 0);
        assert!(st.history.is_empty());
    }

    #[test]
    fn free_stream_is_preserved_over_twenty_slabs() {
        let (mesh, els, cons) = channel();
        let mut asm = SlabAssembler::new(&els, mesh.n_nodes(), flow(), &cons);
        let opts = SolverOptions { max_slabs: 20, steady_tol: 0.0, ..Default::default() };
        let mut seen = 0;
        let st = march(&mut asm, vec![FS.state(); mesh.n_nodes()], &opts, &|_| Ok((0.0, 0.0)), &mut |rs| {
            seen += 1;
            assert_eq!(rs.history.len(), rs.slabs);
        })
        .unwrap();
        assert_eq!((st.slabs, seen), (20, 20));
        let fs = FS.state();
        for u in &st.field {
            for c in 0..4 {
                assert!((u[c] - fs[c]).abs() <= 1e-9 * fs[0].max(fs[3]));
            }
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("ilu0".parse::<PreconditionerKind>().unwrap(), PreconditionerKind::Ilu(0));
        assert_eq!("ilu2".parse::<PreconditionerKind>().unwrap(), PreconditionerKind::Ilu(2));
        assert!("ilu".parse::<PreconditionerKind>().is_err());
        assert_eq!("iteration".parse::<TauUpdate>().unwrap(), TauUpdate::Iteration);
        assert!("jacobi".parse::<PreconditionerKind>().is_err());
    }
}
