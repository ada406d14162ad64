use std::collections::BTreeMap;

use nefem::assembly::{spread_to_slab, FlowModel, SlabAssembler};
use nefem::bc::{build_constraints, BcKind};
use nefem::mapping::{build_quadrature, QuadratureOptions};
use nefem::mesh::{classify_elements, PROJECTION_TOLERANCE};
use nefem::meshgen::{cylinder_ogrid, OGridSpec, DOWNSTREAM_TAG, UPSTREAM_TAG, WALL_TAG};
use nefem::physics::{FreeStream, GasModel};
use nefem::solver::{newton_solve, PreconditionerKind, SolverOptions};
use nefem::stabilization::StabilizationOptions;

const FS: FreeStream = FreeStream { rho: 1.0, u: 1.0, v: 0.0, e: 1.1179, l_ref: 1.0 };

#[test]
fn newton_converges_quadratically_on_the_first_cylinder_slab() {
    let case = cylinder_ogrid(&OGridSpec { n_wall: 32, n_radial: 10, r_outer: 4.0, stretch: 10.0 });
    let recs = classify_elements(&case.mesh, &case.curves, &case.wall_curves, PROJECTION_TOLERANCE).unwrap();
    let els = build_quadrature(&case.mesh, &recs, &case.curves, &QuadratureOptions::default()).unwrap();
    let gas = GasModel::viscous(1.4, FS.viscosity_for_reynolds(1e3), 0.72);
    let bcs = BTreeMap::from([(WALL_TAG, BcKind::NoSlip), (UPSTREAM_TAG, BcKind::Inflow), (DOWNSTREAM_TAG, BcKind::Outflow)]);
    let cons = build_constraints(&case.mesh, &recs, &case.curves, &bcs, FS.state()).unwrap();
    let model = FlowModel { gas, free_stream: FS, stabilization: StabilizationOptions::default() };
    let mut asm = SlabAssembler::new(&els, case.mesh.n_nodes(), model, &cons);
    let mut mat = asm.new_matrix();
    let prev = vec![FS.state(); case.mesh.n_nodes()];
    let mut u = spread_to_slab(&prev);
    let mut opts = SolverOptions { newton_tol: 1e-11, preconditioner: PreconditionerKind::Ilu(0), ..Default::default() };
    opts.gmres.rel_tol = 1e-12;
    let stats = newton_solve(&asm, &mut mat, &mut u, &prev, 0.05, &opts, 1).unwrap();
    let r = &stats.residuals;
    assert!(r.len() >= 4, "{r:?}");
    let n = r.len();
    // quadratic: r_{k+1} / r_k^2 stays bounded while the residual drops by orders of magnitude
    for k in n - 3..n - 1 {
        let q = r[k + 1] / (r[k] * r[k]);
        assert!(q < 1e3, "ratio {q} at {k}: {r:?}");
    }
    assert!(r[n - 1] / r[n - 2] < 0.1 * r[n - 2] / r[n - 3], "{r:?}");
}
