//! Case setup and the command implementations behind the CLI.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use thiserror::Error;

use crate::assembly::{FlowModel, SlabAssembler};
use crate::bc::{build_constraints, BcError, BcKind, Constraints};
use crate::config::{CaseConfig, ConfigError, Mode, WallCoordinate};
use crate::mapping::{
    build_quadrature, det2, nefem_quadrature, wall_quadrature, CurvedTriangle, ElementQuadrature, MappingError,
    WallPoint,
};
use crate::mesh::{classify_elements, Mesh, MeshError, NefemElementRecord, PROJECTION_TOLERANCE};
use crate::nurbs::{CurveSet, GeometryError};
use crate::output::{history_csv, summary_json, tail_mean_drag, vtk_field, wall_csv, RunSummary, WallSample};
use crate::physics::{
    checked_pressure, drag_coefficients, mach_number, pressure_coefficient, viscous_flux, wall_forces, PhysicsError,
    State,
};
use crate::solver::{march, RunState, SolverError};
use crate::vec2;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Mesh { path: String, source: MeshError },
    #[error("{path}: {source}")]
    Curves { path: String, source: GeometryError },
    #[error(transparent)]
    Bc(#[from] BcError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("{source} (last field written to {dump})")]
    Solver { source: SolverError, dump: String },
    #[error("cannot write {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{0}")]
    Usage(String),
}

impl DriverError {
    /// Process exit code: 3 for solver failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Solver { .. } => 3,
            _ => 2,
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), DriverError> {
    std::fs::write(path, text).map_err(|e| DriverError::Io { path: path.display().to_string(), msg: e.to_string() })
}

fn load_mesh(path: &Path) -> Result<Mesh, DriverError> {
    Mesh::load(path).map_err(|source| DriverError::Mesh { path: path.display().to_string(), source })
}

fn load_curves(path: &Path) -> Result<CurveSet, DriverError> {
    CurveSet::load(path).map_err(|source| DriverError::Curves { path: path.display().to_string(), source })
}

/// Everything needed to march a configured case.
pub struct Problem {
    pub config: CaseConfig,
    pub mesh: Mesh,
    pub curves: CurveSet,
    /// Curved-element records of all wall triangles, in both modes.
    pub wall_records: Vec<NefemElementRecord>,
    /// Records used by the discretization (empty in SFEM mode).
    pub records: Vec<NefemElementRecord>,
    pub elements: Vec<ElementQuadrature>,
    pub constraints: Constraints,
    /// Tags with slip or no-slip conditions.
    pub wall_tags: Vec<u32>,
    pub wall: Vec<WallPoint>,
}

impl Problem {
    pub fn setup(config: CaseConfig) -> Result<Self, DriverError> {
        let mesh = load_mesh(&config.mesh)?;
        let curves = match &config.curves {
            Some(p) => load_curves(p)?,
            None => CurveSet::new(),
        };
        let tags: BTreeSet<u32> = mesh.boundary_edges().iter().map(|b| b.tag).collect();
        if let Some(t) = config.bcs.keys().find(|t| !tags.contains(t)) {
            return Err(ConfigError::Invalid {
                path: config.source.display().to_string(),
                msg: format!("`bc.{t}`: the mesh has no boundary edges with tag {t}"),
            }
            .into());
        }
        let wall_records = classify_elements(&mesh, &curves, &config.wall_curves, PROJECTION_TOLERANCE)
            .map_err(|source| DriverError::Mesh { path: config.mesh.display().to_string(), source })?;
        let records = match config.mode {
            Mode::Nefem => wall_records.clone(),
            Mode::Sfem => Vec::new(),
        };
        let elements = build_quadrature(&mesh, &records, &curves, &config.quadrature)?;
        let constraints = build_constraints(&mesh, &records, &curves, &config.bcs, config.free_stream.state())?;
        let wall_tags: Vec<u32> =
            config.bcs.iter().filter(|(_, k)| matches!(k, BcKind::Slip | BcKind::NoSlip)).map(|(t, _)| *t).collect();
        let wall = wall_quadrature(&mesh, &records, &curves, &wall_tags, config.quadrature.edge_points)?;
        Ok(Problem { config, mesh, curves, wall_records, records, elements, constraints, wall_tags, wall })
    }

    pub fn model(&self) -> FlowModel {
        FlowModel { gas: self.config.gas, free_stream: self.config.free_stream, stabilization: self.config.stabilization }
    }

    pub fn wall_edge_count(&self) -> usize {
        self.mesh.boundary_edges().iter().filter(|b| self.wall_tags.contains(&b.tag)).count()
    }

    /// Drag coefficients (pressure, viscous) of a nodal field.
    pub fn drag(&self, field: &[State]) -> Result<(f64, f64), PhysicsError> {
        let f = wall_forces(&self.wall, field, &self.config.gas)?;
        drag_coefficients(&f, &self.config.free_stream)
    }

    /// Normalized arc length of every node along its chain of wall edges.
    fn arc_parameters(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for &tag in &self.wall_tags {
            let edges: Vec<_> = self.mesh.boundary_edges().iter().filter(|b| b.tag == tag).collect();
            let next: BTreeMap<usize, usize> = edges.iter().map(|b| (b.a, b.b)).collect();
            let heads: BTreeSet<usize> = edges.iter().map(|b| b.b).collect();
            let mut starts: Vec<usize> = edges.iter().map(|b| b.a).filter(|a| !heads.contains(a)).collect();
            let mut seen = BTreeSet::new();
            starts.extend(edges.iter().map(|b| b.a));
            for s in starts {
                if seen.contains(&s) {
                    continue;
                }
                let mut chain = vec![s];
                seen.insert(s);
                let mut cur = s;
                while let Some(&n) = next.get(&cur) {
                    chain.push(n);
                    if !seen.insert(n) {
                        break;
                    }
                    cur = n;
                }
                let p = self.mesh.nodes();
                let mut len = vec![0.0];
                for w in chain.windows(2) {
                    len.push(len.last().unwrap() + vec2::dist(p[w[0]], p[w[1]]));
                }
                let total = len.last().copied().unwrap_or(0.0).max(1e-300);
                for (node, l) in chain.iter().zip(&len) {
                    out.entry(*node).or_insert(l / total);
                }
            }
        }
        out
    }

    /// Nodal wall samples sorted by arc position.
    pub fn wall_samples(&self, field: &[State]) -> Result<Vec<WallSample>, DriverError> {
        let gas = &self.config.gas;
        let fs = &self.config.free_stream;
        let mut xi: BTreeMap<usize, f64> = BTreeMap::new();
        for r in &self.wall_records {
            xi.entry(r.nodes[0]).or_insert(r.xi1);
            xi.entry(r.nodes[1]).or_insert(r.xi2);
        }
        let arc = self.arc_parameters();
        let cf = if gas.is_inviscid() { None } else { Some(self.nodal_friction(field)) };
        let mut out = Vec::new();
        for (&node, &s) in &arc {
            let u = &field[node];
            let x = self.mesh.nodes()[node];
            let p = checked_pressure(u, gas)?;
            let position = match self.config.output.wall_coordinate {
                WallCoordinate::Angle => {
                    // round-off below the axis must not wrap the stagnation node to 360
                    let deg = x[1].atan2(-x[0]).to_degrees().rem_euclid(360.0);
                    if 360.0 - deg < 1e-9 {
                        0.0
                    } else {
                        deg
                    }
                }
                WallCoordinate::Chord => x[0] / fs.l_ref,
            };
            out.push(WallSample {
                node,
                xi: xi.get(&node).copied().unwrap_or(s),
                position,
                x,
                p,
                cp: pressure_coefficient(p, fs, gas)?,
                mach: mach_number(u, gas)?,
                cf: cf.as_ref().map(|c| c.get(&node).copied().unwrap_or(0.0)),
            });
        }
        match self.config.output.wall_coordinate {
            WallCoordinate::Angle => out.sort_by(|a, b| a.position.total_cmp(&b.position).then(a.node.cmp(&b.node))),
            WallCoordinate::Chord => out.sort_by(|a, b| a.xi.total_cmp(&b.xi).then(a.node.cmp(&b.node))),
        }
        Ok(out)
    }

    /// Tangential viscous traction over the free-stream dynamic pressure,
    /// averaged per node over the quadrature points of adjacent wall edges.
    fn nodal_friction(&self, field: &[State]) -> BTreeMap<usize, f64> {
        let q = self.config.free_stream.dynamic_pressure();
        let mut acc: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for wp in &self.wall {
            let mut u = [0.0; 4];
            let mut g = [[0.0; 2]; 4];
            for a in 0..3 {
                let ua = &field[wp.nodes[a]];
                for c in 0..4 {
                    u[c] += wp.shape[a] * ua[c];
                    g[c][0] += wp.grads[a][0] * ua[c];
                    g[c][1] += wp.grads[a][1] * ua[c];
                }
            }
            let e = viscous_flux(&u, &g, &self.config.gas);
            let n = wp.normal;
            // traction on the fluid side, tangent = normal rotated +90 degrees
            let tn = [e[0][1] * n[0] + e[1][1] * n[1], e[0][2] * n[0] + e[1][2] * n[1]];
            let t = [-n[1], n[0]];
            let cf = -vec2::dot(tn, t) / q;
            for node in [wp.nodes[0], wp.nodes[1]] {
                let a = acc.entry(node).or_insert((0.0, 0.0));
                a.0 += wp.weight * cf;
                a.1 += wp.weight;
            }
        }
        acc.into_iter().map(|(k, (s, w))| (k, s / w)).collect()
    }

    /// Marches the case. `on_slab` sees every completed slab.
    pub fn march(&self, on_slab: &mut dyn FnMut(&RunState)) -> Result<RunState, SolverError> {
        let mut asm = SlabAssembler::new(&self.elements, self.mesh.n_nodes(), self.model(), &self.constraints);
        let initial = vec![self.config.free_stream.state(); self.mesh.n_nodes()];
        let forces = |f: &[State]| self.drag(f);
        march(&mut asm, initial, &self.config.solver, &forces, on_slab)
    }
}

/// Result of a completed run.
pub struct RunOutcome {
    pub summary: RunSummary,
    pub state: RunState,
    pub samples: Vec<WallSample>,
}

fn with_pool<T: Send>(deterministic: bool, f: impl FnOnce() -> T + Send) -> T {
    if deterministic {
        match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    } else {
        f()
    }
}

pub fn run(config_path: &Path) -> Result<RunOutcome, DriverError> {
    run_config(CaseConfig::load(config_path)?)
}

/// Sets up, marches and writes all outputs of one case.
pub fn run_config(config: CaseConfig) -> Result<RunOutcome, DriverError> {
    let dir = config.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| DriverError::Io { path: dir.display().to_string(), msg: e.to_string() })?;
    let problem = Problem::setup(config)?;
    let cfg = &problem.config;
    info!(
        "{} mode: {} nodes, {} elements ({} curved), {} wall edges",
        cfg.mode,
        problem.mesh.n_nodes(),
        problem.mesh.n_triangles(),
        problem.records.len(),
        problem.wall_edge_count()
    );
    let mut io_error: Option<DriverError> = None;
    let mut last: Option<RunState> = None;
    let result = with_pool(cfg.deterministic, || {
        problem.march(&mut |rs: &RunState| {
            if cfg.output.cadence > 0 && rs.slabs % cfg.output.cadence == 0 {
                let path = dir.join(format!("field_{:05}.vtk", rs.slabs));
                let text = vtk_field(&problem.mesh, &rs.field, &cfg.free_stream, &cfg.gas, &format!("slab {}", rs.slabs));
                if let Err(e) = write_file(&path, &text) {
                    io_error.get_or_insert(e);
                }
            }
            last = Some(rs.clone());
        })
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    let state = match result {
        Ok(s) => s,
        Err(source) => {
            let field = last
                .as_ref()
                .map(|s| s.field.clone())
                .unwrap_or_else(|| vec![cfg.free_stream.state(); problem.mesh.n_nodes()]);
            let path = dir.join("field_failed.vtk");
            write_file(&path, &vtk_field(&problem.mesh, &field, &cfg.free_stream, &cfg.gas, "last converged slab"))?;
            if let Some(s) = &last {
                write_file(&dir.join("forces.csv"), &history_csv(&s.history))?;
            }
            return Err(DriverError::Solver { source, dump: path.display().to_string() });
        }
    };
    let title = format!("slab {}", state.slabs);
    write_file(&dir.join("field_final.vtk"), &vtk_field(&problem.mesh, &state.field, &cfg.free_stream, &cfg.gas, &title))?;
    let samples = problem.wall_samples(&state.field)?;
    write_file(&dir.join("wall.csv"), &wall_csv(&samples))?;
    write_file(&dir.join("forces.csv"), &history_csv(&state.history))?;
    let (cd_pressure, cd_viscous) = problem.drag(&state.field)?;
    let mut max_mach = 0.0f64;
    for u in &state.field {
        max_mach = max_mach.max(mach_number(u, &cfg.gas)?);
    }
    let summary = RunSummary {
        mode: cfg.mode.to_string(),
        nodes: problem.mesh.n_nodes(),
        elements: problem.mesh.n_triangles(),
        nefem_elements: problem.records.len(),
        wall_edges: problem.wall_edge_count(),
        slabs: state.slabs,
        time: state.time,
        steady: state.steady,
        final_change: state.history.last().map_or(0.0, |r| r.change),
        cd: cd_pressure + cd_viscous,
        cd_mean: tail_mean_drag(&state.history, 0.2),
        cd_pressure,
        cd_viscous,
        newton_iterations: state.history.iter().map(|r| r.newton.iterations).sum(),
        linear_iterations: state.history.iter().map(|r| r.newton.linear_iterations).sum(),
        max_wall_cp: samples.iter().map(|s| s.cp).fold(f64::NEG_INFINITY, f64::max),
        max_mach,
    };
    write_file(&dir.join("summary.json"), &summary_json(&summary))?;
    info!("finished: {} slabs, C_D = {:.6}", summary.slabs, summary.cd);
    Ok(RunOutcome { summary, state, samples })
}

/// Mesh validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshReport {
    pub nodes: usize,
    pub triangles: usize,
    /// Boundary edge count per tag.
    pub boundary_edges: BTreeMap<u32, usize>,
    /// Tag -> curve id pairs that were checked.
    pub walls: BTreeMap<u32, u32>,
    pub nefem_records: usize,
    pub max_projection_distance: f64,
    pub min_jacobian: f64,
    pub violations: Vec<String>,
}

impl MeshReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {}", self.nodes);
        let _ = writeln!(out, "triangles {}", self.triangles);
        for (t, n) in &self.boundary_edges {
            let _ = writeln!(out, "boundary tag {t}: {n} edges");
        }
        for (t, c) in &self.walls {
            let _ = writeln!(out, "wall tag {t} -> curve {c}");
        }
        let _ = writeln!(out, "nefem elements {}", self.nefem_records);
        let _ = writeln!(out, "max wall-node projection distance {:e}", self.max_projection_distance);
        if self.nefem_records > 0 {
            let _ = writeln!(out, "min curved-element Jacobian determinant {:e}", self.min_jacobian);
        }
        if self.passed() {
            let _ = writeln!(out, "PASS");
        } else {
            for v in &self.violations {
                let _ = writeln!(out, "violation: {v}");
            }
            let _ = writeln!(out, "FAIL");
        }
        out
    }
}

/// Checks a mesh against its wall curves. By default boundary tag `k` is
/// matched with curve id `k`; `walls` overrides that pairing.
pub fn check_mesh(mesh_path: &Path, curves_path: &Path, walls: Option<BTreeMap<u32, u32>>) -> Result<MeshReport, DriverError> {
    let mesh = load_mesh(mesh_path)?;
    let curves = load_curves(curves_path)?;
    let mut boundary_edges = BTreeMap::new();
    for b in mesh.boundary_edges() {
        *boundary_edges.entry(b.tag).or_insert(0) += 1;
    }
    let walls = walls.unwrap_or_else(|| {
        curves.iter().map(|(id, _)| id).filter(|id| boundary_edges.contains_key(id)).map(|id| (id, id)).collect()
    });
    let mut violations = Vec::new();
    let tolerance = PROJECTION_TOLERANCE * mesh.diameter();
    let mut max_distance = 0.0f64;
    for (&tag, &cid) in &walls {
        let curve = match curves.get(cid) {
            Ok(c) => c,
            Err(e) => {
                violations.push(format!("tag {tag}: {e}"));
                continue;
            }
        };
        let nodes: BTreeSet<usize> =
            mesh.boundary_edges().iter().filter(|b| b.tag == tag).flat_map(|b| [b.a, b.b]).collect();
        for node in nodes {
            let x = mesh.nodes()[node];
            let d = curve.closest_point(x, None).and_then(|xi| curve.evaluate(xi)).map(|c| vec2::dist(c, x));
            match d {
                Ok(d) => {
                    max_distance = max_distance.max(d);
                    if d > tolerance {
                        violations.push(format!(
                            "node {node} on tag {tag} lies {d:e} from curve {cid} (tolerance {tolerance:e})"
                        ));
                    }
                }
                Err(e) => violations.push(format!("node {node}: {e}")),
            }
        }
    }
    let mut nefem_records = 0;
    let mut min_jacobian = f64::INFINITY;
    if violations.is_empty() {
        match classify_elements(&mesh, &curves, &walls, PROJECTION_TOLERANCE) {
            Ok(records) => {
                nefem_records = records.len();
                let rule = nefem_quadrature(crate::mapping::QuadratureOptions::default().nefem_points)?;
                for r in &records {
                    let tri = CurvedTriangle::from_record(r, &mesh, &curves)?;
                    for (p, _) in rule.iter() {
                        let det = det2(&tri.jacobian(p)?);
                        min_jacobian = min_jacobian.min(det);
                        if det <= 0.0 {
                            violations.push(format!("curved element {} is tangled (det {det:e})", r.triangle));
                            break;
                        }
                    }
                }
            }
            Err(e) => violations.push(e.to_string()),
        }
    }
    Ok(MeshReport {
        nodes: mesh.n_nodes(),
        triangles: mesh.n_triangles(),
        boundary_edges,
        walls,
        nefem_records,
        max_projection_distance: max_distance,
        min_jacobian,
        violations,
    })
}

/// `n + 1` uniform parameter samples of a curve as CSV `xi,x,y,nx,ny`.
pub fn sample_curve(curves_path: &Path, id: u32, n: usize) -> Result<String, DriverError> {
    if n == 0 {
        return Err(DriverError::Usage("sample count must be at least 1".into()));
    }
    let curves = load_curves(curves_path)?;
    let curve = curves.get(id).map_err(|source| DriverError::Curves { path: curves_path.display().to_string(), source })?;
    let mut out = String::from("xi,x,y,nx,ny\n");
    for k in 0..=n {
        let xi = k as f64 / n as f64;
        let geo = |e| DriverError::Curves { path: curves_path.display().to_string(), source: e };
        let x = curve.evaluate(xi).map_err(geo)?;
        let nrm = curve.outward_normal(xi).map_err(geo)?;
        let _ = writeln!(out, "{xi},{},{},{},{}", x[0], x[1], nrm[0], nrm[1]);
    }
    Ok(out)
}

/// One run of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub grid: String,
    pub mode: Mode,
    pub elements: usize,
    pub wall_edges: usize,
    /// Drag coefficient averaged over the final fifth of the run.
    pub cd: f64,
    /// `|C_D - C_D(finest)| / |C_D(finest)|` within the same mode.
    pub relative_error: f64,
}

fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("grid,mode,elements,wall_edges,cd,relative_error\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.grid, r.mode, r.elements, r.wall_edges, r.cd, r.relative_error);
    }
    out
}

fn fill_errors(rows: &mut [StudyRow]) {
    for mode in [Mode::Nefem, Mode::Sfem] {
        // finest grid: most elements, later entries win ties
        let Some(reference) = rows.iter().filter(|r| r.mode == mode).max_by_key(|r| r.elements).map(|r| r.cd) else {
            continue;
        };
        for r in rows.iter_mut().filter(|r| r.mode == mode) {
            r.relative_error = (r.cd - reference).abs() / reference.abs();
        }
    }
}

/// Runs the configured case on every grid in both modes and writes
/// `study.csv` to the configured output directory. Outputs of the individual
/// runs go to numbered subdirectories.
pub fn convergence_study(config_path: &Path, grids: &[PathBuf]) -> Result<Vec<StudyRow>, DriverError> {
    if grids.is_empty() {
        return Err(DriverError::Usage("no grids given".into()));
    }
    let base = CaseConfig::load(config_path)?;
    let dir = base.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| DriverError::Io { path: dir.display().to_string(), msg: e.to_string() })?;
    let mut rows: Vec<StudyRow> = Vec::new();
    for mode in [Mode::Nefem, Mode::Sfem] {
        for (i, grid) in grids.iter().enumerate() {
            let mut cfg = base.clone();
            cfg.mesh = grid.clone();
            cfg.mode = mode;
            cfg.output.dir = dir.join(format!("grid{i}_{mode}"));
            info!("study: {} ({mode})", grid.display());
            match run_config(cfg) {
                Ok(out) => rows.push(StudyRow {
                    grid: grid.display().to_string(),
                    mode,
                    elements: out.summary.elements,
                    wall_edges: out.summary.wall_edges,
                    cd: out.summary.cd_mean,
                    relative_error: f64::NAN,
                }),
                Err(e) => {
                    fill_errors(&mut rows);
                    write_file(&dir.join("study.csv"), &study_csv(&rows))?;
                    return Err(e);
                }
            }
        }
    }
    fill_errors(&mut rows);
    write_file(&dir.join("study.csv"), &study_csv(&rows))?;
    Ok(rows)
}
