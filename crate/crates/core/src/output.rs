//! Text output writers. Numbers are printed in the shortest form that parses
//! back to the same `f64`, so identical fields give identical files.

use std::fmt::Write as _;

use serde::Serialize;

use crate::mesh::Mesh;
use crate::physics::{mach_number, pressure_coefficient, primitive, FreeStream, GasModel, State};
use crate::solver::SlabRecord;
use crate::vec2::Vec2;

/// Wall data at one wall node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WallSample {
    pub node: usize,
    /// Curve parameter, or normalized arc length for walls without a curve.
    pub xi: f64,
    /// Angle in degrees or x/c, depending on the configured coordinate.
    pub position: f64,
    pub x: Vec2,
    pub p: f64,
    pub cp: f64,
    pub mach: f64,
    /// Skin-friction coefficient along the wall tangent; viscous runs only.
    pub cf: Option<f64>,
}

/// Legacy-format VTK unstructured grid with nodal ρ, u, v, p, M and Cp.
pub fn vtk_field(mesh: &Mesh, field: &[State], fs: &FreeStream, gas: &GasModel, title: &str) -> String {
    let n = mesh.n_nodes();
    let t = mesh.n_triangles();
    let mut out = String::with_capacity(64 * n + 32 * t);
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{}", title.replace('\n', " "));
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {n} double");
    for x in mesh.nodes() {
        let _ = writeln!(out, "{} {} 0", x[0], x[1]);
    }
    let _ = writeln!(out, "CELLS {t} {}", 4 * t);
    for tri in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {t}");
    for _ in 0..t {
        let _ = writeln!(out, "5");
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    let prim: Vec<State> = field.iter().map(|u| primitive(u, gas).unwrap_or([f64::NAN; 4])).collect();
    let columns: [(&str, Box<dyn Fn(usize) -> f64>); 6] = [
        ("rho", Box::new(|i| prim[i][0])),
        ("u", Box::new(|i| prim[i][1])),
        ("v", Box::new(|i| prim[i][2])),
        ("p", Box::new(|i| prim[i][3])),
        ("mach", Box::new(|i| mach_number(&field[i], gas).unwrap_or(f64::NAN))),
        ("cp", Box::new(|i| pressure_coefficient(prim[i][3], fs, gas).unwrap_or(f64::NAN))),
    ];
    for (name, f) in &columns {
        let _ = writeln!(out, "SCALARS {name} double 1");
        let _ = writeln!(out, "LOOKUP_TABLE default");
        for i in 0..n {
            let _ = writeln!(out, "{}", f(i));
        }
    }
    out
}

pub fn wall_csv(samples: &[WallSample]) -> String {
    let viscous = samples.iter().any(|s| s.cf.is_some());
    let mut out = String::from("xi,position,x,y,p,cp,mach");
    out.push_str(if viscous { ",cf\n" } else { "\n" });
    for s in samples {
        let _ = write!(out, "{},{},{},{},{},{},{}", s.xi, s.position, s.x[0], s.x[1], s.p, s.cp, s.mach);
        match s.cf {
            Some(cf) if viscous => {
                let _ = writeln!(out, ",{cf}");
            }
            _ => out.push('\n'),
        }
    }
    out
}

pub fn history_csv(history: &[SlabRecord]) -> String {
    let mut out = String::from("slab,time,dt,newton,gmres,change,cd_pressure,cd_viscous\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.slab, r.time, r.dt, r.newton.iterations, r.newton.linear_iterations, r.change, r.cd_pressure, r.cd_viscous
        );
    }
    out
}

/// Run summary written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: String,
    pub nodes: usize,
    pub elements: usize,
    pub nefem_elements: usize,
    pub wall_edges: usize,
    pub slabs: usize,
    pub time: f64,
    pub steady: bool,
    pub final_change: f64,
    pub cd: f64,
    /// Time average of C_D over the final fifth of the slabs.
    pub cd_mean: f64,
    pub cd_pressure: f64,
    pub cd_viscous: f64,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub max_wall_cp: f64,
    pub max_mach: f64,
}

/// Time average of the drag coefficient over the final `fraction` of the
/// slabs (at least one slab); NaN for an empty history.
pub fn tail_mean_drag(history: &[SlabRecord], fraction: f64) -> f64 {
    let n = history.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1.min(n), n);
    let tail = &history[n - k..];
    let time: f64 = tail.iter().map(|r| r.dt).sum();
    tail.iter().map(|r| r.dt * (r.cd_pressure + r.cd_viscous)).sum::<f64>() / time
}

pub fn summary_json(s: &RunSummary) -> String {
    let mut text = serde_json::to_string_pretty(s).expect("summary serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshgen::rectangle;

    #[test]
    fn uniform_field_has_zero_cp_in_vtk() {
        let mesh = rectangle(2, 1, [0.0, 0.0], [1.0, 1.0]);
        let fs = FreeStream { rho: 1.0, u: 1.0, v: 0.0, e: 1.1179, l_ref: 1.0 };
        let gas = GasModel::inviscid(1.4);
        let text = vtk_field(&mesh, &vec![fs.state(); mesh.n_nodes()], &fs, &gas, "t");
        let lines: Vec<&str> = text.lines().collect();
        let k = lines.iter().position(|l| l.starts_with("SCALARS cp")).unwrap();
        for l in &lines[k + 2..k + 2 + mesh.n_nodes()] {
            assert!(l.parse::<f64>().unwrap().abs() < 1e-9);
        }
        assert!(text.contains(&format!("CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles())));
    }

    #[test]
    fn tail_mean_is_time_weighted() {
        let rec = |dt: f64, cd: f64| SlabRecord {
            slab: 0,
            time: 0.0,
            dt,
            newton: Default::default(),
            change: 0.0,
            cd_pressure: cd,
            cd_viscous: 0.0,
        };
        let h = [rec(1.0, 9.0), rec(1.0, 1.0), rec(1.0, 2.0), rec(3.0, 4.0), rec(1.0, 3.0)];
        assert_eq!(tail_mean_drag(&h, 0.2), 3.0);
        assert_eq!(tail_mean_drag(&h, 0.4), 3.75);
        assert!(tail_mean_drag(&[], 0.2).is_nan());
    }

    #[test]
    fn wall_csv_has_friction_column_only_when_viscous() {
        let s = WallSample { node: 0, xi: 0.0, position: 0.0, x: [0.0, 0.0], p: 1.0, cp: 0.5, mach: 0.1, cf: None };
        assert!(wall_csv(&[s]).starts_with("xi,position,x,y,p,cp,mach\n"));
        let v = WallSample { cf: Some(0.01), ..s };
        assert!(wall_csv(&[v]).lines().nth(1).unwrap().ends_with(",0.01"));
    }
}
