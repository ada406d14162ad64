//! Regenerates the benchmark meshes and wall curves under `cases/`.
//!
//! cargo run --release --example generate_cases [-- <cases dir>]

use std::path::{Path, PathBuf};

use nefem::meshgen::{cylinder_ogrid, naca0012_curve, naca0012_ogrid, AirfoilSpec, GeneratedCase, OGridSpec};

fn write(case: &GeneratedCase, dir: &Path, mesh: &str, curves: &str) {
    std::fs::create_dir_all(dir).expect("create case directory");
    case.mesh.save(dir.join(mesh)).expect("write mesh");
    case.curves.save(dir.join(curves)).expect("write curves");
    println!("{}: {} nodes, {} triangles", dir.join(mesh).display(), case.mesh.n_nodes(), case.mesh.n_triangles());
}

fn main() {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("cases"));
    let cyl = root.join("cylinder");
    for (name, n_wall, n_radial) in [
        ("coarse.mesh", 32, 8),
        ("grid1.mesh", 128, 104),
        ("study_64.mesh", 64, 12),
        ("study_128.mesh", 128, 24),
        ("study_256.mesh", 256, 48),
    ] {
        let case = cylinder_ogrid(&OGridSpec { n_wall, n_radial, ..OGridSpec::default() });
        write(&case, &cyl, name, "cylinder.curves");
    }
    let naca = root.join("naca0012");
    let coarse = AirfoilSpec {
        grid: OGridSpec { n_wall: 64, n_radial: 12, r_outer: 20.0, stretch: 300.0 },
        ..AirfoilSpec::default()
    };
    write(&naca0012_ogrid(&coarse), &naca, "coarse.mesh", "naca0012.curves");
    write(&naca0012_ogrid(&AirfoilSpec::default()), &naca, "grid.mesh", "naca0012.curves");
    let (_, deviation) = naca0012_curve(AirfoilSpec::default().n_ctrl);
    println!("NACA 0012 fit deviation {deviation:e}");
}
