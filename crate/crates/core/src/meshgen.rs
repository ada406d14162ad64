//! Structured O-grid triangulations for the benchmark geometries.
//!
//! These generators produce the meshes shipped under `cases/`; the solver
//! itself only ever reads mesh files. Wall nodes are placed exactly on the
//! NURBS wall curve (by evaluating the curve), so the curved-element
//! classification recovers their parameters to round-off.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::mesh::{BoundaryEdge, Mesh};
use crate::nurbs::{fit_profile, CurveSet, NurbsCurve};
use crate::vec2::{self, Vec2};

pub const WALL_TAG: u32 = 1;
pub const UPSTREAM_TAG: u32 = 2;
pub const DOWNSTREAM_TAG: u32 = 3;
pub const WALL_CURVE: u32 = 1;

/// A generated mesh together with its wall geometry.
#[derive(Debug, Clone)]
pub struct GeneratedCase {
    pub mesh: Mesh,
    pub curves: CurveSet,
    /// Boundary tag -> curve id.
    pub wall_curves: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, Copy)]
pub struct OGridSpec {
    /// Number of wall edges.
    pub n_wall: usize,
    /// Number of radial cell layers.
    pub n_radial: usize,
    /// Far-field radius.
    pub r_outer: f64,
    /// Ratio between the outermost and the innermost radial spacing.
    pub stretch: f64,
}

impl Default for OGridSpec {
    fn default() -> Self {
        Self { n_wall: 64, n_radial: 52, r_outer: 6.0, stretch: 40.0 }
    }
}

/// Radial coordinate of layer `j` of `n`; geometric spacing with total
/// stretch `beta` (nested for `n`, `2n`, `4n`).
fn radial_fraction(j: usize, n: usize, beta: f64) -> f64 {
    let s = j as f64 / n as f64;
    if (beta - 1.0).abs() < 1e-12 {
        s
    } else {
        (beta.powf(s) - 1.0) / (beta - 1.0)
    }
}

/// Unit-diameter cylinder centred at the origin. The wall curve is a
/// clockwise NURBS circle whose seam is the front stagnation point (-0.5, 0).
pub fn cylinder_ogrid(spec: &OGridSpec) -> GeneratedCase {
    let radius = 0.5;
    let curve = NurbsCurve::circle([0.0, 0.0], radius, PI, true);
    let n = spec.n_wall;
    assert!(n >= 8 && n % 4 == 0, "wall edge count must be a multiple of 4");
    let wall: Vec<Vec2> = (0..n)
        .map(|i| {
            let phi = PI - 2.0 * PI * i as f64 / n as f64;
            [radius * phi.cos(), radius * phi.sin()]
        })
        .collect();
    let outer: Vec<Vec2> = wall.iter().map(|p| vec2::scale(*p, spec.r_outer / radius)).collect();
    let normals: Vec<Vec2> = wall.iter().map(|p| vec2::scale(*p, 1.0 / radius)).collect();
    let mesh = ogrid(&wall, &outer, &normals, spec, 0.0, [0.0, 0.0]);
    let mut curves = CurveSet::new();
    curves.insert(WALL_CURVE, curve);
    GeneratedCase { mesh, curves, wall_curves: BTreeMap::from([(WALL_TAG, WALL_CURVE)]) }
}

/// Half thickness of the closed-trailing-edge NACA 0012 section.
pub fn naca0012_thickness(x: f64) -> f64 {
    0.6 * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3) - 0.1036 * x.powi(4))
}

/// Ordered NACA 0012 surface samples, clockwise from the trailing edge
/// (lower surface first), cosine spaced with `n_side` intervals per side.
/// Both end samples are exactly (1, 0).
pub fn naca0012_samples(n_side: usize) -> Vec<Vec2> {
    let mut pts = Vec::with_capacity(2 * n_side + 1);
    for k in (0..=n_side).rev() {
        let x = 0.5 * (1.0 - (PI * k as f64 / n_side as f64).cos());
        pts.push([x, -naca0012_thickness(x)]);
    }
    for k in 1..=n_side {
        let x = 0.5 * (1.0 - (PI * k as f64 / n_side as f64).cos());
        pts.push([x, naca0012_thickness(x)]);
    }
    pts[0] = [1.0, 0.0];
    let last = pts.len() - 1;
    pts[last] = [1.0, 0.0];
    pts
}

/// Degree-4 NURBS fit of the NACA 0012 section; returns the curve and the
/// maximum deviation from the analytic samples.
pub fn naca0012_curve(n_ctrl: usize) -> (NurbsCurve, f64) {
    let samples = naca0012_samples(200);
    let fit = fit_profile(&samples, 4, n_ctrl).expect("NACA 0012 fit");
    (fit.curve, fit.max_deviation)
}

#[derive(Debug, Clone, Copy)]
pub struct AirfoilSpec {
    pub grid: OGridSpec,
    pub n_ctrl: usize,
}

impl Default for AirfoilSpec {
    fn default() -> Self {
        Self {
            grid: OGridSpec { n_wall: 192, n_radial: 56, r_outer: 20.0, stretch: 300.0 },
            n_ctrl: 120,
        }
    }
}

/// O-grid around a unit-chord NACA 0012 at zero incidence, far-field circle
/// centred at mid-chord.
pub fn naca0012_ogrid(spec: &AirfoilSpec) -> GeneratedCase {
    let (curve, _) = naca0012_curve(spec.n_ctrl);
    let n = spec.grid.n_wall;
    assert!(n >= 8 && n % 2 == 0, "wall edge count must be even");
    let half = n / 2;
    // chordwise stations: blend of cosine and uniform spacing
    let station = |s: f64| 0.7 * 0.5 * (1.0 - (PI * s).cos()) + 0.3 * s;
    let mut xis = Vec::with_capacity(n);
    xis.push(0.0);
    let mut guess = 0.0;
    for i in 1..n {
        let target = if i <= half {
            let x = station(1.0 - i as f64 / half as f64);
            [x, -naca0012_thickness(x)]
        } else {
            let x = station((i - half) as f64 / half as f64);
            [x, naca0012_thickness(x)]
        };
        let xi = curve.closest_point(target, Some(guess)).expect("projection onto the airfoil");
        let xi = if i == half {
            curve.closest_point([0.0, 0.0], Some(xi)).expect("leading edge")
        } else {
            xi
        };
        xis.push(xi);
        guess = xi;
    }
    let wall: Vec<Vec2> = xis.iter().map(|&xi| curve.evaluate(xi).expect("wall node")).collect();
    // arc-length fraction of each wall node, used for the far-field angles
    let mut arc = vec![0.0; n];
    for i in 1..n {
        arc[i] = arc[i - 1] + vec2::dist(wall[i], wall[i - 1]);
    }
    let total = arc[n - 1] + vec2::dist(wall[0], wall[n - 1]);
    let centre = [0.5, 0.0];
    let outer: Vec<Vec2> = arc
        .iter()
        .map(|a| {
            let phi = -2.0 * PI * a / total;
            [centre[0] + spec.grid.r_outer * phi.cos(), spec.grid.r_outer * phi.sin()]
        })
        .collect();
    // wall normals pointing into the fluid; the trailing-edge node uses the
    // bisector of its two edges
    let normals: Vec<Vec2> = (0..n)
        .map(|i| {
            let prev = wall[(i + n - 1) % n];
            let next = wall[(i + 1) % n];
            let t1 = vec2::sub(wall[i], prev);
            let t2 = vec2::sub(next, wall[i]);
            let n1 = vec2::scale([-t1[1], t1[0]], 1.0 / vec2::norm(t1));
            let n2 = vec2::scale([-t2[1], t2[0]], 1.0 / vec2::norm(t2));
            let s = vec2::add(n1, n2);
            vec2::scale(s, 1.0 / vec2::norm(s))
        })
        .collect();
    let mesh = ogrid(&wall, &outer, &normals, &spec.grid, 2.0, centre);
    let mut curves = CurveSet::new();
    curves.insert(WALL_CURVE, curve);
    GeneratedCase { mesh, curves, wall_curves: BTreeMap::from([(WALL_TAG, WALL_CURVE)]) }
}

/// Builds the O-grid between a clockwise wall polygon and a far-field
/// polygon with matching node counts. `normal_push` bends grid lines toward
/// the wall normals near the wall.
fn ogrid(
    wall: &[Vec2],
    outer: &[Vec2],
    normals: &[Vec2],
    spec: &OGridSpec,
    normal_push: f64,
    centre: Vec2,
) -> Mesh {
    let n = wall.len();
    let nr = spec.n_radial;
    // nodes are numbered along the grid lines leaving the wall, so ILU
    // preconditioners factor the stiff wall-normal coupling first
    let mut nodes = Vec::with_capacity(n * (nr + 1));
    for i in 0..n {
        let reach = vec2::dist(outer[i], wall[i]);
        for j in 0..=nr {
            let f = radial_fraction(j, nr, spec.stretch);
            let base = vec2::add(vec2::scale(wall[i], 1.0 - f), vec2::scale(outer[i], f));
            let bend = normal_push * f * (1.0 - f) * (1.0 - f) * reach;
            let p = if j == 0 {
                wall[i]
            } else if j == nr {
                outer[i]
            } else {
                vec2::add(base, vec2::scale(normals[i], bend))
            };
            nodes.push(p);
        }
    }
    let id = |i: usize, j: usize| (i % n) * (nr + 1) + j;
    let mut tris = Vec::with_capacity(2 * n * nr);
    for j in 0..nr {
        for i in 0..n {
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            // mirror-symmetric diagonals about the symmetry axis
            if i < n / 2 {
                tris.push([p00, p10, p11]);
                tris.push([p00, p11, p01]);
            } else {
                tris.push([p00, p10, p01]);
                tris.push([p10, p11, p01]);
            }
        }
    }
    for (t, tri) in tris.iter().enumerate() {
        let a = crate::mesh::signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        assert!(a > 0.0, "O-grid cell {t} is tangled (area {a:e})");
    }
    let mut edges = Vec::with_capacity(2 * n);
    for i in 0..n {
        edges.push(BoundaryEdge { a: id(i, 0), b: id(i + 1, 0), tag: WALL_TAG });
        let (a, b) = (id(i + 1, nr), id(i, nr));
        let mid = vec2::scale(vec2::add(nodes[a], nodes[b]), 0.5);
        let tag = if mid[0] < centre[0] { UPSTREAM_TAG } else { DOWNSTREAM_TAG };
        edges.push(BoundaryEdge { a, b, tag });
    }
    Mesh::new(nodes, tris, edges).expect("generated O-grid is valid")
}

/// Structured triangulation of a rectangle; tags 1..4 on the bottom, right,
/// top, and left sides.
pub fn rectangle(nx: usize, ny: usize, lo: Vec2, hi: Vec2) -> Mesh {
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([
                lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64,
            ]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut edges = Vec::new();
    for i in 0..nx {
        edges.push(BoundaryEdge { a: id(i, 0), b: id(i + 1, 0), tag: 1 });
        edges.push(BoundaryEdge { a: id(i + 1, ny), b: id(i, ny), tag: 3 });
    }
    for j in 0..ny {
        edges.push(BoundaryEdge { a: id(nx, j), b: id(nx, j + 1), tag: 2 });
        edges.push(BoundaryEdge { a: id(0, j + 1), b: id(0, j), tag: 4 });
    }
    Mesh::new(nodes, tris, edges).expect("rectangle mesh")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{classify_elements, PROJECTION_TOLERANCE};

    #[test]
    fn cylinder_grid_counts() {
        let case = cylinder_ogrid(&OGridSpec { n_wall: 64, n_radial: 52, ..Default::default() });
        assert_eq!(case.mesh.n_triangles(), 6656);
        assert_eq!(case.mesh.count_tag(WALL_TAG), 64);
        let recs = classify_elements(&case.mesh, &case.curves, &case.wall_curves, PROJECTION_TOLERANCE).unwrap();
        assert_eq!(recs.len(), 64);
    }

    #[test]
    fn cylinder_grid_is_mirror_symmetric() {
        let case = cylinder_ogrid(&OGridSpec { n_wall: 16, n_radial: 6, ..Default::default() });
        let nodes = case.mesh.nodes();
        let mut set: Vec<[i64; 2]> = nodes.iter().map(|p| [(p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64]).collect();
        let mut mirrored: Vec<[i64; 2]> = set.iter().map(|p| [p[0], -p[1]]).collect();
        set.sort();
        mirrored.sort();
        assert_eq!(set, mirrored);
    }

    #[test]
    fn naca_fit_is_within_tolerance() {
        let samples = naca0012_samples(200);
        assert_eq!(samples.len(), 401);
        let fit = fit_profile(&samples, 4, 120).unwrap();
        assert!(fit.max_deviation <= 1e-4, "deviation {:e}", fit.max_deviation);
    }

    #[test]
    fn airfoil_grid_is_valid() {
        let spec = AirfoilSpec {
            grid: OGridSpec { n_wall: 64, n_radial: 16, r_outer: 20.0, stretch: 300.0 },
            n_ctrl: 120,
        };
        let case = naca0012_ogrid(&spec);
        let recs = classify_elements(&case.mesh, &case.curves, &case.wall_curves, PROJECTION_TOLERANCE).unwrap();
        assert_eq!(recs.len(), 64);
    }

    #[test]
    fn trailing_edge_nodes_project_across_the_seam() {
        // the last upper-surface node is closer to the seam at xi = 0 than to
        // any interior sample, so the projection has to continue from xi = 1
        let case = naca0012_ogrid(&AirfoilSpec::default());
        let recs = classify_elements(&case.mesh, &case.curves, &case.wall_curves, PROJECTION_TOLERANCE).unwrap();
        assert_eq!(recs.len(), 192);
        let curve = case.curves.get(WALL_CURVE).unwrap();
        let x = case.mesh.nodes()[191 * 57];
        let xi = curve.closest_point(x, None).unwrap();
        assert!(xi > 0.99 && vec2::dist(curve.evaluate(xi).unwrap(), x) < 1e-12);
    }
}
