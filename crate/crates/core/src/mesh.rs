//! Unstructured triangle meshes, boundary tags, and classification of the
//! wall-touching triangles into NURBS-enhanced elements.
//!
//! Mesh file format (plain text, 0-based node ids):
//!
//! ```text
//! nodes N triangles T bedges B
//! x y            (N lines)
//! a b c          (T lines)
//! a b tag        (B lines)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::nurbs::{CurveSet, GeometryError};
use crate::vec2::{self, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("triangle {0} is degenerate (zero area)")]
    Degenerate(usize),
    #[error("invalid mesh topology: {0}")]
    Topology(String),
    #[error("element classification failed: {0}")]
    Classification(String),
    #[error("wall node {node} lies {distance:e} from curve {curve} (tolerance {tolerance:e})")]
    OffCurve { node: usize, curve: u32, distance: f64, tolerance: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub tag: u32,
}

/// Validated triangle mesh.
///
/// Triangles are counterclockwise. Boundary edges are oriented like their
/// owning triangle, so the domain lies to the left of `a -> b`.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    /// Owning triangle and local edge index of every boundary edge. Local edge
    /// `k` joins local nodes `k` and `(k + 1) % 3`.
    edge_owner: Vec<(usize, usize)>,
}

impl Mesh {
    pub fn new(
        nodes: Vec<Vec2>,
        mut triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        let n = nodes.len();
        if nodes.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MeshError::Topology("non-finite node coordinate".into()));
        }
        let scale = bounding_diameter(&nodes).max(f64::MIN_POSITIVE);
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(MeshError::Topology(format!("triangle {t} references a missing node")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::Degenerate(t));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area.abs() <= 1e-14 * scale * scale {
                return Err(MeshError::Degenerate(t));
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }
        let mut edge_use: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_use.entry((a.min(b), a.max(b))).or_default().push((t, k));
            }
        }
        if let Some((e, _)) = edge_use.iter().find(|(_, v)| v.len() > 2) {
            return Err(MeshError::Topology(format!("edge {e:?} shared by more than two triangles")));
        }
        let mut oriented = Vec::with_capacity(boundary_edges.len());
        let mut edge_owner = Vec::with_capacity(boundary_edges.len());
        let mut tagged: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, be) in boundary_edges.iter().enumerate() {
            let key = (be.a.min(be.b), be.a.max(be.b));
            let owners = edge_use.get(&key).ok_or_else(|| {
                MeshError::Topology(format!("boundary edge {i} ({}, {}) is not a triangle edge", be.a, be.b))
            })?;
            if owners.len() != 1 {
                return Err(MeshError::Topology(format!(
                    "boundary edge {i} ({}, {}) belongs to {} triangles",
                    be.a,
                    be.b,
                    owners.len()
                )));
            }
            if tagged.insert(key, i).is_some() {
                return Err(MeshError::Topology(format!("boundary edge ({}, {}) listed twice", be.a, be.b)));
            }
            let (t, k) = owners[0];
            let tri = triangles[t];
            oriented.push(BoundaryEdge { a: tri[k], b: tri[(k + 1) % 3], tag: be.tag });
            edge_owner.push((t, k));
        }
        if let Some((e, _)) = edge_use.iter().find(|(e, v)| v.len() == 1 && !tagged.contains_key(e)) {
            return Err(MeshError::Topology(format!("mesh boundary edge {e:?} has no tag")));
        }
        // every boundary node closes its loop: one incoming and one outgoing edge
        let mut degree: HashMap<usize, (usize, usize)> = HashMap::new();
        for be in &oriented {
            degree.entry(be.a).or_default().0 += 1;
            degree.entry(be.b).or_default().1 += 1;
        }
        if let Some((node, _)) = degree.iter().find(|(_, (o, i))| o != i) {
            return Err(MeshError::Topology(format!("boundary loop is open at node {node}")));
        }
        Ok(Self { nodes, triangles, boundary_edges: oriented, edge_owner })
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Owning triangle and local edge index of boundary edge `i`.
    pub fn boundary_owner(&self, i: usize) -> (usize, usize) {
        self.edge_owner[i]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_nodes(&self, t: usize) -> [Vec2; 3] {
        let tri = self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_nodes(t);
        signed_area(a, b, c)
    }

    /// Diagonal of the node bounding box.
    pub fn diameter(&self) -> f64 {
        bounding_diameter(&self.nodes)
    }

    /// Length scale of triangle `t`: the edge of the equilateral triangle with
    /// the same area, `sqrt(4 A / sqrt(3))`.
    pub fn element_size(&self, t: usize) -> f64 {
        (4.0 * self.area(t) / 3f64.sqrt()).sqrt()
    }

    pub fn count_tag(&self, tag: u32) -> usize {
        self.boundary_edges.iter().filter(|e| e.tag == tag).count()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MeshError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, msg: String| MeshError::Parse { line, msg };
        let (hl, header) = lines.next().ok_or_else(|| err(1, "empty mesh file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "nodes" || h[2] != "triangles" || h[4] != "bedges" {
            return Err(err(hl, "expected `nodes N triangles T bedges B`".into()));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| err(hl, format!("bad count `{s}`")));
        let (n, t, b) = (count(h[1])?, count(h[3])?, count(h[5])?);
        fn fields<T: std::str::FromStr>(
            line: usize,
            text: &str,
            want: usize,
        ) -> Result<Vec<T>, MeshError> {
            let v = text
                .split_whitespace()
                .map(|s| {
                    s.parse::<T>()
                        .map_err(|_| MeshError::Parse { line, msg: format!("bad value `{s}`") })
                })
                .collect::<Result<Vec<T>, _>>()?;
            if v.len() != want {
                return Err(MeshError::Parse { line, msg: format!("expected {want} values, got {}", v.len()) });
            }
            Ok(v)
        }
        let mut last = hl;
        let mut next = |what: &str| {
            lines.next().map(|(l, s)| {
                last = l;
                (l, s)
            }).ok_or_else(|| err(last + 1, format!("unexpected end of file while reading {what}")))
        };
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (l, s) = next("nodes")?;
            let v: Vec<f64> = fields(l, s, 2)?;
            nodes.push([v[0], v[1]]);
        }
        let mut tris = Vec::with_capacity(t);
        for _ in 0..t {
            let (l, s) = next("triangles")?;
            let v: Vec<usize> = fields(l, s, 3)?;
            if v.iter().any(|&i| i >= n) {
                return Err(err(l, format!("node id out of range (N = {n})")));
            }
            tris.push([v[0], v[1], v[2]]);
        }
        let mut edges = Vec::with_capacity(b);
        for _ in 0..b {
            let (l, s) = next("boundary edges")?;
            let v: Vec<u64> = fields(l, s, 3)?;
            if v[0] as usize >= n || v[1] as usize >= n {
                return Err(err(l, format!("node id out of range (N = {n})")));
            }
            let tag = u32::try_from(v[2]).map_err(|_| err(l, "tag out of range".into()))?;
            edges.push(BoundaryEdge { a: v[0] as usize, b: v[1] as usize, tag });
        }
        Self::new(nodes, tris, edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(40 * (self.nodes.len() + self.triangles.len()));
        let _ = writeln!(
            out,
            "nodes {} triangles {} bedges {}",
            self.nodes.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        );
        for p in &self.nodes {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.boundary_edges {
            let _ = writeln!(out, "{} {} {}", e.a, e.b, e.tag);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text())
            .map_err(|e| MeshError::Io { path: path.display().to_string(), msg: e.to_string() })
    }
}

pub fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * vec2::cross(vec2::sub(b, a), vec2::sub(c, a))
}

fn bounding_diameter(nodes: &[Vec2]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in nodes {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if nodes.is_empty() {
        0.0
    } else {
        vec2::dist(lo, hi)
    }
}

/// A triangle with one edge on a NURBS wall.
///
/// `nodes = [wall node at xi1, wall node at xi2, interior node]`, ordered
/// counterclockwise, which matches the reference vertices (1,0), (0,1), (0,0)
/// of the curved-element mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NefemElementRecord {
    pub triangle: usize,
    /// Local edge index (in the mesh triangle) of the curved edge.
    pub local_edge: usize,
    pub curve_id: u32,
    pub xi1: f64,
    pub xi2: f64,
    pub nodes: [usize; 3],
}

/// Default wall-node projection tolerance, relative to the mesh diameter.
pub const PROJECTION_TOLERANCE: f64 = 1e-8;

/// Builds a NEFEM record for every triangle owning an edge tagged with one of
/// `wall_curves` (tag -> curve id). All other triangles stay standard.
///
/// Records are sorted by triangle id.
pub fn classify_elements(
    mesh: &Mesh,
    curves: &CurveSet,
    wall_curves: &BTreeMap<u32, u32>,
    relative_tolerance: f64,
) -> Result<Vec<NefemElementRecord>, MeshError> {
    let tolerance = relative_tolerance * mesh.diameter();
    let mut by_triangle: BTreeMap<usize, (usize, u32)> = BTreeMap::new();
    for (i, be) in mesh.boundary_edges().iter().enumerate() {
        let Some(&curve_id) = wall_curves.get(&be.tag) else { continue };
        let (t, _) = mesh.boundary_owner(i);
        if by_triangle.insert(t, (i, curve_id)).is_some() {
            return Err(MeshError::Classification(format!(
                "triangle {t} has two curved wall edges; split it in the mesh generator"
            )));
        }
    }
    let mut projected: HashMap<(usize, u32), f64> = HashMap::new();
    let mut records = Vec::with_capacity(by_triangle.len());
    for (&t, &(edge, curve_id)) in &by_triangle {
        let curve = curves.get(curve_id)?;
        let be = mesh.boundary_edges()[edge];
        let (_, local) = mesh.boundary_owner(edge);
        let tri = mesh.triangles()[t];
        let interior = tri[(local + 2) % 3];
        let mut project = |node: usize| -> Result<f64, MeshError> {
            if let Some(&xi) = projected.get(&(node, curve_id)) {
                return Ok(xi);
            }
            let x = mesh.nodes()[node];
            let xi = curve.closest_point(x, None)?;
            let distance = vec2::dist(curve.evaluate(xi)?, x);
            if distance > tolerance {
                return Err(MeshError::OffCurve { node, curve: curve_id, distance, tolerance });
            }
            projected.insert((node, curve_id), xi);
            Ok(xi)
        };
        let xa = project(be.a)?;
        let xb = project(be.b)?;
        let xi1 = curve.seam_consistent(xa, xb);
        let xi2 = curve.seam_consistent(xb, xa);
        if xi1 == xi2 {
            return Err(MeshError::Classification(format!(
                "triangle {t}: both wall nodes project to xi = {xi1}"
            )));
        }
        if curve.is_closed() && (xi1 - xi2).abs() > 0.5 {
            return Err(MeshError::Classification(format!(
                "triangle {t} straddles the seam of curve {curve_id}; place a node at the seam"
            )));
        }
        records.push(NefemElementRecord {
            triangle: t,
            local_edge: local,
            curve_id,
            xi1,
            xi2,
            nodes: [be.a, be.b, interior],
        });
    }
    Ok(records)
}
