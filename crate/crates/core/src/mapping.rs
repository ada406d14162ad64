//! Reference-to-physical maps, shape functions and quadrature for straight
//! and NURBS-enhanced triangles.
//!
//! Both element kinds share the reference triangle with vertices (1,0), (0,1)
//! and (0,0) and the linear shape functions `L1 = s`, `L2 = r`,
//! `L3 = 1 - s - r`. Curved elements replace the affine map by the
//! triangle-rectangle-triangle map
//!
//! ```text
//! Phi(s, r) = (1 - s - r) x3 + (s + r) C((s xi1 + r xi2) / (s + r))
//! ```
//!
//! so the edge `s + r = 1` follows the wall curve exactly while the fields
//! stay linear in (s, r).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::mesh::{Mesh, NefemElementRecord};
use crate::nurbs::{CurveSet, GeometryError, NurbsCurve};
use crate::vec2::{self, Vec2};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("unsupported triangle quadrature order {0} (supported: 1 to 5)")]
    UnsupportedOrder(usize),
    #[error("curved-element rule needs at least 2 points per direction, got {0}")]
    TooFewPoints(usize),
    #[error("element {element} is tangled: Jacobian determinant {det:e} at a quadrature point")]
    Tangled { element: usize, det: f64 },
    #[error("singular mapping Jacobian (determinant {0:e})")]
    Singular(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Point of the reference triangle `s >= 0, r >= 0, s + r <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub s: f64,
    pub r: f64,
}

impl ReferencePoint {
    pub fn new(s: f64, r: f64) -> Self {
        Self { s, r }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<ReferencePoint>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ReferencePoint, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// 2x2 matrix, `m[i][j] = d x_i / d ref_j` for mapping Jacobians.
pub type Mat2 = [[f64; 2]; 2];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(z), p0 = P_{n-1}(z)
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn symmetric_rule(groups: &[(usize, f64, f64)]) -> QuadratureRule {
    // (orbit size, a, weight on the unit-area triangle); orbit 1 is the
    // centroid, orbit 3 the permutations of (a, a, 1 - 2a)
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(orbit, a, w) in groups {
        match orbit {
            1 => {
                points.push(ReferencePoint::new(1.0 / 3.0, 1.0 / 3.0));
                weights.push(0.5 * w);
            }
            3 => {
                let b = 1.0 - 2.0 * a;
                for (s, r) in [(a, a), (b, a), (a, b)] {
                    points.push(ReferencePoint::new(s, r));
                    weights.push(0.5 * w);
                }
            }
            _ => unreachable!("orbit sizes are 1 or 3"),
        }
    }
    QuadratureRule { points, weights }
}

/// Symmetric Gauss rule on the reference triangle exact for polynomials of
/// total degree `order`.
pub fn standard_quadrature(order: usize) -> Result<QuadratureRule, MappingError> {
    let rule = match order {
        1 => symmetric_rule(&[(1, 0.0, 1.0)]),
        2 => symmetric_rule(&[(3, 1.0 / 6.0, 1.0 / 3.0)]),
        3 | 4 => symmetric_rule(&[
            (3, 0.445_948_490_915_964_9, 0.223_381_589_678_011_47),
            (3, 0.091_576_213_509_770_74, 0.109_951_743_655_321_87),
        ]),
        5 => {
            let r15 = 15f64.sqrt();
            symmetric_rule(&[
                (1, 0.0, 9.0 / 40.0),
                (3, (6.0 - r15) / 21.0, (155.0 - r15) / 1200.0),
                (3, (6.0 + r15) / 21.0, (155.0 + r15) / 1200.0),
            ])
        }
        _ => return Err(MappingError::UnsupportedOrder(order)),
    };
    Ok(rule)
}

/// Collapsed tensor-product Gauss rule with `n` points per direction. The
/// unit square (u, rho) maps to `s = rho (1 - u)`, `r = rho u`, which
/// collapses the edge `rho = 0` onto the interior vertex (0,0); the points
/// cluster toward the curved edge `s + r = 1`.
pub fn nefem_quadrature(n: usize) -> Result<QuadratureRule, MappingError> {
    if n < 2 {
        return Err(MappingError::TooFewPoints(n));
    }
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&xr, &wr) in x.iter().zip(&w) {
        let rho = 0.5 * (xr + 1.0);
        for (&xu, &wu) in x.iter().zip(&w) {
            let u = 0.5 * (xu + 1.0);
            points.push(ReferencePoint::new(rho * (1.0 - u), rho * u));
            weights.push(0.25 * wr * wu * rho);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Shape-function reference gradients, constant over the element.
pub const REFERENCE_GRADIENTS: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]];

/// `(L1, L2, L3)` at `p`.
pub fn shape_functions(p: ReferencePoint) -> [f64; 3] {
    [p.s, p.r, 1.0 - p.s - p.r]
}

/// Affine map of the triangle `(x1, x2, x3)` with `x1 <-> (1,0)`,
/// `x2 <-> (0,1)`, `x3 <-> (0,0)`.
pub fn affine_map(x: &[Vec2; 3], p: ReferencePoint) -> Vec2 {
    let l = shape_functions(p);
    [
        l[0] * x[0][0] + l[1] * x[1][0] + l[2] * x[2][0],
        l[0] * x[0][1] + l[1] * x[1][1] + l[2] * x[2][1],
    ]
}

pub fn affine_jacobian(x: &[Vec2; 3]) -> Mat2 {
    [[x[0][0] - x[2][0], x[1][0] - x[2][0]], [x[0][1] - x[2][1], x[1][1] - x[2][1]]]
}

/// `grad_x L_a = J^{-T} grad_(s,r) L_a`.
pub fn physical_gradients(j: &Mat2) -> Result<[[f64; 2]; 3], MappingError> {
    let det = det2(j);
    if !(det.abs() > 1e-300) || !det.is_finite() {
        return Err(MappingError::Singular(det));
    }
    // J^{-T} = (1/det) [[j11, -j10], [-j01, j00]]
    let mut g = [[0.0; 2]; 3];
    for (a, dr) in REFERENCE_GRADIENTS.iter().enumerate() {
        g[a][0] = (j[1][1] * dr[0] - j[1][0] * dr[1]) / det;
        g[a][1] = (-j[0][1] * dr[0] + j[0][0] * dr[1]) / det;
    }
    Ok(g)
}

/// A triangle with one edge on a NURBS curve.
#[derive(Debug, Clone, Copy)]
pub struct CurvedTriangle<'a> {
    pub curve: &'a NurbsCurve,
    pub xi1: f64,
    pub xi2: f64,
    /// Interior vertex.
    pub x3: Vec2,
}

impl<'a> CurvedTriangle<'a> {
    pub fn new(curve: &'a NurbsCurve, xi1: f64, xi2: f64, x3: Vec2) -> Self {
        Self { curve, xi1, xi2, x3 }
    }

    pub fn from_record(rec: &NefemElementRecord, mesh: &Mesh, curves: &'a CurveSet) -> Result<Self, MappingError> {
        Ok(Self::new(curves.get(rec.curve_id)?, rec.xi1, rec.xi2, mesh.nodes()[rec.nodes[2]]))
    }

    /// Curve parameter of the ray through `p`.
    fn theta(&self, p: ReferencePoint) -> f64 {
        let t = (p.s * self.xi1 + p.r * self.xi2) / (p.s + p.r);
        // keep round-off from leaving the segment
        t.clamp(self.xi1.min(self.xi2), self.xi1.max(self.xi2))
    }

    pub fn map(&self, p: ReferencePoint) -> Result<Vec2, MappingError> {
        let sr = p.s + p.r;
        if sr == 0.0 {
            return Ok(self.x3);
        }
        let c = self.curve.evaluate(self.theta(p))?;
        Ok(vec2::add(vec2::scale(self.x3, 1.0 - sr), vec2::scale(c, sr)))
    }

    /// Jacobian `d Phi / d(s, r)`; undefined at the interior vertex.
    pub fn jacobian(&self, p: ReferencePoint) -> Result<Mat2, MappingError> {
        let sr = p.s + p.r;
        if !(sr > 0.0) {
            return Err(MappingError::Singular(0.0));
        }
        let d = self.curve.derivatives(self.theta(p), 1)?;
        let (c, dc) = (d[0], d[1]);
        let fs = p.r * (self.xi1 - self.xi2) / sr;
        let fr = p.s * (self.xi2 - self.xi1) / sr;
        let mut j = [[0.0; 2]; 2];
        for i in 0..2 {
            j[i][0] = -self.x3[i] + c[i] + dc[i] * fs;
            j[i][1] = -self.x3[i] + c[i] + dc[i] * fr;
        }
        Ok(j)
    }

    /// Reference point on the curved edge for curve parameter `xi`.
    pub fn edge_point(&self, xi: f64) -> ReferencePoint {
        let r = (xi - self.xi1) / (self.xi2 - self.xi1);
        ReferencePoint::new(1.0 - r, r)
    }
}

/// Quadrature data of one spatial element, in physical space.
#[derive(Debug, Clone)]
pub struct ElementQuadrature {
    /// Mesh triangle index.
    pub triangle: usize,
    /// Global node ids in shape-function order.
    pub nodes: [usize; 3],
    pub curved: bool,
    /// Physical weights (reference weight times |det J|).
    pub weights: Vec<f64>,
    pub shape: Vec<[f64; 3]>,
    pub grads: Vec<[[f64; 2]; 3]>,
    pub points: Vec<Vec2>,
    /// Element area (exact for curved elements up to quadrature error).
    pub area: f64,
    /// Equilateral-equivalent size used by the stabilization.
    pub h: f64,
}

impl ElementQuadrature {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }
}

/// Quadrature settings for the spatial elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureOptions {
    pub standard_order: usize,
    pub nefem_points: usize,
    pub edge_points: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { standard_order: 3, nefem_points: 5, edge_points: 5 }
    }
}

pub fn straight_element(
    mesh: &Mesh,
    t: usize,
    nodes: [usize; 3],
    rule: &QuadratureRule,
) -> Result<ElementQuadrature, MappingError> {
    let x = nodes.map(|n| mesh.nodes()[n]);
    let j = affine_jacobian(&x);
    let det = det2(&j);
    if !(det > 0.0) {
        return Err(MappingError::Tangled { element: t, det });
    }
    let g = physical_gradients(&j)?;
    let weights: Vec<f64> = rule.weights.iter().map(|w| w * det).collect();
    let area = 0.5 * det;
    Ok(ElementQuadrature {
        triangle: t,
        nodes,
        curved: false,
        shape: rule.points.iter().map(|&p| shape_functions(p)).collect(),
        grads: vec![g; rule.len()],
        points: rule.points.iter().map(|&p| affine_map(&x, p)).collect(),
        weights,
        area,
        h: equilateral_size(area),
    })
}

pub fn curved_element(
    tri: &CurvedTriangle,
    t: usize,
    nodes: [usize; 3],
    rule: &QuadratureRule,
) -> Result<ElementQuadrature, MappingError> {
    let n = rule.len();
    let mut q = ElementQuadrature {
        triangle: t,
        nodes,
        curved: true,
        weights: Vec::with_capacity(n),
        shape: Vec::with_capacity(n),
        grads: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        area: 0.0,
        h: 0.0,
    };
    for (p, w) in rule.iter() {
        let j = tri.jacobian(p)?;
        let det = det2(&j);
        if !(det > 0.0) {
            return Err(MappingError::Tangled { element: t, det });
        }
        q.weights.push(w * det);
        q.shape.push(shape_functions(p));
        q.grads.push(physical_gradients(&j)?);
        q.points.push(tri.map(p)?);
        q.area += w * det;
    }
    q.h = equilateral_size(q.area);
    Ok(q)
}

fn equilateral_size(area: f64) -> f64 {
    (4.0 * area / 3f64.sqrt()).sqrt()
}

/// Quadrature for every mesh element. Triangles listed in `records` use the
/// curved map (pass an empty slice for a straight-sided discretization).
pub fn build_quadrature(
    mesh: &Mesh,
    records: &[NefemElementRecord],
    curves: &CurveSet,
    opts: &QuadratureOptions,
) -> Result<Vec<ElementQuadrature>, MappingError> {
    let standard = standard_quadrature(opts.standard_order)?;
    let nefem = nefem_quadrature(opts.nefem_points)?;
    let by_triangle: BTreeMap<usize, &NefemElementRecord> = records.iter().map(|r| (r.triangle, r)).collect();
    let mut out = Vec::with_capacity(mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        match by_triangle.get(&t) {
            Some(rec) => {
                let ct = CurvedTriangle::from_record(rec, mesh, curves)?;
                out.push(curved_element(&ct, t, rec.nodes, &nefem)?);
            }
            None => out.push(straight_element(mesh, t, *tri, &standard)?),
        }
    }
    Ok(out)
}

/// Quadrature point on a wall boundary edge.
#[derive(Debug, Clone, Copy)]
pub struct WallPoint {
    pub x: Vec2,
    /// Unit normal pointing out of the fluid.
    pub normal: Vec2,
    /// Physical line weight.
    pub weight: f64,
    /// Owning element, shape functions and their gradients at the point.
    pub triangle: usize,
    pub nodes: [usize; 3],
    pub shape: [f64; 3],
    pub grads: [[f64; 2]; 3],
}

/// Line quadrature over all boundary edges with one of `tags`. With `curved`
/// set, edges in `records` are integrated on the NURBS (curve normal, curve
/// arc length); otherwise every edge is treated as a straight segment.
pub fn wall_quadrature(
    mesh: &Mesh,
    records: &[NefemElementRecord],
    curves: &CurveSet,
    tags: &[u32],
    n_points: usize,
) -> Result<Vec<WallPoint>, MappingError> {
    let (gx, gw) = gauss_legendre(n_points.max(1));
    let by_triangle: BTreeMap<usize, &NefemElementRecord> = records.iter().map(|r| (r.triangle, r)).collect();
    let mut out = Vec::new();
    for (i, be) in mesh.boundary_edges().iter().enumerate() {
        if !tags.contains(&be.tag) {
            continue;
        }
        let (t, _) = mesh.boundary_owner(i);
        match by_triangle.get(&t) {
            Some(rec) => {
                let ct = CurvedTriangle::from_record(rec, mesh, curves)?;
                let half = 0.5 * (rec.xi2 - rec.xi1);
                let mid = 0.5 * (rec.xi2 + rec.xi1);
                for (&g, &w) in gx.iter().zip(&gw) {
                    let xi = mid + half * g;
                    let d = ct.curve.derivatives(xi, 1)?;
                    let p = ct.edge_point(xi);
                    let j = ct.jacobian(p)?;
                    out.push(WallPoint {
                        x: d[0],
                        normal: ct.curve.outward_normal(xi)?,
                        weight: w * half.abs() * vec2::norm(d[1]),
                        triangle: t,
                        nodes: rec.nodes,
                        shape: shape_functions(p),
                        grads: physical_gradients(&j)?,
                    });
                }
            }
            None => {
                let tri = mesh.triangles()[t];
                // reorder so the wall edge is (node 1, node 2)
                let k = tri.iter().position(|&n| n == be.a).expect("edge belongs to owner");
                let nodes = [tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]];
                debug_assert_eq!(nodes[1], be.b);
                let x = nodes.map(|n| mesh.nodes()[n]);
                let grads = physical_gradients(&affine_jacobian(&x))?;
                let edge = vec2::sub(x[1], x[0]);
                let len = vec2::norm(edge);
                let normal = vec2::scale(vec2::rotate_cw(edge), 1.0 / len);
                for (&g, &w) in gx.iter().zip(&gw) {
                    let r = 0.5 * (g + 1.0);
                    let p = ReferencePoint::new(1.0 - r, r);
                    out.push(WallPoint {
                        x: affine_map(&x, p),
                        normal,
                        weight: 0.5 * w * len,
                        triangle: t,
                        nodes,
                        shape: shape_functions(p),
                        grads,
                    });
                }
            }
        }
    }
    Ok(out)
}
