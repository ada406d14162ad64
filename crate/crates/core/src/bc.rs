//! Boundary conditions and their reduction to per-node constraints.
//!
//! All conditions are imposed strongly on both time layers of a slab.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::mesh::{Mesh, NefemElementRecord};
use crate::nurbs::{CurveSet, GeometryError};
use crate::physics::State;
use crate::vec2::{self, Vec2};

#[derive(Debug, Error)]
pub enum BcError {
    #[error("unknown boundary condition kind '{0}' (expected inflow, farfield, outflow, slip or noslip)")]
    UnknownKind(String),
    #[error("boundary tag {0} has no boundary condition")]
    MissingTag(u32),
    #[error("conflicting boundary conditions at node {node}: {first} and {second}")]
    Conflict { node: usize, first: BcKind, second: BcKind },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BcKind {
    /// All four components fixed to the free stream.
    Inflow,
    /// Same constraint as `Inflow`; used for far-field circles.
    Farfield,
    /// No constraint.
    Outflow,
    /// Zero normal momentum.
    Slip,
    /// Zero momentum, adiabatic (natural energy condition).
    NoSlip,
}

impl fmt::Display for BcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BcKind::Inflow => "inflow",
            BcKind::Farfield => "farfield",
            BcKind::Outflow => "outflow",
            BcKind::Slip => "slip",
            BcKind::NoSlip => "noslip",
        };
        f.write_str(s)
    }
}

impl FromStr for BcKind {
    type Err = BcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inflow" => Ok(BcKind::Inflow),
            "farfield" => Ok(BcKind::Farfield),
            "outflow" => Ok(BcKind::Outflow),
            "slip" => Ok(BcKind::Slip),
            "noslip" => Ok(BcKind::NoSlip),
            _ => Err(BcError::UnknownKind(s.to_string())),
        }
    }
}

/// Constraint attached to one mesh node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeConstraint {
    /// Components with `mask[c]` set are fixed to `values[c]`.
    Fixed { mask: [bool; 4], values: State },
    /// `normal . (rho u, rho v) = 0`.
    Slip { normal: Vec2 },
}

impl NodeConstraint {
    /// Projects a state onto the constraint set.
    pub fn enforce(&self, u: &mut State) {
        match self {
            NodeConstraint::Fixed { mask, values } => {
                for c in 0..4 {
                    if mask[c] {
                        u[c] = values[c];
                    }
                }
            }
            NodeConstraint::Slip { normal } => {
                let mn = u[1] * normal[0] + u[2] * normal[1];
                u[1] -= mn * normal[0];
                u[2] -= mn * normal[1];
            }
        }
    }
}

/// Sorted list of constrained nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraints {
    pub nodes: Vec<(usize, NodeConstraint)>,
}

impl Constraints {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, node: usize) -> Option<&NodeConstraint> {
        self.nodes.binary_search_by_key(&node, |(n, _)| *n).ok().map(|k| &self.nodes[k].1)
    }
}

/// Wall normals at nodes: NURBS normals at the node parameters when curved
/// records are given, otherwise averages of the adjacent straight edges.
fn node_normals(
    mesh: &Mesh,
    records: &[NefemElementRecord],
    curves: &CurveSet,
    tags: &[u32],
) -> Result<BTreeMap<usize, Vec2>, BcError> {
    let mut sum: BTreeMap<usize, Vec2> = BTreeMap::new();
    let by_triangle: BTreeMap<usize, &NefemElementRecord> = records.iter().map(|r| (r.triangle, r)).collect();
    for (i, be) in mesh.boundary_edges().iter().enumerate() {
        if !tags.contains(&be.tag) {
            continue;
        }
        let (t, _) = mesh.boundary_owner(i);
        let (na, nb) = match by_triangle.get(&t) {
            Some(rec) => {
                let c = curves.get(rec.curve_id)?;
                // record node order is (xi1 node, xi2 node, interior)
                let n1 = c.outward_normal(rec.xi1)?;
                let n2 = c.outward_normal(rec.xi2)?;
                if rec.nodes[0] == be.a {
                    (n1, n2)
                } else {
                    (n2, n1)
                }
            }
            None => {
                let p = mesh.nodes();
                let e = vec2::sub(p[be.b], p[be.a]);
                let n = vec2::scale(vec2::rotate_cw(e), 1.0 / vec2::norm(e));
                (n, n)
            }
        };
        for (node, n) in [(be.a, na), (be.b, nb)] {
            let s = sum.entry(node).or_insert([0.0, 0.0]);
            *s = vec2::add(*s, n);
        }
    }
    for n in sum.values_mut() {
        *n = vec2::scale(*n, 1.0 / vec2::norm(*n));
    }
    Ok(sum)
}

/// Reduces tag-level conditions to node constraints. A node touching an
/// inflow/far-field edge and an outflow edge is fixed; any other mix of
/// different constraining kinds is rejected.
pub fn build_constraints(
    mesh: &Mesh,
    records: &[NefemElementRecord],
    curves: &CurveSet,
    bcs: &BTreeMap<u32, BcKind>,
    free_stream: State,
) -> Result<Constraints, BcError> {
    let mut kinds: BTreeMap<usize, BcKind> = BTreeMap::new();
    let mut wall_tags = Vec::new();
    for be in mesh.boundary_edges() {
        let kind = *bcs.get(&be.tag).ok_or(BcError::MissingTag(be.tag))?;
        if matches!(kind, BcKind::Slip) && !wall_tags.contains(&be.tag) {
            wall_tags.push(be.tag);
        }
        if kind == BcKind::Outflow {
            continue;
        }
        for node in [be.a, be.b] {
            match kinds.get(&node) {
                None => {
                    kinds.insert(node, kind);
                }
                Some(&prev) => {
                    let fixed = |k: BcKind| matches!(k, BcKind::Inflow | BcKind::Farfield);
                    if prev != kind && !(fixed(prev) && fixed(kind)) {
                        return Err(BcError::Conflict { node, first: prev.min(kind), second: prev.max(kind) });
                    }
                }
            }
        }
    }
    let normals = if wall_tags.is_empty() { BTreeMap::new() } else { node_normals(mesh, records, curves, &wall_tags)? };
    let nodes = kinds
        .into_iter()
        .map(|(node, kind)| {
            let c = match kind {
                BcKind::Inflow | BcKind::Farfield => NodeConstraint::Fixed { mask: [true; 4], values: free_stream },
                BcKind::NoSlip => NodeConstraint::Fixed { mask: [false, true, true, false], values: [0.0; 4] },
                BcKind::Slip => NodeConstraint::Slip { normal: normals[&node] },
                BcKind::Outflow => unreachable!("outflow edges are skipped"),
            };
            (node, c)
        })
        .collect();
    Ok(Constraints { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{classify_elements, PROJECTION_TOLERANCE};
    use crate::meshgen::{cylinder_ogrid, rectangle, OGridSpec, DOWNSTREAM_TAG, UPSTREAM_TAG, WALL_TAG};

    const FS: State = [1.0, 1.0, 0.0, 1.1179];

    fn cylinder_bcs(wall: BcKind) -> BTreeMap<u32, BcKind> {
        BTreeMap::from([(WALL_TAG, wall), (UPSTREAM_TAG, BcKind::Inflow), (DOWNSTREAM_TAG, BcKind::Outflow)])
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("slip".parse::<BcKind>().unwrap(), BcKind::Slip);
        assert!("wall".parse::<BcKind>().is_err());
    }

    #[test]
    fn inflow_fixes_everything_outflow_nothing() {
        let case = cylinder_ogrid(&OGridSpec { n_wall: 16, n_radial: 4, r_outer: 3.0, stretch: 1.0 });
        let recs = classify_elements(&case.mesh, &case.curves, &case.wall_curves, PROJECTION_TOLERANCE).unwrap();
        let c = build_constraints(&case.mesh, &recs, &case.curves, &cylinder_bcs(BcKind::NoSlip), FS).unwrap();
        let mut n_in = 0;
        for be in case.mesh.boundary_edges() {
            match be.tag {
                UPSTREAM_TAG => {
                    n_in += 1;
                    assert_eq!(c.get(be.a), Some(&NodeConstraint::Fixed { mask: [true; 4], values: FS }));
                }
                WALL_TAG => assert!(matches!(c.get(be.a), Some(NodeConstraint::Fixed { mask: [false, true, true, false], .. }))),
                _ => {}
            }
        }
        assert!(n_in > 0);
        // interior outflow nodes are free
        let free = case.mesh.boundary_edges().iter().filter(|b| b.tag == DOWNSTREAM_TAG).filter(|b| c.get(b.a).is_none()).count();
        assert!(free > 0);
    }

    #[test]
    fn slip_normal_follows_the_circle() {
        let case = cylinder_ogrid(&OGridSpec { n_wall: 32, n_radial: 4, r_outer: 3.0, stretch: 1.0 });
        let recs = classify_elements(&case.mesh, &case.curves, &case.wall_curves, PROJECTION_TOLERANCE).unwrap();
        for curved in [true, false] {
            let r = if curved { recs.clone() } else { Vec::new() };
            let c = build_constraints(&case.mesh, &r, &case.curves, &cylinder_bcs(BcKind::Slip), FS).unwrap();
            for be in case.mesh.boundary_edges().iter().filter(|b| b.tag == WALL_TAG) {
                let x = case.mesh.nodes()[be.a];
                let theta = x[1].atan2(x[0]);
                let Some(NodeConstraint::Slip { normal }) = c.get(be.a) else { panic!("slip expected") };
                // the normal points into the cylinder: -(cos, sin)
                assert!((normal[0] + theta.cos()).abs() < 1e-12 && (normal[1] + theta.sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corner_conflict_is_reported() {
        let mesh = rectangle(2, 2, [0.0, 0.0], [1.0, 1.0]);
        let bcs = BTreeMap::from([(1, BcKind::Slip), (2, BcKind::Inflow), (3, BcKind::Outflow), (4, BcKind::Outflow)]);
        let err = build_constraints(&mesh, &[], &CurveSet::new(), &bcs, FS).unwrap_err();
        assert!(matches!(err, BcError::Conflict { node: 2, .. }), "{err}");
        let bcs = BTreeMap::from([(1, BcKind::Inflow), (2, BcKind::Farfield), (3, BcKind::Outflow)]);
        assert!(matches!(
            build_constraints(&mesh, &[], &CurveSet::new(), &bcs, FS),
            Err(BcError::MissingTag(4))
        ));
    }

    #[test]
    fn enforce_projects_states() {
        let mut u = [1.0, 3.0, 4.0, 9.0];
        NodeConstraint::Slip { normal: [0.6, 0.8] }.enforce(&mut u);
        assert!((u[1] * 0.6 + u[2] * 0.8).abs() < 1e-15);
        NodeConstraint::Fixed { mask: [false, true, true, false], values: [0.0; 4] }.enforce(&mut u);
        assert_eq!(u, [1.0, 0.0, 0.0, 9.0]);
    }
}
