//! Global numbering of the conforming hp space on a surface mesh.
//!
//! Dofs are numbered vertices first, then edges (sorted by `(low, high)`
//! vertex id, `p - 1` consecutive dofs each), then cells (`(p-1)(p-2)/2` per
//! triangle, in triangle order). On open surfaces boundary vertices and
//! boundary edges carry no dofs. Each edge's intrinsic direction runs from
//! the lower to the higher vertex id; an element traversing it the other way
//! multiplies edge function `i` by `(-1)^i`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{edge_key, Patch, SurfaceKind, SurfaceMesh};
use crate::ref_element::{cell_offset, edge_index, num_basis, num_cell};

#[derive(Debug, Clone)]
pub struct DofMap {
    pub degree: usize,
    /// Dof of each vertex's hat function, `None` on the boundary of a screen.
    pub vertex_dof: Vec<Option<usize>>,
    /// Sorted edge list.
    pub edges: Vec<(usize, usize)>,
    edge_lookup: HashMap<(usize, usize), usize>,
    /// First dof of each edge (followed by `p - 2` more), `None` on the boundary.
    pub edge_dof: Vec<Option<usize>>,
    /// First cell dof of each triangle.
    pub cell_dof: Vec<usize>,
    pub num_vertex_dofs: usize,
    pub num_edge_dofs: usize,
    len: usize,
    triangles: Vec<[usize; 3]>,
}

/// Global dof of a local basis function together with its orientation sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDof {
    pub global: Option<usize>,
    pub sign: f64,
}

pub fn build_dof_map(mesh: &SurfaceMesh, p: usize) -> Result<DofMap> {
    if p < 1 {
        return Err(Error::InvalidDegree { min: 1, got: p });
    }
    let mut next = 0;
    let vertex_dof: Vec<Option<usize>> = (0..mesh.num_vertices())
        .map(|v| {
            mesh.is_free(v).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    let num_vertex_dofs = next;
    let edge_map = mesh.edges();
    let edges: Vec<(usize, usize)> = edge_map.keys().copied().collect();
    let edge_lookup = edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let edge_dof: Vec<Option<usize>> = edge_map
        .values()
        .map(|ts| {
            let free = p >= 2 && (mesh.kind == SurfaceKind::Closed || ts.len() == 2);
            free.then(|| {
                next += p - 1;
                next - (p - 1)
            })
        })
        .collect();
    let num_edge_dofs = next - num_vertex_dofs;
    let nc = num_cell(p);
    let cell_dof = (0..mesh.num_triangles())
        .map(|_| {
            next += nc;
            next - nc
        })
        .collect();
    Ok(DofMap {
        degree: p,
        vertex_dof,
        edges,
        edge_lookup,
        edge_dof,
        cell_dof,
        num_vertex_dofs,
        num_edge_dofs,
        len: next,
        triangles: mesh.triangles.iter().map(|t| t.v).collect(),
    })
}

impl DofMap {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&edge_key(a, b)).copied()
    }

    /// Dofs of edge `(a, b)` in the order of the edge functions.
    pub fn edge_dofs(&self, a: usize, b: usize) -> Vec<usize> {
        match self.edge_id(a, b).and_then(|e| self.edge_dof[e]) {
            Some(first) => (first..first + self.degree - 1).collect(),
            None => Vec::new(),
        }
    }

    pub fn cell_dofs(&self, t: usize) -> Vec<usize> {
        let first = self.cell_dof[t];
        (first..first + num_cell(self.degree)).collect()
    }

    /// Local basis index -> (global dof, sign), in reference element order.
    pub fn element_dofs(&self, t: usize) -> Vec<LocalDof> {
        let p = self.degree;
        let v = self.triangles[t];
        let mut out = vec![
            LocalDof {
                global: None,
                sign: 1.0
            };
            num_basis(p)
        ];
        for m in 0..3 {
            out[m].global = self.vertex_dof[v[m]];
        }
        if p >= 2 {
            for m in 0..3 {
                let (a, b) = (v[m], v[(m + 1) % 3]);
                let first = self.edge_id(a, b).and_then(|e| self.edge_dof[e]);
                for i in 0..p - 1 {
                    let k = edge_index(p, m, i);
                    out[k].global = first.map(|f| f + i);
                    if a > b && i % 2 == 1 {
                        out[k].sign = -1.0;
                    }
                }
            }
        }
        let off = cell_offset(p);
        for c in 0..num_cell(p) {
            out[off + c].global = Some(self.cell_dof[t] + c);
        }
        out
    }

    /// Expected dimension `V_free + E_free (p - 1) + T (p-1)(p-2)/2`.
    pub fn dimension_formula(mesh: &SurfaceMesh, p: usize) -> usize {
        let v = (0..mesh.num_vertices()).filter(|&v| mesh.is_free(v)).count();
        let e = mesh
            .edges()
            .values()
            .filter(|ts| mesh.kind == SurfaceKind::Closed || ts.len() == 2)
            .count();
        v + e * (p - 1) + mesh.num_triangles() * num_cell(p)
    }
}

/// Injection of the lowest order space into `S^p`: entry `k` is the `S^p` dof
/// of the `k`-th hat function. Both maps must live on the same mesh.
pub fn p1_embedding(dofs_p: &DofMap, dofs_1: &DofMap) -> Result<Vec<usize>> {
    if dofs_p.vertex_dof.len() != dofs_1.vertex_dof.len() {
        return Err(Error::DimensionMismatch {
            expected: dofs_1.vertex_dof.len(),
            got: dofs_p.vertex_dof.len(),
        });
    }
    let mut out = vec![0; dofs_1.len()];
    for (a, b) in dofs_1.vertex_dof.iter().zip(&dofs_p.vertex_dof) {
        if let (Some(a), Some(b)) = (a, b) {
            out[*a] = *b;
        }
    }
    Ok(out)
}

/// Dofs whose basis functions are supported in the closed patch: the center
/// hat, the spoke edges and the cells, in that order with spokes and cells
/// following the cyclic order of the patch.
pub fn patch_dofs(dofs: &DofMap, patch: &Patch) -> Vec<usize> {
    let mut out = Vec::new();
    out.extend(dofs.vertex_dof[patch.center]);
    for &r in &patch.rim {
        out.extend(dofs.edge_dofs(patch.center, r));
    }
    for &t in &patch.triangles {
        out.extend(dofs.cell_dofs(t));
    }
    out
}

/// Checks that hats plus patch spaces reach every dof; reports the rest.
pub fn check_coverage(dofs: &DofMap, patches: &[Patch]) -> Result<()> {
    let mut covered = vec![false; dofs.len()];
    for d in dofs.vertex_dof.iter().flatten() {
        covered[*d] = true;
    }
    for patch in patches {
        for d in patch_dofs(dofs, patch) {
            covered[d] = true;
        }
    }
    let missing: Vec<usize> = (0..dofs.len()).filter(|&d| !covered[d]).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::CoverageFailure(missing))
    }
}
