//! Additive Schwarz preconditioners `B^-1 = sum_i R_i^T A_i^-1 R_i`.
//!
//! * [`build_diagonal`]: one scalar subspace per dof.
//! * [`build_coarse_plus_patch`] (`B`): exact solve on the hat functions plus
//!   exact vertex-patch blocks.
//! * [`build_b2`]: the coarse solve replaced by local multilevel diagonal
//!   scaling ([`build_lmld`]) over a NVB hierarchy.
//! * [`build_b3`]: as `B2`, but every patch block is replaced by the scaled,
//!   pulled-back hypersingular block of the regular polygon with the same
//!   valence, so only one dense factor per valence is stored.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::assembly::{assemble_reference_patch, QuadratureOrders};
use crate::error::{Error, Result};
use crate::mesh::{
    classify_reference_patch, reference_patch_diameter, vertex_patches, MeshHierarchy, Patch,
    SurfaceMesh,
};
use crate::operator::SymmetricOperator;
use crate::ref_element::{num_cell, permutation_transform, VertexPermutation};
use crate::space::{check_coverage, patch_dofs, DofMap};

type Factor = Cholesky<f64, Dyn>;

fn factorize(a: DMatrix<f64>, what: impl FnOnce() -> String) -> Result<Factor> {
    Cholesky::new(a).ok_or_else(|| Error::NotPositiveDefinite(what()))
}

fn factor_bytes(n: usize) -> usize {
    n * (n + 1) / 2 * std::mem::size_of::<f64>()
}

/// Pullback of a patch onto its reference polygon, applied matrix-free:
/// `u_i o F_z = sum_j T[i, j] u_hat_j` with `T` made of the identity on the
/// center hat, signs on the spokes and one interior transform per cell.
#[derive(Debug, Clone)]
pub struct PatchTransform {
    spoke_signs: Vec<f64>,
    /// Local index of the center in each patch triangle.
    rotation: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum LocalSolver {
    Dense(Factor),
    /// Reciprocal of the local scalar.
    Scalar(f64),
    /// `scale * T D_ref^-1 T^T` with the shared factor `shared[factor]`.
    Reference {
        factor: usize,
        scale: f64,
        transform: PatchTransform,
    },
}

#[derive(Debug, Clone)]
pub enum Prolongation {
    /// `R_i^T` injects into these dofs.
    Indices(Vec<usize>),
    /// Rank-one: `R_i^T = v` with `v` stored sparsely.
    Vector(Vec<(usize, f64)>),
}

#[derive(Debug, Clone)]
pub struct Subspace {
    pub prolongation: Prolongation,
    pub solver: LocalSolver,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreconditionerStats {
    pub subspaces: usize,
    /// Distinct dense factors held in memory.
    pub dense_factors: usize,
    /// Lower triangles of dense factors plus stored scalars.
    pub stored_factor_bytes: usize,
    pub bytes_per_dof: f64,
}

#[derive(Debug, Clone)]
pub struct AdditiveSchwarzPreconditioner {
    pub name: String,
    pub dim: usize,
    pub subspaces: Vec<Subspace>,
    shared: Vec<Factor>,
    /// Interior transforms for rotations by 0, 1, 2 (B3 only).
    interior: Vec<DMatrix<f64>>,
    degree: usize,
}

impl AdditiveSchwarzPreconditioner {
    fn new(name: &str, dim: usize, subspaces: Vec<Subspace>) -> Self {
        Self {
            name: name.to_string(),
            dim,
            subspaces,
            shared: Vec::new(),
            interior: Vec::new(),
            degree: 1,
        }
    }

    /// `B^-1 r`.
    pub fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        assert_eq!(r.len(), self.dim, "residual length");
        self.subspaces
            .par_iter()
            .fold(
                || DVector::zeros(self.dim),
                |mut acc, s| {
                    self.apply_subspace(s, r, &mut acc);
                    acc
                },
            )
            .reduce(|| DVector::zeros(self.dim), |a, b| a + b)
    }

    fn apply_subspace(&self, s: &Subspace, r: &DVector<f64>, out: &mut DVector<f64>) {
        match &s.prolongation {
            Prolongation::Vector(v) => {
                let LocalSolver::Scalar(inv) = s.solver else {
                    unreachable!("rank-one subspaces carry scalar solvers")
                };
                let c = inv * v.iter().map(|&(i, x)| x * r[i]).sum::<f64>();
                for &(i, x) in v {
                    out[i] += c * x;
                }
            }
            Prolongation::Indices(idx) => {
                let local = DVector::from_iterator(idx.len(), idx.iter().map(|&i| r[i]));
                let sol = match &s.solver {
                    LocalSolver::Dense(f) => f.solve(&local),
                    LocalSolver::Scalar(inv) => local * *inv,
                    LocalSolver::Reference {
                        factor,
                        scale,
                        transform,
                    } => {
                        let w = self.transform_apply(transform, &local, true);
                        let y = self.shared[*factor].solve(&w);
                        self.transform_apply(transform, &y, false) * *scale
                    }
                };
                for (k, &i) in idx.iter().enumerate() {
                    out[i] += sol[k];
                }
            }
        }
    }

    /// `T x` or `T^T x` in patch dof order (center, spokes, cells).
    fn transform_apply(&self, t: &PatchTransform, x: &DVector<f64>, transpose: bool) -> DVector<f64> {
        let mut y = x.clone();
        let ns = t.spoke_signs.len();
        for k in 0..ns {
            y[1 + k] *= t.spoke_signs[k];
        }
        let nc = num_cell(self.degree);
        if nc > 0 {
            for (k, &c) in t.rotation.iter().enumerate() {
                let off = 1 + ns + k * nc;
                let block = x.rows(off, nc);
                let m = &self.interior[c];
                let v = if transpose { m.tr_mul(&block) } else { m * block };
                y.rows_mut(off, nc).copy_from(&v);
            }
        }
        y
    }

    pub fn stats(&self) -> PreconditionerStats {
        let mut dense_factors = self.shared.len();
        let mut bytes: usize = self.shared.iter().map(|f| factor_bytes(f.l_dirty().nrows())).sum();
        for s in &self.subspaces {
            match &s.solver {
                LocalSolver::Dense(f) => {
                    dense_factors += 1;
                    bytes += factor_bytes(f.l_dirty().nrows());
                }
                LocalSolver::Scalar(_) => bytes += std::mem::size_of::<f64>(),
                LocalSolver::Reference { .. } => {}
            }
        }
        PreconditionerStats {
            subspaces: self.subspaces.len(),
            dense_factors,
            stored_factor_bytes: bytes,
            bytes_per_dof: bytes as f64 / self.dim as f64,
        }
    }

    /// Dense `A_i^-1` of an index subspace in its local dof order.
    pub fn local_inverse(&self, i: usize) -> Option<DMatrix<f64>> {
        let s = &self.subspaces[i];
        let Prolongation::Indices(idx) = &s.prolongation else {
            return None;
        };
        let n = idx.len();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(self.dim);
            e[idx[j]] = 1.0;
            let mut col = DVector::zeros(self.dim);
            self.apply_subspace(s, &e, &mut col);
            for (k, &g) in idx.iter().enumerate() {
                out[(k, j)] = col[g];
            }
        }
        Some(out)
    }

    /// Dense `B^-1`, column by column.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            let mut e = DVector::zeros(self.dim);
            e[j] = 1.0;
            out.set_column(j, &self.apply(&e));
        }
        out
    }
}

pub fn build_diagonal(a: &DMatrix<f64>) -> Result<AdditiveSchwarzPreconditioner> {
    let subspaces = (0..a.nrows())
        .map(|i| {
            let d = a[(i, i)];
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite(format!("diagonal entry {i} is {d}")));
            }
            Ok(Subspace {
                prolongation: Prolongation::Indices(vec![i]),
                solver: LocalSolver::Scalar(1.0 / d),
            })
        })
        .collect::<Result<_>>()?;
    Ok(AdditiveSchwarzPreconditioner::new("diag", a.nrows(), subspaces))
}

fn vertex_dofs(dofs: &DofMap) -> Vec<usize> {
    dofs.vertex_dof.iter().flatten().copied().collect()
}

fn exact_patch_subspaces(op: &SymmetricOperator, dofs: &DofMap, patches: &[Patch]) -> Result<Vec<Subspace>> {
    patches
        .par_iter()
        .map(|patch| {
            let idx = patch_dofs(dofs, patch);
            let f = factorize(op.restrict(&idx), || format!("patch block of vertex {}", patch.center))?;
            Ok(Subspace {
                prolongation: Prolongation::Indices(idx),
                solver: LocalSolver::Dense(f),
            })
        })
        .collect()
}

fn patches_for(mesh: &SurfaceMesh, dofs: &DofMap) -> Result<Vec<Patch>> {
    let patches = vertex_patches(mesh)?;
    check_coverage(dofs, &patches)?;
    Ok(patches)
}

/// `B`: exact coarse solve on all hat functions plus exact patch blocks. For
/// `p = 1` the patch spaces coincide with single hats and are omitted.
pub fn build_coarse_plus_patch(
    op: &SymmetricOperator,
    mesh: &SurfaceMesh,
    dofs: &DofMap,
) -> Result<AdditiveSchwarzPreconditioner> {
    check_dims(op, dofs)?;
    let coarse = vertex_dofs(dofs);
    let mut subspaces = vec![Subspace {
        solver: LocalSolver::Dense(factorize(op.restrict(&coarse), || "coarse block".into())?),
        prolongation: Prolongation::Indices(coarse),
    }];
    if dofs.degree > 1 {
        let patches = patches_for(mesh, dofs)?;
        subspaces.extend(exact_patch_subspaces(op, dofs, &patches)?);
    }
    Ok(AdditiveSchwarzPreconditioner::new("B", dofs.len(), subspaces))
}

fn check_dims(op: &SymmetricOperator, dofs: &DofMap) -> Result<()> {
    if op.dim() != dofs.len() {
        return Err(Error::DimensionMismatch {
            expected: dofs.len(),
            got: op.dim(),
        });
    }
    Ok(())
}

/// Local multilevel diagonal scaling on the hat functions of the finest mesh
/// of `hierarchy`. Hats are expressed through `vertex_dof` of `dofs` (any
/// degree), and the scalars are `v^T A v` with `A = op`.
pub fn build_lmld(
    hierarchy: &MeshHierarchy,
    op: &SymmetricOperator,
    dofs: &DofMap,
) -> Result<AdditiveSchwarzPreconditioner> {
    check_dims(op, dofs)?;
    let fine = hierarchy.finest();
    if dofs.vertex_dof.len() != fine.num_vertices() {
        return Err(Error::Hierarchy("dof map does not live on the finest mesh".into()));
    }
    if hierarchy.tilde.len() != hierarchy.num_levels() {
        return Err(Error::Hierarchy("missing multilevel index sets".into()));
    }
    let mut hats = Vec::new();
    for (level, tilde) in hierarchy.tilde.iter().enumerate() {
        let nv = hierarchy.levels[level].num_vertices();
        for &z in tilde {
            let mut e = vec![0.0; nv];
            e[z] = 1.0;
            let values = hierarchy.prolong_nodal(level, &e)?;
            let v: Vec<(usize, f64)> = values
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(w, &x)| {
                    dofs.vertex_dof[w]
                        .map(|d| (d, x))
                        .ok_or_else(|| Error::Hierarchy(format!("hat of level {level} vertex {z} touches the boundary")))
                })
                .collect::<Result<_>>()?;
            hats.push(v);
        }
    }
    let a = &op.matrix;
    let subspaces = hats
        .into_par_iter()
        .map(|v| {
            let s: f64 = v
                .iter()
                .map(|&(i, x)| x * v.iter().map(|&(j, y)| a[(i, j)] * y).sum::<f64>())
                .sum();
            if !(s > 0.0) {
                return Err(Error::NotPositiveDefinite("multilevel hat energy".into()));
            }
            Ok(Subspace {
                prolongation: Prolongation::Vector(v),
                solver: LocalSolver::Scalar(1.0 / s),
            })
        })
        .collect::<Result<_>>()?;
    Ok(AdditiveSchwarzPreconditioner::new("LMLD", dofs.len(), subspaces))
}

/// `B2`: LMLD on the hats plus exact patch blocks.
pub fn build_b2(
    op: &SymmetricOperator,
    hierarchy: &MeshHierarchy,
    dofs: &DofMap,
) -> Result<AdditiveSchwarzPreconditioner> {
    let mut b = build_lmld(hierarchy, op, dofs)?;
    if dofs.degree > 1 {
        let patches = patches_for(hierarchy.finest(), dofs)?;
        b.subspaces.extend(exact_patch_subspaces(op, dofs, &patches)?);
    }
    b.name = "B2".into();
    Ok(b)
}

/// Cholesky factors of reference-polygon blocks, keyed by (valence, degree).
#[derive(Debug, Default)]
pub struct ReferenceBlockCache {
    pub orders: QuadratureOrders,
    blocks: BTreeMap<(usize, usize), Factor>,
}

impl ReferenceBlockCache {
    pub fn new(orders: QuadratureOrders) -> Self {
        Self {
            orders,
            blocks: BTreeMap::new(),
        }
    }

    pub fn get(&mut self, valence: usize, p: usize) -> Result<&Factor> {
        if !self.blocks.contains_key(&(valence, p)) {
            let block = assemble_reference_patch(valence, p, self.orders)?;
            let f = factorize(block, || format!("reference block for valence {valence}"))?;
            self.blocks.insert((valence, p), f);
        }
        Ok(&self.blocks[&(valence, p)])
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// `B3`: LMLD on the hats plus reference-polygon patch solves scaled by
/// `diam(omega_ref) / h_z`.
pub fn build_b3(
    op: &SymmetricOperator,
    hierarchy: &MeshHierarchy,
    dofs: &DofMap,
    cache: &mut ReferenceBlockCache,
) -> Result<AdditiveSchwarzPreconditioner> {
    let mut b = build_lmld(hierarchy, op, dofs)?;
    b.name = "B3".into();
    let p = dofs.degree;
    b.degree = p;
    if p == 1 {
        return Ok(b);
    }
    let mesh = hierarchy.finest();
    let patches = patches_for(mesh, dofs)?;
    b.interior = (0..3)
        .map(|c| {
            let q = VertexPermutation::new([0, 1, 2].map(|m| (m + 3 - c) % 3));
            permutation_transform(q, p).map(|t| t.interior)
        })
        .collect::<Result<_>>()?;
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    for patch in &patches {
        let (key, pullback) = classify_reference_patch(mesh, patch);
        let n = key.valence;
        let factor = match slot.get(&n) {
            Some(&i) => i,
            None => {
                b.shared.push(cache.get(n, p)?.clone());
                slot.insert(n, b.shared.len() - 1);
                b.shared.len() - 1
            }
        };
        let spoke_signs = pullback
            .spoke_reversed
            .iter()
            .flat_map(|&rev| (0..p - 1).map(move |i| if rev && i % 2 == 1 { -1.0 } else { 1.0 }))
            .collect();
        let c_z = patch.diameter / reference_patch_diameter(n);
        b.subspaces.push(Subspace {
            prolongation: Prolongation::Indices(patch_dofs(dofs, patch)),
            solver: LocalSolver::Reference {
                factor,
                scale: 1.0 / c_z,
                transform: PatchTransform {
                    spoke_signs,
                    rotation: pullback.rotation,
                },
            },
        });
    }
    Ok(b)
}

/// Storage of `B2` (exact patch blocks) and `B3` (one reference block per
/// valence), both with LMLD on the hats, computed from the mesh structure
/// alone; agrees with [`AdditiveSchwarzPreconditioner::stats`] of the built
/// preconditioners.
pub fn storage_estimate(
    hierarchy: &MeshHierarchy,
    dofs: &DofMap,
) -> Result<(PreconditionerStats, PreconditionerStats)> {
    let p = dofs.degree;
    let scalars: usize = hierarchy.tilde.iter().map(Vec::len).sum();
    let scalar_bytes = scalars * std::mem::size_of::<f64>();
    let (mut exact, mut valences, mut npatches) = (scalar_bytes, BTreeMap::new(), 0);
    if p > 1 {
        let patches = patches_for(hierarchy.finest(), dofs)?;
        npatches = patches.len();
        for patch in &patches {
            let n = patch.valence();
            exact += factor_bytes(patch_dofs(dofs, patch).len());
            valences.insert(n, factor_bytes(1 + n * (p - 1) + n * num_cell(p)));
        }
    }
    let reference = scalar_bytes + valences.values().sum::<usize>();
    let stats = |factors, bytes| PreconditionerStats {
        subspaces: scalars + npatches,
        dense_factors: factors,
        stored_factor_bytes: bytes,
        bytes_per_dof: bytes as f64 / dofs.len() as f64,
    };
    Ok((stats(npatches, exact), stats(valences.len(), reference)))
}
