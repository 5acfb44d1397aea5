//! Galerkin matrices on surface meshes: the stabilized hypersingular
//! operator, the surface mass matrix and the `H^1` stiffness matrix.
//!
//! The hypersingular form is evaluated through
//! `<D u, v> = 1/(4 pi) int int curl u(y) . curl v(x) / |x - y|`, so only the
//! weakly singular kernel `1/|x - y|` is ever integrated. Panel pairs sharing
//! a triangle, edge or vertex use the regularized rules of
//! [`crate::singular`] in a canonical vertex order; the result is mapped back
//! to the local basis with the vertex-permutation transforms of the
//! reference element.

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3x2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{reference_patch_mesh, vertex_patches, Point, SurfaceKind, SurfaceMesh};
use crate::operator::{OperatorKind, SymmetricOperator};
use crate::quadrature::TriangleRule;
use crate::ref_element::{
    mass_matrix, num_basis, permutation_transform, stiffness_components, Basis, VertexPermutation,
};
use crate::singular::{edge_adjacent_rule, identical_rule, vertex_adjacent_rule, PairRule};
use crate::space::{build_dof_map, patch_dofs, DofMap, LocalDof};

/// Rank-one stabilization `alpha^2 m m^T`, `m_i = <phi_i, 1>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationConfig {
    pub alpha: f64,
}

impl StabilizationConfig {
    /// The value used for closed surfaces unless configured otherwise.
    pub const CLOSED_DEFAULT: StabilizationConfig = StabilizationConfig { alpha: 0.2 };
    pub const NONE: StabilizationConfig = StabilizationConfig { alpha: 0.0 };
}

/// Gauss orders used by the hypersingular assembly. `extra` is added to
/// every order; the self-consistency check compares `extra = 0` with 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuadratureOrders {
    pub extra: usize,
}

impl QuadratureOrders {
    /// Directions in which the regularized integrand is polynomial.
    pub fn polynomial(&self, p: usize) -> usize {
        (p + 2).max(5) + self.extra
    }

    /// Directions carrying the (regularized) kernel.
    pub fn kernel(&self, p: usize) -> usize {
        (2 * p + 4).max(10) + self.extra
    }

    /// The edge-adjacent rule converges more slowly in its kernel directions
    /// than the identical and vertex rules.
    pub fn edge_kernel(&self, p: usize) -> usize {
        self.kernel(p) + 6
    }

    /// Points per direction of the collapsed tensor rule on each of two
    /// disjoint panels; `ratio` is centroid distance over the larger diameter.
    pub fn disjoint(&self, p: usize, ratio: f64) -> usize {
        let bonus = if ratio < 1.0 {
            8
        } else if ratio < 1.5 {
            6
        } else if ratio < 2.5 {
            4
        } else if ratio < 4.0 {
            2
        } else {
            0
        };
        (p + 2).max(6) + bonus + self.extra
    }
}

/// Per-element data for the curl representation.
#[derive(Debug, Clone)]
struct ElementGeometry {
    corners: [Point; 3],
    normal: Point,
    /// `2 |K|`, the Jacobian of the element map.
    jac: f64,
    centroid: Point,
    diameter: f64,
}

/// `curl u = M grad u_hat` for the map with Jacobian columns `j` and normal `n`.
fn curl_matrix(j: &Matrix3x2<f64>, n: &Point) -> Matrix3x2<f64> {
    let g: Matrix2<f64> = j.transpose() * j;
    let p = j * g.try_inverse().expect("non-degenerate element");
    Matrix3x2::from_columns(&[n.cross(&p.column(0).into_owned()), n.cross(&p.column(1).into_owned())])
}

struct PairTables {
    rule: PairRule,
    /// Gradient tables at the `x` and `y` points: `[d/dx, d/dy]`.
    gx: [DMatrix<f64>; 2],
    gy: [DMatrix<f64>; 2],
}

impl PairTables {
    fn new(basis: &Basis, rule: PairRule) -> Self {
        let (a, b) = basis.gradient_tables(&rule.x);
        let (c, d) = basis.gradient_tables(&rule.y);
        Self {
            rule,
            gx: [a, b],
            gy: [c, d],
        }
    }
}

struct TensorTables {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    g: [DMatrix<f64>; 2],
}

/// Element-pair integrator for the hypersingular form on one mesh.
pub struct HypersingularAssembler<'a> {
    mesh: &'a SurfaceMesh,
    p: usize,
    orders: QuadratureOrders,
    geometry: Vec<ElementGeometry>,
    transforms: Vec<(VertexPermutation, DMatrix<f64>)>,
    identical: PairTables,
    edge: PairTables,
    vertex: PairTables,
    /// Indexed by points per direction.
    tensor: Vec<Option<TensorTables>>,
}

impl<'a> HypersingularAssembler<'a> {
    pub fn new(mesh: &'a SurfaceMesh, p: usize, orders: QuadratureOrders) -> Result<Self> {
        let basis = Basis::new(p)?;
        let geometry = (0..mesh.num_triangles())
            .map(|t| ElementGeometry {
                corners: mesh.corners(t),
                normal: mesh.unit_normal(t),
                jac: 2.0 * mesh.area(t),
                centroid: mesh.centroid(t),
                diameter: mesh.diameter(t),
            })
            .collect();
        let transforms = VertexPermutation::all()
            .into_iter()
            .map(|q| permutation_transform(q, p).map(|t| (q, t.to_dense())))
            .collect::<Result<_>>()?;
        let (np, nk) = (orders.polynomial(p), orders.kernel(p));
        let max_tensor = orders.disjoint(p, 0.0);
        let tensor = (0..=max_tensor)
            .map(|n| {
                (n >= orders.disjoint(p, f64::INFINITY)).then(|| {
                    let rule = TriangleRule::collapsed(n);
                    let (a, b) = basis.gradient_tables(&rule.points);
                    TensorTables {
                        points: rule.points,
                        weights: rule.weights,
                        g: [a, b],
                    }
                })
            })
            .collect();
        Ok(Self {
            mesh,
            p,
            orders,
            geometry,
            transforms,
            identical: PairTables::new(&basis, identical_rule(np, nk)),
            edge: PairTables::new(&basis, edge_adjacent_rule(np, orders.edge_kernel(p))),
            vertex: PairTables::new(&basis, vertex_adjacent_rule(np, nk)),
            tensor,
        })
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    /// Transform for the canonical order `sigma` (canonical vertex `j` is
    /// local vertex `sigma[j]`): `phi_a o Q = sum_b T[a, b] phi_b`.
    fn transform(&self, sigma: [usize; 3]) -> &DMatrix<f64> {
        let mut perm = [0; 3];
        for (j, &s) in sigma.iter().enumerate() {
            perm[s] = j;
        }
        &self
            .transforms
            .iter()
            .find(|(q, _)| q.perm == perm)
            .expect("all permutations precomputed")
            .1
    }

    /// `(1/4pi) int_K int_K' curl phi_b(y) . curl phi_a(x) / |x - y|` with `a`
    /// running over the local basis of `t` and `b` over that of `s`.
    pub fn pair_matrix(&self, t: usize, s: usize) -> DMatrix<f64> {
        let vt = self.mesh.triangles[t].v;
        let vs = self.mesh.triangles[s].v;
        let shared: Vec<usize> = vt.iter().copied().filter(|v| vs.contains(v)).collect();
        let local = |v: &[usize; 3], g: usize| v.iter().position(|&w| w == g).expect("shared vertex");
        match shared.len() {
            3 => {
                let l = self.canonical_pair(&self.identical, t, [0, 1, 2], s, [0, 1, 2]);
                (&l + l.transpose()) * 0.5
            }
            2 => {
                let (a, b) = (shared[0], shared[1]);
                let third = |v: &[usize; 3]| (0..3).find(|&k| v[k] != a && v[k] != b).unwrap();
                let st = [local(&vt, a), local(&vt, b), third(&vt)];
                let ss = [local(&vs, a), local(&vs, b), third(&vs)];
                self.canonical_pair(&self.edge, t, st, s, ss)
            }
            1 => {
                let a = shared[0];
                let order = |v: &[usize; 3]| {
                    let k = local(v, a);
                    [k, (k + 1) % 3, (k + 2) % 3]
                };
                self.canonical_pair(&self.vertex, t, order(&vt), s, order(&vs))
            }
            _ => self.disjoint_pair(t, s),
        }
    }

    fn canonical_pair(
        &self,
        tables: &PairTables,
        t: usize,
        st: [usize; 3],
        s: usize,
        ss: [usize; 3],
    ) -> DMatrix<f64> {
        let (gt, gs) = (&self.geometry[t], &self.geometry[s]);
        let frame = |g: &ElementGeometry, o: [usize; 3]| {
            let a = g.corners[o[0]];
            let j = Matrix3x2::from_columns(&[g.corners[o[1]] - a, g.corners[o[2]] - a]);
            (a, j, curl_matrix(&j, &g.normal))
        };
        let (at, jt, mt) = frame(gt, st);
        let (as_, js, ms) = frame(gs, ss);
        let c = mt.transpose() * ms;
        let scale = gt.jac * gs.jac / (4.0 * std::f64::consts::PI);
        let rule = &tables.rule;
        let q = rule.len();
        let k: Vec<f64> = (0..q)
            .map(|i| {
                let x = at + jt * nalgebra::Vector2::new(rule.x[i][0], rule.x[i][1]);
                let y = as_ + js * nalgebra::Vector2::new(rule.y[i][0], rule.y[i][1]);
                scale * rule.w[i] / (x - y).norm()
            })
            .collect();
        let mut weighted = [tables.gy[0].clone(), tables.gy[1].clone()];
        for w in &mut weighted {
            for (i, mut col) in w.column_iter_mut().enumerate() {
                col *= k[i];
            }
        }
        let nb = num_basis(self.p);
        let mut lc = DMatrix::zeros(nb, nb);
        for a in 0..2 {
            let comb = &weighted[0] * c[(a, 0)] + &weighted[1] * c[(a, 1)];
            lc.gemm(1.0, &tables.gx[a], &comb.transpose(), 1.0);
        }
        let tt = self.transform(st);
        let ts = self.transform(ss);
        tt * lc * ts.transpose()
    }

    fn disjoint_pair(&self, t: usize, s: usize) -> DMatrix<f64> {
        let (gt, gs) = (&self.geometry[t], &self.geometry[s]);
        let ratio = (gt.centroid - gs.centroid).norm() / gt.diameter.max(gs.diameter);
        let n = self.orders.disjoint(self.p, ratio);
        let tab = self.tensor[n].as_ref().expect("tensor tables precomputed");
        let map = |g: &ElementGeometry, pt: &[f64; 2]| {
            g.corners[0] + (g.corners[1] - g.corners[0]) * pt[0] + (g.corners[2] - g.corners[0]) * pt[1]
        };
        let xs: Vec<Point> = tab.points.iter().map(|pt| map(gt, pt)).collect();
        let ys: Vec<Point> = tab.points.iter().map(|pt| map(gs, pt)).collect();
        let q = xs.len();
        let kmat = DMatrix::from_fn(q, q, |i, j| tab.weights[i] * tab.weights[j] / (xs[i] - ys[j]).norm());
        let jt = self.mesh.jacobian(t);
        let js = self.mesh.jacobian(s);
        let c = curl_matrix(&jt, &gt.normal).transpose() * curl_matrix(&js, &gs.normal);
        let h = [&kmat * tab.g[0].transpose(), &kmat * tab.g[1].transpose()];
        let nb = num_basis(self.p);
        let mut l = DMatrix::zeros(nb, nb);
        for a in 0..2 {
            let comb = &h[0] * c[(a, 0)] + &h[1] * c[(a, 1)];
            l.gemm(1.0, &tab.g[a], &comb, 1.0);
        }
        l * (gt.jac * gs.jac / (4.0 * std::f64::consts::PI))
    }
}

fn scatter(a: &mut DMatrix<f64>, rows: &[LocalDof], cols: &[LocalDof], l: &DMatrix<f64>, both: bool) {
    for (i, r) in rows.iter().enumerate() {
        let Some(gi) = r.global else { continue };
        for (j, c) in cols.iter().enumerate() {
            let Some(gj) = c.global else { continue };
            let v = r.sign * c.sign * l[(i, j)];
            a[(gi, gj)] += v;
            if both {
                a[(gj, gi)] += v;
            }
        }
    }
}

/// `<D phi_j, phi_i> + alpha^2 m_i m_j` with default quadrature orders.
pub fn assemble_hypersingular(
    mesh: &SurfaceMesh,
    dofs: &DofMap,
    config: StabilizationConfig,
) -> Result<SymmetricOperator> {
    assemble_hypersingular_with(mesh, dofs, config, QuadratureOrders::default())
}

pub fn assemble_hypersingular_with(
    mesh: &SurfaceMesh,
    dofs: &DofMap,
    config: StabilizationConfig,
    orders: QuadratureOrders,
) -> Result<SymmetricOperator> {
    if !(config.alpha >= 0.0) || !config.alpha.is_finite() {
        return Err(Error::InvalidAlpha(config.alpha));
    }
    if mesh.kind == SurfaceKind::Closed && config.alpha == 0.0 {
        warn!("closed surface with alpha = 0: the hypersingular matrix is singular");
    }
    let p = dofs.degree;
    let asm = HypersingularAssembler::new(mesh, p, orders)?;
    let nt = mesh.num_triangles();
    let elem: Vec<Vec<LocalDof>> = (0..nt).map(|t| dofs.element_dofs(t)).collect();
    let n = dofs.len();
    let mut a = DMatrix::zeros(n, n);
    let nb = num_basis(p);
    // Rows of element pairs are computed in parallel batches; a single
    // reducer scatters them into the matrix.
    let batch = (4_000_000 / (nt * nb * nb).max(1)).clamp(1, nt.max(1));
    let mut start = 0;
    while start < nt {
        let end = (start + batch).min(nt);
        let blocks: Vec<(usize, Vec<DMatrix<f64>>)> = (start..end)
            .into_par_iter()
            .map(|t| (t, (t..nt).map(|s| asm.pair_matrix(t, s)).collect()))
            .collect();
        for (t, row) in blocks {
            for (k, l) in row.iter().enumerate() {
                let s = t + k;
                if l.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteEntry(t, s));
                }
                scatter(&mut a, &elem[t], &elem[s], l, s != t);
            }
        }
        start = end;
    }
    if config.alpha > 0.0 {
        let m = load_moments(mesh, dofs)?;
        a.ger(config.alpha * config.alpha, &m, &m, 1.0);
    }
    let mut op = SymmetricOperator::new(a, OperatorKind::Hypersingular, p);
    op.alpha = config.alpha;
    op.quadrature_extra = orders.extra;
    Ok(op)
}

/// `m_i = int_Gamma phi_i`.
pub fn load_moments(mesh: &SurfaceMesh, dofs: &DofMap) -> Result<DVector<f64>> {
    rhs_vector(mesh, dofs, |_| 1.0)
}

/// `<g, phi_i>` by elementwise quadrature exact for degree `2p + 2`
/// (for polynomial `g` of degree up to `p + 2`).
pub fn rhs_vector(
    mesh: &SurfaceMesh,
    dofs: &DofMap,
    g: impl Fn(&Point) -> f64,
) -> Result<DVector<f64>> {
    let p = dofs.degree;
    let basis = Basis::new(p)?;
    let rule = TriangleRule::for_degree(2 * p + 2);
    let vals = basis.value_table(&rule.points);
    let mut out = DVector::zeros(dofs.len());
    for t in 0..mesh.num_triangles() {
        let jac = 2.0 * mesh.area(t);
        let gw: Vec<f64> = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(pt, w)| w * g(&mesh.map_point(t, pt[0], pt[1])))
            .collect();
        for (a, d) in dofs.element_dofs(t).iter().enumerate() {
            if let Some(i) = d.global {
                let s: f64 = gw.iter().enumerate().map(|(q, w)| w * vals[(a, q)]).sum();
                out[i] += d.sign * jac * s;
            }
        }
    }
    Ok(out)
}

/// Surface `L^2` Gram matrix.
pub fn assemble_mass(mesh: &SurfaceMesh, dofs: &DofMap) -> Result<SymmetricOperator> {
    let p = dofs.degree;
    let m_hat = mass_matrix(p)?.matrix;
    let mut a = DMatrix::zeros(dofs.len(), dofs.len());
    for t in 0..mesh.num_triangles() {
        let l = &m_hat * (2.0 * mesh.area(t));
        let e = dofs.element_dofs(t);
        scatter(&mut a, &e, &e, &l, false);
    }
    Ok(SymmetricOperator::new(a, OperatorKind::Mass, p))
}

/// Surface `H^1` stiffness (tangential gradients) matrix.
pub fn assemble_h1(mesh: &SurfaceMesh, dofs: &DofMap) -> Result<SymmetricOperator> {
    let p = dofs.degree;
    let [xx, xy, yy] = stiffness_components(p)?;
    let mut a = DMatrix::zeros(dofs.len(), dofs.len());
    for t in 0..mesh.num_triangles() {
        let j = mesh.jacobian(t);
        let ginv = (j.transpose() * j).try_inverse().expect("non-degenerate element");
        let l = (&xx * ginv[(0, 0)] + &xy * ginv[(0, 1)] + xy.transpose() * ginv[(1, 0)]
            + &yy * ginv[(1, 1)])
            * (2.0 * mesh.area(t));
        let e = dofs.element_dofs(t);
        scatter(&mut a, &e, &e, &l, false);
    }
    Ok(SymmetricOperator::new(a, OperatorKind::H1Stiffness, p))
}

/// Exact local matrix of a patch: the principal submatrix on its dofs.
pub fn assemble_patch_block(op: &SymmetricOperator, patch_dofs: &[usize]) -> DMatrix<f64> {
    op.restrict(patch_dofs)
}

/// Hypersingular block on the regular `valence`-gon of unit circumradius,
/// viewed as a screen (no stabilization), in patch dof order: center hat,
/// spokes in angular order, then cells.
pub fn assemble_reference_patch(
    valence: usize,
    p: usize,
    orders: QuadratureOrders,
) -> Result<DMatrix<f64>> {
    let mesh = reference_patch_mesh(valence);
    let dofs = build_dof_map(&mesh, p)?;
    let op = assemble_hypersingular_with(&mesh, &dofs, StabilizationConfig::NONE, orders)?;
    let patch = vertex_patches(&mesh)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidMesh("polygon has no interior vertex".into()))?;
    Ok(op.restrict(&patch_dofs(&dofs, &patch)))
}
