//! Hierarchical hp basis on the reference triangle `K = conv{(0,0), (1,0), (0,1)}`.
//!
//! Barycentric coordinates are `l1 = 1 - x - y`, `l2 = x`, `l3 = y`. Local
//! ordering of the `(p+1)(p+2)/2` functions:
//!
//! * vertex functions `l1, l2, l3`;
//! * `p - 1` functions per edge, edges ordered `(1->2), (2->3), (3->1)`; edge
//!   `m` runs from local vertex `m` to `m + 1 (mod 3)`;
//! * cell functions `(i, j)` with `i + j <= p - 3`, ordered by total degree
//!   `i + j` and then by `i`.
//!
//! Cell functions are orthonormal in `L^2(K)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::operator::{OperatorKind, SymmetricOperator};
use crate::polynomials::{scaled_integrated_legendre, scaled_jacobi, JacobiParams};
use crate::quadrature::TriangleRule;

const INSIDE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl BarycentricPoint {
    pub fn from_xy(x: f64, y: f64) -> Self {
        Self {
            lambda1: 1.0 - x - y,
            lambda2: x,
            lambda3: y,
        }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.lambda2, self.lambda3]
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda1, self.lambda2, self.lambda3]
    }

    pub fn is_inside(&self, tol: f64) -> bool {
        self.as_array().iter().all(|&l| l >= -tol)
            && (self.lambda1 + self.lambda2 + self.lambda3 - 1.0).abs() <= tol
    }
}

pub fn num_basis(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

pub fn num_cell(p: usize) -> usize {
    if p < 3 {
        0
    } else {
        (p - 1) * (p - 2) / 2
    }
}

/// Local index of edge function `i` on local edge `m`.
pub fn edge_index(p: usize, m: usize, i: usize) -> usize {
    3 + m * (p - 1) + i
}

/// Local index of the first cell function.
pub fn cell_offset(p: usize) -> usize {
    3 + 3 * (p - 1)
}

/// Cell index pairs `(i, j)` in local order.
pub fn cell_indices(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(num_cell(p));
    if p >= 3 {
        for k in 0..=p - 3 {
            for i in 0..=k {
                out.push((i, k - i));
            }
        }
    }
    out
}

/// Evaluates all basis functions of degree `p` and their gradients with
/// respect to the reference coordinates `(x, y)`.
#[derive(Debug, Clone)]
pub struct Basis {
    p: usize,
    cells: Vec<(usize, usize)>,
    norms: Vec<f64>,
}

impl Basis {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDegree { min: 1, got: 0 });
        }
        let norms = if p >= 3 {
            compute_cell_norm_constants(p)?
        } else {
            Vec::new()
        };
        Ok(Self {
            p,
            cells: cell_indices(p),
            norms,
        })
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        num_basis(self.p)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_norm_constants(&self) -> &[f64] {
        &self.norms
    }

    /// Values and `(d/dx, d/dy)` gradients at the reference point `(x, y)`.
    /// No domain check; callers guarantee the point is in the triangle.
    pub fn eval(&self, x: f64, y: f64, val: &mut [f64], gx: &mut [f64], gy: &mut [f64]) {
        let mut dl = vec![[0.0; 3]; self.len()];
        eval_raw(self.p, &self.cells, &self.norms, [1.0 - x - y, x, y], val, &mut dl);
        for (k, d) in dl.iter().enumerate() {
            gx[k] = d[1] - d[0];
            gy[k] = d[2] - d[0];
        }
    }

    /// Gradient tables `(gx, gy)` of size `len() x points.len()`.
    pub fn gradient_tables(&self, points: &[[f64; 2]]) -> (DMatrix<f64>, DMatrix<f64>) {
        let nb = self.len();
        let mut gx = DMatrix::zeros(nb, points.len());
        let mut gy = DMatrix::zeros(nb, points.len());
        let mut v = vec![0.0; nb];
        let (mut a, mut b) = (vec![0.0; nb], vec![0.0; nb]);
        for (q, pt) in points.iter().enumerate() {
            self.eval(pt[0], pt[1], &mut v, &mut a, &mut b);
            gx.column_mut(q).copy_from_slice(&a);
            gy.column_mut(q).copy_from_slice(&b);
        }
        (gx, gy)
    }

    /// Value table of size `len() x points.len()`.
    pub fn value_table(&self, points: &[[f64; 2]]) -> DMatrix<f64> {
        let nb = self.len();
        let mut out = DMatrix::zeros(nb, points.len());
        let mut v = vec![0.0; nb];
        let (mut a, mut b) = (vec![0.0; nb], vec![0.0; nb]);
        for (q, pt) in points.iter().enumerate() {
            self.eval(pt[0], pt[1], &mut v, &mut a, &mut b);
            out.column_mut(q).copy_from_slice(&v);
        }
        out
    }
}

/// Values and barycentric partials `d/dl_k` of every basis function.
fn eval_raw(
    p: usize,
    cells: &[(usize, usize)],
    norms: &[f64],
    l: [f64; 3],
    val: &mut [f64],
    dl: &mut [[f64; 3]],
) {
    for m in 0..3 {
        val[m] = l[m];
        dl[m] = [0.0; 3];
        dl[m][m] = 1.0;
    }
    if p >= 2 {
        for m in 0..3 {
            let (e1, e2) = (m, (m + 1) % 3);
            let leg = scaled_integrated_legendre(p, l[e2] - l[e1], l[e1] + l[e2]);
            for i in 0..p - 1 {
                let k = edge_index(p, m, i);
                let c = ((2 * i + 3) as f64 / 2.0).sqrt();
                let n = i + 2;
                val[k] = c * leg.value[n];
                dl[k] = [0.0; 3];
                dl[k][e1] = c * (leg.dt[n] - leg.ds[n]);
                dl[k][e2] = c * (leg.dt[n] + leg.ds[n]);
            }
        }
    }
    if p >= 3 {
        let pa = JacobiParams::new(2.0, 2.0).expect("valid parameters");
        let a = scaled_jacobi(pa, p - 3, l[0] - l[1], l[0] + l[1]);
        let bubble = l[0] * l[1] * l[2];
        let off = cell_offset(p);
        let mut b_cache: Vec<Option<crate::polynomials::ScaledValues>> = vec![None; p - 2];
        for (c, &(i, j)) in cells.iter().enumerate() {
            let b = b_cache[i].get_or_insert_with(|| {
                let pb = JacobiParams::new(2.0 * i as f64 + 5.0, 2.0).expect("valid parameters");
                scaled_jacobi(pb, p - 3 - i, 2.0 * l[2] - 1.0, 1.0)
            });
            let (av, a1, a2) = (a.value[i], a.ds[i] + a.dt[i], a.dt[i] - a.ds[i]);
            let (bv, b3) = (b.value[j], 2.0 * b.ds[j]);
            let cn = norms.get(c).copied().unwrap_or(1.0);
            let k = off + c;
            val[k] = cn * bubble * av * bv;
            dl[k] = [
                cn * (l[1] * l[2] * av * bv + bubble * a1 * bv),
                cn * (l[0] * l[2] * av * bv + bubble * a2 * bv),
                cn * (l[0] * l[1] * av * bv + bubble * av * b3),
            ];
        }
    }
}

/// Basis values and gradients at a list of points.
#[derive(Debug, Clone)]
pub struct ShapeFunctionTable {
    pub degree: usize,
    /// `values[(k, q)]`: function `k` at point `q`.
    pub values: DMatrix<f64>,
    /// `gradients[d][(k, q)]`: derivative in reference direction `d`.
    pub gradients: [DMatrix<f64>; 2],
    pub cell_norm_constants: Vec<f64>,
}

pub fn eval_basis(p: usize, points: &[BarycentricPoint]) -> Result<ShapeFunctionTable> {
    let basis = Basis::new(p)?;
    let mut xy = Vec::with_capacity(points.len());
    for pt in points {
        if !pt.is_inside(INSIDE_TOL) {
            return Err(Error::PointOutsideTriangle(pt.lambda2, pt.lambda3));
        }
        xy.push(pt.xy());
    }
    let values = basis.value_table(&xy);
    let (gx, gy) = basis.gradient_tables(&xy);
    Ok(ShapeFunctionTable {
        degree: p,
        values,
        gradients: [gx, gy],
        cell_norm_constants: basis.norms.clone(),
    })
}

/// Constants `c_ij` making every cell function a unit vector in `L^2(K)`.
pub fn compute_cell_norm_constants(p: usize) -> Result<Vec<f64>> {
    if p < 3 {
        return Err(Error::InvalidDegree { min: 3, got: p });
    }
    let cells = cell_indices(p);
    let ones = vec![1.0; cells.len()];
    let rule = TriangleRule::for_degree(2 * p);
    let nb = num_basis(p);
    let mut sums = vec![0.0; cells.len()];
    let mut val = vec![0.0; nb];
    let mut dl = vec![[0.0; 3]; nb];
    for (pt, w) in rule.points.iter().zip(&rule.weights) {
        eval_raw(p, &cells, &ones, [1.0 - pt[0] - pt[1], pt[0], pt[1]], &mut val, &mut dl);
        for (c, s) in sums.iter_mut().enumerate() {
            *s += w * val[cell_offset(p) + c].powi(2);
        }
    }
    Ok(sums.into_iter().map(|s| 1.0 / s.sqrt()).collect())
}

/// `int_K phi_a phi_b` by a rule exact for degree `2p + 2`.
pub fn mass_matrix(p: usize) -> Result<SymmetricOperator> {
    let basis = Basis::new(p)?;
    let rule = TriangleRule::for_degree(2 * p + 2);
    let v = basis.value_table(&rule.points);
    let mut vw = v.clone();
    for (q, w) in rule.weights.iter().enumerate() {
        vw.column_mut(q).scale_mut(*w);
    }
    Ok(SymmetricOperator::new(&vw * v.transpose(), OperatorKind::Mass, p))
}

/// The three gradient products `int dx.dx`, `int dx.dy`, `int dy.dy`.
pub fn stiffness_components(p: usize) -> Result<[DMatrix<f64>; 3]> {
    let basis = Basis::new(p)?;
    let rule = TriangleRule::for_degree(2 * p);
    let (gx, gy) = basis.gradient_tables(&rule.points);
    let mut gxw = gx.clone();
    let mut gyw = gy.clone();
    for (q, w) in rule.weights.iter().enumerate() {
        gxw.column_mut(q).scale_mut(*w);
        gyw.column_mut(q).scale_mut(*w);
    }
    Ok([
        &gxw * gx.transpose(),
        &gxw * gy.transpose(),
        &gyw * gy.transpose(),
    ])
}

/// `int_K grad phi_a . grad phi_b` by a rule exact for degree `2p`.
pub fn stiffness_matrix(p: usize) -> Result<SymmetricOperator> {
    let [xx, _, yy] = stiffness_components(p)?;
    Ok(SymmetricOperator::new(xx + yy, OperatorKind::H1Stiffness, p))
}

/// Local index sets of the blocks studied in [`conditioning_study`].
pub fn block_indices(p: usize, block: Block) -> Vec<usize> {
    match block {
        Block::Full => (0..num_basis(p)).collect(),
        Block::Edge => (3..cell_offset(p)).collect(),
        Block::Interior => (cell_offset(p)..num_basis(p)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Full,
    Edge,
    Interior,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Full => "full",
            Block::Edge => "edge",
            Block::Interior => "interior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningRow {
    pub p: usize,
    /// `M_full`, `MS_edge`, ... (`M` = mass, `MS` = mass + stiffness).
    pub block: String,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
}

pub const CONDITIONING_HEADER: &str = "p,block,lambda_min,lambda_max,kappa";

impl ConditioningRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.12e},{:.12e},{:.12e}",
            self.p, self.block, self.lambda_min, self.lambda_max, self.kappa
        )
    }
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn extreme_eigenvalues(a: &DMatrix<f64>) -> (f64, f64) {
    let ev = SymmetricEigen::new(a.clone()).eigenvalues;
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Extreme eigenvalues of `M` and `M + S` and their edge/interior blocks.
/// Empty blocks (edge for `p = 1`, interior for `p < 3`) are skipped.
pub fn conditioning_study(p_range: &[usize]) -> Result<Vec<ConditioningRow>> {
    let mut rows = Vec::new();
    for &p in p_range {
        if !(1..=20).contains(&p) {
            return Err(Error::InvalidDegree { min: 1, got: p });
        }
        let m = mass_matrix(p)?.matrix;
        let ms = &m + stiffness_matrix(p)?.matrix;
        for (name, mat) in [("M", &m), ("MS", &ms)] {
            for block in [Block::Full, Block::Edge, Block::Interior] {
                let idx = block_indices(p, block);
                if idx.is_empty() {
                    continue;
                }
                let sub = crate::operator::principal_submatrix(mat, &idx);
                let (lo, hi) = extreme_eigenvalues(&sub);
                rows.push(ConditioningRow {
                    p,
                    block: format!("{name}_{}", block.name()),
                    lambda_min: lo,
                    lambda_max: hi,
                    kappa: hi / lo,
                });
            }
        }
    }
    Ok(rows)
}

/// Affine map `Q` of the reference triangle permuting its vertices, stored
/// through its action on barycentric coordinates: `l_m(Q(x)) = mu_{perm[m]}(x)`.
/// Equivalently, `Q` sends reference vertex `perm[m]` to vertex `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VertexPermutation {
    pub perm: [usize; 3],
}

impl VertexPermutation {
    pub const IDENTITY: VertexPermutation = VertexPermutation { perm: [0, 1, 2] };

    pub fn new(perm: [usize; 3]) -> Self {
        let mut seen = [false; 3];
        for &k in &perm {
            assert!(k < 3 && !seen[k], "not a permutation: {perm:?}");
            seen[k] = true;
        }
        Self { perm }
    }

    pub fn all() -> [VertexPermutation; 6] {
        [
            [0, 1, 2],
            [1, 2, 0],
            [2, 0, 1],
            [0, 2, 1],
            [2, 1, 0],
            [1, 0, 2],
        ]
        .map(VertexPermutation::new)
    }

    /// `self o other`, i.e. `other` is applied first.
    pub fn compose(&self, other: &VertexPermutation) -> VertexPermutation {
        VertexPermutation::new(self.perm.map(|m| other.perm[m]))
    }

    /// Image of the point `(x, y)`.
    pub fn apply(&self, x: f64, y: f64) -> [f64; 2] {
        let mu = [1.0 - x - y, x, y];
        [mu[self.perm[1]], mu[self.perm[2]]]
    }

    /// For local edge `m`: the edge its function turns into under `Q`, and
    /// whether the direction reverses.
    pub fn edge_image(&self, m: usize) -> (usize, bool) {
        let (a, b) = (self.perm[m], self.perm[(m + 1) % 3]);
        if (a + 1) % 3 == b {
            (a, false)
        } else {
            (b, true)
        }
    }

    pub fn edge_flips(&self) -> [bool; 3] {
        [0, 1, 2].map(|m| self.edge_image(m).1)
    }
}

/// Change of basis `phi_a o Q = sum_b T[a, b] phi_b` for one vertex permutation.
#[derive(Debug, Clone)]
pub struct PermutationTransform {
    pub permutation: VertexPermutation,
    pub degree: usize,
    /// Dense map on the cell functions.
    pub interior: DMatrix<f64>,
}

impl PermutationTransform {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.degree;
        let nb = num_basis(p);
        let mut t = DMatrix::zeros(nb, nb);
        for m in 0..3 {
            t[(m, self.permutation.perm[m])] = 1.0;
        }
        if p >= 2 {
            for m in 0..3 {
                let (target, flip) = self.permutation.edge_image(m);
                for i in 0..p - 1 {
                    let sign = if flip && i % 2 == 1 { -1.0 } else { 1.0 };
                    t[(edge_index(p, m, i), edge_index(p, target, i))] = sign;
                }
            }
        }
        let off = cell_offset(p);
        let nc = num_cell(p);
        t.view_mut((off, off), (nc, nc)).copy_from(&self.interior);
        t
    }
}

/// Builds [`PermutationTransform`] for `q`. The interior block is the
/// `L^2` projection of the permuted cell functions onto the (orthonormal)
/// cell basis; a residual check guards against basis inconsistencies.
pub fn permutation_transform(q: VertexPermutation, p: usize) -> Result<PermutationTransform> {
    let basis = Basis::new(p)?;
    let nc = num_cell(p);
    let off = cell_offset(p);
    let mut interior = DMatrix::zeros(nc, nc);
    if nc > 0 {
        let rule = TriangleRule::for_degree(2 * p);
        let v = basis.value_table(&rule.points);
        let moved: Vec<[f64; 2]> = rule.points.iter().map(|pt| q.apply(pt[0], pt[1])).collect();
        let vq = basis.value_table(&moved);
        for a in 0..nc {
            for b in 0..nc {
                interior[(a, b)] = (0..rule.len())
                    .map(|k| rule.weights[k] * vq[(off + a, k)] * v[(off + b, k)])
                    .sum();
            }
        }
    }
    let t = PermutationTransform {
        permutation: q,
        degree: p,
        interior,
    };
    // Check phi o Q = T phi on points the projection never saw.
    let check = TriangleRule::collapsed(p + 3);
    let v = basis.value_table(&check.points);
    let moved: Vec<[f64; 2]> = check.points.iter().map(|pt| q.apply(pt[0], pt[1])).collect();
    let vq = basis.value_table(&moved);
    let resid = (vq - t.to_dense() * v).amax();
    if resid > 1e-9 {
        return Err(Error::TransformResidual(resid));
    }
    Ok(t)
}
