//! Regularized quadrature for `int_T int_T f(x, y) / |x - y|`-type integrals
//! over pairs of reference triangles that share the whole triangle, an edge
//! or a vertex.
//!
//! Each rule is an ordinary point set on `T x T`; the transformations put a
//! factor `r` into the weight that cancels the `1/r` growth of the kernel, so
//! the integrand the rule actually sees is smooth. Directions in which the
//! transformed integrand is polynomial get `n_poly` Gauss points; directions
//! carrying the kernel get `n_kernel`.
//!
//! Canonical parametrizations (both triangles use the reference triangle
//! with vertices `0 = (0,0)`, `1 = (1,0)`, `2 = (0,1)`):
//! * identical: the same map for `x` and `y`;
//! * edge: the shared edge is `0 -> 1` in both maps;
//! * vertex: the shared vertex is `0` in both maps.

use crate::polynomials::gauss_rule;
use crate::quadrature::TriangleRule;

/// Paired quadrature points on `T x T`.
#[derive(Debug, Clone, Default)]
pub struct PairRule {
    pub x: Vec<[f64; 2]>,
    pub y: Vec<[f64; 2]>,
    pub w: Vec<f64>,
}

impl PairRule {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    fn push(&mut self, x: [f64; 2], y: [f64; 2], w: f64) {
        self.x.push(x);
        self.y.push(y);
        self.w.push(w);
    }

    pub fn integrate(&self, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> f64 {
        (0..self.len()).map(|q| self.w[q] * f(self.x[q], self.y[q])).sum()
    }
}

/// Both points in the same triangle. With `z = y - x` ranging over the
/// hexagon `T - T`, split into six sectors, `x` ranges over a scaled copy of
/// `T` of size `1 - rho(z)`.
pub fn identical_rule(n_poly: usize, n_kernel: usize) -> PairRule {
    const HEX: [[f64; 2]; 6] = [
        [1.0, 0.0],
        [0.0, 1.0],
        [-1.0, 1.0],
        [-1.0, 0.0],
        [0.0, -1.0],
        [1.0, -1.0],
    ];
    let gr = gauss_rule(n_poly).unit_interval();
    let gw = gauss_rule(n_kernel).unit_interval();
    let tri = TriangleRule::collapsed(n_poly);
    let mut rule = PairRule::default();
    for k in 0..6 {
        let (h0, h1) = (HEX[k], HEX[(k + 1) % 6]);
        for (&r, &wr) in gr.nodes.iter().zip(&gr.weights) {
            for (&s, &ws) in gw.nodes.iter().zip(&gw.weights) {
                let z = [
                    r * (h0[0] + s * (h1[0] - h0[0])),
                    r * (h0[1] + s * (h1[1] - h0[1])),
                ];
                let o = [(-z[0]).max(0.0), (-z[1]).max(0.0)];
                let w0 = wr * ws * r * (1.0 - r).powi(2);
                for (xi, &wx) in tri.points.iter().zip(&tri.weights) {
                    let x = [o[0] + (1.0 - r) * xi[0], o[1] + (1.0 - r) * xi[1]];
                    rule.push(x, [x[0] + z[0], x[1] + z[1]], w0 * wx);
                }
            }
        }
    }
    rule
}

/// Triangles sharing the edge `0 -> 1`. In coordinates `(s, t)` the shared
/// edge is `t = 0`; with `v = (t_x, t_y, s_y - s_x)` the remaining variable
/// `s_x` runs over an interval of length `1 - rho(v)`, and `rho = 1` is a
/// polyhedral surface made of six unit-determinant triangles.
pub fn edge_adjacent_rule(n_poly: usize, n_kernel: usize) -> PairRule {
    const BASES: [[[f64; 3]; 3]; 6] = [
        [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]],
        [[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
        [[0.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
        [[0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]],
        [[0.0, 0.0, -1.0], [1.0, 1.0, 0.0], [0.0, 1.0, -1.0]],
        [[0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, -1.0]],
    ];
    let gr = gauss_rule(n_poly).unit_interval();
    let gs = gauss_rule(n_poly).unit_interval();
    let tri = TriangleRule::collapsed(n_kernel);
    let mut rule = PairRule::default();
    for b in &BASES {
        let det = det3(b).abs();
        for (u, &wu) in tri.points.iter().zip(&tri.weights) {
            let dir: [f64; 3] =
                std::array::from_fn(|i| b[0][i] + u[0] * (b[1][i] - b[0][i]) + u[1] * (b[2][i] - b[0][i]));
            for (&r, &wr) in gr.nodes.iter().zip(&gr.weights) {
                let v = dir.map(|c| r * c);
                let (tx, ty, d) = (v[0], v[1], v[2]);
                let w0 = wu * wr * det * r * r * (1.0 - r);
                for (&sh, &ws) in gs.nodes.iter().zip(&gs.weights) {
                    let sx = (-d).max(0.0) + (1.0 - r) * sh;
                    rule.push([sx, tx], [sx + d, ty], w0 * ws);
                }
            }
        }
    }
    rule
}

/// Triangles sharing vertex `0`. Split by which point is farther from the
/// vertex in the `l1` sense; the farther point lies on the segment
/// `x1 + x2 = r`, the nearer one in `r T`.
pub fn vertex_adjacent_rule(n_poly: usize, n_kernel: usize) -> PairRule {
    let gr = gauss_rule(n_poly).unit_interval();
    let ga = gauss_rule(n_kernel).unit_interval();
    let tri = TriangleRule::collapsed(n_kernel);
    let mut rule = PairRule::default();
    for (&r, &wr) in gr.nodes.iter().zip(&gr.weights) {
        for (&a, &wa) in ga.nodes.iter().zip(&ga.weights) {
            let far = [r * (1.0 - a), r * a];
            for (q, &wq) in tri.points.iter().zip(&tri.weights) {
                let near = [r * q[0], r * q[1]];
                let w = wr * wa * wq * r.powi(3);
                rule.push(far, near, w);
                rule.push(near, far, w);
            }
        }
    }
    rule
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}
