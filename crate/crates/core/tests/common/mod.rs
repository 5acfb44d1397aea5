//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use hpbem::mesh::{Point, SurfaceMesh};
use hpbem::polynomials::gauss_rule;
use hpbem::ref_element::Basis;
use nalgebra::DMatrix;

/// Plain Duffy-collapsed tensor rule on the reference triangle, built here
/// rather than taken from the library.
pub fn collapsed_points(n: usize) -> Vec<([f64; 2], f64)> {
    let g = gauss_rule(n);
    let mut out = Vec::with_capacity(n * n);
    for (&v, &wv) in g.nodes.iter().zip(&g.weights) {
        for (&u, &wu) in g.nodes.iter().zip(&g.weights) {
            let x = (1.0 + u) * (1.0 - v) / 4.0;
            let y = (1.0 + v) / 2.0;
            out.push(([x, y], wu * wv * (1.0 - v) / 8.0));
        }
    }
    out
}

/// Surface curls `n x grad_Gamma phi` of every local basis function at the
/// quadrature points, physical points, and weights scaled by `2|K|`.
/// The tangential gradient uses the dual basis of the edge vectors.
fn element_samples(mesh: &SurfaceMesh, t: usize, basis: &Basis, n: usize) -> Vec<(Point, f64, Vec<Point>)> {
    let [a, b, c] = mesh.corners(t);
    let (e1, e2) = (b - a, c - a);
    let nrm = e1.cross(&e2);
    let jac = nrm.norm();
    let nu = nrm / jac;
    let d1 = e2.cross(&nu) / e1.dot(&e2.cross(&nu));
    let d2 = nu.cross(&e1) / e2.dot(&nu.cross(&e1));
    let nb = basis.len();
    let (mut v, mut gx, mut gy) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
    collapsed_points(n)
        .into_iter()
        .map(|([x, y], w)| {
            basis.eval(x, y, &mut v, &mut gx, &mut gy);
            let curls = (0..nb).map(|k| nu.cross(&(d1 * gx[k] + d2 * gy[k]))).collect();
            (a + e1 * x + e2 * y, w * jac, curls)
        })
        .collect()
}

/// Brute-force local hypersingular block of two disjoint elements with `n`
/// Gauss points per direction on each.
pub fn brute_force_pair(mesh: &SurfaceMesh, p: usize, t: usize, s: usize, n: usize) -> DMatrix<f64> {
    let basis = Basis::new(p).unwrap();
    let st = element_samples(mesh, t, &basis, n);
    let ss = element_samples(mesh, s, &basis, n);
    let nb = basis.len();
    let mut out = DMatrix::zeros(nb, nb);
    for (x, wx, cx) in &st {
        for (y, wy, cy) in &ss {
            let k = wx * wy / (4.0 * std::f64::consts::PI * (x - y).norm());
            for i in 0..nb {
                for j in 0..nb {
                    out[(i, j)] += k * cx[i].dot(&cy[j]);
                }
            }
        }
    }
    out
}

pub fn shares_vertex(mesh: &SurfaceMesh, t: usize, s: usize) -> bool {
    mesh.triangles[t].v.iter().any(|v| mesh.triangles[s].v.contains(v))
}

/// Centroid distance over the larger diameter.
pub fn separation(mesh: &SurfaceMesh, t: usize, s: usize) -> f64 {
    (mesh.centroid(t) - mesh.centroid(s)).norm() / mesh.diameter(t).max(mesh.diameter(s))
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(b)
}

/// Regular hexagon of circumradius `r`, moved rigidly, with shuffled vertex
/// ids and cyclically rotated triangle vertex lists (orientation kept), so
/// nothing about it matches the reference polygon except its shape.
pub fn disguised_hexagon(r: f64, twist: usize) -> SurfaceMesh {
    use hpbem::mesh::{reference_patch_mesh, Triangle};
    use nalgebra::{Rotation3, Unit, Vector3};
    let hex = reference_patch_mesh(6);
    let ids = [3, 6, 0, 5, 1, 4, 2];
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, -1.0, 0.8)), 1.1);
    let mut vertices = vec![Point::zeros(); 7];
    for (old, &new) in ids.iter().enumerate() {
        vertices[new] = rot * (hex.vertices[old] * r) + Point::new(-2.0, 0.5, 1.5);
    }
    let triangles = hex
        .triangles
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let v = t.v.map(|w| ids[w]);
            let c = (k + twist) % 3;
            Triangle { v: [v[c], v[(c + 1) % 3], v[(c + 2) % 3]], ref_edge: (t.ref_edge + 3 - c) % 3 }
        })
        .collect();
    SurfaceMesh::new(vertices, triangles, hex.kind).unwrap()
}
