//! Triangulated surfaces, newest vertex bisection and vertex patches.
//!
//! Triangles are stored as three vertex ids plus the local index of their
//! reference edge; local edge `m` joins `v[m]` and `v[(m + 1) % 3]`, the same
//! convention as the reference element. All triangles of a mesh are oriented
//! consistently (counter-clockwise seen from the chosen normal side), which
//! the surface-curl assembly relies on.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{Matrix3x2, Vector3};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    /// Screen with boundary; boundary vertices carry no degrees of freedom.
    Open,
    /// Boundary of a Lipschitz domain.
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub v: [usize; 3],
    /// Local index of the reference edge.
    pub ref_edge: usize,
}

impl Triangle {
    pub fn edge(&self, m: usize) -> (usize, usize) {
        (self.v[m], self.v[(m + 1) % 3])
    }

    pub fn local_index(&self, vertex: usize) -> Option<usize> {
        self.v.iter().position(|&w| w == vertex)
    }
}

pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<Triangle>,
    /// `true` for vertices on the boundary of an open surface.
    pub boundary: Vec<bool>,
    pub kind: SurfaceKind,
}

impl SurfaceMesh {
    /// Builds a mesh, deriving boundary flags from the edge structure, and
    /// validates it.
    pub fn new(vertices: Vec<Point>, triangles: Vec<Triangle>, kind: SurfaceKind) -> Result<Self> {
        let mut mesh = SurfaceMesh {
            boundary: vec![false; vertices.len()],
            vertices,
            triangles,
            kind,
        };
        if kind == SurfaceKind::Open {
            for ((a, b), ts) in mesh.edges() {
                if ts.len() == 1 {
                    mesh.boundary[a] = true;
                    mesh.boundary[b] = true;
                }
            }
        }
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Edge -> incident triangles, keyed by `(low id, high id)`.
    pub fn edges(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for m in 0..3 {
                let (a, b) = tri.edge(m);
                map.entry(edge_key(a, b)).or_default().push(t);
            }
        }
        map
    }

    /// For each vertex, the triangles containing it.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in &tri.v {
                out[v].push(t);
            }
        }
        out
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        self.triangles[t].v.map(|i| self.vertices[i])
    }

    /// Columns `B - A`, `C - A` of the affine element map.
    pub fn jacobian(&self, t: usize) -> Matrix3x2<f64> {
        let [a, b, c] = self.corners(t);
        Matrix3x2::from_columns(&[b - a, c - a])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn unit_normal(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        (a + b + c) / 3.0
    }

    /// Image of reference coordinates `(x, y)` under the element map.
    pub fn map_point(&self, t: usize, x: f64, y: f64) -> Point {
        let [a, b, c] = self.corners(t);
        a + (b - a) * x + (c - a) * y
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    /// Vertices carrying a hat function: all vertices on closed surfaces,
    /// interior vertices on open ones.
    pub fn is_free(&self, v: usize) -> bool {
        !self.boundary[v]
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.triangles.len() as i64
    }

    /// Checks regularity, orientation and consistency of the stored flags.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMesh(msg));
        if self.boundary.len() != self.vertices.len() {
            return bad("boundary flag count differs from vertex count".into());
        }
        let scale = self.max_diameter().max(f64::MIN_POSITIVE);
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.ref_edge > 2 {
                return bad(format!("triangle {t} has reference edge {}", tri.ref_edge));
            }
            if tri.v.iter().any(|&v| v >= self.vertices.len()) {
                return bad(format!("triangle {t} references a missing vertex"));
            }
            if tri.v[0] == tri.v[1] || tri.v[1] == tri.v[2] || tri.v[0] == tri.v[2] {
                return bad(format!("triangle {t} repeats a vertex"));
            }
            if self.area(t) <= 1e-14 * scale * scale {
                return bad(format!("triangle {t} is degenerate"));
            }
        }
        let mut directed: HashSet<(usize, usize)> = HashSet::new();
        for tri in &self.triangles {
            for m in 0..3 {
                if !directed.insert(tri.edge(m)) {
                    return bad(format!(
                        "edge {:?} traversed twice in the same direction",
                        tri.edge(m)
                    ));
                }
            }
        }
        let mut expect_boundary = vec![false; self.vertices.len()];
        for ((a, b), ts) in self.edges() {
            match (ts.len(), self.kind) {
                (2, _) => {}
                (1, SurfaceKind::Open) => {
                    expect_boundary[a] = true;
                    expect_boundary[b] = true;
                }
                (n, _) => return bad(format!("edge ({a}, {b}) has {n} incident triangles")),
            }
        }
        if expect_boundary != self.boundary {
            return bad("boundary flags do not match the edge structure".into());
        }
        let used: HashSet<usize> = self.triangles.iter().flat_map(|t| t.v).collect();
        if used.len() != self.vertices.len() {
            return bad("mesh has isolated vertices".into());
        }
        Ok(())
    }

    /// Sets every reference edge to the longest edge of its triangle, ties
    /// going to the edge opposite the smallest vertex id.
    pub fn assign_longest_edge_refs(&mut self) {
        for t in 0..self.triangles.len() {
            let tri = self.triangles[t];
            let mut best = (f64::NEG_INFINITY, usize::MAX, 0);
            for m in 0..3 {
                let (a, b) = tri.edge(m);
                let len = (self.vertices[a] - self.vertices[b]).norm();
                let opposite = tri.v[(m + 2) % 3];
                let longer = len > best.0 * (1.0 + 1e-12);
                let tie = (len - best.0).abs() <= 1e-12 * len && opposite < best.1;
                if longer || tie {
                    best = (len, opposite, m);
                }
            }
            self.triangles[t].ref_edge = best.2;
        }
    }

    /// Affine image `x -> c x + shift` of the mesh.
    pub fn dilated(&self, c: f64, shift: Point) -> SurfaceMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = *v * c + shift;
        }
        out
    }

    /// ASCII serialization; see [`SurfaceMesh::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kind = match self.kind {
            SurfaceKind::Open => "open",
            SurfaceKind::Closed => "closed",
        };
        let _ = writeln!(s, "surface {kind}");
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.triangles.len());
        for (v, b) in self.vertices.iter().zip(&self.boundary) {
            let _ = writeln!(s, "{} {} {} {}", v.x, v.y, v.z, u8::from(*b));
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {} {}", t.v[0], t.v[1], t.v[2], t.ref_edge);
        }
        s
    }

    /// Parses the format written by [`SurfaceMesh::to_text`]:
    /// `surface open|closed`, `V T`, `V` lines `x y z boundary_flag`, `T`
    /// lines `v0 v1 v2 ref_edge`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let perr = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let (ln, head) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
        let kind = match head.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["surface", "open"] => SurfaceKind::Open,
            ["surface", "closed"] => SurfaceKind::Closed,
            _ => return Err(perr(ln, "expected `surface open|closed`")),
        };
        let (ln, counts) = lines.next().ok_or_else(|| perr(ln + 1, "missing counts"))?;
        let counts: Vec<usize> = counts
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| perr(ln, "bad count")))
            .collect::<Result<_>>()?;
        let [nv, nt] = counts[..] else {
            return Err(perr(ln, "expected `V T`"));
        };
        let mut vertices = Vec::with_capacity(nv);
        let mut boundary = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing vertex line"))?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return Err(perr(ln, "expected `x y z boundary_flag`"));
            }
            let c: Vec<f64> = f[..3]
                .iter()
                .map(|s| s.parse().map_err(|_| perr(ln, "bad coordinate")))
                .collect::<Result<_>>()?;
            vertices.push(Point::new(c[0], c[1], c[2]));
            boundary.push(match f[3] {
                "0" => false,
                "1" => true,
                _ => return Err(perr(ln, "boundary flag must be 0 or 1")),
            });
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing triangle line"))?;
            let f: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| perr(ln, "bad index")))
                .collect::<Result<_>>()?;
            if f.len() != 4 {
                return Err(perr(ln, "expected `v0 v1 v2 ref_edge`"));
            }
            triangles.push(Triangle {
                v: [f[0], f[1], f[2]],
                ref_edge: f[3],
            });
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing content"));
        }
        let mesh = SurfaceMesh {
            vertices,
            triangles,
            boundary,
            kind,
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Unit square screen `[0,1]^2 x {0}` with `2 n^2` triangles. Every square is
/// cut by the diagonal pointing towards the center of the screen, so every
/// triangle touches an interior vertex once `n >= 2`.
pub fn generate_screen(n: usize) -> SurfaceMesh {
    assert!(n >= 1, "screen needs at least one cell per side");
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point::new(i as f64 * h, j as f64 * h, 0.0));
        }
    }
    let mid = n as f64 / 2.0;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let slash = (i as f64 + 0.5 - mid) * (j as f64 + 0.5 - mid) >= 0.0;
            let pair = if slash {
                [[a, b, c], [a, c, d]]
            } else {
                [[a, b, d], [b, c, d]]
            };
            for v in pair {
                triangles.push(Triangle { v, ref_edge: 0 });
            }
        }
    }
    let mut mesh = SurfaceMesh::new(vertices, triangles, SurfaceKind::Open).expect("valid screen");
    mesh.assign_longest_edge_refs();
    mesh
}

/// Closed surface of the union of unit voxels `cells` (integer lower
/// corners), two triangles per exposed unit face, outward oriented.
fn voxel_surface(cells: &[[i64; 3]]) -> SurfaceMesh {
    let set: HashSet<[i64; 3]> = cells.iter().copied().collect();
    let mut faces: Vec<[[i64; 3]; 4]> = Vec::new();
    for c in cells {
        for axis in 0..3 {
            for sign in [-1i64, 1] {
                let mut nb = *c;
                nb[axis] += sign;
                if set.contains(&nb) {
                    continue;
                }
                let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut base = *c;
                if sign > 0 {
                    base[axis] += 1;
                }
                let mut c1 = base;
                c1[u] += 1;
                let mut c2 = c1;
                c2[w] += 1;
                let mut c3 = base;
                c3[w] += 1;
                faces.push(if sign > 0 {
                    [base, c1, c2, c3]
                } else {
                    [base, c3, c2, c1]
                });
            }
        }
    }
    let mut coords: Vec<[i64; 3]> = faces.iter().flatten().copied().collect();
    coords.sort();
    coords.dedup();
    let index: HashMap<[i64; 3], usize> = coords.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let vertices = coords
        .iter()
        .map(|c| Point::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    let mut triangles = Vec::with_capacity(2 * faces.len());
    for f in &faces {
        let q = f.map(|c| index[&c]);
        triangles.push(Triangle {
            v: [q[0], q[1], q[2]],
            ref_edge: 0,
        });
        triangles.push(Triangle {
            v: [q[0], q[2], q[3]],
            ref_edge: 0,
        });
    }
    let mut mesh =
        SurfaceMesh::new(vertices, triangles, SurfaceKind::Closed).expect("valid voxel surface");
    mesh.assign_longest_edge_refs();
    mesh
}

/// Surface of the Fichera cube `[-1,1]^3 \ [0,1]^3`: 24 unit squares, 48
/// triangles.
pub fn generate_fichera() -> SurfaceMesh {
    let mut cells = Vec::new();
    for x in [-1, 0] {
        for y in [-1, 0] {
            for z in [-1, 0] {
                if [x, y, z] != [0, 0, 0] {
                    cells.push([x, y, z]);
                }
            }
        }
    }
    voxel_surface(&cells)
}

/// Surface of the unit cube, 12 triangles.
pub fn generate_cube() -> SurfaceMesh {
    voxel_surface(&[[0, 0, 0]])
}

/// Regular `n`-gon of unit circumradius in the plane `z = 0`, triangulated from
/// its center: vertex 0 is the center, vertex `k + 1` sits at angle `2 pi k / n`,
/// triangle `k` is `(0, k + 1, (k + 1) % n + 1)`.
pub fn reference_patch_mesh(n: usize) -> SurfaceMesh {
    assert!(n >= 3, "a polygon needs at least three sides");
    let mut vertices = vec![Point::zeros()];
    for k in 0..n {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        vertices.push(Point::new(phi.cos(), phi.sin(), 0.0));
    }
    let triangles = (0..n)
        .map(|k| Triangle {
            v: [0, k + 1, (k + 1) % n + 1],
            ref_edge: 1,
        })
        .collect();
    SurfaceMesh::new(vertices, triangles, SurfaceKind::Open).expect("valid polygon")
}

/// Diameter of the regular `n`-gon with unit circumradius.
pub fn reference_patch_diameter(n: usize) -> f64 {
    let half = n / 2;
    2.0 * (std::f64::consts::PI * half as f64 / n as f64).sin()
}

/// `max_K diam(K)^2 / |K|`.
pub fn shape_regularity(mesh: &SurfaceMesh) -> f64 {
    (0..mesh.num_triangles())
        .map(|t| mesh.diameter(t).powi(2) / mesh.area(t))
        .fold(0.0, f64::max)
}

/// What [`nvb_refine`] should bisect.
#[derive(Debug, Clone, PartialEq)]
pub enum Marking {
    /// Bisect the reference edge of each listed triangle.
    Elements(Vec<usize>),
    /// Bisect all three edges of each listed triangle (four sons).
    ElementsFully(Vec<usize>),
    /// Bisect the listed edges.
    Edges(Vec<(usize, usize)>),
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: SurfaceMesh,
    /// Parent triangle of every new triangle.
    pub parent: Vec<usize>,
    /// Endpoints of the bisected edge for every new vertex, in id order;
    /// new vertices are appended after the old ones.
    pub new_vertex_parents: Vec<(usize, usize)>,
    /// Free new vertices plus free old vertices whose patch shrank.
    pub tilde: Vec<usize>,
}

/// Newest vertex bisection with closure. Sons are numbered so that
/// orientation is preserved and their reference edges face the new vertex.
pub fn nvb_refine(mesh: &SurfaceMesh, marking: &Marking) -> Result<Refinement> {
    let edges = mesh.edges();
    let mut marked: HashSet<(usize, usize)> = HashSet::new();
    match marking {
        Marking::Elements(ts) => {
            for &t in ts {
                let tri = mesh.triangles.get(t).ok_or_else(|| missing_triangle(t))?;
                let (a, b) = tri.edge(tri.ref_edge);
                marked.insert(edge_key(a, b));
            }
        }
        Marking::ElementsFully(ts) => {
            for &t in ts {
                let tri = mesh.triangles.get(t).ok_or_else(|| missing_triangle(t))?;
                for m in 0..3 {
                    let (a, b) = tri.edge(m);
                    marked.insert(edge_key(a, b));
                }
            }
        }
        Marking::Edges(es) => {
            for &(a, b) in es {
                let k = edge_key(a, b);
                if !edges.contains_key(&k) {
                    return Err(Error::InvalidMesh(format!("edge ({a}, {b}) does not exist")));
                }
                marked.insert(k);
            }
        }
    }
    if marked.is_empty() {
        return Err(Error::InvalidMesh("nothing marked for refinement".into()));
    }

    // Closure: a triangle with any marked edge must bisect its reference edge.
    let limit = 10 * mesh.num_triangles().max(1);
    let mut passes = 0;
    loop {
        let mut changed = false;
        for tri in &mesh.triangles {
            let (a, b) = tri.edge(tri.ref_edge);
            let r = edge_key(a, b);
            if marked.contains(&r) {
                continue;
            }
            if (0..3).any(|m| {
                let (x, y) = tri.edge(m);
                marked.contains(&edge_key(x, y))
            }) {
                marked.insert(r);
                changed = true;
            }
        }
        passes += 1;
        if !changed {
            break;
        }
        if passes >= limit {
            return Err(Error::ClosureDiverged(passes));
        }
    }

    // New vertices in edge order for determinism.
    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut new_vertex_parents = Vec::new();
    for (key, ts) in &edges {
        if !marked.contains(key) {
            continue;
        }
        let id = vertices.len();
        vertices.push(0.5 * (mesh.vertices[key.0] + mesh.vertices[key.1]));
        boundary.push(mesh.kind == SurfaceKind::Open && ts.len() == 1);
        midpoint.insert(*key, id);
        new_vertex_parents.push(*key);
    }

    let mut triangles = Vec::with_capacity(2 * mesh.num_triangles());
    let mut parent = Vec::with_capacity(2 * mesh.num_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let before = triangles.len();
        bisect(*tri, &midpoint, &mut triangles);
        parent.extend(std::iter::repeat_n(t, triangles.len() - before));
    }

    let new_mesh = SurfaceMesh {
        vertices,
        triangles,
        boundary,
        kind: mesh.kind,
    };
    new_mesh.validate()?;

    let old_area = patch_areas(mesh);
    let new_area = patch_areas(&new_mesh);
    let mut tilde: Vec<usize> = (0..mesh.num_vertices())
        .filter(|&v| mesh.is_free(v) && new_area[v] < old_area[v] * (1.0 - 1e-12))
        .collect();
    tilde.extend((mesh.num_vertices()..new_mesh.num_vertices()).filter(|&v| new_mesh.is_free(v)));

    Ok(Refinement {
        mesh: new_mesh,
        parent,
        new_vertex_parents,
        tilde,
    })
}

fn missing_triangle(t: usize) -> Error {
    Error::InvalidMesh(format!("triangle {t} does not exist"))
}

/// Recursively bisects `tri` along every marked edge reachable by NVB.
fn bisect(tri: Triangle, midpoint: &HashMap<(usize, usize), usize>, out: &mut Vec<Triangle>) {
    let r = tri.ref_edge;
    let (x, y, z) = (tri.v[r], tri.v[(r + 1) % 3], tri.v[(r + 2) % 3]);
    match midpoint.get(&edge_key(x, y)) {
        None => out.push(tri),
        Some(&m) => {
            bisect(Triangle { v: [x, m, z], ref_edge: 2 }, midpoint, out);
            bisect(Triangle { v: [m, y, z], ref_edge: 1 }, midpoint, out);
        }
    }
}

fn patch_areas(mesh: &SurfaceMesh) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.area(t);
        for &v in &tri.v {
            out[v] += a;
        }
    }
    out
}

/// Nested sequence of NVB meshes with the bookkeeping needed for local
/// multilevel preconditioning.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub levels: Vec<SurfaceMesh>,
    /// `parents[l - 1][t]`: parent in level `l - 1` of triangle `t` of level `l`.
    pub parents: Vec<Vec<usize>>,
    /// `new_vertex_parents[l - 1]`: bisected edges creating level `l` vertices.
    pub new_vertex_parents: Vec<Vec<(usize, usize)>>,
    /// `tilde[l]`: vertices receiving a level-`l` hat in the multilevel splitting.
    pub tilde: Vec<Vec<usize>>,
}

impl MeshHierarchy {
    pub fn new(mesh: SurfaceMesh) -> Self {
        let tilde0 = (0..mesh.num_vertices()).filter(|&v| mesh.is_free(v)).collect();
        Self {
            levels: vec![mesh],
            parents: Vec::new(),
            new_vertex_parents: Vec::new(),
            tilde: vec![tilde0],
        }
    }

    pub fn finest(&self) -> &SurfaceMesh {
        self.levels.last().expect("hierarchy is never empty")
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn refine(&mut self, marking: &Marking) -> Result<()> {
        let r = nvb_refine(self.finest(), marking)?;
        self.levels.push(r.mesh);
        self.parents.push(r.parent);
        self.new_vertex_parents.push(r.new_vertex_parents);
        self.tilde.push(r.tilde);
        Ok(())
    }

    pub fn refine_with(&mut self, strategy: &MarkingStrategy) -> Result<()> {
        let marking = strategy.select(self.finest());
        self.refine(&marking)
    }

    /// Prolongs nodal values of a piecewise linear function from `level` to
    /// the finest mesh (exact, since the meshes are nested).
    pub fn prolong_nodal(&self, level: usize, values: &[f64]) -> Result<Vec<f64>> {
        if level >= self.levels.len() {
            return Err(Error::Hierarchy(format!("level {level} does not exist")));
        }
        if values.len() != self.levels[level].num_vertices() {
            return Err(Error::DimensionMismatch {
                expected: self.levels[level].num_vertices(),
                got: values.len(),
            });
        }
        let mut v = values.to_vec();
        for l in level + 1..self.levels.len() {
            for &(a, b) in &self.new_vertex_parents[l - 1] {
                v.push(0.5 * (v[a] + v[b]));
            }
            if v.len() != self.levels[l].num_vertices() {
                return Err(Error::Hierarchy(format!("vertex count mismatch on level {l}")));
            }
        }
        Ok(v)
    }
}

/// Singular features driving corner-weighted marking: segments (points are
/// degenerate segments).
pub type Feature = [Point; 2];

#[derive(Debug, Clone, PartialEq)]
pub enum MarkingStrategy {
    Uniform,
    /// Fully refine the fraction `theta` of triangles whose centroids are
    /// closest to `features`.
    CornerWeighted { theta: f64, features: Vec<Feature> },
    Explicit(Vec<usize>),
}

impl MarkingStrategy {
    pub fn select(&self, mesh: &SurfaceMesh) -> Marking {
        match self {
            MarkingStrategy::Uniform => Marking::ElementsFully((0..mesh.num_triangles()).collect()),
            MarkingStrategy::Explicit(ts) => Marking::ElementsFully(ts.clone()),
            MarkingStrategy::CornerWeighted { theta, features } => {
                let mut order: Vec<(f64, usize)> = (0..mesh.num_triangles())
                    .map(|t| {
                        let c = mesh.centroid(t);
                        let d = features
                            .iter()
                            .map(|f| segment_distance(&c, f))
                            .fold(f64::INFINITY, f64::min);
                        (d, t)
                    })
                    .collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let count = ((theta * mesh.num_triangles() as f64).ceil() as usize)
                    .clamp(1, mesh.num_triangles());
                let mut ts: Vec<usize> = order[..count].iter().map(|x| x.1).collect();
                ts.sort_unstable();
                Marking::ElementsFully(ts)
            }
        }
    }
}

fn segment_distance(x: &Point, seg: &Feature) -> f64 {
    let d = seg[1] - seg[0];
    let len2 = d.norm_squared();
    let s = if len2 == 0.0 {
        0.0
    } else {
        ((x - seg[0]).dot(&d) / len2).clamp(0.0, 1.0)
    };
    (x - (seg[0] + d * s)).norm()
}

/// The four corners of the unit screen.
pub fn screen_corners() -> Vec<Feature> {
    [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        .iter()
        .map(|&(x, y)| {
            let p = Point::new(x, y, 0.0);
            [p, p]
        })
        .collect()
}

/// The three re-entrant edges of the Fichera cube.
pub fn fichera_reentrant_edges() -> Vec<Feature> {
    (0..3)
        .map(|k| {
            let mut e = Point::zeros();
            e[k] = 1.0;
            [Point::zeros(), e]
        })
        .collect()
}

/// Vertex patch: the triangles around `center` in cyclic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub center: usize,
    /// Triangle `k` has the oriented edges `center -> rim[k]` and
    /// `rim[k + 1] -> center`.
    pub triangles: Vec<usize>,
    pub rim: Vec<usize>,
    /// `h_z = diam(omega_z)`.
    pub diameter: f64,
}

impl Patch {
    pub fn valence(&self) -> usize {
        self.triangles.len()
    }
}

/// Patches of all free vertices, fans ordered cyclically.
pub fn vertex_patches(mesh: &SurfaceMesh) -> Result<Vec<Patch>> {
    let vt = mesh.vertex_triangles();
    (0..mesh.num_vertices())
        .filter(|&v| mesh.is_free(v))
        .map(|v| patch_of(mesh, v, &vt[v]))
        .collect()
}

fn patch_of(mesh: &SurfaceMesh, z: usize, incident: &[usize]) -> Result<Patch> {
    // out(t) = vertex after z in t; in(t) = vertex before z.
    let mut by_out: HashMap<usize, usize> = HashMap::new();
    for &t in incident {
        let tri = &mesh.triangles[t];
        let k = tri.local_index(z).expect("incident triangle contains vertex");
        if by_out.insert(tri.v[(k + 1) % 3], t).is_some() {
            return Err(Error::NonManifoldVertex(z));
        }
    }
    let start = *incident.first().ok_or(Error::NonManifoldVertex(z))?;
    let mut triangles = Vec::with_capacity(incident.len());
    let mut rim = Vec::with_capacity(incident.len());
    let mut t = start;
    loop {
        let tri = &mesh.triangles[t];
        let k = tri.local_index(z).expect("incident triangle contains vertex");
        triangles.push(t);
        rim.push(tri.v[(k + 1) % 3]);
        let next_out = tri.v[(k + 2) % 3];
        match by_out.get(&next_out) {
            Some(&n) if n == start => break,
            Some(&n) if triangles.len() < incident.len() => t = n,
            _ => return Err(Error::NonManifoldVertex(z)),
        }
    }
    if triangles.len() != incident.len() {
        return Err(Error::NonManifoldVertex(z));
    }
    let mut pts: Vec<Point> = vec![mesh.vertices[z]];
    pts.extend(rim.iter().map(|&v| mesh.vertices[v]));
    let mut diameter: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            diameter = diameter.max((pts[i] - pts[j]).norm());
        }
    }
    Ok(Patch {
        center: z,
        triangles,
        rim,
        diameter,
    })
}

/// Reference patch identifier: the valence, which fixes the regular polygon
/// and hence the reference block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReferencePatchKey {
    pub valence: usize,
}

/// Data of the piecewise affine pullback from the reference polygon onto a
/// patch. Reference triangle `k` maps to `patch.triangles[k]` with reference
/// vertex `j` going to local vertex `(j + rotation[k]) % 3`, so the vertex
/// permutation is always a rotation (both meshes are consistently oriented).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatchPullback {
    pub rotation: Vec<usize>,
    /// Spoke `k` runs against the reference direction `center -> rim` in the
    /// global orientation convention (low id to high id).
    pub spoke_reversed: Vec<bool>,
}

pub fn classify_reference_patch(
    mesh: &SurfaceMesh,
    patch: &Patch,
) -> (ReferencePatchKey, PatchPullback) {
    let rotation = patch
        .triangles
        .iter()
        .map(|&t| mesh.triangles[t].local_index(patch.center).expect("patch triangle"))
        .collect();
    let spoke_reversed = patch.rim.iter().map(|&r| patch.center > r).collect();
    (
        ReferencePatchKey {
            valence: patch.valence(),
        },
        PatchPullback {
            rotation,
            spoke_reversed,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hanging_nodes(mesh: &SurfaceMesh) -> usize {
        // under bisection a hanging node would sit at the midpoint of an edge
        let key = |p: Point| [p.x, p.y, p.z].map(|c| (c * 1e9).round() as i64);
        let verts: HashSet<[i64; 3]> = mesh.vertices.iter().map(|&p| key(p)).collect();
        mesh.edges()
            .keys()
            .filter(|(a, b)| verts.contains(&key(0.5 * (mesh.vertices[*a] + mesh.vertices[*b]))))
            .count()
    }

    fn single_triangle() -> SurfaceMesh {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        let mut m = SurfaceMesh::new(v, vec![Triangle { v: [0, 1, 2], ref_edge: 0 }], SurfaceKind::Open)
            .unwrap();
        m.assign_longest_edge_refs();
        m
    }

    #[test]
    fn screen_counts() {
        let s1 = generate_screen(1);
        assert_eq!(s1.num_triangles(), 2);
        assert_eq!(s1.num_vertices(), 4);
        assert!(s1.boundary.iter().all(|&b| b));
        let s4 = generate_screen(4);
        assert_eq!(s4.num_triangles(), 32);
        assert_eq!(s4.boundary.iter().filter(|&&b| !b).count(), 9);
        assert!((s4.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fichera_is_a_sphere() {
        let f = generate_fichera();
        f.validate().unwrap();
        assert_eq!(f.num_triangles(), 48);
        assert_eq!(f.num_vertices(), 26);
        assert_eq!(f.edges().len(), 72);
        assert_eq!(f.euler_characteristic(), 2);
        // surface area of [-1,1]^3 minus the removed octant: 24 - 3 + 3
        assert!((f.total_area() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn fichera_normals_point_outward() {
        // signed volume via the divergence theorem equals 8 - 1 = 7
        let f = generate_fichera();
        let vol: f64 = (0..f.num_triangles())
            .map(|t| {
                let [a, b, c] = f.corners(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        assert!((vol - 7.0).abs() < 1e-12);
        let c = generate_cube();
        assert_eq!((c.num_vertices(), c.edges().len(), c.num_triangles()), (8, 18, 12));
    }

    #[test]
    fn shape_regularity_examples() {
        assert!((shape_regularity(&single_triangle()) - 4.0).abs() < 1e-14);
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.5, 3f64.sqrt() / 2.0, 0.0),
        ];
        let eq = SurfaceMesh::new(v, vec![Triangle { v: [0, 1, 2], ref_edge: 0 }], SurfaceKind::Open)
            .unwrap();
        assert!((shape_regularity(&eq) - 4.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisection_son_counts() {
        let m = single_triangle();
        let r = nvb_refine(&m, &Marking::Elements(vec![0])).unwrap();
        assert_eq!(r.mesh.num_triangles(), 2);
        let r = nvb_refine(&m, &Marking::ElementsFully(vec![0])).unwrap();
        assert_eq!(r.mesh.num_triangles(), 4);
        assert!(nvb_refine(&m, &Marking::Elements(vec![])).is_err());
    }

    #[test]
    fn two_triangle_screen_full_refinement() {
        let r = nvb_refine(&generate_screen(1), &Marking::ElementsFully(vec![0, 1])).unwrap();
        assert_eq!(r.mesh.num_triangles(), 8);
        assert_eq!(hanging_nodes(&r.mesh), 0);
        // new center vertex is the only free one
        assert_eq!(r.tilde, vec![4 + 2]);
    }

    #[test]
    fn closure_propagates() {
        // marking one non-reference edge of an interior triangle forces neighbors
        let s = generate_screen(4);
        let (a, b) = s.triangles[10].edge((s.triangles[10].ref_edge + 1) % 3);
        let r = nvb_refine(&s, &Marking::Edges(vec![(a, b)])).unwrap();
        assert_eq!(hanging_nodes(&r.mesh), 0);
        assert!(r.mesh.num_triangles() > s.num_triangles() + 2);
    }

    #[test]
    fn refinement_invariants() {
        for mut mesh in [generate_screen(2), generate_fichera()] {
            let gamma0 = shape_regularity(&mesh);
            let area0 = mesh.total_area();
            let strategies = [
                MarkingStrategy::Uniform,
                MarkingStrategy::CornerWeighted {
                    theta: 0.25,
                    features: screen_corners(),
                },
            ];
            for level in 0..4 {
                let r = nvb_refine(&mesh, &strategies[level % 2].select(&mesh)).unwrap();
                assert_eq!(hanging_nodes(&r.mesh), 0);
                assert!((r.mesh.total_area() - area0).abs() < 1e-12 * area0);
                // nestedness: child vertices lie in the closed parent
                for (c, &par) in r.parent.iter().enumerate() {
                    let [a, b, cc] = mesh.corners(par);
                    for v in r.mesh.corners(c) {
                        let n = (b - a).cross(&(cc - a));
                        let lam = [
                            (b - v).cross(&(cc - v)).dot(&n) / n.norm_squared(),
                            (cc - v).cross(&(a - v)).dot(&n) / n.norm_squared(),
                            (a - v).cross(&(b - v)).dot(&n) / n.norm_squared(),
                        ];
                        assert!(lam.iter().all(|&l| l >= -1e-12));
                        assert!((lam.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                }
                // tilde: new free vertices and old vertices with shrunk patches
                let old_n = mesh.num_vertices();
                for v in old_n..r.mesh.num_vertices() {
                    assert_eq!(r.tilde.contains(&v), r.mesh.is_free(v));
                }
                let (oa, na) = (patch_areas(&mesh), patch_areas(&r.mesh));
                for &v in r.tilde.iter().filter(|&&v| v < old_n) {
                    assert!(na[v] < oa[v]);
                }
                assert!(shape_regularity(&r.mesh) <= 3.0 * gamma0);
                mesh = r.mesh;
            }
        }
    }

    #[test]
    fn uniform_refinement_keeps_shape_regularity() {
        for mut mesh in [generate_screen(1), generate_fichera()] {
            let g0 = shape_regularity(&mesh);
            for _ in 0..6 {
                mesh = nvb_refine(&mesh, &MarkingStrategy::Uniform.select(&mesh)).unwrap().mesh;
                assert!(shape_regularity(&mesh) <= 3.0 * g0);
            }
        }
    }

    #[test]
    fn patches() {
        let p2 = vertex_patches(&generate_screen(2)).unwrap();
        assert_eq!(p2.len(), 1);
        assert_eq!(p2[0].valence(), 8);
        assert!(vertex_patches(&generate_screen(1)).unwrap().is_empty());
        let f = generate_fichera();
        assert_eq!(vertex_patches(&f).unwrap().len(), f.num_vertices());
    }

    #[test]
    fn patch_fans_are_cyclic_and_diameters_comparable() {
        for mesh in [generate_screen(4), generate_fichera()] {
            for patch in vertex_patches(&mesh).unwrap() {
                let n = patch.valence();
                for k in 0..n {
                    let tri = mesh.triangles[patch.triangles[k]];
                    let c = tri.local_index(patch.center).unwrap();
                    assert_eq!(tri.v[(c + 1) % 3], patch.rim[k]);
                    assert_eq!(tri.v[(c + 2) % 3], patch.rim[(k + 1) % n]);
                    let ratio = patch.diameter / mesh.diameter(patch.triangles[k]);
                    assert!((1.0 - 1e-12..=4.0).contains(&ratio));
                }
            }
        }
    }

    #[test]
    fn reference_keys() {
        let hex = reference_patch_mesh(6);
        let mut shifted = hex.dilated(1.0, Point::new(3.0, -1.0, 2.0));
        shifted.assign_longest_edge_refs();
        // the center is the only free vertex of the polygon mesh
        let p = vertex_patches(&hex).unwrap();
        let q = vertex_patches(&shifted).unwrap();
        let (k1, _) = classify_reference_patch(&hex, &p[0]);
        let (k2, _) = classify_reference_patch(&shifted, &q[0]);
        assert_eq!(k1.valence, 6);
        assert_eq!(k1, k2);
        assert!((reference_patch_diameter(6) - 2.0).abs() < 1e-15);
        assert!((reference_patch_diameter(4) - 2.0).abs() < 1e-15);
        assert!((reference_patch_diameter(3) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fichera_key_count_is_stable() {
        let mut mesh = generate_fichera();
        mesh = nvb_refine(&mesh, &MarkingStrategy::Uniform.select(&mesh)).unwrap().mesh;
        let mut counts = Vec::new();
        for _ in 0..3 {
            let keys: HashSet<ReferencePatchKey> = vertex_patches(&mesh)
                .unwrap()
                .iter()
                .map(|p| classify_reference_patch(&mesh, p).0)
                .collect();
            counts.push(keys.len());
            mesh = nvb_refine(&mesh, &MarkingStrategy::Uniform.select(&mesh)).unwrap().mesh;
        }
        assert!(counts.windows(2).all(|w| w[0] == w[1]), "{counts:?}");
    }

    #[test]
    fn text_round_trip() {
        let m = nvb_refine(&generate_fichera(), &Marking::Elements(vec![3, 17])).unwrap().mesh;
        let text = m.to_text();
        let back = SurfaceMesh::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        assert!(SurfaceMesh::from_text("surface open\n1 0\n0 0 0 1\n").is_err());
        assert!(SurfaceMesh::from_text("surface flat\n").is_err());
    }

    #[test]
    fn hierarchy_prolongation_of_hats() {
        let mut h = MeshHierarchy::new(generate_screen(2));
        h.refine_with(&MarkingStrategy::Uniform).unwrap();
        h.refine_with(&MarkingStrategy::CornerWeighted {
            theta: 0.25,
            features: screen_corners(),
        })
        .unwrap();
        assert_eq!(h.tilde[0], vec![4]);
        let mut e = vec![0.0; h.levels[0].num_vertices()];
        e[4] = 1.0;
        let fine = h.prolong_nodal(0, &e).unwrap();
        assert_eq!(fine[4], 1.0);
        assert!(fine.iter().all(|&x| (0.0..=1.0).contains(&x)));
        // the coarse hat is piecewise linear on level 0: compare at every fine vertex
        let coarse = &h.levels[0];
        for (i, v) in h.finest().vertices.iter().enumerate() {
            let mut value = None;
            for t in 0..coarse.num_triangles() {
                let [a, b, c] = coarse.corners(t);
                let n = (b - a).cross(&(c - a));
                let lam = [
                    (b - v).cross(&(c - v)).dot(&n) / n.norm_squared(),
                    (c - v).cross(&(a - v)).dot(&n) / n.norm_squared(),
                    (a - v).cross(&(b - v)).dot(&n) / n.norm_squared(),
                ];
                if lam.iter().all(|&l| l >= -1e-12) {
                    let k = coarse.triangles[t].local_index(4);
                    value = Some(k.map_or(0.0, |k| lam[k]));
                    break;
                }
            }
            assert!((fine[i] - value.unwrap()).abs() < 1e-14);
        }
    }
}
