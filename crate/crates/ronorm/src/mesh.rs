//! Simplicial surface meshes and the discrete operators built on them.
//!
//! A [`TriMesh`] is a triangle mesh embedded in 2D or 3D. From it we assemble
//! the cotangent stiffness matrix and the lumped (diagonal) mass matrix,
//! which together define the discrete Laplacian eigenproblem
//! `L phi = lambda M phi` under zero-Neumann boundary conditions.
//!
//! Mesh text format: first non-comment line is `n_vertices n_triangles dim`,
//! followed by `n_vertices` lines of `dim` floats and `n_triangles` lines of
//! three zero-based vertex indices. Tokens are whitespace-separated and `#`
//! starts a comment that runs to end of line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Mat;

const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Unstructured triangle mesh. Vertices are stored as 3D points; planar
/// meshes keep z = 0 and remember `dim = 2` for serialization.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    dim: usize,
}

/// Symmetric sparse matrix stored as upper-triangular triplets
/// (`row <= col`, each unordered pair stored once).
#[derive(Clone, Debug)]
pub struct SparseSymMatrix {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSymMatrix {
    pub fn from_upper_triplets(n: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r > c || c >= n {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r},{c}) is not upper-triangular within dimension {n}"
                )));
            }
        }
        Ok(SparseSymMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// y = A x, expanding the symmetric part.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            *m.at_mut(r, c) += v;
            if r != c {
                *m.at_mut(c, r) += v;
            }
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            s[r] += v;
            if r != c {
                s[c] += v;
            }
        }
        s
    }

    /// Stored value for the unordered pair (i, j), zero if absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.entries
            .iter()
            .filter(|&&(r, c, _)| (r, c) == key)
            .map(|&(_, _, v)| v)
            .sum()
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>, dim: usize) -> Result<Self> {
        let mesh = TriMesh {
            vertices,
            triangles,
            dim,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Index of the vertex closest to the centroid of all vertices.
    /// Ties resolve to the lowest index, so the choice is deterministic.
    pub fn central_vertex(&self) -> usize {
        let n = self.vertices.len() as f64;
        let mut cx = [0.0; 3];
        for v in &self.vertices {
            for k in 0..3 {
                cx[k] += v[k] / n;
            }
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = (0..3).map(|k| (v[k] - cx[k]).powi(2)).sum::<f64>();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidArgument(format!(
                "mesh dimension must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.triangles.is_empty() {
            return Err(Error::InvalidArgument("mesh has no triangles".into()));
        }
        for v in &self.vertices {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidArgument("non-finite vertex coordinate".into()));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(Error::VertexIndexOutOfRange {
                        tri: t,
                        vertex: v,
                        n_vertices: n,
                    });
                }
            }
            let area = self.triangle_area(t);
            // NaN areas must also be rejected, hence the negated comparison
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(area >= MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateTriangle { tri: t, area });
            }
        }
        // Connectivity: union vertices of every triangle; every vertex must
        // end up in the single component (isolated vertices count as their
        // own component, which would give the LBO a larger nullspace).
        let mut uf = UnionFind::new(n);
        for tri in &self.triangles {
            uf.union(tri[0], tri[1]);
            uf.union(tri[0], tri[2]);
        }
        let mut roots = Vec::new();
        for v in 0..n {
            let r = uf.find(v);
            if !roots.contains(&r) {
                roots.push(r);
            }
        }
        if roots.len() != 1 {
            return Err(Error::MeshDisconnected {
                components: roots.len(),
            });
        }
        Ok(())
    }

    /// Parse the mesh text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cursor = TokenCursor::new(text);
        let n_vertices: usize = cursor.next_parsed("vertex count")?;
        let n_triangles: usize = cursor.next_parsed("triangle count")?;
        let dim: usize = cursor.next_parsed("dimension")?;
        if dim != 2 && dim != 3 {
            return Err(Error::MeshParse {
                line: cursor.line,
                msg: format!("dimension must be 2 or 3, got {dim}"),
            });
        }
        let mut vertices = Vec::new();
        for _ in 0..n_vertices {
            let mut v = [0.0; 3];
            for item in v.iter_mut().take(dim) {
                *item = cursor.next_parsed("vertex coordinate")?;
            }
            vertices.push(v);
        }
        let mut triangles = Vec::new();
        for _ in 0..n_triangles {
            let mut t = [0usize; 3];
            for item in t.iter_mut() {
                *item = cursor.next_parsed("triangle index")?;
            }
            triangles.push(t);
        }
        if let Some((line, tok)) = cursor.peek() {
            return Err(Error::MeshParse {
                line,
                msg: format!("unexpected trailing token '{tok}'"),
            });
        }
        TriMesh::new(vertices, triangles, dim)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        TriMesh::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.vertices.len(),
            self.triangles.len(),
            self.dim
        );
        for v in &self.vertices {
            for k in 0..self.dim {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", v[k]);
            }
            out.push('\n');
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// SHA-256 of the canonical text form, used for provenance headers.
    pub fn checksum(&self) -> String {
        crate::container::sha256_hex(self.to_text().as_bytes())
    }

    /// Structured triangulation of the rectangle [0,w] x [0,h] with
    /// (nx+1) x (ny+1) vertices.
    pub fn rectangle_grid(nx: usize, ny: usize, w: f64, h: f64) -> Self {
        assert!(nx >= 1 && ny >= 1);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([w * i as f64 / nx as f64, h * j as f64 / ny as f64, 0.0]);
            }
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
                // alternate the diagonal for a more isotropic triangulation
                if (i + j) % 2 == 0 {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                } else {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }
        TriMesh::new(vertices, triangles, 2).expect("grid mesh is valid")
    }

    /// Unit square triangulation with (n+1)^2 vertices.
    pub fn unit_square_grid(n: usize) -> Self {
        TriMesh::rectangle_grid(n, n, 1.0, 1.0)
    }

    /// L-shaped domain: the unit square with the upper-right quadrant
    /// removed. Exercises a non-convex spatial domain.
    pub fn lshape_grid(n: usize) -> Self {
        assert!(n >= 2 && n.is_multiple_of(2));
        let full = TriMesh::rectangle_grid(n, n, 1.0, 1.0);
        let keep = |tri: &[usize; 3]| {
            // drop triangles whose centroid lies in the removed quadrant
            let cx: f64 = tri.iter().map(|&v| full.vertices[v][0]).sum::<f64>() / 3.0;
            let cy: f64 = tri.iter().map(|&v| full.vertices[v][1]).sum::<f64>() / 3.0;
            !(cx > 0.5 && cy > 0.5)
        };
        let triangles: Vec<[usize; 3]> = full.triangles.iter().filter(|t| keep(t)).cloned().collect();
        // compact vertex indices
        let mut remap = vec![usize::MAX; full.vertices.len()];
        let mut vertices = Vec::new();
        let mut new_tris = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let mut nt = [0usize; 3];
            for (k, &v) in tri.iter().enumerate() {
                if remap[v] == usize::MAX {
                    remap[v] = vertices.len();
                    vertices.push(full.vertices[v]);
                }
                nt[k] = remap[v];
            }
            new_tris.push(nt);
        }
        TriMesh::new(vertices, new_tris, 2).expect("lshape mesh is valid")
    }

    /// Midpoint refinement: every triangle splits into four. Total area is
    /// preserved exactly (up to roundoff).
    pub fn refine(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut midpoint = BTreeMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let m = [
                    0.5 * (vertices[a][0] + vertices[b][0]),
                    0.5 * (vertices[a][1] + vertices[b][1]),
                    0.5 * (vertices[a][2] + vertices[b][2]),
                ];
                vertices.push(m);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(self.triangles.len() * 4);
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        TriMesh::new(vertices, triangles, self.dim).expect("refined mesh is valid")
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    0.5 * norm3(cross(sub(b, a), sub(c, a)))
}

/// Assemble the cotangent stiffness matrix and the lumped mass vector.
///
/// Off-diagonal stiffness entries are `-(cot alpha + cot beta) / 2` summed
/// over the triangles sharing the edge; diagonals make rows sum to zero,
/// which encodes the zero-Neumann boundary condition. The lumped mass at a
/// vertex is one third of the area of its incident triangles. Obtuse
/// triangles are allowed and may produce positive off-diagonal entries
/// (negative cotangent weights); nothing is clamped.
pub fn assemble_operators(mesh: &TriMesh) -> (SparseSymMatrix, Vec<f64>) {
    let n = mesh.n_vertices();
    let mut off: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut mass = vec![0.0; n];

    for &[a, b, c] in mesh.triangles() {
        let pa = mesh.vertices()[a];
        let pb = mesh.vertices()[b];
        let pc = mesh.vertices()[c];
        let area = triangle_area(pa, pb, pc);
        let third = area / 3.0;
        mass[a] += third;
        mass[b] += third;
        mass[c] += third;

        // corner (opposite edge): cot of the interior angle at the corner
        let corners = [(a, b, c), (b, c, a), (c, a, b)];
        for &(opp, i, j) in &corners {
            let p_opp = mesh.vertices()[opp];
            let u = sub(mesh.vertices()[i], p_opp);
            let v = sub(mesh.vertices()[j], p_opp);
            let cot = dot3(u, v) / norm3(cross(u, v));
            let key = (i.min(j), i.max(j));
            *off.entry(key).or_insert(0.0) += -0.5 * cot;
        }
    }

    let mut diag = vec![0.0; n];
    for (&(i, j), &v) in &off {
        diag[i] -= v;
        diag[j] -= v;
    }
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(off.len() + n);
    for (i, &d) in diag.iter().enumerate() {
        entries.push((i, i, d));
    }
    for (&(i, j), &v) in &off {
        entries.push((i, j, v));
    }
    entries.sort_by_key(|&(r, c, _)| (r, c));
    let stiffness = SparseSymMatrix::from_upper_triplets(n, entries).expect("assembly is upper-triangular");
    (stiffness, mass)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Whitespace token stream with line tracking and `#` comments.
struct TokenCursor<'a> {
    tokens: std::vec::IntoIter<(usize, &'a str)>,
    peeked: Option<(usize, &'a str)>,
    line: usize,
}

impl<'a> TokenCursor<'a> {
    fn new(text: &'a str) -> Self {
        let mut tokens = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("");
            for tok in content.split_whitespace() {
                tokens.push((ln + 1, tok));
            }
        }
        TokenCursor {
            tokens: tokens.into_iter(),
            peeked: None,
            line: 1,
        }
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.tokens.next();
        }
        self.peeked
    }

    fn next_parsed<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.peek();
        self.peeked = None;
        match tok {
            Some((line, s)) => {
                self.line = line;
                s.parse::<T>().map_err(|_| Error::MeshParse {
                    line,
                    msg: format!("cannot parse {what} from '{s}'"),
                })
            }
            None => Err(Error::MeshParse {
                line: self.line,
                msg: format!("unexpected end of input, expected {what}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen;

    fn unit_square_two_triangles() -> TriMesh {
        // (0,0) (1,0) (1,1) (0,1), split along the (0,0)-(1,1) diagonal
        TriMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            2,
        )
        .unwrap()
    }

    #[test]
    fn parse_minimal_mesh() {
        let text = "3 1 2\n0 0\n1 0\n0 1\n0 1 2\n";
        let mesh = TriMesh::parse(text).unwrap();
        assert_eq!(mesh.n_vertices(), 3);
        assert_eq!(mesh.n_triangles(), 1);
    }

    #[test]
    fn parse_with_comments_and_whitespace() {
        let text = "# a comment\n3 1 2  # header\n\n0 0\n1 0 # vertex\n0 1\n0 1 2\n";
        let mesh = TriMesh::parse(text).unwrap();
        assert_eq!(mesh.n_vertices(), 3);
    }

    #[test]
    fn parse_rejects_out_of_range_index() {
        let text = "3 1 2\n0 0\n1 0\n0 1\n0 1 5\n";
        match TriMesh::parse(text) {
            Err(Error::VertexIndexOutOfRange { vertex: 5, .. }) => {}
            other => panic!("expected index error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_degenerate_triangle() {
        let text = "3 1 2\n0 0\n1 0\n2 0\n0 1 2\n";
        match TriMesh::parse(text) {
            Err(Error::DegenerateTriangle { .. }) => {}
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_disconnected_mesh() {
        let text = "6 2 2\n0 0\n1 0\n0 1\n5 5\n6 5\n5 6\n0 1 2\n3 4 5\n";
        match TriMesh::parse(text) {
            Err(Error::MeshDisconnected { components: 2 }) => {}
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(TriMesh::parse("x y z").is_err());
        assert!(TriMesh::parse("").is_err());
        assert!(TriMesh::parse("3 1 2\n0 0\n1 0\n0 1\n0 1 2\nextra").is_err());
    }

    #[test]
    fn unit_square_total_area() {
        let mesh = unit_square_two_triangles();
        // each half-cross-product is 1/2
        assert!((mesh.total_area() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn right_triangle_cotangent_weights() {
        let mesh = TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
            2,
        )
        .unwrap();
        let (l, _) = assemble_operators(&mesh);
        // legs (0,1) and (0,2): angle opposite is 45 deg, -cot(45)/2 = -0.5
        assert!((l.get(0, 1) + 0.5).abs() <= 1e-12);
        assert!((l.get(0, 2) + 0.5).abs() <= 1e-12);
        // hypotenuse (1,2): opposite angle 90 deg, cot = 0
        assert!(l.get(1, 2).abs() <= 1e-12);
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let mesh = TriMesh::unit_square_grid(5);
        let (l, _) = assemble_operators(&mesh);
        for s in l.row_sums() {
            assert!(s.abs() <= 1e-10, "row sum {s}");
        }
        // equivalently L * 1 = 0
        let ones = vec![1.0; mesh.n_vertices()];
        for v in l.matvec(&ones) {
            assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn lumped_mass_sums_to_area() {
        let mesh = unit_square_two_triangles();
        let (_, m) = assemble_operators(&mesh);
        let total: f64 = m.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        assert!(m.iter().all(|&x| x > 0.0));

        let lshape = TriMesh::lshape_grid(8);
        let (_, m2) = assemble_operators(&lshape);
        let total2: f64 = m2.iter().sum();
        assert!((total2 - 0.75).abs() <= 1e-10);
    }

    #[test]
    fn refinement_preserves_mass() {
        let mesh = TriMesh::lshape_grid(4);
        let fine = mesh.refine();
        assert_eq!(fine.n_triangles(), 4 * mesh.n_triangles());
        let (_, m0) = assemble_operators(&mesh);
        let (_, m1) = assemble_operators(&fine);
        let s0: f64 = m0.iter().sum();
        let s1: f64 = m1.iter().sum();
        assert!((s0 - s1).abs() <= 1e-10);
    }

    #[test]
    fn stiffness_is_positive_semidefinite() {
        let mesh = TriMesh::unit_square_grid(4);
        let (l, _) = assemble_operators(&mesh);
        let dense = l.to_dense();
        let (vals, _) = sym_eigen(&dense).unwrap();
        let scale = vals.last().copied().unwrap_or(1.0).max(1.0);
        assert!(vals[0] >= -1e-9 * scale, "min eigenvalue {}", vals[0]);
    }

    #[test]
    fn text_roundtrip() {
        let mesh = TriMesh::lshape_grid(4);
        let text = mesh.to_text();
        let back = TriMesh::parse(&text).unwrap();
        assert_eq!(back.n_vertices(), mesh.n_vertices());
        assert_eq!(back.n_triangles(), mesh.n_triangles());
        assert_eq!(back.checksum(), mesh.checksum());
    }

    #[test]
    fn three_d_surface_mesh_assembles() {
        // the unit square lifted onto a tilted plane in 3D
        let mesh = TriMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.5],
                [1.0, 1.0, 1.0],
                [0.0, 1.0, 0.5],
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            3,
        )
        .unwrap();
        let (l, m) = assemble_operators(&mesh);
        for s in l.row_sums() {
            assert!(s.abs() <= 1e-10);
        }
        let total: f64 = m.iter().sum();
        assert!((total - mesh.total_area()).abs() <= 1e-10);
    }
}
