//! Conforming triangulations of planar polygonal domains.
//!
//! A [`Mesh`] keeps its boundary edges in one global order, counterclockwise
//! along each loop. Every edge-indexed quantity in the crate (Robin
//! coefficients, gradients, perturbations) uses that order.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Triangles touching each undirected edge, keyed by sorted vertex pair.
type EdgeOccurrences = HashMap<(usize, usize), Vec<(usize, usize, usize)>>;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints, oriented so that the domain lies on the left.
    pub vertices: [usize; 2],
    pub length: f64,
    /// Outward unit normal.
    pub normal: [f64; 2],
    /// The unique triangle containing this edge.
    pub triangle: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    boundary_vertices: Vec<usize>,
    is_boundary: Vec<bool>,
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    /// Builds and validates a mesh. When `boundary_order` is given it must
    /// match the boundary derived from the triangles (same directed edges)
    /// and its order is kept; otherwise loops are traced starting from the
    /// lowest vertex index.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_order: Option<Vec<[usize; 2]>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if nv < 3 || triangles.is_empty() {
            return Err(Error::InvalidParameter(
                "a mesh needs at least three vertices and one triangle".into(),
            ));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidParameter(format!(
                    "triangle {t} references a vertex out of range"
                )));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::Orientation { triangle: t, area });
            }
        }

        // Each undirected edge: the directed occurrences (a, b, triangle).
        let mut occurrences: EdgeOccurrences = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                occurrences
                    .entry((a.min(b), a.max(b)))
                    .or_default()
                    .push((a, b, t));
            }
        }
        let mut derived: HashMap<(usize, usize), usize> = HashMap::new();
        for (&(lo, hi), occ) in &occurrences {
            match occ.len() {
                1 => {
                    let (a, b, t) = occ[0];
                    derived.insert((a, b), t);
                }
                2 => {
                    if occ[0].0 == occ[1].0 {
                        return Err(Error::NonManifold {
                            a: lo,
                            b: hi,
                            message: "two triangles traverse the edge in the same direction".into(),
                        });
                    }
                }
                n => {
                    return Err(Error::NonManifold {
                        a: lo,
                        b: hi,
                        message: format!("edge shared by {n} triangles"),
                    })
                }
            }
        }

        let order = match boundary_order {
            Some(declared) => {
                if declared.len() != derived.len() {
                    // Report the first declared edge that is not a boundary edge, if any.
                    for &[a, b] in &declared {
                        if !derived.contains_key(&(a, b)) {
                            return Err(declared_edge_error(a, b, &occurrences));
                        }
                    }
                    return Err(Error::NonManifold {
                        a: 0,
                        b: 0,
                        message: format!(
                            "{} boundary edges declared but the triangulation has {}",
                            declared.len(),
                            derived.len()
                        ),
                    });
                }
                for &[a, b] in &declared {
                    if !derived.contains_key(&(a, b)) {
                        return Err(declared_edge_error(a, b, &occurrences));
                    }
                }
                check_closed_loops(&declared, nv)?;
                declared
            }
            None => trace_loops(&derived, nv)?,
        };

        let boundary_edges = order
            .iter()
            .map(|&[a, b]| {
                let (pa, pb) = (vertices[a], vertices[b]);
                let (tx, ty) = (pb[0] - pa[0], pb[1] - pa[1]);
                let length = tx.hypot(ty);
                BoundaryEdge {
                    vertices: [a, b],
                    length,
                    normal: [ty / length, -tx / length],
                    triangle: derived[&(a, b)],
                }
            })
            .collect::<Vec<_>>();

        let mut is_boundary = vec![false; nv];
        for e in &boundary_edges {
            is_boundary[e.vertices[0]] = true;
            is_boundary[e.vertices[1]] = true;
        }
        let boundary_vertices = (0..nv).filter(|&i| is_boundary[i]).collect();

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            boundary_vertices,
            is_boundary,
        })
    }

    /// Structured triangulation of the unit square with `n` cells per side.
    pub fn square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("square mesh needs n >= 1".into()));
        }
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let mut order = Vec::with_capacity(4 * n);
        for i in 0..n {
            order.push([idx(i, 0), idx(i + 1, 0)]);
        }
        for j in 0..n {
            order.push([idx(n, j), idx(n, j + 1)]);
        }
        for i in (1..=n).rev() {
            order.push([idx(i, n), idx(i - 1, n)]);
        }
        for j in (1..=n).rev() {
            order.push([idx(0, j), idx(0, j - 1)]);
        }
        Self::new(vertices, triangles, Some(order))
    }

    /// Polygonal unit disk: a center vertex and `n_rings` concentric rings,
    /// the outer one a regular `n_boundary`-gon inscribed in the unit circle.
    /// Ring `k` carries about `n_boundary * k / n_rings` vertices.
    pub fn disk(n_boundary: usize, n_rings: usize) -> Result<Self> {
        Self::ellipse(n_boundary, n_rings, 1.0, 1.0)
    }

    /// The disk construction stretched to the ellipse with semi-axes `a`, `b`.
    pub fn ellipse(n_boundary: usize, n_rings: usize, a: f64, b: f64) -> Result<Self> {
        if n_boundary < 3 || n_rings == 0 {
            return Err(Error::InvalidParameter(
                "disk mesh needs n_boundary >= 3 and n_rings >= 1".into(),
            ));
        }
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidParameter("ellipse semi-axes must be positive".into()));
        }
        let mut vertices = vec![[0.0, 0.0]];
        let mut rings: Vec<Vec<usize>> = Vec::with_capacity(n_rings);
        for k in 1..=n_rings {
            let count = if k == n_rings {
                n_boundary
            } else {
                ((n_boundary * k) as f64 / n_rings as f64).round().max(3.0) as usize
            };
            let r = k as f64 / n_rings as f64;
            let start = vertices.len();
            for i in 0..count {
                let theta = 2.0 * PI * i as f64 / count as f64;
                vertices.push([a * r * theta.cos(), b * r * theta.sin()]);
            }
            rings.push((start..start + count).collect());
        }

        let mut triangles = Vec::new();
        let first = &rings[0];
        for i in 0..first.len() {
            triangles.push([0, first[i], first[(i + 1) % first.len()]]);
        }
        for w in rings.windows(2) {
            let (inner, outer) = (&w[0], &w[1]);
            let (ni, no) = (inner.len(), outer.len());
            let (mut i, mut j) = (0usize, 0usize);
            // Merge the two rings by angle; both start at angle zero.
            while i < ni || j < no {
                let next_inner = (i + 1) as f64 / ni as f64;
                let next_outer = (j + 1) as f64 / no as f64;
                if j < no && (i == ni || next_outer <= next_inner) {
                    triangles.push([inner[i % ni], outer[j], outer[(j + 1) % no]]);
                    j += 1;
                } else {
                    triangles.push([inner[i], outer[j % no], inner[(i + 1) % ni]]);
                    i += 1;
                }
            }
        }
        let outer = rings.last().expect("at least one ring");
        let order = (0..outer.len())
            .map(|i| [outer[i], outer[(i + 1) % outer.len()]])
            .collect();
        Self::new(vertices, triangles, Some(order))
    }

    /// Parses the plain-text `robinmesh 1` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (ln, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty mesh file".into(),
        })?;
        if header.split_whitespace().collect::<Vec<_>>() != ["robinmesh", "1"] {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected header 'robinmesh 1', found '{header}'"),
            });
        }

        fn section<'a>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
            tag: &str,
        ) -> Result<(usize, usize)> {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: 0,
                message: format!("missing '{tag}' section"),
            })?;
            let mut it = l.split_whitespace();
            if it.next() != Some(tag) {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("expected '{tag} <count>'"),
                });
            }
            let count = it
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or(Error::Parse {
                    line: ln,
                    message: format!("bad count in '{tag}' line"),
                })?;
            Ok((ln, count))
        }

        fn fields<T: std::str::FromStr, const N: usize>(ln: usize, l: &str) -> Result<[T; N]> {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != N {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("expected {N} fields, found {}", parts.len()),
                });
            }
            let mut out = Vec::with_capacity(N);
            for p in parts {
                out.push(p.parse::<T>().map_err(|_| Error::Parse {
                    line: ln,
                    message: format!("cannot parse '{p}'"),
                })?);
            }
            out.try_into().map_err(|_| Error::Parse {
                line: ln,
                message: "field count".into(),
            })
        }

        let mut lines_iter = lines;
        let (_, nv) = section(&mut lines_iter, "V")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines_iter.next().ok_or(Error::Parse {
                line: 0,
                message: "unexpected end of file in vertex block".into(),
            })?;
            vertices.push(fields::<f64, 2>(ln, l)?);
        }
        let (_, nt) = section(&mut lines_iter, "T")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines_iter.next().ok_or(Error::Parse {
                line: 0,
                message: "unexpected end of file in triangle block".into(),
            })?;
            let t = fields::<usize, 3>(ln, l)?;
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::Parse {
                    line: ln,
                    message: "vertex index out of range".into(),
                });
            }
            triangles.push(t);
        }
        let (_, nb) = section(&mut lines_iter, "B")?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (ln, l) = lines_iter.next().ok_or(Error::Parse {
                line: 0,
                message: "unexpected end of file in boundary block".into(),
            })?;
            let e = fields::<usize, 2>(ln, l)?;
            if e.iter().any(|&v| v >= nv) {
                return Err(Error::Parse {
                    line: ln,
                    message: "vertex index out of range".into(),
                });
            }
            boundary.push(e);
        }
        if let Some((ln, l)) = lines_iter.next() {
            return Err(Error::Parse {
                line: ln,
                message: format!("trailing content '{l}'"),
            });
        }
        Self::new(vertices, triangles, Some(boundary))
    }

    /// Serializes to the `robinmesh 1` format. Coordinates use the shortest
    /// representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::from("robinmesh 1\n");
        let _ = writeln!(s, "V {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", v[0], v[1]);
        }
        let _ = writeln!(s, "T {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "B {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {}", e.vertices[0], e.vertices[1]);
        }
        s
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Sorted indices of vertices lying on the boundary.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.is_boundary[v]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.boundary_edges.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary_edges.iter().map(|e| e.length).sum()
    }

    /// Area enclosed by the boundary loops (shoelace formula).
    pub fn shoelace_area(&self) -> f64 {
        0.5 * self
            .boundary_edges
            .iter()
            .map(|e| {
                let (p, q) = (self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        self.boundary_edges.iter().map(|e| e.length).collect()
    }

    /// Mesh size: the longest edge of any triangle.
    pub fn mesh_size(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                (0..3).map(move |k| {
                    let (p, q) = (self.vertices[t[k]], self.vertices[t[(k + 1) % 3]]);
                    (q[0] - p[0]).hypot(q[1] - p[1])
                })
            })
            .fold(0.0, f64::max)
    }

    /// Arclength of each boundary edge midpoint along the global boundary order.
    pub fn edge_arclength(&self) -> Vec<f64> {
        let mut s = 0.0;
        self.boundary_edges
            .iter()
            .map(|e| {
                let mid = s + 0.5 * e.length;
                s += e.length;
                mid
            })
            .collect()
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.boundary_edges[e].vertices;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    pub fn triangle_centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// For every vertex, the boundary edges incident to it.
    pub fn vertex_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (e, edge) in self.boundary_edges.iter().enumerate() {
            out[edge.vertices[0]].push(e);
            out[edge.vertices[1]].push(e);
        }
        out
    }
}

fn declared_edge_error(
    a: usize,
    b: usize,
    occurrences: &EdgeOccurrences,
) -> Error {
    match occurrences.get(&(a.min(b), a.max(b))) {
        Some(occ) if occ.len() >= 2 => Error::NonManifold {
            a,
            b,
            message: format!("declared boundary edge is shared by {} triangles", occ.len()),
        },
        Some(_) => Error::NonManifold {
            a,
            b,
            message: "declared boundary edge has the wrong orientation".into(),
        },
        None => Error::NonManifold {
            a,
            b,
            message: "declared boundary edge is not an edge of the triangulation".into(),
        },
    }
}

fn check_closed_loops(edges: &[[usize; 2]], nv: usize) -> Result<()> {
    let mut out_deg = vec![0usize; nv];
    let mut in_deg = vec![0usize; nv];
    for &[a, b] in edges {
        out_deg[a] += 1;
        in_deg[b] += 1;
    }
    for v in 0..nv {
        if out_deg[v] != in_deg[v] || out_deg[v] > 1 {
            return Err(Error::NonManifold {
                a: v,
                b: v,
                message: "boundary edges do not form simple closed loops at this vertex".into(),
            });
        }
    }
    Ok(())
}

fn trace_loops(derived: &HashMap<(usize, usize), usize>, nv: usize) -> Result<Vec<[usize; 2]>> {
    let edges: Vec<[usize; 2]> = derived.keys().map(|&(a, b)| [a, b]).collect();
    check_closed_loops(&edges, nv)?;
    let mut next = vec![usize::MAX; nv];
    for &[a, b] in &edges {
        next[a] = b;
    }
    let mut visited = vec![false; nv];
    let mut starts: Vec<usize> = edges.iter().map(|e| e[0]).collect();
    starts.sort_unstable();
    let mut order = Vec::with_capacity(edges.len());
    for s in starts {
        if visited[s] {
            continue;
        }
        let mut v = s;
        loop {
            visited[v] = true;
            order.push([v, next[v]]);
            v = next[v];
            if v == s {
                break;
            }
        }
    }
    Ok(order)
}
