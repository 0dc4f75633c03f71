//! Triangulations of the rectangle with the sieve as an internal crack.
//!
//! Vertices near a hole carry coordinates relative to the hole center, so
//! that elements around slits far below the resolution of absolute
//! coordinates (half-widths down to `1e-300`) keep exact geometry.

mod build;
mod dump;
pub mod rings;

pub use build::{patch_frames, triangulate, triangulate_holes, HolePatch, MeshParams, PatchFrame, SieveMesh};
pub use dump::{read_mesh, write_mesh};

use std::collections::HashMap;

use crate::error::MeshError;

/// Anchor value of a vertex stored in absolute coordinates only.
pub const NO_ANCHOR: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub pos: [f64; 2],
    /// Index of the hole whose center `local` is measured from.
    pub anchor: u32,
    pub local: [f64; 2],
}

impl Vertex {
    pub fn free(pos: [f64; 2]) -> Self {
        Self { pos, anchor: NO_ANCHOR, local: pos }
    }

    pub fn anchored(hole: usize, center: [f64; 2], local: [f64; 2]) -> Self {
        let pos = [center[0] + local[0], center[1] + local[1]];
        Self { pos, anchor: hole as u32, local }
    }

    pub fn is_anchored(&self) -> bool {
        self.anchor != NO_ANCHOR
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vertex>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Vector from `a` to `b`, exact for vertices sharing an anchor.
    pub fn edge(&self, a: usize, b: usize) -> [f64; 2] {
        let (va, vb) = (&self.vertices[a], &self.vertices[b]);
        if va.anchor == vb.anchor && va.is_anchored() {
            [vb.local[0] - va.local[0], vb.local[1] - va.local[1]]
        } else {
            [vb.pos[0] - va.pos[0], vb.pos[1] - va.pos[1]]
        }
    }

    /// Edge vectors `v1 - v0`, `v2 - v0` divided by the longest edge, and that length.
    pub fn scaled_edges(&self, t: usize) -> ([[f64; 2]; 3], f64) {
        let [a, b, c] = self.triangles[t];
        let e = [self.edge(b, c), self.edge(c, a), self.edge(a, b)];
        let len = e.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
        if len == 0.0 {
            return (e, 0.0);
        }
        (e.map(|v| [v[0] / len, v[1] / len]), len)
    }

    /// Twice the signed area divided by the squared longest edge.
    pub fn shape_orientation(&self, t: usize) -> f64 {
        let (e, len) = self.scaled_edges(t);
        if len == 0.0 {
            return 0.0;
        }
        // e[2] = v1 - v0, -e[1] = v2 - v0
        -(e[2][0] * e[1][1] - e[2][1] * e[1][0])
    }

    /// Signed area; underflows to zero for elements below `1e-154` in size.
    pub fn area(&self, t: usize) -> f64 {
        let (_, len) = self.scaled_edges(t);
        0.5 * self.shape_orientation(t) * len * len
    }

    /// Interior angles in degrees, opposite to vertices 0, 1, 2.
    pub fn angles_deg(&self, t: usize) -> [f64; 3] {
        let (e, len) = self.scaled_edges(t);
        if len == 0.0 {
            return [0.0; 3];
        }
        let l = e.map(|v| v[0].hypot(v[1]));
        let mut out = [0.0; 3];
        for i in 0..3 {
            let (a, b, c) = (l[i], l[(i + 1) % 3], l[(i + 2) % 3]);
            let cos = ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0);
            out[i] = cos.acos().to_degrees();
        }
        out
    }

    pub fn min_angle_deg(&self, t: usize) -> f64 {
        self.angles_deg(t).into_iter().fold(180.0, f64::min)
    }

    pub fn max_edge(&self, t: usize) -> f64 {
        self.scaled_edges(t).1
    }

    /// Vertex-to-triangle incidence lists.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }
}

/// Role of a vertex with respect to the interface `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GammaMark {
    Off,
    /// On the sieve itself: duplicated when the mesh is split.
    Barrier,
    /// Inside or at a tip of hole `k`: shared by both sides.
    Opening(u32),
}

/// Conforming mesh of the whole rectangle with interface vertices marked.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainMesh {
    pub mesh: TriMesh,
    pub marks: Vec<GammaMark>,
    pub n_holes: usize,
}

impl PlainMesh {
    /// Every interface vertex becomes a barrier: the fully cracked rectangle.
    pub fn all_barrier(&self) -> PlainMesh {
        let marks = self.marks.iter().map(|m| if *m == GammaMark::Off { GammaMark::Off } else { GammaMark::Barrier }).collect();
        PlainMesh { mesh: self.mesh.clone(), marks, n_holes: 0 }
    }

    /// Every interface vertex is shared: the rectangle without a sieve.
    pub fn all_open(&self) -> PlainMesh {
        let marks = self.marks.iter().map(|m| if *m == GammaMark::Off { GammaMark::Off } else { GammaMark::Opening(0) }).collect();
        PlainMesh { mesh: self.mesh.clone(), marks, n_holes: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

/// Side of a vertex; hole vertices belong to both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexSide {
    Plus,
    Minus,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    Outer,
    CrackPlus,
    CrackMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub tag: EdgeTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrackMesh {
    pub mesh: TriMesh,
    pub sides: Vec<Side>,
    pub vertex_sides: Vec<VertexSide>,
    /// `(plus, minus)` copies of every sieve vertex.
    pub crack_pairs: Vec<(usize, usize)>,
    /// Shared vertices of each hole ordered by `x`, tips included.
    pub hole_nodes: Vec<Vec<usize>>,
    pub boundary: Vec<BoundaryEdge>,
    /// Index of each vertex in the unsplit mesh.
    pub plain_index: Vec<usize>,
    pub marks: Vec<GammaMark>,
}

impl CrackMesh {
    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// Vertex opposite across the interface; hole vertices map to themselves.
    pub fn partner(&self) -> Vec<usize> {
        let mut p: Vec<usize> = (0..self.n_vertices()).collect();
        for &(a, b) in &self.crack_pairs {
            p[a] = b;
            p[b] = a;
        }
        p
    }

    pub fn crack_edges(&self, tag: EdgeTag) -> impl Iterator<Item = &BoundaryEdge> + '_ {
        self.boundary.iter().filter(move |e| e.tag == tag)
    }
}

fn on_gamma(v: &Vertex) -> bool {
    v.pos[1] == 0.0
}

/// Duplicates barrier vertices and rewires lower triangles to the copies.
pub fn split_along_sieve(plain: &PlainMesh) -> Result<CrackMesh, MeshError> {
    let m = &plain.mesh;
    let n = m.n_vertices();
    if plain.marks.len() != n {
        return Err(MeshError::Layout(format!("{} marks for {n} vertices", plain.marks.len())));
    }
    for (t, tri) in m.triangles.iter().enumerate() {
        let up = tri.iter().any(|&v| m.vertices[v].pos[1] > 0.0);
        let down = tri.iter().any(|&v| m.vertices[v].pos[1] < 0.0);
        if up && down {
            return Err(MeshError::CrossesInterface(t));
        }
        if !up && !down {
            return Err(MeshError::Degenerate(t));
        }
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let on = on_gamma(&m.vertices[a]) && on_gamma(&m.vertices[b]);
            if on && (plain.marks[a] == GammaMark::Off || plain.marks[b] == GammaMark::Off) {
                return Err(MeshError::UnmarkedInterface(a.min(b), a.max(b)));
            }
        }
    }
    let mut vertices = m.vertices.clone();
    let mut marks = plain.marks.clone();
    let mut plain_index: Vec<usize> = (0..n).collect();
    let mut copy = vec![usize::MAX; n];
    let mut crack_pairs = Vec::new();
    for v in 0..n {
        if plain.marks[v] == GammaMark::Barrier {
            copy[v] = vertices.len();
            crack_pairs.push((v, vertices.len()));
            vertices.push(m.vertices[v]);
            marks.push(GammaMark::Barrier);
            plain_index.push(v);
        }
    }
    let mut vertex_sides: Vec<VertexSide> = vertices
        .iter()
        .map(|v| if v.pos[1] < 0.0 { VertexSide::Minus } else { VertexSide::Plus })
        .collect();
    for &(_, b) in &crack_pairs {
        vertex_sides[b] = VertexSide::Minus;
    }
    let mut hole_nodes: Vec<Vec<usize>> = vec![Vec::new(); plain.n_holes];
    for v in 0..n {
        if let GammaMark::Opening(k) = plain.marks[v] {
            vertex_sides[v] = VertexSide::Shared;
            let k = k as usize;
            if k >= hole_nodes.len() {
                hole_nodes.resize(k + 1, Vec::new());
            }
            hole_nodes[k].push(v);
        }
    }
    for list in &mut hole_nodes {
        list.sort_by(|&a, &b| {
            let (va, vb) = (&vertices[a], &vertices[b]);
            let key = |v: &Vertex| if v.is_anchored() { v.local[0] } else { v.pos[0] };
            va.pos[0].total_cmp(&vb.pos[0]).then(key(va).total_cmp(&key(vb)))
        });
    }
    let mut triangles = Vec::with_capacity(m.n_triangles());
    let mut sides = Vec::with_capacity(m.n_triangles());
    for tri in &m.triangles {
        let down = tri.iter().any(|&v| m.vertices[v].pos[1] < 0.0);
        if down {
            triangles.push(tri.map(|v| if copy[v] != usize::MAX { copy[v] } else { v }));
            sides.push(Side::Minus);
        } else {
            triangles.push(*tri);
            sides.push(Side::Plus);
        }
    }
    let mesh = TriMesh { vertices, triangles };
    let boundary = boundary_edges(&mesh, &sides, &marks);
    Ok(CrackMesh { mesh, sides, vertex_sides, crack_pairs, hole_nodes, boundary, plain_index, marks })
}

fn boundary_edges(mesh: &TriMesh, sides: &[Side], marks: &[GammaMark]) -> Vec<BoundaryEdge> {
    let mut count: HashMap<(usize, usize), (u32, usize, usize, usize)> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let e = count.entry((a.min(b), a.max(b))).or_insert((0, t, a, b));
            e.0 += 1;
        }
    }
    let mut out: Vec<BoundaryEdge> = count
        .into_values()
        .filter(|e| e.0 == 1)
        .map(|(_, t, a, b)| {
            let interface = marks[a] != GammaMark::Off && marks[b] != GammaMark::Off;
            let tag = match (interface, sides[t]) {
                (false, _) => EdgeTag::Outer,
                (true, Side::Plus) => EdgeTag::CrackPlus,
                (true, Side::Minus) => EdgeTag::CrackMinus,
            };
            BoundaryEdge { a, b, tag }
        })
        .collect();
    out.sort_by_key(|e| (e.a.min(e.b), e.a.max(e.b)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshReport {
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub min_angle_deg: f64,
    pub worst_triangle: usize,
    pub h_max: f64,
    pub inverted: usize,
    pub crossing: usize,
    /// Crack pairs whose copies differ in position.
    pub pair_mismatches: usize,
    /// Barrier vertices used by triangles of both sides.
    pub leaking_barriers: usize,
    /// Components of the vertex graph as meshed.
    pub components: usize,
    /// Components after splitting every shared hole vertex into two copies.
    pub components_split: usize,
    pub has_holes: bool,
}

pub const MIN_ANGLE_DEG: f64 = 20.0;

impl MeshReport {
    pub fn connectivity_ok(&self) -> bool {
        let joined = if self.has_holes { 1 } else { 2 };
        self.components == joined && self.components_split == 2 && self.leaking_barriers == 0
    }

    pub fn passed(&self) -> bool {
        self.min_angle_deg >= MIN_ANGLE_DEG
            && self.inverted == 0
            && self.crossing == 0
            && self.pair_mismatches == 0
            && self.connectivity_ok()
    }

    pub fn into_result(self) -> Result<MeshReport, MeshError> {
        if self.min_angle_deg < MIN_ANGLE_DEG {
            return Err(MeshError::Sliver { triangle: self.worst_triangle, angle: self.min_angle_deg });
        }
        if self.inverted > 0 {
            return Err(MeshError::Degenerate(self.worst_triangle));
        }
        if !self.passed() {
            return Err(MeshError::Layout(format!("mesh invariants violated: {self:?}")));
        }
        Ok(self)
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn components(n: usize, tris: impl Iterator<Item = [usize; 3]>, used: &[bool]) -> usize {
    let mut dsu = Dsu::new(n);
    for t in tris {
        dsu.union(t[0], t[1]);
        dsu.union(t[1], t[2]);
    }
    (0..n).filter(|&v| used[v] && dsu.find(v) == v).count()
}

/// Checks every structural invariant of a cracked mesh.
pub fn mesh_checks(cm: &CrackMesh) -> MeshReport {
    let m = &cm.mesh;
    let n = m.n_vertices();
    let mut min_angle = 180.0;
    let mut worst = 0;
    let mut h_max = 0.0f64;
    let mut inverted = 0;
    let mut crossing = 0;
    for t in 0..m.n_triangles() {
        let a = m.min_angle_deg(t);
        if a < min_angle {
            min_angle = a;
            worst = t;
        }
        h_max = h_max.max(m.max_edge(t));
        if !(m.shape_orientation(t) > 0.0) {
            inverted += 1;
            worst = t;
        }
        let tri = m.triangles[t];
        let up = tri.iter().any(|&v| m.vertices[v].pos[1] > 0.0);
        let down = tri.iter().any(|&v| m.vertices[v].pos[1] < 0.0);
        if up && down {
            crossing += 1;
        }
    }
    let pair_mismatches =
        cm.crack_pairs.iter().filter(|&&(a, b)| m.vertices[a].pos != m.vertices[b].pos || m.vertices[a].local != m.vertices[b].local).count();
    let barrier: Vec<bool> = {
        let mut b = vec![false; n];
        for &(p, q) in &cm.crack_pairs {
            b[p] = true;
            b[q] = true;
        }
        b
    };
    let mut seen = vec![(false, false); n];
    for (t, tri) in m.triangles.iter().enumerate() {
        for &v in tri {
            match cm.sides[t] {
                Side::Plus => seen[v].0 = true,
                Side::Minus => seen[v].1 = true,
            }
        }
    }
    let leaking_barriers = (0..n).filter(|&v| barrier[v] && seen[v].0 && seen[v].1).count();
    let used: Vec<bool> = seen.iter().map(|s| s.0 || s.1).collect();
    let comps = components(n, m.triangles.iter().copied(), &used);
    // shared vertices get a second copy n + v used by minus triangles
    let shared: Vec<bool> = cm.vertex_sides.iter().map(|s| *s == VertexSide::Shared).collect();
    let split_tris = m.triangles.iter().zip(&cm.sides).map(|(tri, side)| {
        if *side == Side::Minus {
            tri.map(|v| if shared[v] { n + v } else { v })
        } else {
            *tri
        }
    });
    let mut used2 = used.clone();
    used2.extend((0..n).map(|v| shared[v] && seen[v].1));
    for v in 0..n {
        if shared[v] && !seen[v].0 {
            used2[v] = false;
        }
    }
    let comps_split = components(2 * n, split_tris, &used2);
    MeshReport {
        n_vertices: n,
        n_triangles: m.n_triangles(),
        min_angle_deg: min_angle,
        worst_triangle: worst,
        h_max,
        inverted,
        crossing,
        pair_mismatches,
        leaking_barriers,
        components: comps,
        components_split: comps_split,
        has_holes: cm.hole_nodes.iter().any(|h| !h.is_empty()),
    }
}
