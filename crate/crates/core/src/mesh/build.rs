use super::rings::{connect_rings, core_point, core_rings, Ring};
use super::{mesh_checks, split_along_sieve, CrackMesh, GammaMark, PlainMesh, TriMesh, Vertex};
use crate::error::MeshError;
use crate::geometry::{Domain2D, SieveConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshParams {
    /// Grid spacing along the interface strip.
    pub h: f64,
    /// Coarsest spacing of the background away from the interface.
    pub h_max: f64,
}

impl MeshParams {
    pub fn uniform(h: f64) -> Self {
        Self { h, h_max: h }
    }

    pub fn graded(h: f64, h_max: f64) -> Self {
        Self { h, h_max: h_max.max(h) }
    }

    pub fn halved(&self) -> Self {
        Self { h: 0.5 * self.h, h_max: 0.5 * self.h_max }
    }
}

/// Rectangular region `[x_lo, x_hi] x [-half_height, half_height]` meshed
/// in elliptic rings around one slit.
#[derive(Debug, Clone, PartialEq)]
pub struct HolePatch {
    pub hole: usize,
    pub center: f64,
    pub d: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub half_height: f64,
    /// Semi-major axis of the outermost elliptic ring.
    pub r_core: f64,
    pub n_half: usize,
    pub rings: Vec<Ring>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SieveMesh {
    pub plain: PlainMesh,
    pub patches: Vec<HolePatch>,
    pub params: MeshParams,
    pub domain: Domain2D,
}

impl SieveMesh {
    /// Mesh of the perforated domain, checked.
    pub fn perforated(&self) -> Result<CrackMesh, MeshError> {
        checked(split_along_sieve(&self.plain)?)
    }

    /// Same triangulation with the whole interface cut.
    pub fn full_crack(&self) -> Result<CrackMesh, MeshError> {
        checked(split_along_sieve(&self.plain.all_barrier())?)
    }

    /// Same triangulation without any cut.
    pub fn no_sieve(&self) -> Result<CrackMesh, MeshError> {
        checked(split_along_sieve(&self.plain.all_open())?)
    }
}

fn checked(cm: CrackMesh) -> Result<CrackMesh, MeshError> {
    mesh_checks(&cm).into_result()?;
    Ok(cm)
}

/// Meshes the configuration's domain with one elliptic patch per hole.
pub fn triangulate(config: &SieveConfig, params: MeshParams) -> Result<SieveMesh, MeshError> {
    if config.dimension != 2 {
        return Err(MeshError::Layout(format!("only planar configurations are meshed, got n = {}", config.dimension)));
    }
    let holes: Vec<(f64, f64, f64)> = config.holes.iter().map(|h| (h.x(), h.half_width, h.guard_radius)).collect();
    triangulate_holes(&config.domain, &holes, params)
}

struct Builder {
    vertices: Vec<Vertex>,
    marks: Vec<GammaMark>,
    tris: Vec<[usize; 3]>,
}

impl Builder {
    fn push(&mut self, v: Vertex, mark: GammaMark) -> usize {
        self.vertices.push(v);
        self.marks.push(mark);
        self.vertices.len() - 1
    }

    fn quad(&mut self, bl: usize, br: usize, tl: usize, tr: usize) {
        self.tris.push([bl, br, tr]);
        self.tris.push([bl, tr, tl]);
    }
}

/// Placement of one hole patch, independent of the slit width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchFrame {
    pub hole: usize,
    pub center: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub half_height: f64,
    pub r_core: f64,
    pub n_half: usize,
    cols: (usize, usize),
}

struct Grid {
    nx: usize,
    h: f64,
    strip: usize,
}

fn grid_for(domain: &Domain2D, rho_min: Option<f64>, params: MeshParams) -> Result<Grid, MeshError> {
    let nxf = domain.width / params.h;
    let nx = nxf.round() as usize;
    if !(params.h > 0.0) || nx < 2 {
        return Err(MeshError::TooCoarse { h: params.h, reason: "need at least two cells across the width".into() });
    }
    if (nxf - nx as f64).abs() > 1e-6 * nxf {
        return Err(MeshError::Layout(format!("width {} is not a multiple of h = {}", domain.width, params.h)));
    }
    let h = domain.width / nx as f64;
    let strip = match rho_min {
        None => 0,
        Some(r) => (r / h + 1e-9).floor() as usize,
    };
    if let Some(r) = rho_min {
        if strip < 2 {
            return Err(MeshError::TooCoarse { h, reason: format!("guard radius {r} spans fewer than two cells") });
        }
    }
    if strip as f64 * h >= domain.half_height {
        return Err(MeshError::Layout(format!("strip half-height {} reaches the outer boundary", strip as f64 * h)));
    }
    Ok(Grid { nx, h, strip })
}

/// Patch placement for holes given as `(x, rho)`.
pub fn patch_frames(domain: &Domain2D, holes: &[(f64, f64)], params: MeshParams) -> Result<Vec<PatchFrame>, MeshError> {
    let rho_min = holes.iter().map(|h| h.1).reduce(f64::min);
    let g = grid_for(domain, rho_min, params)?;
    frames(&g, holes)
}

fn frames(g: &Grid, holes: &[(f64, f64)]) -> Result<Vec<PatchFrame>, MeshError> {
    let (nx, h, strip) = (g.nx, g.h, g.strip);
    let xs = |i: usize| if i == nx { nx as f64 * h } else { i as f64 * h };
    let b = strip as f64 * h;
    let mut order: Vec<usize> = (0..holes.len()).collect();
    order.sort_by(|&a, &b| holes[a].0.total_cmp(&holes[b].0));
    let mut out: Vec<PatchFrame> = Vec::with_capacity(holes.len());
    let mut prev_hi = 0usize;
    for &k in &order {
        let x = holes[k].0;
        let mut lo = ((x - b) / h + 1e-9).floor().max(0.0) as usize;
        let mut hi = (((x + b) / h - 1e-9).ceil().max(0.0) as usize).min(nx);
        let mut grow_right = true;
        for _ in 0..8 {
            let w = hi - lo;
            if w % 2 == 0 && (2 * strip + w) % 4 == 0 && 2 * strip + w >= 8 {
                break;
            }
            if (grow_right && hi < nx) || lo == 0 {
                hi = (hi + 1).min(nx);
            } else {
                lo -= 1;
            }
            grow_right = !grow_right;
        }
        let w = hi - lo;
        let n_half = 2 * strip + w;
        if w % 2 != 0 || n_half % 4 != 0 || n_half < 8 {
            return Err(MeshError::Layout(format!("no admissible patch around hole {k}")));
        }
        if !out.is_empty() && lo < prev_hi {
            return Err(MeshError::Layout(format!("patch of hole {k} overlaps its neighbour; refine h")));
        }
        prev_hi = hi;
        let (x_lo, x_hi) = (xs(lo), xs(hi));
        let r_core = 0.5 * f64::min(b, f64::min(x - x_lo, x_hi - x));
        out.push(PatchFrame { hole: k, center: x, x_lo, x_hi, half_height: b, r_core, n_half, cols: (lo, hi) });
    }
    Ok(out)
}

/// Meshes `domain` around slits given as `(x, d, rho)`.
pub fn triangulate_holes(domain: &Domain2D, holes: &[(f64, f64, f64)], params: MeshParams) -> Result<SieveMesh, MeshError> {
    let (width, hh) = (domain.width, domain.half_height);
    let rho_min = holes.iter().map(|h| h.2).reduce(f64::min);
    let g = grid_for(domain, rho_min, params)?;
    let (nx, h, strip) = (g.nx, g.h, g.strip);
    let xs = |i: usize| if i == nx { width } else { i as f64 * h };
    let b = strip as f64 * h;
    let placed: Vec<(f64, f64)> = holes.iter().map(|h| (h.0, h.2)).collect();
    let mut patches = Vec::with_capacity(holes.len());
    let mut cols: Vec<(usize, usize)> = Vec::with_capacity(holes.len());
    for f in frames(&g, &placed)? {
        let d = holes[f.hole].1;
        if !(d > 0.0) {
            return Err(MeshError::Layout(format!("hole {} has zero width", f.hole)));
        }
        if !(f.r_core >= 4.0 * d) {
            return Err(MeshError::TooCoarse { h, reason: format!("hole {}: core radius {} below 4 d", f.hole, f.r_core) });
        }
        let rings = core_rings(d, f.r_core, f.n_half);
        patches.push(HolePatch { hole: f.hole, center: f.center, d, x_lo: f.x_lo, x_hi: f.x_hi, half_height: b, r_core: f.r_core, n_half: f.n_half, rings });
        cols.push(f.cols);
    }

    let mut bld = Builder { vertices: Vec::new(), marks: Vec::new(), tris: Vec::new() };
    let mut in_patch = vec![false; nx];
    for &(lo, hi) in &cols {
        in_patch[lo..hi].iter_mut().for_each(|c| *c = true);
    }
    let interior = |i: usize, j: usize| j < strip && cols.iter().any(|&(lo, hi)| lo < i && i < hi);

    // strip grid
    let mut grid = vec![usize::MAX; (nx + 1) * (strip + 1)];
    let gid = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..=strip {
        for i in 0..=nx {
            if interior(i, j) {
                continue;
            }
            let mark = if j == 0 { GammaMark::Barrier } else { GammaMark::Off };
            grid[gid(i, j)] = bld.push(Vertex::free([xs(i), j as f64 * h]), mark);
        }
    }
    for j in 0..strip {
        for (i, &inside) in in_patch.iter().enumerate() {
            if !inside {
                let q = [grid[gid(i, j)], grid[gid(i + 1, j)], grid[gid(i, j + 1)], grid[gid(i + 1, j + 1)]];
                bld.quad(q[0], q[1], q[2], q[3]);
            }
        }
    }

    for (p, &(lo, hi)) in patches.iter().zip(&cols) {
        let mut perimeter = Vec::with_capacity(p.n_half + 1);
        perimeter.extend((0..=strip).map(|j| grid[gid(hi, j)]));
        perimeter.extend((lo..hi).rev().map(|i| grid[gid(i, strip)]));
        perimeter.extend((0..strip).rev().map(|j| grid[gid(lo, j)]));
        debug_assert_eq!(perimeter.len(), p.n_half + 1);
        build_patch(&mut bld, p, &perimeter, h);
    }

    // background above the strip, coarsened 2:1 away from the interface
    let mut row: Vec<usize> = (0..=nx).map(|i| grid[gid(i, strip)]).collect();
    let mut y = b;
    let mut s = h;
    loop {
        let rest = hh - y;
        if rest <= 1e-12 * hh {
            break;
        }
        let count = row.len() - 1;
        let coarsen = count % 2 == 0 && 2.0 * s <= params.h_max * (1.0 + 1e-9) && y - b >= 4.0 * s - 1e-12 && rest - s >= 4.0 * s;
        if coarsen {
            let yn = y + s;
            let top: Vec<usize> = (0..=count / 2)
                .map(|i| bld.push(Vertex::free([if 2 * i == count { width } else { 2.0 * i as f64 * width / count as f64 }, yn]), GammaMark::Off))
                .collect();
            for i in 0..count / 2 {
                let (f0, f1, f2) = (row[2 * i], row[2 * i + 1], row[2 * i + 2]);
                bld.tris.push([f0, f1, top[i]]);
                bld.tris.push([f1, f2, top[i + 1]]);
                bld.tris.push([f1, top[i + 1], top[i]]);
            }
            row = top;
            y = yn;
            s *= 2.0;
            continue;
        }
        let steps: Vec<f64> = if rest >= 2.5 * s {
            vec![y + s]
        } else {
            let m = (rest / s).round().max(1.0) as usize;
            (1..=m).map(|q| if q == m { hh } else { y + rest * q as f64 / m as f64 }).collect()
        };
        for yn in steps {
            let top: Vec<usize> = (0..=count)
                .map(|i| bld.push(Vertex::free([if i == count { width } else { i as f64 * width / count as f64 }, yn]), GammaMark::Off))
                .collect();
            for i in 0..count {
                bld.quad(row[i], row[i + 1], top[i], top[i + 1]);
            }
            row = top;
            y = yn;
        }
    }

    let plain = mirror(bld, holes.len());
    Ok(SieveMesh { plain, patches, params: MeshParams { h, h_max: params.h_max }, domain: *domain })
}

fn build_patch(bld: &mut Builder, p: &HolePatch, perimeter: &[usize], h: f64) {
    let k = p.hole;
    let center = [p.center, 0.0];
    let n = p.n_half;
    let mut prev: Option<Vec<usize>> = None;
    for (r, ring) in p.rings.iter().enumerate() {
        let ids: Vec<usize> = (0..=ring.n_half)
            .map(|j| {
                let local = core_point(p.d, ring.s, j, ring.n_half);
                let mark = if r == 0 {
                    GammaMark::Opening(k as u32)
                } else if j == 0 || j == ring.n_half {
                    GammaMark::Barrier
                } else {
                    GammaMark::Off
                };
                bld.push(Vertex::anchored(k, center, local), mark)
            })
            .collect();
        if let Some(inner) = &prev {
            connect_rings(&mut bld.tris, inner, &ids, inner.len().min(ids.len()) / 2);
        }
        prev = Some(ids);
    }
    let s_end = p.rings.last().map_or(0.0, |r| r.s);
    let outer: Vec<[f64; 2]> = (0..=n).map(|j| core_point(p.d, s_end, j, n)).collect();
    let quad: Vec<[f64; 2]> = perimeter
        .iter()
        .map(|&v| {
            let q = bld.vertices[v].pos;
            [q[0] - p.center, q[1]]
        })
        .collect();
    let mean_gap = outer.iter().zip(&quad).map(|(e, q)| (q[0] - e[0]).hypot(q[1] - e[1])).sum::<f64>() / (n + 1) as f64;
    let d_in = p.r_core * std::f64::consts::PI / n as f64;
    let gaps = ((2.0 * mean_gap / (d_in + h)).round() as usize).max(1);
    let ratio = if gaps > 1 { (h / d_in).powf(1.0 / (gaps - 1) as f64) } else { 1.0 };
    let total: f64 = (0..gaps).map(|m| ratio.powi(m as i32)).sum();
    let mut inner = prev.expect("core has rings");
    let mut acc = 0.0;
    for m in 1..gaps {
        acc += ratio.powi(m as i32 - 1);
        let t = acc / total;
        let ids: Vec<usize> = (0..=n)
            .map(|j| {
                let (e, q) = (outer[j], quad[j]);
                let y = if j == 0 || j == n { 0.0 } else { e[1] + t * (q[1] - e[1]) };
                let local = [e[0] + t * (q[0] - e[0]), y];
                let mark = if j == 0 || j == n { GammaMark::Barrier } else { GammaMark::Off };
                bld.push(Vertex::anchored(k, center, local), mark)
            })
            .collect();
        connect_best(bld, &inner, &ids);
        inner = ids;
    }
    connect_best(bld, &inner, perimeter);
}

/// Joins equal rings choosing, per cell, the diagonal with the larger minimum angle.
fn connect_best(bld: &mut Builder, inner: &[usize], outer: &[usize]) {
    let start = bld.tris.len();
    connect_rings(&mut bld.tris, inner, outer, inner.len() / 2);
    let mesh = TriMesh { vertices: std::mem::take(&mut bld.vertices), triangles: Vec::new() };
    let min_angle = |mesh: &mut TriMesh, t: [usize; 3]| {
        mesh.triangles.clear();
        mesh.triangles.push(t);
        mesh.min_angle_deg(0)
    };
    let mut mesh = mesh;
    for j in 0..inner.len() - 1 {
        let (a, b, c, d) = (inner[j], inner[j + 1], outer[j], outer[j + 1]);
        let first = [[a, c, d], [a, d, b]];
        let second = [[a, c, b], [c, d, b]];
        let q1 = min_angle(&mut mesh, first[0]).min(min_angle(&mut mesh, first[1]));
        let q2 = min_angle(&mut mesh, second[0]).min(min_angle(&mut mesh, second[1]));
        let pick = if q1 >= q2 { first } else { second };
        bld.tris[start + 2 * j] = pick[0];
        bld.tris[start + 2 * j + 1] = pick[1];
    }
    bld.vertices = mesh.vertices;
}

/// Reflects the upper half across `y = 0`; interface vertices stay single.
fn mirror(bld: Builder, n_holes: usize) -> PlainMesh {
    let Builder { mut vertices, mut marks, tris } = bld;
    let n = vertices.len();
    let mut image: Vec<usize> = (0..n).collect();
    for v in 0..n {
        let src = vertices[v];
        if src.pos[1] > 0.0 {
            image[v] = vertices.len();
            vertices.push(Vertex { pos: [src.pos[0], -src.pos[1]], anchor: src.anchor, local: [src.local[0], -src.local[1]] });
            marks.push(GammaMark::Off);
        }
    }
    let mut triangles = tris.clone();
    triangles.extend(tris.iter().map(|t| [image[t[0]], image[t[2]], image[t[1]]]));
    PlainMesh { mesh: TriMesh { vertices, triangles }, marks, n_holes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{mesh_checks, EdgeTag, VertexSide};

    fn periodic(eps: f64, d: f64, h: f64) -> SieveMesh {
        let dom = Domain2D::new(1.0, 1.0).unwrap();
        let n = (1.0 / eps).round() as usize;
        let holes: Vec<_> = (0..n).map(|k| ((k as f64 + 0.5) * eps, d, 0.5 * eps)).collect();
        triangulate_holes(&dom, &holes, MeshParams::graded(h, 1.0 / 16.0)).unwrap()
    }

    #[test]
    fn periodic_mesh_passes_checks() {
        for &(eps, d) in &[(0.25, 1e-3), (0.125, 1e-12), (1.0 / 32.0, 1e-24)] {
            let sm = periodic(eps, d, eps / 8.0);
            for cm in [sm.perforated().unwrap(), sm.full_crack().unwrap(), sm.no_sieve().unwrap()] {
                let rep = mesh_checks(&cm);
                assert!(rep.passed(), "{rep:?}");
                assert!(rep.min_angle_deg >= 20.0);
            }
        }
    }

    #[test]
    fn tiny_slits_keep_exact_geometry() {
        let sm = periodic(1.0 / 32.0, 1e-200, 1.0 / 256.0);
        let cm = sm.perforated().unwrap();
        let rep = mesh_checks(&cm);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn every_hole_has_eight_intervals() {
        let sm = periodic(0.125, 1e-8, 1.0 / 64.0);
        let cm = sm.perforated().unwrap();
        assert_eq!(cm.hole_nodes.len(), 8);
        for nodes in &cm.hole_nodes {
            assert!(nodes.len() >= 9);
        }
    }

    #[test]
    fn full_crack_counts() {
        let sm = periodic(0.25, 1e-3, 1.0 / 32.0);
        let perf = sm.perforated().unwrap();
        let full = sm.full_crack().unwrap();
        let open = sm.no_sieve().unwrap();
        let n = sm.plain.mesh.n_vertices();
        let barrier = sm.plain.marks.iter().filter(|m| **m == GammaMark::Barrier).count();
        assert_eq!(perf.n_vertices(), n + barrier);
        assert!(open.crack_pairs.is_empty());
        assert_eq!(mesh_checks(&full).components, 2);
        assert_eq!(mesh_checks(&perf).components, 1);
        assert_eq!(mesh_checks(&open).components, 1);
        assert!(full.vertex_sides.iter().all(|s| *s != VertexSide::Shared));
        let plus: f64 = full.crack_edges(EdgeTag::CrackPlus).map(|e| full.mesh.edge(e.a, e.b)[0].abs()).sum();
        assert!((plus - 1.0).abs() < 1e-12);
    }
}
