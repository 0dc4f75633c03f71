//! Plain-text mesh dumps.
//!
//! ```text
//! crackmesh <vertices> <triangles> <pairs> <holes>
//! v <x> <y> <anchor or -> <local x> <local y> <o|b|h<k>>
//! t <a> <b> <c> <+|->
//! p <plus> <minus>
//! h <k> <count> <ids...>
//! ```
//! Reals are written with 17 significant digits and read back bit-exactly.

use std::io::{self, BufRead, Write};

use super::{boundary_edges, CrackMesh, GammaMark, Side, TriMesh, Vertex, VertexSide, NO_ANCHOR};
use crate::error::MeshError;

pub fn write_mesh<W: Write>(cm: &CrackMesh, mut w: W) -> io::Result<()> {
    let m = &cm.mesh;
    writeln!(w, "crackmesh {} {} {} {}", m.n_vertices(), m.n_triangles(), cm.crack_pairs.len(), cm.hole_nodes.len())?;
    for (v, mark) in m.vertices.iter().zip(&cm.marks) {
        let anchor = if v.is_anchored() { v.anchor.to_string() } else { "-".into() };
        let mark = match mark {
            GammaMark::Off => "o".to_string(),
            GammaMark::Barrier => "b".to_string(),
            GammaMark::Opening(k) => format!("h{k}"),
        };
        writeln!(w, "v {:.16e} {:.16e} {anchor} {:.16e} {:.16e} {mark}", v.pos[0], v.pos[1], v.local[0], v.local[1])?;
    }
    for (t, side) in m.triangles.iter().zip(&cm.sides) {
        let s = if *side == Side::Plus { '+' } else { '-' };
        writeln!(w, "t {} {} {} {s}", t[0], t[1], t[2])?;
    }
    for (a, b) in &cm.crack_pairs {
        writeln!(w, "p {a} {b}")?;
    }
    for (k, nodes) in cm.hole_nodes.iter().enumerate() {
        write!(w, "h {k} {}", nodes.len())?;
        for v in nodes {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn perr(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| perr(line, "missing field"))?;
    tok.parse().map_err(|_| perr(line, format!("bad number {tok:?}")))
}

pub fn read_mesh<R: BufRead>(r: R) -> Result<CrackMesh, MeshError> {
    let mut lines = r.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
    let head = head.map_err(|e| perr(1, e.to_string()))?;
    let mut tok = head.split_whitespace();
    if tok.next() != Some("crackmesh") {
        return Err(perr(1, "missing header"));
    }
    let nv: usize = num(tok.next(), 1)?;
    let nt: usize = num(tok.next(), 1)?;
    let np: usize = num(tok.next(), 1)?;
    let nh: usize = num(tok.next(), 1)?;
    let mut vertices = Vec::with_capacity(nv);
    let mut marks = Vec::with_capacity(nv);
    let mut triangles = Vec::with_capacity(nt);
    let mut sides = Vec::with_capacity(nt);
    let mut pairs = Vec::with_capacity(np);
    let mut hole_nodes = vec![Vec::new(); nh];
    for (i, line) in lines {
        let ln = i + 1;
        let line = line.map_err(|e| perr(ln, e.to_string()))?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("v") => {
                let x = num(tok.next(), ln)?;
                let y = num(tok.next(), ln)?;
                let anchor = match tok.next() {
                    Some("-") => NO_ANCHOR,
                    a => num(a, ln)?,
                };
                let lx = num(tok.next(), ln)?;
                let ly = num(tok.next(), ln)?;
                let mark = match tok.next() {
                    Some("o") => GammaMark::Off,
                    Some("b") => GammaMark::Barrier,
                    Some(s) if s.starts_with('h') => GammaMark::Opening(num(Some(&s[1..]), ln)?),
                    _ => return Err(perr(ln, "bad vertex mark")),
                };
                vertices.push(Vertex { pos: [x, y], anchor, local: [lx, ly] });
                marks.push(mark);
            }
            Some("t") => {
                let t: [usize; 3] = [num(tok.next(), ln)?, num(tok.next(), ln)?, num(tok.next(), ln)?];
                if t.iter().any(|&v| v >= nv) {
                    return Err(perr(ln, "vertex index out of range"));
                }
                let side = match tok.next() {
                    Some("+") => Side::Plus,
                    Some("-") => Side::Minus,
                    _ => return Err(perr(ln, "bad side tag")),
                };
                triangles.push(t);
                sides.push(side);
            }
            Some("p") => pairs.push((num(tok.next(), ln)?, num(tok.next(), ln)?)),
            Some("h") => {
                let k: usize = num(tok.next(), ln)?;
                let c: usize = num(tok.next(), ln)?;
                let list = hole_nodes.get_mut(k).ok_or_else(|| perr(ln, "hole index out of range"))?;
                for _ in 0..c {
                    list.push(num(tok.next(), ln)?);
                }
            }
            Some(other) => return Err(perr(ln, format!("unknown record {other:?}"))),
        }
    }
    if vertices.len() != nv || triangles.len() != nt || pairs.len() != np {
        return Err(perr(0, "record counts do not match header"));
    }
    let mut plain_index: Vec<usize> = (0..nv).collect();
    let mut vertex_sides: Vec<VertexSide> =
        vertices.iter().map(|v| if v.pos[1] < 0.0 { VertexSide::Minus } else { VertexSide::Plus }).collect();
    for &(a, b) in &pairs {
        plain_index[b] = a;
        vertex_sides[b] = VertexSide::Minus;
    }
    for (v, m) in marks.iter().enumerate() {
        if matches!(m, GammaMark::Opening(_)) {
            vertex_sides[v] = VertexSide::Shared;
        }
    }
    let mesh = TriMesh { vertices, triangles };
    let boundary = boundary_edges(&mesh, &sides, &marks);
    Ok(CrackMesh { mesh, sides, vertex_sides, crack_pairs: pairs, hole_nodes, boundary, plain_index, marks })
}
