//! Piecewise-linear Galerkin discretization on cracked meshes.

use std::io::{self, Write};

use crate::error::{MeshError, SolveError};
use crate::geometry::GammaProfile;
use crate::mesh::{CrackMesh, EdgeTag, TriMesh, VertexSide};
use crate::sparse::{cg_jacobi, norm2, CgOptions, CgStats, Cholesky, SparseSym};

/// Gauss-Legendre nodes on `[0, 1]` with equal weights `1/2`.
const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Element stiffness of triangle `t`, independent of the element's scale.
pub fn element_stiffness(mesh: &TriMesh, t: usize) -> Result<[[f64; 3]; 3], MeshError> {
    let (e, len) = mesh.scaled_edges(t);
    let two_a = mesh.shape_orientation(t);
    if !(len > 0.0) || !(two_a > 1e-14) {
        return Err(MeshError::Degenerate(t));
    }
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (e[i][0] * e[j][0] + e[i][1] * e[j][1]) / (2.0 * two_a);
        }
    }
    Ok(k)
}

fn pattern(mesh: &TriMesh) -> SparseSym {
    SparseSym::from_elements(mesh.n_vertices(), mesh.triangles.iter().map(|t| &t[..]))
}

/// Stiffness with a per-element weight evaluated at the centroid's local coordinates.
pub fn assemble_stiffness_weighted(mesh: &TriMesh, weight: &dyn Fn([f64; 2]) -> f64) -> Result<SparseSym, MeshError> {
    let mut k = pattern(mesh);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let ke = element_stiffness(mesh, t)?;
        let c = tri.iter().fold([0.0, 0.0], |acc, &v| {
            let p = mesh.vertices[v].local;
            [acc[0] + p[0] / 3.0, acc[1] + p[1] / 3.0]
        });
        let w = weight(c);
        for i in 0..3 {
            for j in 0..3 {
                k.add_to(tri[i], tri[j], w * ke[i][j]);
            }
        }
    }
    Ok(k)
}

pub fn assemble_stiffness(mesh: &TriMesh) -> Result<SparseSym, MeshError> {
    let mut k = pattern(mesh);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let ke = element_stiffness(mesh, t)?;
        for i in 0..3 {
            for j in 0..3 {
                k.add_to(tri[i], tri[j], ke[i][j]);
            }
        }
    }
    Ok(k)
}

pub fn assemble_mass(mesh: &TriMesh) -> Result<SparseSym, MeshError> {
    let mut m = pattern(mesh);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !(mesh.shape_orientation(t) > 0.0) {
            return Err(MeshError::Degenerate(t));
        }
        let a = mesh.area(t);
        for i in 0..3 {
            for j in 0..3 {
                m.add_to(tri[i], tri[j], if i == j { a / 6.0 } else { a / 12.0 });
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub stiffness: SparseSym,
    pub mass: SparseSym,
}

pub fn assemble(cm: &CrackMesh) -> Result<Assembly, MeshError> {
    Ok(Assembly { stiffness: assemble_stiffness(&cm.mesh)?, mass: assemble_mass(&cm.mesh)? })
}

/// One crack edge on the plus side with the node pairs across it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct JumpEdge {
    pub(crate) plus: [usize; 2],
    pub(crate) minus: [usize; 2],
    pub(crate) x: [f64; 2],
    pub(crate) length: f64,
}

pub(crate) fn jump_edges(cm: &CrackMesh) -> Vec<JumpEdge> {
    let partner = cm.partner();
    cm.crack_edges(EdgeTag::CrackPlus)
        .map(|e| {
            let v = cm.mesh.edge(e.a, e.b);
            JumpEdge {
                plus: [e.a, e.b],
                minus: [partner[e.a], partner[e.b]],
                x: [cm.mesh.vertices[e.a].pos[0], cm.mesh.vertices[e.b].pos[0]],
                length: v[0].hypot(v[1]),
            }
        })
        .collect()
}

/// Interface form `int_Gamma gamma [u][v]` over the cut part of the interface.
pub fn assemble_interface_jump(cm: &CrackMesh, gamma: &GammaProfile) -> Result<SparseSym, SolveError> {
    let edges = jump_edges(cm);
    let els: Vec<[usize; 4]> = edges.iter().map(|e| [e.plus[0], e.plus[1], e.minus[0], e.minus[1]]).collect();
    let mut j = SparseSym::from_elements(cm.n_vertices(), els.iter().map(|e| &e[..]));
    for e in &edges {
        for &q in &GAUSS2 {
            let x = e.x[0] + q * (e.x[1] - e.x[0]);
            let g = gamma.eval(x);
            if !(g >= 0.0) {
                return Err(SolveError::NegativeGamma { x, value: g });
            }
            let w = 0.5 * e.length * g;
            // [u](q) = sum_i c_i u_i over the four nodes
            let nodes = [e.plus[0], e.plus[1], e.minus[0], e.minus[1]];
            let c = [1.0 - q, q, -(1.0 - q), -q];
            for a in 0..4 {
                for b in 0..4 {
                    if c[a] * c[b] != 0.0 {
                        j.add_to(nodes[a], nodes[b], w * c[a] * c[b]);
                    }
                }
            }
        }
    }
    Ok(j)
}

/// Nodal field on a cracked mesh; one value per duplicated vertex.
#[derive(Debug, Clone)]
pub struct FeFunction<'m> {
    pub mesh: &'m CrackMesh,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2_total: f64,
    /// Broken gradient norm, both sides summed.
    pub h1_semi: f64,
    pub h1_broken: f64,
    pub l2_gamma_jump: f64,
}

impl<'m> FeFunction<'m> {
    pub fn new(mesh: &'m CrackMesh, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.n_vertices(), "one value per vertex");
        Self { mesh, values }
    }

    pub fn zeros(mesh: &'m CrackMesh) -> Self {
        Self::new(mesh, vec![0.0; mesh.n_vertices()])
    }

    /// Interpolates `f(x, y, side)`; shared hole vertices are sampled as plus.
    pub fn interpolate(mesh: &'m CrackMesh, f: &dyn Fn(f64, f64, VertexSide) -> f64) -> Self {
        let values = mesh
            .mesh
            .vertices
            .iter()
            .zip(&mesh.vertex_sides)
            .map(|(v, s)| f(v.pos[0], v.pos[1], *s))
            .collect();
        Self::new(mesh, values)
    }

    /// Norms with the mesh's stiffness and mass and unit weight on the jump.
    pub fn norms(&self, asm: &Assembly) -> Norms {
        let h1 = asm.stiffness.quad_form(&self.values).max(0.0);
        let l2 = asm.mass.quad_form(&self.values).max(0.0);
        Norms {
            l2_total: l2.sqrt(),
            h1_semi: h1.sqrt(),
            h1_broken: (h1 + l2).sqrt(),
            l2_gamma_jump: self.jump_l2(&GammaProfile::Constant(1.0)),
        }
    }

    /// `(int_Gamma gamma [u]^2)^{1/2}` by exact edge quadrature.
    pub fn jump_l2(&self, gamma: &GammaProfile) -> f64 {
        let u = &self.values;
        let mut s = 0.0;
        for e in jump_edges(self.mesh) {
            let j0 = u[e.plus[0]] - u[e.minus[0]];
            let j1 = u[e.plus[1]] - u[e.minus[1]];
            for &q in &GAUSS2 {
                let x = e.x[0] + q * (e.x[1] - e.x[0]);
                let jq = (1.0 - q) * j0 + q * j1;
                s += 0.5 * e.length * gamma.eval(x) * jq * jq;
            }
        }
        s.sqrt()
    }

    /// Writes `index value` lines in node order.
    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i} {v:.17e}")?;
        }
        Ok(())
    }
}

pub const SOLVE_TOL: f64 = 1e-9;

/// `K + J + M` on one mesh, kept for repeated resolvent solves.
#[derive(Debug, Clone)]
pub struct Resolvent {
    pub asm: Assembly,
    pub jump: Option<SparseSym>,
    pub operator: SparseSym,
}

impl Resolvent {
    /// Resolvent of the perforated operator on a mesh with holes.
    pub fn perforated(cm: &CrackMesh) -> Result<Self, SolveError> {
        let asm = assemble(cm)?;
        let operator = asm.stiffness.add(&asm.mass, 1.0);
        Ok(Self { asm, jump: None, operator })
    }

    /// Resolvent of the interface operator on a fully cracked mesh.
    pub fn homogenized(cm: &CrackMesh, gamma: &GammaProfile) -> Result<Self, SolveError> {
        if cm.hole_nodes.iter().any(|h| !h.is_empty()) {
            return Err(SolveError::Dimension("interface operator needs a mesh cut along the whole interface".into()));
        }
        let asm = assemble(cm)?;
        let jump = assemble_interface_jump(cm, gamma)?;
        let operator = asm.stiffness.add(&asm.mass, 1.0).add(&jump, 1.0);
        Ok(Self { asm, jump: Some(jump), operator })
    }

    /// Solves `(A + I) u = rhs` for a load vector `rhs`.
    pub fn solve_load(&self, rhs: &[f64], warm: Option<&[f64]>) -> Result<(Vec<f64>, CgStats), SolveError> {
        let mut x = warm.map_or_else(|| vec![0.0; rhs.len()], <[f64]>::to_vec);
        let st = cg_jacobi(&self.operator, rhs, &mut x, CgOptions { rel_tol: SOLVE_TOL, max_iter_factor: 10 })?;
        Ok((x, st))
    }

    /// Solves `(A + I) u = f` for a nodal `f` on the same mesh.
    pub fn solve(&self, f: &[f64]) -> Result<(Vec<f64>, CgStats), SolveError> {
        self.solve_load(&self.asm.mass.apply(f), None)
    }

    /// Energy `a[u,u] + |u|^2`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.operator.quad_form(u)
    }
}

/// Per vertex of `to`, the vertex of `from` with the same plain index and side.
///
/// Both meshes must come from one plain mesh. Shared vertices of `from`
/// serve both sides of `to`.
pub fn lift_map(from: &CrackMesh, to: &CrackMesh) -> Result<Vec<usize>, SolveError> {
    let n_plain = from.plain_index.iter().chain(&to.plain_index).copied().max().map_or(0, |m| m + 1);
    let mut by_side = vec![[usize::MAX; 2]; n_plain];
    for (v, (&p, s)) in from.plain_index.iter().zip(&from.vertex_sides).enumerate() {
        match s {
            VertexSide::Plus => by_side[p][0] = v,
            VertexSide::Minus => by_side[p][1] = v,
            VertexSide::Shared => by_side[p] = [v, v],
        }
    }
    to.plain_index
        .iter()
        .zip(&to.vertex_sides)
        .map(|(&p, s)| {
            let slot = match s {
                VertexSide::Minus => by_side[p][1],
                _ => by_side[p][0],
            };
            if slot == usize::MAX {
                Err(SolveError::Dimension(format!("plain vertex {p} has no counterpart")))
            } else {
                Ok(slot)
            }
        })
        .collect()
}

/// Solves `K u = 0` with the given fixed values by sparse Cholesky on the
/// free rows. Returns the solution and the relative residual on free rows.
pub fn solve_dirichlet(k: &SparseSym, fixed: &[Option<f64>]) -> Result<(Vec<f64>, f64), SolveError> {
    let free: Vec<usize> = (0..k.dim()).filter(|&i| fixed[i].is_none()).collect();
    let a = k.principal_submatrix(&free);
    let mut rhs = vec![0.0; free.len()];
    for (r, &i) in free.iter().enumerate() {
        for (j, v) in k.row(i) {
            if let Some(u) = fixed[j] {
                rhs[r] -= v * u;
            }
        }
    }
    let x = Cholesky::new(&a)?.solve(&rhs);
    let ax = a.apply(&x);
    let res = ax.iter().zip(&rhs).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() / norm2(&rhs).max(f64::MIN_POSITIVE);
    let mut u: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (r, &i) in free.iter().enumerate() {
        u[i] = x[r];
    }
    Ok((u, res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain2D;
    use crate::mesh::{triangulate_holes, MeshParams};

    fn meshes() -> (CrackMesh, CrackMesh) {
        let dom = Domain2D::new(1.0, 1.0).unwrap();
        let holes: Vec<_> = (0..4).map(|k| ((k as f64 + 0.5) * 0.25, 1e-3, 0.125)).collect();
        let sm = triangulate_holes(&dom, &holes, MeshParams::graded(1.0 / 32.0, 0.125)).unwrap();
        (sm.perforated().unwrap(), sm.full_crack().unwrap())
    }

    #[test]
    fn stiffness_kills_constants_and_mass_sums_to_area() {
        let (perf, _) = meshes();
        let asm = assemble(&perf).unwrap();
        let one = vec![1.0; perf.n_vertices()];
        let k1 = asm.stiffness.apply(&one);
        assert!(k1.iter().all(|v| v.abs() < 1e-10));
        let total: f64 = asm.mass.apply(&one).iter().sum();
        assert!((total - 2.0).abs() < 1e-10, "{total}");
        assert!(asm.stiffness.asymmetry() < 1e-12);
    }

    #[test]
    fn linear_field_energy_is_area() {
        let (perf, _) = meshes();
        let asm = assemble(&perf).unwrap();
        let u = FeFunction::interpolate(&perf, &|_, y, _| y);
        let n = u.norms(&asm);
        assert!((n.h1_semi * n.h1_semi - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_jump_on_full_crack() {
        let (_, full) = meshes();
        let j = assemble_interface_jump(&full, &GammaProfile::Constant(1.0)).unwrap();
        let u = FeFunction::interpolate(&full, &|_, _, s| if s == VertexSide::Plus { 3.0 } else { 0.0 });
        assert!((j.quad_form(&u.values) - 9.0).abs() < 1e-10);
        assert!((u.jump_l2(&GammaProfile::Constant(1.0)) - 3.0).abs() < 1e-10);
        let z = assemble_interface_jump(&full, &GammaProfile::Constant(0.0)).unwrap();
        assert!(z.quad_form(&u.values).abs() == 0.0);
        let asm = assemble(&full).unwrap();
        assert!(asm.stiffness.quad_form(&u.values).abs() < 1e-10);
    }

    #[test]
    fn unit_source_gives_unit_solution() {
        let (perf, full) = meshes();
        for r in [Resolvent::perforated(&perf).unwrap(), Resolvent::homogenized(&full, &GammaProfile::Constant(1.0)).unwrap()] {
            let n = r.operator.dim();
            let (u, _) = r.solve(&vec![1.0; n]).unwrap();
            assert!(u.iter().all(|v| (v - 1.0).abs() < 1e-7));
        }
    }

    #[test]
    fn lift_is_exact_on_same_triangles() {
        let (perf, full) = meshes();
        let map = lift_map(&perf, &full).unwrap();
        let u = FeFunction::interpolate(&perf, &|x, y, _| x * x + y);
        let lifted: Vec<f64> = map.iter().map(|&i| u.values[i]).collect();
        let a = assemble(&perf).unwrap();
        let b = assemble(&full).unwrap();
        let e1 = a.stiffness.quad_form(&u.values);
        let e2 = b.stiffness.quad_form(&lifted);
        assert!((e1 - e2).abs() < 1e-12 * e1);
    }
}
