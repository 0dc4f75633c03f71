//! Corrector assembled from capacity potentials and hole-wise mean jumps.
//!
//! For each hole, `w = -c_k U_k / 2` on the upper side and `+c_k U_k / 2`
//! on the lower side, where `c_k` is the mean of `[g]` over the interface
//! window `S_k` of length `2 rho_k`. Outside the guard disks `w = 0`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::capacity::{capacity_with_core, CapacityProblem, PotentialField, Shape};
use crate::error::{CapacityError, StudyError};
use crate::fem::{jump_edges, Assembly, FeFunction};
use crate::geometry::{GammaProfile, Hole};
use crate::mesh::{SieveMesh, VertexSide};

/// Capacity potential of one hole on a disk mesh sharing the patch core.
#[derive(Debug, Clone)]
pub struct HolePotential {
    pub hole: usize,
    pub center: f64,
    pub d: f64,
    pub rho: f64,
    pub capacity: f64,
    pub field: PotentialField,
}

/// Solves the capacity problem of every hole of `holes` on disk meshes
/// matching the patches of `sm`. Holes with identical geometry share one solve.
pub fn hole_potentials(sm: &SieveMesh, holes: &[Hole]) -> Result<Vec<HolePotential>, CapacityError> {
    type Key = (u64, u64, usize, u64);
    let mut keys: BTreeMap<Key, usize> = BTreeMap::new();
    let mut jobs = Vec::new();
    let mut per_patch = Vec::with_capacity(sm.patches.len());
    for p in &sm.patches {
        let rho = holes[p.hole].guard_radius;
        let key = (p.d.to_bits(), rho.to_bits(), p.n_half, p.r_core.to_bits());
        let next = keys.len();
        let slot = *keys.entry(key).or_insert_with(|| {
            jobs.push((p.d, rho, p.n_half, p.r_core));
            next
        });
        per_patch.push(slot);
    }
    let solved: Result<Vec<PotentialField>, CapacityError> = jobs
        .par_iter()
        .map(|&(d, rho, n_half, r_core)| Ok(capacity_with_core(CapacityProblem::new(2, d, rho, Shape::Slit2d)?, n_half, r_core)?.field))
        .collect();
    let solved = solved?;
    let mut out: Vec<HolePotential> = sm
        .patches
        .iter()
        .zip(per_patch)
        .map(|(p, slot)| HolePotential {
            hole: p.hole,
            center: p.center,
            d: p.d,
            rho: holes[p.hole].guard_radius,
            capacity: solved[slot].energy,
            field: solved[slot].clone(),
        })
        .collect();
    out.sort_by_key(|h| h.hole);
    Ok(out)
}

/// Mean of `[g] = g+ - g-` over `(x - rho, x + rho)` on the interface, by
/// exact integration of the piecewise-linear jump.
pub fn mean_jump_on_s(g: &FeFunction, center: f64, rho: f64, width: f64) -> Result<f64, StudyError> {
    let (a, b) = (center - rho, center + rho);
    if !(rho > 0.0) || a < -1e-12 * width || b > width * (1.0 + 1e-12) {
        return Err(StudyError::Input(format!("window ({a}, {b}) leaves the interface (0, {width})")));
    }
    let u = &g.values;
    let mut total = 0.0;
    for e in jump_edges(g.mesh) {
        let (x0, x1) = (e.x[0], e.x[1]);
        let j0 = u[e.plus[0]] - u[e.minus[0]];
        let j1 = u[e.plus[1]] - u[e.minus[1]];
        let span = x1 - x0;
        let (ta, tb) = if span.abs() <= 1e-13 * e.length.max(f64::MIN_POSITIVE).max(x0.abs() * 1e-3) {
            // edges far below the coordinate resolution of x lie wholly inside or outside
            let mid = 0.5 * (x0 + x1);
            if mid > a && mid < b {
                (0.0, 1.0)
            } else {
                continue;
            }
        } else {
            let t_of = |x: f64| ((x - x0) / span).clamp(0.0, 1.0);
            let (p, q) = (t_of(a), t_of(b));
            (p.min(q), p.max(q))
        };
        if tb <= ta {
            continue;
        }
        let jt = |t: f64| j0 + (j1 - j0) * t;
        total += e.length * (tb - ta) * 0.5 * (jt(ta) + jt(tb));
    }
    Ok(total / (2.0 * rho))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleCoefficient {
    pub hole: usize,
    pub x: f64,
    pub d: f64,
    pub rho: f64,
    pub capacity: f64,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub struct CorrectorField<'m> {
    pub field: FeFunction<'m>,
    pub coefficients: Vec<HoleCoefficient>,
}

/// Corrector of `g`, a field on the fully cracked mesh.
pub fn build_corrector<'m>(g: &FeFunction<'m>, potentials: &[HolePotential], width: f64) -> Result<CorrectorField<'m>, StudyError> {
    let cm = g.mesh;
    if cm.hole_nodes.iter().any(|h| !h.is_empty()) {
        return Err(StudyError::Input("corrector needs a field on the fully cracked mesh".into()));
    }
    let mut order: Vec<usize> = (0..potentials.len()).collect();
    order.sort_by(|&a, &b| potentials[a].center.total_cmp(&potentials[b].center));
    for w in order.windows(2) {
        let (p, q) = (&potentials[w[0]], &potentials[w[1]]);
        assert!(q.center - p.center >= p.rho + q.rho - 1e-12, "guard disks of holes {} and {} overlap", p.hole, q.hole);
    }
    let coefficients = potentials
        .iter()
        .map(|p| {
            Ok(HoleCoefficient { hole: p.hole, x: p.center, d: p.d, rho: p.rho, capacity: p.capacity, c: mean_jump_on_s(g, p.center, p.rho, width)? })
        })
        .collect::<Result<Vec<_>, StudyError>>()?;
    let by_hole: BTreeMap<usize, usize> = potentials.iter().enumerate().map(|(i, p)| (p.hole, i)).collect();
    let centers: Vec<f64> = order.iter().map(|&i| potentials[i].center).collect();
    let values = cm
        .mesh
        .vertices
        .par_iter()
        .zip(cm.vertex_sides.par_iter())
        .map(|(v, side)| {
            let (i, local) = if let Some(&i) = by_hole.get(&(v.anchor as usize)).filter(|_| v.is_anchored()) {
                (i, v.local)
            } else {
                let k = centers.partition_point(|&c| c < v.pos[0]);
                let near = [k.saturating_sub(1), k.min(centers.len().saturating_sub(1))];
                let Some(&pick) = near
                    .iter()
                    .filter(|&&j| j < centers.len())
                    .min_by(|&&a, &&b| (centers[a] - v.pos[0]).abs().total_cmp(&(centers[b] - v.pos[0]).abs()))
                else {
                    return 0.0;
                };
                let i = order[pick];
                (i, [v.pos[0] - potentials[i].center, v.pos[1]])
            };
            let p = &potentials[i];
            if local[0].hypot(local[1]) >= p.rho {
                return 0.0;
            }
            let half = 0.5 * coefficients[i].c * p.field.eval(local);
            match side {
                VertexSide::Minus => half,
                _ => -half,
            }
        })
        .collect();
    Ok(CorrectorField { field: FeFunction::new(cm, values), coefficients })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectorReport {
    pub l2_plus: f64,
    pub l2_minus: f64,
    pub energy_plus: f64,
    pub energy_minus: f64,
    /// `sum_k cap_k c_k^2 / 4`, which both side energies should add up to.
    pub quarter_cap_sum: f64,
    /// `|gamma^(1/2) [g]|^2 / 2` on the interface.
    pub target: f64,
    pub identity_defect: f64,
}

impl CorrectorReport {
    /// Largest per-side deviation from the target.
    pub fn side_deviation(&self) -> f64 {
        (self.energy_plus - self.target).abs().max((self.energy_minus - self.target).abs())
    }

    /// Deviation of the summed energy from the target.
    pub fn sum_deviation(&self) -> f64 {
        (self.energy_plus + self.energy_minus - self.target).abs()
    }
}

fn side_part(w: &FeFunction, side: VertexSide) -> Vec<f64> {
    w.values.iter().zip(&w.mesh.vertex_sides).map(|(&v, s)| if *s == side { v } else { 0.0 }).collect()
}

pub fn corrector_properties(w: &CorrectorField, g: &FeFunction, asm: &Assembly, gamma: &GammaProfile) -> CorrectorReport {
    let plus = side_part(&w.field, VertexSide::Plus);
    let minus = side_part(&w.field, VertexSide::Minus);
    let energy_plus = asm.stiffness.quad_form(&plus);
    let energy_minus = asm.stiffness.quad_form(&minus);
    let quarter_cap_sum: f64 = w.coefficients.iter().map(|c| 0.25 * c.capacity * c.c * c.c).sum();
    let defect = (energy_plus + energy_minus - quarter_cap_sum).abs();
    CorrectorReport {
        l2_plus: asm.mass.quad_form(&plus).max(0.0).sqrt(),
        l2_minus: asm.mass.quad_form(&minus).max(0.0).sqrt(),
        energy_plus,
        energy_minus,
        quarter_cap_sum,
        target: 0.5 * g.jump_l2(gamma).powi(2),
        identity_defect: if quarter_cap_sum > 0.0 { defect / quarter_cap_sum } else { defect },
    }
}

pub const COEFFICIENT_CSV_HEADER: &str = "k,x_k,d_k,rho_k,cap,c_k";

pub fn write_coefficients_csv<W: Write>(coefficients: &[HoleCoefficient], mut w: W) -> io::Result<()> {
    writeln!(w, "{COEFFICIENT_CSV_HEADER}")?;
    for c in coefficients {
        writeln!(w, "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", c.hole, c.x, c.d, c.rho, c.capacity, c.c)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::geometry::Domain2D;
    use crate::mesh::{triangulate_holes, MeshParams};

    fn setup() -> (SieveMesh, Vec<Hole>) {
        let dom = Domain2D::new(1.0, 1.0).unwrap();
        let holes = vec![Hole::planar(0.5, 1e-3, 0.125)];
        let sm = triangulate_holes(&dom, &[(0.5, 1e-3, 0.125)], MeshParams::uniform(1.0 / 32.0)).unwrap();
        (sm, holes)
    }

    #[test]
    fn mean_jump_examples() {
        let (sm, _) = setup();
        let cm = sm.full_crack().unwrap();
        let one = FeFunction::interpolate(&cm, &|_, _, s| if s == VertexSide::Minus { 0.0 } else { 1.0 });
        assert!((mean_jump_on_s(&one, 0.5, 0.125, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let cont = FeFunction::interpolate(&cm, &|x, _, _| x * x);
        assert!(mean_jump_on_s(&cont, 0.5, 0.125, 1.0).unwrap().abs() < 1e-15);
        let lin = FeFunction::interpolate(&cm, &|x, _, s| if s == VertexSide::Minus { 0.0 } else { 3.0 * x - 1.0 });
        assert!((mean_jump_on_s(&lin, 0.5, 0.125, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(mean_jump_on_s(&lin, 0.05, 0.125, 1.0).is_err());
    }

    #[test]
    fn unit_jump_gives_half_potentials() {
        let (sm, holes) = setup();
        let cm = sm.full_crack().unwrap();
        let pots = hole_potentials(&sm, &holes).unwrap();
        let g = FeFunction::interpolate(&cm, &|_, _, s| if s == VertexSide::Minus { 0.0 } else { 2.0 });
        let w = build_corrector(&g, &pots, 1.0).unwrap();
        assert!((w.coefficients[0].c - 2.0).abs() < 1e-12);
        let asm = assemble(&cm).unwrap();
        for (v, vert) in cm.mesh.vertices.iter().enumerate() {
            let r = (vert.pos[0] - 0.5).hypot(vert.pos[1]);
            if r >= 0.125 {
                assert_eq!(w.field.values[v], 0.0);
            }
        }
        let rep = corrector_properties(&w, &g, &asm, &GammaProfile::Constant(1.0));
        assert!((rep.energy_plus - rep.energy_minus).abs() < 1e-9 * rep.energy_plus);
        assert!(rep.identity_defect < 0.01, "{rep:?}");
    }
}
