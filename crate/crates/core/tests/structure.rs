use std::collections::{BTreeSet, HashMap};
use std::io::BufReader;

use sieve_core::eigen::{eigen_smallest, EigenOptions};
use sieve_core::experiments::Source;
use sieve_core::fem::{FeFunction, Resolvent};
use sieve_core::geometry::{Domain2D, GammaProfile, Hole, SieveConfig};
use sieve_core::mesh::{mesh_checks, read_mesh, triangulate, write_mesh, CrackMesh, MeshParams, VertexSide};

fn centered() -> SieveConfig {
    let dom = Domain2D::new(1.0, 1.0).unwrap();
    SieveConfig::explicit(dom, 0.5, vec![Hole::planar(0.5, 4e-3, 0.25)], GammaProfile::Constant(1.0)).unwrap()
}

#[test]
fn mesh_dump_round_trips_bit_exactly() {
    let sm = triangulate(&centered(), MeshParams::graded(1.0 / 16.0, 0.125)).unwrap();
    for cm in [sm.perforated().unwrap(), sm.full_crack().unwrap()] {
        let mut buf = Vec::new();
        write_mesh(&cm, &mut buf).unwrap();
        let back = read_mesh(BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.mesh, cm.mesh);
        assert_eq!(back.sides, cm.sides);
        assert_eq!(back.crack_pairs, cm.crack_pairs);
        assert_eq!(back.hole_nodes, cm.hole_nodes);
        assert_eq!(back.vertex_sides, cm.vertex_sides);
    }
}

/// Vertex at `(x, -y)` on the opposite side; shared vertices map within the hole.
fn mirror_map(cm: &CrackMesh) -> Vec<usize> {
    let key = |x: f64, y: f64, s: VertexSide| ((x * 1e12).round() as i64, (y * 1e12).round() as i64, s);
    let index: HashMap<_, usize> =
        cm.mesh.vertices.iter().zip(&cm.vertex_sides).enumerate().map(|(i, (v, &s))| (key(v.pos[0], v.pos[1], s), i)).collect();
    cm.mesh
        .vertices
        .iter()
        .zip(&cm.vertex_sides)
        .map(|(v, &s)| {
            let t = match s {
                VertexSide::Plus => VertexSide::Minus,
                VertexSide::Minus => VertexSide::Plus,
                VertexSide::Shared => VertexSide::Shared,
            };
            *index.get(&key(v.pos[0], -v.pos[1], t)).expect("mirror vertex exists")
        })
        .collect()
}

#[test]
fn centered_hole_mesh_is_mirror_symmetric() {
    let sm = triangulate(&centered(), MeshParams::graded(1.0 / 16.0, 0.125)).unwrap();
    for cm in [sm.perforated().unwrap(), sm.full_crack().unwrap()] {
        let mirror = mirror_map(&cm);
        let sorted = |mut t: [usize; 3]| {
            t.sort_unstable();
            t
        };
        let tris: BTreeSet<[usize; 3]> = cm.mesh.triangles.iter().map(|&t| sorted(t)).collect();
        for &t in &cm.mesh.triangles {
            assert!(tris.contains(&sorted([mirror[t[0]], mirror[t[1]], mirror[t[2]]])), "triangle {t:?} has no mirror image");
        }
    }
}

#[test]
fn even_source_ignores_the_sieve() {
    let dom = Domain2D::new(1.0, 1.0).unwrap();
    let layouts = [
        vec![Hole::planar(0.5, 4e-3, 0.25)],
        vec![Hole::planar(0.2, 1e-5, 0.1), Hole::planar(0.5, 2e-3, 0.1), Hole::planar(0.8, 1e-2, 0.1)],
    ];
    for holes in layouts {
        let config = SieveConfig::explicit(dom, 0.2, holes, GammaProfile::Constant(1.0)).unwrap();
        let sm = triangulate(&config, MeshParams::graded(1.0 / 32.0, 0.125)).unwrap();
        let (perf, open) = (sm.perforated().unwrap(), sm.no_sieve().unwrap());
        let solve = |cm: &CrackMesh| {
            let f = FeFunction::interpolate(cm, &|x, y, s| Source::Even.eval(&dom, x, y, s)).values;
            Resolvent::perforated(cm).unwrap().solve(&f).unwrap().0
        };
        let (ue, u) = (solve(&perf), solve(&open));
        let mut at_plain = vec![0.0; sm.plain.mesh.n_vertices()];
        for (j, &p) in open.plain_index.iter().enumerate() {
            at_plain[p] = u[j];
        }
        let err = perf.plain_index.iter().zip(&ue).map(|(&p, v)| (v - at_plain[p]).abs()).fold(0.0f64, f64::max);
        let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(err <= 1e-7 * scale, "{err:.3e}");
    }
}

fn edges(cm: &CrackMesh) -> usize {
    let mut set = BTreeSet::new();
    for t in &cm.mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            set.insert((a.min(b), a.max(b)));
        }
    }
    set.len()
}

#[test]
fn refinement_keeps_the_topology() {
    let config = centered();
    let coarse = triangulate(&config, MeshParams::uniform(1.0 / 16.0)).unwrap();
    let fine = triangulate(&config, MeshParams::uniform(1.0 / 32.0)).unwrap();
    for sm in [&coarse, &fine] {
        // open mesh is a disk; the perforated one keeps its single hole as a gap in the cut
        let open = sm.no_sieve().unwrap();
        let chi = open.n_vertices() as i64 - edges(&open) as i64 + open.mesh.n_triangles() as i64;
        assert_eq!(chi, 1);
        let perf = sm.perforated().unwrap();
        assert!(mesh_checks(&perf).passed());
        assert_eq!(perf.hole_nodes.len(), 1);
        let chi = perf.n_vertices() as i64 - edges(&perf) as i64 + perf.mesh.n_triangles() as i64;
        assert_eq!(chi, 1);
        let full = sm.full_crack().unwrap();
        let chi = full.n_vertices() as i64 - edges(&full) as i64 + full.mesh.n_triangles() as i64;
        assert_eq!(chi, 2, "fully cut rectangle is two disks");
    }
    let ratio = fine.plain.mesh.n_triangles() as f64 / coarse.plain.mesh.n_triangles() as f64;
    assert!(ratio > 2.0, "refinement ratio {ratio}");
}

#[test]
fn uncoupled_halves_double_every_eigenvalue() {
    let sm = triangulate(&centered(), MeshParams::uniform(1.0 / 16.0)).unwrap();
    let full = sm.full_crack().unwrap();
    let r = Resolvent::homogenized(&full, &GammaProfile::Constant(0.0)).unwrap();
    let s = eigen_smallest(&r.asm.stiffness, &r.asm.mass, None, 8, EigenOptions::default()).unwrap();
    assert!(s.all_converged());
    for pair in s.values.chunks(2) {
        assert!((pair[0] - pair[1]).abs() <= 1e-8 * (1.0 + pair[1]), "{:?}", s.values);
    }
    assert!(s.values[0].abs() < 1e-8 && s.values[1].abs() < 1e-8);
}
