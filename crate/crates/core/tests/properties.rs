use std::sync::OnceLock;

use proptest::prelude::*;
use sieve_core::corrector::{build_corrector, corrector_properties, hole_potentials, HolePotential};
use sieve_core::fem::{FeFunction, Resolvent};
use sieve_core::geometry::{make_periodic_config, validate_assumptions, Assumption, Domain2D, GammaProfile, SieveConfig};
use sieve_core::mesh::{triangulate, CrackMesh, MeshParams, SieveMesh, VertexSide};

struct Fixture {
    config: SieveConfig,
    mesh: SieveMesh,
    perforated: CrackMesh,
    full: CrackMesh,
    potentials: Vec<HolePotential>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dom = Domain2D::new(1.0, 1.0).unwrap();
        let config = make_periodic_config(dom, 0.25, &|_| 2e-3, GammaProfile::Constant(1.0)).unwrap();
        let mesh = triangulate(&config, MeshParams::graded(1.0 / 32.0, 0.125)).unwrap();
        let perforated = mesh.perforated().unwrap();
        let full = mesh.full_crack().unwrap();
        let potentials = hole_potentials(&mesh, &config.holes).unwrap();
        Fixture { config, mesh, perforated, full, potentials }
    })
}

fn resolvents() -> &'static (Resolvent, Resolvent) {
    static R: OnceLock<(Resolvent, Resolvent)> = OnceLock::new();
    R.get_or_init(|| {
        let f = fixture();
        (Resolvent::perforated(&f.perforated).unwrap(), Resolvent::homogenized(&f.full, &GammaProfile::Constant(1.0)).unwrap())
    })
}

/// Smooth field from a few random cosine modes, side dependent.
fn field(cm: &CrackMesh, coef: &[f64]) -> Vec<f64> {
    FeFunction::interpolate(cm, &|x, y, s| {
        let sign = match s {
            VertexSide::Minus => -1.0,
            _ => 1.0,
        };
        let (a, b, c, d) = (coef[0], coef[1], coef[2], coef[3]);
        a + b * (3.0 * x).cos() + sign * c * (2.0 * y).sin() + d * (5.0 * x * y).cos() * sign
    })
    .values
}

fn coefs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 4)
}

fn m_inner(r: &Resolvent, a: &[f64], b: &[f64]) -> f64 {
    r.asm.mass.bilinear(a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn resolvent_is_a_contraction(c in coefs()) {
        let (p, h) = resolvents();
        for (r, cm) in [(p, &fixture().perforated), (h, &fixture().full)] {
            let f = field(cm, &c);
            let (u, _) = r.solve(&f).unwrap();
            prop_assert!(m_inner(r, &u, &u).sqrt() <= m_inner(r, &f, &f).sqrt() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn resolvent_is_self_adjoint(c1 in coefs(), c2 in coefs()) {
        let (p, h) = resolvents();
        for (r, cm) in [(p, &fixture().perforated), (h, &fixture().full)] {
            let (f, g) = (field(cm, &c1), field(cm, &c2));
            let (rf, _) = r.solve(&f).unwrap();
            let (rg, _) = r.solve(&g).unwrap();
            let scale = m_inner(r, &f, &f).sqrt() * m_inner(r, &g, &g).sqrt();
            prop_assert!((m_inner(r, &rf, &g) - m_inner(r, &f, &rg)).abs() <= 1e-8 * scale.max(1e-300));
        }
    }

    #[test]
    fn energy_identity(c in coefs()) {
        let (p, h) = resolvents();
        for (r, cm) in [(p, &fixture().perforated), (h, &fixture().full)] {
            let f = field(cm, &c);
            let (u, _) = r.solve(&f).unwrap();
            let lhs = r.energy(&u);
            let rhs = m_inner(r, &f, &u);
            prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1e-300), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn stronger_coupling_lowers_the_quadratic_form(c in coefs(), g1 in 0.0f64..4.0, dg in 0.1f64..4.0) {
        let cm = &fixture().full;
        let f = field(cm, &c);
        let mut prev = None;
        for g in [g1, g1 + dg] {
            let r = Resolvent::homogenized(cm, &GammaProfile::Constant(g)).unwrap();
            let (u, _) = r.solve(&f).unwrap();
            let q = m_inner(&r, &u, &f);
            if let Some(p) = prev {
                prop_assert!(q <= p * (1.0 + 1e-9), "{q} > {p}");
            }
            prev = Some(q);
        }
    }

    #[test]
    fn corrector_is_linear(c1 in coefs(), c2 in coefs(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let fx = fixture();
        let (g1, g2) = (field(&fx.full, &c1), field(&fx.full, &c2));
        let mix: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let w = |v: Vec<f64>| build_corrector(&FeFunction::new(&fx.full, v), &fx.potentials, 1.0).unwrap().field.values;
        let (w1, w2, wm) = (w(g1), w(g2), w(mix));
        for i in 0..wm.len() {
            let lin = a * w1[i] + b * w2[i];
            prop_assert!((wm[i] - lin).abs() <= 1e-10 * (1.0 + lin.abs()));
        }
    }

    #[test]
    fn corrector_lives_in_the_guard_disks(c in coefs()) {
        let fx = fixture();
        let g = FeFunction::new(&fx.full, field(&fx.full, &c));
        let w = build_corrector(&g, &fx.potentials, 1.0).unwrap();
        for (v, &val) in fx.full.mesh.vertices.iter().zip(&w.field.values) {
            let inside = fx.config.holes.iter().any(|h| (v.pos[0] - h.x()).hypot(v.pos[1]) < h.guard_radius - 1e-12);
            if !inside {
                prop_assert_eq!(val, 0.0);
            }
        }
    }

    #[test]
    fn corrector_energy_splits_evenly(c in coefs()) {
        let fx = fixture();
        let (_, h) = resolvents();
        let g = FeFunction::new(&fx.full, field(&fx.full, &c));
        let w = build_corrector(&g, &fx.potentials, 1.0).unwrap();
        let rep = corrector_properties(&w, &g, &h.asm, &GammaProfile::Constant(1.0));
        let total = rep.energy_plus + rep.energy_minus;
        prop_assert!((rep.energy_plus - rep.energy_minus).abs() <= 1e-10 * total.max(1e-300));
        prop_assert!(rep.identity_defect <= 0.05, "defect {}", rep.identity_defect);
    }

    #[test]
    fn periodic_layouts_validate(k in 2usize..40, ratio in 0.0f64..0.125) {
        let dom = Domain2D::new(1.0, 1.0).unwrap();
        let eps = 1.0 / k as f64;
        let c = make_periodic_config(dom, eps, &|e| ratio * 0.5 * e, GammaProfile::Constant(1.0)).unwrap();
        prop_assert!(validate_assumptions(&c).passed());
        let mut bad = c.clone();
        bad.holes[k / 2].half_width = 0.5 * eps * (0.125 + 1e-3 + ratio);
        let rep = validate_assumptions(&bad);
        prop_assert!(!rep.check(Assumption::SizeRatio).passed);
        prop_assert_eq!(rep.check(Assumption::SizeRatio).worst_hole, Some(k / 2));
        prop_assert!(rep.check(Assumption::DisjointGuards).passed);
        let err = bad.validate_assumptions().into_result().unwrap_err().to_string();
        prop_assert!(err.starts_with("size-ratio"), "{}", err);
    }
}

#[test]
fn fixture_mesh_has_four_patches() {
    assert_eq!(fixture().mesh.patches.len(), 4);
}
