//! Ring-structured meshes around a slit.
//!
//! Around a slit of half-width `d` the map `x + i y = d cosh(s + i t)`
//! sends the half strip `s >= 0, 0 <= t <= pi` onto the closed upper half
//! plane, with `s = 0` covering the slit itself. A tensor grid in `(s, t)`
//! therefore grades toward both tips automatically. Rings are lines of
//! constant `s`; each ring carries `n_half + 1` nodes at `t = j pi / n_half`.

/// One ring of the core: elliptic parameter and angular cell count on the
/// upper half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ring {
    pub s: f64,
    pub n_half: usize,
}

/// Width in `s` of the outer band kept at full angular resolution.
pub const OUTER_BAND: f64 = 3.0;
/// Largest radial over angular step in the stretched inner band.
pub const MAX_STRETCH: f64 = 1.5;

/// Elliptic parameter of the ring whose semi-major axis is `r`.
pub fn s_of_radius(d: f64, r: f64) -> f64 {
    (r / d).acosh()
}

/// Local coordinates of the core node `(s, j)` of a slit with half-width `d`.
pub fn core_point(d: f64, s: f64, j: usize, n_half: usize) -> [f64; 2] {
    // rays t = 0 and t = pi stay exactly on the interface
    if j == 0 {
        return [d * s.cosh(), 0.0];
    }
    if j == n_half {
        return [-d * s.cosh(), 0.0];
    }
    let t = std::f64::consts::PI * j as f64 / n_half as f64;
    let (st, ct) = t.sin_cos();
    let x = if 2 * j == n_half { 0.0 } else { d * s.cosh() * ct };
    [x, d * s.sinh() * st]
}

/// Elliptic coordinates `(s, t)` of a local point in the closed upper half plane.
pub fn elliptic_coords(d: f64, p: [f64; 2]) -> (f64, f64) {
    let x = p[0] / d;
    let y = p[1].abs() / d;
    let r1 = (x - 1.0).hypot(y);
    let r2 = (x + 1.0).hypot(y);
    let sum = r1 + r2;
    let s = (0.5 * sum).max(1.0).acosh();
    let c = (2.0 * x / sum).clamp(-1.0, 1.0);
    (s, c.acos())
}

/// Ring list from the slit (`s = 0`) to the ring of semi-major axis `r_core`.
///
/// `n_half_outer` is the angular count at the outermost ring and must be a
/// multiple of 4. The outer band of width [`OUTER_BAND`] keeps square cells;
/// inside it one 2:1 transition halves the angular count and the radial
/// step is stretched up to [`MAX_STRETCH`] times the angular step.
pub fn core_rings(d: f64, r_core: f64, n_half_outer: usize) -> Vec<Ring> {
    assert!(n_half_outer >= 8 && n_half_outer % 4 == 0, "angular count must be a multiple of 4");
    let s_end = s_of_radius(d, r_core);
    let dt = std::f64::consts::PI / n_half_outer as f64;
    let mut rings = Vec::new();
    if s_end < OUTER_BAND + 2.0 {
        let n = (s_end / dt).ceil().max(2.0) as usize;
        for i in 0..=n {
            let s = if i == n { s_end } else { s_end * i as f64 / n as f64 };
            rings.push(Ring { s, n_half: n_half_outer });
        }
        return rings;
    }
    let n_inner = n_half_outer / 2;
    let s_band = s_end - OUTER_BAND;
    let s_deep = s_band - dt;
    let dt_deep = 2.0 * dt;
    let spacing = |s: f64| {
        let far = f64::min(s - 2.5, s_deep - s - 1.0).max(0.0);
        dt_deep * f64::min(MAX_STRETCH, 1.0 + 0.3 * far)
    };
    for s in graded_points(s_deep, spacing) {
        rings.push(Ring { s, n_half: n_inner });
    }
    let n_o = (OUTER_BAND / dt).ceil() as usize;
    for i in 0..=n_o {
        let s = if i == n_o { s_end } else { s_band + OUTER_BAND * i as f64 / n_o as f64 };
        rings.push(Ring { s, n_half: n_half_outer });
    }
    rings
}

/// Points `0 = s_0 < ... < s_n = length` whose local spacing follows `g`.
fn graded_points(length: f64, g: impl Fn(f64) -> f64) -> Vec<f64> {
    const SAMPLES: usize = 4096;
    let ds = length / SAMPLES as f64;
    let mut cum = Vec::with_capacity(SAMPLES + 1);
    cum.push(0.0);
    for k in 0..SAMPLES {
        let a = k as f64 * ds;
        let w = 0.5 * (1.0 / g(a) + 1.0 / g(a + ds));
        cum.push(cum[k] + w * ds);
    }
    let total = cum[SAMPLES];
    let n = total.ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut k = 0;
    for i in 1..n {
        let target = total * i as f64 / n as f64;
        while cum[k + 1] < target {
            k += 1;
        }
        let frac = (target - cum[k]) / (cum[k + 1] - cum[k]);
        out.push((k as f64 + frac) * ds);
    }
    out.push(length);
    out
}

/// Appends the triangles between two consecutive rings of the upper half.
///
/// Node lists run counterclockwise from `t = 0`. Equal counts give quad
/// cells split along the diagonal pointing away from the nearest tip: cells
/// `j < split` lie on the `t = 0` side. An outer ring with twice the count
/// is joined by a 2:1 template.
pub fn connect_rings(tris: &mut Vec<[usize; 3]>, inner: &[usize], outer: &[usize], split: usize) {
    let ni = inner.len() - 1;
    let no = outer.len() - 1;
    if ni == no {
        for j in 0..ni {
            let (a, b, c, d) = (inner[j], inner[j + 1], outer[j], outer[j + 1]);
            if j < split {
                tris.push([a, c, d]);
                tris.push([a, d, b]);
            } else {
                tris.push([a, c, b]);
                tris.push([c, d, b]);
            }
        }
    } else {
        assert_eq!(no, 2 * ni, "rings must have equal or doubling counts");
        for j in 0..ni {
            let (c0, c1) = (inner[j], inner[j + 1]);
            let (f0, f1, f2) = (outer[2 * j], outer[2 * j + 1], outer[2 * j + 2]);
            tris.push([c0, f0, f1]);
            tris.push([c0, f1, c1]);
            tris.push([c1, f1, f2]);
        }
    }
}
