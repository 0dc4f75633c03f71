//! Sieve configurations: the rectangle, the slit family on the interface
//! `y = 0`, and the closed-form rate quantities attached to a family.

use std::fmt;
use std::sync::Arc;

use crate::error::GeometryError;

/// Largest admissible `diam(cell) / rho` ratio for regular cell partitions.
pub const CELL_DIAMETER_RATIO_MAX: f64 = 10.0;

/// Rectangle `(0, L) x (-H, H)`; the interface is the line `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain2D {
    pub width: f64,
    pub half_height: f64,
}

impl Domain2D {
    pub fn new(width: f64, half_height: f64) -> Result<Self, GeometryError> {
        if !(width > 0.0 && width.is_finite()) || !(half_height > 0.0 && half_height.is_finite()) {
            return Err(GeometryError::BadDomain { width, half_height });
        }
        Ok(Self { width, half_height })
    }

    pub fn area(&self) -> f64 {
        2.0 * self.width * self.half_height
    }

    /// Upper bound for guard radii: `rho < 1` and `rho < H/2`.
    pub fn guard_limit(&self) -> f64 {
        f64::min(1.0, 0.5 * self.half_height)
    }
}

/// A flat hole on the interface.
///
/// `center` holds the tangential coordinates of the hole center; in the
/// planar setting only `center[0]` is used and `center[1]` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hole {
    pub center: [f64; 2],
    pub half_width: f64,
    pub guard_radius: f64,
}

impl Hole {
    pub fn planar(x: f64, half_width: f64, guard_radius: f64) -> Self {
        Self { center: [x, 0.0], half_width, guard_radius }
    }

    pub fn x(&self) -> f64 {
        self.center[0]
    }

    fn distance(&self, other: &Hole) -> f64 {
        let dx = self.center[0] - other.center[0];
        let dz = self.center[1] - other.center[1];
        dx.hypot(dz)
    }
}

/// Target interaction strength on the interface, as a function of the
/// first tangential coordinate.
#[derive(Clone)]
pub enum GammaProfile {
    Constant(f64),
    /// `a + b x`
    Affine { a: f64, b: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl GammaProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GammaProfile::Constant(c) => *c,
            GammaProfile::Affine { a, b } => a + b * x,
            GammaProfile::Custom(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, GammaProfile::Constant(c) if *c == 0.0)
    }
}

impl fmt::Debug for GammaProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaProfile::Constant(c) => write!(f, "Constant({c})"),
            GammaProfile::Affine { a, b } => write!(f, "Affine({a} + {b} x)"),
            GammaProfile::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The hole family together with the ambient rectangle and the target `gamma`.
#[derive(Debug, Clone)]
pub struct SieveConfig {
    pub domain: Domain2D,
    pub eps: f64,
    pub holes: Vec<Hole>,
    pub gamma: GammaProfile,
    /// Ambient dimension: 2 for everything that gets meshed, 3 for the
    /// closed-form paths.
    pub dimension: usize,
}

impl SieveConfig {
    pub fn explicit(
        domain: Domain2D,
        eps: f64,
        holes: Vec<Hole>,
        gamma: GammaProfile,
    ) -> Result<Self, GeometryError> {
        let config = Self { domain, eps, holes, gamma, dimension: 2 };
        config.validate_assumptions().into_result()?;
        Ok(config)
    }

    pub fn validate_assumptions(&self) -> ValidationReport {
        validate_assumptions(self)
    }
}

/// Builds the `eps`-periodic family with centers `(k + 1/2) eps` and guard
/// radius `eps / 2`.
pub fn make_periodic_config(
    domain: Domain2D,
    eps: f64,
    d_of_eps: &dyn Fn(f64) -> f64,
    gamma: GammaProfile,
) -> Result<SieveConfig, GeometryError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GeometryError::BadEps(eps));
    }
    let rho = 0.5 * eps;
    if rho >= domain.guard_limit() {
        return Err(GeometryError::GuardTooLarge { hole: 0, rho, limit: domain.guard_limit() });
    }
    let d = d_of_eps(eps);
    if !(d >= 0.0 && d.is_finite()) {
        return Err(GeometryError::BadHalfWidth { hole: 0, d });
    }
    if d > rho / 8.0 {
        return Err(GeometryError::SizeRatio { hole: 0, d, rho });
    }
    let cells = lattice_count(domain.width, eps);
    let holes = (0..cells)
        .map(|k| Hole::planar((k as f64 + 0.5) * eps, d, rho))
        .collect();
    let config = SieveConfig { domain, eps, holes, gamma, dimension: 2 };
    config.validate_assumptions().into_result()?;
    Ok(config)
}

/// Number of full lattice cells of size `eps` in `(0, L)`, tolerant to
/// rounding when `L / eps` is an integer up to floating point noise.
pub fn lattice_count(width: f64, eps: f64) -> usize {
    let q = width / eps;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r as usize
    } else {
        q.floor() as usize
    }
}

/// Axis-aligned cell of the interface plane used by regular partitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCell {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl GammaCell {
    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    pub fn diameter(&self) -> f64 {
        (self.hi[0] - self.lo[0]).hypot(self.hi[1] - self.lo[1])
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    pub fn inradius(&self) -> f64 {
        0.5 * f64::min(self.hi[0] - self.lo[0], self.hi[1] - self.lo[1])
    }

    fn overlaps(&self, other: &GammaCell) -> bool {
        self.lo[0] < other.hi[0]
            && other.lo[0] < self.hi[0]
            && self.lo[1] < other.hi[1]
            && other.lo[1] < self.hi[1]
    }
}

/// Regular family in dimension `n = 3`: one hole per cell, centered, with
/// size `d = (4 gamma(x) area / alpha)^(1/(n-2))`.
///
/// The guard radius is `guard_fraction` times the cell inradius, capped by
/// the domain limit, so the closed guard disk stays inside its cell.
pub fn make_regular_config(
    domain: Domain2D,
    cells: &[GammaCell],
    gamma: GammaProfile,
    dimension: usize,
    alpha: f64,
    guard_fraction: f64,
) -> Result<SieveConfig, GeometryError> {
    if dimension != 3 {
        return Err(GeometryError::Dimension(dimension));
    }
    if !(alpha > 0.0) {
        return Err(GeometryError::BadAlpha(alpha));
    }
    if !(guard_fraction > 0.0 && guard_fraction < 1.0) {
        return Err(GeometryError::BadGuardFraction(guard_fraction));
    }
    for (i, a) in cells.iter().enumerate() {
        if !(a.hi[0] > a.lo[0] && a.hi[1] > a.lo[1]) {
            return Err(GeometryError::EmptyCell(i));
        }
        for (j, b) in cells.iter().enumerate().skip(i + 1) {
            if a.overlaps(b) {
                return Err(GeometryError::CellOverlap(i, j));
            }
        }
    }
    let cap = 0.5 * domain.guard_limit();
    let mut holes = Vec::with_capacity(cells.len());
    let mut eps: f64 = 0.0;
    for (k, cell) in cells.iter().enumerate() {
        let rho = (guard_fraction * cell.inradius()).min(cap);
        if cell.diameter() > CELL_DIAMETER_RATIO_MAX * rho {
            return Err(GeometryError::CellShape { cell: k, ratio: cell.diameter() / rho });
        }
        let c = cell.center();
        let g = gamma.eval(c[0]);
        if g < 0.0 {
            return Err(GeometryError::NegativeGamma { x: c[0], value: g });
        }
        let d = (4.0 * g * cell.area() / alpha).powf(1.0 / (dimension as f64 - 2.0));
        if d > rho / 8.0 {
            return Err(GeometryError::SizeRatio { hole: k, d, rho });
        }
        eps = eps.max(cell.area().sqrt());
        holes.push(Hole { center: c, half_width: d, guard_radius: rho });
    }
    let config = SieveConfig { domain, eps, holes, gamma, dimension };
    config.validate_assumptions().into_result()?;
    Ok(config)
}

/// Default guard radius for an explicit hole list: half the smallest center
/// spacing, capped by half the domain limit.
pub fn default_guard_radius(centers: &[f64], domain: &Domain2D) -> f64 {
    let cap = 0.5 * domain.guard_limit();
    let mut sorted = centers.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spacing = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    (0.5 * spacing).min(cap)
}

/// Which assumption a check is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Guard disks pairwise disjoint.
    DisjointGuards,
    /// `sup gamma_k < infinity`.
    BoundedStrength,
    /// `rho < 1` and `rho < H/2`.
    GuardRadius,
    /// `d <= rho / 8`.
    SizeRatio,
}

impl Assumption {
    pub fn label(&self) -> &'static str {
        match self {
            Assumption::DisjointGuards => "disjoint-guards",
            Assumption::BoundedStrength => "bounded-strength",
            Assumption::GuardRadius => "guard-radius",
            Assumption::SizeRatio => "size-ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    /// Index of the worst offending hole.
    pub worst_hole: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, a: Assumption) -> &AssumptionCheck {
        self.checks.iter().find(|c| c.assumption == a).expect("every assumption is checked")
    }

    pub fn into_result(self) -> Result<(), GeometryError> {
        match self.checks.into_iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(GeometryError::Assumption { label: c.assumption.label(), detail: c.detail }),
        }
    }
}

/// Checks the standing assumptions on a configuration. Never fails; the
/// report carries the failures.
pub fn validate_assumptions(config: &SieveConfig) -> ValidationReport {
    let holes = &config.holes;
    let tol = 1e-12;

    // Disjoint guards: |x_k - x_l| >= rho_k + rho_l (open disks may touch).
    let mut worst: Option<(usize, f64)> = None;
    for k in 0..holes.len() {
        for l in k + 1..holes.len() {
            let scale = holes[k].guard_radius + holes[l].guard_radius;
            let gap = holes[k].distance(&holes[l]) - scale;
            if gap < -tol * scale && worst.is_none_or(|(_, g)| gap < g) {
                worst = Some((l, gap));
            }
        }
    }
    let disjoint = AssumptionCheck {
        assumption: Assumption::DisjointGuards,
        passed: worst.is_none(),
        worst_hole: worst.map(|w| w.0),
        detail: match worst {
            None => "guard disks pairwise disjoint".into(),
            Some((k, g)) => format!("guard disks overlap by {:.3e} at hole {k}", -g),
        },
    };

    let n = config.dimension;
    let mut worst_gamma: Option<(usize, f64)> = None;
    let mut bad_gamma = None;
    for (k, h) in holes.iter().enumerate() {
        let g = strength(n, h.half_width, h.guard_radius);
        if !g.is_finite() {
            bad_gamma.get_or_insert(k);
        }
        if worst_gamma.is_none_or(|(_, w)| g > w) {
            worst_gamma = Some((k, g));
        }
    }
    let bounded = AssumptionCheck {
        assumption: Assumption::BoundedStrength,
        passed: bad_gamma.is_none(),
        worst_hole: bad_gamma.or(worst_gamma.map(|w| w.0)),
        detail: match (bad_gamma, worst_gamma) {
            (Some(k), _) => format!("strength of hole {k} is not finite"),
            (None, Some((_, g))) => format!("sup strength {g:.6e}"),
            (None, None) => "no holes".into(),
        },
    };

    let limit = config.domain.guard_limit();
    let mut worst_rho: Option<(usize, f64)> = None;
    for (k, h) in holes.iter().enumerate() {
        let bad = !(h.guard_radius > 0.0) || h.guard_radius >= limit;
        if bad && worst_rho.is_none_or(|(_, r)| h.guard_radius > r) {
            worst_rho = Some((k, h.guard_radius));
        }
    }
    let guard = AssumptionCheck {
        assumption: Assumption::GuardRadius,
        passed: worst_rho.is_none(),
        worst_hole: worst_rho.map(|w| w.0),
        detail: match worst_rho {
            None => format!("all rho < {limit}"),
            Some((k, r)) => format!("rho < min(1, H/2) violated for hole {k} (rho = {r:.6e}, limit {limit})"),
        },
    };

    let mut worst_ratio: Option<(usize, f64)> = None;
    for (k, h) in holes.iter().enumerate() {
        let ratio = h.half_width / h.guard_radius;
        let bad = !(h.half_width >= 0.0) || ratio > 0.125 * (1.0 + tol);
        if bad && worst_ratio.is_none_or(|(_, r)| ratio > r) {
            worst_ratio = Some((k, ratio));
        }
    }
    let size = AssumptionCheck {
        assumption: Assumption::SizeRatio,
        passed: worst_ratio.is_none(),
        worst_hole: worst_ratio.map(|w| w.0),
        detail: match worst_ratio {
            None => "d <= rho/8 for all holes".into(),
            Some((k, r)) => format!("d ≤ ρ/8 violated for hole {k} (d/rho = {r:.6e})"),
        },
    };

    ValidationReport { checks: vec![disjoint, bounded, guard, size] }
}

/// Per-hole strength parameter: `d^(n-2) rho^(1-n)` for `n >= 3`,
/// `1 / (|ln d| rho)` for `n = 2`; zero for `d = 0`.
pub fn strength(n: usize, d: f64, rho: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    if n == 2 {
        1.0 / (d.ln().abs() * rho)
    } else {
        d.powi(n as i32 - 2) * rho.powi(1 - n as i32)
    }
}

/// Per-hole geometric rate.
pub fn geometric_rate(n: usize, d: f64, rho: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    let q = d / rho;
    match n {
        2 => q.ln().abs().powf(-0.5),
        3 => q.sqrt(),
        4 => q * q.ln().abs(),
        _ => q,
    }
}

/// How the interface defect rate is estimated for a family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaRecipe {
    /// `sup gamma_k^(1/2)`, for families whose strengths vanish.
    SmallHoles,
    /// `sup rho_k^(1/2)`, for regular and periodic families.
    Regular,
    Given(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateParams {
    pub gamma_k: Vec<f64>,
    pub eta_k: Vec<f64>,
    /// `sup rho^(1/2) gamma_k |ln rho|`; zero for `n >= 3`.
    pub log_term: f64,
    pub kappa: f64,
    pub mu: f64,
}

impl RateParams {
    pub fn sup_gamma(&self) -> f64 {
        self.gamma_k.iter().copied().fold(0.0, f64::max)
    }

    pub fn sup_eta(&self) -> f64 {
        self.eta_k.iter().copied().fold(0.0, f64::max)
    }
}

/// Closed-form rate quantities with all constants set to one.
pub fn rate_params(config: &SieveConfig, recipe: KappaRecipe) -> RateParams {
    let n = config.dimension;
    let gamma_k: Vec<f64> =
        config.holes.iter().map(|h| strength(n, h.half_width, h.guard_radius)).collect();
    let eta_k: Vec<f64> =
        config.holes.iter().map(|h| geometric_rate(n, h.half_width, h.guard_radius)).collect();
    let sup_rho = config.holes.iter().map(|h| h.guard_radius).fold(0.0, f64::max);
    let kappa = match recipe {
        KappaRecipe::SmallHoles => gamma_k.iter().copied().fold(0.0, f64::max).sqrt(),
        KappaRecipe::Regular => sup_rho.sqrt(),
        KappaRecipe::Given(k) => k,
    };
    let log_term = if n == 2 {
        config
            .holes
            .iter()
            .zip(&gamma_k)
            .map(|(h, g)| h.guard_radius.sqrt() * g * h.guard_radius.ln().abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let sup_eta = eta_k.iter().copied().fold(0.0, f64::max);
    let mu = kappa.max(sup_eta).max(log_term);
    RateParams { gamma_k, eta_k, log_term, kappa, mu }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Domain2D {
        Domain2D::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn two_hole_periodic() {
        let c = make_periodic_config(unit(), 0.5, &|e| e / 16.0, GammaProfile::Constant(1.0)).unwrap();
        assert_eq!(c.holes.len(), 2);
        assert_eq!(c.holes[0].x(), 0.25);
        assert_eq!(c.holes[1].x(), 0.75);
        assert_eq!(c.holes[0].guard_radius, 0.25);
        assert_eq!(c.holes[0].half_width, 1.0 / 32.0);
    }

    #[test]
    fn eighth_lattice_has_eight_holes() {
        let gh = 0.3;
        let c = make_periodic_config(unit(), 0.125, &|e: f64| (-1.0 / (gh * e)).exp(), GammaProfile::Constant(1.0))
            .unwrap();
        assert_eq!(c.holes.len(), 8);
        assert!(c.holes.iter().all(|h| h.half_width == c.holes[0].half_width));
    }

    #[test]
    fn oversize_rule_rejected() {
        let err = make_periodic_config(unit(), 0.25, &|e| e / 4.0, GammaProfile::Constant(1.0)).unwrap_err();
        assert!(matches!(err, GeometryError::SizeRatio { .. }));
    }

    #[test]
    fn guard_limit_rejected() {
        let d = Domain2D::new(4.0, 1.0).unwrap();
        let err = make_periodic_config(d, 1.0, &|e| e / 32.0, GammaProfile::Constant(1.0)).unwrap_err();
        assert!(matches!(err, GeometryError::GuardTooLarge { .. }));
    }

    #[test]
    fn overlapping_guards_fail() {
        let cfg = SieveConfig {
            domain: unit(),
            eps: 0.25,
            holes: vec![Hole::planar(0.3, 0.001, 0.1), Hole::planar(0.49, 0.001, 0.1)],
            gamma: GammaProfile::Constant(1.0),
            dimension: 2,
        };
        let r = validate_assumptions(&cfg);
        assert!(!r.passed());
        let c = r.check(Assumption::DisjointGuards);
        assert!(!c.passed);
        assert_eq!(c.worst_hole, Some(1));
    }

    #[test]
    fn quarter_ratio_fails_size_check() {
        let cfg = SieveConfig {
            domain: unit(),
            eps: 0.25,
            holes: vec![Hole::planar(0.5, 0.025, 0.1)],
            gamma: GammaProfile::Constant(1.0),
            dimension: 2,
        };
        let r = validate_assumptions(&cfg);
        let c = r.check(Assumption::SizeRatio);
        assert!(!c.passed);
        assert_eq!(c.worst_hole, Some(0));
        let msg = r.into_result().unwrap_err().to_string();
        assert!(msg.contains("size-ratio"), "{msg}");
        assert!(msg.contains("hole 0"), "{msg}");
    }

    #[test]
    fn log_branch_rates() {
        let rho: f64 = 0.1;
        let d = rho * rho;
        assert!((geometric_rate(2, d, rho) - rho.ln().abs().powf(-0.5)).abs() < 1e-15);
        assert!((geometric_rate(3, 1.0 / 64.0, 1.0) - 0.125).abs() < 1e-15);
        assert_eq!(strength(2, 0.0, rho), 0.0);
        assert_eq!(geometric_rate(2, 0.0, rho), 0.0);
    }

    #[test]
    fn unit_strength_log_term() {
        // d with 1/(|ln d| rho) = 1 at rho = 1/8
        let rho: f64 = 0.125;
        let d = (-1.0 / rho).exp();
        let cfg = SieveConfig {
            domain: unit(),
            eps: 0.25,
            holes: vec![Hole::planar(0.5, d, rho)],
            gamma: GammaProfile::Constant(1.0),
            dimension: 2,
        };
        let p = rate_params(&cfg, KappaRecipe::Regular);
        assert!((p.gamma_k[0] - 1.0).abs() < 1e-12);
        assert!((p.log_term - 0.125f64.sqrt() * 8f64.ln()).abs() < 1e-12);
        assert!((p.log_term - 0.735).abs() < 1e-3);
        assert!(p.mu >= p.kappa && p.mu >= p.sup_eta());
    }

    #[test]
    fn regular_cells_give_half_eps_squared() {
        let eps = 1.0 / 16.0;
        let n = 8;
        let mut cells = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let lo = [i as f64 * eps, j as f64 * eps];
                cells.push(GammaCell { lo, hi: [lo[0] + eps, lo[1] + eps] });
            }
        }
        let c = make_regular_config(unit(), &cells, GammaProfile::Constant(1.0), 3, 8.0, 0.9).unwrap();
        for h in &c.holes {
            assert!((h.half_width - 0.5 * eps * eps).abs() < 1e-15);
        }
        let z = make_regular_config(unit(), &cells, GammaProfile::Constant(0.0), 3, 8.0, 0.9).unwrap();
        assert!(z.holes.iter().all(|h| h.half_width == 0.0));
    }

    #[test]
    fn elongated_cells_rejected() {
        let cells = [GammaCell { lo: [0.0, 0.0], hi: [0.5, 0.005] }];
        let err = make_regular_config(unit(), &cells, GammaProfile::Constant(1.0), 3, 8.0, 0.9).unwrap_err();
        assert!(matches!(err, GeometryError::CellShape { .. }));
    }

    #[test]
    fn overlapping_cells_rejected() {
        let cells = [
            GammaCell { lo: [0.0, 0.0], hi: [0.1, 0.1] },
            GammaCell { lo: [0.05, 0.05], hi: [0.15, 0.15] },
        ];
        let err = make_regular_config(unit(), &cells, GammaProfile::Constant(1.0), 3, 8.0, 0.9).unwrap_err();
        assert!(matches!(err, GeometryError::CellOverlap(0, 1)));
    }

    #[test]
    fn default_guard_is_half_spacing() {
        let d = unit();
        assert!((default_guard_radius(&[0.2, 0.5, 0.6], &d) - 0.05).abs() < 1e-15);
        assert_eq!(default_guard_radius(&[0.5], &d), 0.25);
    }
}
